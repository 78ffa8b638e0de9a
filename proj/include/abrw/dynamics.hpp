#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "abrw/configuration.hpp"
#include "abrw/lattice.hpp"
#include "abrw/rng.hpp"
#include "abrw/series.hpp"

namespace abrw {

struct SpectralBasis;  // spectral.hpp

struct SimParams {
  double t_end = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;             // replica index
  std::vector<double> sample_times;     // sorted, within [0, t_end]
  bool record_events = false;
  std::int64_t max_events = 2'000'000'000;
};

// sum_x |eta_x| / h(x): total intensity of the jump clock
double total_jump_rate(const Configuration& cfg, const Lattice& lat);

// V(eta) = (2/N) sum_{x,y} h(x)^-1 p_xy (eta_x^+ 1{eta_y<0} + eta_x^- 1{eta_y>0});
// the annihilation intensity is exactly (N/2) V
double compute_V(const Configuration& cfg, const Lattice& lat);

// Event-driven engine. Exponential waiting time at the total rate, jumper
// chosen proportional to 1/h (uniform over particles when h is constant),
// target by the site's jump law. A jump onto an oppositely-signed site
// annihilates the jumper with one resident and rebirths one particle per
// species at the sites of a uniformly chosen pre-event particle of each
// species (the jumper and the annihilated resident are eligible).
class Simulator {
 public:
  Simulator(const Lattice& lat, Configuration cfg, const SimParams& params);
  // variant driven by a caller-owned stream (the params seed is then unused)
  Simulator(const Lattice& lat, Configuration cfg, const SimParams& params,
            CounterRng* external_rng);

  EventRecord step();
  double time() const { return t_; }
  std::int64_t annihilations() const { return K_; }
  const Configuration& config() const { return cfg_; }
  Configuration take_config() { return std::move(cfg_); }
  std::int64_t events_executed() const { return events_; }

  // deep consistency probe (pools vs eta vs conserved counts)
  bool invariants_hold() const;

  // run to t_end, sampling observables; uhat is tracked against the basis
  // modes listed in `modes` when a basis is given
  ObservableSeries run(const SpectralBasis* basis, const std::vector<int>& modes,
                       bool keep_snapshots = true);

 private:
  struct Pool {
    std::vector<std::int32_t> pos;               // site of each particle slot
    std::vector<std::vector<std::int32_t>> at;   // slots by site
    std::vector<std::int32_t> where;             // index of slot within at[pos]
    void build(const std::vector<std::int32_t>& sites, int n_sites);
    void move(int slot, int to);
    int any_at(int site) const { return at[site].back(); }
  };

  void refresh_site_rate(int site);
  int draw_site_by_rate();
  double current_rate() const;
  EventRecord execute_event(double t_new);

  const Lattice& lat_;
  Configuration cfg_;
  SimParams params_;
  CounterRng own_rng_;
  CounterRng* rng_ = nullptr;  // points at own_rng_ unless external
  Pool plus_, minus_;
  std::vector<std::vector<double>> cdf_;  // per-site cumulative jump law
  bool uniform_h_ = true;
  double hinv_uniform_ = 0.0;
  // general-rate path: per-site rates |eta| / h with a Fenwick prefix tree
  std::vector<double> site_rate_;
  std::vector<double> fenwick_;
  double t_ = 0.0;
  std::int64_t K_ = 0;
  std::int64_t events_ = 0;
};

// single-event convenience wrapper around the engine
EventRecord step(Configuration& cfg, const Lattice& lat, CounterRng& rng);

// full run: builds the engine, samples at params.sample_times
ObservableSeries simulate(const Lattice& lat, Configuration cfg,
                          const SimParams& params,
                          const SpectralBasis* basis = nullptr,
                          std::vector<int> modes = {},
                          bool keep_snapshots = true);

// Free single-walker CTMC on the lattice clock (holding mean h(x), jump law
// p_xy), with no interaction: runs to time t and returns the final site.
int single_walker_site(const Lattice& lat, int start_site, double t,
                       CounterRng& rng);

// Brute-force generator application (Lf)(eta) by enumerating every event with
// its rate; throws BudgetError when the enumeration exceeds max_terms.
double generator_apply(const std::function<double(const Eigen::VectorXi&)>& f,
                       const Configuration& cfg, const Lattice& lat,
                       std::int64_t max_terms = 1'000'000);

// cumulative integral-of-V estimates at the sample times: trapezoidal rule on
// the V samples, and the event-count estimator 2 K(t) / N
struct IntegratedV {
  std::vector<double> trapezoid;
  std::vector<double> from_counts;
  double max_abs_gap = 0.0;  // max |trapezoid - from_counts| over samples
};
IntegratedV integrated_V(const ObservableSeries& s);

}  // namespace abrw
