#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace abrw {

// One executed event. Replaying records against the initial eta reproduces
// every intermediate state: eta[from] -= s, eta[to] += s, and for branching
// events additionally eta[branch_same] += s, eta[branch_opp] -= s, where s is
// the jumper sign.
struct EventRecord {
  double t = 0.0;
  enum class Kind : std::uint8_t { move, annihilate_branch } kind = Kind::move;
  std::int8_t species = +1;  // +1 or -1, the jumping particle
  std::int32_t from = -1;
  std::int32_t to = -1;
  std::int32_t branch_same = -1;  // birth site of the jumper's species
  std::int32_t branch_opp = -1;   // birth site of the opposite species
};

void apply_event(const EventRecord& ev, Eigen::VectorXi& eta);

// Sampled observables of one run. K is the cumulative annihilation count; V
// is the exact event intensity functional at the sample instant; uhat rows
// are sample times, columns are the tracked mode indices.
struct ObservableSeries {
  double eps = 0.0;
  int dim = 2;
  std::int64_t N = 0;
  std::uint64_t seed = 0;
  std::vector<int> tracked_modes;
  std::vector<double> times;
  std::vector<double> V;
  std::vector<std::int64_t> K;
  Eigen::MatrixXd uhat;  // times.size() x tracked_modes.size()
  std::vector<Eigen::VectorXi> snapshots;  // eta at sample times (optional)
  std::vector<EventRecord> events;         // optional

  int n_samples() const { return static_cast<int>(times.size()); }
};

// observables.csv: header row, then one row per sample time,
// 17 significant digits
void write_series_csv(const ObservableSeries& s, std::ostream& out);
ObservableSeries read_series_csv(std::istream& in);

// density snapshot grid file: header lines t, eps, d; one row per site
// (site index, value); works for integer occupations and real densities
void write_grid(double t, double eps, int dim, const Eigen::VectorXd& values,
                std::ostream& out);
struct GridFile {
  double t = 0.0;
  double eps = 0.0;
  int dim = 2;
  Eigen::VectorXd values;
};
GridFile read_grid(std::istream& in);
GridFile read_grid_file(const std::string& path);

// event stream as newline-delimited JSON objects
void write_events_ndjson(const std::vector<EventRecord>& evts, std::ostream& out);
std::vector<EventRecord> read_events_ndjson(std::istream& in);

std::string format17(double v);

}  // namespace abrw
