#include "abrw/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "abrw/errors.hpp"
#include "abrw/spectral.hpp"

namespace abrw {

double total_jump_rate(const Configuration& cfg, const Lattice& lat) {
  if (cfg.n_per_species() == 0)
    throw std::invalid_argument("total_jump_rate: empty configuration");
  double r = 0.0;
  for (int x = 0; x < lat.n_sites(); ++x)
    if (cfg.eta[x] != 0) r += std::abs(cfg.eta[x]) / lat.holding[x];
  return r;
}

double compute_V(const Configuration& cfg, const Lattice& lat) {
  if (cfg.n_per_species() == 0)
    throw std::invalid_argument("compute_V: empty configuration");
  double sum = 0.0;
  for (int x = 0; x < lat.n_sites(); ++x) {
    const int ex = cfg.eta[x];
    if (ex == 0) continue;
    const double hinv = 1.0 / lat.holding[x];
    for (std::size_t j = 0; j < lat.neighbors[x].size(); ++j) {
      const int ey = cfg.eta[lat.neighbors[x][j]];
      // eta_x^+ against negative targets, eta_x^- against positive ones
      if ((ex > 0 && ey < 0) || (ex < 0 && ey > 0))
        sum += hinv * lat.jump_prob[x][j] * std::abs(ex);
    }
  }
  return 2.0 * sum / static_cast<double>(cfg.n_per_species());
}

// ---------------------------------------------------------------------------
// engine
// ---------------------------------------------------------------------------

void Simulator::Pool::build(const std::vector<std::int32_t>& sites, int n_sites) {
  pos = sites;
  at.assign(n_sites, {});
  where.resize(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    where[i] = static_cast<std::int32_t>(at[sites[i]].size());
    at[sites[i]].push_back(static_cast<std::int32_t>(i));
  }
}

void Simulator::Pool::move(int slot, int to) {
  const int from = pos[slot];
  auto& bucket = at[from];
  const int idx = where[slot];
  const int last = bucket.back();
  bucket[idx] = last;
  where[last] = idx;
  bucket.pop_back();
  pos[slot] = to;
  where[slot] = static_cast<std::int32_t>(at[to].size());
  at[to].push_back(slot);
}

Simulator::Simulator(const Lattice& lat, Configuration cfg, const SimParams& params)
    : Simulator(lat, std::move(cfg), params, nullptr) {}

Simulator::Simulator(const Lattice& lat, Configuration cfg, const SimParams& params,
                     CounterRng* external_rng)
    : lat_(lat), cfg_(std::move(cfg)), params_(params),
      own_rng_(params.seed, params.stream),
      rng_(external_rng ? external_rng : &own_rng_) {
  if (!cfg_.consistent())
    throw std::invalid_argument("Simulator: inconsistent configuration");
  if (cfg_.n_per_species() == 0)
    throw std::invalid_argument("Simulator: empty configuration");
  plus_.build(cfg_.plus_sites, lat.n_sites());
  minus_.build(cfg_.minus_sites, lat.n_sites());

  cdf_.resize(lat.n_sites());
  for (int x = 0; x < lat.n_sites(); ++x) {
    double acc = 0.0;
    cdf_[x].reserve(lat.jump_prob[x].size());
    for (double p : lat.jump_prob[x]) {
      acc += p;
      cdf_[x].push_back(acc);
    }
    if (!cdf_[x].empty()) cdf_[x].back() = 1.0;  // guard the top end
  }

  const double hmin = lat.holding.minCoeff();
  const double hmax = lat.holding.maxCoeff();
  uniform_h_ = (hmax - hmin) <= 1e-12 * hmax;
  hinv_uniform_ = 1.0 / hmax;
  if (!uniform_h_) {
    site_rate_.assign(lat.n_sites(), 0.0);
    fenwick_.assign(lat.n_sites() + 1, 0.0);
    for (int x = 0; x < lat.n_sites(); ++x) refresh_site_rate(x);
  }
}

void Simulator::refresh_site_rate(int site) {
  const double r = std::abs(cfg_.eta[site]) / lat_.holding[site];
  const double delta = r - site_rate_[site];
  if (delta == 0.0) return;
  site_rate_[site] = r;
  for (int i = site + 1; i <= lat_.n_sites(); i += i & (-i)) fenwick_[i] += delta;
}

int Simulator::draw_site_by_rate() {
  double total = 0.0;
  for (int i = lat_.n_sites(); i > 0; i -= i & (-i)) total += fenwick_[i];
  double target = rng_->uniform() * total;
  int idx = 0;
  int mask = 1;
  while ((mask << 1) <= lat_.n_sites()) mask <<= 1;
  for (; mask > 0; mask >>= 1) {
    const int next = idx + mask;
    if (next <= lat_.n_sites() && fenwick_[next] < target) {
      target -= fenwick_[next];
      idx = next;
    }
  }
  return std::min(idx, lat_.n_sites() - 1);
}

double Simulator::current_rate() const {
  if (uniform_h_)
    return 2.0 * static_cast<double>(cfg_.n_per_species()) * hinv_uniform_;
  return total_jump_rate(cfg_, lat_);
}

EventRecord Simulator::execute_event(double t_new) {
  t_ = t_new;
  const std::int64_t N = cfg_.n_per_species();

  int species, slot;
  if (uniform_h_) {
    const std::uint64_t pick = rng_->uniform_index(2 * static_cast<std::uint64_t>(N));
    species = pick < static_cast<std::uint64_t>(N) ? +1 : -1;
    slot = static_cast<int>(pick % static_cast<std::uint64_t>(N));
  } else {
    const int site = draw_site_by_rate();
    species = cfg_.eta[site] > 0 ? +1 : -1;
    const Pool& pool = species > 0 ? plus_ : minus_;
    const auto& bucket = pool.at[site];
    slot = bucket[rng_->uniform_index(bucket.size())];
  }
  Pool& own = species > 0 ? plus_ : minus_;
  Pool& other = species > 0 ? minus_ : plus_;
  const int x = own.pos[slot];

  const double u = rng_->uniform();
  const auto& cdf = cdf_[x];
  int j = 0;
  while (cdf[j] < u) ++j;
  const int y = lat_.neighbors[x][j];

  EventRecord ev;
  ev.t = t_;
  ev.species = static_cast<std::int8_t>(species);
  ev.from = x;
  ev.to = y;

  const int ey = cfg_.eta[y];
  if ((species > 0 && ey < 0) || (species < 0 && ey > 0)) {
    // annihilate the jumper with one resident at y; branch sites are drawn
    // from the pre-event particle lists (jumper and victim eligible)
    const int u_site = own.pos[rng_->uniform_index(own.pos.size())];
    const int v_site = other.pos[rng_->uniform_index(other.pos.size())];
    const int victim = other.any_at(y);
    own.move(slot, u_site);
    other.move(victim, v_site);
    cfg_.eta[x] -= species;
    cfg_.eta[y] += species;
    cfg_.eta[u_site] += species;
    cfg_.eta[v_site] -= species;
    ++K_;
    ev.kind = EventRecord::Kind::annihilate_branch;
    ev.branch_same = u_site;
    ev.branch_opp = v_site;
  } else {
    own.move(slot, y);
    cfg_.eta[x] -= species;
    cfg_.eta[y] += species;
    ev.kind = EventRecord::Kind::move;
  }
  ++events_;
  if (!uniform_h_) {
    refresh_site_rate(x);
    refresh_site_rate(y);
    if (ev.kind == EventRecord::Kind::annihilate_branch) {
      refresh_site_rate(ev.branch_same);
      refresh_site_rate(ev.branch_opp);
    }
  }

  // touched sites must stay single-species with matching counts
  for (int site : {ev.from, ev.to, ev.branch_same, ev.branch_opp}) {
    if (site < 0) continue;
    const int np = static_cast<int>(plus_.at[site].size());
    const int nm = static_cast<int>(minus_.at[site].size());
    if (cfg_.eta[site] != np - nm || (np > 0 && nm > 0)) {
      std::ostringstream msg;
      msg << "Simulator: state invariant violated at site " << site;
      throw std::logic_error(msg.str());
    }
  }
  return ev;
}

EventRecord Simulator::step() {
  const double dt = rng_->exponential(current_rate());
  return execute_event(t_ + dt);
}

bool Simulator::invariants_hold() const {
  Configuration probe;
  probe.eta = cfg_.eta;
  probe.plus_sites = plus_.pos;
  probe.minus_sites = minus_.pos;
  return probe.consistent() && probe.n_per_species() == cfg_.n_per_species();
}

ObservableSeries Simulator::run(const SpectralBasis* basis,
                                const std::vector<int>& modes,
                                bool keep_snapshots) {
  const std::int64_t N = cfg_.n_per_species();
  if (!modes.empty() && basis == nullptr)
    throw std::invalid_argument("simulate: modes requested without a basis");
  for (std::size_t i = 0; i < params_.sample_times.size(); ++i) {
    const double ts = params_.sample_times[i];
    if (ts < 0.0 || ts > params_.t_end ||
        (i > 0 && ts < params_.sample_times[i - 1]))
      throw std::invalid_argument("simulate: sample times must be sorted within [0, t_end]");
  }

  // the clock total is constant in time when h is uniform, so this projection
  // is exact; refuse before running
  const double projected = total_jump_rate(cfg_, lat_) * params_.t_end;
  if (projected > static_cast<double>(params_.max_events)) {
    std::ostringstream msg;
    msg << "simulate: projected event count " << projected << " exceeds budget "
        << params_.max_events;
    throw BudgetError(msg.str());
  }
  const std::int64_t hard_cap =
      params_.max_events < (std::int64_t{1} << 62) / 2
          ? 2 * params_.max_events + 1024
          : params_.max_events;

  ObservableSeries s;
  s.eps = lat_.eps;
  s.dim = lat_.dim;
  s.N = N;
  s.seed = params_.seed;
  s.tracked_modes = modes;
  const int nm = static_cast<int>(modes.size());
  s.uhat.resize(static_cast<int>(params_.sample_times.size()), nm);

  auto record = [&](double ts) {
    s.times.push_back(ts);
    s.V.push_back(compute_V(cfg_, lat_));
    s.K.push_back(K_);
    const int row = static_cast<int>(s.times.size()) - 1;
    for (int m = 0; m < nm; ++m) {
      // uhat_n = eps^d sum u phi_n = (1/N) sum eta phi_n
      const auto phi = basis->modes.col(modes[m]);
      double acc = 0.0;
      for (int i = 0; i < cfg_.eta.size(); ++i)
        if (cfg_.eta[i] != 0) acc += cfg_.eta[i] * phi[i];
      s.uhat(row, m) = acc / static_cast<double>(N);
    }
    if (keep_snapshots) s.snapshots.push_back(cfg_.eta);
    if (!invariants_hold())
      throw std::logic_error("simulate: invariant violation at sample");
  };

  // Between events the state is frozen, so every sample time strictly before
  // the next event observes the current state; a sample tied with an event
  // time observes the post-event state.
  std::size_t next = 0;
  const auto& st = params_.sample_times;
  while (true) {
    const double dt = rng_->exponential(current_rate());
    const double t_next = t_ + dt;
    while (next < st.size() && st[next] < t_next) record(st[next++]);
    if (t_next > params_.t_end) break;
    if (events_ >= hard_cap) throw BudgetError("simulate: event budget exhausted");
    EventRecord ev = execute_event(t_next);
    if (params_.record_events) s.events.push_back(ev);
    while (next < st.size() && st[next] <= t_) record(st[next++]);
  }
  t_ = params_.t_end;
  while (next < st.size()) record(st[next++]);
  return s;
}

EventRecord step(Configuration& cfg, const Lattice& lat, CounterRng& rng) {
  SimParams p;
  Simulator sim(lat, std::move(cfg), p, &rng);
  EventRecord ev = sim.step();
  cfg = sim.take_config();
  return ev;
}

ObservableSeries simulate(const Lattice& lat, Configuration cfg,
                          const SimParams& params, const SpectralBasis* basis,
                          std::vector<int> modes, bool keep_snapshots) {
  Simulator sim(lat, std::move(cfg), params);
  return sim.run(basis, modes, keep_snapshots);
}

int single_walker_site(const Lattice& lat, int start_site, double t,
                       CounterRng& rng) {
  if (start_site < 0 || start_site >= lat.n_sites())
    throw std::invalid_argument("single_walker_site: start site out of range");
  if (t < 0) throw std::invalid_argument("single_walker_site: negative time");
  int site = start_site;
  double clock = 0.0;
  for (;;) {
    clock += rng.exponential(1.0 / lat.holding[site]);
    if (clock > t) return site;
    const double u = rng.uniform();
    const auto& nbrs = lat.neighbors[site];
    const auto& probs = lat.jump_prob[site];
    double acc = 0.0;
    int target = nbrs.back();
    for (std::size_t j = 0; j < nbrs.size(); ++j) {
      acc += probs[j];
      if (u < acc) {
        target = nbrs[j];
        break;
      }
    }
    site = target;
  }
}

double generator_apply(const std::function<double(const Eigen::VectorXi&)>& f,
                       const Configuration& cfg, const Lattice& lat,
                       std::int64_t max_terms) {
  if (!cfg.consistent())
    throw std::invalid_argument("generator_apply: inconsistent configuration");
  const std::int64_t N = cfg.n_per_species();
  const double N2 = static_cast<double>(N) * static_cast<double>(N);

  // sites carrying each species, with multiplicities from eta
  std::vector<int> plus_sites, minus_sites;
  for (int i = 0; i < cfg.eta.size(); ++i) {
    if (cfg.eta[i] > 0) plus_sites.push_back(i);
    if (cfg.eta[i] < 0) minus_sites.push_back(i);
  }

  // enumeration size guard
  std::int64_t terms = 0;
  for (int x = 0; x < lat.n_sites(); ++x) {
    if (cfg.eta[x] == 0) continue;
    for (int y : lat.neighbors[x]) {
      const bool annih = (cfg.eta[x] > 0 && cfg.eta[y] < 0) ||
                         (cfg.eta[x] < 0 && cfg.eta[y] > 0);
      terms += annih ? static_cast<std::int64_t>(plus_sites.size()) *
                           static_cast<std::int64_t>(minus_sites.size())
                     : 1;
    }
  }
  if (terms > max_terms) {
    std::ostringstream msg;
    msg << "generator_apply: " << terms << " events exceed the budget of "
        << max_terms;
    throw BudgetError(msg.str());
  }

  const double f0 = f(cfg.eta);
  double acc = 0.0;
  Eigen::VectorXi work = cfg.eta;
  for (int x = 0; x < lat.n_sites(); ++x) {
    const int ex = cfg.eta[x];
    if (ex == 0) continue;
    const int s = ex > 0 ? +1 : -1;
    const double hinv = 1.0 / lat.holding[x];
    for (std::size_t j = 0; j < lat.neighbors[x].size(); ++j) {
      const int y = lat.neighbors[x][j];
      const double rate = hinv * lat.jump_prob[x][j] * std::abs(ex);
      const int ey = cfg.eta[y];
      const bool annih = (s > 0 && ey < 0) || (s < 0 && ey > 0);
      if (!annih) {
        work[x] -= s;
        work[y] += s;
        acc += rate * (f(work) - f0);
        work[x] += s;
        work[y] -= s;
      } else {
        const auto& own = s > 0 ? plus_sites : minus_sites;
        const auto& opp = s > 0 ? minus_sites : plus_sites;
        for (int us : own) {
          const double wu = std::abs(cfg.eta[us]);
          for (int vs : opp) {
            const double wv = std::abs(cfg.eta[vs]);
            work[x] -= s;
            work[y] += s;
            work[us] += s;
            work[vs] -= s;
            acc += rate * (wu * wv / N2) * (f(work) - f0);
            work[x] += s;
            work[y] -= s;
            work[us] -= s;
            work[vs] += s;
          }
        }
      }
    }
  }
  return acc;
}

IntegratedV integrated_V(const ObservableSeries& s) {
  IntegratedV out;
  const int n = s.n_samples();
  out.trapezoid.resize(n);
  out.from_counts.resize(n);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    if (i > 0)
      acc += 0.5 * (s.V[i] + s.V[i - 1]) * (s.times[i] - s.times[i - 1]);
    out.trapezoid[i] = acc;
    out.from_counts[i] =
        2.0 * static_cast<double>(s.K[i]) / static_cast<double>(s.N);
    out.max_abs_gap =
        std::max(out.max_abs_gap, std::abs(out.trapezoid[i] - out.from_counts[i]));
  }
  return out;
}

}  // namespace abrw
