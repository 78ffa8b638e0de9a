#include "abrw/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace abrw {

namespace {

int mode_column(const ObservableSeries& s, int n) {
  for (std::size_t i = 0; i < s.tracked_modes.size(); ++i)
    if (s.tracked_modes[i] == n) return static_cast<int>(i);
  throw std::invalid_argument("series does not track the requested mode");
}

}  // namespace

double fourier_coeff(const Eigen::VectorXd& u, const SpectralBasis& basis,
                     int n) {
  if (n < 0 || n >= basis.k())
    throw std::invalid_argument("fourier_coeff: mode out of range");
  if (u.size() != basis.modes.rows())
    throw std::invalid_argument("fourier_coeff: size mismatch");
  return std::pow(basis.eps, basis.dim) * u.dot(basis.modes.col(n));
}

DriftResidualReport drift_residual(const ObservableSeries& series,
                                   const SpectralBasis& basis, int n) {
  if (n < 0 || n >= basis.k())
    throw std::invalid_argument("drift_residual: mode out of range");
  const int col = mode_column(series, n);
  const auto m = static_cast<int>(series.times.size());
  if (m < 1) throw std::invalid_argument("drift_residual: empty series");
  const double lambda = basis.lambda[n];
  const IntegratedV iv = integrated_V(series);

  DriftResidualReport rep;
  rep.t = series.times;
  rep.residual.resize(m);
  rep.predicted.resize(m);
  rep.residual_event_rate.resize(m);
  rep.predicted_event_rate.resize(m);
  const double u0 = series.uhat(0, col);
  for (int i = 0; i < m; ++i) {
    const double decay = lambda * series.times[i];
    const double pred = u0 * std::exp(iv.from_counts[i] - decay);
    const double pred_half = u0 * std::exp(0.5 * iv.from_counts[i] - decay);
    rep.predicted[i] = pred;
    rep.residual[i] = series.uhat(i, col) - pred;
    rep.predicted_event_rate[i] = pred_half;
    rep.residual_event_rate[i] = series.uhat(i, col) - pred_half;
    rep.max_abs_residual = std::max(rep.max_abs_residual,
                                    std::abs(rep.residual[i]));
    rep.max_abs_residual_event_rate =
        std::max(rep.max_abs_residual_event_rate,
                 std::abs(rep.residual_event_rate[i]));
  }
  const double a = iv.from_counts.back();
  const double b = iv.trapezoid.back();
  rep.estimator_gap_rel = std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
  rep.estimators_disagree = rep.estimator_gap_rel > 0.10;
  return rep;
}

QvScalingReport qv_scaling(
    const std::vector<std::pair<std::int64_t, std::vector<ObservableSeries>>>&
        replicas_by_n,
    const SpectralBasis& basis, int n) {
  if (replicas_by_n.size() < 2)
    throw std::invalid_argument("qv_scaling: need at least two population sizes");
  for (const auto& [np, reps] : replicas_by_n)
    if (reps.size() < 8)
      throw std::invalid_argument("qv_scaling: need at least 8 replicas per population size");

  auto sorted = replicas_by_n;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  const double lambda = basis.lambda[n];
  QvScalingReport rep;
  for (const auto& [np, reps] : sorted) {
    rep.n_particles.push_back(np);
    std::vector<double> qv, iv;
    for (const auto& s : reps) {
      const int col = mode_column(s, n);
      const auto m = static_cast<int>(s.times.size());
      double q = 0.0;
      for (int i = 0; i + 1 < m; ++i) {
        const double du = s.uhat(i + 1, col) - s.uhat(i, col);
        const double d_iv =
            2.0 * static_cast<double>(s.K[i + 1] - s.K[i]) / s.N;
        const double dt = s.times[i + 1] - s.times[i];
        const double inc = du - s.uhat(i, col) * (d_iv - lambda * dt);
        q += inc * inc;
      }
      qv.push_back(q);
      iv.push_back(2.0 * static_cast<double>(s.K.back()) / s.N);
    }
    double ratio_sum = 0.0;
    for (std::size_t r = 0; r < qv.size(); ++r)
      ratio_sum += iv[r] > 0 ? qv[r] * static_cast<double>(np) / iv[r] : 0.0;
    rep.mean_ratio.push_back(ratio_sum / static_cast<double>(qv.size()));
    rep.qv.push_back(std::move(qv));
    rep.int_v.push_back(std::move(iv));
  }

  // the bound constant is fitted at the smallest N as the worst replica ratio
  for (std::size_t r = 0; r < rep.qv[0].size(); ++r) {
    const double iv = rep.int_v[0][r];
    const double ratio =
        iv > 0 ? rep.qv[0][r] * static_cast<double>(rep.n_particles[0]) / iv : 0.0;
    rep.beta_hat = std::max(rep.beta_hat, ratio);
  }
  for (std::size_t j = 1; j < rep.mean_ratio.size(); ++j)
    if (rep.mean_ratio[j] > rep.beta_hat) rep.bound_holds = false;
  return rep;
}

OverlapField overlap_lambda(const Eigen::VectorXi& eta, const Lattice& lat,
                            double delta) {
  if (delta <= 0) throw std::invalid_argument("overlap_lambda: delta must be positive");
  const int n = lat.n_sites();
  if (eta.size() != n)
    throw std::invalid_argument("overlap_lambda: configuration/lattice mismatch");

  std::array<int, 3> kmin{0, 0, 0};
  std::array<int, 3> span{0, 0, 0};
  for (int c = 0; c < lat.dim; ++c) {
    int lo = lat.coords[0][c], hi = lat.coords[0][c];
    for (const auto& kc : lat.coords) {
      lo = std::min(lo, kc[c]);
      hi = std::max(hi, kc[c]);
    }
    kmin[c] = lo;
    span[c] = hi - lo;
  }

  OverlapField field;
  int total_blocks = 1;
  std::array<int, 3> nb{1, 1, 1};
  for (int c = 0; c < lat.dim; ++c) {
    nb[c] = static_cast<int>(std::floor(span[c] * lat.eps / delta + 1e-9)) + 1;
    field.blocks_per_axis[c] = nb[c];
    total_blocks *= nb[c];
  }
  field.plus_per_block.assign(total_blocks, 0);
  field.minus_per_block.assign(total_blocks, 0);
  field.block_of_site.resize(n);

  for (int i = 0; i < n; ++i) {
    int b = 0;
    for (int c = lat.dim - 1; c >= 0; --c) {
      const double x = (lat.coords[i][c] - kmin[c]) * lat.eps;
      int bc = static_cast<int>(std::floor(x / delta + 1e-9));
      bc = std::min(bc, nb[c] - 1);
      b = b * nb[c] + bc;
    }
    field.block_of_site[i] = b;
    const int e = eta[i];
    if (e > 0) field.plus_per_block[b] += e;
    if (e < 0) field.minus_per_block[b] -= e;
  }
  field.lambda_per_block.resize(total_blocks);
  for (int b = 0; b < total_blocks; ++b)
    field.lambda_per_block[b] =
        std::min(field.plus_per_block[b], field.minus_per_block[b]);
  return field;
}

SegregationReport segregation_deficit(const Eigen::VectorXi& eta,
                                      std::int64_t n_per_species,
                                      const Lattice& lat, double delta) {
  if (n_per_species < 1)
    throw std::invalid_argument("segregation_deficit: empty population");
  SegregationReport rep;
  rep.field = overlap_lambda(eta, lat, delta);
  std::int64_t two_lambda = 0;
  std::int64_t net_abs = 0;
  bool exact = true;
  for (int b = 0; b < rep.field.n_blocks(); ++b) {
    const std::int64_t p = rep.field.plus_per_block[b];
    const std::int64_t m = rep.field.minus_per_block[b];
    const std::int64_t lam = rep.field.lambda_per_block[b];
    two_lambda += 2 * lam;
    net_abs += std::abs(p - m);
    // block identity: total minus |net| equals twice the overlap
    if ((p + m) - std::abs(p - m) != 2 * lam) exact = false;
  }
  if (two_lambda + net_abs != 2 * n_per_species) exact = false;  // mass accounting
  rep.identity_exact = exact;
  rep.deficit = static_cast<double>(two_lambda) /
                static_cast<double>(n_per_species);
  return rep;
}

double block_l1_distance(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                         const Lattice& lat, double delta) {
  const int n = lat.n_sites();
  if (u.size() != n || v.size() != n)
    throw std::invalid_argument("block_l1_distance: size mismatch");
  const double vol = std::pow(lat.eps, lat.dim);
  const OverlapField geom =
      overlap_lambda(Eigen::VectorXi::Zero(n).eval(), lat, delta);
  std::vector<double> gap(geom.n_blocks(), 0.0);
  for (int i = 0; i < n; ++i)
    gap[geom.block_of_site[i]] += vol * (u[i] - v[i]);
  double dist = 0.0;
  for (double g : gap) dist += std::abs(g);
  return dist;
}

ComparisonReport compare_to_limit(const ObservableSeries& series,
                                  const Lattice& lat, const HeatEvolver& fwd,
                                  double delta) {
  if (series.snapshots.size() != series.times.size())
    throw std::invalid_argument(
        "compare_to_limit: series needs one snapshot per sample time");
  const int n = lat.n_sites();
  const double vol = std::pow(lat.eps, lat.dim);

  const OverlapField geom =
      overlap_lambda(Eigen::VectorXi::Zero(n).eval(), lat, delta);
  const int nb = geom.n_blocks();

  Eigen::VectorXd u0(n);
  for (int i = 0; i < n; ++i)
    u0[i] = static_cast<double>(series.snapshots.front()[i]) /
            (static_cast<double>(series.N) * vol);

  ComparisonReport rep;
  rep.delta = delta;
  for (std::size_t s = 0; s < series.times.size(); ++s) {
    const double t = series.times[s];
    const Eigen::VectorXd ref =
        normalize_tv(fwd.evolve(u0, t), lat.eps, lat.dim);
    std::vector<double> emp(nb, 0.0), lim(nb, 0.0);
    for (int i = 0; i < n; ++i) {
      const int b = geom.block_of_site[i];
      emp[b] += static_cast<double>(series.snapshots[s][i]) /
                static_cast<double>(series.N);
      lim[b] += vol * ref[i];
    }
    double dist = 0.0;
    for (int b = 0; b < nb; ++b) dist += std::abs(emp[b] - lim[b]);
    rep.t.push_back(t);
    rep.distance.push_back(dist);
  }

  rep.final_deficit =
      segregation_deficit(series.snapshots.back(), series.N, lat, delta).deficit;
  return rep;
}

NoiseScalingReport noise_scaling(
    const std::vector<std::pair<std::int64_t, std::vector<double>>>&
        amplitudes_by_n) {
  if (amplitudes_by_n.size() < 3)
    throw std::invalid_argument(
        "noise_scaling: need at least three population sizes");
  auto sorted = amplitudes_by_n;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  NoiseScalingReport rep;
  rep.replicas = static_cast<int>(sorted.front().second.size());
  for (const auto& [np, vals] : sorted) {
    if (static_cast<int>(vals.size()) < 16)
      throw std::invalid_argument("noise_scaling: need at least 16 replicas");
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(vals.size() - 1);
    if (var <= 0)
      throw std::invalid_argument("noise_scaling: degenerate variance");
    rep.n_particles.push_back(np);
    rep.variance.push_back(var);
    rep.replicas = std::min(rep.replicas, static_cast<int>(vals.size()));
  }

  const auto m = static_cast<int>(rep.variance.size());
  double sx = 0, sy = 0;
  for (int i = 0; i < m; ++i) {
    sx += std::log(static_cast<double>(rep.n_particles[i]));
    sy += std::log(rep.variance[i]);
  }
  const double mx = sx / m, my = sy / m;
  double sxx = 0, sxy = 0;
  for (int i = 0; i < m; ++i) {
    const double dx = std::log(static_cast<double>(rep.n_particles[i])) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(rep.variance[i]) - my);
  }
  rep.slope = sxy / sxx;
  // var(log s^2) ~ 2/(R-1) for R Gaussian replicas
  rep.half_width =
      1.96 * std::sqrt(2.0 / (rep.replicas - 1)) / std::sqrt(sxx);
  return rep;
}

}  // namespace abrw
