#pragma once

// Post-processing of simulation series: mode projections, drift residuals,
// quadratic-variation scaling, block overlap/segregation measures, and
// comparison of empirical signed densities against the normalized heat-flow
// reference.

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "abrw/configuration.hpp"
#include "abrw/dynamics.hpp"
#include "abrw/lattice.hpp"
#include "abrw/series.hpp"
#include "abrw/spectral.hpp"

namespace abrw {

// eps^d * sum_x u(x) phi_n(x), the discrete L2 pairing of a field with basis
// mode n.
double fourier_coeff(const Eigen::VectorXd& u, const SpectralBasis& basis,
                     int n);

// For mode n the projected dynamics predict
//   uhat_n(t) = uhat_n(0) * exp(int_0^t V ds - lambda_n t)
// up to the martingale part, with int V estimated from annihilation counts
// (2 K / N). residual[i] is the sampled deviation from that prediction.
//
// The per-event growth rate is half the adjacency intensity V (each
// annihilation rebirths exactly one pair, and events arrive at rate (N/2) V),
// so the report also carries the compensated prediction
//   uhat_n(0) * exp(int_0^t V/2 ds - lambda_n t)
// whose residual is the martingale part alone.
struct DriftResidualReport {
  std::vector<double> t;
  std::vector<double> residual;        // uhat_n(t_i) - prediction(t_i)
  std::vector<double> predicted;       // prediction(t_i), full-V exponent
  std::vector<double> residual_event_rate;   // vs the half-V exponent
  std::vector<double> predicted_event_rate;  // half-V prediction
  double max_abs_residual = 0.0;
  double max_abs_residual_event_rate = 0.0;
  double estimator_gap_rel = 0.0;      // relative gap of the two int-V estimators
  bool estimators_disagree = false;    // true when the gap exceeds 10%
};
DriftResidualReport drift_residual(const ObservableSeries& series,
                                   const SpectralBasis& basis, int n);

// Martingale quadratic variation of the compensated mode amplitude across
// replicas and population sizes. For each replica the realized QV at the last
// sample is
//   sum_i (duhat - uhat(t_i) * (2 dK / N - lambda_n dt))^2
// and the bound ratio is QV * N / int V. beta_hat is the largest ratio seen
// at the smallest N; the mean ratio at every larger N must not exceed it.
struct QvScalingReport {
  std::vector<std::int64_t> n_particles;   // ascending
  std::vector<std::vector<double>> qv;     // [N][replica]
  std::vector<std::vector<double>> int_v;  // [N][replica], from counts
  std::vector<double> mean_ratio;          // [N]
  double beta_hat = 0.0;                   // max ratio at the smallest N
  bool bound_holds = true;
};
QvScalingReport qv_scaling(
    const std::vector<std::pair<std::int64_t, std::vector<ObservableSeries>>>&
        replicas_by_n,
    const SpectralBasis& basis, int n);

// Partition of the lattice into axis-aligned blocks of side delta anchored at
// the bounding-box corner. lambda_per_block[b] = min(plus, minus) particles
// inside block b.
struct OverlapField {
  std::vector<int> block_of_site;
  std::vector<std::int64_t> lambda_per_block;
  std::vector<std::int64_t> plus_per_block;
  std::vector<std::int64_t> minus_per_block;
  Eigen::Vector3i blocks_per_axis = Eigen::Vector3i::Ones();
  int n_blocks() const { return static_cast<int>(lambda_per_block.size()); }
};
OverlapField overlap_lambda(const Eigen::VectorXi& eta, const Lattice& lat,
                            double delta);
inline OverlapField overlap_lambda(const Configuration& cfg, const Lattice& lat,
                                   double delta) {
  return overlap_lambda(cfg.eta, lat, delta);
}

// Block-aggregated L1 distance between two per-site densities: partition the
// lattice into side-delta blocks, compare eps^d-weighted block masses, and sum
// the absolute gaps. A metric on block-aggregated signed measures; equals 2
// for disjoint unit masses in different blocks.
double block_l1_distance(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                         const Lattice& lat, double delta);

// Integer-exact segregation summary:
//   deficit = 2 - sum_B |sum_B eta| / N = sum_B 2 lambda_B / N in [0, 2],
// and identity_exact confirms sum_B |eta| - |sum_B eta| == 2 lambda_B holds
// in integers for every block.
struct SegregationReport {
  double deficit = 0.0;
  bool identity_exact = false;
  OverlapField field;
};
SegregationReport segregation_deficit(const Eigen::VectorXi& eta,
                                      std::int64_t n_per_species,
                                      const Lattice& lat, double delta);
inline SegregationReport segregation_deficit(const Configuration& cfg,
                                             const Lattice& lat, double delta) {
  return segregation_deficit(cfg.eta, cfg.n_per_species(), lat, delta);
}

// Block-L1 distance between the empirical signed density of each snapshot and
// the total-variation-normalized heat evolution of the first snapshot.
// distance[i] = sum_B |empirical block mass - reference block mass| in [0, 4].
struct ComparisonReport {
  std::vector<double> t;
  std::vector<double> distance;
  double final_deficit = 0.0;
  double delta = 0.0;
};
ComparisonReport compare_to_limit(const ObservableSeries& series,
                                  const Lattice& lat, const HeatEvolver& fwd,
                                  double delta);

// Log-log regression of across-replica variance of a mode amplitude against
// N, with the analytic 1.96-sigma half width of the slope under independent
// chi-square sampling noise of the per-N variances.
struct NoiseScalingReport {
  std::vector<std::int64_t> n_particles;
  std::vector<double> variance;
  int replicas = 0;
  double slope = 0.0;
  double half_width = 0.0;
};
NoiseScalingReport noise_scaling(
    const std::vector<std::pair<std::int64_t, std::vector<double>>>&
        amplitudes_by_n);

}  // namespace abrw
