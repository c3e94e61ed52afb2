/**
 * @brief Expectation-maximization fit of SmicaParams to band covariances.
 *
 * Latent variables are the band-limited sources. The E-step computes the
 * conditional second moments through the Wiener filter
 *   Gamma_b = (A^T Sigma_b^-1 A + P_b^-1)^-1,  W_b = Gamma_b A^T Sigma_b^-1,
 * and the M-step minimizes the EM functional in closed form, one block of
 * parameters at a time (A, then Sigma, then P). Each block update is an exact
 * minimizer, so the loss cannot increase.
 *
 * fit() runs two stages: a warm start with one noise spectrum shared by all
 * bands, then free per-band noise.
 */
#pragma once

#include "smica/core.hpp"
#include "smica/jdiag.hpp"
#include "smica/model.hpp"
#include "smica/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace smica {

struct SufficientStats {
  std::vector<Matrix> Rxx; ///< p x p, the empirical covariance itself
  std::vector<Matrix> Rsx; ///< q x p
  std::vector<Matrix> Rss; ///< q x q
  std::vector<int> counts;

  [[nodiscard]] std::size_t size() const { return Rxx.size(); }
};

/// Starting point of the mixing matrix and source powers.
enum class FitInit {
  /// Runs the warm stage from SubspaceJdiag and SpectralJdiag and keeps the
  /// start with the lower loss.
  Auto,
  /// Joint diagonalization of the covariances projected on the top-q
  /// principal subspace.
  SubspaceJdiag,
  /// Joint diagonalization in full dimension, keeping the q components whose
  /// band spectra are least flat. Finds weak but spectrally peaked sources
  /// that the principal subspace misses.
  SpectralJdiag,
  /// Top-q principal directions scaled by sqrt(eigenvalue), unit powers.
  Pca,
};

struct FitOptions {
  Eigen::Index q = 1;
  FitInit init = FitInit::Auto;
  int max_iter_warm = 100;
  int max_iter_main = 10000;
  double tol = 1e-7;
  std::uint64_t seed = 0; // reserved; the default initialization is deterministic
  /// Relative floor on noise powers, in units of mean(diag(Chat_b)).
  double noise_floor = 1e-12;
};

struct FitReport {
  std::vector<double> loss_history; ///< warm stage then main stage
  std::size_t main_start = 0;       ///< index of the main stage's entry loss
  bool converged = false;
  int warm_iterations = 0;
  int main_iterations = 0;
};

struct FitResult {
  SmicaParams params;
  FitReport report;
};

/// Relative floor on source powers, in units of mean(diag(Chat_b)).
inline constexpr double kPowerFloor = 1e-12;

/// Per-band Wiener filter W_b and posterior covariance Gamma_b.
struct WienerOperator {
  Matrix W;     ///< q x p
  Matrix Gamma; ///< q x q
};

inline WienerOperator wiener_operator(const SmicaParams &params, std::size_t b) {
  const auto row = static_cast<Eigen::Index>(b);
  const Vector sinv = params.Sigma.row(row).transpose().cwiseInverse();
  const Vector pinv = params.P.row(row).transpose().cwiseInverse();
  const Matrix AtSinv = params.A.transpose() * sinv.asDiagonal();
  Matrix G = AtSinv * params.A;
  G.diagonal() += pinv;
  const Eigen::LLT<Matrix> chol(G);
  if (chol.info() != Eigen::Success || !G.allFinite())
    throw NumericalError("wiener filter: posterior precision not positive definite in band " +
                         std::to_string(b));
  WienerOperator op;
  op.Gamma = chol.solve(Matrix::Identity(params.q(), params.q()));
  op.Gamma = 0.5 * (op.Gamma + op.Gamma.transpose());
  op.W = chol.solve(AtSinv);
  return op;
}

inline SufficientStats e_step(const SmicaParams &params, const SpectralCovarianceSet &emp) {
  check_compatible(params, emp);
  SufficientStats stats;
  stats.counts = emp.counts;
  stats.Rxx = emp.mats;
  stats.Rsx.reserve(emp.size());
  stats.Rss.reserve(emp.size());
  for (std::size_t b = 0; b < emp.size(); ++b) {
    const auto op = wiener_operator(params, b);
    Matrix rsx = op.W * emp.mats[b];
    Matrix rss = rsx * op.W.transpose() + op.Gamma;
    stats.Rss.push_back(0.5 * (rss + rss.transpose()));
    stats.Rsx.push_back(std::move(rsx));
  }
  return stats;
}

namespace detail {

inline bool noise_is_shared(const Matrix &sigma) {
  for (Eigen::Index b = 1; b < sigma.rows(); ++b)
    if (sigma.row(b) != sigma.row(0))
      return false;
  return true;
}

/// Rows of A solve A_r M_r = Q_r with M_r = sum_b n_b Rss_b / Sigma_b[r].
inline Matrix update_mixing(const SufficientStats &stats, const Matrix &sigma) {
  const Eigen::Index p = sigma.cols();
  const Eigen::Index q = stats.Rss.front().rows();
  Matrix A(p, q);
  if (detail::noise_is_shared(sigma)) {
    // Shared noise: every M_r is a multiple of the same matrix.
    Matrix M = Matrix::Zero(q, q);
    Matrix Q = Matrix::Zero(p, q);
    for (std::size_t b = 0; b < stats.size(); ++b) {
      M += stats.counts[b] * stats.Rss[b];
      Q += stats.counts[b] * stats.Rsx[b].transpose();
    }
    const Eigen::LLT<Matrix> chol(M);
    if (chol.info() != Eigen::Success)
      throw NumericalError("m_step: mixing system singular (shared noise)");
    A = chol.solve(Q.transpose()).transpose();
    return A;
  }
  Matrix M(q, q);
  Vector Qr(q);
  for (Eigen::Index r = 0; r < p; ++r) {
    M.setZero();
    Qr.setZero();
    for (std::size_t b = 0; b < stats.size(); ++b) {
      const double w = stats.counts[b] / sigma(static_cast<Eigen::Index>(b), r);
      M += w * stats.Rss[b];
      Qr += w * stats.Rsx[b].col(r);
    }
    const Eigen::LLT<Matrix> chol(M);
    if (chol.info() != Eigen::Success)
      throw NumericalError("m_step: mixing system singular for row " + std::to_string(r));
    A.row(r) = chol.solve(Qr).transpose();
  }
  return A;
}

inline double band_scale(const Matrix &c) { return c.diagonal().mean(); }

} // namespace detail

/**
 * Closed-form M-step. Order: A (with the incoming Sigma), Sigma (with the new
 * A), then P. With `fix_noise_shared` the noise is the count-weighted mean of
 * the per-band residual diagonals, identical in every band.
 */
inline SmicaParams m_step(const SufficientStats &stats, const SmicaParams &params,
                          bool fix_noise_shared, double noise_floor = 1e-12) {
  const auto B = stats.size();
  if (B != params.num_bands())
    throw ConfigError("m_step: statistics and params have different band counts");
  if (stats.Rss.front().rows() != params.q() || stats.Rxx.front().rows() != params.p())
    throw ConfigError("m_step: statistics and params have different shapes");

  SmicaParams next = params;
  if (params.q() > 0)
    next.A = detail::update_mixing(stats, params.Sigma);
  const Matrix &A = next.A;

  Matrix resid(static_cast<Eigen::Index>(B), params.p());
  for (std::size_t b = 0; b < B; ++b) {
    const auto row = static_cast<Eigen::Index>(b);
    const Vector cross = A.cwiseProduct(stats.Rsx[b].transpose()).rowwise().sum();
    const Vector quad = (A * stats.Rss[b]).cwiseProduct(A).rowwise().sum();
    resid.row(row) = (stats.Rxx[b].diagonal() - 2.0 * cross + quad).transpose();
  }

  if (fix_noise_shared) {
    Vector shared = Vector::Zero(params.p());
    double total = 0.0;
    double floor = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      shared += stats.counts[b] * resid.row(static_cast<Eigen::Index>(b)).transpose();
      total += stats.counts[b];
      floor = std::max(floor, noise_floor * detail::band_scale(stats.Rxx[b]));
    }
    shared = (shared / total).cwiseMax(floor);
    for (std::size_t b = 0; b < B; ++b)
      next.Sigma.row(static_cast<Eigen::Index>(b)) = shared.transpose();
  } else {
    for (std::size_t b = 0; b < B; ++b) {
      const auto row = static_cast<Eigen::Index>(b);
      next.Sigma.row(row) =
          resid.row(row).cwiseMax(noise_floor * detail::band_scale(stats.Rxx[b]));
    }
  }

  for (std::size_t b = 0; b < B; ++b) {
    const auto row = static_cast<Eigen::Index>(b);
    next.P.row(row) = stats.Rss[b].diagonal().transpose().cwiseMax(
        kPowerFloor * detail::band_scale(stats.Rxx[b]));
  }
  return next;
}

/**
 * Largest loss increase tolerated between consecutive iterations: 1e-8
 * relative, plus an absolute term at the rounding level of the loss itself.
 */
inline double monotonicity_slack(double loss_value, const SpectralCovarianceSet &emp) {
  return 1e-8 * std::abs(loss_value) +
         1e-12 * 2.0 * emp.total_count() * static_cast<double>(emp.p);
}

namespace detail {

/// Shared noise equal to the diagonal of the weighted mean covariance left
/// unexplained by A diag(mean P) A^T.
inline void set_residual_noise(SmicaParams &params, const SpectralCovarianceSet &emp,
                               double noise_floor) {
  const Matrix mean = emp.weighted_mean();
  Vector power = Vector::Zero(params.q());
  double total = 0.0;
  double floor = 0.0;
  for (std::size_t b = 0; b < emp.size(); ++b) {
    power += emp.counts[b] * params.P.row(static_cast<Eigen::Index>(b)).transpose();
    total += emp.counts[b];
    floor = std::max(floor, noise_floor * band_scale(emp.mats[b]));
  }
  power /= total;
  const Vector resid =
      (mean.diagonal() - (params.A * power.asDiagonal() * params.A.transpose()).diagonal())
          .cwiseMax(floor);
  params.Sigma = resid.transpose().replicate(static_cast<Eigen::Index>(emp.size()), 1);
}

/// Band powers diag(W C_b W^T) of an unmixing of `emp`.
inline Matrix unmixed_powers(const Matrix &W, const SpectralCovarianceSet &emp) {
  Matrix P(static_cast<Eigen::Index>(emp.size()), W.rows());
  for (std::size_t b = 0; b < emp.size(); ++b)
    P.row(static_cast<Eigen::Index>(b)) = (W * emp.mats[b] * W.transpose())
                                              .diagonal()
                                              .transpose()
                                              .cwiseMax(kPowerFloor * band_scale(emp.mats[b]));
  return P;
}

inline SmicaParams pca_start(const SpectralCovarianceSet &emp, Eigen::Index q,
                             double noise_floor, const Eigen::SelfAdjointEigenSolver<Matrix> &eig) {
  const Eigen::Index p = emp.p;
  const double floor =
      std::max(noise_floor, kPowerFloor) * eig.eigenvalues().cwiseMax(0.0).mean();
  SmicaParams params;
  params.bands = emp.bands;
  params.A.resize(p, q);
  for (Eigen::Index j = 0; j < q; ++j) {
    const Eigen::Index src = p - 1 - j; // eigenvalues ascend
    params.A.col(j) = eig.eigenvectors().col(src) *
                      std::sqrt(std::max(eig.eigenvalues()(src), floor));
  }
  params.P = Matrix::Ones(static_cast<Eigen::Index>(emp.size()), q);
  set_residual_noise(params, emp, noise_floor);
  return params;
}

inline std::optional<SmicaParams> subspace_jdiag_start(const SpectralCovarianceSet &emp,
                                                       Eigen::Index q, double noise_floor,
                                                       const Eigen::SelfAdjointEigenSolver<Matrix> &eig) {
  const Matrix U = eig.eigenvectors().rightCols(q);
  SpectralCovarianceSet reduced;
  reduced.p = q;
  reduced.bands = emp.bands;
  reduced.counts = emp.counts;
  for (const auto &c : emp.mats)
    reduced.mats.push_back(U.transpose() * c * U);
  try {
    const Unmixing unmixing = jdiag_fit(reduced);
    SmicaParams params;
    params.bands = emp.bands;
    params.A = U * unmixing.W.inverse();
    params.P = unmixed_powers(unmixing.W * U.transpose(), emp);
    if (!params.A.allFinite() || !params.P.allFinite())
      return std::nullopt;
    set_residual_noise(params, emp, noise_floor);
    return params;
  } catch (const NumericalError &) {
    return std::nullopt;
  }
}

/// Flatness score: spread of log P_b / n_b over bands. White noise scores ~0.
inline double spectral_spread(const Vector &powers, const std::vector<int> &counts) {
  Vector logs(powers.size());
  for (Eigen::Index b = 0; b < powers.size(); ++b)
    logs(b) = std::log(powers(b) / counts[static_cast<std::size_t>(b)]);
  return (logs.array() - logs.mean()).square().mean();
}

inline std::optional<SmicaParams> spectral_jdiag_start(const SpectralCovarianceSet &emp,
                                                       Eigen::Index q, double noise_floor) {
  try {
    const Unmixing unmixing = jdiag_fit(emp);
    const Matrix A = unmixing.W.inverse();
    const Matrix P = unmixed_powers(unmixing.W, emp);
    if (!A.allFinite() || !P.allFinite())
      return std::nullopt;
    std::vector<std::pair<double, Eigen::Index>> order;
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      order.emplace_back(-spectral_spread(P.col(j), emp.counts), j);
    std::stable_sort(order.begin(), order.end());
    SmicaParams params;
    params.bands = emp.bands;
    params.A.resize(emp.p, q);
    params.P.resize(P.rows(), q);
    for (Eigen::Index k = 0; k < q; ++k) {
      params.A.col(k) = A.col(order[static_cast<std::size_t>(k)].second);
      params.P.col(k) = P.col(order[static_cast<std::size_t>(k)].second);
    }
    set_residual_noise(params, emp, noise_floor);
    return params;
  } catch (const NumericalError &) {
    return std::nullopt;
  }
}

} // namespace detail

/**
 * Deterministic starting point with shared noise equal to the unexplained
 * diagonal of the weighted mean covariance. JDIAG-based starts fall back to
 * Pca when the joint diagonalization fails; Auto maps to SubspaceJdiag here
 * (fit() handles the two-candidate selection).
 *
 * For q = p a plain PCA start leaves no residual noise, and the EM mixing
 * update then moves A by O(Sigma / P) per iteration, so it stays put.
 */
inline SmicaParams initial_params(const SpectralCovarianceSet &emp, Eigen::Index q,
                                  double noise_floor = 1e-12, FitInit init = FitInit::Auto) {
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(emp.weighted_mean());
  if (eig.info() != Eigen::Success)
    throw NumericalError("fit: eigendecomposition of the mean covariance failed");
  std::optional<SmicaParams> start;
  if ((init == FitInit::Auto || init == FitInit::SubspaceJdiag) && q > 1)
    start = detail::subspace_jdiag_start(emp, q, noise_floor, eig);
  else if (init == FitInit::SpectralJdiag)
    start = detail::spectral_jdiag_start(emp, q, noise_floor);
  return start ? *start : detail::pca_start(emp, q, noise_floor, eig);
}

namespace detail {

inline void run_stage(SmicaParams &params, const SpectralCovarianceSet &emp,
                      const FitOptions &opts, bool shared, int max_iter, FitReport &report,
                      int &iterations, bool &converged, const char *stage) {
  double current = loss(params, emp);
  report.loss_history.push_back(current);
  converged = false;
  iterations = 0;
  for (int it = 1; it <= max_iter; ++it) {
    const SufficientStats stats = e_step(params, emp);
    SmicaParams next = m_step(stats, params, shared, opts.noise_floor);
    const double updated = loss(next, emp);
    if (!std::isfinite(updated))
      throw NumericalError(std::string("fit: non-finite loss at ") + stage +
                           " iteration " + std::to_string(it));
    if (updated > current + monotonicity_slack(current, emp))
      throw NumericalError(std::string("fit: loss increased at ") + stage + " iteration " +
                           std::to_string(it) + " (" + std::to_string(current) + " -> " +
                           std::to_string(updated) + ")");
    // A step that does not lower the loss is rounding noise at the fixed point: keep the
    // previous parameters and stop.
    if (updated >= current) {
      converged = true;
      break;
    }
    params = std::move(next);
    report.loss_history.push_back(updated);
    iterations = it;
    const double previous = current;
    current = updated;
    if (previous - updated < opts.tol * std::abs(previous)) {
      converged = true;
      break;
    }
  }
}

} // namespace detail

/// Two-stage EM fit. The returned params are canonicalized.
inline FitResult fit(const SpectralCovarianceSet &emp, const FitOptions &opts) {
  emp.validate();
  if (opts.q < 1 || opts.q > emp.p)
    throw ConfigError("fit: need 1 <= q <= p, got q=" + std::to_string(opts.q) +
                      " p=" + std::to_string(emp.p));
  if (!(opts.tol > 0.0))
    throw ConfigError("fit: tol must be positive");
  if (opts.max_iter_warm < 0 || opts.max_iter_main < 0)
    throw ConfigError("fit: iteration caps must be non-negative");

  FitResult result;
  SmicaParams params = initial_params(emp, opts.q, opts.noise_floor, opts.init);
  bool warm_converged = false;
  detail::run_stage(params, emp, opts, true, opts.max_iter_warm, result.report,
                    result.report.warm_iterations, warm_converged, "warm");
  if (opts.init == FitInit::Auto && opts.q < emp.p) {
    SmicaParams other = initial_params(emp, opts.q, opts.noise_floor, FitInit::SpectralJdiag);
    FitReport other_report;
    detail::run_stage(other, emp, opts, true, opts.max_iter_warm, other_report,
                      other_report.warm_iterations, warm_converged, "warm");
    if (other_report.loss_history.back() < result.report.loss_history.back()) {
      params = std::move(other);
      result.report = std::move(other_report);
    }
  }
  result.report.main_start = result.report.loss_history.size();
  detail::run_stage(params, emp, opts, false, opts.max_iter_main, result.report,
                    result.report.main_iterations, result.report.converged, "main");
  result.params = canonicalize(std::move(params), emp.counts);
  return result;
}

} // namespace smica
