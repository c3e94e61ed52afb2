/**
 * @brief SMICA parameter set and the spectral matching loss.
 *
 * Model: C_b = A diag(P_b) A^T + diag(Sigma_b) for every band b. The loss
 *   L = sum_b 2 n_b KL(Chat_b, C_b)
 * is the negative Whittle log-likelihood up to an additive constant.
 */
#pragma once

#include "smica/core.hpp"
#include "smica/spectral.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace smica {

/**
 * Mixing matrix A (p x q), per-band source powers P (B x q, row b = diag P_b)
 * and per-band sensor noise powers Sigma (B x p, row b = diag Sigma_b).
 */
struct SmicaParams {
  Matrix A;
  Matrix P;
  Matrix Sigma;
  BandSpec bands;

  [[nodiscard]] Eigen::Index p() const { return A.rows(); }
  [[nodiscard]] Eigen::Index q() const { return A.cols(); }
  [[nodiscard]] std::size_t num_bands() const { return static_cast<std::size_t>(P.rows()); }

  void validate() const {
    if (q() > p())
      throw ConfigError("params: more sources (" + std::to_string(q()) +
                        ") than sensors (" + std::to_string(p()) + ")");
    const auto B = static_cast<Eigen::Index>(bands.size());
    if (P.rows() != B || P.cols() != q())
      throw ConfigError("params: P must be " + std::to_string(B) + "x" + std::to_string(q()));
    if (Sigma.rows() != B || Sigma.cols() != p())
      throw ConfigError("params: Sigma must be " + std::to_string(B) + "x" +
                        std::to_string(p()));
    if (!A.allFinite() || !P.allFinite() || !Sigma.allFinite())
      throw DataError("params: non-finite entries");
    if ((P.array() < 0.0).any() || (Sigma.array() < 0.0).any())
      throw ConfigError("params: negative powers");
    for (Eigen::Index j = 0; j < q(); ++j)
      if (A.col(j).squaredNorm() == 0.0)
        throw ConfigError("params: column " + std::to_string(j) + " of A is zero");
  }
};

/// A diag(P_b) A^T + diag(Sigma_b).
inline Matrix model_covariance(const SmicaParams &params, std::size_t b) {
  if (b >= params.num_bands())
    throw ConfigError("model_covariance: band index " + std::to_string(b) +
                      " out of range (B=" + std::to_string(params.num_bands()) + ")");
  const auto row = static_cast<Eigen::Index>(b);
  Matrix c = params.A * params.P.row(row).transpose().asDiagonal() * params.A.transpose();
  c.diagonal() += params.Sigma.row(row).transpose();
  return 0.5 * (c + c.transpose());
}

/**
 * KL divergence between zero-mean Gaussians with covariances C1 and C2:
 *   0.5 * (Tr(C1 C2^-1) - logdet(C1 C2^-1) - p).
 * Computed on the whitened matrix L^-1 C1 L^-T with C2 = L L^T.
 * Returns +inf when C1 is singular.
 */
inline double kl_div(const Matrix &c1, const Matrix &c2, const std::string &context = {}) {
  if (c1.rows() != c1.cols() || c2.rows() != c2.cols() || c1.rows() != c2.rows())
    throw ConfigError("kl_div: shape mismatch" + (context.empty() ? "" : " (" + context + ")"));
  const Eigen::LLT<Matrix> chol(c2);
  if (chol.info() != Eigen::Success)
    throw NumericalError("kl_div: second argument is not positive definite" +
                         (context.empty() ? "" : " (" + context + ")"));
  const auto L = chol.matrixL();
  Matrix m = L.solve(c1);
  m = L.solve(m.transpose()).transpose();
  m = 0.5 * (m + m.transpose());

  const auto p = static_cast<double>(m.rows());
  double logdet = 0.0;
  const Eigen::LLT<Matrix> mchol(m);
  if (mchol.info() == Eigen::Success) {
    logdet = 2.0 * mchol.matrixLLT().diagonal().array().log().sum();
  } else {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(m, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() <= 0.0)
      return std::numeric_limits<double>::infinity();
    logdet = eig.eigenvalues().array().log().sum();
  }
  return std::max(0.0, 0.5 * (m.trace() - logdet - p));
}

inline void check_compatible(const SmicaParams &params, const SpectralCovarianceSet &emp) {
  if (params.num_bands() != emp.size() || !(params.bands == emp.bands))
    throw ConfigError("params and covariances use different bands");
  if (params.p() != emp.p)
    throw ConfigError("params have " + std::to_string(params.p()) +
                      " sensors, covariances have " + std::to_string(emp.p));
}

/// Spectral matching loss sum_b 2 n_b KL(Chat_b, A P_b A^T + Sigma_b).
inline double loss(const SmicaParams &params, const SpectralCovarianceSet &emp) {
  check_compatible(params, emp);
  double total = 0.0;
  for (std::size_t b = 0; b < emp.size(); ++b)
    total += 2.0 * emp.counts[b] *
             kl_div(emp.mats[b], model_covariance(params, b), "band " + std::to_string(b));
  return total;
}

/**
 * Fixes the scale, sign and order indeterminacies:
 * unit-norm columns of A (squared norm moved into P), largest-magnitude entry
 * of each column positive, sources sorted by sum_b n_b P_b[i] descending.
 */
inline SmicaParams canonicalize(SmicaParams params, const std::vector<int> &counts) {
  const Eigen::Index q = params.q();
  for (Eigen::Index j = 0; j < q; ++j) {
    const double norm = params.A.col(j).norm();
    Eigen::Index peak = 0;
    params.A.col(j).cwiseAbs().maxCoeff(&peak);
    const double sign = params.A(peak, j) < 0.0 ? -1.0 : 1.0;
    params.A.col(j) *= sign / norm;
    params.P.col(j) *= norm * norm;
  }
  Vector total = Vector::Zero(q);
  for (std::size_t b = 0; b < counts.size(); ++b)
    total += counts[b] * params.P.row(static_cast<Eigen::Index>(b)).transpose();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(q));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return total(a) > total(b); });
  SmicaParams out = params;
  for (Eigen::Index j = 0; j < q; ++j) {
    out.A.col(j) = params.A.col(order[static_cast<std::size_t>(j)]);
    out.P.col(j) = params.P.col(order[static_cast<std::size_t>(j)]);
  }
  return out;
}

/// Exact model covariances for every band, packaged as a covariance set.
inline SpectralCovarianceSet model_covariances(const SmicaParams &params,
                                               const std::vector<int> &counts) {
  SpectralCovarianceSet out;
  out.bands = params.bands;
  out.p = params.p();
  out.counts = counts;
  for (std::size_t b = 0; b < params.num_bands(); ++b)
    out.mats.push_back(model_covariance(params, b));
  out.validate();
  return out;
}

} // namespace smica
