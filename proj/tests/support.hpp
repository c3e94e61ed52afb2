// Independent oracles and random instance builders shared by the test suites.
#pragma once

#include "smica/smica.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

namespace smica::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng &rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Matrix gaussian_matrix(Rng &rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i)
      m(i, j) = normal(rng);
  return m;
}

inline Matrix random_spd(Rng &rng, Eigen::Index p, double ridge = 0.1) {
  const Matrix g = gaussian_matrix(rng, p, p);
  Matrix c = g * g.transpose() / static_cast<double>(p);
  c.diagonal().array() += ridge;
  return c;
}

/// Log-uniform positive powers.
inline Matrix random_powers(Rng &rng, Eigen::Index rows, Eigen::Index cols, double lo,
                            double hi) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i)
      m(i, j) = lo * std::pow(hi / lo, uniform(rng, 0.0, 1.0));
  return m;
}

inline SmicaParams random_params(Rng &rng, Eigen::Index p, Eigen::Index q, std::size_t B,
                                 double noise_lo = 0.05, double noise_hi = 0.5) {
  SmicaParams params;
  params.bands = BandSpec::uniform(1.0, 1.0 + static_cast<double>(B), B);
  params.A = gaussian_matrix(rng, p, q);
  params.P = random_powers(rng, static_cast<Eigen::Index>(B), q, 0.2, 5.0);
  params.Sigma = random_powers(rng, static_cast<Eigen::Index>(B), p, noise_lo, noise_hi);
  return params;
}

inline std::vector<int> random_counts(Rng &rng, std::size_t B, int lo = 20, int hi = 200) {
  std::uniform_int_distribution<int> dist(lo, hi);
  std::vector<int> counts(B);
  for (auto &c : counts)
    c = dist(rng);
  return counts;
}

/**
 * Band covariances sampled like the periodogram: n_b circular complex
 * Gaussian vectors with covariance C_b, averaged as Re(x x^H).
 */
inline SpectralCovarianceSet sampled_covariances(Rng &rng, const SmicaParams &params,
                                                 const std::vector<int> &counts) {
  SpectralCovarianceSet set;
  set.bands = params.bands;
  set.p = params.p();
  set.counts = counts;
  for (std::size_t b = 0; b < params.num_bands(); ++b) {
    const Matrix c = model_covariance(params, b);
    const Matrix L = Eigen::LLT<Matrix>(c).matrixL();
    const Matrix re = L * gaussian_matrix(rng, set.p, counts[b]) / std::sqrt(2.0);
    const Matrix im = L * gaussian_matrix(rng, set.p, counts[b]) / std::sqrt(2.0);
    Matrix emp = (re * re.transpose() + im * im.transpose()) / counts[b];
    set.mats.push_back(0.5 * (emp + emp.transpose()));
  }
  return set;
}

/// Direct O(T) evaluation of one unnormalized DFT coefficient.
inline std::complex<double> direct_dft(const Eigen::RowVectorXd &x, Eigen::Index k) {
  const auto T = x.size();
  std::complex<double> acc = 0.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k * t % T) /
                         static_cast<double>(T);
    acc += x(t) * std::complex<double>(std::cos(angle), std::sin(angle));
  }
  return acc;
}

/**
 * O(T^2) covariance estimator: direct DFT of the demeaned channels, bins with
 * frequency k fs / T in [lo, hi) for 0 < k < T/2, averaged Re(x x^H) / T.
 */
inline SpectralCovarianceSet direct_covariances(const Recording &rec, const BandSpec &bands) {
  const Eigen::Index p = rec.channels();
  const Eigen::Index T = rec.samples();
  Matrix x = rec.data;
  for (Eigen::Index r = 0; r < p; ++r)
    x.row(r).array() -= x.row(r).mean();
  SpectralCovarianceSet set;
  set.bands = bands;
  set.p = p;
  for (const auto &band : bands) {
    Matrix acc = Matrix::Zero(p, p);
    int n = 0;
    for (Eigen::Index k = 1; 2 * k < T; ++k) {
      const double f = static_cast<double>(k) * rec.fs / static_cast<double>(T);
      if (f < band.lo || f >= band.hi)
        continue;
      Eigen::VectorXcd v(p);
      for (Eigen::Index r = 0; r < p; ++r)
        v(r) = direct_dft(x.row(r), k);
      acc += (v * v.adjoint()).real() / static_cast<double>(T);
      ++n;
    }
    set.mats.push_back(n ? Matrix(acc / n) : acc);
    set.counts.push_back(n);
  }
  return set;
}

/**
 * Gaussian conditioning on the joint (S, X) covariance
 *   [[P, P A^T], [A P, A P A^T + Sigma]]:
 *   E[S S^T | X] averaged over Chat = Var(S | X) + K Chat K^T, K = P A^T C^-1.
 */
struct ConditionalMoments {
  Matrix Rss;
  Matrix Rsx;
};

inline ConditionalMoments conditioning_oracle(const Matrix &A, const Vector &P,
                                              const Vector &Sigma, const Matrix &chat) {
  const Matrix Ps = P.asDiagonal();
  const Matrix cross = Ps * A.transpose();
  Matrix cx = A * Ps * A.transpose();
  cx.diagonal() += Sigma;
  const Matrix cinv = cx.inverse();
  const Matrix K = cross * cinv;
  const Matrix var = Ps - K * cross.transpose();
  return {var + K * chat * K.transpose(), K * chat};
}

/**
 * EM functional (expected complete-data negative log-likelihood, constants
 * dropped) for parameters `params` against fixed sufficient statistics.
 */
inline double em_functional(const SmicaParams &params, const SufficientStats &stats) {
  double total = 0.0;
  for (std::size_t b = 0; b < stats.size(); ++b) {
    const auto row = static_cast<Eigen::Index>(b);
    const Matrix &A = params.A;
    const Matrix resid = stats.Rxx[b] - A * stats.Rsx[b] - stats.Rsx[b].transpose() * A.transpose() +
                         A * stats.Rss[b] * A.transpose();
    double term = 0.0;
    for (Eigen::Index r = 0; r < params.p(); ++r)
      term += resid(r, r) / params.Sigma(row, r) + std::log(params.Sigma(row, r));
    for (Eigen::Index i = 0; i < params.q(); ++i)
      term += stats.Rss[b](i, i) / params.P(row, i) + std::log(params.P(row, i));
    total += stats.counts[b] * term;
  }
  return total;
}

inline double relative_error(const Matrix &a, const Matrix &b) {
  const double scale = std::max(b.norm(), 1e-300);
  return (a - b).norm() / scale;
}

inline bool all_finite(const SmicaParams &params) {
  return params.A.allFinite() && params.P.allFinite() && params.Sigma.allFinite();
}

} // namespace smica::testing
