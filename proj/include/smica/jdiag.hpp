/**
 * @brief Joint diagonalization of band covariance matrices (noiseless
 * spectral ICA).
 */
#pragma once

#include "smica/core.hpp"
#include "smica/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace smica {

struct JdiagOptions {
  int max_sweeps = 1000;
  double tol = 1e-9;
  double ridge = 1e-9; ///< relative to trace/p
};

/// Square unmixing matrix; rows are spatial filters, A = W^-1.
struct Unmixing {
  Matrix W;
  double criterion = 0.0;
  std::vector<double> criterion_history; ///< one entry per sweep, initial value first
  bool converged = false;
  int sweeps = 0;
};

namespace detail {

inline Matrix ridged(const Matrix &c, double ridge) {
  Matrix out = c;
  out.diagonal().array() += ridge * c.trace() / static_cast<double>(c.rows());
  return out;
}

inline double log_det_spd(const Matrix &m, const std::string &context) {
  const Eigen::LLT<Matrix> chol(m);
  if (chol.info() != Eigen::Success)
    throw NumericalError(context + ": matrix not positive definite");
  return 2.0 * chol.matrixLLT().diagonal().array().log().sum();
}

/// sum_b n_b [sum_i log D_b(i,i) - logdet D_b] for D_b = W C_b W^T.
inline double jdiag_criterion(const std::vector<Matrix> &transformed,
                              const std::vector<int> &counts) {
  double total = 0.0;
  for (std::size_t b = 0; b < transformed.size(); ++b) {
    const Matrix &d = transformed[b];
    total += counts[b] * (d.diagonal().array().log().sum() - log_det_spd(d, "jdiag"));
  }
  return total;
}

} // namespace detail

/**
 * Minimizes the joint-diagonality criterion
 *   sum_b n_b [logdet diag(W C_b W^T) - logdet(W C_b W^T)]
 * by sweeps of pairwise quasi-Newton updates (row i += -a row j,
 * row j += -c row i), each accepted only after a backtracking check that the
 * criterion decreases. Starts from the whitening matrix of the mean covariance.
 */
inline Unmixing jdiag_fit(const SpectralCovarianceSet &emp, const JdiagOptions &opts = {}) {
  emp.validate();
  const Eigen::Index p = emp.p;
  const std::size_t B = emp.size();
  const double N = emp.total_count();

  std::vector<Matrix> covs;
  covs.reserve(B);
  for (std::size_t b = 0; b < B; ++b) {
    covs.push_back(detail::ridged(emp.mats[b], opts.ridge));
    if (Eigen::LLT<Matrix>(covs.back()).info() != Eigen::Success)
      throw NumericalError("jdiag: band " + std::to_string(b) + " covariance singular after ridge");
  }

  Matrix mean = Matrix::Zero(p, p);
  for (std::size_t b = 0; b < B; ++b)
    mean += emp.counts[b] * covs[b];
  mean /= N;
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(mean);
  if (eig.eigenvalues().minCoeff() <= 0.0)
    throw NumericalError("jdiag: mean covariance singular");
  Matrix W = eig.operatorInverseSqrt();

  std::vector<double> weight(B);
  for (std::size_t b = 0; b < B; ++b)
    weight[b] = emp.counts[b] / N;

  auto transform_all = [&] {
    std::vector<Matrix> d(B);
    for (std::size_t b = 0; b < B; ++b) {
      d[b] = W * covs[b] * W.transpose();
      d[b] = 0.5 * (d[b] + d[b].transpose());
    }
    return d;
  };

  Unmixing out;
  std::vector<Matrix> D = transform_all();
  double current = detail::jdiag_criterion(D, emp.counts);
  out.criterion_history.push_back(current);

  for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    bool moved = false;
    for (Eigen::Index i = 1; i < p; ++i) {
      for (Eigen::Index j = 0; j < i; ++j) {
        double g_ij = 0, g_ji = 0, w_ij = 0, w_ji = 0;
        for (std::size_t b = 0; b < B; ++b) {
          const double dii = D[b](i, i), djj = D[b](j, j), dij = D[b](i, j);
          g_ij += weight[b] * dij / dii;
          g_ji += weight[b] * dij / djj;
          w_ij += weight[b] * djj / dii;
          w_ji += weight[b] * dii / djj;
        }
        // Newton system [[w_ij, 1], [1, w_ji]] h = g; det >= 0 by Cauchy-Schwarz.
        const double det = std::max(w_ij * w_ji - 1.0, 1e-12);
        const double h_ij = (w_ji * g_ij - g_ji) / det;
        const double h_ji = (w_ij * g_ji - g_ij) / det;
        const double tau = 1.0 + std::sqrt(std::max(0.0, 1.0 - h_ij * h_ji));

        for (double step = 1.0; step > 1e-8; step *= 0.5) {
          const double a = step * h_ij / tau;
          const double c = step * h_ji / tau;
          const double jac = 1.0 - a * c;
          if (jac <= 0.0)
            continue;
          double delta = -2.0 * N * std::log(jac);
          for (std::size_t b = 0; b < B; ++b) {
            const double dii = D[b](i, i), djj = D[b](j, j), dij = D[b](i, j);
            const double nii = dii - 2.0 * a * dij + a * a * djj;
            const double njj = djj - 2.0 * c * dij + c * c * dii;
            delta += emp.counts[b] * (std::log(nii / dii) + std::log(njj / djj));
          }
          if (!(delta < 0.0))
            continue;
          const Eigen::RowVectorXd wi = W.row(i), wj = W.row(j);
          W.row(i) = wi - a * wj;
          W.row(j) = wj - c * wi;
          for (auto &d : D) {
            const Eigen::RowVectorXd ri = d.row(i), rj = d.row(j);
            d.row(i) = ri - a * rj;
            d.row(j) = rj - c * ri;
            const Vector ci = d.col(i), cj = d.col(j);
            d.col(i) = ci - a * cj;
            d.col(j) = cj - c * ci;
          }
          moved = true;
          break;
        }
      }
    }
    D = transform_all();
    const double updated = detail::jdiag_criterion(D, emp.counts);
    out.criterion_history.push_back(updated);
    out.sweeps = sweep;
    const double previous = current;
    current = updated;
    if (!moved || previous - updated < opts.tol * std::abs(previous)) {
      out.converged = true;
      break;
    }
  }

  // Canonical form: unit-norm mixing columns, positive peak entry, sorted by power.
  const Matrix A = W.inverse();
  for (Eigen::Index i = 0; i < p; ++i) {
    Eigen::Index peak = 0;
    A.col(i).cwiseAbs().maxCoeff(&peak);
    const double sign = A(peak, i) < 0.0 ? -1.0 : 1.0;
    W.row(i) *= sign * A.col(i).norm();
  }
  Vector power = Vector::Zero(p);
  for (std::size_t b = 0; b < B; ++b)
    power += emp.counts[b] * (W * covs[b] * W.transpose()).diagonal();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return power(x) > power(y); });
  out.W.resize(p, p);
  for (Eigen::Index i = 0; i < p; ++i)
    out.W.row(i) = W.row(order[static_cast<std::size_t>(i)]);
  out.criterion = current;
  return out;
}

/// Mixing matrix implied by an unmixing (columns are source topographies).
inline Matrix mixing_from(const Unmixing &u) { return u.W.inverse(); }

} // namespace smica
