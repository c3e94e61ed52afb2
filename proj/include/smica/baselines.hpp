/**
 * @brief Noiseless baselines: joint diagonalization of band covariances
 * (JDIAG, see jdiag.hpp) and spatio-spectral decomposition (SSD).
 */
#pragma once

#include "smica/core.hpp"
#include "smica/extract.hpp"
#include "smica/jdiag.hpp"
#include "smica/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace smica {

struct SpatialFilter {
  Vector w;
  double target_freq = 0.0;
  double bandwidth = 0.0;
  double quotient = 0.0; ///< narrow-band to broadband power ratio achieved by w
  Vector quotients;      ///< all generalized eigenvalues, descending
};

/**
 * Spatio-spectral decomposition: w maximizes w^T C_f w / w^T C w where C_f is
 * the covariance of the recording band-filtered to
 * [target_freq - bandwidth/2, target_freq + bandwidth/2) and C the broadband
 * covariance. Scaled so that Var(w^T X) = 1.
 */
inline SpatialFilter ssd(const Recording &rec, double target_freq, double bandwidth = 2.0,
                         double ridge = 1e-9) {
  rec.validate();
  if (!(bandwidth > 0.0))
    throw ConfigError("ssd: bandwidth must be positive");
  const Band band{target_freq - 0.5 * bandwidth, target_freq + 0.5 * bandwidth};
  if (!(band.lo > 0.0) || band.hi > 0.5 * rec.fs)
    throw ConfigError("ssd: band around " + std::to_string(target_freq) +
                      " Hz not within (0, fs/2)");
  const auto T = static_cast<double>(rec.samples());
  const Matrix narrow = band_filter(rec, band).data;
  const Matrix broad = demeaned(rec.data);
  Matrix c_narrow = narrow * narrow.transpose() / T;
  const Matrix c_broad = broad * broad.transpose() / T;

  Matrix denom = c_broad;
  if (Eigen::LLT<Matrix>(denom).info() != Eigen::Success) {
    denom = detail::ridged(c_broad, ridge);
    if (Eigen::LLT<Matrix>(denom).info() != Eigen::Success)
      throw NumericalError("ssd: broadband covariance singular after ridge");
  }
  c_narrow = 0.5 * (c_narrow + c_narrow.transpose());
  const Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> gen(c_narrow, denom);
  if (gen.info() != Eigen::Success)
    throw NumericalError("ssd: generalized eigenproblem failed");

  const Eigen::Index p = rec.channels();
  SpatialFilter out;
  out.target_freq = target_freq;
  out.bandwidth = bandwidth;
  out.quotients = gen.eigenvalues().reverse();
  out.quotient = out.quotients(0);
  Vector w = gen.eigenvectors().col(p - 1);
  Eigen::Index peak = 0;
  w.cwiseAbs().maxCoeff(&peak);
  if (w(peak) < 0.0)
    w = -w;
  const double var = w.dot(c_broad * w);
  if (!(var > 0.0))
    throw NumericalError("ssd: filtered series has zero variance");
  out.w = w / std::sqrt(var);
  return out;
}

/// w^T X on the mean-removed recording.
inline Vector apply_filter(const SpatialFilter &filter, const Recording &rec) {
  if (filter.w.size() != rec.channels())
    throw ConfigError("apply_filter: filter has " + std::to_string(filter.w.size()) +
                      " taps, recording has " + std::to_string(rec.channels()) + " channels");
  return (filter.w.transpose() * demeaned(rec.data)).transpose();
}

} // namespace smica
