/**
 * @brief Source recovery from a fitted model and sensor-space denoising.
 *
 * Band filtering is rectangular DFT masking on the same bin partition used by
 * the covariance estimator, so the Wiener filter of band b acts exactly on the
 * bins that produced Chat_b. Content outside every band is dropped.
 */
#pragma once

#include "smica/core.hpp"
#include "smica/em.hpp"
#include "smica/model.hpp"
#include "smica/spectral.hpp"

#include <set>
#include <string>

namespace smica {

enum class ExtractionMethod { Wiener, PseudoInverse };

struct SourceEstimate {
  Matrix data; ///< q x T
  ExtractionMethod method = ExtractionMethod::Wiener;
  BandSpec bands;
};

/// Keeps only the DFT bins of `band` (DC and Nyquist always removed).
inline Recording band_filter(const Recording &rec, const Band &band) {
  rec.validate();
  if (!(band.lo > 0.0) || band.hi > 0.5 * rec.fs || !(band.lo < band.hi))
    throw ConfigError("band_filter: band [" + std::to_string(band.lo) + ", " +
                      std::to_string(band.hi) + ") not within (0, fs/2]");
  const Eigen::Index T = rec.samples();
  ComplexMatrix spec = detail::row_dft(rec.data);
  ComplexMatrix kept = ComplexMatrix::Zero(spec.rows(), T);
  bool any = false;
  for (Eigen::Index k = 1; k <= T / 2; ++k) {
    if (2 * k == T || !band.contains(bin_frequency(k, T, rec.fs)))
      continue;
    kept.col(k) = spec.col(k);
    kept.col(T - k) = spec.col(T - k);
    any = true;
  }
  if (!any)
    throw ConfigError("band_filter: band [" + std::to_string(band.lo) + ", " +
                      std::to_string(band.hi) + ") contains no DFT bins");
  return Recording{detail::row_idft_real(kept), rec.fs};
}

/**
 * S = sum_b W_b X_b with X_b the band-b part of the recording and
 * W_b = (A^T Sigma_b^-1 A + P_b^-1)^-1 A^T Sigma_b^-1.
 */
inline SourceEstimate wiener_sources(const SmicaParams &params, const Recording &rec) {
  rec.validate();
  params.validate();
  if (rec.channels() != params.p())
    throw ConfigError("wiener_sources: recording has " + std::to_string(rec.channels()) +
                      " channels, model expects " + std::to_string(params.p()));
  params.bands.check_sampling_rate(rec.fs);
  const Eigen::Index T = rec.samples();
  const ComplexMatrix spec = detail::row_dft(rec.data);
  const auto owner = assign_bins(T, rec.fs, params.bands);

  std::vector<Matrix> filters;
  filters.reserve(params.num_bands());
  for (std::size_t b = 0; b < params.num_bands(); ++b)
    filters.push_back(wiener_operator(params, b).W);

  ComplexMatrix out = ComplexMatrix::Zero(params.q(), T);
  for (Eigen::Index k = 1; k <= T / 2; ++k) {
    const auto &b = owner[static_cast<std::size_t>(k)];
    if (!b)
      continue;
    out.col(k) = filters[*b] * spec.col(k);
    out.col(T - k) = out.col(k).conjugate();
  }
  return SourceEstimate{detail::row_idft_real(out), ExtractionMethod::Wiener, params.bands};
}

/// S = (A^T A)^-1 A^T X on the mean-removed recording, all frequencies kept.
inline SourceEstimate pinv_sources(const SmicaParams &params, const Recording &rec) {
  rec.validate();
  if (rec.channels() != params.p())
    throw ConfigError("pinv_sources: recording has " + std::to_string(rec.channels()) +
                      " channels, model expects " + std::to_string(params.p()));
  if (params.q() == 0)
    throw NumericalError("pinv_sources: model has no sources");
  const Eigen::JacobiSVD<Matrix> svd(params.A);
  const auto &sv = svd.singularValues();
  if (sv(sv.size() - 1) <= 1e-12 * sv(0))
    throw NumericalError("pinv_sources: mixing matrix is rank deficient");
  const Eigen::LLT<Matrix> gram(params.A.transpose() * params.A);
  Matrix s = gram.solve(params.A.transpose() * demeaned(rec.data));
  return SourceEstimate{std::move(s), ExtractionMethod::PseudoInverse, params.bands};
}

/// A * S with S the Wiener sources and the rows listed in `spurious` zeroed.
inline Recording denoise(const SmicaParams &params, const Recording &rec,
                         const std::set<Eigen::Index> &spurious) {
  for (Eigen::Index i : spurious)
    if (i < 0 || i >= params.q())
      throw ConfigError("denoise: source index " + std::to_string(i) +
                        " out of range (q=" + std::to_string(params.q()) + ")");
  SourceEstimate est = wiener_sources(params, rec);
  for (Eigen::Index i : spurious)
    est.data.row(i).setZero();
  return Recording{params.A * est.data, rec.fs};
}

} // namespace smica
