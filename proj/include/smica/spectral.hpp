/**
 * @brief DFT coefficients and band-averaged spectral covariance estimation.
 *
 * Coefficients use the unitary-in-power normalization
 *   x_k = T^{-1/2} sum_t X(t) exp(-2 i pi k t / T),
 * so a band average of Re(x_k x_k^H) estimates the band-averaged spectral
 * covariance directly.
 */
#pragma once

#include "smica/core.hpp"

#include <unsupported/Eigen/FFT>

#include <complex>
#include <optional>
#include <string>
#include <vector>

namespace smica {

using ComplexMatrix = Eigen::MatrixXcd;

namespace detail {

/// Full (unnormalized) DFT of every row. Column k holds bin k, k = 0..T-1.
inline ComplexMatrix row_dft(const Matrix &x) {
  const auto T = static_cast<std::size_t>(x.cols());
  ComplexMatrix out(x.rows(), x.cols());
  Eigen::FFT<double> fft;
  std::vector<double> in(T);
  std::vector<std::complex<double>> spec;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (std::size_t t = 0; t < T; ++t)
      in[t] = x(r, static_cast<Eigen::Index>(t));
    fft.fwd(spec, in);
    for (std::size_t k = 0; k < T; ++k)
      out(r, static_cast<Eigen::Index>(k)) = spec[k];
  }
  return out;
}

/// Inverse of row_dft, keeping the real part (input is Hermitian by construction).
inline Matrix row_idft_real(const ComplexMatrix &spec) {
  const auto T = static_cast<std::size_t>(spec.cols());
  Matrix out(spec.rows(), spec.cols());
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> in(T), time;
  for (Eigen::Index r = 0; r < spec.rows(); ++r) {
    for (std::size_t k = 0; k < T; ++k)
      in[k] = spec(r, static_cast<Eigen::Index>(k));
    fft.inv(time, in);
    for (std::size_t t = 0; t < T; ++t)
      out(r, static_cast<Eigen::Index>(t)) = time[t].real();
  }
  return out;
}

} // namespace detail

/// Frequency in Hz of DFT bin k for a length-T recording.
inline double bin_frequency(Eigen::Index k, Eigen::Index T, double fs) {
  return static_cast<double>(k) * fs / static_cast<double>(T);
}

/**
 * Band index of every positive-frequency bin k = 0..floor(T/2), or nullopt
 * when the bin is not used. DC and (for even T) Nyquist are never assigned.
 * Bands are half-open [lo, hi).
 */
inline std::vector<std::optional<std::size_t>>
assign_bins(Eigen::Index T, double fs, const BandSpec &bands) {
  std::vector<std::optional<std::size_t>> owner(static_cast<std::size_t>(T / 2 + 1));
  for (Eigen::Index k = 1; k <= T / 2; ++k) {
    if (2 * k == T)
      continue;
    const double f = bin_frequency(k, T, fs);
    for (std::size_t b = 0; b < bands.size(); ++b) {
      if (bands[b].contains(f)) {
        owner[static_cast<std::size_t>(k)] = b;
        break;
      }
    }
  }
  return owner;
}

/// Number of DFT bins falling in each band.
inline std::vector<int> bin_counts(Eigen::Index T, double fs, const BandSpec &bands) {
  std::vector<int> counts(bands.size(), 0);
  for (const auto &owner : assign_bins(T, fs, bands))
    if (owner)
      ++counts[*owner];
  return counts;
}

/// Band-averaged empirical spectral covariances with their bin counts.
struct SpectralCovarianceSet {
  std::vector<Matrix> mats;
  std::vector<int> counts;
  BandSpec bands;
  Eigen::Index p = 0;

  [[nodiscard]] std::size_t size() const { return mats.size(); }

  [[nodiscard]] double total_count() const {
    double n = 0.0;
    for (int c : counts)
      n += c;
    return n;
  }

  /// Count-weighted mean of the band covariances.
  [[nodiscard]] Matrix weighted_mean() const {
    Matrix mean = Matrix::Zero(p, p);
    for (std::size_t b = 0; b < mats.size(); ++b)
      mean += counts[b] * mats[b];
    return mean / total_count();
  }

  void validate() const {
    if (mats.size() != bands.size() || counts.size() != bands.size())
      throw ConfigError("covariance set: band count mismatch");
    for (std::size_t b = 0; b < mats.size(); ++b) {
      if (mats[b].rows() != p || mats[b].cols() != p)
        throw ConfigError("covariance set: band " + std::to_string(b) +
                          " matrix is not " + std::to_string(p) + "x" + std::to_string(p));
      if (counts[b] < 1)
        throw ConfigError("covariance set: band " + std::to_string(b) + " has no bins");
      if (!mats[b].allFinite())
        throw DataError("covariance set: band " + std::to_string(b) + " is not finite");
    }
  }
};

/**
 * Normalized DFT coefficients for bins k = 1..floor(T/2); column k-1 holds
 * bin k. DC is dropped.
 */
inline ComplexMatrix fourier_coefficients(const Recording &rec) {
  rec.validate();
  const Eigen::Index T = rec.samples();
  const ComplexMatrix full = detail::row_dft(rec.data);
  return full.middleCols(1, T / 2) / std::sqrt(static_cast<double>(T));
}

/**
 * Periodogram averaged over each band:
 *   C_b = (1/n_b) sum_{k in band b} Re(x_k x_k^H).
 * The channel means are removed first. No tapering.
 */
inline SpectralCovarianceSet estimate_spectral_covariances(const Recording &rec,
                                                           const BandSpec &bands) {
  rec.validate();
  bands.check_sampling_rate(rec.fs);
  const Eigen::Index p = rec.channels();
  const Eigen::Index T = rec.samples();

  const auto owner = assign_bins(T, rec.fs, bands);
  std::vector<std::vector<Eigen::Index>> members(bands.size());
  for (std::size_t k = 0; k < owner.size(); ++k)
    if (owner[k])
      members[*owner[k]].push_back(static_cast<Eigen::Index>(k));
  for (std::size_t b = 0; b < bands.size(); ++b)
    if (members[b].empty())
      throw ConfigError("band " + std::to_string(b) + " [" + std::to_string(bands[b].lo) +
                        ", " + std::to_string(bands[b].hi) +
                        ") contains no DFT bins for T=" + std::to_string(T) +
                        " fs=" + std::to_string(rec.fs));

  const ComplexMatrix spec =
      detail::row_dft(demeaned(rec.data)) / std::sqrt(static_cast<double>(T));

  SpectralCovarianceSet out;
  out.bands = bands;
  out.p = p;
  out.mats.reserve(bands.size());
  out.counts.reserve(bands.size());
  for (std::size_t b = 0; b < bands.size(); ++b) {
    const auto n = static_cast<Eigen::Index>(members[b].size());
    Matrix re(p, n), im(p, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto k = members[b][static_cast<std::size_t>(j)];
      re.col(j) = spec.col(k).real();
      im.col(j) = spec.col(k).imag();
    }
    Matrix c = (re * re.transpose() + im * im.transpose()) / static_cast<double>(n);
    out.mats.push_back(0.5 * (c + c.transpose()));
    out.counts.push_back(static_cast<int>(n));
  }
  return out;
}

} // namespace smica
