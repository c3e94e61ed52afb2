/**
 * @brief Ground-truthed synthetic data for the SMICA model and recovery metrics.
 *
 * Stationary series are synthesized in the frequency domain: every bin k of
 * band b receives an independent circular complex Gaussian coefficient with
 * E|x_k|^2 equal to the band power, mirrored to bin T-k, then inverted. The
 * generated data therefore follows the band-constant spectral model exactly.
 *
 * Determinism: the same spec and seed give identical bytes on a given
 * toolchain (std::mt19937_64 with std::normal_distribution).
 */
#pragma once

#include "smica/core.hpp"
#include "smica/model.hpp"
#include "smica/spectral.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>

namespace smica {

struct SynthSpec {
  Eigen::Index p = 0;
  Eigen::Index q = 0;
  BandSpec bands;
  Eigen::Index T = 0;
  double fs = 1.0;
  std::uint64_t seed = 0;
  Matrix spectra;               ///< B x q source band powers
  Matrix noise;                 ///< B x p sensor noise band powers
  std::optional<Matrix> mixing; ///< p x q; seeded random unit-norm columns when absent
};

struct GroundTruth {
  Matrix A_true;     ///< p x q
  Matrix P_true;     ///< B x q
  Matrix Sigma_true; ///< B x p
  Matrix sources;    ///< q x T
  Recording recording;
  BandSpec bands;

  [[nodiscard]] SmicaParams params() const { return {A_true, P_true, Sigma_true, bands}; }

  /// A P_b A^T + Sigma_b with the bin counts of this recording length.
  [[nodiscard]] SpectralCovarianceSet exact_covariances() const {
    return model_covariances(params(),
                             bin_counts(recording.samples(), recording.fs, bands));
  }
};

namespace detail {

/// Row s is a real series whose band-b bins carry power powers(b, s).
inline Matrix band_limited_gaussian(std::mt19937_64 &rng, const Matrix &powers,
                                    Eigen::Index T, double fs, const BandSpec &bands) {
  const auto owner = assign_bins(T, fs, bands);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double root_t = std::sqrt(static_cast<double>(T));
  ComplexMatrix spec = ComplexMatrix::Zero(powers.cols(), T);
  for (Eigen::Index s = 0; s < powers.cols(); ++s) {
    for (Eigen::Index k = 1; k <= T / 2; ++k) {
      const auto &b = owner[static_cast<std::size_t>(k)];
      if (!b)
        continue;
      const double sd = std::sqrt(0.5 * powers(static_cast<Eigen::Index>(*b), s));
      const double re = normal(rng);
      const double im = normal(rng);
      const std::complex<double> coef(sd * re * root_t, sd * im * root_t);
      spec(s, k) = coef;
      spec(s, T - k) = std::conj(coef);
    }
  }
  return row_idft_real(spec);
}

inline Matrix random_unit_columns(std::mt19937_64 &rng, Eigen::Index p, Eigen::Index q) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix A(p, q);
  for (Eigen::Index j = 0; j < q; ++j)
    for (Eigen::Index i = 0; i < p; ++i)
      A(i, j) = normal(rng);
  A.colwise().normalize();
  return A;
}

} // namespace detail

/// Draws a recording from the noisy mixture model with band-constant spectra.
inline GroundTruth generate(const SynthSpec &spec) {
  const auto B = static_cast<Eigen::Index>(spec.bands.size());
  if (spec.p < 1 || spec.q < 0 || spec.q > spec.p)
    throw ConfigError("generate: need 0 <= q <= p and p >= 1");
  if (spec.spectra.rows() != B || spec.spectra.cols() != spec.q)
    throw ConfigError("generate: spectra must be B x q");
  if (spec.noise.rows() != B || spec.noise.cols() != spec.p)
    throw ConfigError("generate: noise must be B x p");
  if ((spec.spectra.array() < 0.0).any() || (spec.noise.array() < 0.0).any())
    throw ConfigError("generate: band powers must be non-negative");
  if (!(spec.fs > 0.0) || spec.T < 2)
    throw ConfigError("generate: need fs > 0 and T >= 2");
  spec.bands.check_sampling_rate(spec.fs);
  const auto counts = bin_counts(spec.T, spec.fs, spec.bands);
  for (std::size_t b = 0; b < counts.size(); ++b)
    if (counts[b] == 0)
      throw ConfigError("generate: T=" + std::to_string(spec.T) +
                        " too short, band " + std::to_string(b) + " has no DFT bins");

  std::mt19937_64 rng(spec.seed);
  GroundTruth gt;
  gt.bands = spec.bands;
  if (spec.mixing) {
    if (spec.mixing->rows() != spec.p || spec.mixing->cols() != spec.q)
      throw ConfigError("generate: mixing matrix must be p x q");
    gt.A_true = *spec.mixing;
  } else {
    gt.A_true = detail::random_unit_columns(rng, spec.p, spec.q);
  }
  gt.P_true = spec.spectra;
  gt.Sigma_true = spec.noise;
  gt.sources = detail::band_limited_gaussian(rng, spec.spectra, spec.T, spec.fs, spec.bands);
  const Matrix noise =
      detail::band_limited_gaussian(rng, spec.noise, spec.T, spec.fs, spec.bands);
  gt.recording = Recording{gt.A_true * gt.sources + noise, spec.fs};
  return gt;
}

struct DiversityCheck {
  bool flagged = false;
  Eigen::Index i = -1; ///< worst pair, -1 when q < 2
  Eigen::Index j = -1;
  double variance = std::numeric_limits<double>::infinity();
};

inline constexpr double kDiversityThreshold = 1e-3;

/**
 * Finds the source pair whose log power ratio varies least across bands.
 * A variance below kDiversityThreshold means nearly proportional spectra,
 * which the model cannot separate.
 */
inline DiversityCheck spectral_diversity_check(const Matrix &spectra) {
  if (spectra.rows() < 2)
    throw ConfigError("spectral_diversity_check: need at least 2 bands");
  if ((spectra.array() <= 0.0).any())
    throw ConfigError("spectral_diversity_check: band powers must be positive");
  DiversityCheck out;
  const Matrix logs = spectra.array().log().matrix();
  for (Eigen::Index i = 0; i < spectra.cols(); ++i) {
    for (Eigen::Index j = i + 1; j < spectra.cols(); ++j) {
      const Vector diff = logs.col(i) - logs.col(j);
      const double var = (diff.array() - diff.mean()).square().mean();
      if (var < out.variance) {
        out.variance = var;
        out.i = i;
        out.j = j;
      }
    }
  }
  out.flagged = out.variance < kDiversityThreshold;
  return out;
}

/**
 * Amari index of a square matrix, normalized to [0, 1]:
 *   1/(2q(q-1)) * [sum_i (sum_j |m_ij| / max_j |m_ij| - 1)
 *                + sum_j (sum_i |m_ij| / max_i |m_ij| - 1)].
 * Zero exactly for scaled permutations.
 */
inline double amari_distance(const Matrix &m) {
  if (m.rows() != m.cols())
    throw ConfigError("amari_distance: matrix must be square");
  const Eigen::Index q = m.rows();
  if (q <= 1)
    return 0.0;
  const Matrix a = m.cwiseAbs();
  double rows = 0.0, cols = 0.0;
  for (Eigen::Index i = 0; i < q; ++i) {
    const double rmax = a.row(i).maxCoeff();
    const double cmax = a.col(i).maxCoeff();
    if (rmax == 0.0)
      throw ConfigError("amari_distance: row " + std::to_string(i) + " is zero");
    if (cmax == 0.0)
      throw ConfigError("amari_distance: column " + std::to_string(i) + " is zero");
    rows += a.row(i).sum() / rmax - 1.0;
    cols += a.col(i).sum() / cmax - 1.0;
  }
  return (rows + cols) / (2.0 * static_cast<double>(q) * static_cast<double>(q - 1));
}

/// Amari index of pinv(A_hat) * A_true.
inline double amari_distance_mixing(const Matrix &A_hat, const Matrix &A_true) {
  if (A_hat.rows() != A_true.rows() || A_hat.cols() != A_true.cols())
    throw ConfigError("amari_distance_mixing: shape mismatch");
  const Matrix unmix = A_hat.completeOrthogonalDecomposition().pseudoInverse();
  return amari_distance(unmix * A_true);
}

struct ColumnMatch {
  Eigen::Index index = -1;
  double cosine = 0.0; ///< absolute cosine similarity
};

/// Column of `mixing` best aligned (up to sign) with `target`.
inline ColumnMatch best_column_match(const Matrix &mixing, const Vector &target) {
  ColumnMatch best;
  const double tn = target.norm();
  for (Eigen::Index j = 0; j < mixing.cols(); ++j) {
    const double denom = mixing.col(j).norm() * tn;
    if (denom == 0.0)
      continue;
    const double c = std::abs(mixing.col(j).dot(target)) / denom;
    if (c > best.cosine) {
      best.cosine = c;
      best.index = j;
    }
  }
  return best;
}

/// Configuration of the synthetic phantom: one gated sinusoid among 1/f-like sources.
struct PhantomConfig {
  Eigen::Index p = 20;
  Eigen::Index background = 5; ///< number of 1/f-like sources
  double fs = 200.0;
  double duration = 60.0; ///< seconds
  double frequency = 20.0;
  double on_time = 0.5;
  double off_time = 1.0;
  double noise_power = 1.0;      ///< mean per-sensor noise variance
  double background_power = 1.0; ///< mean per-source variance of the 1/f sources
  BandSpec bands = BandSpec::uniform(1.0, 70.0, 40);
};

struct PhantomScenario {
  GroundTruth truth;
  Eigen::Index planted = 0; ///< column of A_true / row of sources holding the gated sinusoid
  double amplitude = 0.0;
};

/// Named amplitude tiers, ordered like the 1000/200/20 nAm phantom tiers.
inline double phantom_amplitude(const std::string &tier) {
  if (tier == "high")
    return 5.0;
  if (tier == "medium")
    return 2.0;
  if (tier == "low")
    return 1.0;
  throw ConfigError("unknown amplitude tier '" + tier + "' (expected high, medium or low)");
}

/**
 * Planted source: amplitude * sin(2 pi f t) gated on for on_time seconds and
 * off for off_time seconds, repeated. Background: sources with band powers
 * proportional to f_center^-alpha, alpha spread around 1 so they stay
 * spectrally distinct. Sensor noise is white with per-sensor levels drawn in
 * [0.5, 1.5] * noise_power. P_true of the planted source is its empirical
 * band power; the gated sinusoid is not stationary.
 */
inline PhantomScenario phantom_scenario(std::uint64_t seed, double amplitude,
                                        const PhantomConfig &cfg = {}) {
  const auto T = static_cast<Eigen::Index>(std::llround(cfg.duration * cfg.fs));
  const auto B = static_cast<Eigen::Index>(cfg.bands.size());
  const Eigen::Index q = cfg.background + 1;
  cfg.bands.check_sampling_rate(cfg.fs);
  const auto counts = bin_counts(T, cfg.fs, cfg.bands);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  PhantomScenario out;
  out.amplitude = amplitude;
  out.planted = 0;
  GroundTruth &gt = out.truth;
  gt.bands = cfg.bands;
  gt.A_true = detail::random_unit_columns(rng, cfg.p, q);

  // Band powers normalized so each background source has variance
  // background_power over the modeled bins.
  const double total_bins = static_cast<double>(T);
  Matrix bg(B, cfg.background);
  for (Eigen::Index i = 0; i < cfg.background; ++i) {
    const double alpha =
        cfg.background > 1 ? 0.5 + 1.0 * static_cast<double>(i) / (cfg.background - 1) : 1.0;
    double var = 0.0;
    for (Eigen::Index b = 0; b < B; ++b) {
      bg(b, i) = std::pow(cfg.bands[static_cast<std::size_t>(b)].center(), -alpha);
      var += 2.0 * counts[static_cast<std::size_t>(b)] * bg(b, i) / total_bins;
    }
    bg.col(i) *= cfg.background_power / var;
  }
  Matrix noise(B, cfg.p);
  for (Eigen::Index r = 0; r < cfg.p; ++r) {
    const double level = cfg.noise_power * (0.5 + unit(rng));
    double var = 0.0;
    for (Eigen::Index b = 0; b < B; ++b)
      var += 2.0 * counts[static_cast<std::size_t>(b)] / total_bins;
    noise.col(r).setConstant(level / var);
  }

  gt.sources.resize(q, T);
  const double period = cfg.on_time + cfg.off_time;
  const double phase = 2.0 * std::numbers::pi * unit(rng);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double time = static_cast<double>(t) / cfg.fs;
    const bool on = std::fmod(time, period) < cfg.on_time;
    gt.sources(0, t) =
        on ? amplitude * std::sin(2.0 * std::numbers::pi * cfg.frequency * time + phase) : 0.0;
  }
  gt.sources.bottomRows(cfg.background) =
      detail::band_limited_gaussian(rng, bg, T, cfg.fs, cfg.bands);
  const Matrix sensor_noise = detail::band_limited_gaussian(rng, noise, T, cfg.fs, cfg.bands);
  gt.recording = Recording{gt.A_true * gt.sources + sensor_noise, cfg.fs};

  gt.P_true.resize(B, q);
  gt.P_true.rightCols(cfg.background) = bg;
  if (amplitude != 0.0) {
    const auto planted_cov = estimate_spectral_covariances(
        Recording{gt.sources.topRows(1), cfg.fs}, cfg.bands);
    for (Eigen::Index b = 0; b < B; ++b)
      gt.P_true(b, 0) = planted_cov.mats[static_cast<std::size_t>(b)](0, 0);
  } else {
    gt.P_true.col(0).setZero();
  }
  gt.Sigma_true = noise;
  return out;
}

/**
 * Three spectrally distinct sources (low-pass, 10 Hz peak, high-pass) mixed
 * into p sensors with white noise at the requested SNR (total source power
 * over total noise power at the sensors, in dB).
 */
inline GroundTruth diverse_mixture(std::uint64_t seed, Eigen::Index p = 6,
                                   Eigen::Index T = Eigen::Index{1} << 16, double snr_db = 10.0,
                                   double fs = 200.0,
                                   const BandSpec &bands = BandSpec::uniform(1.0, 70.0, 20)) {
  const auto B = static_cast<Eigen::Index>(bands.size());
  const Eigen::Index q = 3;
  Matrix spectra(B, q);
  for (Eigen::Index b = 0; b < B; ++b) {
    const double f = bands[static_cast<std::size_t>(b)].center();
    spectra(b, 0) = 1.0 / (1.0 + (f / 5.0) * (f / 5.0));
    spectra(b, 1) = 0.05 + std::exp(-0.5 * std::pow((f - 10.0) / 3.0, 2.0));
    spectra(b, 2) = 0.05 + f / 70.0;
  }
  // Unit total power per source over the modeled bins.
  const auto counts = bin_counts(T, fs, bands);
  for (Eigen::Index j = 0; j < q; ++j) {
    double var = 0.0;
    for (Eigen::Index b = 0; b < B; ++b)
      var += 2.0 * counts[static_cast<std::size_t>(b)] * spectra(b, j) / static_cast<double>(T);
    spectra.col(j) /= var;
  }
  // Columns of A are unit norm, so the mean sensor signal power is q / p.
  double bins = 0.0;
  for (int c : counts)
    bins += 2.0 * c / static_cast<double>(T);
  const double noise_var = (static_cast<double>(q) / static_cast<double>(p)) /
                           std::pow(10.0, snr_db / 10.0);
  SynthSpec spec;
  spec.p = p;
  spec.q = q;
  spec.bands = bands;
  spec.T = T;
  spec.fs = fs;
  spec.seed = seed;
  spec.spectra = spectra;
  spec.noise = Matrix::Constant(B, p, noise_var / bins);
  return generate(spec);
}

} // namespace smica
