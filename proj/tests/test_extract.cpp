#include "support.hpp"

#include <gtest/gtest.h>

using namespace smica;
using namespace smica::testing;

namespace {

Matrix tone(double freq, double fs, Eigen::Index T, double phase = 0.0) {
  Matrix x(1, T);
  for (Eigen::Index t = 0; t < T; ++t)
    x(0, t) = std::cos(2.0 * std::numbers::pi * freq * static_cast<double>(t) / fs + phase);
  return x;
}

/// Band-limited synthetic mixture with known parameters.
GroundTruth mixture(std::uint64_t seed, Eigen::Index p, Eigen::Index q, double noise,
                    Eigen::Index T = 4096) {
  Rng rng(seed);
  SynthSpec spec;
  spec.p = p;
  spec.q = q;
  spec.bands = BandSpec::uniform(1.0, 45.0, 8);
  spec.T = T;
  spec.fs = 100.0;
  spec.seed = seed;
  spec.spectra = random_powers(rng, 8, q, 0.01, 0.1);
  spec.noise = Matrix::Constant(8, p, noise);
  return generate(spec);
}

/// Sum of the band-filtered copies of the recording over the model's bands.
Matrix band_limited(const Recording &rec, const BandSpec &bands) {
  Matrix out = Matrix::Zero(rec.channels(), rec.samples());
  for (const auto &band : bands)
    out += band_filter(rec, band).data;
  return out;
}

} // namespace

TEST(BandFilter, IsolatesOneTone) {
  const double fs = 100.0;
  const Eigen::Index T = 1000;
  const Matrix a = tone(7.0, fs, T, 0.3);
  const Matrix b = tone(31.0, fs, T, 1.1);
  const Recording mixed{a + 2.0 * b, fs};
  const Matrix out = band_filter(mixed, Band{5.0, 10.0}).data;
  EXPECT_LT((out - a).norm() / a.norm(), 1e-10);
}

TEST(BandFilter, FullBandIsDemeanedInput) {
  Rng rng(30);
  const Eigen::Index T = 501; // odd: no Nyquist bin
  const double fs = 100.0;
  Recording rec{gaussian_matrix(rng, 3, T), fs};
  rec.data.array() += 4.0;
  const Matrix out = band_filter(rec, Band{fs / T / 2.0, fs / 2.0}).data;
  const Matrix expected = demeaned(rec.data);
  EXPECT_LT((out - expected).norm(), 1e-10 * expected.norm());
}

TEST(BandFilter, PartitionSumsToFullBand) {
  Rng rng(31);
  const Recording rec{gaussian_matrix(rng, 2, 800), 200.0};
  const Matrix full = band_filter(rec, Band{1.0, 90.0}).data;
  Matrix sum = Matrix::Zero(2, 800);
  for (const auto &band : BandSpec::uniform(1.0, 90.0, 7))
    sum += band_filter(rec, band).data;
  EXPECT_LT((sum - full).norm(), 1e-10 * full.norm());
}

TEST(BandFilter, EmptyOrOutsideBandIsRejected) {
  const Recording rec{Matrix::Ones(1, 10), 10.0};
  EXPECT_THROW(band_filter(rec, Band{1.1, 1.2}), ConfigError);
  EXPECT_THROW(band_filter(rec, Band{1.0, 6.0}), ConfigError);
  EXPECT_THROW(band_filter(rec, Band{0.0, 2.0}), ConfigError);
}

TEST(WienerSources, NoiselessSquareLimitIsInverse) {
  const GroundTruth gt = mixture(32, 4, 4, 0.001);
  SmicaParams params = gt.params();
  params.Sigma.setConstant(1e-10);
  const Matrix wiener = wiener_sources(params, gt.recording).data;
  const Matrix inverse = params.A.inverse() * band_limited(gt.recording, gt.bands);
  EXPECT_LT((wiener - inverse).norm() / inverse.norm(), 1e-6);
}

TEST(WienerSources, ZeroPowerSourceIsShrunkAway) {
  const GroundTruth gt = mixture(33, 5, 3, 0.01);
  SmicaParams params = gt.params();
  params.P.col(1).setConstant(1e-14);
  const Matrix s = wiener_sources(params, gt.recording).data;
  EXPECT_LT(s.row(1).norm(), 1e-8 * s.row(0).norm());
}

TEST(WienerSources, Linear) {
  const GroundTruth g1 = mixture(34, 4, 2, 0.02);
  const GroundTruth g2 = mixture(35, 4, 2, 0.02);
  const SmicaParams params = g1.params();
  const double alpha = 1.7, beta = -0.4;
  const Recording combo{alpha * g1.recording.data + beta * g2.recording.data, 100.0};
  const Matrix lhs = wiener_sources(params, combo).data;
  const Matrix rhs = alpha * wiener_sources(params, g1.recording).data +
                     beta * wiener_sources(params, g2.recording).data;
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10 * (1.0 + rhs.cwiseAbs().maxCoeff()));
}

TEST(WienerSources, GainNeverExceedsPseudoInverseGain) {
  Rng rng(36);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index p = 2 + trial % 5;
    const Eigen::Index q = 1 + trial % p;
    const auto params = random_params(rng, p, q, 3);
    for (std::size_t b = 0; b < 3; ++b) {
      const Matrix gain = wiener_operator(params, b).W * params.A; // A^+ A = I for pinv
      // per-source gain in [0, 1]
      for (Eigen::Index i = 0; i < q; ++i) {
        EXPECT_GE(gain(i, i), 0.0);
        EXPECT_LE(gain(i, i), 1.0);
      }
      // operator norm in the source-power metric
      const Vector root = params.P.row(static_cast<Eigen::Index>(b)).transpose().cwiseSqrt();
      const Matrix scaled = root.cwiseInverse().asDiagonal() * gain * root.asDiagonal();
      EXPECT_LE(Eigen::JacobiSVD<Matrix>(scaled).singularValues()(0), 1.0 + 1e-12);
    }
  }
}

TEST(WienerSources, ShapeMismatch) {
  const GroundTruth gt = mixture(37, 4, 2, 0.02);
  const Recording wrong{gt.recording.data.topRows(3), 100.0};
  EXPECT_THROW(wiener_sources(gt.params(), wrong), ConfigError);
  EXPECT_THROW(pinv_sources(gt.params(), wrong), ConfigError);
}

TEST(WienerSources, LowerErrorThanPseudoInverseAtModerateSnr) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const GroundTruth gt = diverse_mixture(100 + seed, 6, 4096);
    const double w = (wiener_sources(gt.params(), gt.recording).data - gt.sources).squaredNorm();
    const double pi = (pinv_sources(gt.params(), gt.recording).data - gt.sources).squaredNorm();
    wins += w < pi ? 1 : 0;
  }
  EXPECT_EQ(wins, 5);
}

TEST(PinvSources, OrthonormalColumnsGiveTranspose) {
  Rng rng(38);
  const Matrix Q = Eigen::HouseholderQR<Matrix>(gaussian_matrix(rng, 5, 3))
                       .householderQ() *
                   Matrix::Identity(5, 3);
  SmicaParams params;
  params.bands = BandSpec::uniform(1.0, 3.0, 2);
  params.A = Q;
  params.P = Matrix::Ones(2, 3);
  params.Sigma = Matrix::Ones(2, 5);
  const Recording rec{gaussian_matrix(rng, 5, 100), 10.0};
  const Matrix s = pinv_sources(params, rec).data;
  const Matrix expected = Q.transpose() * demeaned(rec.data);
  EXPECT_LT((s - expected).norm(), 1e-12 * expected.norm());
}

TEST(PinvSources, NoiselessMixtureRecoversSources) {
  Rng rng(39);
  const Matrix A = gaussian_matrix(rng, 6, 3);
  const Matrix S = demeaned(gaussian_matrix(rng, 3, 300));
  SmicaParams params;
  params.bands = BandSpec::uniform(1.0, 3.0, 2);
  params.A = A;
  params.P = Matrix::Ones(2, 3);
  params.Sigma = Matrix::Ones(2, 6);
  const Matrix s = pinv_sources(params, Recording{A * S, 10.0}).data;
  EXPECT_LT((s - S).norm(), 1e-10 * S.norm());
}

TEST(PinvSources, HandExample) {
  SmicaParams params;
  params.bands = BandSpec::uniform(1.0, 3.0, 2);
  params.A = Matrix::Ones(2, 1);
  params.P = Matrix::Ones(2, 1);
  params.Sigma = Matrix::Ones(2, 2);
  Matrix x(2, 2);
  x << 2.0, -2.0, 4.0, -4.0; // zero-mean so the sample (2, 4) is kept as is
  const Matrix s = pinv_sources(params, Recording{x, 1.0}).data;
  EXPECT_NEAR(s(0, 0), 3.0, 1e-14);
  EXPECT_NEAR(s(0, 1), -3.0, 1e-14);
}

TEST(PinvSources, RankDeficientMixing) {
  SmicaParams params;
  params.bands = BandSpec::uniform(1.0, 3.0, 2);
  params.A = Matrix::Ones(3, 2);
  params.P = Matrix::Ones(2, 2);
  params.Sigma = Matrix::Ones(2, 3);
  EXPECT_THROW(pinv_sources(params, Recording{Matrix::Ones(3, 10), 10.0}), NumericalError);
}

TEST(Denoise, AllSourcesSpuriousGivesZero) {
  const GroundTruth gt = mixture(40, 4, 3, 0.01);
  const Recording out = denoise(gt.params(), gt.recording, {0, 1, 2});
  EXPECT_EQ(out.data.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Denoise, EmptySetIsMixedWienerSources) {
  const GroundTruth gt = mixture(41, 4, 3, 0.01);
  const Recording out = denoise(gt.params(), gt.recording, {});
  const Matrix expected = gt.params().A * wiener_sources(gt.params(), gt.recording).data;
  EXPECT_TRUE(out.data == expected);
}

TEST(Denoise, HighSnrSquareMixingKeepsBandLimitedSignal) {
  // 30 dB: per-sensor noise power 1e-3 of the per-sensor signal power
  Rng rng(42);
  SynthSpec spec;
  spec.p = 4;
  spec.q = 4;
  spec.bands = BandSpec::uniform(1.0, 45.0, 8);
  spec.T = 4096;
  spec.fs = 100.0;
  spec.seed = 42;
  spec.spectra = random_powers(rng, 8, 4, 0.5, 2.0);
  spec.noise = Matrix::Constant(8, 4, 1e-3 * spec.spectra.mean());
  const GroundTruth gt = generate(spec);
  const Recording out = denoise(gt.params(), gt.recording, {});
  const Matrix expected = band_limited(gt.recording, gt.bands);
  EXPECT_LT((out.data - expected).norm() / expected.norm(), 0.05);
}

TEST(Denoise, OutOfRangeIndex) {
  const GroundTruth gt = mixture(43, 4, 3, 0.01);
  EXPECT_THROW(denoise(gt.params(), gt.recording, {3}), ConfigError);
  EXPECT_THROW(denoise(gt.params(), gt.recording, {-1}), ConfigError);
}

TEST(Denoise, RemovesPlantedArtifact) {
  const auto scenario = phantom_scenario(0, 20.0);
  const auto &gt = scenario.truth;
  const auto emp = estimate_spectral_covariances(gt.recording, gt.bands);
  FitOptions opts;
  opts.q = gt.A_true.cols();
  const auto fitted = fit(emp, opts);
  const auto match = best_column_match(fitted.params.A, gt.A_true.col(scenario.planted));
  ASSERT_GT(match.cosine, 0.99);
  const Recording cleaned = denoise(fitted.params, gt.recording, {match.index});
  const double before = band_filter(gt.recording, Band{19.0, 21.0}).data.squaredNorm();
  const double after = band_filter(cleaned, Band{19.0, 21.0}).data.squaredNorm();
  EXPECT_GT(10.0 * std::log10(before / after), 20.0);
}
