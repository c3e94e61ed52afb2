/**
 * @brief Shared value types and error classes for the smica library.
 *
 * Matrices are Eigen dense doubles throughout. Channel-major layout:
 * a recording is p rows (channels) by T columns (samples).
 */
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace smica {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Bad arguments, shapes or configuration. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Input data that cannot be processed (non-finite samples, unparsable files).
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Factorization or convergence failure. The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Half-open frequency interval [lo, hi) in Hz.
struct Band {
  double lo = 0.0;
  double hi = 0.0;

  [[nodiscard]] double center() const { return 0.5 * (lo + hi); }
  [[nodiscard]] double width() const { return hi - lo; }
  [[nodiscard]] bool contains(double f) const { return f >= lo && f < hi; }

  friend bool operator==(const Band &, const Band &) = default;
};

/// Ordered, disjoint list of frequency bands.
class BandSpec {
public:
  BandSpec() = default;
  explicit BandSpec(std::vector<Band> edges) : edges_(std::move(edges)) {
    validate();
  }

  /// `count` equal-width bands tiling [lo, hi).
  static BandSpec uniform(double lo, double hi, std::size_t count) {
    if (count < 2)
      throw ConfigError("uniform bands: need at least 2 bands");
    if (!(lo > 0.0) || !(hi > lo))
      throw ConfigError("uniform bands: need 0 < lo < hi");
    std::vector<Band> edges(count);
    const double step = (hi - lo) / static_cast<double>(count);
    for (std::size_t b = 0; b < count; ++b) {
      edges[b].lo = lo + step * static_cast<double>(b);
      edges[b].hi = (b + 1 == count) ? hi : lo + step * static_cast<double>(b + 1);
    }
    return BandSpec(std::move(edges));
  }

  [[nodiscard]] std::size_t size() const { return edges_.size(); }
  [[nodiscard]] const Band &operator[](std::size_t b) const { return edges_.at(b); }
  [[nodiscard]] const std::vector<Band> &edges() const { return edges_; }
  [[nodiscard]] auto begin() const { return edges_.begin(); }
  [[nodiscard]] auto end() const { return edges_.end(); }

  /// Throws ConfigError unless every band lies within (0, fs/2].
  void check_sampling_rate(double fs) const {
    for (std::size_t b = 0; b < edges_.size(); ++b) {
      if (edges_[b].lo <= 0.0 || edges_[b].hi > 0.5 * fs)
        throw ConfigError("band " + std::to_string(b) + " [" +
                          std::to_string(edges_[b].lo) + ", " +
                          std::to_string(edges_[b].hi) +
                          ") lies outside (0, fs/2] for fs=" + std::to_string(fs));
    }
  }

  /// Keep only the parts of each band within [fmin, fmax); drops empty bands.
  [[nodiscard]] BandSpec clipped(double fmin, double fmax) const {
    std::vector<Band> out;
    for (const auto &band : edges_) {
      Band c{std::max(band.lo, fmin), std::min(band.hi, fmax)};
      if (c.hi > c.lo)
        out.push_back(c);
    }
    return BandSpec(std::move(out));
  }

  friend bool operator==(const BandSpec &, const BandSpec &) = default;

private:
  void validate() const {
    if (edges_.size() < 2)
      throw ConfigError("band spec needs at least 2 bands, got " +
                        std::to_string(edges_.size()));
    for (std::size_t b = 0; b < edges_.size(); ++b) {
      const auto &band = edges_[b];
      if (!std::isfinite(band.lo) || !std::isfinite(band.hi) || !(band.lo < band.hi))
        throw ConfigError("band " + std::to_string(b) + " is empty or invalid");
      if (band.lo <= 0.0)
        throw ConfigError("band " + std::to_string(b) + " starts at or below 0 Hz");
      if (b > 0 && band.lo < edges_[b - 1].hi)
        throw ConfigError("bands " + std::to_string(b - 1) + " and " +
                          std::to_string(b) + " overlap or are out of order");
    }
  }

  std::vector<Band> edges_;
};

/// Multichannel recording: p channels by T samples at sampling rate fs.
struct Recording {
  Matrix data;
  double fs = 1.0;

  [[nodiscard]] Eigen::Index channels() const { return data.rows(); }
  [[nodiscard]] Eigen::Index samples() const { return data.cols(); }

  void validate() const {
    if (data.rows() < 1)
      throw ConfigError("recording has no channels");
    if (data.cols() < 2)
      throw ConfigError("recording needs at least 2 samples");
    if (!(fs > 0.0) || !std::isfinite(fs))
      throw ConfigError("sampling rate must be positive");
    if (!data.allFinite())
      throw DataError("recording contains non-finite samples");
  }
};

/// Per-channel mean removed.
inline Matrix demeaned(const Matrix &x) {
  return x.colwise() - x.rowwise().mean();
}

} // namespace smica
