#ifndef RXTRIAGE_SPECTRAL_HPP
#define RXTRIAGE_SPECTRAL_HPP

// RX (Reed-Xiaoli) background fitting and pixelwise Mahalanobis scoring.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rxtriage/error.hpp"
#include "rxtriage/linalg.hpp"
#include "rxtriage/stats.hpp"

namespace rxtriage {

/// H x W x n band values, pixel-interleaved: the n values of pixel (r, c)
/// are contiguous at offset (r * width + c) * n_bands.
struct PixelCube {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t n_bands = 0;
  std::vector<double> band_wavelengths;
  std::vector<double> data;
  bool brightness_corrected = false;

  std::size_t pixel_count() const noexcept { return width * height; }

  std::span<const double> pixel(std::size_t r, std::size_t c) const {
    return {data.data() + (r * width + c) * n_bands, n_bands};
  }
  std::span<const double> pixel(std::size_t index) const {
    return {data.data() + index * n_bands, n_bands};
  }

  /// Calls f(span) for every pixel in row-major order. Makes a cube usable as
  /// a pixel source for fitting.
  template <class F>
  void for_each(F&& f) const {
    for (std::size_t i = 0; i < pixel_count(); ++i) f(pixel(i));
  }
};

struct ScorePercentiles {
  double p01 = 0.0;
  double p50 = 0.0;
  double p99 = 0.0;
  double p999 = 0.0;
  double max = 0.0;

  friend bool operator==(const ScorePercentiles&, const ScorePercentiles&) = default;
};

struct BackgroundModel {
  std::size_t n_bands = 0;
  std::vector<double> band_wavelengths;  // metadata; may be empty
  std::vector<double> mu;
  SquareMatrix sigma;      // population covariance (1/N)
  SquareMatrix sigma_inv;  // inverse of sigma + ridge
  double ridge_lambda = 0.0;
  bool brightness_corrected = false;
  std::size_t training_pixel_count = 0;
  std::optional<ScorePercentiles> score_percentiles;

  /// Absolute ridge added to the covariance diagonal before inversion.
  double ridge() const {
    return n_bands == 0 ? 0.0 : ridge_lambda * sigma.trace() / static_cast<double>(n_bands);
  }

  friend bool operator==(const BackgroundModel&, const BackgroundModel&) = default;
};

struct NoveltyMap {
  std::string sequence_id;
  std::string model_fingerprint;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> scores;  // row-major

  double at(std::size_t r, std::size_t c) const { return scores[r * width + c]; }
};

/// Anything that can replay a fixed sequence of equal-length spectra, any
/// number of times, in the same order.
template <class S>
concept PixelSource = requires(const S& s, std::function<void(std::span<const double>)> f) {
  s.for_each(f);
};

/// Flat buffer of N pixels with n bands each.
class BufferPixelSource {
 public:
  BufferPixelSource(std::span<const double> values, std::size_t n_bands)
      : values_(values), n_bands_(n_bands) {}

  template <class F>
  void for_each(F&& f) const {
    for (std::size_t off = 0; off + n_bands_ <= values_.size(); off += n_bands_)
      f(values_.subspan(off, n_bands_));
  }

 private:
  std::span<const double> values_;
  std::size_t n_bands_;
};

/// (x - mu)^T sigma_inv (x - mu). Clamped at zero so rounding in a badly
/// conditioned quadratic form never yields a negative distance.
inline double rx_score(std::span<const double> pixel, const BackgroundModel& model) {
  const std::size_t n = model.n_bands;
  if (pixel.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "pixel has " + std::to_string(pixel.size()) +
                                                  " bands, model expects " + std::to_string(n));
  }
  // Up to 16 bands on the stack; larger band counts fall back to the heap.
  double stack_buf[16];
  std::vector<double> heap_buf;
  double* d = stack_buf;
  if (n > 16) {
    heap_buf.resize(n);
    d = heap_buf.data();
  }
  for (std::size_t i = 0; i < n; ++i) d[i] = pixel[i] - model.mu[i];
  double q = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = model.sigma_inv.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += row[j] * d[j];
    q += d[i] * s;
  }
  return q > 0.0 ? q : 0.0;
}

namespace detail {

inline ScorePercentiles percentiles_of(std::vector<double> scores) {
  std::sort(scores.begin(), scores.end());
  return ScorePercentiles{
      .p01 = nearest_rank(scores, kP01),
      .p50 = nearest_rank(scores, kP50),
      .p99 = nearest_rank(scores, kP99),
      .p999 = nearest_rank(scores, kP999),
      .max = scores.back(),
  };
}

}  // namespace detail

/// Fits mean, population covariance and regularized inverse over `source`.
///
/// Three passes: mean, covariance about the mean, then scoring every training
/// pixel for the stored percentiles. Accumulation is sequential in double so
/// repeated fits over the same source are bitwise identical.
template <PixelSource S>
BackgroundModel fit_background(const S& source, double ridge_lambda) {
  if (!(ridge_lambda >= 0.0) || !std::isfinite(ridge_lambda)) {
    throw Error(ErrorCode::InvalidArgument, "ridge_lambda must be finite and >= 0");
  }

  std::size_t n = 0;
  std::size_t count = 0;
  std::vector<double> sum;
  source.for_each([&](std::span<const double> x) {
    if (count == 0) {
      n = x.size();
      if (n == 0) throw Error(ErrorCode::DimensionMismatch, "pixel vectors must be non-empty");
      sum.assign(n, 0.0);
    } else if (x.size() != n) {
      throw Error(ErrorCode::DimensionMismatch, "pixel " + std::to_string(count) + " has " +
                                                    std::to_string(x.size()) + " bands, expected " +
                                                    std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(x[i])) {
        throw Error(ErrorCode::NonFiniteInput,
                    "non-finite value in pixel " + std::to_string(count) + ", band " + std::to_string(i));
      }
      sum[i] += x[i];
    }
    ++count;
  });
  if (count <= n || count == 0) {
    throw Error(ErrorCode::TooFewPixels, "need more than " + std::to_string(n) + " pixels, got " +
                                             std::to_string(count));
  }

  BackgroundModel model;
  model.n_bands = n;
  model.ridge_lambda = ridge_lambda;
  model.training_pixel_count = count;
  model.mu.resize(n);
  const double inv_count = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < n; ++i) model.mu[i] = sum[i] * inv_count;

  SquareMatrix comoment(n);
  std::vector<double> d(n);
  std::size_t seen = 0;
  source.for_each([&](std::span<const double> x) {
    if (x.size() != n) throw Error(ErrorCode::DimensionMismatch, "pixel source changed between passes");
    for (std::size_t i = 0; i < n; ++i) d[i] = x[i] - model.mu[i];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) comoment(i, j) += d[i] * d[j];
    ++seen;
  });
  if (seen != count) throw Error(ErrorCode::InvalidArgument, "pixel source is not re-iterable");

  model.sigma = SquareMatrix(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = comoment(i, j) / static_cast<double>(count);
      model.sigma(i, j) = v;
      model.sigma(j, i) = v;
    }

  SquareMatrix regularized = model.sigma;
  const double ridge = model.ridge();
  for (std::size_t i = 0; i < n; ++i) regularized(i, i) += ridge;
  auto chol = Cholesky::factor(regularized);
  if (!chol) {
    std::ostringstream msg;
    msg << "regularized covariance is not positive definite (ridge_lambda = " << ridge_lambda
        << "); raise ridge_lambda";
    throw Error(ErrorCode::SingularCovariance, msg.str());
  }
  model.sigma_inv = chol->inverse();

  std::vector<double> scores;
  scores.reserve(count);
  source.for_each([&](std::span<const double> x) { scores.push_back(rx_score(x, model)); });
  model.score_percentiles = detail::percentiles_of(std::move(scores));
  return model;
}

/// Per-image background: the cube is its own training set.
inline BackgroundModel fit_local(const PixelCube& cube, double ridge_lambda) {
  BackgroundModel model = fit_background(cube, ridge_lambda);
  model.band_wavelengths = cube.band_wavelengths;
  model.brightness_corrected = cube.brightness_corrected;
  return model;
}

/// Scores every pixel. The returned map has empty sequence_id and
/// model_fingerprint; callers that know them fill them in.
inline NoveltyMap score_cube(const PixelCube& cube, const BackgroundModel& model) {
  if (cube.n_bands != model.n_bands) {
    throw Error(ErrorCode::DimensionMismatch, "cube has " + std::to_string(cube.n_bands) +
                                                  " bands, model expects " + std::to_string(model.n_bands));
  }
  if (cube.brightness_corrected != model.brightness_corrected) {
    throw Error(ErrorCode::CorrectionModeMismatch,
                std::string("cube is ") + (cube.brightness_corrected ? "brightness-corrected" : "raw") +
                    " but model was fit on " + (model.brightness_corrected ? "brightness-corrected" : "raw") +
                    " data");
  }
  NoveltyMap map;
  map.width = cube.width;
  map.height = cube.height;
  map.scores.resize(cube.pixel_count());
  for (std::size_t i = 0; i < map.scores.size(); ++i) map.scores[i] = rx_score(cube.pixel(i), model);
  return map;
}

}  // namespace rxtriage

#endif  // RXTRIAGE_SPECTRAL_HPP
