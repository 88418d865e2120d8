#ifndef RXTRIAGE_RENDER_HPP
#define RXTRIAGE_RENDER_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rxtriage/error.hpp"
#include "rxtriage/png_io.hpp"
#include "rxtriage/spectral.hpp"
#include "rxtriage/util.hpp"

namespace rxtriage {

enum class NormalizationMode { local, global };

inline std::string to_string(NormalizationMode m) { return m == NormalizationMode::local ? "local" : "global"; }

inline NormalizationMode parse_normalization(std::string_view s) {
  if (s == "local") return NormalizationMode::local;
  if (s == "global") return NormalizationMode::global;
  throw Error(ErrorCode::InvalidArgument, "norm must be \"local\" or \"global\", got \"" + std::string(s) + "\"");
}

using Rgb = std::array<std::uint8_t, 3>;

struct ColorStop {
  double position;
  Rgb color;
};

class ColorMap {
 public:
  /// Positions must be strictly increasing from exactly 0 to exactly 1.
  explicit ColorMap(std::vector<ColorStop> stops) : stops_(std::move(stops)) {
    if (stops_.size() < 2) throw Error(ErrorCode::InvalidArgument, "colormap needs at least two stops");
    if (stops_.front().position != 0.0 || stops_.back().position != 1.0) {
      throw Error(ErrorCode::InvalidArgument, "colormap stops must start at 0 and end at 1");
    }
    for (std::size_t i = 1; i < stops_.size(); ++i) {
      if (!(stops_[i].position > stops_[i - 1].position)) {
        throw Error(ErrorCode::InvalidArgument, "colormap stop positions must be strictly increasing");
      }
    }
  }

  /// Dark-to-bright perceptual ramp.
  static ColorMap default_map() {
    return ColorMap({{0.0, {0, 0, 4}},
                     {0.25, {87, 16, 110}},
                     {0.5, {188, 55, 84}},
                     {0.75, {249, 142, 9}},
                     {1.0, {252, 255, 164}}});
  }

  /// {"stops": [{"position": 0.0, "rgb": [0, 0, 4]}, ...]}
  static ColorMap from_json(const nlohmann::json& j) {
    std::vector<ColorStop> stops;
    try {
      for (const auto& s : j.at("stops")) {
        const auto rgb = s.at("rgb").get<std::vector<int>>();
        if (rgb.size() != 3) throw Error(ErrorCode::ParseError, "stop rgb must have 3 entries");
        Rgb color{};
        for (std::size_t c = 0; c < 3; ++c) {
          if (rgb[c] < 0 || rgb[c] > 255) throw Error(ErrorCode::ParseError, "stop rgb entries must be 0..255");
          color[c] = static_cast<std::uint8_t>(rgb[c]);
        }
        stops.push_back({s.at("position").get<double>(), color});
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, std::string("colormap: ") + e.what());
    }
    return ColorMap(std::move(stops));
  }

  static ColorMap load(const std::filesystem::path& path) {
    try {
      return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
  }

  /// Piecewise-linear interpolation, each channel rounded half-up. Inputs
  /// outside [0, 1] are clamped.
  Rgb operator()(double v) const {
    v = std::clamp(v, 0.0, 1.0);
    auto hi = std::upper_bound(stops_.begin(), stops_.end(), v,
                               [](double x, const ColorStop& s) { return x < s.position; });
    if (hi == stops_.end()) return stops_.back().color;
    auto lo = hi - 1;
    const double t = (v - lo->position) / (hi->position - lo->position);
    Rgb out{};
    for (std::size_t c = 0; c < 3; ++c) {
      const double a = lo->color[c];
      const double b = hi->color[c];
      out[c] = static_cast<std::uint8_t>(std::floor(a + t * (b - a) + 0.5));
    }
    return out;
  }

  const std::vector<ColorStop>& stops() const noexcept { return stops_; }

 private:
  std::vector<ColorStop> stops_;
};

/// Maps scores to [0, 1]. Local: min-max over this map (constant maps give
/// all zeros). Global: clamp((s - p01) / (p999 - p01), 0, 1) with the model's
/// training percentiles.
inline std::vector<double> normalize(const NoveltyMap& map, NormalizationMode mode, const BackgroundModel& model) {
  std::vector<double> out(map.scores.size(), 0.0);
  if (map.scores.empty()) return out;
  double lo = 0.0;
  double hi = 0.0;
  if (mode == NormalizationMode::local) {
    const auto [mn, mx] = std::minmax_element(map.scores.begin(), map.scores.end());
    lo = *mn;
    hi = *mx;
  } else {
    if (!model.score_percentiles) {
      throw Error(ErrorCode::MissingPercentiles, "global normalization requires model score percentiles");
    }
    lo = model.score_percentiles->p01;
    hi = model.score_percentiles->p999;
  }
  const double span = hi - lo;
  if (!(span > 0.0)) {
    // Degenerate range: everything at or above the floor in global mode is
    // saturated, everything in a constant local map is zero.
    if (mode == NormalizationMode::global) {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = map.scores[i] > lo ? 1.0 : 0.0;
    }
    return out;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp((map.scores[i] - lo) / span, 0.0, 1.0);
  return out;
}

inline Image8 colorize(std::span<const double> normalized, std::size_t width, std::size_t height,
                       const ColorMap& colormap) {
  if (normalized.size() != width * height) {
    throw Error(ErrorCode::DimensionMismatch, "normalized map size differs from width x height");
  }
  Image8 img{width, height, 3, std::vector<std::uint8_t>(width * height * 3)};
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    const Rgb c = colormap(normalized[i]);
    std::copy(c.begin(), c.end(), img.pixels.begin() + static_cast<std::ptrdiff_t>(i * 3));
  }
  return img;
}

/// normalize -> colorize -> PNG bytes.
inline std::vector<std::uint8_t> render_heatmap(const NoveltyMap& map, NormalizationMode mode,
                                                const BackgroundModel& model,
                                                const ColorMap& colormap = ColorMap::default_map()) {
  return encode_png(colorize(normalize(map, mode, model), map.width, map.height, colormap));
}

}  // namespace rxtriage

#endif  // RXTRIAGE_RENDER_HPP
