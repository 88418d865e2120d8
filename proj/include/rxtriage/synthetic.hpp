#ifndef RXTRIAGE_SYNTHETIC_HPP
#define RXTRIAGE_SYNTHETIC_HPP

// Synthetic 6-band archives with correlated Gaussian backgrounds and an
// optional implanted spectral anomaly. Used for tests and demos.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "rxtriage/ingest.hpp"
#include "rxtriage/linalg.hpp"
#include "rxtriage/png_io.hpp"
#include "rxtriage/util.hpp"

namespace rxtriage::synthetic {

struct FilterSpec {
  const char* id;
  double wavelength_nm;
};

inline constexpr std::array<FilterSpec, 6> kLeftFilters{
    {{"L1", 527}, {"L2", 445}, {"L3", 751}, {"L4", 676}, {"L5", 867}, {"L6", 1012}}};
inline constexpr std::array<FilterSpec, 6> kRightFilters{
    {{"R1", 527}, {"R2", 447}, {"R3", 805}, {"R4", 908}, {"R5", 937}, {"R6", 1013}}};

struct ArchiveOptions {
  std::size_t n_sequences = 50;
  std::size_t width = 140;
  std::size_t height = 100;
  std::uint64_t seed = 20240611;
  /// Within-scene per-band standard deviation, in [0, 1] units.
  double band_sigma = 0.03;
  /// Correlation between bands i and j is band_correlation^|i - j|.
  double band_correlation = 0.9;
  /// Per-scene illumination factor drawn from U[1 - b, 1 + b].
  double brightness_spread = 0.25;
  /// Per-scene texture factor drawn from U[lo, hi]; scales the noise.
  double texture_lo = 0.6;
  double texture_hi = 1.6;
  /// Every k-th sequence (1-based) is flagged as a calibration-target scene; 0 disables.
  std::size_t cal_target_every = 0;
  /// Sequence index receiving the anomaly patch, if any.
  std::optional<std::size_t> anomaly_sequence;
  std::size_t patch_size = 5;
  double patch_sigmas = 6.0;
  /// Bands displaced by +patch_sigmas and -patch_sigmas respectively.
  std::size_t patch_band_up = 2;
  std::size_t patch_band_down = 3;
};

struct PatchLocation {
  std::size_t sequence = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t size = 0;

  bool contains(std::size_t r, std::size_t c) const {
    return r >= row && r < row + size && c >= col && c < col + size;
  }
};

struct GeneratedSequence {
  std::string sequence_id;
  Eye eye = Eye::left;
  std::int64_t sol = 0;
  bool cal_target = false;
  Image8 rgb;
  std::vector<Image8> bands;
};

inline const std::array<double, 6>& base_spectrum() {
  static const std::array<double, 6> kSpectrum{0.36, 0.30, 0.44, 0.41, 0.47, 0.50};
  return kSpectrum;
}

inline std::string sequence_id_for(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "mcam%05zu", index + 1);
  return buf;
}

inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
}

/// Generates all sequences in memory. Deterministic for a given seed.
inline std::vector<GeneratedSequence> generate(const ArchiveOptions& opt, std::optional<PatchLocation>* patch = nullptr) {
  constexpr std::size_t n = 6;
  SquareMatrix corr(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      corr(i, j) = std::pow(opt.band_correlation, std::abs(static_cast<double>(i) - static_cast<double>(j)));
  const auto chol = Cholesky::factor(corr);
  const SquareMatrix& l = chol->lower();

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  if (patch) patch->reset();
  std::vector<GeneratedSequence> out;
  const std::size_t count = opt.width * opt.height;
  for (std::size_t s = 0; s < opt.n_sequences; ++s) {
    GeneratedSequence seq;
    seq.sequence_id = sequence_id_for(s);
    seq.eye = Eye::left;
    seq.sol = static_cast<std::int64_t>(100 + s);
    seq.cal_target = opt.cal_target_every != 0 && (s + 1) % opt.cal_target_every == 0;
    const double brightness = 1.0 + opt.brightness_spread * (2.0 * unit(rng) - 1.0);
    const double texture = opt.texture_lo + (opt.texture_hi - opt.texture_lo) * unit(rng);

    std::optional<PatchLocation> here;
    if (opt.anomaly_sequence && *opt.anomaly_sequence == s) {
      const auto r0 = static_cast<std::size_t>(unit(rng) * static_cast<double>(opt.height - opt.patch_size));
      const auto c0 = static_cast<std::size_t>(unit(rng) * static_cast<double>(opt.width - opt.patch_size));
      here = PatchLocation{s, r0, c0, opt.patch_size};
      if (patch) *patch = here;
    }

    seq.rgb = Image8{opt.width, opt.height, 3, std::vector<std::uint8_t>(count * 3)};
    seq.bands.assign(n, Image8{opt.width, opt.height, 1, std::vector<std::uint8_t>(count)});
    std::array<double, n> z{};
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t r = i / opt.width;
      const std::size_t c = i % opt.width;
      for (auto& v : z) v = normal(rng);
      double gray = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        double e = 0.0;
        for (std::size_t j = 0; j <= k; ++j) e += l(k, j) * z[j];
        double v = brightness * base_spectrum()[k] + texture * opt.band_sigma * e;
        if (here && here->contains(r, c)) {
          if (k == opt.patch_band_up) v += opt.patch_sigmas * opt.band_sigma;
          if (k == opt.patch_band_down) v -= opt.patch_sigmas * opt.band_sigma;
        }
        seq.bands[k].pixels[i] = quantize(v);
        gray += v / static_cast<double>(n);
      }
      static constexpr std::array<double, 3> kTint{1.08, 1.0, 0.92};
      for (std::size_t ch = 0; ch < 3; ++ch) {
        seq.rgb.pixels[i * 3 + ch] = quantize(gray * kTint[ch] + 0.01 * normal(rng));
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

/// Writes PNG products and manifest.jsonl into `dir`; returns the manifest path.
inline std::filesystem::path write_archive(const std::filesystem::path& dir, const std::vector<GeneratedSequence>& seqs) {
  std::filesystem::create_directories(dir);
  std::string manifest;
  for (const auto& seq : seqs) {
    const auto& filters = seq.eye == Eye::left ? kLeftFilters : kRightFilters;
    const std::string rgb_name = seq.sequence_id + "_rgb.png";
    write_png(seq.rgb, dir / rgb_name);
    nlohmann::json bands = nlohmann::json::array();
    for (std::size_t k = 0; k < seq.bands.size(); ++k) {
      const std::string name = seq.sequence_id + "_" + filters[k].id + ".png";
      write_png(seq.bands[k], dir / name);
      bands.push_back({{"filter", filters[k].id}, {"wavelength_nm", filters[k].wavelength_nm}, {"path", name}});
    }
    nlohmann::json line = {{"sequence_id", seq.sequence_id}, {"eye", to_string(seq.eye)}, {"sol", seq.sol},
                           {"rgb", rgb_name},           {"bands", bands},             {"cal_target", seq.cal_target}};
    manifest += line.dump() + "\n";
  }
  const auto path = dir / "manifest.jsonl";
  write_file_atomic(path, manifest);
  return path;
}

}  // namespace rxtriage::synthetic

#endif  // RXTRIAGE_SYNTHETIC_HPP
