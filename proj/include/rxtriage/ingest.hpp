#ifndef RXTRIAGE_INGEST_HPP
#define RXTRIAGE_INGEST_HPP

// Archive manifests, product decoding, and cube assembly.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rxtriage/error.hpp"
#include "rxtriage/png_io.hpp"
#include "rxtriage/spectral.hpp"

namespace rxtriage {

inline constexpr std::size_t kNarrowBands = 6;
inline constexpr double kMinWavelengthNm = 400.0;
inline constexpr double kMaxWavelengthNm = 1100.0;
/// Divisor floor for brightness correction: one 8-bit level.
inline constexpr double kBrightnessFloor = 1.0 / 255.0;

enum class Eye { left, right };

inline std::string to_string(Eye eye) { return eye == Eye::left ? "left" : "right"; }

struct BandProduct {
  std::string filter_id;
  double wavelength_nm = 0.0;
  std::filesystem::path path;
};

struct SequenceRecord {
  std::string sequence_id;
  Eye eye = Eye::left;
  std::int64_t sol = 0;
  std::filesystem::path rgb_path;
  std::vector<BandProduct> bands;  // ascending filter index
  bool has_cal_target = false;
  std::size_t width = 0;
  std::size_t height = 0;

  std::vector<double> wavelengths() const {
    std::vector<double> w;
    for (const auto& b : bands) w.push_back(b.wavelength_nm);
    return w;
  }
};

struct ArchiveManifest {
  std::filesystem::path root;
  std::vector<SequenceRecord> entries;

  const SequenceRecord* find(std::string_view sequence_id) const {
    for (const auto& e : entries)
      if (e.sequence_id == sequence_id) return &e;
    return nullptr;
  }
};

namespace detail {

/// Width and height from the IHDR chunk, without decoding pixel data.
inline std::pair<std::size_t, std::size_t> png_dimensions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  std::array<unsigned char, 24> head{};
  in.read(reinterpret_cast<char*>(head.data()), head.size());
  static constexpr unsigned char kSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (in.gcount() != 24 || !std::equal(std::begin(kSig), std::end(kSig), head.begin())) {
    throw Error(ErrorCode::DecodeError, path.filename().string() + ": not a PNG file");
  }
  auto be32 = [&](std::size_t off) {
    return (std::size_t{head[off]} << 24) | (std::size_t{head[off + 1]} << 16) | (std::size_t{head[off + 2]} << 8) |
           std::size_t{head[off + 3]};
  };
  return {be32(16), be32(20)};
}

/// Trailing integer of a filter id ("L3" -> 3), or -1 when absent.
inline long filter_index(const std::string& id) {
  std::size_t pos = id.size();
  while (pos > 0 && std::isdigit(static_cast<unsigned char>(id[pos - 1]))) --pos;
  if (pos == id.size()) return -1;
  return std::stol(id.substr(pos));
}

inline SequenceRecord parse_manifest_line(const nlohmann::json& j, const std::filesystem::path& root) {
  auto fail = [](const std::string& msg) -> Error { return Error(ErrorCode::ParseError, msg); };
  if (!j.is_object()) throw fail("expected a JSON object");
  SequenceRecord rec;
  try {
    rec.sequence_id = j.at("sequence_id").get<std::string>();
    const auto eye = j.at("eye").get<std::string>();
    if (eye == "left") rec.eye = Eye::left;
    else if (eye == "right") rec.eye = Eye::right;
    else throw fail("eye must be \"left\" or \"right\"");
    rec.sol = j.at("sol").get<std::int64_t>();
    if (rec.sol < 0) throw fail("sol must be non-negative");
    rec.rgb_path = root / j.at("rgb").get<std::string>();
    rec.has_cal_target = j.at("cal_target").get<bool>();
    const auto& bands = j.at("bands");
    if (!bands.is_array() || bands.size() != kNarrowBands) {
      throw fail("expected 6 narrow-band products, got " + std::to_string(bands.is_array() ? bands.size() : 0));
    }
    for (const auto& b : bands) {
      BandProduct p;
      p.filter_id = b.at("filter").get<std::string>();
      p.wavelength_nm = b.at("wavelength_nm").get<double>();
      p.path = root / b.at("path").get<std::string>();
      if (!(p.wavelength_nm >= kMinWavelengthNm && p.wavelength_nm <= kMaxWavelengthNm)) {
        throw fail("filter " + p.filter_id + " wavelength outside [400, 1100] nm");
      }
      rec.bands.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw fail(e.what());
  }
  if (rec.sequence_id.empty()) throw fail("sequence_id must be non-empty");

  std::set<long> seen;
  for (const auto& b : rec.bands) {
    const long idx = filter_index(b.filter_id);
    if (idx < 0) throw fail("filter id \"" + b.filter_id + "\" has no filter index");
    if (!seen.insert(idx).second) throw fail("duplicate filter index in \"" + b.filter_id + "\"");
  }
  std::stable_sort(rec.bands.begin(), rec.bands.end(), [](const BandProduct& a, const BandProduct& b) {
    return filter_index(a.filter_id) < filter_index(b.filter_id);
  });
  return rec;
}

}  // namespace detail

/// Parses a JSON-lines manifest. Paths resolve against the manifest's
/// directory; blank lines are skipped. Every referenced product must exist.
inline ArchiveManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open manifest " + path.string());
  ArchiveManifest manifest;
  manifest.root = path.parent_path();
  std::set<std::pair<Eye, std::string>> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char ch) { return std::isspace(ch); })) continue;
    const std::string where = "manifest line " + std::to_string(line_no);
    SequenceRecord rec;
    try {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, e.what());
      }
      rec = detail::parse_manifest_line(j, manifest.root);
      if (!ids.emplace(rec.eye, rec.sequence_id).second) {
        throw Error(ErrorCode::ParseError, "duplicate sequence_id " + rec.sequence_id + " for eye " + to_string(rec.eye));
      }
      for (const auto* p : {&rec.rgb_path}) {
        if (!std::filesystem::exists(*p)) throw Error(ErrorCode::MissingFile, p->string());
      }
      for (const auto& b : rec.bands) {
        if (!std::filesystem::exists(b.path)) throw Error(ErrorCode::MissingFile, b.path.string());
      }
      std::tie(rec.width, rec.height) = detail::png_dimensions(rec.rgb_path);
    } catch (const Error& e) {
      rethrow_with_context(e, where);
    }
    manifest.entries.push_back(std::move(rec));
  }
  return manifest;
}

/// Drops calibration-target sequences; order preserved.
inline ArchiveManifest filter_archive(const ArchiveManifest& manifest) {
  ArchiveManifest out;
  out.root = manifest.root;
  std::copy_if(manifest.entries.begin(), manifest.entries.end(), std::back_inserter(out.entries),
               [](const SequenceRecord& r) { return !r.has_cal_target; });
  return out;
}

/// Decoded products of one sequence as [0, 1] planes (8-bit levels / 255).
struct SequenceProducts {
  std::size_t width = 0;
  std::size_t height = 0;
  std::array<std::vector<double>, 3> rgb;  // R, G, B planes
  std::vector<std::vector<double>> bands;  // one plane per narrow band
  std::vector<double> wavelengths;
};

/// Stacks band planes into a cube. With brightness correction every band
/// value is divided by max(gray, 1/255), gray = (R + G + B) / 3.
inline PixelCube make_cube(const SequenceProducts& products, bool brightness_correct) {
  const std::size_t n = products.bands.size();
  const std::size_t count = products.width * products.height;
  auto plane_ok = [&](const std::vector<double>& p) { return p.size() == count; };
  if (n == 0 || !std::all_of(products.bands.begin(), products.bands.end(), plane_ok) ||
      (brightness_correct && !std::all_of(products.rgb.begin(), products.rgb.end(), plane_ok))) {
    throw Error(ErrorCode::DimensionMismatch, "product planes differ in size");
  }
  PixelCube cube;
  cube.width = products.width;
  cube.height = products.height;
  cube.n_bands = n;
  cube.band_wavelengths = products.wavelengths;
  cube.brightness_corrected = brightness_correct;
  cube.data.resize(count * n);
  for (std::size_t i = 0; i < count; ++i) {
    double divisor = 1.0;
    if (brightness_correct) {
      const double gray = (products.rgb[0][i] + products.rgb[1][i] + products.rgb[2][i]) / 3.0;
      divisor = std::max(gray, kBrightnessFloor);
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double v = products.bands[k][i];
      cube.data[i * n + k] = brightness_correct ? v / divisor : v;
    }
  }
  return cube;
}

inline SequenceProducts load_products(const SequenceRecord& record, bool need_rgb) {
  SequenceProducts out;
  auto check_dims = [&](const Image8& img, const std::filesystem::path& p) {
    if (img.width != out.width || img.height != out.height) {
      throw Error(ErrorCode::DimensionMismatch,
                  p.filename().string() + " is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                      ", expected " + std::to_string(out.width) + "x" + std::to_string(out.height));
    }
  };
  const Image8 rgb = read_png(record.rgb_path);
  if (rgb.channels != 3) throw Error(ErrorCode::DecodeError, record.rgb_path.filename().string() + ": expected RGB");
  out.width = rgb.width;
  out.height = rgb.height;
  const std::size_t count = out.width * out.height;
  if (need_rgb) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      out.rgb[ch].resize(count);
      for (std::size_t i = 0; i < count; ++i) out.rgb[ch][i] = rgb.pixels[i * 3 + ch] / 255.0;
    }
  }
  for (const auto& band : record.bands) {
    const Image8 img = read_png(band.path);
    if (img.channels != 1) throw Error(ErrorCode::DecodeError, band.path.filename().string() + ": expected grayscale");
    check_dims(img, band.path);
    std::vector<double> plane(count);
    for (std::size_t i = 0; i < count; ++i) plane[i] = img.pixels[i] / 255.0;
    out.bands.push_back(std::move(plane));
    out.wavelengths.push_back(band.wavelength_nm);
  }
  return out;
}

/// Decodes a sequence into a raw ([0, 1]) or brightness-corrected cube.
inline PixelCube load_cube(const SequenceRecord& record, bool brightness_correct) {
  try {
    return make_cube(load_products(record, brightness_correct), brightness_correct);
  } catch (const Error& e) {
    rethrow_with_context(e, record.sequence_id);
  }
}

/// Every pixel of every sequence, manifest order then row-major. Each
/// iteration re-decodes from disk and yields the same order.
class ManifestPixelSource {
 public:
  ManifestPixelSource(const ArchiveManifest& manifest, bool brightness_correct)
      : manifest_(&manifest), brightness_correct_(brightness_correct) {}

  template <class F>
  void for_each(F&& f) const {
    for (const auto& rec : manifest_->entries) {
      const PixelCube cube = load_cube(rec, brightness_correct_);
      cube.for_each(f);
    }
  }

  bool brightness_correct() const noexcept { return brightness_correct_; }

 private:
  const ArchiveManifest* manifest_;
  bool brightness_correct_;
};

inline ManifestPixelSource training_pixel_stream(const ArchiveManifest& manifest, bool brightness_correct) {
  return ManifestPixelSource(manifest, brightness_correct);
}

/// Fits the archive-wide background and stamps wavelengths and correction mode.
inline BackgroundModel fit_archive(const ArchiveManifest& manifest, bool brightness_correct, double ridge_lambda) {
  BackgroundModel model = fit_background(training_pixel_stream(manifest, brightness_correct), ridge_lambda);
  model.brightness_corrected = brightness_correct;
  if (!manifest.entries.empty()) model.band_wavelengths = manifest.entries.front().wavelengths();
  return model;
}

}  // namespace rxtriage

#endif  // RXTRIAGE_INGEST_HPP
