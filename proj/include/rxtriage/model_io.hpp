#ifndef RXTRIAGE_MODEL_IO_HPP
#define RXTRIAGE_MODEL_IO_HPP

#include <filesystem>
#include <string>

#include <json.hpp>

#include "rxtriage/error.hpp"
#include "rxtriage/spectral.hpp"
#include "rxtriage/util.hpp"

namespace rxtriage {

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json matrix_to_json(const SquareMatrix& m) {
  auto rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.size(); ++r) {
    auto row = m.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

inline nlohmann::json model_to_json(const BackgroundModel& m) {
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["n_bands"] = m.n_bands;
  j["band_wavelengths"] = m.band_wavelengths;
  j["brightness_corrected"] = m.brightness_corrected;
  j["ridge_lambda"] = m.ridge_lambda;
  j["training_pixel_count"] = m.training_pixel_count;
  j["mu"] = m.mu;
  j["sigma"] = matrix_to_json(m.sigma);
  j["sigma_inv"] = matrix_to_json(m.sigma_inv);
  if (m.score_percentiles) {
    const auto& p = *m.score_percentiles;
    j["score_percentiles"] = {{"p01", p.p01}, {"p50", p.p50}, {"p99", p.p99}, {"p999", p.p999}, {"max", p.max}};
  } else {
    j["score_percentiles"] = nullptr;
  }
  return j;
}

/// Sorted keys, no whitespace. nlohmann::json objects are key-ordered and
/// doubles are printed with round-trip precision, so dump() is canonical.
inline std::string canonical_model_json(const BackgroundModel& m) { return model_to_json(m).dump(); }

inline std::string model_fingerprint(const BackgroundModel& m) { return sha256_hex(canonical_model_json(m)); }

namespace detail {

inline SquareMatrix matrix_from_json(const nlohmann::json& j, std::size_t n, const char* name) {
  if (!j.is_array() || j.size() != n) {
    throw Error(ErrorCode::ParseError, std::string(name) + " must be an " + std::to_string(n) + "x" +
                                           std::to_string(n) + " array");
  }
  SquareMatrix m(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (!j[r].is_array() || j[r].size() != n) {
      throw Error(ErrorCode::ParseError, std::string(name) + " row " + std::to_string(r) + " has wrong length");
    }
    for (std::size_t c = 0; c < n; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace detail

inline BackgroundModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion) {
      throw Error(ErrorCode::ParseError, "unsupported model format_version " + j.at("format_version").dump());
    }
    BackgroundModel m;
    m.n_bands = j.at("n_bands").get<std::size_t>();
    m.band_wavelengths = j.at("band_wavelengths").get<std::vector<double>>();
    m.brightness_corrected = j.at("brightness_corrected").get<bool>();
    m.ridge_lambda = j.at("ridge_lambda").get<double>();
    m.training_pixel_count = j.at("training_pixel_count").get<std::size_t>();
    m.mu = j.at("mu").get<std::vector<double>>();
    if (m.mu.size() != m.n_bands) throw Error(ErrorCode::ParseError, "mu length differs from n_bands");
    m.sigma = detail::matrix_from_json(j.at("sigma"), m.n_bands, "sigma");
    m.sigma_inv = detail::matrix_from_json(j.at("sigma_inv"), m.n_bands, "sigma_inv");
    if (auto it = j.find("score_percentiles"); it != j.end() && !it->is_null()) {
      m.score_percentiles = ScorePercentiles{
          .p01 = it->at("p01").get<double>(),
          .p50 = it->at("p50").get<double>(),
          .p99 = it->at("p99").get<double>(),
          .p999 = it->at("p999").get<double>(),
          .max = it->at("max").get<double>(),
      };
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("model file: ") + e.what());
  }
}

inline void save_model(const BackgroundModel& m, const std::filesystem::path& path) {
  write_file_atomic(path, model_to_json(m).dump(2) + "\n");
}

inline BackgroundModel load_model(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace rxtriage

#endif  // RXTRIAGE_MODEL_IO_HPP
