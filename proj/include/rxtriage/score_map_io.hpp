#ifndef RXTRIAGE_SCORE_MAP_IO_HPP
#define RXTRIAGE_SCORE_MAP_IO_HPP

// Raw score maps: "RXM1", u32 width, u32 height (little-endian), then
// width * height little-endian IEEE-754 doubles in row-major order.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>

#include "rxtriage/error.hpp"
#include "rxtriage/spectral.hpp"
#include "rxtriage/util.hpp"

namespace rxtriage {

static_assert(std::endian::native == std::endian::little, "score map I/O assumes a little-endian host");

inline constexpr std::array<char, 4> kScoreMapMagic{'R', 'X', 'M', '1'};

inline std::string encode_score_map(const NoveltyMap& map) {
  if (map.scores.size() != map.width * map.height) {
    throw Error(ErrorCode::DimensionMismatch, "score count differs from width x height");
  }
  std::string out(kScoreMapMagic.begin(), kScoreMapMagic.end());
  const auto w = static_cast<std::uint32_t>(map.width);
  const auto h = static_cast<std::uint32_t>(map.height);
  out.append(reinterpret_cast<const char*>(&w), 4);
  out.append(reinterpret_cast<const char*>(&h), 4);
  out.append(reinterpret_cast<const char*>(map.scores.data()), map.scores.size() * sizeof(double));
  return out;
}

inline NoveltyMap decode_score_map(std::string_view bytes) {
  if (bytes.size() < 12 || !std::equal(kScoreMapMagic.begin(), kScoreMapMagic.end(), bytes.begin())) {
    throw Error(ErrorCode::DecodeError, "not an RXM1 score map");
  }
  std::uint32_t w = 0;
  std::uint32_t h = 0;
  std::memcpy(&w, bytes.data() + 4, 4);
  std::memcpy(&h, bytes.data() + 8, 4);
  const std::size_t count = std::size_t{w} * h;
  if (bytes.size() != 12 + count * sizeof(double)) throw Error(ErrorCode::DecodeError, "score map size mismatch");
  NoveltyMap map;
  map.width = w;
  map.height = h;
  map.scores.resize(count);
  std::memcpy(map.scores.data(), bytes.data() + 12, count * sizeof(double));
  return map;
}

inline void write_score_map(const NoveltyMap& map, const std::filesystem::path& path) {
  write_file_atomic(path, encode_score_map(map));
}

inline NoveltyMap read_score_map(const std::filesystem::path& path) {
  NoveltyMap map = decode_score_map(read_file(path));
  map.sequence_id = path.stem().string();
  return map;
}

}  // namespace rxtriage

#endif  // RXTRIAGE_SCORE_MAP_IO_HPP
