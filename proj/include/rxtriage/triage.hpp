#ifndef RXTRIAGE_TRIAGE_HPP
#define RXTRIAGE_TRIAGE_HPP

// Per-sequence aggregation, ranking, rank comparison and the score database.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "rxtriage/error.hpp"
#include "rxtriage/spectral.hpp"
#include "rxtriage/stats.hpp"
#include "rxtriage/util.hpp"

namespace rxtriage {

struct PixelIndex {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const PixelIndex&, const PixelIndex&) = default;
};

struct SequenceScore {
  std::string sequence_id;
  std::string model_fingerprint;
  double max = 0.0;
  double mean = 0.0;
  double variance = 0.0;  // population
  double p99 = 0.0;       // nearest rank
  std::size_t pixel_count = 0;
  PixelIndex argmax;

  friend bool operator==(const SequenceScore&, const SequenceScore&) = default;
};

inline SequenceScore aggregate(const NoveltyMap& map) {
  if (map.scores.empty()) throw Error(ErrorCode::EmptyMap, "novelty map " + map.sequence_id + " has no pixels");
  SequenceScore s;
  s.sequence_id = map.sequence_id;
  s.model_fingerprint = map.model_fingerprint;
  s.pixel_count = map.scores.size();

  std::size_t best = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < map.scores.size(); ++i) {
    sum += map.scores[i];
    if (map.scores[i] > map.scores[best]) best = i;
  }
  const double n = static_cast<double>(map.scores.size());
  s.max = map.scores[best];
  s.argmax = {best / map.width, best % map.width};
  s.mean = sum / n;
  double sq = 0.0;
  for (double v : map.scores) sq += (v - s.mean) * (v - s.mean);
  s.variance = sq / n;

  std::vector<double> sorted = map.scores;
  std::sort(sorted.begin(), sorted.end());
  s.p99 = nearest_rank(sorted, kP99);
  return s;
}

enum class RankKey { max, mean, variance, p99 };
enum class SortOrder { desc, asc };

inline std::string to_string(RankKey k) {
  switch (k) {
    case RankKey::max: return "max";
    case RankKey::mean: return "mean";
    case RankKey::variance: return "variance";
    case RankKey::p99: return "p99";
  }
  return "max";
}

inline RankKey parse_rank_key(std::string_view s) {
  if (s == "max") return RankKey::max;
  if (s == "mean") return RankKey::mean;
  if (s == "variance") return RankKey::variance;
  if (s == "p99") return RankKey::p99;
  throw Error(ErrorCode::InvalidArgument, "unknown sort key \"" + std::string(s) + "\"");
}

inline SortOrder parse_sort_order(std::string_view s) {
  if (s == "desc") return SortOrder::desc;
  if (s == "asc") return SortOrder::asc;
  throw Error(ErrorCode::InvalidArgument, "order must be \"desc\" or \"asc\", got \"" + std::string(s) + "\"");
}

inline double key_value(const SequenceScore& s, RankKey key) {
  switch (key) {
    case RankKey::max: return s.max;
    case RankKey::mean: return s.mean;
    case RankKey::variance: return s.variance;
    case RankKey::p99: return s.p99;
  }
  return s.max;
}

/// Sorts by key; equal keys fall back to ascending sequence_id regardless of
/// order, so the result is a total order independent of input order.
inline std::vector<SequenceScore> rank(std::vector<SequenceScore> scores, RankKey key = RankKey::max,
                                       SortOrder order = SortOrder::desc) {
  if (!scores.empty()) {
    const auto& fp = scores.front().model_fingerprint;
    for (const auto& s : scores) {
      if (s.model_fingerprint != fp) {
        throw Error(ErrorCode::MixedModels, "scores come from models " + fp + " and " + s.model_fingerprint);
      }
    }
  }
  std::stable_sort(scores.begin(), scores.end(), [&](const SequenceScore& a, const SequenceScore& b) {
    const double va = key_value(a, key);
    const double vb = key_value(b, key);
    if (va != vb) return order == SortOrder::desc ? va > vb : va < vb;
    return a.sequence_id < b.sequence_id;
  });
  return scores;
}

/// Spearman's rho between two strict orderings of the same id set.
inline double spearman(const std::vector<std::string>& rank_a, const std::vector<std::string>& rank_b) {
  const std::size_t m = rank_a.size();
  if (m != rank_b.size()) throw Error(ErrorCode::IdSetMismatch, "rankings have different lengths");
  std::unordered_map<std::string_view, std::size_t> pos_a;
  for (std::size_t i = 0; i < m; ++i) {
    if (!pos_a.emplace(rank_a[i], i).second) throw Error(ErrorCode::IdSetMismatch, "duplicate id " + rank_a[i]);
  }
  std::unordered_set<std::string_view> seen_b;
  std::uint64_t sum_d2 = 0;
  for (std::size_t i = 0; i < m; ++i) {
    auto it = pos_a.find(rank_b[i]);
    if (it == pos_a.end()) throw Error(ErrorCode::IdSetMismatch, "id " + rank_b[i] + " missing from first ranking");
    if (!seen_b.insert(rank_b[i]).second) throw Error(ErrorCode::IdSetMismatch, "duplicate id " + rank_b[i]);
    const std::uint64_t d = it->second > i ? it->second - i : i - it->second;
    sum_d2 += d * d;
  }
  if (m < 2) throw Error(ErrorCode::TooShort, "need at least 2 ids");
  const double mm = static_cast<double>(m);
  return 1.0 - 6.0 * static_cast<double>(sum_d2) / (mm * (mm * mm - 1.0));
}

// ---------------------------------------------------------------------------
// Dispositions and the JSON-lines score database.

enum class DispositionState { unreviewed, reviewed, flagged };

inline constexpr std::size_t kMaxNoteLength = 2000;

inline std::string to_string(DispositionState s) {
  switch (s) {
    case DispositionState::unreviewed: return "unreviewed";
    case DispositionState::reviewed: return "reviewed";
    case DispositionState::flagged: return "flagged";
  }
  return "unreviewed";
}

inline std::optional<DispositionState> parse_disposition_state(std::string_view s) {
  if (s == "unreviewed") return DispositionState::unreviewed;
  if (s == "reviewed") return DispositionState::reviewed;
  if (s == "flagged") return DispositionState::flagged;
  return std::nullopt;
}

struct Disposition {
  std::string sequence_id;
  DispositionState state = DispositionState::unreviewed;
  std::optional<std::string> note;
  std::string updated_at;  // UTC, see utc_timestamp()

  friend bool operator==(const Disposition&, const Disposition&) = default;
};

inline nlohmann::json to_json(const SequenceScore& s) {
  return {{"kind", "score"},
          {"sequence_id", s.sequence_id},
          {"model_fingerprint", s.model_fingerprint},
          {"max", s.max},
          {"mean", s.mean},
          {"variance", s.variance},
          {"p99", s.p99},
          {"pixel_count", s.pixel_count},
          {"argmax", {s.argmax.row, s.argmax.col}}};
}

inline nlohmann::json to_json(const Disposition& d) {
  return {{"kind", "disposition"},
          {"sequence_id", d.sequence_id},
          {"state", to_string(d.state)},
          {"note", d.note ? nlohmann::json(*d.note) : nlohmann::json(nullptr)},
          {"updated_at", d.updated_at}};
}

/// In-memory view of a score database: scores in file order (a later line
/// for the same id replaces the earlier one in place), and the latest
/// disposition per id.
struct ScoreDatabase {
  std::vector<SequenceScore> scores;
  std::map<std::string, Disposition> dispositions;

  void upsert_score(SequenceScore s) {
    auto it = std::find_if(scores.begin(), scores.end(),
                           [&](const SequenceScore& x) { return x.sequence_id == s.sequence_id; });
    if (it != scores.end()) *it = std::move(s);
    else scores.push_back(std::move(s));
  }

  /// Last write wins by updated_at; equal timestamps resolve to the later call.
  void upsert_disposition(Disposition d) {
    auto it = dispositions.find(d.sequence_id);
    if (it == dispositions.end()) dispositions.emplace(d.sequence_id, std::move(d));
    else if (d.updated_at >= it->second.updated_at) it->second = std::move(d);
  }

  DispositionState state_of(const std::string& id) const {
    auto it = dispositions.find(id);
    return it == dispositions.end() ? DispositionState::unreviewed : it->second.state;
  }
};

inline Disposition disposition_from_json(const nlohmann::json& j) {
  Disposition d;
  d.sequence_id = j.at("sequence_id").get<std::string>();
  auto state = parse_disposition_state(j.at("state").get<std::string>());
  if (!state) throw Error(ErrorCode::ParseError, "invalid disposition state");
  d.state = *state;
  if (auto it = j.find("note"); it != j.end() && !it->is_null()) d.note = it->get<std::string>();
  if (d.note && d.note->size() > kMaxNoteLength) throw Error(ErrorCode::ParseError, "note exceeds 2000 characters");
  d.updated_at = j.at("updated_at").get<std::string>();
  return d;
}

inline SequenceScore score_from_json(const nlohmann::json& j) {
  SequenceScore s;
  s.sequence_id = j.at("sequence_id").get<std::string>();
  s.model_fingerprint = j.at("model_fingerprint").get<std::string>();
  s.max = j.at("max").get<double>();
  s.mean = j.at("mean").get<double>();
  s.variance = j.at("variance").get<double>();
  s.p99 = j.at("p99").get<double>();
  s.pixel_count = j.at("pixel_count").get<std::size_t>();
  const auto& am = j.at("argmax");
  if (!am.is_array() || am.size() != 2) throw Error(ErrorCode::ParseError, "argmax must be [row, col]");
  s.argmax = {am[0].get<std::size_t>(), am[1].get<std::size_t>()};
  return s;
}

/// A missing file is an empty database.
inline ScoreDatabase load_score_db(const std::filesystem::path& path) {
  ScoreDatabase db;
  if (!std::filesystem::exists(path)) return db;
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "score") db.upsert_score(score_from_json(j));
      else if (kind == "disposition") db.upsert_disposition(disposition_from_json(j));
      else throw Error(ErrorCode::ParseError, "unknown kind \"" + kind + "\"");
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, path.filename().string() + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      rethrow_with_context(e, path.filename().string() + " line " + std::to_string(line_no));
    }
  }
  return db;
}

inline std::string serialize_score_db(const ScoreDatabase& db) {
  std::string out;
  for (const auto& s : db.scores) out += to_json(s).dump() + "\n";
  for (const auto& [id, d] : db.dispositions) out += to_json(d).dump() + "\n";
  return out;
}

inline void save_score_db(const ScoreDatabase& db, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_score_db(db));
}

/// Appends one disposition line. Single writer only.
inline void append_disposition(const Disposition& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot append to " + path.string());
  out << to_json(d).dump() << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

// ---------------------------------------------------------------------------
// Ranking CSV: sequence_id,rank,key,value

struct RankRow {
  std::string sequence_id;
  std::size_t rank = 0;  // 1-based position in the full ordering
  RankKey key = RankKey::max;
  double value = 0.0;
};

inline std::vector<RankRow> rank_rows(const std::vector<SequenceScore>& ranked, RankKey key) {
  std::vector<RankRow> rows;
  rows.reserve(ranked.size());
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    rows.push_back({ranked[i].sequence_id, i + 1, key, key_value(ranked[i], key)});
  }
  return rows;
}

/// The first `top` and last `bottom` rows, without duplicates when they overlap.
inline std::vector<RankRow> top_bottom(const std::vector<RankRow>& rows, std::optional<std::size_t> top,
                                       std::optional<std::size_t> bottom) {
  if (!top && !bottom) return rows;
  const std::size_t n = rows.size();
  const std::size_t head = std::min(top.value_or(0), n);
  const std::size_t tail_start = n - std::min(bottom.value_or(0), n);
  std::vector<RankRow> out(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(head));
  for (std::size_t i = std::max(head, tail_start); i < n; ++i) out.push_back(rows[i]);
  return out;
}

inline std::string rank_csv(const std::vector<RankRow>& rows) {
  std::string out = "sequence_id,rank,key,value\n";
  for (const auto& r : rows) {
    out += r.sequence_id + "," + std::to_string(r.rank) + "," + to_string(r.key) + "," + format_double(r.value) + "\n";
  }
  return out;
}

/// Ids from a ranking CSV, ordered by the rank column.
inline std::vector<std::string> read_rank_csv_ids(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::pair<std::size_t, std::string>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "sequence_id,rank,key,value") {
        throw Error(ErrorCode::ParseError, path.filename().string() + ": unexpected header \"" + line + "\"");
      }
      continue;
    }
    std::stringstream ss(line);
    std::string id, rank_text;
    if (!std::getline(ss, id, ',') || !std::getline(ss, rank_text, ',') || id.empty()) {
      throw Error(ErrorCode::ParseError, path.filename().string() + " line " + std::to_string(line_no));
    }
    std::size_t parsed = 0;
    std::size_t rank_value = 0;
    try {
      rank_value = std::stoul(rank_text, &parsed);
    } catch (const std::exception&) {
      parsed = 0;
    }
    if (parsed != rank_text.size() || parsed == 0) {
      throw Error(ErrorCode::ParseError, path.filename().string() + " line " + std::to_string(line_no) + ": bad rank");
    }
    rows.emplace_back(rank_value, id);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> ids;
  for (auto& r : rows) ids.push_back(std::move(r.second));
  return ids;
}

}  // namespace rxtriage

#endif  // RXTRIAGE_TRIAGE_HPP
