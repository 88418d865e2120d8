#ifndef RXTRIAGE_PIPELINE_HPP
#define RXTRIAGE_PIPELINE_HPP

// Batch scoring of a manifest against a model.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rxtriage/error.hpp"
#include "rxtriage/ingest.hpp"
#include "rxtriage/model_io.hpp"
#include "rxtriage/score_map_io.hpp"
#include "rxtriage/spectral.hpp"
#include "rxtriage/triage.hpp"

namespace rxtriage {

struct SkippedSequence {
  std::string sequence_id;
  std::string reason;
};

struct ArchiveScoring {
  std::vector<SequenceScore> scores;  // manifest order
  std::vector<SkippedSequence> skipped;
};

/// Loads, scores and aggregates one sequence.
inline NoveltyMap score_sequence(const SequenceRecord& record, const BackgroundModel& model,
                                 const std::string& fingerprint) {
  const PixelCube cube = load_cube(record, model.brightness_corrected);
  NoveltyMap map;
  try {
    map = score_cube(cube, model);
  } catch (const Error& e) {
    rethrow_with_context(e, record.sequence_id);
  }
  map.sequence_id = record.sequence_id;
  map.model_fingerprint = fingerprint;
  return map;
}

/// Scores every entry; failures are collected, not fatal. When `maps_dir` is
/// set each map is also written as <maps_dir>/<sequence_id>.rxm.
inline ArchiveScoring score_archive(const ArchiveManifest& manifest, const BackgroundModel& model,
                                    const std::optional<std::filesystem::path>& maps_dir = std::nullopt) {
  const std::string fingerprint = model_fingerprint(model);
  ArchiveScoring out;
  for (const auto& rec : manifest.entries) {
    try {
      const NoveltyMap map = score_sequence(rec, model, fingerprint);
      if (maps_dir) write_score_map(map, *maps_dir / (rec.sequence_id + ".rxm"));
      out.scores.push_back(aggregate(map));
    } catch (const Error& e) {
      out.skipped.push_back({rec.sequence_id, e.what()});
    }
  }
  return out;
}

}  // namespace rxtriage

#endif  // RXTRIAGE_PIPELINE_HPP
