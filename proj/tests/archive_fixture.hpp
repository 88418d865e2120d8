#ifndef RXTRIAGE_TEST_ARCHIVE_FIXTURE_HPP
#define RXTRIAGE_TEST_ARCHIVE_FIXTURE_HPP

#include <filesystem>
#include <optional>

#include "rxtriage/ingest.hpp"
#include "rxtriage/model_io.hpp"
#include "rxtriage/pipeline.hpp"
#include "rxtriage/synthetic.hpp"
#include "test_support.hpp"

namespace rxtriage::testing {

/// Small synthetic archive on disk with a fitted model and a score database.
struct SmallArchive {
  TempDir dir{"rxtriage_archive"};
  std::filesystem::path manifest_path;
  std::filesystem::path model_path;
  std::filesystem::path db_path;
  std::optional<synthetic::PatchLocation> patch;
  ArchiveManifest manifest;
  BackgroundModel model;

  explicit SmallArchive(std::size_t n_sequences = 6, std::size_t width = 24, std::size_t height = 18,
                        bool brightness_correct = false) {
    synthetic::ArchiveOptions opt;
    opt.n_sequences = n_sequences;
    opt.width = width;
    opt.height = height;
    opt.anomaly_sequence = 2;
    opt.patch_size = 3;
    manifest_path = synthetic::write_archive(dir.path() / "archive", synthetic::generate(opt, &patch));
    manifest = load_manifest(manifest_path);
    model = fit_archive(manifest, brightness_correct, 1e-6);
    model_path = dir / "model.json";
    save_model(model, model_path);
    db_path = dir / "scores.jsonl";
    ScoreDatabase db;
    db.scores = score_archive(manifest, model).scores;
    save_score_db(db, db_path);
  }
};

}  // namespace rxtriage::testing

#endif  // RXTRIAGE_TEST_ARCHIVE_FIXTURE_HPP
