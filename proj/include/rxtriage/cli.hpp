#ifndef RXTRIAGE_CLI_HPP
#define RXTRIAGE_CLI_HPP

// Batch front door: fit, score, rank, render, spearman, serve.
//
// Exit codes: 0 ok, 1 I/O, 2 validation, 3 partial (some sequences skipped).

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rxtriage/error.hpp"
#include "rxtriage/ingest.hpp"
#include "rxtriage/model_io.hpp"
#include "rxtriage/pipeline.hpp"
#include "rxtriage/render.hpp"
#include "rxtriage/service.hpp"
#include "rxtriage/triage.hpp"
#include "rxtriage/util.hpp"

namespace rxtriage::cli {

enum ExitCode : int { kOk = 0, kIo = 1, kValidation = 2, kPartial = 3 };

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoError:
    case ErrorCode::MissingFile:
    case ErrorCode::EncodeError:
      return kIo;
    default:
      return kValidation;
  }
}

struct FitArgs {
  std::string manifest;
  std::string out;
  bool brightness_correct = false;
  double lambda = 1e-6;
  bool local_per_image = false;
};

struct ScoreArgs {
  std::string model;
  std::string manifest;
  std::string scores_out;
  std::string maps_dir;
};

struct RankArgs {
  std::string scores;
  std::string key = "max";
  std::optional<std::size_t> top;
  std::optional<std::size_t> bottom;
  std::string csv;
};

struct RenderArgs {
  std::string model;
  std::string manifest;
  std::string sequence;
  std::string norm = "local";
  std::string out;
  std::string colormap;
};

struct SpearmanArgs {
  std::string a;
  std::string b;
};

inline int run_fit(const FitArgs& args, std::ostream& out, std::ostream& err) {
  const ArchiveManifest manifest = filter_archive(load_manifest(args.manifest));
  if (args.local_per_image) {
    std::filesystem::create_directories(args.out);
    for (const auto& rec : manifest.entries) {
      BackgroundModel model;
      try {
        model = fit_local(load_cube(rec, args.brightness_correct), args.lambda);
      } catch (const Error& e) {
        rethrow_with_context(e, rec.sequence_id);
      }
      save_model(model, std::filesystem::path(args.out) / (rec.sequence_id + ".json"));
      out << rec.sequence_id << " N=" << model.training_pixel_count << " n=" << model.n_bands
          << " lambda=" << format_double(model.ridge_lambda) << " fingerprint=" << model_fingerprint(model) << "\n";
    }
    err << "fit " << manifest.entries.size() << " per-image models into " << args.out << "\n";
    return kOk;
  }
  const BackgroundModel model = fit_archive(manifest, args.brightness_correct, args.lambda);
  save_model(model, args.out);
  out << "N=" << model.training_pixel_count << "\n"
      << "n=" << model.n_bands << "\n"
      << "lambda=" << format_double(model.ridge_lambda) << "\n"
      << "fingerprint=" << model_fingerprint(model) << "\n";
  return kOk;
}

inline int run_score(const ScoreArgs& args, std::ostream& out, std::ostream& err) {
  const BackgroundModel model = load_model(args.model);
  const ArchiveManifest manifest = filter_archive(load_manifest(args.manifest));
  if (manifest.entries.empty()) {
    err << "error: manifest has no sequences to score\n";
    return kValidation;
  }
  if (model.n_bands != kNarrowBands) {
    err << "error: model has " << model.n_bands << " bands, archive sequences have " << kNarrowBands << "\n";
    return kValidation;
  }
  std::optional<std::filesystem::path> maps_dir;
  if (!args.maps_dir.empty()) {
    maps_dir = args.maps_dir;
    std::filesystem::create_directories(*maps_dir);
  }
  const ArchiveScoring result = score_archive(manifest, model, maps_dir);

  // Existing dispositions survive a rescore; old scores are replaced.
  ScoreDatabase db;
  if (std::filesystem::exists(args.scores_out)) db.dispositions = load_score_db(args.scores_out).dispositions;
  db.scores = result.scores;
  save_score_db(db, args.scores_out);

  for (const auto& s : result.skipped) err << "skipped " << s.sequence_id << ": " << s.reason << "\n";
  out << "scored=" << result.scores.size() << "\n"
      << "skipped=" << result.skipped.size() << "\n"
      << "fingerprint=" << model_fingerprint(model) << "\n";
  return result.skipped.empty() ? kOk : kPartial;
}

inline int run_rank(const RankArgs& args, std::ostream& out, std::ostream&) {
  const RankKey key = parse_rank_key(args.key);
  const ScoreDatabase db = load_score_db(args.scores);
  const auto rows = top_bottom(rank_rows(rank(db.scores, key), key), args.top, args.bottom);
  const std::string csv = rank_csv(rows);
  if (!args.csv.empty()) write_file_atomic(args.csv, csv);
  out << csv;
  return kOk;
}

inline int run_render(const RenderArgs& args, std::ostream& out, std::ostream& err) {
  const BackgroundModel model = load_model(args.model);
  const ArchiveManifest manifest = load_manifest(args.manifest);
  const NormalizationMode mode = parse_normalization(args.norm);
  const ColorMap colormap = args.colormap.empty() ? ColorMap::default_map() : ColorMap::load(args.colormap);
  const auto* rec = manifest.find(args.sequence);
  if (!rec) {
    err << "error: unknown sequence " << args.sequence << "\n";
    return kValidation;
  }
  const NoveltyMap map = score_sequence(*rec, model, model_fingerprint(model));
  const auto png = render_heatmap(map, mode, model, colormap);
  write_file_atomic(args.out, std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
  out << "wrote " << args.out << " sha256=" << sha256_hex(png) << "\n";
  return kOk;
}

inline int run_spearman(const SpearmanArgs& args, std::ostream& out, std::ostream&) {
  const double rho = spearman(read_rank_csv_ids(args.a), read_rank_csv_ids(args.b));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", rho);
  out << buf << "\n";
  return kOk;
}

namespace detail {
inline TriageService* g_running_service = nullptr;
inline void stop_on_signal(int) {
  if (g_running_service) g_running_service->stop();
}
}  // namespace detail

inline int run_serve(const ServiceConfig& config, std::ostream& out, std::ostream&) {
  config.validate();
  TriageService service(config);
  const int port = service.bind();
  out << "listening on " << config.host << ":" << port << " model " << service.fingerprint() << std::endl;
  detail::g_running_service = &service;
  std::signal(SIGINT, detail::stop_on_signal);
  std::signal(SIGTERM, detail::stop_on_signal);
  service.run();
  detail::g_running_service = nullptr;
  return kOk;
}

/// Parses argv and runs one subcommand. Library errors become exit codes
/// with the message on `err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Multispectral RX novelty triage"};
  app.require_subcommand(1);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit an RX background model over a manifest");
  fit_cmd->add_option("--manifest", fit.manifest, "JSON-lines archive manifest")->required();
  fit_cmd->add_option("--out", fit.out, "Model JSON path (directory with --local-per-image)")->required();
  fit_cmd->add_flag("--brightness-correct", fit.brightness_correct, "Divide bands by RGB grayscale");
  fit_cmd->add_option("--lambda", fit.lambda, "Relative ridge coefficient")->capture_default_str();
  fit_cmd->add_flag("--local-per-image", fit.local_per_image, "Fit one model per sequence");

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Score every sequence and write the score database");
  score_cmd->add_option("--model", score.model)->required();
  score_cmd->add_option("--manifest", score.manifest)->required();
  score_cmd->add_option("--scores-out", score.scores_out)->required();
  score_cmd->add_option("--maps-dir", score.maps_dir, "Write raw RXM1 score maps here");

  RankArgs rank_args;
  std::size_t top = 0;
  std::size_t bottom = 0;
  auto* rank_cmd = app.add_subcommand("rank", "Rank sequences from a score database");
  rank_cmd->add_option("--scores", rank_args.scores)->required();
  rank_cmd->add_option("--key", rank_args.key)->check(CLI::IsMember({"max", "mean", "variance", "p99"}))->capture_default_str();
  auto* top_opt = rank_cmd->add_option("--top", top);
  auto* bottom_opt = rank_cmd->add_option("--bottom", bottom);
  rank_cmd->add_option("--csv", rank_args.csv, "Write the ranking CSV here");

  RenderArgs render;
  auto* render_cmd = app.add_subcommand("render", "Render one heat map PNG");
  render_cmd->add_option("--model", render.model)->required();
  render_cmd->add_option("--manifest", render.manifest)->required();
  render_cmd->add_option("--sequence", render.sequence)->required();
  render_cmd->add_option("--norm", render.norm)->check(CLI::IsMember({"local", "global"}))->capture_default_str();
  render_cmd->add_option("--out", render.out)->required();
  render_cmd->add_option("--colormap", render.colormap, "Colormap JSON overriding the default stops");

  SpearmanArgs sp;
  auto* sp_cmd = app.add_subcommand("spearman", "Spearman rank correlation of two ranking CSVs");
  sp_cmd->add_option("--a", sp.a)->required();
  sp_cmd->add_option("--b", sp.b)->required();

  ServiceConfig serve;
  std::string static_dir;
  std::string model_path, manifest_path, scores_path;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
  serve_cmd->add_option("--port", serve.port)->capture_default_str();
  serve_cmd->add_option("--host", serve.host)->capture_default_str();
  serve_cmd->add_option("--model", model_path)->required();
  serve_cmd->add_option("--manifest", manifest_path)->required();
  serve_cmd->add_option("--scores", scores_path)->required();
  serve_cmd->add_option("--static-dir", static_dir);
  serve_cmd->add_option("--cache-capacity", serve.cache_capacity)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*fit_cmd) return run_fit(fit, out, err);
    if (*score_cmd) return run_score(score, out, err);
    if (*rank_cmd) {
      if (*top_opt) rank_args.top = top;
      if (*bottom_opt) rank_args.bottom = bottom;
      return run_rank(rank_args, out, err);
    }
    if (*render_cmd) return run_render(render, out, err);
    if (*sp_cmd) return run_spearman(sp, out, err);
    if (*serve_cmd) {
      serve.model_path = model_path;
      serve.manifest_path = manifest_path;
      serve.score_db_path = scores_path;
      if (!static_dir.empty()) serve.static_dir = static_dir;
      return run_serve(serve, out, err);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  }
  return kValidation;
}

}  // namespace rxtriage::cli

#endif  // RXTRIAGE_CLI_HPP
