#ifndef RXTRIAGE_SERVICE_HPP
#define RXTRIAGE_SERVICE_HPP

// HTTP API over a fitted model, a manifest and a score database.

#include <charconv>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "rxtriage/error.hpp"
#include "rxtriage/ingest.hpp"
#include "rxtriage/model_io.hpp"
#include "rxtriage/pipeline.hpp"
#include "rxtriage/render.hpp"
#include "rxtriage/triage.hpp"
#include "rxtriage/util.hpp"

namespace rxtriage {

inline constexpr int kApiVersion = 1;

struct ServiceConfig {
  std::string host = "0.0.0.0";
  int port = 8080;
  std::filesystem::path model_path;
  std::filesystem::path manifest_path;
  std::filesystem::path score_db_path;
  std::optional<std::filesystem::path> static_dir;
  std::size_t cache_capacity = 128;

  void validate() const {
    if (port < 1 || port > 65535) throw Error(ErrorCode::InvalidArgument, "port must be in [1, 65535]");
    validate_paths();
  }

  void validate_paths() const {
    for (const auto* p : {&model_path, &manifest_path, &score_db_path}) {
      if (!std::filesystem::exists(*p)) throw Error(ErrorCode::MissingFile, p->string());
    }
    if (static_dir && !std::filesystem::is_directory(*static_dir)) {
      throw Error(ErrorCode::MissingFile, static_dir->string());
    }
  }
};

/// Thread-safe LRU of encoded PNGs.
class PngCache {
 public:
  explicit PngCache(std::size_t capacity) : capacity_(capacity) {}

  std::shared_ptr<const std::string> get(const std::string& key) {
    std::lock_guard lock(mu_);
    auto it = index_.find(key);
    if (it == index_.end()) return nullptr;
    order_.splice(order_.begin(), order_, it->second);
    return it->second->second;
  }

  void put(const std::string& key, std::shared_ptr<const std::string> value) {
    if (capacity_ == 0) return;
    std::lock_guard lock(mu_);
    if (auto it = index_.find(key); it != index_.end()) {
      it->second->second = std::move(value);
      order_.splice(order_.begin(), order_, it->second);
      return;
    }
    order_.emplace_front(key, std::move(value));
    index_[key] = order_.begin();
    while (order_.size() > capacity_) {
      index_.erase(order_.back().first);
      order_.pop_back();
    }
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return order_.size();
  }

 private:
  using Entry = std::pair<std::string, std::shared_ptr<const std::string>>;
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::list<Entry> order_;
  std::unordered_map<std::string, std::list<Entry>::iterator> index_;
};

class TriageService {
 public:
  explicit TriageService(ServiceConfig config)
      : config_((config.validate_paths(), std::move(config))),
        model_(load_model(config_.model_path)),
        fingerprint_(model_fingerprint(model_)),
        manifest_(load_manifest(config_.manifest_path)),
        db_(load_score_db(config_.score_db_path)),
        cache_(config_.cache_capacity) {
    register_routes();
  }

  TriageService(const TriageService&) = delete;
  TriageService& operator=(const TriageService&) = delete;

  /// Binds the listening socket and returns the port. Port 0 (tests only)
  /// picks a free port.
  int bind() {
    if (config_.port == 0) return server_.bind_to_any_port(config_.host);
    if (!server_.bind_to_port(config_.host, config_.port)) {
      throw Error(ErrorCode::IoError, "cannot bind " + config_.host + ":" + std::to_string(config_.port));
    }
    return config_.port;
  }

  /// Blocks serving requests until stop().
  void run() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

  const std::string& fingerprint() const noexcept { return fingerprint_; }
  const PngCache& cache() const noexcept { return cache_; }

  /// The ranked listing behind GET /api/sequences.
  nlohmann::json list_sequences(RankKey key, SortOrder order, std::size_t offset, std::optional<std::size_t> limit) const {
    std::vector<SequenceScore> scores;
    std::map<std::string, Disposition> dispositions;
    {
      std::shared_lock lock(db_mu_);
      scores = db_.scores;
      dispositions = db_.dispositions;
    }
    const auto ranked = rank(std::move(scores), key, order);
    auto items = nlohmann::json::array();
    const std::size_t end = limit ? std::min(ranked.size(), offset + *limit) : ranked.size();
    for (std::size_t i = offset; i < end; ++i) items.push_back(item_json(ranked[i], dispositions));
    return items;
  }

 private:
  nlohmann::json item_json(const SequenceScore& s, const std::map<std::string, Disposition>& dispositions) const {
    nlohmann::json item = {
        {"sequence_id", s.sequence_id},
        {"model_fingerprint", s.model_fingerprint},
        {"scores", {{"max", s.max}, {"mean", s.mean}, {"variance", s.variance}, {"p99", s.p99}}},
        {"argmax", {s.argmax.row, s.argmax.col}},
        {"pixel_count", s.pixel_count},
    };
    if (const auto* rec = manifest_.find(s.sequence_id)) {
      item["sol"] = rec->sol;
      item["eye"] = to_string(rec->eye);
    } else {
      item["sol"] = nullptr;
      item["eye"] = nullptr;
    }
    auto it = dispositions.find(s.sequence_id);
    item["disposition"] = to_string(it == dispositions.end() ? DispositionState::unreviewed : it->second.state);
    return item;
  }

  static void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json; charset=utf-8");
  }

  static void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"v", kApiVersion}, {"error", message}});
  }

  static std::optional<std::size_t> parse_count(const std::string& text) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
    return v;
  }

  void send_png_file(httplib::Response& res, const std::filesystem::path& path) const {
    try {
      res.set_content(read_file(path), "image/png");
      res.status = 200;
    } catch (const Error&) {
      send_error(res, 404, "product not available");
    }
  }

  std::shared_ptr<const std::string> heatmap(const SequenceRecord& rec, NormalizationMode mode) {
    const std::string key = rec.sequence_id + "|" + to_string(mode) + "|" + fingerprint_;
    if (auto hit = cache_.get(key)) return hit;
    const NoveltyMap map = score_sequence(rec, model_, fingerprint_);
    const auto bytes = render_heatmap(map, mode, model_);
    auto value = std::make_shared<const std::string>(bytes.begin(), bytes.end());
    cache_.put(key, value);
    return value;
  }

  void register_routes() {
    server_.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server_.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
    server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string message = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::MixedModels) message = "score database mixes results from several models";
      } catch (...) {
      }
      send_error(res, 500, message);
    });

    server_.Get("/api/model", [this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json body = {{"v", kApiVersion},
                             {"n_bands", model_.n_bands},
                             {"band_wavelengths", model_.band_wavelengths},
                             {"ridge_lambda", model_.ridge_lambda},
                             {"brightness_corrected", model_.brightness_corrected},
                             {"training_pixel_count", model_.training_pixel_count},
                             {"fingerprint", fingerprint_}};
      body["score_percentiles"] = model_to_json(model_)["score_percentiles"];
      send_json(res, 200, body);
    });

    server_.Get("/api/sequences", [this](const httplib::Request& req, httplib::Response& res) {
      RankKey key = RankKey::max;
      SortOrder order = SortOrder::desc;
      std::size_t offset = 0;
      std::optional<std::size_t> limit;
      try {
        if (req.has_param("sort")) key = parse_rank_key(req.get_param_value("sort"));
        if (req.has_param("order")) order = parse_sort_order(req.get_param_value("order"));
      } catch (const Error& e) {
        return send_error(res, 400, e.what());
      }
      if (req.has_param("offset")) {
        auto v = parse_count(req.get_param_value("offset"));
        if (!v) return send_error(res, 400, "offset must be a non-negative integer");
        offset = *v;
      }
      if (req.has_param("limit")) {
        limit = parse_count(req.get_param_value("limit"));
        if (!limit) return send_error(res, 400, "limit must be a non-negative integer");
      }
      send_json(res, 200, list_sequences(key, order, offset, limit));
    });

    server_.Get(R"(/api/sequences/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      std::shared_lock lock(db_mu_);
      for (const auto& s : db_.scores) {
        if (s.sequence_id == id) {
          auto item = item_json(s, db_.dispositions);
          item["v"] = kApiVersion;
          return send_json(res, 200, item);
        }
      }
      send_error(res, 404, "unknown sequence " + id);
    });

    server_.Get(R"(/api/sequences/([^/]+)/heatmap\.png)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto* rec = manifest_.find(req.matches[1].str());
      if (!rec) return send_error(res, 404, "unknown sequence");
      NormalizationMode mode = NormalizationMode::local;
      try {
        if (req.has_param("norm")) mode = parse_normalization(req.get_param_value("norm"));
      } catch (const Error& e) {
        return send_error(res, 400, e.what());
      }
      const auto png = heatmap(*rec, mode);
      res.set_header("X-Model-Fingerprint", fingerprint_);
      res.set_content(*png, "image/png");
    });

    server_.Get(R"(/api/sequences/([^/]+)/band/([^/]+)\.png)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto* rec = manifest_.find(req.matches[1].str());
      if (!rec) return send_error(res, 404, "unknown sequence");
      const auto k = parse_count(req.matches[2].str());
      if (!k || *k < 1 || *k > rec->bands.size()) {
        return send_error(res, 400, "band index must be 1.." + std::to_string(rec->bands.size()));
      }
      send_png_file(res, rec->bands[*k - 1].path);
    });

    server_.Get(R"(/api/sequences/([^/]+)/rgb\.png)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto* rec = manifest_.find(req.matches[1].str());
      if (!rec) return send_error(res, 404, "unknown sequence");
      send_png_file(res, rec->rgb_path);
    });

    server_.Post(R"(/api/sequences/([^/]+)/disposition)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      if (!manifest_.find(id)) return send_error(res, 404, "unknown sequence " + id);
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception&) {
        return send_error(res, 400, "body must be JSON");
      }
      if (!body.is_object() || !body.contains("state") || !body["state"].is_string()) {
        return send_error(res, 400, "state is required");
      }
      const auto state = parse_disposition_state(body["state"].get<std::string>());
      if (!state) return send_error(res, 400, "state must be unreviewed, reviewed or flagged");
      Disposition d{id, *state, std::nullopt, {}};
      if (body.contains("note") && !body["note"].is_null()) {
        if (!body["note"].is_string()) return send_error(res, 400, "note must be a string");
        d.note = body["note"].get<std::string>();
        if (d.note->size() > kMaxNoteLength) return send_error(res, 413, "note exceeds 2000 characters");
      }
      {
        std::unique_lock lock(db_mu_);
        d.updated_at = utc_timestamp();
        append_disposition(d, config_.score_db_path);
        db_.upsert_disposition(d);
      }
      auto out = to_json(d);
      out.erase("kind");
      out["v"] = kApiVersion;
      send_json(res, 200, out);
    });

    if (config_.static_dir) server_.set_mount_point("/", config_.static_dir->string());
  }

  ServiceConfig config_;
  const BackgroundModel model_;
  const std::string fingerprint_;
  const ArchiveManifest manifest_;
  mutable std::shared_mutex db_mu_;
  ScoreDatabase db_;
  PngCache cache_;
  httplib::Server server_;
};

}  // namespace rxtriage

#endif  // RXTRIAGE_SERVICE_HPP
