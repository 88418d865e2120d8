// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rxtriage/ingest.hpp"
#include "rxtriage/model_io.hpp"
#include "rxtriage/pipeline.hpp"
#include "rxtriage/render.hpp"
#include "rxtriage/synthetic.hpp"
#include "rxtriage/triage.hpp"
#include "test_support.hpp"

using namespace rxtriage;
using rxtriage::testing::DenseReference;
using rxtriage::testing::TempDir;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

struct Criterion {
  std::string name;
  double budget_seconds;  // 0 = no runtime requirement
  std::function<void(Outcome&)> body;
};

double relative(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-300); }

/// Relative with a unit floor on the denominator, for quantities that can be
/// near zero (individual pixel scores).
double relative_floor1(double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); }

int run_process(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string sh(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

// -- 1 ---------------------------------------------------------------------
void rx_identities(Outcome& o) {
  std::mt19937_64 rng(101);
  const auto pixels = rxtriage::testing::random_dataset(rng, 64, 5);
  const auto flat = rxtriage::testing::flatten(pixels);
  const auto fitted = fit_background(BufferPixelSource(flat, 5), 0.0);
  const double at_mu = rx_score(fitted.mu, fitted);
  o.require(std::abs(at_mu) < 1e-12, "rx_score(mu) = " + format_double(at_mu));

  const auto ident = rxtriage::testing::model_from_moments({0, 0}, SquareMatrix::identity(2));
  const double s25 = rx_score(std::vector<double>{3, 4}, ident);
  o.require(s25 == 25.0, "identity case gave " + format_double(s25));

  SquareMatrix sigma(2);
  sigma(0, 0) = 2; sigma(0, 1) = 1; sigma(1, 0) = 1; sigma(1, 1) = 2;
  const auto corr = rxtriage::testing::model_from_moments({1, 2}, sigma);
  const double s2 = rx_score(std::vector<double>{2, 4}, corr);
  o.require(std::abs(s2 - 2.0) < 1e-12, "2x2 case gave " + format_double(s2));
  o.detail << "rx(mu)=" << at_mu << " identity=" << s25 << " 2x2=" << format_double(s2);
}

// -- 2 ---------------------------------------------------------------------
void training_mean_identity(Outcome& o) {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<std::size_t> pick_n(2, 6);
  std::uniform_int_distribution<std::size_t> pick_count(10, 5000);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = pick_n(rng);
    const std::size_t count = pick_count(rng);
    const auto flat = rxtriage::testing::flatten(rxtriage::testing::random_dataset(rng, count, n));
    const BufferPixelSource src(flat, n);
    const auto model = fit_background(src, 0.0);
    double sum = 0.0;
    src.for_each([&](std::span<const double> x) { sum += rx_score(x, model); });
    const double mean = sum / static_cast<double>(count);
    worst = std::max(worst, relative(mean, static_cast<double>(n)));
  }
  o.require(worst <= 1e-6, "worst relative deviation " + format_double(worst));
  o.detail << "200 datasets, worst |mean-n|/n = " << worst;
}

// -- 3 ---------------------------------------------------------------------
void oracle_equivalence(Outcome& o) {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<std::size_t> pick_n(1, 6);
  double worst = 0.0;
  std::size_t checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = pick_n(rng);
    std::uniform_int_distribution<std::size_t> pick_count(n + 1, 100);
    const auto pixels = rxtriage::testing::random_dataset(rng, pick_count(rng), n);
    const auto flat = rxtriage::testing::flatten(pixels);
    const auto model = fit_background(BufferPixelSource(flat, n), 0.0);
    const DenseReference ref(pixels, 0.0);
    for (const auto& p : pixels) {
      worst = std::max(worst, relative_floor1(rx_score(p, model), ref.score(p)));
      ++checked;
    }
  }
  o.require(worst <= 1e-9, "worst relative error " + format_double(worst));
  o.detail << checked << " pixel scores over 100 datasets, worst rel err = " << worst;
}

// -- 4 ---------------------------------------------------------------------
void affine_invariance(Outcome& o) {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<std::size_t> pick_n(2, 6);
  std::uniform_int_distribution<std::size_t> pick_count(50, 2000);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = pick_n(rng);
    const auto train = rxtriage::testing::random_dataset(rng, pick_count(rng), n);
    const auto test = rxtriage::testing::random_dataset(rng, 50, n);
    // Random well-conditioned invertible A (diagonally dominant) and offset b.
    std::vector<std::vector<double>> a(n, std::vector<double>(n));
    std::vector<double> b(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) a[i][j] = 0.5 * unif(rng);
      a[i][i] = (unif(rng) < 0 ? -1.0 : 1.0) * (static_cast<double>(n) + 2.0 * std::abs(unif(rng)));
      b[i] = 10.0 * unif(rng);
    }
    auto transform = [&](const std::vector<std::vector<double>>& xs) {
      std::vector<std::vector<double>> out(xs.size(), std::vector<double>(n));
      for (std::size_t k = 0; k < xs.size(); ++k)
        for (std::size_t i = 0; i < n; ++i) {
          double s = b[i];
          for (std::size_t j = 0; j < n; ++j) s += a[i][j] * xs[k][j];
          out[k][i] = s;
        }
      return out;
    };
    const auto train_t = transform(train);
    const auto test_t = transform(test);
    const auto flat = rxtriage::testing::flatten(train);
    const auto flat_t = rxtriage::testing::flatten(train_t);
    const auto m = fit_background(BufferPixelSource(flat, n), 0.0);
    const auto m_t = fit_background(BufferPixelSource(flat_t, n), 0.0);
    for (std::size_t k = 0; k < test.size(); ++k) {
      worst = std::max(worst, relative_floor1(rx_score(test_t[k], m_t), rx_score(test[k], m)));
    }
    for (std::size_t k = 0; k < train.size(); ++k) {
      worst = std::max(worst, relative_floor1(rx_score(train_t[k], m_t), rx_score(train[k], m)));
    }
  }
  o.require(worst <= 1e-6, "worst relative change " + format_double(worst));
  o.detail << "100 random affine maps, worst rel change = " << worst;
}

// -- 5 ---------------------------------------------------------------------
void brightness_invariance(Outcome& o) {
  std::mt19937_64 rng(505);
  constexpr std::size_t w = 64, h = 48, count = w * h;
  std::uniform_real_distribution<double> level(0.08, 1.0);
  SequenceProducts base;
  base.width = w;
  base.height = h;
  for (auto& plane : base.rgb) {
    plane.resize(count);
    for (auto& v : plane) v = level(rng);
  }
  base.bands.assign(6, std::vector<double>(count));
  for (auto& plane : base.bands)
    for (auto& v : plane) v = level(rng);
  const PixelCube reference = make_cube(base, true);

  double worst_exact_ulps = 0.0;
  double worst_quant_ratio = 0.0;
  bool half_bitwise = true;
  for (double c : {0.5, 0.9}) {
    // Unquantized scaling.
    SequenceProducts scaled = base;
    for (auto& plane : scaled.rgb)
      for (auto& v : plane) v *= c;
    for (auto& plane : scaled.bands)
      for (auto& v : plane) v *= c;
    const PixelCube cube = make_cube(scaled, true);
    if (c == 0.5) half_bitwise = half_bitwise && cube.data == reference.data;
    for (std::size_t i = 0; i < cube.data.size(); ++i) {
      const double ulps = std::abs(cube.data[i] - reference.data[i]) /
                          (std::numeric_limits<double>::epsilon() * std::abs(reference.data[i]));
      worst_exact_ulps = std::max(worst_exact_ulps, ulps);
    }

    // 8-bit quantization after scaling, bounded by the propagated rounding
    // error: |b'/g' - b/g| <= q (1 + b/g) / g' with q = 0.5/255.
    SequenceProducts quant = scaled;
    auto q8 = [](double v) { return static_cast<double>(std::lround(v * 255.0)) / 255.0; };
    for (auto& plane : quant.rgb)
      for (auto& v : plane) v = q8(v);
    for (auto& plane : quant.bands)
      for (auto& v : plane) v = q8(v);
    const PixelCube qcube = make_cube(quant, true);
    constexpr double q = 0.5 / 255.0;
    for (std::size_t i = 0; i < count; ++i) {
      const double gq = std::max((quant.rgb[0][i] + quant.rgb[1][i] + quant.rgb[2][i]) / 3.0, kBrightnessFloor);
      for (std::size_t k = 0; k < 6; ++k) {
        const double exact = reference.data[i * 6 + k];
        const double bound = q * (1.0 + exact) / gq;
        const double dev = std::abs(qcube.data[i * 6 + k] - exact);
        worst_quant_ratio = std::max(worst_quant_ratio, dev / bound);
      }
    }
  }
  // "Exact" for c = 0.5 is bitwise; for c = 0.9 the scaled inputs are
  // themselves rounded, so exactness holds to IEEE rounding (a few ulp).
  o.require(half_bitwise, "c=0.5 corrected cube not bitwise identical");
  o.require(worst_exact_ulps <= 4.0, "unquantized deviation " + format_double(worst_exact_ulps) + " ulp");
  o.require(worst_quant_ratio <= 1.0, "quantized deviation exceeds bound (ratio " + format_double(worst_quant_ratio) + ")");
  o.detail << "c=0.5 bitwise=" << (half_bitwise ? "yes" : "no") << ", worst unquantized dev = " << worst_exact_ulps
           << " ulp, worst quantized dev/bound = " << worst_quant_ratio;
}

// -- 6 ---------------------------------------------------------------------
void synthetic_triage(Outcome& o) {
  TempDir dir("rxtriage_accept_triage");
  synthetic::ArchiveOptions opt;  // 50 x 140 x 100 x 6, correlated bands
  opt.anomaly_sequence = 17;
  std::optional<synthetic::PatchLocation> patch;
  const auto manifest_path = synthetic::write_archive(dir.path(), synthetic::generate(opt, &patch));
  const auto manifest = filter_archive(load_manifest(manifest_path));
  const auto model = fit_archive(manifest, false, 1e-6);
  const auto scoring = score_archive(manifest, model);
  o.require(scoring.skipped.empty(), "sequences skipped during scoring");
  const std::string target = synthetic::sequence_id_for(*opt.anomaly_sequence);

  const auto by_max = rank(scoring.scores, RankKey::max);
  const auto by_mean = rank(scoring.scores, RankKey::mean);
  const bool a = by_max.front().sequence_id == target;
  std::size_t mean_pos = 0;
  while (by_mean[mean_pos].sequence_id != target) ++mean_pos;
  const bool c = by_mean.front().sequence_id != target;

  // (b) Top 0.1% of the anomalous sequence's own pixel scores.
  const auto map = score_sequence(*manifest.find(target), model, model_fingerprint(model));
  std::vector<std::size_t> order(map.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return map.scores[i] > map.scores[j]; });
  const std::size_t top_k = nearest_rank_index(PerTenThousand{10}, map.scores.size()) + 1;  // ceil(0.001 N)
  std::size_t in_top = 0;
  for (std::size_t i = 0; i < top_k; ++i)
    if (patch->contains(order[i] / map.width, order[i] % map.width)) ++in_top;
  const std::size_t patch_pixels = patch->size * patch->size;
  std::size_t above_archive_p999 = 0;
  for (std::size_t r = 0; r < map.height; ++r)
    for (std::size_t col = 0; col < map.width; ++col)
      if (patch->contains(r, col) && map.at(r, col) > model.score_percentiles->p999) ++above_archive_p999;

  o.require(a, "(a) anomalous sequence ranked #" + std::to_string(1 + [&] {
              std::size_t p = 0;
              while (by_max[p].sequence_id != target) ++p;
              return p;
            }()) + " under key=max");
  o.require(in_top >= 20, "(b) " + std::to_string(in_top) + " of " + std::to_string(patch_pixels) +
                              " patch pixels in the top " + std::to_string(top_k) +
                              " pixels (0.1% of " + std::to_string(map.scores.size()) +
                              "); 20 cannot fit in " + std::to_string(top_k) + " slots");
  o.require(c, "(c) anomalous sequence ranked #1 under key=mean");
  o.detail << "(a) max-rank #1=" << by_max.front().sequence_id << " target=" << target << "; (b) " << in_top << "/"
           << patch_pixels << " patch pixels in top " << top_k << " (" << above_archive_p999 << "/" << patch_pixels
           << " above archive p999); (c) mean-rank of target = #" << (mean_pos + 1);
}

// -- 7 ---------------------------------------------------------------------
void rendering_determinism(Outcome& o) {
  rxtriage::testing::TempDir dir("rxtriage_accept_render");
  synthetic::ArchiveOptions opt;
  opt.n_sequences = 4;
  opt.anomaly_sequence = 1;
  const auto manifest = synthetic::write_archive(dir / "archive", synthetic::generate(opt));
  const auto model_path = dir / "model.json";
  save_model(fit_archive(filter_archive(load_manifest(manifest)), false, 1e-6), model_path);
  const std::string cli = RXTRIAGE_CLI_PATH;
  for (const char* norm : {"local", "global"}) {
    std::string hashes[2];
    for (int run = 0; run < 2; ++run) {
      const auto out = dir / ("h_" + std::string(norm) + std::to_string(run) + ".png");
      const int code = run_process(cli + " render --model " + sh(model_path) + " --manifest " + sh(manifest) +
                                   " --sequence mcam00002 --norm " + norm + " --out " + sh(out));
      o.require(code == 0, std::string("render process exit ") + std::to_string(code));
      hashes[run] = sha256_hex(read_file(out));
    }
    o.require(hashes[0] == hashes[1], std::string("SHA-256 differs for norm=") + norm);
    o.detail << norm << " sha256=" << hashes[0].substr(0, 16) << "... ";
  }
  const auto cm = ColorMap::default_map();
  o.require(cm(0.0) == Rgb{0, 0, 4}, "endpoint 0");
  o.require(cm(1.0) == Rgb{252, 255, 164}, "endpoint 1");
  o.require(cm(0.5) == Rgb{188, 55, 84}, "mid stop");
  o.detail << "stops exact";
}

// -- 8 ---------------------------------------------------------------------
void spearman_cases(Outcome& o) {
  const std::vector<std::string> ids{"a", "b", "c", "d", "e"};
  const std::vector<std::string> rev{"e", "d", "c", "b", "a"};
  const double same = spearman(ids, ids);
  const double reversed = spearman(ids, rev);
  const double derived = spearman({"x", "y", "z"}, {"x", "z", "y"});
  o.require(same == 1.0, "identity");
  o.require(reversed == -1.0, "reversal");
  o.require(derived == 0.5, "3-element case");
  o.detail << "identity=" << same << " reversal=" << reversed << " derived=" << derived;
}

// -- 9 ---------------------------------------------------------------------
void pipeline_determinism(Outcome& o) {
  TempDir dir("rxtriage_accept_pipeline");
  synthetic::ArchiveOptions opt;
  opt.n_sequences = 12;
  opt.anomaly_sequence = 4;
  opt.cal_target_every = 5;
  const auto manifest = synthetic::write_archive(dir / "archive", synthetic::generate(opt));
  const std::string cli = RXTRIAGE_CLI_PATH;
  std::string outputs[2][3];
  for (int run = 0; run < 2; ++run) {
    const auto run_dir = dir / ("run" + std::to_string(run));
    std::filesystem::create_directories(run_dir);
    const auto model = run_dir / "model.json";
    const auto db = run_dir / "scores.jsonl";
    const auto csv = run_dir / "rank.csv";
    o.require(run_process(cli + " fit --manifest " + sh(manifest) + " --out " + sh(model)) == 0, "fit failed");
    o.require(run_process(cli + " score --model " + sh(model) + " --manifest " + sh(manifest) + " --scores-out " + sh(db)) == 0,
              "score failed");
    o.require(run_process(cli + " rank --scores " + sh(db) + " --key max --csv " + sh(csv)) == 0, "rank failed");
    outputs[run][0] = read_file(model);
    outputs[run][1] = read_file(db);
    outputs[run][2] = read_file(csv);
  }
  const char* names[] = {"model JSON", "score DB", "rank CSV"};
  for (int k = 0; k < 3; ++k) {
    o.require(!outputs[0][k].empty() && outputs[0][k] == outputs[1][k], std::string(names[k]) + " differs");
    o.detail << names[k] << " sha256=" << sha256_hex(outputs[0][k]).substr(0, 12) << " ";
  }
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"RX identities", 0.0, rx_identities},
      {"Training-mean identity", 5.0, training_mean_identity},
      {"Oracle equivalence", 5.0, oracle_equivalence},
      {"Affine invariance", 5.0, affine_invariance},
      {"Brightness-correction invariance", 5.0, brightness_invariance},
      {"Synthetic triage end-to-end", 30.0, synthetic_triage},
      {"Rendering determinism", 0.0, rendering_determinism},
      {"Spearman", 0.0, spearman_cases},
      {"Pipeline determinism", 0.0, pipeline_determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.body(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_seconds > 0.0 && secs > c.budget_seconds) {
      o.pass = false;
      o.detail << " [runtime " << secs << " s exceeds " << c.budget_seconds << " s]";
    }
    char timing[32];
    std::snprintf(timing, sizeof timing, "%.2fs", secs);
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << c.name << " (" << timing << "): " << o.detail.str() << std::endl;
    if (!o.pass) ++failed;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed;
}
