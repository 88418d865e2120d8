// Writes a synthetic 6-band archive (PNGs + manifest.jsonl) for demos.

#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "rxtriage/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic multispectral archive"};
  rxtriage::synthetic::ArchiveOptions opt;
  std::string out;
  long anomaly = -1;
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--sequences", opt.n_sequences)->capture_default_str();
  app.add_option("--width", opt.width)->capture_default_str();
  app.add_option("--height", opt.height)->capture_default_str();
  app.add_option("--seed", opt.seed)->capture_default_str();
  app.add_option("--anomaly", anomaly, "0-based index of the sequence that gets an anomaly patch");
  app.add_option("--cal-target-every", opt.cal_target_every)->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  if (anomaly >= 0) opt.anomaly_sequence = static_cast<std::size_t>(anomaly);

  std::optional<rxtriage::synthetic::PatchLocation> patch;
  const auto seqs = rxtriage::synthetic::generate(opt, &patch);
  const auto manifest = rxtriage::synthetic::write_archive(out, seqs);
  std::cout << manifest.string() << "\n";
  if (patch) {
    std::cout << "anomaly " << rxtriage::synthetic::sequence_id_for(patch->sequence) << " at row " << patch->row
              << " col " << patch->col << " size " << patch->size << "\n";
  }
  return 0;
}
