// gmmaug: command-line front end for mixture-based MRI contrast augmentation.
//
//   gmmaug fit      --input img.nii --out fit.json
//   gmmaug stats    --input-dir corpus/ --out stats.json
//   gmmaug augment  --input img.nii --stats stats.json --seed 7 --n 10 --out-prefix aug
//   gmmaug hist     --input img.nii --bins 100 --out hist.csv
//   gmmaug metrics  --pred seg.nii --ref gt.nii --out overlap.json
//   gmmaug phantom  --seed 1 --out phantom.nii --out-labels labels.nii
//
// Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
// Machine-readable output goes to stdout (when --out is "-"); diagnostics to stderr.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gmmaug/gmmaug.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

struct RunConfig {
  std::string subcommand;
  std::string input;
  std::string input_dir;
  std::string mask;
  std::string stats;
  std::string spec;
  std::string pred;
  std::string ref;
  std::string out = "-";
  std::string out_prefix;
  std::string out_labels;
  int k = 3;
  std::optional<std::uint64_t> seed;
  int n = 1;
  std::size_t bins = 100;
  std::vector<int> labels;
  double tol = 1e-6;
  int max_iter = 500;
  std::size_t subsample_cap = 2'000'000;
  double clip_lo = 1.0;
  double clip_hi = 99.0;
  std::string normalize = "minmax01";
  unsigned threads = 1;
  bool hard_assign = false;
  bool reject_order_inversion = false;
  bool no_clip_output = false;
  bool print_config = false;

  gmmaug::EmConfig em() const {
    gmmaug::EmConfig cfg;
    cfg.tol = tol;
    cfg.max_iter = max_iter;
    cfg.subsample_cap = subsample_cap;
    return cfg;
  }

  gmmaug::Preprocessing preprocessing() const { return {clip_lo, clip_hi, normalize}; }
};

json to_json(const RunConfig& c) {
  json j{{"subcommand", c.subcommand},
         {"k", c.k},
         {"tol", c.tol},
         {"max_iter", c.max_iter},
         {"subsample_cap", c.subsample_cap},
         {"clip_lo_pct", c.clip_lo},
         {"clip_hi_pct", c.clip_hi},
         {"normalize", c.normalize},
         {"threads", c.threads},
         {"out", c.out}};
  auto put = [&j](const char* key, const std::string& v) {
    if (!v.empty()) j[key] = v;
  };
  put("input", c.input);
  put("input_dir", c.input_dir);
  put("mask", c.mask);
  put("stats", c.stats);
  put("spec", c.spec);
  put("pred", c.pred);
  put("ref", c.ref);
  put("out_prefix", c.out_prefix);
  put("out_labels", c.out_labels);
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  if (c.subcommand == "augment") {
    j["n"] = c.n;
    j["hard_assign"] = c.hard_assign;
    j["reject_order_inversion"] = c.reject_order_inversion;
    j["clip_output"] = !c.no_clip_output;
  }
  if (c.subcommand == "hist") j["bins"] = c.bins;
  if (c.subcommand == "metrics") j["labels"] = c.labels;
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw gmmaug::Error(gmmaug::ErrorKind::IoError, "cannot open " + path + " for writing");
  out << text;
  if (!out) throw gmmaug::Error(gmmaug::ErrorKind::IoError, "write failed for " + path);
}

std::optional<gmmaug::LabelVolume> load_mask(const RunConfig& c) {
  if (c.mask.empty()) return std::nullopt;
  return gmmaug::read_labels(c.mask);
}

int run_fit(const RunConfig& c) {
  const auto vol = gmmaug::read_volume(c.input);
  const auto mask = gmmaug::foreground_mask(vol, load_mask(c));
  const auto params = gmmaug::fit_volume(vol, mask, c.k, c.preprocessing(), c.em());
  write_text(c.out, json(params).dump(2) + "\n");
  return kExitOk;
}

int run_stats(const RunConfig& c) {
  if (!fs::is_directory(c.input_dir))
    throw gmmaug::Error(gmmaug::ErrorKind::IoError, c.input_dir + " is not a directory");
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(c.input_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".nii") paths.push_back(entry.path());
  std::sort(paths.begin(), paths.end());

  std::vector<gmmaug::Volume> volumes;
  std::vector<fs::path> used;
  for (const auto& p : paths) {
    try {
      volumes.push_back(gmmaug::read_volume(p));
      used.push_back(p);
    } catch (const gmmaug::Error& e) {
      std::cerr << "warning: skipping " << e.what() << '\n';
    }
  }
  if (volumes.size() < 2)
    throw gmmaug::Error(gmmaug::ErrorKind::InsufficientData,
                        "found " + std::to_string(volumes.size()) + " readable .nii volumes in " + c.input_dir + ", need 2");

  gmmaug::PopulationOptions opts;
  opts.preprocessing = c.preprocessing();
  opts.threads = c.threads;
  opts.on_skip = [&used](std::size_t i, const gmmaug::Error& e) {
    std::cerr << "warning: fit failed for " << used[i].string() << ": " << e.what() << '\n';
  };
  const auto result = gmmaug::estimate_population_detailed(volumes, c.k, c.em(), opts);
  if (result.skipped > 0) std::cerr << "skipped " << result.skipped << " of " << volumes.size() << " volumes\n";
  write_text(c.out, json(result.stats).dump(2) + "\n");
  return kExitOk;
}

int run_augment(const RunConfig& c) {
  if (c.n < 1) throw gmmaug::Error(gmmaug::ErrorKind::InvalidArgument, "--n must be >= 1");
  const auto vol = gmmaug::read_volume(c.input);
  const auto stats = gmmaug::load_stats(c.stats);

  gmmaug::AugmentConfig cfg;
  cfg.em = c.em();
  cfg.remap.hard_assign = c.hard_assign;
  cfg.remap.clip_output = !c.no_clip_output;
  cfg.reject_order_inversion = c.reject_order_inversion;

  const auto prepared = gmmaug::prepare(vol, stats, cfg, load_mask(c));
  std::vector<std::optional<gmmaug::Error>> errors(static_cast<std::size_t>(c.n));
  auto work = [&](std::size_t i) {
    try {
      const auto result = gmmaug::draw(prepared, stats, *c.seed + i, cfg);
      const std::string stem = c.out_prefix + "_" + std::to_string(i);
      gmmaug::write_volume(result.volume, stem + ".nii");
      for (int j : result.perturbed.clamped)
        std::cerr << "draw " << i << ": variance of component " << j << " clamped to floor\n";
      write_text(stem + ".json", gmmaug::provenance_json(result).dump(2) + "\n");
    } catch (const gmmaug::Error& e) {
      errors[i] = e;
    }
  };
  const auto n = static_cast<std::size_t>(c.n);
  const unsigned threads = std::max(1u, std::min<unsigned>(c.threads, static_cast<unsigned>(n)));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < n; i += threads) work(i);
      });
  }
  for (const auto& e : errors)
    if (e) throw *e;
  return kExitOk;
}

int run_hist(const RunConfig& c) {
  auto vol = gmmaug::read_volume(c.input);
  const auto mask = gmmaug::foreground_mask(vol, load_mask(c));
  if (c.normalize == "minmax01") vol = gmmaug::clip_normalize(vol, mask, c.clip_lo, c.clip_hi).first;
  const auto hist = gmmaug::unit_histogram(gmmaug::masked_values(vol, mask), c.bins);
  std::ostringstream os;
  os.precision(17);
  os << "bin_center,count\n";
  for (std::size_t b = 0; b < hist.counts.size(); ++b) os << hist.centers[b] << ',' << hist.counts[b] << '\n';
  write_text(c.out, os.str());
  return kExitOk;
}

int run_metrics(const RunConfig& c) {
  const auto pred = gmmaug::read_labels(c.pred);
  const auto ref = gmmaug::read_labels(c.ref);
  if (pred.dims() != ref.dims())
    throw gmmaug::Error(gmmaug::ErrorKind::ShapeMismatch, "prediction and reference dims differ");
  const std::set<int> labels =
      c.labels.empty() ? gmmaug::present_labels(pred, ref) : std::set<int>(c.labels.begin(), c.labels.end());
  const auto report = gmmaug::overlap(pred, ref, labels);
  if (fs::path(c.out).extension() == ".csv")
    write_text(c.out, gmmaug::to_csv(report));
  else
    write_text(c.out, json(report).dump(2) + "\n");
  return kExitOk;
}

int run_phantom(const RunConfig& c) {
  gmmaug::PhantomSpec spec;
  if (!c.spec.empty()) {
    std::ifstream in(c.spec);
    if (!in) throw gmmaug::Error(gmmaug::ErrorKind::IoError, "cannot open " + c.spec);
    try {
      json j;
      in >> j;
      spec = j.get<gmmaug::PhantomSpec>();
    } catch (const json::exception& e) {
      throw gmmaug::Error(gmmaug::ErrorKind::InvalidSpec, c.spec + ": " + e.what());
    }
  }
  spec.seed = *c.seed;
  const auto [vol, labels] = gmmaug::generate_phantom(spec);
  gmmaug::write_volume(vol, c.out);
  if (!c.out_labels.empty()) gmmaug::write_labels(labels, c.out_labels);
  return kExitOk;
}

void add_em_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--k", c.k, "Mixture components")->check(CLI::PositiveNumber);
  sub->add_option("--tol", c.tol, "Relative log-likelihood tolerance");
  sub->add_option("--max-iter", c.max_iter, "EM iteration cap");
  sub->add_option("--subsample-cap", c.subsample_cap, "Fit on at most this many voxels (0 = all)");
}

void add_preprocess_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--clip-lo", c.clip_lo, "Lower clip percentile");
  sub->add_option("--clip-hi", c.clip_hi, "Upper clip percentile");
  sub->add_option("--normalize", c.normalize, "minmax01 or none")->check(CLI::IsMember({"minmax01", "none"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-mixture contrast augmentation for skull-stripped brain MRI"};
  app.require_subcommand(1);
  RunConfig c;

  auto* fit = app.add_subcommand("fit", "Fit a mixture to one volume and write its parameters as JSON");
  fit->add_option("--input", c.input, "Input .nii")->required();
  fit->add_option("--mask", c.mask, "Optional label volume; label > 0 is foreground");
  fit->add_option("--out", c.out, "Output JSON ('-' for stdout)");
  add_em_options(fit, c);
  add_preprocess_options(fit, c);

  auto* stats = app.add_subcommand("stats", "Estimate per-component spread over a directory of .nii volumes");
  stats->add_option("--input-dir", c.input_dir, "Corpus directory")->required();
  stats->add_option("--out", c.out, "Output stats JSON ('-' for stdout)");
  stats->add_option("--threads", c.threads, "Worker threads");
  add_em_options(stats, c);
  add_preprocess_options(stats, c);

  auto* augment = app.add_subcommand("augment", "Write n augmented copies of a volume with provenance sidecars");
  augment->add_option("--input", c.input, "Input .nii")->required();
  augment->add_option("--stats", c.stats, "Population stats JSON")->required();
  augment->add_option("--seed", c.seed, "Seed of draw 0; draw i uses seed + i")->required();
  augment->add_option("--n", c.n, "Number of draws");
  augment->add_option("--out-prefix", c.out_prefix, "Writes <prefix>_<i>.nii and <prefix>_<i>.json")->required();
  augment->add_option("--mask", c.mask, "Optional label volume; label > 0 is foreground");
  augment->add_option("--threads", c.threads, "Worker threads");
  augment->add_flag("--hard-assign", c.hard_assign, "Remap with the most probable component only");
  augment->add_flag("--reject-order-inversion", c.reject_order_inversion, "Redraw perturbations that reorder means");
  augment->add_flag("--no-clip-output", c.no_clip_output, "Do not clip remapped values to [0,1]");
  add_em_options(augment, c);

  auto* hist = app.add_subcommand("hist", "Histogram of masked intensities over [0,1] as CSV");
  hist->add_option("--input", c.input, "Input .nii")->required();
  hist->add_option("--mask", c.mask, "Optional label volume; label > 0 is foreground");
  hist->add_option("--bins", c.bins, "Number of bins")->check(CLI::PositiveNumber);
  hist->add_option("--out", c.out, "Output CSV ('-' for stdout)");
  hist->add_option("--normalize", c.normalize, "none (bin as stored) or minmax01 (clip-normalize first)")
      ->check(CLI::IsMember({"minmax01", "none"}));
  hist->add_option("--clip-lo", c.clip_lo, "Lower clip percentile");
  hist->add_option("--clip-hi", c.clip_hi, "Upper clip percentile");

  auto* metrics = app.add_subcommand("metrics", "Dice / sensitivity / precision per label");
  metrics->add_option("--pred", c.pred, "Predicted label volume")->required();
  metrics->add_option("--ref", c.ref, "Reference label volume")->required();
  metrics->add_option("--labels", c.labels, "Labels to score (default: all non-zero present)")->delimiter(',');
  metrics->add_option("--out", c.out, "Output .json or .csv ('-' for JSON on stdout)");

  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic three-tissue phantom");
  phantom->add_option("--spec", c.spec, "PhantomSpec JSON overriding the defaults");
  phantom->add_option("--seed", c.seed, "Noise seed")->required();
  phantom->add_option("--out", c.out, "Output intensity .nii")->required();
  phantom->add_option("--out-labels", c.out_labels, "Output ground-truth label .nii");

  for (auto* sub : {fit, stats, augment, hist, metrics, phantom})
    sub->add_flag("--print-config", c.print_config, "Print the resolved configuration as JSON and exit");

  // hist bins stored values by default, unlike the fitting subcommands.
  hist->preparse_callback([&c](std::size_t) { c.normalize = "none"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  c.subcommand = app.get_subcommands().front()->get_name();
  if (c.print_config) {
    std::cout << to_json(c).dump(2) << '\n';
    return kExitOk;
  }

  try {
    if (c.subcommand == "fit") return run_fit(c);
    if (c.subcommand == "stats") return run_stats(c);
    if (c.subcommand == "augment") return run_augment(c);
    if (c.subcommand == "hist") return run_hist(c);
    if (c.subcommand == "metrics") return run_metrics(c);
    if (c.subcommand == "phantom") return run_phantom(c);
  } catch (const gmmaug::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return gmmaug::is_numerical(e.kind()) ? kExitNumerical : kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}
