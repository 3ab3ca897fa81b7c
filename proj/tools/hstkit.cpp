// hstkit: command-line front end for the super-resolution toolkit.
//
// Verbs: params, gradcheck, degrade, train, eval, infer. Exit codes:
//   0  success
//   1  contract failure (bad data, failed check, diverged run)
//   2  usage error (bad flags, missing files)
//
// Every verb prints a one-line provenance header ("# hstkit ...") so output
// captured from a run records the tool version and the resolved settings.
// HSTKIT_THREADS caps the OpenMP worker count for the whole process.

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hst/checkpoint.hpp"
#include "hst/dataset.hpp"
#include "hst/degrade.hpp"
#include "hst/experiment.hpp"
#include "hst/gradcheck.hpp"
#include "hst/model.hpp"
#include "hst/png_io.hpp"
#include "hst/trainer.hpp"

namespace fs = std::filesystem;
using namespace hst;

namespace {

// Thrown for problems the caller can fix on the command line (exit 2), as
// opposed to contract failures discovered while working (exit 1).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path))
    throw UsageError(std::string(what) + " does not exist: " + path);
}

void require_dir(const std::string& path, const char* what) {
  if (!fs::is_directory(path))
    throw UsageError(std::string(what) + " does not exist: " + path);
}

uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 14695981039346656037ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

// ---------------------------------------------------------------- params --

const std::map<std::string, double>& published_millions() {
  static const std::map<std::string, double> table{
      {"hst1", 11.90}, {"hst2", 12.98}, {"hst3", 16.58}};
  return table;
}

// Prints one line per preset (or the single requested model) and checks
// preset counts against the published budgets within 5%.
int cmd_params(const std::string& preset, const std::string& config_path) {
  std::printf("# %s params\n", kToolVersion);
  auto count = [](const HSTConfig& cfg) {
    return HSTModelT<float>(cfg, 0).parameter_count();
  };

  if (!config_path.empty()) {
    require_file(config_path, "--config");
    ExperimentConfig cfg = ExperimentConfig::load(config_path);
    long long n = count(cfg.model);
    std::printf("config %s: %lld parameters (%.2fM)\n", config_path.c_str(), n, n / 1e6);
    return 0;
  }

  std::vector<std::string> names;
  if (!preset.empty())
    names.push_back(preset);
  else
    for (const auto& [name, target] : published_millions()) names.push_back(name);

  bool all_within = true;
  for (const std::string& name : names) {
    long long n = count(HSTConfig::preset(name));  // unknown name throws -> exit 1
    double millions = n / 1e6;
    auto it = published_millions().find(name);
    if (it == published_millions().end()) {
      std::printf("%s: %lld parameters (%.2fM)\n", name.c_str(), n, millions);
      continue;
    }
    double diff = (millions - it->second) / it->second;
    bool within = std::abs(diff) <= 0.05;
    all_within = all_within && within;
    std::printf("%s: %lld parameters (%.2fM), published %.2fM, diff %+.2f%%, within 5%%: %s\n",
                name.c_str(), n, millions, it->second, diff * 100.0, within ? "yes" : "NO");
  }
  return all_within ? 0 : 1;
}

// ------------------------------------------------------------- gradcheck --

int cmd_gradcheck(const std::string& scope, uint64_t seed, long long stride) {
  std::printf("# %s gradcheck scope %s seed %llu stride %lld\n", kToolVersion, scope.c_str(),
              static_cast<unsigned long long>(seed), stride);
  std::vector<GradCheckResult> results;
  if (scope == "op") {
    results = primitive_gradchecks(seed);
  } else if (scope == "model") {
    results.push_back(model_gradcheck(seed, static_cast<size_t>(stride)));
  } else {
    throw UsageError("--scope must be op or model, got \"" + scope + "\"");
  }

  std::printf("%-32s %10s %14s   %s\n", "check", "elements", "max_rel_err", "result");
  bool all_pass = true;
  for (const GradCheckResult& r : results) {
    bool ok = r.pass();
    all_pass = all_pass && ok;
    std::printf("%-32s %10zu %14.3e   %s\n", r.name.c_str(), r.elements_checked, r.max_rel_err,
                ok ? "PASS" : "FAIL");
    if (!ok)
      std::printf("  worst: %s[%zu] analytic %.9e numeric %.9e\n", r.worst_param.c_str(),
                  r.worst_index, r.worst_analytic, r.worst_numeric);
  }
  std::printf("%zu checks, %s\n", results.size(), all_pass ? "all passed" : "FAILURES above");
  return all_pass ? 0 : 1;
}

// --------------------------------------------------------------- degrade --

DegradationSpec spec_from_flags(int scale, std::optional<int> quality, bool realsr) {
  DegradationSpec spec = realsr ? DegradationSpec::realsr_lite(scale, quality)
                                : DegradationSpec::bicubic(scale, quality);
  spec.validate();
  return spec;
}

// Degrades every PNG under in_dir into the mirrored path under out_dir and
// writes a manifest recording the recipe and a content hash per file.
// Unreadable or misshapen inputs are reported and skipped.
int cmd_degrade(const std::string& in_dir, const std::string& out_dir, int scale,
                std::optional<int> quality, bool realsr, uint64_t seed) {
  require_dir(in_dir, "--in");
  DegradationSpec spec = spec_from_flags(scale, quality, realsr);

  std::vector<std::string> rels;
  for (const auto& entry : fs::recursive_directory_iterator(in_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    rels.push_back(fs::relative(entry.path(), in_dir).generic_string());
  }
  std::sort(rels.begin(), rels.end());

  fs::create_directories(out_dir);
  std::string manifest_path = (fs::path(out_dir) / "manifest.txt").string();
  std::ofstream manifest(manifest_path, std::ios::trunc);
  if (!manifest) throw std::runtime_error("degrade: cannot write " + manifest_path);
  manifest << "# " << kToolVersion << " degrade manifest\n";
  manifest << "# spec " << spec.canonical() << "\n";
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(spec.hash()));
  manifest << "# spec_hash " << hex << "\n";
  manifest << "# seed " << seed << "\n";

  std::printf("# %s degrade in %s out %s spec_hash %s\n", kToolVersion, in_dir.c_str(),
              out_dir.c_str(), hex);

  long long written = 0, skipped = 0;
  for (const std::string& rel : rels) {
    std::string src = (fs::path(in_dir) / rel).string();
    try {
      Image hr = load_png(src);
      // Per-file stream: reruns of the same (spec, seed) reproduce every
      // randomized stage no matter which files around it were added/removed.
      Rng rng(spec.hash() ^ fnv1a64(rel) ^ (seed * 0x9e3779b97f4a7c15ull));
      Image lr = degrade(hr, spec, rng);

      fs::path dst = fs::path(out_dir) / rel;
      fs::create_directories(dst.parent_path());
      save_png(dst.string(), lr);

      uint64_t content = fnv1a64(lr.samples.data(), lr.samples.size(),
                                 fnv1a64(&lr.width, sizeof(lr.width),
                                         fnv1a64(&lr.height, sizeof(lr.height))));
      std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(content));
      manifest << rel << " " << hex << " " << hr.height << "x" << hr.width << " -> "
               << lr.height << "x" << lr.width << "\n";
      ++written;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "degrade: %s: %s\n", rel.c_str(), e.what());
      ++skipped;
    }
  }
  std::printf("wrote %lld files, skipped %lld, manifest %s\n", written, skipped,
              manifest_path.c_str());
  return 0;
}

// ----------------------------------------------------------------- train --

// Runs every stage of the experiment in file order. A stage whose final
// checkpoint already exists is skipped, and a stage with intermediate
// snapshots on disk resumes from the newest one, so rerunning the same
// command continues interrupted work instead of redoing it.
template <class T>
int train_all(const ExperimentConfig& cfg, const DatasetIndex& train,
              const DatasetIndex* val) {
  TrainerOptions opt = cfg.trainer_options();
  opt.val_set = val;

  for (const TrainStage& stage : cfg.stages) {
    fs::path final_path = fs::path(cfg.out_dir) / (stage.name + "_final.hstckpt");
    if (fs::is_regular_file(final_path)) {
      std::printf("stage %s: %s exists, skipping\n", stage.name.c_str(),
                  final_path.string().c_str());
      continue;
    }

    // Newest intermediate snapshot, if any, resumes this stage in place.
    std::string resume;
    long long best_iter = -1;
    std::string prefix = stage.name + "_iter";
    if (fs::is_directory(cfg.out_dir)) {
      for (const auto& entry : fs::directory_iterator(cfg.out_dir)) {
        std::string name = entry.path().filename().string();
        if (name.rfind(prefix, 0) != 0 || entry.path().extension() != ".hstckpt") continue;
        long long iter = std::atoll(name.c_str() + prefix.size());
        if (iter > best_iter) {
          best_iter = iter;
          resume = entry.path().string();
        }
      }
    }

    CheckpointT<T> start;
    if (!resume.empty()) {
      std::printf("stage %s: resuming from %s\n", stage.name.c_str(), resume.c_str());
      start = load_checkpoint<T>(resume);
    } else if (stage.init_from.empty()) {
      start = init_checkpoint<T>(cfg.model, cfg.seed);
    } else if (stage.init_from.size() > 8 &&
               stage.init_from.rfind(".hstckpt") == stage.init_from.size() - 8) {
      require_file(stage.init_from, "init_from checkpoint");
      start = load_checkpoint<T>(stage.init_from);
    } else {
      fs::path prev = fs::path(cfg.out_dir) / (stage.init_from + "_final.hstckpt");
      require_file(prev.string(), "previous-stage checkpoint");
      start = load_checkpoint<T>(prev.string());
    }

    CheckpointT<T> done = run_stage<T>(stage, start, train, opt);
    save_checkpoint(final_path.string(), done);
    std::printf("stage %s: done (%lld iters), saved %s\n", stage.name.c_str(),
                stage.total_iters, final_path.string().c_str());
  }
  return 0;
}

int cmd_train(const std::string& config_path, std::optional<uint64_t> seed,
              const std::string& out_override) {
  require_file(config_path, "--config");
  ExperimentConfig cfg = ExperimentConfig::load(config_path);
  if (seed) cfg.seed = *seed;
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (cfg.stages.empty()) throw UsageError("config has no [stage] sections to train");
  if (cfg.train_dir.empty()) throw UsageError("config has no [data] train directory");
  if (cfg.out_dir.empty()) throw UsageError("config has no [run] out_dir (or pass --out)");

  std::printf("# %s train config %s seed %llu out %s precision %s\n", kToolVersion,
              config_path.c_str(), static_cast<unsigned long long>(cfg.seed),
              cfg.out_dir.c_str(), cfg.precision.c_str());
  write_provenance(cfg.out_dir, cfg);

  DatasetIndex train = DatasetIndex::scan(cfg.train_dir);
  DatasetIndex val;
  if (!cfg.val_dir.empty()) val = DatasetIndex::scan(cfg.val_dir);
  const DatasetIndex* val_ptr = cfg.val_dir.empty() ? nullptr : &val;

  if (cfg.precision == "f64") return train_all<double>(cfg, train, val_ptr);
  return train_all<float>(cfg, train, val_ptr);
}

// ------------------------------------------------------------ eval/infer --

template <class T>
EvalReport eval_with_checkpoint(const std::string& ckpt_path, const DatasetIndex& data,
                                const DegradationSpec& spec, bool ensemble) {
  CheckpointT<T> ckpt = load_checkpoint<T>(ckpt_path);
  HSTModelT<T> model(ckpt.config, std::move(ckpt.params));
  return evaluate(model, data, spec, ensemble);
}

int cmd_eval(const std::string& config_path, const std::string& ckpt_path,
             const std::string& data_override, int scale, std::optional<int> quality,
             bool realsr, bool ensemble) {
  require_file(ckpt_path, "--ckpt");
  std::string data_dir = data_override;
  if (data_dir.empty() && !config_path.empty()) {
    require_file(config_path, "--config");
    ExperimentConfig cfg = ExperimentConfig::load(config_path);
    data_dir = cfg.test_dir.empty() ? cfg.val_dir : cfg.test_dir;
  }
  if (data_dir.empty())
    throw UsageError("no dataset: pass --data or a --config with [data] test/val");
  require_dir(data_dir, "--data");

  DegradationSpec spec = spec_from_flags(scale, quality, realsr);
  std::printf("# %s eval ckpt %s data %s spec %s ensemble %d\n", kToolVersion,
              ckpt_path.c_str(), data_dir.c_str(), spec.canonical().c_str(), ensemble ? 1 : 0);

  DatasetIndex data = DatasetIndex::scan(data_dir);
  EvalReport report = checkpoint_dtype(ckpt_path) == "f64"
                          ? eval_with_checkpoint<double>(ckpt_path, data, spec, ensemble)
                          : eval_with_checkpoint<float>(ckpt_path, data, spec, ensemble);
  std::fputs(format_report(report).c_str(), stdout);
  return 0;
}

int cmd_infer(const std::string& ckpt_path, const std::string& in_path,
              const std::string& out_path, bool ensemble) {
  require_file(ckpt_path, "--ckpt");
  require_file(in_path, "--in");
  if (out_path.empty()) throw UsageError("--out PNG path is required");

  std::printf("# %s infer ckpt %s in %s ensemble %d\n", kToolVersion, ckpt_path.c_str(),
              in_path.c_str(), ensemble ? 1 : 0);
  Image lr = load_png(in_path);
  Image sr;
  if (checkpoint_dtype(ckpt_path) == "f64") {
    Checkpoint64 ckpt = load_checkpoint<double>(ckpt_path);
    HSTModel64 model(ckpt.config, std::move(ckpt.params));
    sr = ensemble ? self_ensemble_infer(model, lr) : infer_image(model, lr);
  } else {
    Checkpoint ckpt = load_checkpoint<float>(ckpt_path);
    HSTModel model(ckpt.config, std::move(ckpt.params));
    sr = ensemble ? self_ensemble_infer(model, lr) : infer_image(model, lr);
  }
  if (fs::path(out_path).has_parent_path())
    fs::create_directories(fs::path(out_path).parent_path());
  save_png(out_path, sr);
  std::printf("wrote %s (%dx%d -> %dx%d)\n", out_path.c_str(), lr.height, lr.width, sr.height,
              sr.width);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* cap = std::getenv("HSTKIT_THREADS")) {
    int n = std::atoi(cap);
    if (n > 0) omp_set_num_threads(n);
  }

  CLI::App app{"hierarchical swin transformer super-resolution toolkit"};
  app.require_subcommand(1);

  std::string preset, config_path, in_path, out_path, data_dir, ckpt_path;
  std::string scope = "op";
  int scale = 4;
  std::optional<int> quality;
  std::optional<uint64_t> seed_override;
  uint64_t seed = 0;
  long long stride = 1;
  bool realsr = false, ensemble = false;

  CLI::App* params = app.add_subcommand("params", "count model parameters");
  params->add_option("--preset", preset, "hst1, hst2, or hst3 (default: all three)");
  params->add_option("--config", config_path, "experiment config to size instead");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gradcheck->add_option("--scope", scope, "op (primitive battery) or model (reduced end-to-end)")
      ->check(CLI::IsMember({"op", "model"}));
  gradcheck->add_option("--seed", seed, "rng seed for the checked instances");
  gradcheck->add_option("--stride", stride, "check every n-th element (model scope)")
      ->check(CLI::PositiveNumber);

  CLI::App* degrade = app.add_subcommand("degrade", "write a degraded copy of an image tree");
  degrade->add_option("--in", in_path, "HR directory")->required();
  degrade->add_option("--out", out_path, "LR output directory")->required();
  degrade->add_option("--scale", scale, "downscale factor (default 4)");
  degrade->add_option("--quality", quality, "JPEG quality 1..100 (default: no JPEG)");
  degrade->add_flag("--realsr", realsr, "add the blur/noise/jpeg extra-stage set");
  degrade->add_option("--seed", seed, "base seed for randomized stages");

  CLI::App* train = app.add_subcommand("train", "run an experiment's stages");
  train->add_option("--config", config_path, "experiment config")->required();
  train->add_option("--seed", seed_override, "override the config seed");
  train->add_option("--out", out_path, "override the config out_dir");

  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on a dataset");
  eval->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  eval->add_option("--config", config_path, "experiment config supplying the dataset");
  eval->add_option("--data", data_dir, "dataset directory (overrides the config)");
  eval->add_option("--scale", scale, "downscale factor (default 4)");
  eval->add_option("--quality", quality, "JPEG quality of the degradation");
  eval->add_flag("--realsr", realsr, "use the blur/noise/jpeg extra-stage set");
  eval->add_flag("--ensemble", ensemble, "geometric self-ensemble");

  CLI::App* infer = app.add_subcommand("infer", "super-resolve one PNG");
  infer->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  infer->add_option("--in", in_path, "input PNG")->required();
  infer->add_option("--out", out_path, "output PNG")->required();
  infer->add_flag("--ensemble", ensemble, "geometric self-ensemble");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);  // prints help or the parse error
    return code == 0 ? 0 : 2;
  }

  try {
    if (params->parsed()) return cmd_params(preset, config_path);
    if (gradcheck->parsed()) return cmd_gradcheck(scope, seed, stride);
    if (degrade->parsed()) return cmd_degrade(in_path, out_path, scale, quality, realsr, seed);
    if (train->parsed()) return cmd_train(config_path, seed_override, out_path);
    if (eval->parsed())
      return cmd_eval(config_path, ckpt_path, data_dir, scale, quality, realsr, ensemble);
    if (infer->parsed()) return cmd_infer(ckpt_path, in_path, out_path, ensemble);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;  // unreachable: require_subcommand guarantees one verb
}
