#include "hst/experiment.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hst {
namespace {

[[noreturn]] void fail(const std::string& path, int line, const std::string& what) {
  throw std::runtime_error("config: " + path + ": line " + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long long parse_int(const std::string& path, int line, const std::string& key,
                    const std::string& value) {
  try {
    size_t used = 0;
    long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    fail(path, line, key + " expects an integer, got \"" + value + "\"");
  }
}

double parse_real(const std::string& path, int line, const std::string& key,
                  const std::string& value) {
  try {
    size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    fail(path, line, key + " expects a number, got \"" + value + "\"");
  }
}

bool parse_bool(const std::string& path, int line, const std::string& key,
                const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  fail(path, line, key + " expects 0/1, got \"" + value + "\"");
}

std::vector<long long> parse_int_list(const std::string& path, int line, const std::string& key,
                                      const std::string& value) {
  std::vector<long long> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) out.push_back(parse_int(path, line, key, trim(item)));
  return out;
}

std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// True when the extra stages are exactly the realsr_lite set, which is the
// only way a config file can populate them.
bool is_realsr_extras(const DegradationSpec& spec) {
  DegradationSpec ref = DegradationSpec::realsr_lite(spec.scale, spec.jpeg_quality);
  ref.antialias = spec.antialias;
  return spec.canonical() == ref.canonical();
}

}  // namespace

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: " + path + ": cannot open");

  ExperimentConfig cfg;
  std::string section;     // "model", "data", "run", or "stage"
  TrainStage* stage = nullptr;

  auto check_dir = [&](int line, const std::string& key, const std::string& value) {
    if (!std::filesystem::is_directory(value))
      fail(path, line, key + " directory does not exist: " + value);
    return value;
  };

  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string text = raw;
    if (size_t hash = text.find('#'); hash != std::string::npos) text.resize(hash);
    text = trim(text);
    if (text.empty()) continue;

    if (text.front() == '[') {
      if (text.back() != ']') fail(path, line, "unterminated section header");
      std::string name = trim(text.substr(1, text.size() - 2));
      if (name == "model" || name == "data" || name == "run") {
        section = name;
        stage = nullptr;
      } else if (name.rfind("stage ", 0) == 0) {
        std::string sname = trim(name.substr(6));
        if (sname.empty()) fail(path, line, "stage section needs a name");
        for (const TrainStage& s : cfg.stages)
          if (s.name == sname) fail(path, line, "duplicate stage name \"" + sname + "\"");
        section = "stage";
        cfg.stages.push_back(TrainStage{});
        stage = &cfg.stages.back();
        stage->name = sname;
      } else {
        fail(path, line, "unknown section [" + name + "]");
      }
      continue;
    }

    size_t sp = text.find_first_of(" \t");
    std::string key = sp == std::string::npos ? text : text.substr(0, sp);
    std::string value = sp == std::string::npos ? "" : trim(text.substr(sp + 1));
    if (value.empty()) fail(path, line, "key \"" + key + "\" has no value");

    if (section == "model") {
      if (key == "preset") {
        try {
          cfg.model = HSTConfig::preset(value);
        } catch (const std::exception& e) {
          fail(path, line, e.what());
        }
        cfg.preset = value;
      } else if (key == "channels") {
        cfg.model.channels.clear();
        for (long long v : parse_int_list(path, line, key, value))
          cfg.model.channels.push_back(static_cast<int>(v));
        cfg.model.branches = static_cast<int>(cfg.model.channels.size());
      } else if (key == "rstbs") {
        cfg.model.rstbs.clear();
        for (long long v : parse_int_list(path, line, key, value))
          cfg.model.rstbs.push_back(static_cast<int>(v));
      } else if (key == "stl_per_rstb") {
        cfg.model.stl_per_rstb = static_cast<int>(parse_int(path, line, key, value));
      } else if (key == "window") {
        cfg.model.window = static_cast<int>(parse_int(path, line, key, value));
      } else if (key == "heads") {
        cfg.model.heads = static_cast<int>(parse_int(path, line, key, value));
      } else if (key == "mlp_ratio") {
        cfg.model.mlp_ratio = parse_real(path, line, key, value);
      } else {
        fail(path, line, "unknown [model] key \"" + key + "\"");
      }
    } else if (section == "data") {
      if (key == "train")
        cfg.train_dir = check_dir(line, key, value);
      else if (key == "val")
        cfg.val_dir = check_dir(line, key, value);
      else if (key == "test")
        cfg.test_dir = check_dir(line, key, value);
      else
        fail(path, line, "unknown [data] key \"" + key + "\"");
    } else if (section == "run") {
      if (key == "seed")
        cfg.seed = static_cast<uint64_t>(parse_int(path, line, key, value));
      else if (key == "out_dir")
        cfg.out_dir = value;
      else if (key == "precision") {
        if (value != "f32" && value != "f64")
          fail(path, line, "precision must be f32 or f64, got \"" + value + "\"");
        cfg.precision = value;
      } else if (key == "log_every")
        cfg.log_every = parse_int(path, line, key, value);
      else if (key == "val_every")
        cfg.val_every = parse_int(path, line, key, value);
      else if (key == "checkpoint_every")
        cfg.checkpoint_every = parse_int(path, line, key, value);
      else if (key == "val_limit")
        cfg.val_limit = static_cast<int>(parse_int(path, line, key, value));
      else if (key == "clip_norm")
        cfg.clip_norm = parse_real(path, line, key, value);
      else
        fail(path, line, "unknown [run] key \"" + key + "\"");
    } else if (section == "stage") {
      if (key == "scale")
        stage->degradation.scale = static_cast<int>(parse_int(path, line, key, value));
      else if (key == "antialias")
        stage->degradation.antialias = parse_bool(path, line, key, value);
      else if (key == "jpeg") {
        if (value == "none")
          stage->degradation.jpeg_quality.reset();
        else
          stage->degradation.jpeg_quality = static_cast<int>(parse_int(path, line, key, value));
      } else if (key == "extra") {
        if (value == "none") {
          stage->degradation.extra_stages.clear();
          stage->degradation.shuffle_extra = false;
        } else if (value == "realsr") {
          DegradationSpec ref = DegradationSpec::realsr_lite(4);
          stage->degradation.extra_stages = ref.extra_stages;
          stage->degradation.shuffle_extra = true;
        } else {
          fail(path, line, "extra must be none or realsr, got \"" + value + "\"");
        }
      } else if (key == "loss") {
        try {
          stage->loss = LossConfig::parse(value, stage->loss.epsilon);
        } catch (const std::exception& e) {
          fail(path, line, e.what());
        }
      } else if (key == "loss_epsilon")
        stage->loss.epsilon = parse_real(path, line, key, value);
      else if (key == "lr")
        stage->lr_initial = parse_real(path, line, key, value);
      else if (key == "milestones")
        stage->lr_milestones = parse_int_list(path, line, key, value);
      else if (key == "iters")
        stage->total_iters = parse_int(path, line, key, value);
      else if (key == "batch")
        stage->batch_size = static_cast<int>(parse_int(path, line, key, value));
      else if (key == "init_from") {
        if (value == "none") {
          stage->init_from.clear();
        } else if (value.size() > 8 && value.rfind(".hstckpt") == value.size() - 8) {
          if (!std::filesystem::is_regular_file(value))
            fail(path, line, "init_from checkpoint does not exist: " + value);
          stage->init_from = value;
        } else {
          bool earlier = false;
          for (size_t i = 0; i + 1 < cfg.stages.size(); ++i)
            if (cfg.stages[i].name == value) earlier = true;
          if (!earlier)
            fail(path, line, "init_from must be none, an earlier stage name, or an existing "
                             ".hstckpt path; got \"" + value + "\"");
          stage->init_from = value;
        }
      } else {
        fail(path, line, "unknown [stage] key \"" + key + "\"");
      }
    } else {
      fail(path, line, "key \"" + key + "\" appears before any [section]");
    }
  }

  try {
    cfg.model.validate();
    for (const TrainStage& s : cfg.stages) s.validate();
  } catch (const std::exception& e) {
    throw std::runtime_error("config: " + path + ": " + e.what());
  }
  return cfg;
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream out;
  out << "[model]\n";
  if (!preset.empty()) out << "preset " << preset << "\n";
  auto join = [](const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  out << "channels " << join(model.channels) << "\n";
  out << "rstbs " << join(model.rstbs) << "\n";
  out << "stl_per_rstb " << model.stl_per_rstb << "\n";
  out << "window " << model.window << "\n";
  out << "heads " << model.heads << "\n";
  out << "mlp_ratio " << fmt_real(model.mlp_ratio) << "\n";

  out << "\n[data]\n";
  if (!train_dir.empty()) out << "train " << train_dir << "\n";
  if (!val_dir.empty()) out << "val " << val_dir << "\n";
  if (!test_dir.empty()) out << "test " << test_dir << "\n";

  out << "\n[run]\n";
  out << "seed " << seed << "\n";
  if (!out_dir.empty()) out << "out_dir " << out_dir << "\n";
  out << "precision " << precision << "\n";
  out << "log_every " << log_every << "\n";
  out << "val_every " << val_every << "\n";
  out << "checkpoint_every " << checkpoint_every << "\n";
  out << "val_limit " << val_limit << "\n";
  out << "clip_norm " << fmt_real(clip_norm) << "\n";

  for (const TrainStage& s : stages) {
    out << "\n[stage " << s.name << "]\n";
    out << "scale " << s.degradation.scale << "\n";
    out << "antialias " << (s.degradation.antialias ? 1 : 0) << "\n";
    if (s.degradation.jpeg_quality)
      out << "jpeg " << *s.degradation.jpeg_quality << "\n";
    else
      out << "jpeg none\n";
    out << "extra " << (is_realsr_extras(s.degradation) ? "realsr" : "none") << "\n";
    out << "loss " << s.loss.kind_name() << "\n";
    out << "loss_epsilon " << fmt_real(s.loss.epsilon) << "\n";
    out << "lr " << fmt_real(s.lr_initial) << "\n";
    if (!s.lr_milestones.empty()) {
      out << "milestones ";
      for (size_t i = 0; i < s.lr_milestones.size(); ++i)
        out << (i ? "," : "") << s.lr_milestones[i];
      out << "\n";
    }
    out << "iters " << s.total_iters << "\n";
    out << "batch " << s.batch_size << "\n";
    out << "init_from " << (s.init_from.empty() ? "none" : s.init_from) << "\n";
  }
  return out.str();
}

TrainerOptions ExperimentConfig::trainer_options() const {
  TrainerOptions opt;
  opt.seed = seed;
  opt.adam.clip_norm = clip_norm;
  opt.log_every = log_every;
  opt.val_every = val_every;
  opt.checkpoint_every = checkpoint_every;
  opt.out_dir = out_dir;
  opt.val_limit = val_limit;
  return opt;
}

void write_provenance(const std::string& dir, const ExperimentConfig& config) {
  std::filesystem::create_directories(dir);
  std::string path = (std::filesystem::path(dir) / "provenance.txt").string();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("provenance: cannot write " + path);
  out << "# " << kToolVersion << "\n" << config.canonical();
}

}  // namespace hst
