#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "hst/png_io.hpp"
#include "hst/metrics.hpp"
#include "hst/trainer.hpp"

using namespace hst;
namespace fs = std::filesystem;

namespace {

HSTConfig tiny_config() {
  HSTConfig c;
  c.branches = 1;
  c.channels = {8};
  c.rstbs = {1};
  c.stl_per_rstb = 2;
  c.window = 4;
  c.heads = 2;
  return c;
}

Image wavy_image(int h, int w, double phase) {
  Image img(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = 128.0 + 52.0 * std::sin(0.23 * x + 0.7 * c + phase) +
                   41.0 * std::cos(0.31 * y - 0.4 * c) +
                   22.0 * std::sin(0.05 * (x + 2 * y) + phase);
        v = std::min(255.0, std::max(0.0, v));
        img.at(y, x, c) = static_cast<unsigned char>(std::lround(v));
      }
  return img;
}

// Scratch dataset directory, rebuilt per call.
std::string make_dataset(const char* name, const std::vector<Image>& images) {
  fs::path dir = fs::temp_directory_path() / "hst_trainer_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  for (size_t i = 0; i < images.size(); ++i)
    save_png((dir / ("img" + std::to_string(i) + ".png")).string(), images[i]);
  return dir.string();
}

TrainStage quick_stage(const char* name, int batch, long long iters) {
  TrainStage st;
  st.name = name;
  st.degradation = DegradationSpec::bicubic(4);
  st.loss = LossConfig::parse("charbonnier");
  st.lr_initial = 2e-4;
  st.total_iters = iters;
  st.batch_size = batch;
  return st;
}

template <class T>
void check_params_bitwise(const ParamStoreT<T>& a, const ParamStoreT<T>& b) {
  REQUIRE(a.names() == b.names());
  for (const std::string& name : a.names()) {
    auto va = a.at(name).values();
    auto vb = b.at(name).values();
    REQUIRE(va.size() == vb.size());
    size_t diff = 0;
    for (size_t i = 0; i < va.size(); ++i) diff += va[i] != vb[i];
    CHECK(diff == 0);
  }
}

}  // namespace

TEST_CASE("sample_batch is bitwise reproducible for a fixed rng state") {
  std::string root =
      make_dataset("repro", {wavy_image(320, 288, 0.1), wavy_image(288, 320, 1.4)});
  DatasetIndex data = DatasetIndex::scan(root);
  TrainStage st = quick_stage("s", 4, 1);
  Rng r1(77), r2(77);
  BatchT<double> a = sample_batch<double>(data, st, r1);
  BatchT<double> b = sample_batch<double>(data, st, r2);
  REQUIRE(a.sources.size() == 4);
  for (size_t i = 0; i < a.lr.numel(); ++i)
    REQUIRE(a.lr.values()[i] == b.lr.values()[i]);
  for (size_t i = 0; i < a.hr.numel(); ++i)
    REQUIRE(a.hr.values()[i] == b.hr.values()[i]);
  CHECK(r1.state == r2.state);
}

TEST_CASE("emitted patches equal source crops at 4x the LR coordinates") {
  std::vector<Image> images = {wavy_image(320, 288, 0.3), wavy_image(300, 420, 2.0)};
  std::string root = make_dataset("align", images);
  DatasetIndex data = DatasetIndex::scan(root);
  TrainStage st = quick_stage("s", 6, 1);
  Rng rng(5);
  BatchT<double> batch = sample_batch<double>(data, st, rng);

  for (int b = 0; b < 6; ++b) {
    const auto& src = batch.sources[b];
    Image full = load_png(data.abs_path(src.image));
    // Rebuild both sides from the bookkeeping: HR crop at 4x the LR origin,
    // the deterministic bicubic degradation, then the recorded transform.
    Image hr_crop(256, 256, 3);
    for (int y = 0; y < 256; ++y)
      for (int x = 0; x < 256; ++x)
        for (int c = 0; c < 3; ++c)
          hr_crop.at(y, x, c) = full.at(4 * src.lr_y + y, 4 * src.lr_x + x, c);
    Image lr_crop = degrade(hr_crop, st.degradation);
    Image hr_t = dihedral_apply(hr_crop, src.dihedral);
    Image lr_t = dihedral_apply(lr_crop, src.dihedral);

    const double* hp = batch.hr.data();
    const double* lp = batch.lr.data();
    size_t hr_slot = static_cast<size_t>(b) * 3 * 256 * 256;
    size_t lr_slot = static_cast<size_t>(b) * 3 * 64 * 64;
    size_t bad = 0;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 256; ++y)
        for (int x = 0; x < 256; ++x)
          bad += hp[hr_slot + (static_cast<size_t>(c) * 256 + y) * 256 + x] !=
                 hr_t.at(y, x, c) / 255.0;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
          bad += lp[lr_slot + (static_cast<size_t>(c) * 64 + y) * 64 + x] !=
                 lr_t.at(y, x, c) / 255.0;
    CHECK(bad == 0);
  }
}

TEST_CASE("each dihedral transform shows up 1/8 of the time") {
  // Scale-1 stage so sampling stays cheap: LR crop == HR crop.
  std::string root = make_dataset("freq", {wavy_image(80, 80, 0.0)});
  DatasetIndex data = DatasetIndex::scan(root);
  TrainStage st = quick_stage("s", 100, 1);
  st.degradation = DegradationSpec::bicubic(1);
  Rng rng(123);
  std::array<int, 8> counts{};
  for (int call = 0; call < 100; ++call) {
    BatchT<float> batch = sample_batch<float>(data, st, rng);
    for (const auto& s : batch.sources) ++counts[s.dihedral];
  }
  for (int k = 0; k < 8; ++k) {
    double freq = counts[k] / 10000.0;
    INFO("transform ", k, " frequency ", freq);
    CHECK(freq > 0.105);
    CHECK(freq < 0.145);
  }
}

TEST_CASE("too-small and non-RGB images are skipped with a warning") {
  Image small = wavy_image(100, 100, 0.2);  // LR side would be 25 < 64
  Image gray(300, 300, 1);
  for (auto& v : gray.samples) v = 80;
  std::string root = make_dataset("skip", {small, wavy_image(280, 280, 1.0)});
  save_png((fs::path(root) / "gray.png").string(), gray);
  DatasetIndex data = DatasetIndex::scan(root);
  TrainStage st = quick_stage("s", 8, 1);
  Rng rng(9);
  std::vector<std::string> warnings;
  BatchT<float> batch = sample_batch<float>(
      data, st, rng, [&](const std::string& w) { warnings.push_back(w); });
  int usable = -1;
  for (size_t i = 0; i < data.size(); ++i)
    if (data.entries[i].rel_path == "img1.png") usable = static_cast<int>(i);
  for (const auto& s : batch.sources) CHECK(s.image == usable);
  bool saw_small = false, saw_gray = false;
  for (const std::string& w : warnings) {
    saw_small |= w.find("img0.png") != std::string::npos;
    saw_gray |= w.find("gray.png") != std::string::npos;
  }
  CHECK(saw_small);
  CHECK(saw_gray);

  SUBCASE("a dataset with nothing usable is an error") {
    std::string bad_root = make_dataset("allsmall", {small});
    DatasetIndex bad = DatasetIndex::scan(bad_root);
    CHECK_THROWS_WITH_AS(sample_batch<float>(bad, st, rng),
                         doctest::Contains("large enough"), std::runtime_error);
  }
}

TEST_CASE("zero-iteration stages return their input checkpoint unchanged") {
  Checkpoint64 start = init_checkpoint<double>(tiny_config(), 3);
  std::string root = make_dataset("noop", {wavy_image(280, 280, 0.5)});
  DatasetIndex data = DatasetIndex::scan(root);
  TrainerOptions opt;
  Checkpoint64 out = run_stage(quick_stage("s", 1, 0), start, data, opt);
  check_params_bitwise(start.params, out.params);
  CHECK(out.meta == start.meta);
}

TEST_CASE("fixed seeds reproduce the training trajectory bitwise") {
  Checkpoint64 start = init_checkpoint<double>(tiny_config(), 11);
  std::string root = make_dataset("det", {wavy_image(280, 280, 0.8)});
  DatasetIndex data = DatasetIndex::scan(root);
  TrainStage st = quick_stage("s", 1, 4);

  auto run = [&](std::vector<std::string>& lines) {
    TrainerOptions opt;
    opt.seed = 21;
    opt.log_every = 1;
    opt.log = [&](const std::string& s) { lines.push_back(s); };
    return run_stage(st, start, data, opt);
  };
  std::vector<std::string> la, lb;
  Checkpoint64 a = run(la);
  Checkpoint64 b = run(lb);
  check_params_bitwise(a.params, b.params);
  CHECK(la == lb);        // loss printed at %.17g, so this is bitwise too
  CHECK(la.size() == 4);
  CHECK(a.meta.at("iter") == "4");
  CHECK(a.meta.at("stage") == "s");
}

TEST_CASE("interrupt/resume matches straight-through training bitwise") {
  Checkpoint64 start = init_checkpoint<double>(tiny_config(), 19);
  std::string root = make_dataset("resume", {wavy_image(280, 280, 1.9)});
  DatasetIndex data = DatasetIndex::scan(root);
  TrainerOptions opt;
  opt.seed = 4;
  opt.log_every = 0;

  TrainStage full = quick_stage("s", 1, 6);
  Checkpoint64 straight = run_stage(full, start, data, opt);

  TrainStage half = full;
  half.total_iters = 4;
  Checkpoint64 mid = run_stage(half, start, data, opt);
  // Through-disk round trip so the resume path parses real metadata.
  std::string path =
      (fs::temp_directory_path() / "hst_trainer_tests" / "mid.hstckpt").string();
  save_checkpoint(path, mid);
  Checkpoint64 reloaded = load_checkpoint<double>(path);
  Checkpoint64 resumed = run_stage(full, reloaded, data, opt);

  check_params_bitwise(straight.params, resumed.params);
  check_params_bitwise(straight.opt_m, resumed.opt_m);
  check_params_bitwise(straight.opt_v, resumed.opt_v);
  CHECK(straight.meta.at("rng") == resumed.meta.at("rng"));
  CHECK(straight.meta.at("adam.step") == resumed.meta.at("adam.step"));
  std::remove(path.c_str());
}

TEST_CASE("a follow-on stage adopts weights but restarts its own schedule") {
  Checkpoint64 start = init_checkpoint<double>(tiny_config(), 8);
  std::string root = make_dataset("chain", {wavy_image(280, 280, 0.4)});
  DatasetIndex data = DatasetIndex::scan(root);
  TrainerOptions opt;
  opt.seed = 2;
  opt.log_every = 0;

  Checkpoint64 pre = run_stage(quick_stage("pretrain", 1, 2), start, data, opt);
  CHECK(pre.meta.at("stage") == "pretrain");
  Checkpoint64 fin = run_stage(quick_stage("finetune", 1, 3), pre, data, opt);
  CHECK(fin.meta.at("stage") == "finetune");
  CHECK(fin.meta.at("iter") == "3");
  CHECK(fin.meta_int("adam.step") == 3);  // optimizer reset, not 5
}

TEST_CASE("non-finite losses abort with a diagnostic batch dump") {
  Checkpoint64 start = init_checkpoint<double>(tiny_config(), 6);
  start.params.at(start.params.names()[0]).values()[0] =
      std::numeric_limits<double>::quiet_NaN();
  std::string root = make_dataset("nan", {wavy_image(280, 280, 0.6)});
  DatasetIndex data = DatasetIndex::scan(root);
  TrainerOptions opt;
  opt.seed = 1;
  opt.out_dir = (fs::temp_directory_path() / "hst_trainer_tests" / "nan_out").string();

  try {
    run_stage(quick_stage("explode", 1, 3), start, data, opt);
    FAIL("expected a non-finite loss error");
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    CHECK(msg.find("explode") != std::string::npos);
    CHECK(msg.find("non-finite") != std::string::npos);
    auto at = msg.find(opt.out_dir);
    REQUIRE(at != std::string::npos);
    std::string dump = msg.substr(at);
    Checkpoint64 d = load_checkpoint<double>(dump);
    CHECK(d.params.contains("batch.lr"));
    CHECK(d.params.contains("batch.hr"));
    CHECK(d.meta.count("batch.sources") == 1);
  }
}

TEST_CASE("self-ensemble is a fixed point for equivariant single passes") {
  Image lr = wavy_image(24, 20, 0.9);

  SUBCASE("pixelwise map (1x1 conv): ensemble equals the single pass") {
    auto single = [](const Image& img) {
      ImageF f = to_real(img);
      for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) {
          double r = f.at(y, x, 0), g = f.at(y, x, 1), b = f.at(y, x, 2);
          f.at(y, x, 0) = 0.5 * r + 0.3 * g + 0.1;
          f.at(y, x, 1) = 0.2 * r - 0.4 * b;
          f.at(y, x, 2) = 0.9 * b + 0.05 * g;
        }
      return f;
    };
    ImageF once = single(lr);
    ImageF ens = self_ensemble_real(single, lr);
    REQUIRE(ens.samples.size() == once.samples.size());
    for (size_t i = 0; i < ens.samples.size(); ++i)
      CHECK(std::abs(ens.samples[i] - once.samples[i]) <= 1e-6);
  }
  SUBCASE("constant-output map: ensemble returns that constant") {
    auto single = [](const Image& img) {
      return ImageF(img.height, img.width, 3, 0.25);
    };
    ImageF ens = self_ensemble_real(single, lr);
    for (double v : ens.samples) CHECK(v == 0.25);
  }
}

TEST_CASE("model self-ensemble equals the explicit 8-branch computation") {
  HSTModelT<double> model(tiny_config(), 31);
  Image lr = wavy_image(16, 12, 1.2);

  ImageF manual;
  for (int k = 0; k < 8; ++k) {
    ImageF out = infer_real(model, dihedral_apply(lr, k));
    ImageF inv = dihedral_apply(out, dihedral_inverse(k));
    if (k == 0) {
      manual = inv;
    } else {
      for (size_t i = 0; i < manual.samples.size(); ++i)
        manual.samples[i] += inv.samples[i];
    }
  }
  for (double& v : manual.samples) v /= 8.0;

  Image got = self_ensemble_infer(model, lr);
  Image want = to_bytes(manual);
  CHECK(got.samples == want.samples);
  CHECK(got.height == 64);
  CHECK(got.width == 48);
}

TEST_CASE("evaluate: identity upscaler on a do-nothing spec hits the sentinel") {
  std::string root = make_dataset(
      "eval_id", {wavy_image(48, 40, 0.0), wavy_image(40, 48, 1.0)});
  DatasetIndex data = DatasetIndex::scan(root);
  DegradationSpec spec = DegradationSpec::bicubic(1);
  auto identity = [](const Image& img) { return img; };
  EvalReport rep = evaluate_with(identity, data, spec);
  REQUIRE(rep.rows.size() == 2);
  CHECK(std::isinf(rep.mean_psnr));
  CHECK(rep.mean_ssim == 1.0);
  CHECK(rep.rows[0].name == "img0.png");
  CHECK(rep.rows[1].name == "img1.png");
  CHECK(format_report(rep).find("inf") != std::string::npos);
}

TEST_CASE("evaluate is deterministic and row-stable across reruns") {
  std::string root = make_dataset(
      "eval_det", {wavy_image(64, 64, 0.2), wavy_image(64, 64, 2.2)});
  DatasetIndex data = DatasetIndex::scan(root);
  HSTModelT<double> model(tiny_config(), 13);
  DegradationSpec spec = DegradationSpec::realsr_lite(4);  // draws randomness
  EvalReport a = evaluate(model, data, spec, false);
  EvalReport b = evaluate(model, data, spec, false);
  REQUIRE(a.rows.size() == b.rows.size());
  for (size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].name == b.rows[i].name);
    CHECK(a.rows[i].psnr == b.rows[i].psnr);
    CHECK(a.rows[i].ssim == b.rows[i].ssim);
  }
  CHECK(a.mean_psnr == b.mean_psnr);
}

TEST_CASE("evaluate wraps single-pass and ensemble inference") {
  std::string root = make_dataset("eval_wrap", {wavy_image(32, 32, 0.7)});
  DatasetIndex data = DatasetIndex::scan(root);
  HSTModelT<double> model(tiny_config(), 17);
  DegradationSpec spec = DegradationSpec::bicubic(4, 40);

  EvalReport plain = evaluate(model, data, spec, false);
  Image hr = load_png(data.abs_path(0));
  Rng rng(spec.hash() ^ 0x9e3779b97f4a7c15ull);
  Image lr = degrade(hr, spec, rng);
  Image sr = infer_image(model, lr);
  CHECK(plain.rows[0].psnr == psnr_rgb(hr, sr));

  EvalReport ens = evaluate(model, data, spec, true);
  Image sr8 = self_ensemble_infer(model, lr);
  CHECK(ens.rows[0].psnr == psnr_rgb(hr, sr8));
}
