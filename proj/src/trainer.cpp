#include "hst/trainer.hpp"

#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "hst/losses.hpp"
#include "hst/metrics.hpp"
#include "hst/png_io.hpp"

namespace hst {

namespace {

Image crop_image(const Image& img, int top, int left, int h, int w) {
  Image out(h, w, img.channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(y, x, c) = img.at(top + y, left + x, c);
  return out;
}

// Writes an RGB image into batch slot b of a [B,3,H,W] tensor, /255.
template <class T>
void put_patch(TensorT<T>& dst, int b, const Image& img) {
  T* p = dst.data();
  const size_t hw = static_cast<size_t>(img.height) * img.width;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        p[(static_cast<size_t>(b) * 3 + c) * hw + static_cast<size_t>(y) * img.width + x] =
            static_cast<T>(img.at(y, x, c)) / T(255);
}

template <class T>
ParamStoreT<T> clone_store(const ParamStoreT<T>& src, bool with_grads) {
  ParamStoreT<T> out;
  for (const std::string& name : src.names()) {
    TensorT<T>& t = out.add(name, src.at(name).clone());
    if (with_grads) t.set_requires_grad(true);
  }
  return out;
}

std::string fmt(const char* f, ...) {
  char buf[256];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

}  // namespace

template <class T>
BatchT<T> sample_batch(const DatasetIndex& data, const TrainStage& stage,
                       Rng& rng, const LogFn& warn) {
  if (data.empty()) throw std::runtime_error("sample_batch: dataset is empty");
  const int scale = stage.degradation.scale;
  const int hr_patch = kLrPatch * scale;

  bool any_usable = false;
  for (const DatasetEntry& e : data.entries)
    if (e.channels == 3 && e.height / scale >= kLrPatch &&
        e.width / scale >= kLrPatch) {
      any_usable = true;
      break;
    }
  if (!any_usable)
    throw std::runtime_error(
        "sample_batch: no RGB image in the dataset is large enough for a " +
        std::to_string(hr_patch) + "x" + std::to_string(hr_patch) + " crop");

  BatchT<T> batch;
  batch.lr = TensorT<T>({stage.batch_size, 3, kLrPatch, kLrPatch});
  batch.hr = TensorT<T>({stage.batch_size, 3, hr_patch, hr_patch});

  for (int b = 0; b < stage.batch_size;) {
    int idx = static_cast<int>(rng.below(data.size()));
    const DatasetEntry& e = data.entries[idx];
    int lh = e.height / scale, lw = e.width / scale;
    if (e.channels != 3 || lh < kLrPatch || lw < kLrPatch) {
      if (warn)
        warn("sample_batch: skipping " + e.rel_path +
             (e.channels != 3 ? " (not RGB)" : " (smaller than a crop)"));
      continue;
    }
    int ly = rng.range_int(0, lh - kLrPatch);
    int lx = rng.range_int(0, lw - kLrPatch);
    int k = static_cast<int>(rng.below(8));

    Image full = load_png(data.abs_path(idx));
    Image hr_crop = crop_image(full, ly * scale, lx * scale, hr_patch, hr_patch);
    Image lr_crop = degrade(hr_crop, stage.degradation, rng);
    put_patch(batch.lr, b, dihedral_apply(lr_crop, k));
    put_patch(batch.hr, b, dihedral_apply(hr_crop, k));
    batch.sources.push_back({idx, ly, lx, k});
    ++b;
  }
  return batch;
}

template <class T>
CheckpointT<T> init_checkpoint(const HSTConfig& config, uint64_t seed) {
  HSTModelT<T> model(config, seed);
  CheckpointT<T> ckpt;
  ckpt.config = config;
  ckpt.params = clone_store(model.params(), false);
  ckpt.meta["init_seed"] = std::to_string(seed);
  return ckpt;
}

template <class T>
CheckpointT<T> run_stage(const TrainStage& stage, const CheckpointT<T>& start,
                         const DatasetIndex& train, const TrainerOptions& opt) {
  stage.validate();
  if (stage.total_iters == 0) return start;

  LogFn log = opt.log ? opt.log : [](const std::string& s) {
    std::fprintf(stderr, "%s\n", s.c_str());
  };

  HSTModelT<T> model(start.config, clone_store(start.params, true));

  // A checkpoint from this very stage resumes mid-run; anything else (fresh
  // init or a previous stage's output) adopts the weights and starts over.
  auto it = start.meta.find("stage");
  const bool resuming = it != start.meta.end() && it->second == stage.name;
  long long iter = resuming ? start.meta_int("iter") : 0;
  Rng rng(opt.seed);
  if (resuming && start.meta.count("rng"))
    rng.state = std::stoull(start.meta.at("rng"));

  AdamStateT<T> adam = AdamStateT<T>::init(model.params(), opt.adam);
  if (resuming && start.has_optimizer()) {
    adam.m = clone_store(start.opt_m, false);
    adam.v = clone_store(start.opt_v, false);
    adam.step = start.meta_int("adam.step");
  }

  auto snapshot = [&](long long done) {
    CheckpointT<T> ck;
    ck.config = start.config;
    ck.meta = start.meta;
    ck.params = model.params();
    ck.opt_m = adam.m;
    ck.opt_v = adam.v;
    ck.meta["stage"] = stage.name;
    ck.meta["iter"] = std::to_string(done);
    ck.meta["rng"] = std::to_string(rng.state);
    ck.meta["adam.step"] = std::to_string(adam.step);
    return ck;
  };

  for (; iter < stage.total_iters; ++iter) {
    double lr = lr_at(stage, iter);
    BatchT<T> batch = sample_batch<T>(train, stage, rng, log);

    GraphT<T> tape;
    TensorT<T> loss;
    {
      typename GraphT<T>::Scope scope(tape);
      TensorT<T> pred = model.forward(batch.lr);
      loss = loss_value(stage.loss, pred, batch.hr);
    }
    double lval = static_cast<double>(loss.values()[0]);
    if (!std::isfinite(lval)) {
      namespace fs = std::filesystem;
      fs::path dir = opt.out_dir.empty() ? fs::temp_directory_path()
                                         : fs::path(opt.out_dir);
      fs::create_directories(dir);
      std::string dump_path =
          (dir / (stage.name + "_diverged_iter" + std::to_string(iter) +
                  ".hstckpt"))
              .string();
      CheckpointT<T> dump;
      dump.config = start.config;
      dump.params.add("batch.lr", batch.lr);
      dump.params.add("batch.hr", batch.hr);
      dump.meta["stage"] = stage.name;
      dump.meta["iter"] = std::to_string(iter);
      std::string sources;
      for (const auto& s : batch.sources)
        sources += fmt("%s%d:%d:%d:%d", sources.empty() ? "" : ",", s.image,
                       s.lr_y, s.lr_x, s.dihedral);
      dump.meta["batch.sources"] = sources;
      save_checkpoint(dump_path, dump);
      throw std::runtime_error(
          fmt("stage \"%s\": non-finite loss at iter %lld; offending batch "
              "dumped to %s",
              stage.name.c_str(), iter, dump_path.c_str()));
    }

    for (const std::string& name : model.params().names())
      model.params().at(name).zero_grad();
    tape.backward(loss);
    adam_step(model.params(), adam, static_cast<T>(lr));

    const long long done = iter + 1;
    if (opt.log_every > 0 &&
        (done % opt.log_every == 0 || done == stage.total_iters))
      log(fmt("iter %lld lr %.10g loss %.17g", done, lr, lval));
    if (opt.val_every > 0 && opt.val_set && done % opt.val_every == 0) {
      DatasetIndex sub;
      sub.root = opt.val_set->root;
      size_t n = std::min<size_t>(opt.val_set->size(),
                                  static_cast<size_t>(opt.val_limit));
      sub.entries.assign(opt.val_set->entries.begin(),
                         opt.val_set->entries.begin() + n);
      EvalReport r = evaluate(model, sub, stage.degradation, false);
      log(fmt("iter %lld val_psnr %.6f val_ssim %.6f", done, r.mean_psnr,
              r.mean_ssim));
    }
    if (opt.checkpoint_every > 0 && !opt.out_dir.empty() &&
        done % opt.checkpoint_every == 0 && done != stage.total_iters) {
      std::filesystem::create_directories(opt.out_dir);
      save_checkpoint((std::filesystem::path(opt.out_dir) /
                       (stage.name + "_iter" + std::to_string(done) +
                        ".hstckpt"))
                          .string(),
                      snapshot(done));
    }
  }
  return snapshot(stage.total_iters);
}

template <class T>
ImageF infer_real(const HSTModelT<T>& model, const Image& lr) {
  return image_from_tensor(model.forward(tensor_from_image<T>(to_real(lr))));
}

template <class T>
Image infer_image(const HSTModelT<T>& model, const Image& lr) {
  return to_bytes(infer_real(model, lr));
}

ImageF self_ensemble_real(const std::function<ImageF(const Image&)>& single,
                          const Image& lr) {
  ImageF acc;
  for (int k = 0; k < 8; ++k) {
    ImageF inv = dihedral_apply(single(dihedral_apply(lr, k)),
                                dihedral_inverse(k));
    if (k == 0) {
      acc = std::move(inv);
    } else {
      for (size_t i = 0; i < acc.samples.size(); ++i)
        acc.samples[i] += inv.samples[i];
    }
  }
  for (double& v : acc.samples) v /= 8.0;
  return acc;
}

template <class T>
Image self_ensemble_infer(const HSTModelT<T>& model, const Image& lr) {
  return to_bytes(self_ensemble_real(
      [&](const Image& img) { return infer_real(model, img); }, lr));
}

EvalReport evaluate_with(const std::function<Image(const Image&)>& sr,
                         const DatasetIndex& data, const DegradationSpec& spec) {
  spec.validate();
  EvalReport report;
  double sum_p = 0.0, sum_s = 0.0;
  for (size_t i = 0; i < data.size(); ++i) {
    Image hr = load_png(data.abs_path(i));
    int h = hr.height - hr.height % spec.scale;
    int w = hr.width - hr.width % spec.scale;
    if (h != hr.height || w != hr.width) hr = crop_image(hr, 0, 0, h, w);

    // Per-image stream derived from the spec so randomized extra stages
    // reproduce exactly on rerun.
    Rng rng(spec.hash() ^ (0x9e3779b97f4a7c15ull * (i + 1)));
    Image lr = degrade(hr, spec, rng);
    Image up = sr(lr);
    if (!up.same_geometry(hr))
      throw std::runtime_error("evaluate: SR output geometry mismatch on " +
                               data.entries[i].rel_path);
    EvalRow row;
    row.name = data.entries[i].rel_path;
    row.psnr = psnr_rgb(hr, up);
    row.ssim = ssim(hr, up);
    sum_p += row.psnr;
    sum_s += row.ssim;
    report.rows.push_back(std::move(row));
  }
  if (!report.rows.empty()) {
    report.mean_psnr = sum_p / static_cast<double>(report.rows.size());
    report.mean_ssim = sum_s / static_cast<double>(report.rows.size());
  }
  return report;
}

template <class T>
EvalReport evaluate(const HSTModelT<T>& model, const DatasetIndex& data,
                    const DegradationSpec& spec, bool ensemble) {
  return evaluate_with(
      [&](const Image& lr) {
        return ensemble ? self_ensemble_infer(model, lr)
                        : infer_image(model, lr);
      },
      data, spec);
}

std::string format_report(const EvalReport& report) {
  std::string out;
  auto num = [](double v, const char* f) {
    return std::isinf(v) ? std::string("inf") : fmt(f, v);
  };
  for (const EvalRow& r : report.rows)
    out += r.name + "  psnr " + num(r.psnr, "%.4f") + "  ssim " +
           num(r.ssim, "%.6f") + "\n";
  out += fmt("mean over %zu images  psnr ", report.rows.size()) +
         num(report.mean_psnr, "%.4f") + "  ssim " +
         num(report.mean_ssim, "%.6f") + "\n";
  return out;
}

template BatchT<float> sample_batch<float>(const DatasetIndex&, const TrainStage&, Rng&, const LogFn&);
template BatchT<double> sample_batch<double>(const DatasetIndex&, const TrainStage&, Rng&, const LogFn&);
template CheckpointT<float> init_checkpoint<float>(const HSTConfig&, uint64_t);
template CheckpointT<double> init_checkpoint<double>(const HSTConfig&, uint64_t);
template CheckpointT<float> run_stage<float>(const TrainStage&, const CheckpointT<float>&, const DatasetIndex&, const TrainerOptions&);
template CheckpointT<double> run_stage<double>(const TrainStage&, const CheckpointT<double>&, const DatasetIndex&, const TrainerOptions&);
template Image infer_image<float>(const HSTModelT<float>&, const Image&);
template Image infer_image<double>(const HSTModelT<double>&, const Image&);
template ImageF infer_real<float>(const HSTModelT<float>&, const Image&);
template ImageF infer_real<double>(const HSTModelT<double>&, const Image&);
template Image self_ensemble_infer<float>(const HSTModelT<float>&, const Image&);
template Image self_ensemble_infer<double>(const HSTModelT<double>&, const Image&);
template EvalReport evaluate<float>(const HSTModelT<float>&, const DatasetIndex&, const DegradationSpec&, bool);
template EvalReport evaluate<double>(const HSTModelT<double>&, const DatasetIndex&, const DegradationSpec&, bool);

}  // namespace hst
