#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "hst/checkpoint.hpp"
#include "hst/rng.hpp"

using namespace hst;
using doctest::Contains;

namespace {

std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

HSTConfig tiny_config() {
  HSTConfig c;
  c.branches = 1;
  c.channels = {8};
  c.rstbs = {1};
  c.stl_per_rstb = 2;
  c.window = 4;
  c.heads = 2;
  c.mlp_ratio = 2.0;
  return c;
}

template <class T>
ParamStoreT<T> random_store(uint64_t seed) {
  Rng rng(seed);
  ParamStoreT<T> store;
  store.add("alpha.weight", TensorT<T>({3, 2}));
  store.add("alpha.bias", TensorT<T>({3}));
  store.add("beta.weight", TensorT<T>({2, 2, 3, 3}));
  for (const std::string& name : store.names())
    for (T& x : store.at(name).values())
      x = static_cast<T>(rng.uniform(-2.0, 2.0));
  return store;
}

template <class T>
void check_stores_equal(const ParamStoreT<T>& a, const ParamStoreT<T>& b) {
  REQUIRE(a.names() == b.names());
  for (const std::string& name : a.names()) {
    REQUIRE(a.at(name).shape() == b.at(name).shape());
    auto va = a.at(name).values();
    auto vb = b.at(name).values();
    for (size_t i = 0; i < va.size(); ++i) CHECK(va[i] == vb[i]);
  }
}

}  // namespace

TEST_CASE("checkpoints round-trip parameters, moments, and meta bitwise") {
  std::string path = tmp_path("ckpt_roundtrip.hstckpt");
  Checkpoint64 ckpt;
  ckpt.config = tiny_config();
  ckpt.params = random_store<double>(7);
  ckpt.opt_m = random_store<double>(8);
  ckpt.opt_v = random_store<double>(9);
  ckpt.meta["iter"] = "12345";
  ckpt.meta["rng"] = "18446744073709551615";
  ckpt.meta["adam.step"] = "12345";
  ckpt.meta["stage"] = "pretrain bicubic only";  // spaces survive

  // Values that lose precision under naive text formatting.
  ckpt.params.at("alpha.bias").values()[0] = 1e-300;
  ckpt.params.at("alpha.bias").values()[1] = -0.0;
  ckpt.params.at("alpha.bias").values()[2] = 3.141592653589793;

  save_checkpoint(path, ckpt);
  Checkpoint64 back = load_checkpoint<double>(path);

  check_stores_equal(ckpt.params, back.params);
  check_stores_equal(ckpt.opt_m, back.opt_m);
  check_stores_equal(ckpt.opt_v, back.opt_v);
  CHECK(back.meta.at("stage") == "pretrain bicubic only");
  CHECK(back.meta_int("iter") == 12345);
  CHECK(back.meta_int("missing", -1) == -1);
  CHECK(back.has_optimizer());
  CHECK(back.config.channels == ckpt.config.channels);
  CHECK(back.config.mlp_ratio == ckpt.config.mlp_ratio);
  CHECK(std::signbit(back.params.at("alpha.bias").values()[1]));
  std::remove(path.c_str());
}

TEST_CASE("inference checkpoints may omit optimizer state") {
  std::string path = tmp_path("ckpt_lean.hstckpt");
  Checkpoint ckpt;
  ckpt.config = tiny_config();
  ckpt.params = random_store<float>(3);
  save_checkpoint(path, ckpt);
  Checkpoint back = load_checkpoint<float>(path);
  CHECK_FALSE(back.has_optimizer());
  check_stores_equal(ckpt.params, back.params);
  CHECK(checkpoint_dtype(path) == "f32");
  std::remove(path.c_str());
}

TEST_CASE("a full model survives the save/load/rebuild cycle bitwise") {
  std::string path = tmp_path("ckpt_model.hstckpt");
  HSTConfig cfg = tiny_config();
  HSTModelT<float> model(cfg, 42);

  TensorT<float> input({1, 3, 8, 8});
  Rng rng(11);
  for (float& x : input.values()) x = static_cast<float>(rng.uniform01());
  TensorT<float> before = model.forward(input);

  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.params = model.params();
  save_checkpoint(path, ckpt);

  Checkpoint back = load_checkpoint<float>(path);
  HSTModelT<float> rebuilt(back.config, std::move(back.params));
  TensorT<float> after = rebuilt.forward(input);

  REQUIRE(before.shape() == after.shape());
  auto vb = before.values();
  auto va = after.values();
  for (size_t i = 0; i < vb.size(); ++i) CHECK(vb[i] == va[i]);
  std::remove(path.c_str());
}

TEST_CASE("dtype mismatches are refused with both names") {
  std::string path = tmp_path("ckpt_dtype.hstckpt");
  Checkpoint ckpt;
  ckpt.config = tiny_config();
  ckpt.params = random_store<float>(3);
  save_checkpoint(path, ckpt);
  try {
    load_checkpoint<double>(path);
    FAIL("expected a dtype error");
  } catch (const std::runtime_error& e) {
    CHECK_MESSAGE(std::string(e.what()).find("f32") != std::string::npos, e.what());
    CHECK_MESSAGE(std::string(e.what()).find("f64") != std::string::npos, e.what());
  }
  std::remove(path.c_str());
}

TEST_CASE("malformed files are rejected with a reason") {
  std::string path = tmp_path("ckpt_bad.hstckpt");

  SUBCASE("missing file") {
    CHECK_THROWS_WITH_AS(load_checkpoint<float>(tmp_path("ckpt_nope")),
                         Contains("cannot open"), std::runtime_error);
  }
  SUBCASE("wrong magic") {
    std::ofstream(path) << "not a checkpoint\n";
    CHECK_THROWS_WITH_AS(load_checkpoint<float>(path), Contains("magic"),
                         std::runtime_error);
  }
  SUBCASE("header without end") {
    std::ofstream(path) << "hstckpt 1\ndtype f32\n";
    CHECK_THROWS_WITH_AS(load_checkpoint<float>(path), Contains("end"),
                         std::runtime_error);
  }
  SUBCASE("truncated payload names the tensor") {
    Checkpoint ckpt;
    ckpt.config = tiny_config();
    ckpt.params = random_store<float>(3);
    save_checkpoint(path, ckpt);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
    CHECK_THROWS_WITH_AS(load_checkpoint<float>(path),
                         Contains("beta.weight"), std::runtime_error);
  }
  std::remove(path.c_str());
}
