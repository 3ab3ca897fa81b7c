#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "hst/optim.hpp"

using namespace hst;
using doctest::Contains;

namespace {

ParamStoreT<double> two_param_store() {
  ParamStoreT<double> store;
  store.add("a.weight", TensorT<double>({2, 3}, std::vector<double>{
                                                    0.5, -1.0, 2.0, 0.1, -0.2, 0.3}))
      .set_requires_grad(true);
  store.add("b.bias", TensorT<double>({2}, std::vector<double>{1.0, -1.0}))
      .set_requires_grad(true);
  return store;
}

void fill_grad(TensorT<double>& t, const std::vector<double>& g) {
  double* p = t.grad();
  for (size_t i = 0; i < g.size(); ++i) p[i] = g[i];
}

}  // namespace

TEST_CASE("moment buffers mirror parameter shapes") {
  ParamStoreT<double> params = two_param_store();
  AdamStateT<double> state = AdamStateT<double>::init(params);
  CHECK(state.step == 0);
  for (const std::string& name : params.names()) {
    CHECK(state.m.at(name).shape() == params.at(name).shape());
    CHECK(state.v.at(name).shape() == params.at(name).shape());
    for (double x : state.m.at(name).values()) CHECK(x == 0.0);
  }
}

TEST_CASE("zero gradients advance the step but leave parameters alone") {
  ParamStoreT<double> params = two_param_store();
  AdamStateT<double> state = AdamStateT<double>::init(params);
  std::vector<double> before(params.at("a.weight").values().begin(),
                             params.at("a.weight").values().end());
  params.at("a.weight").zero_grad();
  params.at("b.bias").zero_grad();
  adam_step(params, state, 1e-3);
  CHECK(state.step == 1);
  for (size_t i = 0; i < before.size(); ++i)
    CHECK(params.at("a.weight").values()[i] == before[i]);
}

TEST_CASE("first step moves each element by about lr toward -sign(grad)") {
  ParamStoreT<double> params = two_param_store();
  AdamStateT<double> state = AdamStateT<double>::init(params);
  std::vector<double> ga = {0.3, -0.7, 1.5, -2.0, 0.01, -0.04};
  std::vector<double> gb = {5.0, -0.002};
  std::vector<double> wa(params.at("a.weight").values().begin(),
                         params.at("a.weight").values().end());
  std::vector<double> wb(params.at("b.bias").values().begin(),
                         params.at("b.bias").values().end());
  fill_grad(params.at("a.weight"), ga);
  fill_grad(params.at("b.bias"), gb);
  const double lr = 1e-3;
  adam_step(params, state, lr);
  // First-step algebra: m-hat = g, v-hat = g^2, so the update is
  // lr * g / (|g| + eps) = lr * sign(g) up to eps/|g| relative slack.
  for (size_t i = 0; i < ga.size(); ++i) {
    double delta = params.at("a.weight").values()[i] - wa[i];
    double want = -lr * (ga[i] > 0 ? 1.0 : -1.0);
    CHECK(std::abs(delta - want) <= lr * 1e-5);
  }
  for (size_t i = 0; i < gb.size(); ++i) {
    double delta = params.at("b.bias").values()[i] - wb[i];
    double want = -lr * (gb[i] > 0 ? 1.0 : -1.0);
    CHECK(std::abs(delta - want) <= lr * 1e-4);  // |g|=0.002 feels eps more
  }
}

TEST_CASE("three steps on a 1-D quadratic match a scalar reference to 1e-12") {
  ParamStoreT<double> params;
  params.add("w", TensorT<double>({1}, std::vector<double>{3.0}))
      .set_requires_grad(true);
  AdamStateT<double> state = AdamStateT<double>::init(params);
  const double lr = 0.05, target = 1.0;

  // Inline scalar Adam on f(w) = 0.5 (w - target)^2, grad = w - target.
  double rw = 3.0, rm = 0.0, rv = 0.0;
  for (int step = 1; step <= 3; ++step) {
    double g = rw - target;
    rm = 0.9 * rm + 0.1 * g;
    rv = 0.999 * rv + 0.001 * g * g;
    double mh = rm / (1.0 - std::pow(0.9, step));
    double vh = rv / (1.0 - std::pow(0.999, step));
    rw -= lr * mh / (std::sqrt(vh) + 1e-8);
  }

  for (int step = 0; step < 3; ++step) {
    TensorT<double>& w = params.at("w");
    w.zero_grad();
    w.grad()[0] = w.values()[0] - target;
    adam_step(params, state, lr);
  }
  CHECK(params.at("w").values()[0] == doctest::Approx(rw).epsilon(1e-12));
  CHECK(state.step == 3);
}

TEST_CASE("a parameter without a gradient is reported by name") {
  ParamStoreT<double> params = two_param_store();
  AdamStateT<double> state = AdamStateT<double>::init(params);
  params.at("a.weight").zero_grad();  // b.bias left without a grad buffer
  CHECK_THROWS_WITH_AS(adam_step(params, state, 1e-3), Contains("b.bias"),
                       std::runtime_error);
}

TEST_CASE("global-norm clipping equals pre-scaling the gradients") {
  // Scaling all grads by 1000 and clipping back to the original norm must
  // reproduce the unclipped trajectory exactly.
  ParamStoreT<double> a = two_param_store();
  ParamStoreT<double> b = two_param_store();
  std::vector<double> ga = {0.3, -0.7, 1.5, -2.0, 0.01, -0.04};
  std::vector<double> gb = {0.5, -0.25};
  double norm = 0.0;
  for (double g : ga) norm += g * g;
  for (double g : gb) norm += g * g;
  norm = std::sqrt(norm);

  AdamStateT<double> sa = AdamStateT<double>::init(a);
  fill_grad(a.at("a.weight"), ga);
  fill_grad(a.at("b.bias"), gb);
  adam_step(a, sa, 1e-3);

  AdamConfig clip_cfg;
  clip_cfg.clip_norm = norm;
  AdamStateT<double> sb = AdamStateT<double>::init(b, clip_cfg);
  std::vector<double> ga_big = ga, gb_big = gb;
  for (double& g : ga_big) g *= 1000.0;
  for (double& g : gb_big) g *= 1000.0;
  fill_grad(b.at("a.weight"), ga_big);
  fill_grad(b.at("b.bias"), gb_big);
  adam_step(b, sb, 1e-3);

  for (const char* name : {"a.weight", "b.bias"}) {
    auto va = a.at(name).values();
    auto vb = b.at(name).values();
    for (size_t i = 0; i < va.size(); ++i)
      CHECK(va[i] == doctest::Approx(vb[i]).epsilon(1e-12));
  }
}

TEST_CASE("lr schedule anchors and shape") {
  TrainStage stage;
  stage.name = "pretrain";
  stage.lr_initial = 2e-4;
  stage.lr_milestones = {100000, 250000};
  stage.total_iters = 400000;
  stage.validate();

  CHECK(lr_at(stage, 0) == doctest::Approx(2e-4).epsilon(1e-15));
  CHECK(lr_at(stage, 99999) == doctest::Approx(2e-4).epsilon(1e-15));
  CHECK(lr_at(stage, 100000) == doctest::Approx(1e-4).epsilon(1e-15));
  CHECK(lr_at(stage, 250000) == doctest::Approx(5e-5).epsilon(1e-15));
  CHECK(lr_at(stage, 399999) == doctest::Approx(5e-5).epsilon(1e-15));

  SUBCASE("no milestones means a constant lr") {
    TrainStage flat = stage;
    flat.lr_milestones.clear();
    for (long long it : {0LL, 1LL, 399999LL})
      CHECK(lr_at(flat, it) == doctest::Approx(2e-4).epsilon(1e-15));
  }
  SUBCASE("non-increasing with exactly one factor-2 drop per milestone") {
    int drops = 0;
    double prev = lr_at(stage, 0);
    for (long long it = 1; it < stage.total_iters; it += 997) {
      double cur = lr_at(stage, it);
      CHECK(cur <= prev);
      if (cur < prev) {
        CHECK(cur == doctest::Approx(prev * 0.5).epsilon(1e-15));
        ++drops;
      }
      prev = cur;
    }
    CHECK(drops == 2);
  }
}

TEST_CASE("stage validation names the violated constraint") {
  TrainStage stage;
  stage.name = "s";
  stage.total_iters = 100;

  SUBCASE("non-positive lr") {
    stage.lr_initial = 0.0;
    CHECK_THROWS_WITH_AS(stage.validate(), Contains("lr_initial"),
                         std::invalid_argument);
  }
  SUBCASE("milestones must increase strictly") {
    stage.lr_milestones = {10, 10};
    CHECK_THROWS_WITH_AS(stage.validate(), Contains("strictly increasing"),
                         std::invalid_argument);
  }
  SUBCASE("milestones must stay below the iteration budget") {
    stage.lr_milestones = {100};
    CHECK_THROWS_WITH_AS(stage.validate(), Contains("total_iters"),
                         std::invalid_argument);
  }
  SUBCASE("empty name") {
    stage.name.clear();
    CHECK_THROWS_AS(stage.validate(), std::invalid_argument);
  }
}

TEST_CASE("loss config dispatch and parsing") {
  TensorT<double> pred({4}, std::vector<double>{1.0, 2.0, 3.0, 4.0});
  TensorT<double> target({4}, std::vector<double>{1.5, 1.5, 3.5, 3.5});

  LossConfig l1 = LossConfig::parse("l1");
  CHECK(loss_value(l1, pred, target).values()[0] == doctest::Approx(0.5));
  LossConfig mse = LossConfig::parse("mse");
  CHECK(loss_value(mse, pred, target).values()[0] == doctest::Approx(0.25));
  LossConfig cb = LossConfig::parse("charbonnier");
  CHECK(cb.epsilon == 1e-9);
  CHECK(loss_value(cb, pred, pred).values()[0] ==
        doctest::Approx(std::sqrt(1e-9)).epsilon(1e-9));

  CHECK(LossConfig::parse("mse").kind_name() == "mse");
  CHECK_THROWS_AS(LossConfig::parse("huber"), std::invalid_argument);
  LossConfig bad = cb;
  bad.epsilon = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
