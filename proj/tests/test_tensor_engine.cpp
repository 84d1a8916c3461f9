#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "glioma/optim.hpp"
#include "glioma/tensor.hpp"
#include "oracles.hpp"

using namespace glioma;

namespace {

template <class T>
TensorT<T> random_tensor(typename TensorT<T>::Shape s, Rng& rng,
                         bool requires_grad = false, double scale = 1.0) {
  TensorT<T> t = TensorT<T>::zeros(s, requires_grad);
  for (auto& v : t.values()) v = T(rng.normal() * scale);
  return t;
}

// random probabilities bounded away from 0/1 plus a one-hot target
template <class T>
std::pair<TensorT<T>, TensorT<T>> random_probs_target(
    typename TensorT<T>::Shape s, Rng& rng) {
  TensorT<T> probs = TensorT<T>::zeros(s, true);
  TensorT<T> target = TensorT<T>::zeros(s);
  const int64_t C = s[1];
  const int64_t spatial = s[2] * s[3] * s[4];
  for (int64_t b = 0; b < s[0]; ++b) {
    for (int64_t i = 0; i < spatial; ++i) {
      double sum = 0;
      std::vector<double> raw(static_cast<size_t>(C));
      for (int64_t c = 0; c < C; ++c) {
        raw[size_t(c)] = rng.uniform(0.05, 1.0);
        sum += raw[size_t(c)];
      }
      for (int64_t c = 0; c < C; ++c) {
        probs.values()[size_t((b * C + c) * spatial + i)] =
            T(raw[size_t(c)] / sum);
      }
      int64_t hot = int64_t(rng.below(uint64_t(C)));
      target.values()[size_t((b * C + hot) * spatial + i)] = T(1);
    }
  }
  return {probs, target};
}

}  // namespace

TEST_CASE("conv3d identity kernel reproduces the input exactly") {
  Rng rng(1);
  Tensor5 x = random_tensor<float>({1, 2, 4, 5, 6}, rng);
  Tensor5 w = Tensor5::zeros({2, 2, 3, 3, 3});
  w.at(0, 0, 1, 1, 1) = 1.0f;
  w.at(1, 1, 1, 1, 1) = 1.0f;
  Tensor5 out = conv3d(x, w, Tensor5());
  CHECK(out.values() == x.values());
}

TEST_CASE("all-ones 3x3x3 kernel sums the interior neighborhood") {
  Tensor5 x = Tensor5::zeros({1, 1, 4, 4, 4});
  for (auto& v : x.values()) v = 1.0f;
  Tensor5 w = Tensor5::zeros({1, 1, 3, 3, 3});
  for (auto& v : w.values()) v = 1.0f;
  Tensor5 out = conv3d(x, w, Tensor5());
  CHECK(out.at(0, 0, 1, 1, 1) == 27.0f);
  CHECK(out.at(0, 0, 0, 0, 0) == 8.0f);  // corner sees 2x2x2
}

TEST_CASE("conv3d is linear in input and weight") {
  Rng rng(3);
  using T = double;
  auto a = random_tensor<T>({1, 2, 4, 4, 4}, rng);
  auto b = random_tensor<T>({1, 2, 4, 4, 4}, rng);
  auto w = random_tensor<T>({3, 2, 3, 3, 3}, rng);
  auto w2 = random_tensor<T>({3, 2, 3, 3, 3}, rng);

  TensorT<T> ab = TensorT<T>::zeros({1, 2, 4, 4, 4});
  for (int64_t i = 0; i < ab.numel(); ++i) {
    ab.values()[size_t(i)] = a.values()[size_t(i)] + b.values()[size_t(i)];
  }
  auto lhs = conv3d(ab, w, TensorT<T>());
  auto ra = conv3d(a, w, TensorT<T>());
  auto rb = conv3d(b, w, TensorT<T>());
  for (int64_t i = 0; i < lhs.numel(); ++i) {
    CHECK(lhs.values()[size_t(i)] ==
          doctest::Approx(ra.values()[size_t(i)] + rb.values()[size_t(i)])
              .epsilon(1e-12));
  }

  TensorT<T> ww = TensorT<T>::zeros({3, 2, 3, 3, 3});
  for (int64_t i = 0; i < ww.numel(); ++i) {
    ww.values()[size_t(i)] = w.values()[size_t(i)] + w2.values()[size_t(i)];
  }
  auto lhs_w = conv3d(a, ww, TensorT<T>());
  auto r1 = conv3d(a, w, TensorT<T>());
  auto r2 = conv3d(a, w2, TensorT<T>());
  for (int64_t i = 0; i < lhs_w.numel(); ++i) {
    CHECK(lhs_w.values()[size_t(i)] ==
          doctest::Approx(r1.values()[size_t(i)] + r2.values()[size_t(i)])
              .epsilon(1e-12));
  }
}

TEST_CASE("pointwise op examples") {
  SUBCASE("relu") {
    Tensor5 x = Tensor5::from_values({1, 1, 1, 1, 3}, {-1, 0, 2});
    Tensor5 y = relu(x);
    CHECK(y.values() == std::vector<float>{0, 0, 2});
  }
  SUBCASE("max pool takes the block maximum") {
    Tensor5 x = Tensor5::zeros({1, 1, 2, 2, 2});
    for (int64_t i = 0; i < 8; ++i) x.values()[size_t(i)] = float(i + 1);
    Tensor5 y = max_pool3d(x);
    REQUIRE(y.numel() == 1);
    CHECK(y.values()[0] == 8.0f);
  }
  SUBCASE("max pool ties break toward the first index") {
    Tensor5 x = Tensor5::zeros({1, 1, 2, 2, 2}, true);
    for (auto& v : x.values()) v = 5.0f;
    Tensor5 y = max_pool3d(x);
    backward(sum_all(y));
    CHECK(x.grad()[0] == 1.0f);  // lexicographically first voxel won
    for (size_t i = 1; i < 8; ++i) CHECK(x.grad()[i] == 0.0f);
  }
  SUBCASE("upsample keeps constants constant") {
    Tensor5 x = Tensor5::zeros({1, 2, 2, 2, 2});
    for (auto& v : x.values()) v = 1.5f;
    Tensor5 y = upsample_trilinear2(x);
    CHECK(y.shape() == Tensor5::Shape{1, 2, 4, 4, 4});
    for (float v : y.values()) CHECK(v == 1.5f);
  }
  SUBCASE("concat channel count is the sum") {
    Tensor5 a = Tensor5::zeros({1, 2, 2, 2, 2});
    Tensor5 b = Tensor5::zeros({1, 3, 2, 2, 2});
    CHECK(concat_channels(a, b).shape()[1] == 5);
  }
  SUBCASE("odd dims are rejected by pooling") {
    Tensor5 x = Tensor5::zeros({1, 1, 3, 2, 2});
    CHECK_THROWS_AS(max_pool3d(x), Error);
  }
}

TEST_CASE("instance norm examples") {
  SUBCASE("constant channel maps to zeros") {
    Tensor5 x = Tensor5::zeros({1, 2, 2, 2, 2});
    for (auto& v : x.values()) v = 7.0f;
    Tensor5 y = instance_norm(x);
    for (float v : y.values()) CHECK(v == 0.0f);
  }
  SUBCASE("two-level channel maps to plus/minus one") {
    Tensor5 x = Tensor5::zeros({1, 1, 1, 1, 2});
    x.values() = {1.0f, 3.0f};
    Tensor5 y = instance_norm(x);
    CHECK(std::fabs(y.values()[0] + 1.0f) < 1e-3);
    CHECK(std::fabs(y.values()[1] - 1.0f) < 1e-3);
  }
}

TEST_CASE("softmax examples and normalization") {
  SUBCASE("uniform logits give 1/4") {
    Tensor5 x = Tensor5::zeros({1, 4, 1, 1, 2});
    Tensor5 y = softmax_channels(x);
    for (float v : y.values()) CHECK(v == doctest::Approx(0.25));
  }
  SUBCASE("a large gap approaches one-hot") {
    Tensor5 x = Tensor5::zeros({1, 3, 1, 1, 1});
    x.values() = {50.0f, 0.0f, 0.0f};
    Tensor5 y = softmax_channels(x);
    CHECK(y.values()[0] > 0.999999f);
  }
  SUBCASE("channels sum to one for random logits") {
    Rng rng(5);
    Tensor5 x = random_tensor<float>({2, 4, 2, 3, 2}, rng, false, 3.0);
    Tensor5 y = softmax_channels(x);
    const int64_t spatial = 2 * 3 * 2;
    for (int64_t b = 0; b < 2; ++b) {
      for (int64_t i = 0; i < spatial; ++i) {
        double sum = 0;
        for (int64_t c = 0; c < 4; ++c) {
          double v = y.values()[size_t((b * 4 + c) * spatial + i)];
          CHECK(v > 0.0);
          CHECK(v < 1.0);
          sum += v;
        }
        CHECK(std::fabs(sum - 1.0) < 1e-6);
      }
    }
  }
}

TEST_CASE("dice+ce loss examples") {
  SUBCASE("perfect prediction scores almost zero") {
    Tensor5 target = Tensor5::zeros({1, 4, 2, 2, 2});
    for (int64_t i = 0; i < 8; ++i) {
      int64_t c = i % 4;
      target.values()[size_t(c * 8 + i)] = 1.0f;
    }
    Tensor5 probs = Tensor5::from_values({1, 4, 2, 2, 2}, target.values());
    Tensor5 loss = dice_ce_loss(probs, target, {1, 1, 1, 1});
    CHECK(loss.scalar() < 1e-3);
    CHECK(loss.scalar() >= 0.0f);
  }
  SUBCASE("uniform probabilities match the scalar oracle") {
    const int64_t C = 4, spatial = 8;
    Tensor5 probs = Tensor5::zeros({1, C, 2, 2, 2});
    for (auto& v : probs.values()) v = 0.25f;
    Tensor5 target = Tensor5::zeros({1, C, 2, 2, 2});
    for (int64_t i = 0; i < spatial; ++i) {
      target.values()[size_t((i % 2 == 0 ? 0 : 2) * spatial + i)] = 1.0f;
    }
    std::vector<double> p(probs.values().begin(), probs.values().end());
    std::vector<double> t(target.values().begin(), target.values().end());
    double expected = oracle::dice_ce_scalar(p, t, {1, 1, 1, 1}, C, spatial);
    Tensor5 loss = dice_ce_loss(probs, target, {1, 1, 1, 1});
    CHECK(double(loss.scalar()) == doctest::Approx(expected).epsilon(1e-6));
  }
  SUBCASE("loss is non-negative on random inputs") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      auto [probs, target] = random_probs_target<float>({1, 3, 2, 2, 2}, rng);
      Tensor5 loss = dice_ce_loss(probs, target, {1, 1, 1});
      CHECK(loss.scalar() >= 0.0f);
    }
  }
  SUBCASE("shape mismatch is rejected") {
    Tensor5 a = Tensor5::zeros({1, 4, 2, 2, 2});
    Tensor5 b = Tensor5::zeros({1, 4, 2, 2, 4});
    CHECK_THROWS_AS(dice_ce_loss(a, b, {1, 1, 1, 1}), Error);
  }
}

TEST_CASE("backward basics") {
  SUBCASE("grad of sum is all ones") {
    Rng rng(11);
    Tensor5 w = random_tensor<float>({1, 2, 2, 2, 2}, rng, true);
    backward(sum_all(w));
    for (float g : w.grad()) CHECK(g == 1.0f);
  }
  SUBCASE("gradients accumulate across backward calls") {
    Rng rng(12);
    Tensor5 w = random_tensor<float>({1, 1, 1, 1, 4}, rng, true);
    backward(sum_all(w));
    backward(sum_all(w));
    for (float g : w.grad()) CHECK(g == 2.0f);
  }
  SUBCASE("backward without a graph is an error") {
    Tensor5 plain = Tensor5::zeros({1, 1, 1, 1, 1});
    CHECK_THROWS_AS(backward(plain), Error);
    try { backward(plain); } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NoGraph);
    }
  }
  SUBCASE("backward requires a scalar") {
    Tensor5 x = Tensor5::zeros({1, 1, 1, 1, 3}, true);
    Tensor5 y = relu(x);
    CHECK_THROWS_AS(backward(y), Error);
  }
}

TEST_CASE("adam first step has magnitude near lr and clears gradients") {
  Parameter p = Parameter::make("w", {1, 1, 1, 1, 4});
  p.tensor.values() = {0, 0, 0, 0};
  p.tensor.grad() = {0.5f, -2.0f, 10.0f, -0.001f};
  AdamConfig cfg;
  cfg.lr = 1e-3;
  std::vector<Parameter*> params{&p};
  adam_step(params, cfg);
  for (int i = 0; i < 4; ++i) {
    double expected_sign = i % 2 == 0 ? -1.0 : 1.0;
    double v = p.tensor.values()[size_t(i)];
    CHECK(v * expected_sign > 0);
    CHECK(std::fabs(std::fabs(v) - cfg.lr) < cfg.lr * 0.02);
    CHECK(p.tensor.grad()[size_t(i)] == 0.0f);  // cleared on step
  }
  CHECK(p.step == 1);
}

TEST_CASE("finite differences validate every op gradient") {
  Rng rng(13);
  using T = double;

  SUBCASE("conv3d input, weight and bias") {
    auto x = random_tensor<T>({1, 2, 3, 4, 3}, rng, true);
    auto w = random_tensor<T>({2, 2, 3, 3, 3}, rng, true, 0.5);
    auto b = random_tensor<T>({1, 2, 1, 1, 1}, rng, true);
    auto make = [&] { return sum_all(relu(conv3d(x, w, b))); };
    CHECK(oracle::fd_check(x, make).max_rel_error < 1e-4);
    CHECK(oracle::fd_check(w, make).max_rel_error < 1e-4);
    CHECK(oracle::fd_check(b, make).max_rel_error < 1e-4);
  }
  SUBCASE("instance norm") {
    auto x = random_tensor<T>({1, 2, 2, 3, 2}, rng, true);
    auto target = oracle::random_onehot<T>({1, 2, 2, 3, 2}, rng);
    auto make = [&] {
      return dice_ce_loss(softmax_channels(instance_norm(x)), target, {1, 1});
    };
    CHECK(oracle::fd_check(x, make).max_rel_error < 1e-4);
  }
  SUBCASE("max pool and upsample") {
    auto x = random_tensor<T>({1, 2, 4, 4, 4}, rng, true);
    auto pool_target = oracle::random_onehot<T>({1, 2, 2, 2, 2}, rng);
    auto make_pool = [&] {
      return dice_ce_loss(softmax_channels(max_pool3d(x)), pool_target, {1, 1});
    };
    CHECK(oracle::fd_check(x, make_pool).max_rel_error < 1e-4);
    auto up_target = oracle::random_onehot<T>({1, 2, 8, 8, 8}, rng);
    auto make_up = [&] {
      return dice_ce_loss(softmax_channels(upsample_trilinear2(x)), up_target,
                          {1, 1});
    };
    CHECK(oracle::fd_check(x, make_up).max_rel_error < 1e-4);
  }
  SUBCASE("softmax") {
    auto x = random_tensor<T>({1, 4, 2, 2, 2}, rng, true);
    auto target = TensorT<T>::zeros({1, 4, 2, 2, 2});
    for (int64_t i = 0; i < 8; ++i) {
      target.values()[size_t((i % 4) * 8 + i)] = 1.0;
    }
    auto make = [&] {
      return dice_ce_loss(softmax_channels(x), target,
                          {1.0, 1.2, 0.8, 1.0});
    };
    CHECK(oracle::fd_check(x, make).max_rel_error < 1e-4);
  }
  SUBCASE("dice+ce at random probabilities") {
    auto [probs, target] = random_probs_target<T>({1, 3, 2, 2, 2}, rng);
    auto make = [&] { return dice_ce_loss(probs, target, {1.0, 1.5, 0.7}); };
    CHECK(oracle::fd_check(probs, make).max_rel_error < 1e-4);
  }
  SUBCASE("concat routes gradients to both inputs") {
    auto a = random_tensor<T>({1, 2, 2, 2, 2}, rng, true);
    auto b = random_tensor<T>({1, 3, 2, 2, 2}, rng, true);
    auto target = oracle::random_onehot<T>({1, 5, 2, 2, 2}, rng);
    auto make = [&] {
      return dice_ce_loss(softmax_channels(concat_channels(a, b)), target,
                          {1, 1, 1, 1, 1});
    };
    CHECK(oracle::fd_check(a, make).max_rel_error < 1e-4);
    CHECK(oracle::fd_check(b, make).max_rel_error < 1e-4);
  }
  SUBCASE("two chained ops follow the chain rule") {
    auto x = random_tensor<T>({1, 2, 4, 4, 4}, rng, true);
    auto w = random_tensor<T>({4, 2, 3, 3, 3}, rng, true, 0.4);
    auto target = oracle::random_onehot<T>({1, 4, 2, 2, 2}, rng);
    auto make = [&] {
      return dice_ce_loss(
          softmax_channels(max_pool3d(relu(conv3d(x, w, TensorT<T>())))),
          target, {1, 1, 1, 1});
    };
    CHECK(oracle::fd_check(x, make).max_rel_error < 1e-4);
    CHECK(oracle::fd_check(w, make).max_rel_error < 1e-4);
  }
  SUBCASE("a tensor consumed twice accumulates both contributions") {
    auto x = random_tensor<T>({1, 2, 2, 2, 2}, rng, true);
    auto make = [&] {
      auto y = relu(x);
      return weighted_sum_scalars<T>(
          {sum_all(y), sum_all(softmax_channels(y))}, {0.3, 0.7});
    };
    CHECK(oracle::fd_check(x, make).max_rel_error < 1e-4);
  }
}

TEST_CASE("forward values are bit-identical across repeated runs") {
  auto run = [] {
    Rng rng(77);
    Tensor5 x = random_tensor<float>({1, 2, 4, 4, 4}, rng);
    Tensor5 w = random_tensor<float>({3, 2, 3, 3, 3}, rng);
    return softmax_channels(instance_norm(conv3d(x, w, Tensor5()))).values();
  };
  CHECK(run() == run());
}
