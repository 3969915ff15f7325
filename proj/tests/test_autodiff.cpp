#include <catch2/catch.hpp>

#include "gnnplus/tensor.hpp"
#include "oracles.hpp"

using namespace gnnplus;

namespace {

// Runs analytic backward and central finite differences for every
// requires-grad input of `build`, which must rebuild the same scalar loss on
// each call (RNG-consuming ops must reseed internally).
void check_gradients(const std::function<Tensor()>& build,
                     std::vector<Tensor> inputs, double tol = 1e-4) {
  {
    Tape tape;
    Tensor loss = build();
    tape.backward(loss);
  }
  auto forward_value = [&]() { return build().value(); };
  for (Tensor& in : inputs) {
    REQUIRE(in.has_grad());
    std::vector<double> fd = oracle::finite_diff(forward_value, in);
    for (int64_t i = 0; i < in.numel(); ++i) {
      INFO("input entry " << i);
      CHECK(oracle::rel_err(in.grad()[i], fd[static_cast<size_t>(i)]) < tol);
    }
    in.clear_grad();
  }
}

}  // namespace

TEST_CASE("finite differences agree across every differentiable kernel") {
  // 100 random seeds, tensors up to 64 elements, chained kernels
  for (uint64_t seed = 1; seed <= 100; ++seed) {
    DYNAMIC_SECTION("seed " << seed) {
      RngState rng(seed);
      int64_t rows = 2 + rng.uniform_int(5);
      int64_t cols = 2 + rng.uniform_int(5);
      int64_t inner = 2 + rng.uniform_int(4);
      Tensor a = oracle::random_tensor(rng, {rows, inner});
      Tensor b = oracle::random_tensor(rng, {inner, cols});
      Tensor c = oracle::random_tensor(rng, {rows, cols});
      Tensor bias = oracle::random_tensor(rng, {cols});
      Tensor gamma = oracle::random_tensor(rng, {cols}, 0.5);
      Tensor beta = oracle::random_tensor(rng, {cols}, 0.5);
      for (double& v : gamma.data()) v += 1.0;  // keep away from zero scale
      a.set_requires_grad(true);
      b.set_requires_grad(true);
      c.set_requires_grad(true);
      bias.set_requires_grad(true);
      gamma.set_requires_grad(true);
      beta.set_requires_grad(true);
      Tensor rm = Tensor::zeros({cols});
      Tensor rv = Tensor::full({cols}, 1.0);

      std::vector<int64_t> gather_idx, seg_ids;
      int64_t segments = 1 + rng.uniform_int(3);
      for (int64_t i = 0; i < rows + 2; ++i)
        gather_idx.push_back(rng.uniform_int(rows));
      for (int64_t i = 0; i < rows + 2; ++i)
        seg_ids.push_back(rng.uniform_int(segments));
      uint64_t drop_seed = rng.next_u64();

      auto build = [&]() {
        Tensor h = add(matmul(a, b), bias);
        h = batchnorm(h, gamma, beta, rm, rv, Mode::train);
        h = add(sigmoid(h), mul(c, Tensor::scalar(0.5)));
        Tensor g = gather_rows(h, gather_idx);
        Tensor s = segment_sum(g, seg_ids, segments);
        Tensor cat = concat_last_dim({s, mul(s, s)});
        RngState drop_rng(drop_seed);
        Tensor d = dropout(cat, 0.25, Mode::train, drop_rng);
        Tensor m = reduce_mean(d, 1);
        return reduce_sum(mul(m, m));
      };
      check_gradients(build, {a, b, c, bias, gamma, beta});
    }
  }
}

TEST_CASE("division and segment mean/max gradients") {
  RngState rng(5);
  Tensor x = oracle::random_tensor(rng, {5, 3});
  Tensor y = oracle::random_tensor(rng, {5, 3});
  for (double& v : y.data()) v += v >= 0 ? 1.5 : -1.5;  // keep denominators away from 0
  x.set_requires_grad(true);
  y.set_requires_grad(true);
  std::vector<int64_t> ids{0, 1, 0, 2, 1};
  auto build = [&]() {
    Tensor q = div(x, y);
    Tensor s = add(segment_mean(q, ids, 3), segment_max(q, ids, 3));
    return reduce_sum(mul(s, s));
  };
  check_gradients(build, {x, y});
}

TEST_CASE("loss gradients match finite differences") {
  RngState rng(17);
  SECTION("mae away from kinks") {
    Tensor p = oracle::random_tensor(rng, {4, 2});
    Tensor t = oracle::random_tensor(rng, {4, 2}, 3.0);  // targets far from preds
    p.set_requires_grad(true);
    check_gradients([&]() { return mae_loss(p, t); }, {p});
  }
  SECTION("softmax cross entropy") {
    Tensor z = oracle::random_tensor(rng, {5, 4});
    z.set_requires_grad(true);
    std::vector<int64_t> labels{0, 3, 1, 2, 2};
    check_gradients([&]() { return softmax_cross_entropy(z, labels); }, {z});
  }
  SECTION("bce with logits") {
    Tensor z = oracle::random_tensor(rng, {4, 3});
    Tensor t = Tensor::from_data({4, 3}, {1, 0, 0, 1, 1, 0, 0, 0, 1, 1, 0, 1});
    z.set_requires_grad(true);
    check_gradients([&]() { return bce_with_logits(z, t); }, {z});
  }
}

TEST_CASE("gather duplicate-index backward matches finite differences") {
  RngState rng(23);
  Tensor src = oracle::random_tensor(rng, {3, 2});
  src.set_requires_grad(true);
  std::vector<int64_t> idx{1, 1, 0, 2, 1};
  check_gradients(
      [&]() {
        Tensor g = gather_rows(src, idx);
        return reduce_sum(mul(g, g));
      },
      {src});
}

TEST_CASE("eval-mode batchnorm gradient") {
  RngState rng(31);
  Tensor x = oracle::random_tensor(rng, {4, 3});
  Tensor gamma = oracle::random_tensor(rng, {3});
  Tensor beta = oracle::random_tensor(rng, {3});
  Tensor rm = oracle::random_tensor(rng, {3}, 0.3);
  Tensor rv = Tensor::full({3}, 1.0);
  for (double& v : rv.data()) v += rng.uniform(0.0, 0.5);
  x.set_requires_grad(true);
  gamma.set_requires_grad(true);
  beta.set_requires_grad(true);
  check_gradients(
      [&]() {
        Tensor y = batchnorm(x, gamma, beta, rm, rv, Mode::eval);
        return reduce_sum(mul(y, y));
      },
      {x, gamma, beta});
}
