// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cmath>

#include "cantus/autodiff.hpp"
#include "cantus/error.hpp"
#include "cantus/ops.hpp"
#include "support.hpp"

using namespace cantus;
namespace o = cantus::ops;

namespace {

constexpr double kOpTolerance = 1e-4;

Var param(test::Gen& g, const Shape& shape) { return Var::parameter(g.tensor(shape)); }

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("tensor shape contract") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  const Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.cols() == 3);
  CHECK(t.rows() == 2);
}

TEST_CASE("softmax, relu and identity convolution") {
  const Var s = o::softmax(Var::constant(Tensor({3}, {0.0, 0.0, 0.0})));
  for (double v : s.value().data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(o::relu(Var::constant(Tensor({2}, {-1.0, 2.0}))).value().values() ==
        std::vector<double>{0.0, 2.0});

  test::Gen g(1);
  const Var x = Var::constant(g.tensor({2, 5, 3}));
  Tensor eye({1, 3, 3}, 0.0);
  for (std::size_t c = 0; c < 3; ++c) eye[c * 3 + c] = 1.0;
  const Var y = o::conv1d(x, Var::constant(eye), Var::constant(Tensor({3}, 0.0)));
  CHECK(y.value() == x.value());
}

TEST_CASE("backward of sum(x*x) and |x|") {
  Var x = Var::parameter(Tensor({2}, {1.0, 2.0}));
  backward(o::sum(o::mul(x, x)));
  CHECK(x.grad().values() == std::vector<double>{2.0, 4.0});

  Var y = Var::parameter(Tensor({1}, {-3.0}));
  backward(o::sum(o::abs(y)));
  CHECK(y.grad().values() == std::vector<double>{-1.0});

  Var z = Var::parameter(Tensor({2}, {0.0, 1.0}));
  backward(o::sum(o::abs(z)));
  CHECK(z.grad().values() == std::vector<double>{0.0, 1.0});
}

TEST_CASE("backward requires a scalar loss") {
  Var x = Var::parameter(Tensor({2}, {1.0, 2.0}));
  CHECK_THROWS_AS(backward(o::mul(x, x)), ShapeError);
  CHECK_NOTHROW(backward(o::sum(x)));
  CHECK_NOTHROW(backward(o::reshape(o::sum(x), Shape{})));
}

TEST_CASE("leaf gradients accumulate until reset") {
  Var x = Var::parameter(Tensor({2}, {1.0, 2.0}));
  const Var loss = o::sum(o::mul(x, x));
  backward(loss);
  backward(loss);
  CHECK(x.grad().values() == std::vector<double>{4.0, 8.0});
  x.zero_grad();
  backward(loss);
  CHECK(x.grad().values() == std::vector<double>{2.0, 4.0});
}

TEST_CASE("a node used twice collects both contributions") {
  test::Gen g(2);
  Var x = param(g, {4});
  Var w = param(g, {4});
  auto loss = [&] {
    const Var h = o::mul(x, w);               // used twice below
    return o::sum(o::add(o::mul(h, h), o::exp(o::scale(h, 0.5))));
  };
  CHECK(test::gradient_check({x, w}, loss) < kOpTolerance);
}

TEST_CASE("shape errors name the op and both shapes") {
  const Var a = Var::constant(Tensor({2, 3}, 0.0));
  const Var b = Var::constant(Tensor({3, 2}, 0.0));
  try {
    o::add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[3, 2]") != std::string::npos);
  }
  CHECK_THROWS_AS(o::matmul(a, a), ShapeError);
  CHECK_THROWS_AS(o::conv1d(Var::constant(Tensor({1, 4, 3}, 0.0)), Var::constant(Tensor({2, 3, 3}, 0.0)),
                            Var::constant(Tensor({3}, 0.0))),
                  ShapeError);
}

TEST_CASE("softmax rows are distributions") {
  test::Gen g(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Var s = o::softmax(Var::constant(g.tensor({3, 7}, -30.0, 30.0)));
    for (std::size_t r = 0; r < 3; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        CHECK(s.value()[r * 7 + c] >= 0.0);
        total += s.value()[r * 7 + c];
      }
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("layer norm standardizes each row") {
  test::Gen g(4);
  const std::size_t d = 16;
  const Var gain = Var::constant(Tensor({d}, 1.0));
  const Var bias = Var::constant(Tensor({d}, 0.0));
  for (int trial = 0; trial < 50; ++trial) {
    const double spread = g.uniform(1e-3, 100.0);
    const Var y = o::layer_norm(Var::constant(g.tensor({5, d}, -spread, spread)), gain, bias);
    for (std::size_t r = 0; r < 5; ++r) {
      double mean = 0.0, var = 0.0;
      for (std::size_t c = 0; c < d; ++c) mean += y.value()[r * d + c];
      mean /= d;
      for (std::size_t c = 0; c < d; ++c) var += std::pow(y.value()[r * d + c] - mean, 2);
      var /= d;
      CHECK(std::abs(mean) < 1e-7);
      CHECK(std::abs(var - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(7);
  const Var x = Var::constant(Tensor({1000}, 1.0));
  CHECK(o::dropout(x, 0.3, false, rng).value() == x.value());
  const Var y = o::dropout(x, 0.3, true, rng);
  std::size_t zeros = 0;
  for (double v : y.value().data()) {
    if (v == 0.0) ++zeros;
    else CHECK(v == doctest::Approx(1.0 / 0.7));
  }
  CHECK(zeros > 200);
  CHECK(zeros < 400);
  std::mt19937_64 a(9), b(9);
  CHECK(o::dropout(x, 0.5, true, a).value() == o::dropout(x, 0.5, true, b).value());
}

}  // TEST_SUITE

// Central finite differences, h = 1e-5, inputs drawn from [-2, 2].
TEST_SUITE("gradients") {

TEST_CASE("elementwise arithmetic") {
  test::Gen g(10);
  Var a = param(g, {3, 4}), b = param(g, {3, 4});
  CHECK(test::gradient_check({a, b}, [&] { return test::project(o::add(a, b)); }) < kOpTolerance);
  CHECK(test::gradient_check({a, b}, [&] { return test::project(o::sub(a, b)); }) < kOpTolerance);
  CHECK(test::gradient_check({a, b}, [&] { return test::project(o::mul(a, b)); }) < kOpTolerance);
  CHECK(test::gradient_check({a}, [&] { return test::project(o::scale(a, -1.7)); }) < kOpTolerance);
  CHECK(test::gradient_check({a}, [&] { return test::project(o::add_scalar(a, 0.3)); }) < kOpTolerance);
  Var bias = param(g, {4});
  CHECK(test::gradient_check({a, bias}, [&] { return test::project(o::add_bias(a, bias)); }) <
        kOpTolerance);
}

TEST_CASE("matmul") {
  test::Gen g(11);
  Var x = param(g, {2, 3, 4}), w = param(g, {4, 5});
  CHECK(test::gradient_check({x, w}, [&] { return test::project(o::matmul(x, w)); }) < kOpTolerance);
}

TEST_CASE("embedding and gather") {
  test::Gen g(12);
  Var table = param(g, {6, 3});
  const std::vector<std::int64_t> ids = {0, 5, 2, 2, 1, 5};
  CHECK(test::gradient_check({table}, [&] {
          return test::project(o::embedding(table, ids, Shape{2, 3}));
        }) < kOpTolerance);
  Var x = param(g, {4, 3});
  const std::vector<std::int64_t> index = {3, -1, 0, 0, 2};
  CHECK(test::gradient_check({x}, [&] {
          return test::project(o::gather_rows(x, index, Shape{5}));
        }) < kOpTolerance);
  CHECK_THROWS_AS(o::embedding(table, std::vector<std::int64_t>{6}, Shape{1}), ShapeError);
}

TEST_CASE("conv1d with kernels 1, 3 and 5") {
  test::Gen g(13);
  for (std::size_t k : {1u, 3u, 5u}) {
    Var x = param(g, {2, 6, 3}), w = param(g, {k, 3, 4}), b = param(g, {4});
    CHECK(test::gradient_check({x, w, b}, [&] { return test::project(o::conv1d(x, w, b)); }) <
          kOpTolerance);
  }
}

TEST_CASE("activations") {
  test::Gen g(14);
  Var x = Var::parameter(g.tensor_away_from_zero({3, 5}, 1e-3));
  CHECK(test::gradient_check({x}, [&] { return test::project(o::relu(x)); }) < kOpTolerance);
  CHECK(test::gradient_check({x}, [&] { return test::project(o::abs(x)); }) < kOpTolerance);
  CHECK(test::gradient_check({x}, [&] { return test::project(o::sigmoid(x)); }) < kOpTolerance);
  CHECK(test::gradient_check({x}, [&] { return test::project(o::exp(x)); }) < kOpTolerance);
  Var p = Var::parameter(g.tensor({3, 5}, 0.1, 2.0));
  CHECK(test::gradient_check({p}, [&] { return test::project(o::log(p)); }) < kOpTolerance);
}

TEST_CASE("softmax and layer norm") {
  test::Gen g(15);
  Var x = param(g, {4, 6});
  CHECK(test::gradient_check({x}, [&] { return test::project(o::softmax(x)); }) < kOpTolerance);
  Var gain = param(g, {6}), bias = param(g, {6});
  CHECK(test::gradient_check({x, gain, bias}, [&] {
          return test::project(o::layer_norm(x, gain, bias));
        }) < kOpTolerance);
}

TEST_CASE("dropout in training mode") {
  test::Gen g(16);
  Var x = param(g, {4, 5});
  auto loss = [&] {
    std::mt19937_64 rng(3);  // same mask on every evaluation
    return test::project(o::dropout(x, 0.4, true, rng));
  };
  CHECK(test::gradient_check({x}, loss) < kOpTolerance);
}

TEST_CASE("attention with ragged lengths") {
  test::Gen g(17);
  Var q = param(g, {2, 5, 4}), k = param(g, {2, 5, 4}), v = param(g, {2, 5, 4});
  const std::vector<std::size_t> lengths = {5, 3};
  auto loss = [&] {
    // Padded query rows are not part of the contract; mask them out.
    const std::vector<double> rows = {1, 1, 1, 1, 1, 1, 1, 1, 0, 0};
    return test::project(o::mask_rows(o::attention(q, k, v, 2, lengths), rows));
  };
  CHECK(test::gradient_check({q, k, v}, loss) < kOpTolerance);
}

TEST_CASE("attention matches an unfused softmax(QK^T/sqrt(d))V") {
  test::Gen g(18);
  const Var q = Var::constant(g.tensor({1, 4, 6})), k = Var::constant(g.tensor({1, 4, 6})),
            v = Var::constant(g.tensor({1, 4, 6}));
  const std::vector<std::size_t> lengths = {4};
  Tensor probs;
  const Var fused = o::attention(q, k, v, 2, lengths, &probs);
  for (std::size_t h = 0; h < 2; ++h) {
    for (std::size_t i = 0; i < 4; ++i) {
      std::vector<double> s(4);
      for (std::size_t j = 0; j < 4; ++j) {
        for (std::size_t c = 0; c < 3; ++c) s[j] += q.value()[i * 6 + h * 3 + c] * k.value()[j * 6 + h * 3 + c];
        s[j] /= std::sqrt(3.0);
      }
      const double mx = *std::max_element(s.begin(), s.end());
      double z = 0.0;
      for (double& x : s) z += (x = std::exp(x - mx));
      double row_total = 0.0;
      for (std::size_t j = 0; j < 4; ++j) {
        CHECK(std::abs(probs[(h * 4 + i) * 4 + j] - s[j] / z) < 1e-12);
        row_total += probs[(h * 4 + i) * 4 + j];
      }
      CHECK(std::abs(row_total - 1.0) < 1e-12);
      for (std::size_t c = 0; c < 3; ++c) {
        double o_ic = 0.0;
        for (std::size_t j = 0; j < 4; ++j) o_ic += s[j] / z * v.value()[j * 6 + h * 3 + c];
        CHECK(std::abs(fused.value()[i * 6 + h * 3 + c] - o_ic) < 1e-12);
      }
    }
  }
}

TEST_CASE("shape plumbing") {
  test::Gen g(19);
  Var a = param(g, {2, 3, 2}), b = param(g, {2, 3, 4});
  CHECK(test::gradient_check({a, b}, [&] { return test::project(o::concat_last({a, b})); }) <
        kOpTolerance);
  Var c = param(g, {3, 7});
  const std::vector<std::size_t> widths = {2, 5};
  CHECK(test::gradient_check({c}, [&] {
          const auto parts = o::split_last(c, widths);
          return o::add(test::project(parts[0], 1), test::project(parts[1], 2));
        }) < kOpTolerance);
  CHECK(test::gradient_check({c}, [&] { return test::project(o::reshape(c, Shape{7, 3})); }) <
        kOpTolerance);
  const std::vector<double> scale = {1.0, 0.0, 0.5};
  CHECK(test::gradient_check({c}, [&] { return test::project(o::mask_rows(c, scale)); }) <
        kOpTolerance);
}

TEST_CASE("reductions and losses") {
  test::Gen g(20);
  Var x = param(g, {3, 4});
  CHECK(test::gradient_check({x}, [&] { return o::sum(o::mul(x, x)); }) < kOpTolerance);
  CHECK(test::gradient_check({x}, [&] { return o::mean(o::exp(x)); }) < kOpTolerance);
  const std::vector<std::uint8_t> mask = {1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 1, 0};
  CHECK(test::gradient_check({x}, [&] { return o::masked_mean(o::exp(x), mask); }) < kOpTolerance);
  Var s = param(g, {6});
  const std::vector<std::pair<std::size_t, std::size_t>> spans = {{0, 2}, {2, 3}, {3, 6}};
  CHECK(test::gradient_check({s}, [&] { return test::project(o::segment_sum(s, spans)); }) <
        kOpTolerance);
  const Tensor targets({3, 4}, {1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 1, 0});
  CHECK(test::gradient_check({x}, [&] { return o::sum(o::bce_with_logits(x, targets)); }) <
        kOpTolerance);
}

TEST_CASE("masked mean of an empty selection is zero") {
  const Var x = Var::parameter(Tensor({3}, {1.0, 2.0, 3.0}));
  const std::vector<std::uint8_t> none = {0, 0, 0};
  const Var m = o::masked_mean(x, none);
  CHECK(m.value().item() == 0.0);
  backward(m);
  CHECK(x.grad().values() == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("bce at even odds is ln 2") {
  const Var logits = Var::constant(Tensor({4}, 0.0));
  const Var l = o::mean(o::bce_with_logits(logits, Tensor({4}, {1, 0, 1, 0})));
  CHECK(std::abs(l.value().item() - std::log(2.0)) < 1e-15);
}

}  // TEST_SUITE
