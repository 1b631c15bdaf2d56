#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "mlcc/rng.hpp"
#include "mlcc/tensor.hpp"

using namespace mlcc;

namespace {

Tensor random_param(const Shape& shape, Rng& rng, double scl = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.normal() * scl;
  return Tensor::param(shape, std::move(v));
}

void check_grad(const std::function<Tensor(const Tensor&)>& f, Tensor x) {
  GradCheckResult r = grad_check(f, x, 1e-5);
  CHECK(r.checked >= 1);
  CHECK(r.max_rel_error < 1e-4);
}

}  // namespace

TEST_CASE("matmul known product") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
  Tensor c = matmul(a, b);
  REQUIRE(c.shape() == Shape{2, 2});
  CHECK(c.at(0) == 19.0);
  CHECK(c.at(1) == 22.0);
  CHECK(c.at(2) == 43.0);
  CHECK(c.at(3) == 50.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 5});
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x5]") != std::string::npos);
  }
}

TEST_CASE("matmul is bilinear") {
  Rng rng(7);
  Tensor a = random_param({3, 4}, rng);
  Tensor b = random_param({4, 5}, rng);
  const double alpha = 2.75;
  Tensor lhs = matmul(scale(a, alpha), b);
  Tensor rhs = scale(matmul(a, b), alpha);
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    CHECK(lhs.at(i) == doctest::Approx(rhs.at(i)).epsilon(1e-13));
  }
}

TEST_CASE("concat_last of one part is the identity") {
  Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor y = concat_last({x});
  REQUIRE(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.at(i) == x.at(i));
}

TEST_CASE("concat_last then slices reproduces the inputs exactly") {
  Rng rng(3);
  Tensor a = random_param({2, 2}, rng);
  Tensor b = random_param({2, 5}, rng);
  Tensor c = random_param({2, 1}, rng);
  Tensor cat = concat_last({a, b, c});
  REQUIRE(cat.shape() == Shape{2, 8});
  Tensor sa = slice_last(cat, 0, 2);
  Tensor sb = slice_last(cat, 2, 5);
  Tensor sc = slice_last(cat, 7, 1);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(sa.at(i) == a.at(i));
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(sb.at(i) == b.at(i));
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(sc.at(i) == c.at(i));
}

TEST_CASE("concat rejects mismatched extents and empty lists") {
  CHECK_THROWS_AS(concat({}, 0), ShapeError);
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({3, 3});
  CHECK_THROWS_AS(concat_last({a, b}), ShapeError);
}

TEST_CASE("relu values and gradient") {
  Tensor x = Tensor::param({3}, {-1, 0, 2});
  Tensor y = activation(x, ActKind::Relu);
  CHECK(y.at(0) == 0.0);
  CHECK(y.at(1) == 0.0);
  CHECK(y.at(2) == 2.0);

  Tensor x2 = Tensor::param({2}, {-1, 2});
  Tape tape;
  Tensor loss = sum(activation(x2, ActKind::Relu));
  Gradients g = tape.backward(loss);
  Tensor gx = g.at(x2);
  CHECK(gx.at(0) == 0.0);
  CHECK(gx.at(1) == 1.0);
}

TEST_CASE("identity activation is a passthrough") {
  Tensor x = Tensor::from({3}, {-1.5, 0.0, 2.5});
  Tensor y = activation(x, ActKind::Identity);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.at(i) == x.at(i));
}

TEST_CASE("activation name parsing") {
  CHECK(act_from_name("relu") == ActKind::Relu);
  CHECK(act_from_name("identity") == ActKind::Identity);
  CHECK(act_from_name("gelu") == ActKind::Gelu);
  CHECK_THROWS_AS(act_from_name("swish"), ConfigError);
  CHECK(act_name(ActKind::Gelu) == "gelu");
}

TEST_CASE("backward of sum gives ones") {
  Tensor x = Tensor::param({4}, {1, 2, 3, 4});
  Tape tape;
  Tensor loss = sum(x);
  Gradients g = tape.backward(loss);
  Tensor gx = g.at(x);
  for (std::size_t i = 0; i < 4; ++i) CHECK(gx.at(i) == 1.0);
}

TEST_CASE("gradients accumulate additively for reused tensors") {
  Tensor x = Tensor::param({2}, {3, 5});
  Tape tape;
  Tensor loss = sum(add(x, x));
  Gradients g = tape.backward(loss);
  Tensor gx = g.at(x);
  CHECK(gx.at(0) == 2.0);
  CHECK(gx.at(1) == 2.0);
}

TEST_CASE("backward of x*x at 3 gives 6") {
  Tensor x = Tensor::param({1}, {3});
  Tape tape;
  Tensor loss = sum(mul(x, x));
  Gradients g = tape.backward(loss);
  CHECK(g.at(x).at(0) == 6.0);
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor x = Tensor::param({2}, {1, 2});
  Tape tape;
  Tensor y = add(x, x);
  CHECK_THROWS_AS(tape.backward(y), ShapeError);
}

TEST_CASE("backward rejects a consumed tape") {
  Tensor x = Tensor::param({2}, {1, 2});
  Tape tape;
  Tensor loss = sum(x);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), Error);
}

TEST_CASE("backward rejects a loss with no recorded ops") {
  Tensor c = Tensor::scalar(1.0);
  Tape tape;
  CHECK_THROWS_AS(tape.backward(c), Error);
}

TEST_CASE("non-participating tensors get no gradient") {
  Tensor x = Tensor::param({2}, {1, 2});
  Tensor unused = Tensor::param({2}, {3, 4});
  Tape tape;
  Tensor loss = sum(x);
  Gradients g = tape.backward(loss);
  CHECK(g.has(x));
  CHECK_FALSE(g.has(unused));
}

TEST_CASE("ops do not record without an active tape") {
  Tensor x = Tensor::param({2}, {1, 2});
  Tensor y = add(x, x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("grad_check on sum is exact to 1e-10") {
  Tensor x = Tensor::param({5}, {0.1, -0.2, 0.3, -0.4, 0.5});
  GradCheckResult r = grad_check([](const Tensor& t) { return sum(t); }, x, 1e-5);
  CHECK(r.excluded == 0);
  CHECK(r.max_rel_error < 1e-10);
}

TEST_CASE("grad_check on sum of squares") {
  Rng rng(0);
  Tensor x = random_param({6}, rng);
  GradCheckResult r = grad_check(
      [](const Tensor& t) { return sum(mul(t, t)); }, x, 1e-5);
  CHECK(r.excluded == 0);
  CHECK(r.max_rel_error < 1e-7);
}

TEST_CASE("grad_check excludes coordinates at a relu kink") {
  Tensor x = Tensor::param({3}, {1.0, 0.0, -1.0});
  GradCheckResult r = grad_check(
      [](const Tensor& t) { return sum(activation(t, ActKind::Relu)); }, x,
      1e-5);
  CHECK(r.excluded == 1);
  CHECK(r.checked == 2);
  CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("grad_check flags a wrong backward rule") {
  // Test-only op: forward 2*x, backward deliberately claims 3*upstream.
  auto bad_double = [](const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = 2.0 * x.at(i);
    Tensor y = Tensor::from(x.shape(), std::move(out));
    if (OpApi::recording({&x})) {
      OpApi::record(y, [x](const std::vector<double>& g, GradStore& gs) {
        std::vector<double>& gx = gs.accumulate(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 3.0 * g[i];
      });
    }
    return y;
  };
  Tensor x = Tensor::param({3}, {0.5, -1.5, 2.0});
  GradCheckResult r =
      grad_check([&](const Tensor& t) { return sum(bad_double(t)); }, x, 1e-5);
  CHECK(r.max_rel_error > 1e-4);
}

TEST_CASE("grad_check rejects non-positive eps") {
  Tensor x = Tensor::param({1}, {1.0});
  CHECK_THROWS_AS(grad_check([](const Tensor& t) { return sum(t); }, x, 0.0),
                  Error);
}

TEST_CASE("grad_check rejects non-finite values") {
  Tensor x = Tensor::param({1}, {1.0});
  auto f = [](const Tensor& t) {
    return scale(sum(t), std::numeric_limits<double>::infinity());
  };
  CHECK_THROWS_AS(grad_check(f, x, 1e-5), NumericError);
}

TEST_CASE("gradient rules hold for every op over random shapes") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(derive_seed(seed, 11));
    const std::size_t m = 1 + rng.uniform_u64(4);
    const std::size_t k = 1 + rng.uniform_u64(4);
    const std::size_t n = 1 + rng.uniform_u64(4);
    const std::size_t bs = 1 + rng.uniform_u64(3);

    {
      Tensor a = random_param({m, k}, rng);
      Tensor b = random_param({k, n}, rng);
      check_grad([&](const Tensor& t) { return sum(matmul(t, b)); }, a);
      check_grad([&](const Tensor& t) { return sum(matmul(a, t)); }, b);
    }
    {
      Tensor a = random_param({bs, m, k}, rng);
      Tensor b = random_param({bs, k, n}, rng);
      Tensor bt = random_param({bs, n, k}, rng);
      check_grad([&](const Tensor& t) { return sum(bmm(t, b)); }, a);
      check_grad([&](const Tensor& t) { return sum(bmm(a, t)); }, b);
      check_grad([&](const Tensor& t) { return sum(bmm(t, bt, true)); }, a);
      check_grad([&](const Tensor& t) { return sum(bmm(a, t, true)); }, bt);
    }
    {
      Tensor a = random_param({m, n}, rng);
      check_grad([&](const Tensor& t) { return sum(transpose(t)); }, a);
      check_grad(
          [&](const Tensor& t) { return sum(reshape(t, {n * m})); }, a);
      check_grad([&](const Tensor& t) { return sum(scale(t, -1.7)); }, a);
      if (n >= 2) {
        check_grad(
            [&](const Tensor& t) { return sum(slice_last(t, 1, n - 1)); }, a);
      }
    }
    {
      Tensor a = random_param({m, n}, rng);
      Tensor b = random_param({m, n}, rng);
      check_grad([&](const Tensor& t) { return sum(mul(t, b)); }, a);
      check_grad([&](const Tensor& t) { return sum(mul(a, t)); }, b);
      check_grad([&](const Tensor& t) { return sum(add(t, b)); }, a);
      check_grad(
          [&](const Tensor& t) { return sum(concat_last({t, b})); }, a);
      check_grad(
          [&](const Tensor& t) { return sum(concat({a, t}, 0)); }, b);
    }
    {
      Tensor x = random_param({m, n}, rng);
      Tensor bias = random_param({n}, rng);
      check_grad([&](const Tensor& t) { return sum(add_rowwise(t, bias)); },
                 x);
      check_grad([&](const Tensor& t) { return sum(add_rowwise(x, t)); },
                 bias);
    }
    {
      Tensor x = random_param({m, n}, rng);
      check_grad(
          [&](const Tensor& t) {
            return sum(activation(t, ActKind::Relu));
          },
          x);
      check_grad(
          [&](const Tensor& t) {
            return sum(activation(t, ActKind::Gelu));
          },
          x);
      check_grad(
          [&](const Tensor& t) {
            return sum(activation(t, ActKind::Identity));
          },
          x);
    }
    {
      Tensor c = random_param({bs, m, k}, rng);
      Tensor w = random_param({m, k, n}, rng);
      check_grad([&](const Tensor& t) { return sum(tokenwise_matmul(t, w)); },
                 c);
      check_grad([&](const Tensor& t) { return sum(tokenwise_matmul(c, t)); },
                 w);
      Tensor c2 = random_param({m, k}, rng);
      check_grad([&](const Tensor& t) { return sum(tokenwise_matmul(t, w)); },
                 c2);
    }
  }
}

TEST_CASE("matmul composed with nonlinearity grad-checks") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(derive_seed(seed, 12));
    Tensor a = random_param({3, 4}, rng);
    Tensor b = random_param({4, 2}, rng);
    check_grad(
        [&](const Tensor& t) {
          return sum(activation(matmul(t, b), ActKind::Relu));
        },
        a);
    check_grad(
        [&](const Tensor& t) {
          return sum(activation(matmul(a, t), ActKind::Gelu));
        },
        b);
  }
}

TEST_CASE("flop counter charges 2 flops per multiply-accumulate") {
  Tensor a = Tensor::zeros({3, 4});
  Tensor b = Tensor::zeros({4, 5});
  {
    FlopCounter fc;
    matmul(a, b);
    CHECK(fc.total() == 2ull * 3 * 4 * 5);
  }
  {
    FlopCounter fc;
    Tensor c = Tensor::zeros({2, 3, 4});
    Tensor w = Tensor::zeros({3, 4, 5});
    tokenwise_matmul(c, w);
    CHECK(fc.total() == 2ull * 2 * 3 * 4 * 5);
  }
  {
    FlopCounter fc;
    activation(Tensor::zeros({7}), ActKind::Identity);
    CHECK(fc.total() == 0);
    activation(Tensor::full({7}, 1.0), ActKind::Relu);
    CHECK(fc.total() == 7);
  }
  {
    FlopCounter fc;
    concat_last({Tensor::zeros({2, 2}), Tensor::zeros({2, 3})});
    reshape(Tensor::zeros({4}), {2, 2});
    CHECK(fc.total() == 0);
  }
}

TEST_CASE("an armed counter observes ops run in nested scopes") {
  FlopCounter outer;
  {
    Tensor a = Tensor::zeros({2, 2});
    Tensor b = Tensor::zeros({2, 2});
    matmul(a, b);
  }
  CHECK(outer.total() == 16);
}

TEST_CASE("tensor validation") {
  CHECK_THROWS_AS(Tensor::from({2, 0}, {}), ShapeError);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({2}).at(5), IndexError);
  CHECK_THROWS_AS(Tensor::zeros({2}).scalar_value(), ShapeError);
}
