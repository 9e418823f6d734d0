#include <doctest.h>

#include "scn/core/autodiff.hpp"
#include "scn/core/errors.hpp"
#include "scn/core/grad_check.hpp"
#include "scn/core/ops.hpp"
#include "scn/subspace/projector.hpp"
#include "scn/train/verify.hpp"
#include "support.hpp"

using namespace scn;
using scn::testing::direct_conv;
using scn::testing::naive_matmul;

TEST_SUITE("tensor") {

TEST_CASE("tensor construction checks the shape") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.at(1, 2) == 1.5);
  CHECK(Tensor::identity(3).at(1, 1) == 1.0);
  CHECK(Tensor::identity(3).at(1, 2) == 0.0);
}

TEST_CASE("non-finite values surface as errors") {
  Tensor t({3}, 1.0);
  t[1] = std::nan("");
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS_AS(t.check_finite("t"), NumericError);
}

TEST_CASE("matmul identity cases") {
  Rng rng(1);
  const Tensor b = rng.normal_tensor({3, 4});
  CHECK(matmul(Tensor::identity(3), b) == b);
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  CHECK(matmul(a, Tensor::matrix({{1, 0}, {0, 1}})) == a);
}

TEST_CASE("matmul matches the triple loop") {
  Rng rng(2);
  const Tensor a = rng.normal_tensor({5, 7}), b = rng.normal_tensor({7, 3});
  CHECK(max_abs_diff(matmul(a, b), naive_matmul(a, b)) <= 1e-12);
  CHECK(max_abs_diff(matmul(transpose(a), b, true, false), naive_matmul(a, b)) <= 1e-12);
  CHECK(max_abs_diff(matmul(a, transpose(b), false, true), naive_matmul(a, b)) <= 1e-12);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("im2col on a single pixel") {
  const Tensor x({1, 1, 1}, 2.5);
  const Tensor cols = im2col(x, 1, 1, 0);
  CHECK(cols.shape() == Shape{1, 1});
  CHECK(cols[0] == 2.5);
}

TEST_CASE("im2col zero padding counts") {
  const Tensor cols = im2col(Tensor({1, 3, 3}, 1.0), 3, 1, 1);
  REQUIRE(cols.shape() == Shape{9, 9});
  const double expected[] = {4, 6, 4, 6, 9, 6, 4, 6, 4};
  for (std::size_t j = 0; j < 9; ++j) {
    double s = 0.0;
    for (std::size_t r = 0; r < 9; ++r) s += cols.at(r, j);
    CHECK(s == expected[j]);
  }
}

TEST_CASE("im2col convolution matches the sliding window") {
  Rng rng(3);
  const Tensor x = rng.normal_tensor({3, 8, 8});
  const Tensor kernel = rng.normal_tensor({4, 27});
  for (std::size_t stride : {1, 2}) {
    for (std::size_t pad : {0, 1}) {
      const Tensor got = matmul(kernel, im2col(x, 3, stride, pad));
      const Tensor want = direct_conv(x, kernel, 3, stride, pad);
      CHECK(max_abs_diff(got.reshaped(want.shape()), want) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(im2col(x, 9, 1, 0), ShapeError);
}

TEST_CASE("batched conv2d matches per-image sliding window") {
  Rng rng(4);
  const Tensor x = rng.normal_tensor({2, 2, 5, 5});
  const Tensor kernel = rng.normal_tensor({3, 18});
  ad::Tape tape;
  const Tensor y = ad::conv2d(tape.constant(x), tape.constant(kernel), 3, 2, 1).value();
  REQUIRE(y.shape() == Shape{2, 3, 3, 3});
  for (std::size_t b = 0; b < 2; ++b) {
    Tensor xb({2, 5, 5});
    for (std::size_t i = 0; i < 50; ++i) xb[i] = x[b * 50 + i];
    const Tensor want = direct_conv(xb, kernel, 3, 2, 1);
    for (std::size_t i = 0; i < 27; ++i) CHECK(std::abs(y[b * 27 + i] - want[i]) <= 1e-12);
  }
}

TEST_CASE("im2col and col2im are adjoint") {
  Rng rng(5);
  for (int s = 0; s < 20; ++s) {
    const std::size_t k = rng.index(1, 3), stride = rng.index(1, 2), pad = rng.index(0, 2);
    const Tensor x = rng.normal_tensor({2, 3, 7, 6});
    const Tensor cols = im2col(x, k, stride, pad);
    const Tensor y = rng.normal_tensor(cols.shape());
    CHECK(std::abs(dot(cols, y) - dot(x, col2im(y, x.shape(), k, stride, pad))) <= 1e-10);
  }
}

TEST_CASE("grad_check on a quadratic") {
  Rng rng(6);
  const ScalarFn sq = [](ad::Tape&, ad::Var x) {
    ad::Var col = ad::reshape(x, {x.value().size(), 1});
    return ad::matmul(ad::transpose(col), col);
  };
  CHECK(grad_check(sq, rng.normal_tensor({6}), 1e-5) <= 1e-8);
}

TEST_CASE("grad_check of a constant function is exactly zero") {
  Rng rng(7);
  const Tensor c = Tensor::scalar(3.0);
  const ScalarFn f = [c](ad::Tape& t, ad::Var) { return t.constant(c); };
  const Tensor x = rng.normal_tensor({4});
  CHECK(grad_check(f, x) == 0.0);
  const Tensor g = analytic_gradient(f, x);
  for (double v : g.data()) CHECK(v == 0.0);
}

TEST_CASE("grad_check of the projected norm as a function of W") {
  Rng rng(8);
  const Tensor x = rng.normal_tensor({6, 1});
  const ScalarFn f = [x](ad::Tape& t, ad::Var w) {
    ad::Var u = ad::matmul(subspace::ad_ops::capsule_projector(w).pc, t.constant(x));
    return ad::frobenius_norm(u);
  };
  CHECK(grad_check(f, subspace::WeightMatrix::random(6, 2, rng).entries()) <= 1e-5);
}

TEST_CASE("grad_check rejects non-finite functions") {
  const ScalarFn f = [](ad::Tape&, ad::Var x) { return ad::scale(ad::sum(x), std::nan("")); };
  CHECK_THROWS_AS(grad_check(f, Tensor({2}, 1.0)), NumericError);
}

TEST_CASE("every primitive pullback passes grad_check on 50 instances") {
  Rng rng(9);
  for (const auto& c : train::primitive_gradient_cases()) {
    double worst = 0.0;
    for (int s = 0; s < 50; ++s) {
      auto inst = c.make(rng);
      worst = std::max(worst, grad_check(inst.f, inst.x, 1e-5));
    }
    INFO(c.name);
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("gradients accumulate over repeated uses") {
  ad::Tape tape;
  ad::Var x = tape.variable(Tensor::vector({1.0, 2.0}));
  ad::Var y = ad::add(ad::sum(x), ad::scale(ad::sum(x), 2.0));
  tape.backward(y);
  CHECK(tape.grad(x) == Tensor::vector({3.0, 3.0}));
  ad::Var unused = tape.variable(Tensor::vector({5.0}));
  CHECK(tape.grad(unused) == Tensor::vector({0.0}));
  CHECK_THROWS_AS(tape.backward(x), ShapeError);
}

TEST_CASE("constants never receive gradients") {
  ad::Tape tape;
  ad::Var c = tape.constant(Tensor::vector({1.0, 2.0}));
  ad::Var y = ad::sum(ad::scale(c, 3.0));
  CHECK_FALSE(y.requires_grad());
  tape.backward(y);
  CHECK_FALSE(tape.has_grad(c));
}

TEST_CASE("identical inputs and seed give bit-identical outputs") {
  auto run = [] {
    Rng rng(10);
    const Tensor x = rng.normal_tensor({2, 3, 6, 6});
    const Tensor k = rng.normal_tensor({4, 27});
    ad::Tape tape;
    ad::Var kv = tape.variable(k);
    ad::Var y = ad::conv2d(tape.constant(x), kv, 3, 1, 1);
    ad::Var loss = ad::frobenius_norm(y);
    tape.backward(loss);
    return std::make_pair(y.value(), tape.grad(kv));
  };
  const auto a = run(), b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

}
