#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "scn/capsule/capsule_field.hpp"
#include "scn/capsule/capsule_ops.hpp"
#include "scn/capsule/layers.hpp"
#include "scn/core/errors.hpp"
#include "scn/core/grad_check.hpp"
#include "scn/subspace/projector.hpp"
#include "scn/train/verify.hpp"
#include "support.hpp"

using namespace scn;
using namespace scn::capsule;
using scn::testing::vec_norm;

namespace {

CapsuleField field_of(std::initializer_list<double> v) {
  return CapsuleField(Tensor({1, 1, v.size(), 1, 1}, std::vector<double>(v)));
}

SparkingParams thresholds(double b) { return {Tensor({1}, b)}; }

std::vector<WeightMatrix> random_weights(std::size_t n, std::size_t d, std::size_t c, Rng& rng) {
  std::vector<WeightMatrix> ws;
  for (std::size_t t = 0; t < n; ++t) ws.push_back(WeightMatrix::random(d, c, rng));
  return ws;
}

}  // namespace

TEST_SUITE("capsule") {

TEST_CASE("sc_fc examples") {
  const std::vector<WeightMatrix> e1 = {WeightMatrix(Tensor::matrix({{1}, {0}, {0}}))};
  const auto f = sc_fc_forward(Tensor::matrix({{5, 0, 0}}), e1);
  CHECK(f.values().shape() == Shape{1, 1, 1, 1, 1});
  CHECK(f.values()[0] == doctest::Approx(5.0).epsilon(1e-14));

  const std::vector<WeightMatrix> plane = {WeightMatrix(Tensor::matrix({{1, 0}, {0, 1}, {0, 0}})),
                                           WeightMatrix(Tensor::matrix({{2, 0}, {1, 1}, {0, 0}}))};
  const auto z = sc_fc_forward(Tensor::matrix({{0, 0, 3}}), plane);
  for (double v : z.values().data()) CHECK(v == 0.0);
}

TEST_CASE("sc_fc capsule norms equal the projection oracle") {
  Rng rng(1);
  for (int s = 0; s < 20; ++s) {
    const std::size_t d = rng.index(3, 30), c = rng.index(1, std::min<std::size_t>(d, 5));
    const auto ws = random_weights(rng.index(1, 6), d, c, rng);
    const Tensor x = rng.normal_tensor({2, d});
    const auto f = sc_fc_forward(x, ws);
    for (std::size_t b = 0; b < 2; ++b) {
      Tensor xb({d});
      for (std::size_t i = 0; i < d; ++i) xb[i] = x.at(b, i);
      for (std::size_t t = 0; t < ws.size(); ++t) {
        const double oracle = frobenius_norm(subspace::orthogonal_projection(ws[t], xb));
        CHECK(std::abs(vec_norm(f.capsule(b, t)) - oracle) <= 1e-8);
      }
    }
  }
  CHECK_THROWS_AS(sc_fc_forward(Tensor({1, 4}), random_weights(2, 5, 2, rng)), ShapeError);
}

TEST_CASE("sparking examples") {
  CHECK(sparking(field_of({0.25, 0.0}), thresholds(0.5)).values() == Tensor({1, 1, 2, 1, 1}, 0.0));
  const auto v = sparking(field_of({1.0, 0.0}), thresholds(0.5));
  CHECK(v.values()[0] == 0.75);
  CHECK(v.values()[1] == 0.0);
  CHECK(sparking(field_of({0.0, 0.0, 0.0}), thresholds(0.5)).values() == Tensor({1, 1, 3, 1, 1}, 0.0));
}

TEST_CASE("sparking initial threshold is 0.25") {
  const auto p = SparkingParams::initial(3);
  CHECK(p.b.size() == 3);
  for (std::size_t t = 0; t < 3; ++t) CHECK(p.threshold(t) == 0.25);
}

TEST_CASE("sparking matches the formula on random capsules") {
  Rng rng(2);
  for (int s = 0; s < 1000; ++s) {
    const std::size_t c = rng.index(1, 6);
    const Tensor u = scaled(rng.normal_tensor({1, 1, c, 1, 1}), rng.uniform(0.05, 2.0));
    const double b = rng.uniform(0.0, 1.0);
    const Tensor v = sparking(CapsuleField(u), thresholds(b)).values();
    const double nu = frobenius_norm(u), nv = frobenius_norm(v);
    CHECK(std::abs(nv - std::max(nu - b * b, 0.0)) <= 1e-12);
    CHECK(nv <= nu);
    if (nv > 0.0) CHECK(dot(u, v) / (nu * nv) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("sparking dead zone is exactly zero") {
  Rng rng(3);
  for (int s = 0; s < 10000; ++s) {
    const std::size_t c = rng.index(1, 8);
    const double b = rng.uniform(0.1, 1.2);
    Tensor u = rng.normal_tensor({1, 1, c, 1, 1});
    u = scaled(u, rng.uniform(0.0, 1.0) * b * b / frobenius_norm(u));
    const auto v = sparking(CapsuleField(u), thresholds(b));
    for (double e : v.values().data()) REQUIRE(e == 0.0);
  }
}

TEST_CASE("sparking gradient inside the dead zone and at zero is zero") {
  ad::Tape tape;
  ad::Var u = tape.variable(Tensor({1, 2, 2, 1, 1}, std::vector<double>{0.1, 0.1, 0.0, 0.0}));
  ad::Var b = tape.variable(Tensor({2}, 0.5));
  tape.backward(ad::sum(ops::sparking(u, b)));
  CHECK(tape.grad(u) == Tensor(u.shape(), 0.0));
  CHECK(tape.grad(b) == Tensor(b.shape(), 0.0));
}

TEST_CASE("squashing examples and bound") {
  CHECK(squashing(field_of({0.0, 0.0})).values() == Tensor({1, 1, 2, 1, 1}, 0.0));
  CHECK(frobenius_norm(squashing(field_of({0.6, 0.8})).values()) == doctest::Approx(0.5).epsilon(1e-15));
  double prev = -1.0;
  for (int i = 0; i <= 400; ++i) {
    const double r = std::pow(10.0, -3.0 + 6.0 * i / 400.0);
    const double out = frobenius_norm(squashing(field_of({r * 0.6, -r * 0.8})).values());
    CHECK(out > prev);
    CHECK(out < 1.0);
    prev = out;
  }
}

TEST_CASE("squashing gradient at zero is zero") {
  ad::Tape tape;
  ad::Var u = tape.variable(Tensor({1, 1, 3, 1, 1}, 0.0));
  tape.backward(ad::weighted_sum(ops::squashing(u), Tensor({1, 1, 3, 1, 1}, 1.0)));
  CHECK(tape.grad(u) == Tensor(u.shape(), 0.0));
}

TEST_CASE("sc_conv on a single pixel equals sc_fc") {
  Rng rng(4);
  for (int s = 0; s < 100; ++s) {
    const std::size_t i = rng.index(1, 12), c = rng.index(1, std::min<std::size_t>(i, 4));
    const auto ws = random_weights(rng.index(1, 5), i, c, rng);
    const Tensor x = rng.normal_tensor({3, i, 1, 1});
    const auto conv = sc_conv_forward(x, ws, 1, 1, 0);
    const auto fc = sc_fc_forward(x.reshaped({3, i}), ws);
    CHECK(max_abs_diff(conv.values(), fc.values()) <= 1e-10);
  }
}

TEST_CASE("sc_conv of a constant image is spatially constant") {
  Rng rng(5);
  const auto ws = random_weights(3, 2 * 9, 2, rng);
  Tensor x({1, 2, 5, 5});
  for (std::size_t i = 0; i < 25; ++i) x[i] = 0.7;
  for (std::size_t i = 25; i < 50; ++i) x[i] = -1.3;
  const auto f = sc_conv_forward(x, ws, 3, 1, 0);
  REQUIRE(f.height() == 3);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t y = 0; y < 3; ++y)
      for (std::size_t xx = 0; xx < 3; ++xx) {
        const auto got = f.capsule(0, t, y, xx), first = f.capsule(0, t, 0, 0);
        for (std::size_t q = 0; q < 2; ++q) CHECK(std::abs(got[q] - first[q]) <= 1e-14);
      }
}

TEST_CASE("sc_conv matches a per-patch sc_fc loop") {
  Rng rng(6);
  const std::size_t i = 3, k = 3, stride = 2, pad = 1;
  const auto ws = random_weights(4, i * k * k, 2, rng);
  const Tensor x = rng.normal_tensor({2, i, 7, 6});
  const auto f = sc_conv_forward(x, ws, k, stride, pad);
  REQUIRE(f.values().shape() == Shape{2, 4, 2, 4, 3});
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t oy = 0; oy < 4; ++oy)
      for (std::size_t ox = 0; ox < 3; ++ox) {
        Tensor patch({1, i * k * k});
        for (std::size_t ch = 0; ch < i; ++ch)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long yy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              const long xx = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (yy < 0 || xx < 0 || yy >= 7 || xx >= 6) continue;
              patch[(ch * k + ky) * k + kx] = x[((b * i + ch) * 7 + yy) * 6 + xx];
            }
        const auto ref = sc_fc_forward(patch, ws);
        for (std::size_t t = 0; t < 4; ++t) {
          const auto got = f.capsule(b, t, oy, ox), want = ref.capsule(0, t);
          for (std::size_t q = 0; q < 2; ++q) CHECK(std::abs(got[q] - want[q]) <= 1e-10);
        }
      }
}

TEST_CASE("mean pooling") {
  Rng rng(7);
  Tensor same({1, 2, 3, 2, 2});
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t q = 0; q < 3; ++q)
      for (std::size_t s = 0; s < 4; ++s) same[(t * 3 + q) * 4 + s] = 0.5 * t + q;
  const auto pooled = sc_mean_pool(CapsuleField(same), 2, 2);
  CHECK(pooled.capsule(0, 1) == std::vector<double>{0.5, 1.5, 2.5});

  const Tensor x = rng.normal_tensor({2, 3, 2, 4, 6});
  CHECK(sc_mean_pool(CapsuleField(x), 1, 1).values() == x);

  const auto p = sc_mean_pool(CapsuleField(x), 2, 2);
  REQUIRE(p.values().shape() == Shape{2, 3, 2, 2, 3});
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t oy = 0; oy < 2; ++oy)
        for (std::size_t ox = 0; ox < 3; ++ox) {
          const auto got = p.capsule(b, t, oy, ox);
          for (std::size_t q = 0; q < 2; ++q) {
            double acc = 0.0;
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx) acc += CapsuleField(x).capsule(b, t, 2 * oy + dy, 2 * ox + dx)[q];
            CHECK(std::abs(got[q] - acc / 4.0) <= 1e-12);
          }
        }
  CHECK_THROWS_AS(sc_mean_pool(CapsuleField(x), 3, 3), ShapeError);
}

TEST_CASE("capsule norms") {
  CHECK(capsule_norms(CapsuleField(Tensor({2, 3, 2, 2, 2}))) == Tensor({2, 3, 2, 2}));
  CHECK(capsule_norms(field_of({3.0, 4.0})).item() == 5.0);
  Rng rng(8);
  const CapsuleField f(rng.normal_tensor({2, 3, 4, 2, 1}));
  const Tensor n = capsule_norms(f);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t y = 0; y < 2; ++y)
        CHECK(std::abs(n[((b * 3 + t) * 2 + y)] - vec_norm(f.capsule(b, t, y, 0))) <= 1e-12);
}

TEST_CASE("capsule selection") {
  Tensor v({1, 3, 1, 1, 1}, std::vector<double>{0.1, -0.9, 0.3});
  CHECK(capsule_select(CapsuleField(v)).index[0] == 1);
  CHECK(capsule_select(CapsuleField(v)).vectors.item() == -0.9);
  Tensor eq({1, 3, 2, 1, 1}, std::vector<double>{0.6, 0.8, 0.8, 0.6, 1.0, 0.0});
  CHECK(capsule_select(CapsuleField(eq)).index[0] == 0);

  Rng rng(9);
  const CapsuleField f(rng.normal_tensor({5, 6, 3, 1, 1}));
  const auto sel = capsule_select(f);
  const Tensor norms = capsule_norms(f);
  for (std::size_t b = 0; b < 5; ++b) {
    std::size_t best = 0;
    for (std::size_t t = 1; t < 6; ++t)
      if (norms[b * 6 + t] > norms[b * 6 + best]) best = t;
    CHECK(sel.index[b] == best);
    for (std::size_t q = 0; q < 3; ++q) CHECK(sel.vectors.at(b, q) == f.capsule(b, best)[q]);
  }
  CHECK_THROWS_AS(capsule_select(CapsuleField(Tensor({1, 2, 2, 2, 1}))), ShapeError);
}

TEST_CASE("permuting capsule types permutes every layer's outputs") {
  Rng rng(10);
  const auto ws = random_weights(4, 2 * 9, 2, rng);
  const std::vector<std::size_t> perm = {3, 1, 0, 2};
  std::vector<WeightMatrix> pw;
  for (auto p : perm) pw.push_back(ws[p]);
  const Tensor b = rng.uniform_tensor({4}, 0.3, 0.7);
  Tensor pb({4});
  for (std::size_t t = 0; t < 4; ++t) pb[t] = b[perm[t]];

  const Tensor x = rng.normal_tensor({2, 2, 4, 4});
  const auto a1 = sc_mean_pool(sparking(sc_conv_forward(x, ws, 3, 1, 1), {b}), 2, 2);
  const auto a2 = sc_mean_pool(sparking(sc_conv_forward(x, pw, 3, 1, 1), {pb}), 2, 2);
  for (std::size_t bi = 0; bi < 2; ++bi)
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t xx = 0; xx < 2; ++xx) CHECK(a2.capsule(bi, t, y, xx) == a1.capsule(bi, perm[t], y, xx));
}

TEST_CASE("two-layer SCN passes grad_check") {
  Rng rng(11);
  auto inst = train::two_layer_scn_instance(rng, 1e-4);
  CHECK(grad_check(inst.f, inst.x, 1e-5) <= 1e-5);
}

TEST_CASE("bilinear upsampling") {
  ad::Tape tape;
  const Tensor c({1, 2, 3, 2}, 1.25);
  const Tensor up = ops::upsample_bilinear2x(tape.constant(c)).value();
  CHECK(up == Tensor({1, 2, 6, 4}, 1.25));
  const Tensor ramp({1, 1, 1, 2}, std::vector<double>{0.0, 4.0});
  CHECK(ops::upsample_bilinear2x(tape.constant(ramp)).value() ==
        Tensor({1, 1, 2, 4}, std::vector<double>{0, 1, 3, 4, 0, 1, 3, 4}));
}

TEST_CASE("layer specs describe and propagate a capsule classifier tail") {
  FieldShape in{128, 8, 8, 0, 0};
  const LayerSpec first{LayerKind::sc_conv, 64, 2, 3, std::nullopt, 0, Activation::sparking};
  CHECK(first.describe() == "sc_conv n=64 c=2 k=3 pad=0 activation=sparking");
  FieldShape s = propagate(first, in);
  CHECK(s == FieldShape{128, 6, 6, 64, 2});
  s = propagate({LayerKind::sc_conv, 64, 2, 1, std::nullopt, std::nullopt, Activation::sparking}, s);
  s = propagate({LayerKind::sc_meanpool, 0, 0, 6, std::nullopt, std::nullopt, Activation::none}, s);
  CHECK(s == FieldShape{128, 1, 1, 64, 2});
  s = propagate({LayerKind::sc_fc, 10, 4, 1, std::nullopt, std::nullopt, Activation::none}, s);
  CHECK(s == FieldShape{40, 1, 1, 10, 4});
}

TEST_CASE("shape propagation rejects bad geometry") {
  const FieldShape img{3, 8, 8, 0, 0};
  CHECK_THROWS_AS(propagate({LayerKind::sc_conv, 4, 30, 3}, img), ShapeError);
  CHECK_THROWS_AS(propagate({LayerKind::sc_meanpool, 0, 0, 3}, FieldShape{8, 8, 8, 4, 2}), ShapeError);
  CHECK_THROWS_AS(propagate({LayerKind::activation, 0, 0, 1, {}, {}, Activation::sparking}, img), ShapeError);
  CHECK_THROWS_AS(propagate({LayerKind::conv, 4, 0, 9, {}, 0, Activation::relu}, img), ShapeError);
  CHECK_THROWS_AS(propagate({LayerKind::sc_fc, 3, 2, 1, {}, {}, Activation::relu}, img), ShapeError);
}

TEST_CASE("subspace layers hold only weight matrices and sparking thresholds") {
  Rng rng(12);
  auto layer = make_layer({LayerKind::sc_conv, 5, 2, 3, {}, {}, Activation::sparking}, {4, 6, 6, 0, 0}, rng);
  const auto params = layer->parameters();
  REQUIRE(params.size() == 6);
  for (std::size_t t = 0; t < 5; ++t) CHECK(params[t]->value.shape() == Shape{36, 2});
  CHECK(params[5]->value == Tensor({5}, 0.5));
  auto fc = make_layer({LayerKind::sc_fc, 3, 4}, {8, 2, 2, 4, 2}, rng);
  CHECK(fc->parameters().size() == 3);
}

TEST_CASE("inference kernels are frozen until weights change") {
  Rng rng(13);
  auto layer = make_layer({LayerKind::sc_fc, 2, 2}, {6, 1, 1, 0, 0}, rng);
  auto* sub = dynamic_cast<SubspaceLayer*>(layer.get());
  REQUIRE(sub != nullptr);
  const Tensor* first = &sub->frozen_kernel(20);
  CHECK(&sub->frozen_kernel(20) == first);
  const Tensor before = *first;
  auto* w = layer->parameters()[0];
  w->assign(scaled(w->value, 2.0));
  CHECK(max_abs_diff(sub->frozen_kernel(20), before) <= 1e-12);  // scaling W keeps its span
  w->assign(rng.normal_tensor(w->value.shape()));
  CHECK(max_abs_diff(sub->frozen_kernel(20), before) > 1e-3);
}

}
