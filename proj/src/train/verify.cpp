#include "scn/train/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "scn/capsule/capsule_field.hpp"
#include "scn/capsule/capsule_ops.hpp"
#include "scn/core/errors.hpp"
#include "scn/core/ops.hpp"
#include "scn/subspace/eigen_oracle.hpp"
#include "scn/subspace/projector.hpp"
#include "scn/train/loss.hpp"

namespace scn::train {

namespace cops = capsule::ops;
using subspace::WeightMatrix;

bool VerificationReport::all_passed() const {
  return std::all_of(properties.begin(), properties.end(),
                     [](const PropertyResult& p) { return p.passed; });
}

const PropertyResult* VerificationReport::find(const std::string& name) const {
  for (const auto& p : properties) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::string VerificationReport::format() const {
  std::ostringstream os;
  char line[256];
  for (const auto& p : properties) {
    std::snprintf(line, sizeof line, "%-4s %-34s samples=%-6zu max_error=%-12.4g tol=%.3g\n",
                  p.passed ? "PASS" : "FAIL", p.name.c_str(), p.samples, p.max_error,
                  p.tolerance);
    os << line;
  }
  return os.str();
}

namespace {

// ---------------------------------------------------------------------------
// Sampling helpers.

Tensor random_orthogonal(std::size_t n, Rng& rng) {
  Tensor q = rng.normal_tensor({n, n});
  // Modified Gram-Schmidt on columns, twice for stability.
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < j; ++i) {
        double proj = 0.0;
        for (std::size_t r = 0; r < n; ++r) proj += q.at(r, i) * q.at(r, j);
        for (std::size_t r = 0; r < n; ++r) q.at(r, j) -= proj * q.at(r, i);
      }
      double norm = 0.0;
      for (std::size_t r = 0; r < n; ++r) norm += q.at(r, j) * q.at(r, j);
      norm = std::sqrt(norm);
      for (std::size_t r = 0; r < n; ++r) q.at(r, j) /= norm;
    }
  }
  return q;
}

// Q diag(lambda) Q^T with eigenvalues log-spaced over [scale, scale * cond].
Tensor random_spd(std::size_t n, double cond, Rng& rng) {
  const Tensor q = random_orthogonal(n, rng);
  const double scale = std::pow(10.0, rng.uniform(-2.0, 2.0));
  Tensor qd = q;
  for (std::size_t j = 0; j < n; ++j) {
    const double frac = n == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(n - 1);
    const double lambda = scale * std::pow(cond, frac);
    for (std::size_t i = 0; i < n; ++i) qd.at(i, j) *= lambda;
  }
  Tensor a = matmul(qd, q, false, true);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double avg = 0.5 * (a.at(i, j) + a.at(j, i));
      a.at(i, j) = a.at(j, i) = avg;
    }
  return a;
}

double rel_frobenius(const Tensor& got, const Tensor& want) {
  return frobenius_norm(sub(got, want)) / frobenius_norm(want);
}

Tensor unit_vector(std::size_t d, Rng& rng) {
  Tensor x = rng.normal_tensor({d});
  return scaled(x, 1.0 / frobenius_norm(x));
}

Tensor matvec(const Tensor& m, const Tensor& v) {
  return matmul(m, v.reshaped({v.size(), 1})).reshaped({m.dim(0)});
}

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.dim(1); ++k) acc += a.at(i, k) * b.at(k, j);
      out.at(i, j) = acc;
    }
  return out;
}

WeightMatrix random_basis(Rng& rng, std::size_t d_lo, std::size_t d_hi, std::size_t c_hi) {
  const std::size_t d = rng.index(d_lo, d_hi);
  const std::size_t c = rng.index(1, std::min(c_hi, d));
  return WeightMatrix::random(d, c, rng);
}

// Capsule norms of a (B,n,c,H,W) tensor, flat.
std::vector<double> all_norms(const Tensor& u) {
  const std::size_t dim = u.dim(2), spatial = u.dim(3) * u.dim(4);
  std::vector<double> out;
  for (std::size_t bt = 0; bt < u.dim(0) * u.dim(1); ++bt)
    for (std::size_t s = 0; s < spatial; ++s) {
      double sq = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        const double v = u[(bt * dim + i) * spatial + s];
        sq += v * v;
      }
      out.push_back(std::sqrt(sq));
    }
  return out;
}

bool near_threshold(const Tensor& u, const Tensor& b, double margin) {
  const std::size_t spatial = u.dim(3) * u.dim(4);
  const auto norms = all_norms(u);
  for (std::size_t i = 0; i < norms.size(); ++i) {
    const std::size_t type = (i / spatial) % u.dim(1);
    if (std::abs(norms[i] - b[type] * b[type]) <= margin) return true;
  }
  return false;
}

Tensor away_from_zero(Shape shape, Rng& rng) {
  Tensor t = rng.uniform_tensor(std::move(shape), -1.0, 1.0);
  for (auto& v : t.data()) v += v >= 0.0 ? 0.05 : -0.05;
  return t;
}

// ---------------------------------------------------------------------------
// Report assembly.

class Collector {
 public:
  explicit Collector(const VerifyOptions& options) : options_(options) {}

  // `exact_bound` marks strict bounds (error < tol) that are not tolerances.
  void add(const std::string& name, std::size_t samples, double max_error, double tol,
           bool exact_bound = false) {
    PropertyResult r;
    r.name = name;
    r.samples = samples;
    r.max_error = max_error;
    r.tolerance = (!exact_bound && options_.tolerance) ? *options_.tolerance : tol;
    r.passed = std::isfinite(max_error) &&
               (exact_bound ? max_error < r.tolerance : max_error <= r.tolerance);
    report_.properties.push_back(r);
  }

  // Runs body; a thrown error becomes a failed entry.
  template <typename Fn>
  void run(const std::string& name, std::size_t samples, double tol, Fn&& body,
           bool exact_bound = false) {
    double err = 0.0;
    try {
      err = body();
    } catch (const std::exception&) {
      err = std::numeric_limits<double>::infinity();
    }
    add(name, samples, err, tol, exact_bound);
  }

  VerificationReport take() { return std::move(report_); }

 private:
  const VerifyOptions& options_;
  VerificationReport report_;
};

}  // namespace

// ---------------------------------------------------------------------------

std::vector<GradCase> primitive_gradient_cases() {
  std::vector<GradCase> cases;
  auto add = [&](std::string name, std::function<GradInstance(Rng&)> make) {
    cases.push_back({std::move(name), std::move(make)});
  };
  // Each case reduces the op output with fixed random weights.
  auto reduce = [](ad::Var y, const Tensor& w) { return ad::weighted_sum(y, w); };

  add("matmul_lhs", [&](Rng& rng) {
    const std::size_t m = rng.index(1, 5), k = rng.index(1, 5), n = rng.index(1, 5);
    Tensor b = rng.normal_tensor({k, n}), w = rng.normal_tensor({m, n});
    return GradInstance{[=](ad::Tape& t, ad::Var x) { return reduce(ad::matmul(x, t.constant(b)), w); },
                        rng.normal_tensor({m, k})};
  });
  add("matmul_rhs", [&](Rng& rng) {
    const std::size_t m = rng.index(1, 5), k = rng.index(1, 5), n = rng.index(1, 5);
    Tensor a = rng.normal_tensor({m, k}), w = rng.normal_tensor({m, n});
    return GradInstance{[=](ad::Tape& t, ad::Var x) { return reduce(ad::matmul(t.constant(a), x), w); },
                        rng.normal_tensor({k, n})};
  });
  add("transpose", [&](Rng& rng) {
    const std::size_t m = rng.index(1, 5), n = rng.index(1, 5);
    Tensor w = rng.normal_tensor({n, m});
    return GradInstance{[=](ad::Tape&, ad::Var x) { return reduce(ad::transpose(x), w); },
                        rng.normal_tensor({m, n})};
  });
  add("add", [&](Rng& rng) {
    Tensor c = rng.normal_tensor({3, 4}), w = rng.normal_tensor({3, 4});
    return GradInstance{[=](ad::Tape& t, ad::Var x) { return reduce(ad::add(x, t.constant(c)), w); },
                        rng.normal_tensor({3, 4})};
  });
  add("sub", [&](Rng& rng) {
    Tensor c = rng.normal_tensor({4, 2}), w = rng.normal_tensor({4, 2});
    return GradInstance{[=](ad::Tape& t, ad::Var x) { return reduce(ad::sub(t.constant(c), x), w); },
                        rng.normal_tensor({4, 2})};
  });
  add("scale", [&](Rng& rng) {
    const double s = rng.uniform(-3.0, 3.0);
    Tensor w = rng.normal_tensor({5});
    return GradInstance{[=](ad::Tape&, ad::Var x) { return reduce(ad::scale(x, s), w); },
                        rng.normal_tensor({5})};
  });
  add("mul_scalar_tensor", [&](Rng& rng) {
    Tensor s = Tensor::scalar(rng.uniform(-2.0, 2.0)), w = rng.normal_tensor({2, 3});
    return GradInstance{[=](ad::Tape& t, ad::Var x) { return reduce(ad::mul_scalar(x, t.constant(s)), w); },
                        rng.normal_tensor({2, 3})};
  });
  add("mul_scalar_scalar", [&](Rng& rng) {
    Tensor a = rng.normal_tensor({2, 3}), w = rng.normal_tensor({2, 3});
    return GradInstance{[=](ad::Tape& t, ad::Var x) { return reduce(ad::mul_scalar(t.constant(a), x), w); },
                        Tensor::scalar(rng.uniform(-2.0, 2.0))};
  });
  add("scalar_pow", [&](Rng& rng) {
    const double e = rng.uniform(-1.5, 1.5);
    const double w = rng.uniform(-2.0, 2.0);
    return GradInstance{[=](ad::Tape&, ad::Var x) { return ad::scale(ad::scalar_pow(x, e), w); },
                        Tensor::scalar(rng.uniform(0.5, 2.0))};
  });
  add("frobenius_norm", [&](Rng& rng) {
    return GradInstance{[](ad::Tape&, ad::Var x) { return ad::frobenius_norm(x); },
                        rng.normal_tensor({3, 3})};
  });
  add("affine_identity", [&](Rng& rng) {
    const double alpha = rng.uniform(-3, 3), beta = rng.uniform(-3, 3);
    Tensor w = rng.normal_tensor({3, 3});
    return GradInstance{[=](ad::Tape&, ad::Var x) { return reduce(ad::affine_identity(x, alpha, beta), w); },
                        rng.normal_tensor({3, 3})};
  });
  add("sum", [&](Rng& rng) {
    return GradInstance{[](ad::Tape&, ad::Var x) { return ad::sum(x); }, rng.normal_tensor({2, 5})};
  });
  add("weighted_sum", [&](Rng& rng) {
    Tensor w = rng.normal_tensor({7});
    return GradInstance{[=](ad::Tape&, ad::Var x) { return ad::weighted_sum(x, w); },
                        rng.normal_tensor({7})};
  });
  add("reshape", [&](Rng& rng) {
    Tensor w = rng.normal_tensor({3, 4});
    return GradInstance{[=](ad::Tape&, ad::Var x) { return reduce(ad::reshape(x, {3, 4}), w); },
                        rng.normal_tensor({2, 6})};
  });
  add("slice", [&](Rng& rng) {
    const std::size_t off = rng.index(0, 6);
    Tensor w = rng.normal_tensor({2, 3});
    return GradInstance{[=](ad::Tape&, ad::Var x) { return reduce(ad::slice(x, off, {2, 3}), w); },
                        rng.normal_tensor({12})};
  });
  add("concat_rows", [&](Rng& rng) {
    Tensor top = rng.normal_tensor({2, 3}), w = rng.normal_tensor({5, 3});
    return GradInstance{[=](ad::Tape& t, ad::Var x) {
                          return reduce(ad::concat_rows({t.constant(top), x}), w);
                        },
                        rng.normal_tensor({3, 3})};
  });
  add("relu", [&](Rng& rng) {
    Tensor w = rng.normal_tensor({10});
    return GradInstance{[=](ad::Tape&, ad::Var x) { return reduce(ad::relu(x), w); },
                        away_from_zero({10}, rng)};
  });
  add("im2col", [&](Rng& rng) {
    const std::size_t k = rng.index(1, 3), stride = rng.index(1, 2), pad = rng.index(0, 1);
    Tensor x = rng.normal_tensor({2, 2, 4, 4});
    Tensor cols = im2col(x, k, stride, pad);
    Tensor w = rng.normal_tensor(cols.shape());
    return GradInstance{[=](ad::Tape&, ad::Var v) { return reduce(ad::im2col(v, k, stride, pad), w); }, x};
  });
  add("fold_columns", [&](Rng& rng) {
    Tensor w = rng.normal_tensor({2, 3, 2, 2});
    return GradInstance{[=](ad::Tape&, ad::Var y) { return reduce(ad::fold_columns(y, 2, 2, 2), w); },
                        rng.normal_tensor({3, 8})};
  });
  add("add_channel_bias_input", [&](Rng& rng) {
    Tensor bias = rng.normal_tensor({3}), w = rng.normal_tensor({2, 3, 2, 2});
    return GradInstance{[=](ad::Tape& t, ad::Var x) {
                          return reduce(ad::add_channel_bias(x, t.constant(bias)), w);
                        },
                        rng.normal_tensor({2, 3, 2, 2})};
  });
  add("add_channel_bias_bias", [&](Rng& rng) {
    Tensor x = rng.normal_tensor({2, 3, 2, 2}), w = rng.normal_tensor({2, 3, 2, 2});
    return GradInstance{[=](ad::Tape& t, ad::Var b) {
                          return reduce(ad::add_channel_bias(t.constant(x), b), w);
                        },
                        rng.normal_tensor({3})};
  });
  add("conv2d_input", [&](Rng& rng) {
    Tensor kernel = rng.normal_tensor({3, 2 * 9}), w = rng.normal_tensor({2, 3, 4, 4});
    return GradInstance{[=](ad::Tape& t, ad::Var x) {
                          return reduce(ad::conv2d(x, t.constant(kernel), 3, 1, 1), w);
                        },
                        rng.normal_tensor({2, 2, 4, 4})};
  });
  add("conv2d_kernel", [&](Rng& rng) {
    Tensor x = rng.normal_tensor({2, 2, 5, 5}), w = rng.normal_tensor({2, 3, 3, 3});
    return GradInstance{[=](ad::Tape& t, ad::Var k) {
                          return reduce(ad::conv2d(t.constant(x), k, 3, 2, 1), w);
                        },
                        rng.normal_tensor({3, 2 * 9})};
  });
  add("sparking_input", [&](Rng& rng) {
    Tensor b = rng.uniform_tensor({3}, 0.3, 0.9);
    Tensor u;
    do {
      u = rng.normal_tensor({2, 3, 2, 2, 2}, 0.6);
    } while (near_threshold(u, b, 1e-3));
    Tensor w = rng.normal_tensor(u.shape());
    return GradInstance{[=](ad::Tape& t, ad::Var x) {
                          return reduce(cops::sparking(x, t.constant(b)), w);
                        },
                        u};
  });
  add("sparking_threshold", [&](Rng& rng) {
    Tensor b = rng.uniform_tensor({3}, 0.3, 0.9);
    Tensor u;
    do {
      u = rng.normal_tensor({2, 3, 2, 1, 2}, 0.6);
    } while (near_threshold(u, b, 1e-3));
    Tensor w = rng.normal_tensor(u.shape());
    return GradInstance{[=](ad::Tape& t, ad::Var bv) {
                          return reduce(cops::sparking(t.constant(u), bv), w);
                        },
                        b};
  });
  add("squashing", [&](Rng& rng) {
    Tensor w = rng.normal_tensor({2, 2, 3, 2, 1});
    return GradInstance{[=](ad::Tape&, ad::Var x) { return reduce(cops::squashing(x), w); },
                        rng.normal_tensor({2, 2, 3, 2, 1})};
  });
  add("capsule_norms", [&](Rng& rng) {
    Tensor w = rng.normal_tensor({2, 3, 2, 2});
    return GradInstance{[=](ad::Tape&, ad::Var x) { return reduce(cops::capsule_norms(x), w); },
                        rng.normal_tensor({2, 3, 2, 2, 2})};
  });
  add("mean_pool", [&](Rng& rng) {
    Tensor w = rng.normal_tensor({2, 2, 2, 2, 2});
    return GradInstance{[=](ad::Tape&, ad::Var x) { return reduce(cops::mean_pool(x, 2, 2), w); },
                        rng.normal_tensor({2, 2, 2, 4, 4})};
  });
  add("upsample_bilinear2x", [&](Rng& rng) {
    Tensor w = rng.normal_tensor({1, 2, 6, 4});
    return GradInstance{[=](ad::Tape&, ad::Var x) { return reduce(cops::upsample_bilinear2x(x), w); },
                        rng.normal_tensor({1, 2, 3, 2})};
  });
  add("norm_softmax_loss", [&](Rng& rng) {
    std::vector<int> labels(4);
    for (auto& l : labels) l = static_cast<int>(rng.index(0, 4));
    return GradInstance{[=](ad::Tape&, ad::Var x) { return norm_softmax_loss(x, labels); },
                        rng.uniform_tensor({4, 5}, 0.0, 3.0)};
  });
  add("inv_sqrt", [&](Rng& rng) {
    const std::size_t n = rng.index(1, 4);
    Tensor w = rng.normal_tensor({n, n});
    return GradInstance{[=](ad::Tape&, ad::Var x) {
                          // A = X^T X + I stays symmetric under entrywise probes of X.
                          ad::Var a = ad::affine_identity(subspace::ad_ops::gram(x), 1.0, 1.0);
                          return reduce(subspace::ad_ops::inv_sqrt(a).inv_sqrt, w);
                        },
                        rng.normal_tensor({n + 1, n})};
  });
  add("capsule_projector", [&](Rng& rng) {
    const std::size_t d = rng.index(2, 6), c = rng.index(1, std::min<std::size_t>(d, 3));
    Tensor w = rng.normal_tensor({c, d});
    return GradInstance{[=](ad::Tape&, ad::Var x) {
                          return reduce(subspace::ad_ops::capsule_projector(x).pc, w);
                        },
                        WeightMatrix::random(d, c, rng).entries()};
  });
  return cases;
}

GradInstance two_layer_scn_instance(Rng& rng, double margin) {
  constexpr std::size_t kBatch = 2, kIn = 2, kSide = 2;
  constexpr std::size_t kConvTypes = 8, kConvDim = 2, kK = 3;
  constexpr std::size_t kFcTypes = 10, kFcDim = 4;
  constexpr std::size_t kConvD = kIn * kK * kK;
  constexpr std::size_t kFcD = kConvTypes * kConvDim * kSide * kSide;

  const Tensor b({kConvTypes}, capsule::kInitialSparkingB);
  for (;;) {
    Tensor x = rng.normal_tensor({kBatch, kIn, kSide, kSide});
    std::vector<int> labels(kBatch);
    for (auto& l : labels) l = static_cast<int>(rng.index(0, kFcTypes - 1));

    std::vector<double> flat;
    for (std::size_t t = 0; t < kConvTypes; ++t) {
      const Tensor w = WeightMatrix::random(kConvD, kConvDim, rng).entries();
      flat.insert(flat.end(), w.data().begin(), w.data().end());
    }
    for (std::size_t t = 0; t < kFcTypes; ++t) {
      const Tensor w = WeightMatrix::random(kFcD, kFcDim, rng).entries();
      flat.insert(flat.end(), w.data().begin(), w.data().end());
    }
    const std::size_t count = flat.size();
    Tensor theta({count}, std::move(flat));

    auto conv_capsules = [=](ad::Tape& tape, ad::Var th) {
      std::vector<ad::Var> ws;
      for (std::size_t t = 0; t < kConvTypes; ++t) {
        ws.push_back(ad::slice(th, t * kConvD * kConvDim, {kConvD, kConvDim}));
      }
      return cops::sc_conv(tape.constant(x), cops::sc_kernel(ws, subspace::kDefaultNewtonSchulzIters),
                           kConvTypes, kK, 1, 1);
    };
    ScalarFn f = [=](ad::Tape& tape, ad::Var th) {
      ad::Var v = cops::sparking(conv_capsules(tape, th), tape.constant(b));
      std::vector<ad::Var> ws;
      const std::size_t base = kConvTypes * kConvD * kConvDim;
      for (std::size_t t = 0; t < kFcTypes; ++t) {
        ws.push_back(ad::slice(th, base + t * kFcD * kFcDim, {kFcD, kFcDim}));
      }
      ad::Var caps = cops::sc_fc(v, cops::sc_kernel(ws, subspace::kDefaultNewtonSchulzIters), kFcTypes);
      ad::Var norms = ad::reshape(cops::capsule_norms(caps), {kBatch, kFcTypes});
      return norm_softmax_loss(norms, labels);
    };

    ad::Tape probe;
    if (!near_threshold(conv_capsules(probe, probe.constant(theta)).value(), b, margin)) {
      return {f, theta};
    }
  }
}

VerificationReport run_verification_suite(const VerifyOptions& options) {
  Collector out(options);
  Rng rng(options.seed);
  const int iters = options.newton_schulz_iters;

  // --- tensor core -----------------------------------------------------------
  out.run("matmul_vs_triple_loop", 50, 1e-12, [&] {
    double worst = 0.0;
    for (int s = 0; s < 50; ++s) {
      Tensor a = rng.normal_tensor({rng.index(1, 12), rng.index(1, 12)});
      Tensor b = rng.normal_tensor({a.dim(1), rng.index(1, 12)});
      worst = std::max(worst, max_abs_diff(matmul(a, b), naive_matmul(a, b)));
    }
    return worst;
  });

  out.run("im2col_col2im_adjoint", 50, 1e-10, [&] {
    double worst = 0.0;
    for (int s = 0; s < 50; ++s) {
      const std::size_t k = rng.index(1, 3), stride = rng.index(1, 2), pad = rng.index(0, 1);
      Tensor x = rng.normal_tensor({rng.index(1, 2), rng.index(1, 3), rng.index(3, 8), rng.index(3, 8)});
      Tensor cols = im2col(x, k, stride, pad);
      Tensor y = rng.normal_tensor(cols.shape());
      const double lhs = dot(cols, y);
      const double rhs = dot(x, col2im(y, x.shape(), k, stride, pad));
      worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
    }
    return worst;
  });

  {
    const auto cases = primitive_gradient_cases();
    constexpr int kPerOp = 10;
    out.run("pullback_grad_check", cases.size() * kPerOp, 1e-6, [&] {
      double worst = 0.0;
      for (const auto& c : cases) {
        for (int s = 0; s < kPerOp; ++s) {
          GradInstance inst = c.make(rng);
          worst = std::max(worst, grad_check(inst.f, inst.x, 1e-5));
        }
      }
      return worst;
    });
  }

  // --- subspace algebra ------------------------------------------------------
  out.run("jacobi_reconstruction", 50, 1e-10, [&] {
    double worst = 0.0;
    for (int s = 0; s < 50; ++s) {
      const std::size_t n = rng.index(1, 16);
      Tensor a = rng.normal_tensor({n, n});
      a = scaled(add(a, transpose(a)), 0.5);
      const auto eig = subspace::sym_eig_oracle(a);
      const double scale = std::max(1.0, frobenius_norm(a));
      worst = std::max(worst, max_abs_diff(subspace::eig_reconstruct(eig), a) / scale);
      worst = std::max(worst, max_abs_diff(matmul(eig.eigenvectors, eig.eigenvectors, true, false),
                                           Tensor::identity(n)));
    }
    return worst;
  });

  auto ns_vs_oracle = [&](double cond_lo, double cond_hi, int samples) {
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
      const std::size_t n = rng.index(1, 32);
      const double cond = std::exp(rng.uniform(std::log(cond_lo), std::log(cond_hi)));
      const Tensor a = random_spd(n, cond, rng);
      const auto roots = subspace::inv_sqrt(a, iters);
      const auto eig = subspace::sym_eig_oracle(a);
      worst = std::max(worst, rel_frobenius(roots.sqrt, subspace::eig_reconstruct(eig, 0.5)));
      worst = std::max(worst, rel_frobenius(roots.inv_sqrt, subspace::eig_reconstruct(eig, -0.5)));
    }
    return worst;
  };
  out.run("newton_schulz_cond_le_1e2", 100, 1e-8, [&] { return ns_vs_oracle(1.0, 100.0, 100); });
  out.run("newton_schulz_cond_le_1e4", 100, 1e-3, [&] { return ns_vs_oracle(100.0, 1e4, 100); });

  out.run("isometry_pd", 500, 1e-8, [&] {
    double worst = 0.0;
    for (int s = 0; s < 500; ++s) {
      const WeightMatrix w = random_basis(rng, 4, 128, 16);
      const auto pp = subspace::capsule_projector(w, iters);
      const Tensor u = rng.normal_tensor({w.c()});
      const double nu = frobenius_norm(u);
      worst = std::max(worst, std::abs(frobenius_norm(matvec(pp.pd, u)) - nu) / nu);
    }
    return worst;
  });

  out.run("norm_preservation", 200, 1e-8, [&] {
    double worst = 0.0;
    for (int s = 0; s < 200; ++s) {
      const WeightMatrix w = random_basis(rng, 4, 128, 16);
      const auto pp = subspace::capsule_projector(w, iters);
      const Tensor x = unit_vector(w.d(), rng);
      const double nu = frobenius_norm(matvec(pp.pc, x));
      const double ny = frobenius_norm(subspace::orthogonal_projection(w, x));
      worst = std::max(worst, std::abs(nu - ny));
    }
    return worst;
  });

  out.run("angle_preservation", 200, 1e-8, [&] {
    double worst = 0.0;
    for (int s = 0; s < 200; ++s) {
      const WeightMatrix w = random_basis(rng, 4, 128, 16);
      const auto pp = subspace::capsule_projector(w, iters);
      const Tensor x1 = unit_vector(w.d(), rng), x2 = unit_vector(w.d(), rng);
      const double du = dot(matvec(pp.pc, x1), matvec(pp.pc, x2));
      const double dy = dot(subspace::orthogonal_projection(w, x1), subspace::orthogonal_projection(w, x2));
      worst = std::max(worst, std::abs(du - dy));
    }
    return worst;
  });

  out.run("projector_idempotent_symmetric", 200, 1e-8, [&] {
    double worst = 0.0;
    for (int s = 0; s < 200; ++s) {
      const WeightMatrix w = random_basis(rng, 4, 128, 16);
      const auto pp = subspace::capsule_projector(w, iters);
      const Tensor p = matmul(pp.pd, pp.pc);
      worst = std::max(worst, max_abs_diff(matmul(p, p), p));
      worst = std::max(worst, max_abs_diff(p, transpose(p)));
    }
    return worst;
  });

  out.run("projector_pair_identities", 200, 1e-8, [&] {
    double worst = 0.0;
    for (int s = 0; s < 200; ++s) {
      const WeightMatrix w = random_basis(rng, 4, 128, 16);
      const auto pp = subspace::capsule_projector(w, iters);
      const Tensor eye = Tensor::identity(w.c());
      worst = std::max(worst, max_abs_diff(matmul(pp.pc, pp.pd), eye));
      worst = std::max(worst, max_abs_diff(matmul(pp.pd, pp.pd, true, false), eye));
    }
    return worst;
  });

  out.run("gradient_orthogonality_c1", 100, 1e-6, [&] {
    double worst = 0.0;
    for (int s = 0; s < 100; ++s) {
      const std::size_t d = rng.index(2, 64);
      const Tensor w0 = WeightMatrix::random(d, 1, rng).entries();
      const Tensor a = rng.normal_tensor({1, d}), b = rng.normal_tensor({1, d});
      ad::Tape tape;
      ad::Var w = tape.variable(w0);
      ad::Var pc = subspace::ad_ops::capsule_projector(w, iters, false).pc;
      ad::Var lin = ad::weighted_sum(pc, a);
      ad::Var q = ad::weighted_sum(pc, b);
      ad::Var q2 = ad::reshape(q, {1, 1});
      ad::Var loss = ad::add(ad::reshape(lin, {1, 1}), ad::matmul(q2, q2));
      tape.backward(loss);
      const Tensor g = tape.grad(w);
      const double gn = frobenius_norm(g);
      if (gn == 0.0) continue;
      worst = std::max(worst, std::abs(dot(w0, g)) / (frobenius_norm(w0) * gn));
    }
    return worst;
  });

  // --- capsule layers --------------------------------------------------------
  out.run("sparking_dead_zone_exact", 10000, 0.0, [&] {
    double worst = 0.0;
    for (int s = 0; s < 10000; ++s) {
      const std::size_t c = rng.index(1, 8);
      const double b = rng.uniform(0.1, 1.5);
      Tensor u = unit_vector(c, rng);
      u = scaled(u, rng.uniform(0.0, 1.0) * b * b).reshaped({1, 1, c, 1, 1});
      const auto v = capsule::sparking(capsule::CapsuleField(u), {Tensor({1}, b)});
      for (double e : v.values().data()) worst = std::max(worst, std::abs(e));
    }
    return worst;
  });

  out.run("sparking_formula_non_expansive", 10000, 1e-12, [&] {
    double worst = 0.0;
    for (int s = 0; s < 10000; ++s) {
      const std::size_t c = rng.index(1, 8);
      const double b = rng.uniform(0.0, 1.0);
      const Tensor u = scaled(rng.normal_tensor({1, 1, c, 1, 1}), rng.uniform(0.01, 3.0));
      const auto v = capsule::sparking(capsule::CapsuleField(u), {Tensor({1}, b)});
      const double nu = frobenius_norm(u), nv = frobenius_norm(v.values());
      worst = std::max(worst, std::abs(nv - std::max(nu - b * b, 0.0)));
      worst = std::max(worst, std::max(nv - nu, 0.0));
      if (nv > 0.0) worst = std::max(worst, 1.0 - dot(u, v.values()) / (nu * nv));
    }
    return worst;
  });

  out.run("squashing_norm_below_one", 10000, 1.0, [&] {
    double worst = 0.0;
    for (int s = 0; s < 10000; ++s) {
      const std::size_t c = rng.index(1, 8);
      const Tensor u = scaled(unit_vector(c, rng), std::pow(10.0, rng.uniform(-3.0, 3.0))).reshaped({1, 1, c, 1, 1});
      worst = std::max(worst, frobenius_norm(capsule::squashing(capsule::CapsuleField(u)).values()));
    }
    return worst;
  }, true);

  out.run("sc_conv_fc_equivalence", 100, 1e-10, [&] {
    double worst = 0.0;
    for (int s = 0; s < 100; ++s) {
      const std::size_t i = rng.index(1, 16), n = rng.index(1, 6), c = rng.index(1, std::min<std::size_t>(i, 4));
      const std::size_t batch = rng.index(1, 3);
      std::vector<WeightMatrix> ws;
      for (std::size_t t = 0; t < n; ++t) ws.push_back(WeightMatrix::random(i, c, rng));
      const Tensor x = rng.normal_tensor({batch, i, 1, 1});
      const auto conv = capsule::sc_conv_forward(x, ws, 1, 1, 0, iters);
      const auto fc = capsule::sc_fc_forward(x.reshaped({batch, i}), ws, iters);
      worst = std::max(worst, max_abs_diff(conv.values(), fc.values()));
    }
    return worst;
  });

  out.run("type_permutation_equivariance", 20, 1e-12, [&] {
    double worst = 0.0;
    for (int s = 0; s < 20; ++s) {
      const std::size_t i = 2, n = 4, c = 2, k = 3;
      std::vector<WeightMatrix> ws;
      for (std::size_t t = 0; t < n; ++t) ws.push_back(WeightMatrix::random(i * k * k, c, rng));
      std::vector<std::size_t> perm = {2, 0, 3, 1};
      std::vector<WeightMatrix> permuted;
      for (auto p : perm) permuted.push_back(ws[p]);
      const Tensor x = rng.normal_tensor({2, i, 4, 4});
      const auto a = capsule::sc_conv_forward(x, ws, k, 1, 1, iters);
      const auto b = capsule::sc_conv_forward(x, permuted, k, 1, 1, iters);
      for (std::size_t bi = 0; bi < 2; ++bi)
        for (std::size_t t = 0; t < n; ++t)
          for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t xx = 0; xx < 4; ++xx) {
              const auto u = a.capsule(bi, perm[t], y, xx), v = b.capsule(bi, t, y, xx);
              for (std::size_t q = 0; q < c; ++q) worst = std::max(worst, std::abs(u[q] - v[q]));
            }
    }
    return worst;
  });

  out.run("two_layer_scn_grad_check", 2, 1e-5, [&] {
    double worst = 0.0;
    for (int s = 0; s < 2; ++s) {
      GradInstance inst = two_layer_scn_instance(rng, 1e-4);
      worst = std::max(worst, grad_check(inst.f, inst.x, 1e-5));
    }
    return worst;
  });

  return out.take();
}

}  // namespace scn::train
