#include "scn/app/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <ostream>

#include "scn/app/checkpoint.hpp"
#include "scn/app/config.hpp"
#include "scn/app/idx.hpp"
#include "scn/core/errors.hpp"
#include "scn/core/ops.hpp"
#include "scn/core/random.hpp"
#include "scn/train/trainer.hpp"

namespace scn::app {

namespace fs = std::filesystem;
using capsule::Activation;
using capsule::LayerKind;
using capsule::LayerSpec;

namespace {

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const VersionError& e) {
    err << "checkpoint version mismatch: " << e.what() << '\n';
    return exit_code::version;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return exit_code::io;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return exit_code::numeric;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::config;
  } catch (const Error& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::config;
  }
}

void check_input(const train::Dataset& ds, const capsule::FieldShape& input) {
  const auto& s = ds.images.shape();
  if (s[1] != input.channels || s[2] != input.height || s[3] != input.width) {
    throw ConfigError("data " + ds.split + " has images " + shape_str({s[1], s[2], s[3]}) +
                      " but the model expects " + input.describe());
  }
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool has_split(const fs::path& dir, const std::string& split) {
  return fs::exists(dir / (split + "-images-idx3-ubyte")) &&
         fs::exists(dir / (split + "-labels-idx1-ubyte"));
}

}  // namespace

int cmd_train(const fs::path& config_path, const fs::path& data_dir, const fs::path& out_dir,
              std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto config = parse_config(config_path);
    apply_env_overrides(config);

    auto train_set = load_mnist_split(data_dir, "train");
    check_input(train_set, config.input);
    std::optional<train::Dataset> test_set;
    if (has_split(data_dir, "t10k")) {
      test_set = load_mnist_split(data_dir, "t10k");
      check_input(*test_set, config.input);
    }

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    std::ofstream csv(out_dir / "metrics.csv");
    if (!csv) throw IoError("cannot write " + (out_dir / "metrics.csv").string());

    train::Model model(config.input, config.architecture, config.seed);
    csv << train::metrics_csv_header(model) << '\n';
    auto on_epoch = [&](const train::EpochMetrics& m) {
      csv << train::metrics_csv_row(m) << '\n';
      csv.flush();
      out << "epoch " << m.epoch << ": loss " << fmt("%.5f", m.train_loss) << " train_err "
          << fmt("%.4f", m.train_err) << " test_err " << fmt("%.4f", m.test_err) << " ("
          << fmt("%.1f", m.seconds) << " s)" << std::endl;
    };
    auto result = train::train(model, train_set, config, test_set ? &*test_set : nullptr, on_epoch);

    std::vector<std::pair<std::string, double>> metrics;
    if (!result.epochs.empty()) {
      const auto& last = result.epochs.back();
      metrics = {{"epochs", static_cast<double>(result.epochs.size())},
                 {"train_loss", last.train_loss},
                 {"train_err", last.train_err},
                 {"test_err", last.test_err}};
    }
    const fs::path ckpt = out_dir / "model.ckpt";
    save_checkpoint(ckpt, capture(model, config, &result.state, metrics));

    out << "trained " << result.epochs.size() << " epochs";
    if (!result.epochs.empty()) {
      const auto& last = result.epochs.back();
      out << ": train_loss " << fmt("%.5f", last.train_loss) << " train_err "
          << fmt("%.4f", last.train_err) << " test_err " << fmt("%.4f", last.test_err);
    }
    out << "; checkpoint " << ckpt.string() << '\n';
    return exit_code::ok;
  });
}

int cmd_eval(const fs::path& ckpt_path, const fs::path& data_dir, std::ostream& out,
             std::ostream& err) {
  return guarded(err, [&] {
    const auto ckpt = load_checkpoint(ckpt_path);
    auto model = restore_model(ckpt);
    const auto test_set = load_mnist_split(data_dir, "t10k");
    check_input(test_set, ckpt.input);
    const double e = train::evaluate(model, test_set, ckpt.newton_schulz_iters);
    out << "test error " << fmt("%.4f", e) << " ("
        << static_cast<std::size_t>(std::llround(e * test_set.size())) << "/" << test_set.size()
        << " misclassified)\n";
    return exit_code::ok;
  });
}

int cmd_verify(std::ostream& out, std::ostream& err, const train::VerifyOptions& options) {
  return guarded(err, [&] {
    const auto report = train::run_verification_suite(options);
    out << report.format();
    const bool ok = report.all_passed();
    out << (ok ? "all properties passed\n" : "verification FAILED\n");
    return ok ? exit_code::ok : exit_code::verify_failed;
  });
}

int cmd_inspect(const fs::path& ckpt_path, const fs::path& images_path, std::ostream& out,
                std::ostream& err) {
  return guarded(err, [&] {
    const auto ckpt = load_checkpoint(ckpt_path);
    auto model = restore_model(ckpt);
    const auto images = read_idx_images(images_path);
    if (ckpt.input.channels != 1 || images.rows != ckpt.input.height || images.cols != ckpt.input.width) {
      throw ConfigError("images are " + std::to_string(images.rows) + "x" + std::to_string(images.cols) +
                        " but the model expects " + ckpt.input.describe());
    }
    const std::size_t n = model.num_classes(), px = images.rows * images.cols;
    constexpr std::size_t kChunk = 100;
    for (std::size_t start = 0; start < images.count; start += kChunk) {
      const std::size_t count = std::min(kChunk, images.count - start);
      Tensor x({count, 1, images.rows, images.cols});
      for (std::size_t i = 0; i < count * px; ++i) x[i] = images.pixels[start * px + i] / 255.0;
      const Tensor norms = model.class_norms(x, ckpt.newton_schulz_iters);
      for (std::size_t b = 0; b < count; ++b) {
        std::size_t best = 0;
        out << "image " << start + b << " norms";
        for (std::size_t t = 0; t < n; ++t) {
          const double v = norms.at(b, t);
          out << ' ' << fmt("%.6f", v);
          if (v > norms.at(b, best)) best = t;
        }
        out << " predicted " << best << '\n';
      }
    }
    return exit_code::ok;
  });
}

std::vector<LayerSpec> plain_equivalent(const capsule::FieldShape& input,
                                        const std::vector<LayerSpec>& specs) {
  std::vector<LayerSpec> plain;
  capsule::FieldShape shape = input;
  for (const auto& spec : specs) {
    LayerSpec p = spec;
    switch (spec.kind) {
      case LayerKind::sc_conv:
        p.kind = LayerKind::conv;
        p.n = spec.n * spec.c;
        p.c = 0;
        p.activation = spec.activation == Activation::none ? Activation::none : Activation::relu;
        break;
      case LayerKind::sc_fc:
        p.kind = LayerKind::conv;
        p.n = spec.n * spec.c;
        p.c = 0;
        p.k = shape.height;
        p.stride = std::nullopt;
        p.pad = 0;
        if (shape.height != shape.width) throw ConfigError("bench baseline needs a square field before sc_fc");
        p.activation = spec.activation == Activation::none ? Activation::none : Activation::relu;
        break;
      case LayerKind::activation:
        if (spec.activation != Activation::none) p.activation = Activation::relu;
        break;
      default:
        break;
    }
    shape = capsule::propagate(p, shape);
    plain.push_back(p);
  }
  return plain;
}

namespace {

struct Timing {
  double forward = 0.0;
  double forward_backward = 0.0;
};

// Seconds per image for one stack of layers.
Timing time_stack(const capsule::FieldShape& input, const std::vector<LayerSpec>& specs,
                  std::size_t batch, const BenchOptions& options, int iters) {
  Rng rng(7);
  std::vector<std::unique_ptr<capsule::Layer>> layers;
  capsule::FieldShape shape = input;
  for (const auto& s : specs) {
    layers.push_back(capsule::make_layer(s, shape, rng));
    shape = layers.back()->output_shape();
  }
  const Tensor x = rng.uniform_tensor({batch, input.channels, input.height, input.width}, 0.0, 1.0);
  const Tensor w = rng.normal_tensor({batch * shape.channels * shape.height * shape.width});

  auto pass = [&](bool backward) {
    ad::Tape tape;
    capsule::ForwardContext ctx(tape);
    ctx.training = true;
    ctx.newton_schulz_iters = iters;
    ad::Var h = tape.constant(x);
    for (auto& layer : layers) h = layer->forward(h, ctx);
    ad::Var loss = ad::weighted_sum(h, w);
    if (backward) tape.backward(loss);
  };
  auto measure = [&](bool backward) {
    using clock = std::chrono::steady_clock;
    pass(backward);  // warm-up
    std::size_t reps = 0;
    const auto t0 = clock::now();
    double elapsed = 0.0;
    while (reps < options.min_repeats || elapsed < options.min_seconds) {
      pass(backward);
      ++reps;
      elapsed = std::chrono::duration<double>(clock::now() - t0).count();
    }
    return elapsed / static_cast<double>(reps * batch);
  };
  return {measure(false), measure(true)};
}

}  // namespace

int cmd_bench(const fs::path& config_path, std::ostream& out, std::ostream& err,
              const BenchOptions& options) {
  return guarded(err, [&] {
    auto config = parse_config(config_path);
    apply_env_overrides(config);
    const std::size_t batch = options.batch ? options.batch : config.batch_size;
    const auto plain = plain_equivalent(config.input, config.architecture);

    const Timing sc = time_stack(config.input, config.architecture, batch, options,
                                 config.newton_schulz_iters);
    const Timing base = time_stack(config.input, plain, batch, options, config.newton_schulz_iters);

    out << "batch " << batch << ", input " << config.input.describe() << '\n';
    out << "subspace capsule model: forward " << fmt("%.6f", sc.forward) << " sec/img, forward+backward "
        << fmt("%.6f", sc.forward_backward) << " sec/img\n";
    out << "plain conv model:       forward " << fmt("%.6f", base.forward)
        << " sec/img, forward+backward " << fmt("%.6f", base.forward_backward) << " sec/img\n";
    out << "overhead ratio: forward " << fmt("%.3f", sc.forward / base.forward) << ", forward+backward "
        << fmt("%.3f", sc.forward_backward / base.forward_backward) << '\n';
    out << "reference context: 0.0529 sec/img with capsule layers vs 0.047 sec/img without (ratio "
        << fmt("%.3f", 0.0529 / 0.047) << ") on the original GPU setup; not asserted\n";
    return exit_code::ok;
  });
}

}  // namespace scn::app
