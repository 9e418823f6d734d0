#include "scn/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "scn/core/errors.hpp"
#include "scn/core/ops.hpp"
#include "scn/core/random.hpp"
#include "scn/train/loss.hpp"

namespace scn::train {

namespace {

std::size_t count_errors(const Tensor& norms, std::span<const int> labels) {
  const std::size_t n = norms.dim(1);
  std::size_t errors = 0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    std::size_t best = 0;
    for (std::size_t t = 1; t < n; ++t) {
      if (norms.at(b, t) > norms.at(b, best)) best = t;
    }
    if (static_cast<int>(best) != labels[b]) ++errors;
  }
  return errors;
}

}  // namespace

StepResult train_step(Model& model, const Tensor& images, std::span<const int> labels,
                      OptimizerState& state, const TrainConfig& config) {
  ad::Tape tape;
  ForwardContext ctx(tape);
  ctx.training = true;
  ctx.newton_schulz_iters = config.newton_schulz_iters;

  Model::Output out = model.forward(ctx, images, true);
  ad::Var loss = norm_softmax_loss(out.norms, labels);
  const double loss_value = loss.value().item();
  if (!std::isfinite(loss_value)) {
    throw NumericError("non-finite loss at the class head (layer " +
                       std::to_string(model.num_layers() - 1) + ", " +
                       model.specs().back().describe() + ")");
  }
  tape.backward(loss);

  std::vector<Parameter*> params = model.parameters();
  const std::vector<std::string> names = model.parameter_names();
  std::vector<Tensor> grads;
  std::vector<Tensor*> values;
  grads.reserve(params.size());
  values.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor g(params[i]->value.shape());
    for (const auto& [p, v] : ctx.bindings) {
      if (p == params[i] && v.valid() && tape.has_grad(v)) axpy(g, tape.grad(v));
    }
    if (!g.all_finite()) throw NumericError("non-finite gradient for " + names[i]);
    grads.push_back(std::move(g));
    values.push_back(&params[i]->value);
  }
  optimizer_step(values, grads, state, config);
  for (auto* p : params) ++p->version;

  StepResult result;
  result.loss = loss_value;
  result.errors = count_errors(out.norms.value(), labels);
  result.projector_builds = ctx.projector_builds;
  result.mean_norms = std::move(out.mean_norms);
  return result;
}

TrainResult train(Model& model, const Dataset& train_set, const TrainConfig& config,
                  const Dataset* test_set, const EpochCallback& on_epoch, OptimizerState state) {
  config.validate();
  train_set.validate();
  const std::size_t count =
      config.train_limit ? std::min(config.train_limit, train_set.size()) : train_set.size();
  if (count == 0) throw InvalidArgument("empty training set");

  Dataset test_view;
  if (test_set) test_view = test_set->head(config.test_limit);

  Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(count);
  TrainResult result;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

    double loss_sum = 0.0;
    std::size_t errors = 0;
    std::vector<double> norm_sums(model.num_layers(), 0.0);
    for (std::size_t begin = 0; begin < count; begin += config.batch_size) {
      const std::size_t end = std::min(count, begin + config.batch_size);
      std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const Tensor images = train_set.gather(idx);
      const std::vector<int> labels = train_set.gather_labels(idx);
      StepResult step = train_step(model, images, labels, state, config);
      const double weight = static_cast<double>(idx.size());
      loss_sum += step.loss * weight;
      errors += step.errors;
      for (std::size_t l = 0; l < norm_sums.size(); ++l) norm_sums[l] += step.mean_norms[l] * weight;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(count);
    m.train_err = static_cast<double>(errors) / static_cast<double>(count);
    m.test_err = test_set ? evaluate(model, test_view, config.newton_schulz_iters)
                          : std::numeric_limits<double>::quiet_NaN();
    for (std::size_t l = 0; l < norm_sums.size(); ++l) {
      if (model.layer(l).output_shape().is_capsule()) {
        m.mean_norms.push_back(norm_sums[l] / static_cast<double>(count));
      }
    }
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  result.state = std::move(state);
  return result;
}

double error_rate(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw ShapeError("error_rate: length mismatch");
  if (labels.empty()) return 0.0;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) wrong += predicted[i] != labels[i];
  return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

double evaluate(Model& model, const Dataset& data, int newton_schulz_iters,
                std::size_t batch_size) {
  data.validate();
  if (data.size() == 0) return 0.0;
  std::vector<int> predicted;
  predicted.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(data.size(), begin + batch_size);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const std::vector<int> p = model.predict(data.gather(idx), newton_schulz_iters);
    predicted.insert(predicted.end(), p.begin(), p.end());
  }
  return error_rate(predicted, data.labels);
}

std::string metrics_csv_header(const Model& model) {
  std::ostringstream os;
  os << "epoch,train_loss,train_err,test_err,seconds";
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    if (model.layer(l).output_shape().is_capsule()) {
      os << ",mean_norm_layer" << l << '_' << capsule::to_string(model.specs()[l].kind);
    }
  }
  return os.str();
}

std::string metrics_csv_row(const EpochMetrics& m) {
  auto num = [](double v) {
    if (std::isnan(v)) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return std::string(buf);
  };
  std::ostringstream os;
  os << m.epoch << ',' << num(m.train_loss) << ',' << num(m.train_err) << ','
     << num(m.test_err) << ',' << num(m.seconds);
  for (double v : m.mean_norms) os << ',' << num(v);
  return os.str();
}

}  // namespace scn::train
