#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "scn/app/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Subspace capsule network trainer"};
  app.require_subcommand(1);

  std::string config, data, out, ckpt, images;

  auto* train = app.add_subcommand("train", "Train a model and write metrics.csv and model.ckpt");
  train->add_option("--config", config, "Config file")->required();
  train->add_option("--data", data, "Directory holding the IDX files")->required();
  train->add_option("--out", out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Test error of a checkpoint");
  eval->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  eval->add_option("--data", data, "Directory holding the IDX files")->required();

  auto* verify = app.add_subcommand("verify", "Run the property suites");
  int iters = scn::subspace::kDefaultNewtonSchulzIters;
  double tolerance = -1.0;
  verify->add_option("--newton-schulz-iters", iters, "Iterations for the matrix square root");
  verify->add_option("--tolerance", tolerance, "Override every floating-point tolerance");

  auto* inspect = app.add_subcommand("inspect", "Per-class capsule norms for each image");
  inspect->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  inspect->add_option("--images", images, "IDX image file")->required();

  auto* bench = app.add_subcommand("bench", "Seconds per image against a plain conv baseline");
  bench->add_option("--config", config, "Config file")->required();
  std::size_t batch = 0;
  bench->add_option("--batch", batch, "Batch size (default: the configured one)");

  CLI11_PARSE(app, argc, argv);

  using namespace scn::app;
  try {
    if (*train) return cmd_train(config, data, out, std::cout, std::cerr);
    if (*eval) return cmd_eval(ckpt, data, std::cout, std::cerr);
    if (*verify) {
      scn::train::VerifyOptions options;
      options.newton_schulz_iters = iters;
      if (tolerance >= 0.0) options.tolerance = tolerance;
      return cmd_verify(std::cout, std::cerr, options);
    }
    if (*inspect) return cmd_inspect(ckpt, images, std::cout, std::cerr);
    if (*bench) {
      BenchOptions options;
      options.batch = batch;
      return cmd_bench(config, std::cout, std::cerr, options);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 70;
  }
  return 0;
}
