#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "scn/app/checkpoint.hpp"
#include "scn/app/commands.hpp"
#include "scn/app/config.hpp"
#include "scn/app/idx.hpp"
#include "scn/core/errors.hpp"
#include "scn/core/ops.hpp"
#include "scn/core/random.hpp"

using namespace scn;
using namespace scn::app;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("scn_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

// A learnable toy split: bright top half for label 0, bright bottom half for label 1.
void write_toy_split(const fs::path& dir, const std::string& split, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  IdxImages img{count, 6, 6, std::vector<std::uint8_t>(count * 36)};
  std::vector<std::uint8_t> labels(count);
  for (std::size_t i = 0; i < count; ++i) {
    labels[i] = static_cast<std::uint8_t>(i % 2);
    for (std::size_t p = 0; p < 36; ++p) {
      const bool bright = (p < 18) == (labels[i] == 0);
      img.pixels[i * 36 + p] = static_cast<std::uint8_t>(bright ? 150 + rng.index(0, 100) : rng.index(0, 60));
    }
  }
  write_idx_images(dir / (split + "-images-idx3-ubyte"), img);
  write_idx_labels(dir / (split + "-labels-idx1-ubyte"), labels);
}

const char* kToyConfig = R"(optimizer = adam
learning_rate = 0.003
epochs = 2
batch_size = 8
seed = 4
input = 1 6 6

[layer] conv n=4 k=3 stride=2 pad=1 activation=relu
[layer] sc_conv n=4 c=2 k=3 activation=sparking
[layer] sc_meanpool k=3
[layer] sc_fc n=2 c=2
)";

}  // namespace

TEST_SUITE("app") {

TEST_CASE("IDX fixture round trip is byte exact") {
  const fs::path dir = scratch("idx");
  IdxImages img{2, 2, 3, {0, 255, 17, 34, 51, 68, 85, 102, 119, 136, 153, 170}};
  write_idx_images(dir / "img", img);
  write_idx_labels(dir / "lab", {7, 3});
  const std::vector<std::uint8_t> expected_header = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3};
  const auto bytes = file_bytes(dir / "img");
  REQUIRE(bytes.size() == 16 + 12);
  CHECK(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 16) == expected_header);
  const auto lab = file_bytes(dir / "lab");
  CHECK(lab == std::vector<std::uint8_t>{0, 0, 8, 1, 0, 0, 0, 2, 7, 3});

  const auto ds = load_idx(dir / "img", dir / "lab", "fixture");
  CHECK(ds.images.shape() == Shape{2, 1, 2, 3});
  CHECK(ds.labels == std::vector<int>{7, 3});
  for (std::size_t i = 0; i < 12; ++i) CHECK(ds.images[i] == img.pixels[i] / 255.0);
}

TEST_CASE("IDX errors") {
  const fs::path dir = scratch("idx_err");
  write_idx_images(dir / "img", {2, 1, 1, {1, 2}});
  write_bytes(dir / "badlab", {0, 0, 8, 3, 0, 0, 0, 2, 1, 1});
  try {
    load_idx(dir / "img", dir / "badlab");
    FAIL("expected bad magic");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("bad magic") != std::string::npos);
  }
  write_bytes(dir / "short", {0, 0, 8, 1, 0, 0, 0, 5, 1});
  CHECK_THROWS_AS(read_idx_labels(dir / "short"), IoError);
  write_idx_labels(dir / "three", {1, 2, 3});
  CHECK_THROWS_WITH_AS(load_idx(dir / "img", dir / "three"), doctest::Contains("count mismatch"), IoError);
  CHECK_THROWS_AS(read_idx_images(dir / "missing"), IoError);
}

TEST_CASE("MNIST headers" * doctest::skip(std::getenv("SCN_MNIST_DIR") == nullptr)) {
  const fs::path dir = std::getenv("SCN_MNIST_DIR");
  const auto bytes = file_bytes(dir / "train-images-idx3-ubyte");
  REQUIRE(bytes.size() == 16 + 60000ull * 28 * 28);
  const auto img = read_idx_images(dir / "train-images-idx3-ubyte");
  CHECK(img.count == 60000);
  CHECK(img.rows == 28);
  CHECK(img.cols == 28);
  CHECK(read_idx_labels(dir / "train-labels-idx1-ubyte").size() == 60000);
}

TEST_CASE("config with a 64-type 2-dim capsule convolution") {
  const auto c = parse_config_text(
      "optimizer = adam\nlearning_rate = 0.0003\nepochs = 1\nbatch_size = 4\nseed = 1\n"
      "input = 128 8 8\n[layer] sc_conv n=64 c=2 k=3 pad=0 activation=sparking\n"
      "[layer] sc_meanpool k=6\n[layer] sc_fc n=10 c=4\n");
  REQUIRE(c.architecture.size() == 3);
  const auto& l = c.architecture[0];
  CHECK(l.kind == capsule::LayerKind::sc_conv);
  CHECK(l.n == 64);
  CHECK(l.c == 2);
  CHECK(l.k == 3);
  CHECK(c.architecture[2].n == 10);
  CHECK(c.architecture[2].c == 4);
}

TEST_CASE("empty config lists every missing key") {
  try {
    parse_config_text("");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const char* key : {"optimizer", "learning_rate", "epochs", "batch_size", "seed", "input", "[layer]"}) {
      CHECK(msg.find(key) != std::string::npos);
    }
  }
}

TEST_CASE("config errors") {
  const std::string head = "optimizer = adam\nlearning_rate = 0.1\nepochs = 1\nbatch_size = 2\nseed = 1\ninput = 1 4 4\n";
  CHECK_THROWS_AS(parse_config_text(head + "colour = red\n[layer] sc_fc n=2 c=2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(head + "[layer] sc_fc n=2 c=2 size=3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(head + "[layer] sc_conv n=2 c=2 k=5 pad=0\n[layer] sc_fc n=2 c=2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(head + "[layer] sc_meanpool k=3\n[layer] sc_fc n=2 c=2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(head + "[layer] conv n=3 k=3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(head + "[layer] sc_fc n=2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(head + "[layer] sc_meanpool k=2 c=2\n[layer] sc_fc n=2 c=2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("optimizer = rmsprop\nlearning_rate = 0.1\nepochs = 1\nbatch_size = 2\nseed = 1\ninput = 1 4 4\n[layer] sc_fc n=2 c=2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("optimizer = adam\nlearning_rate = 0.1\nepochs = 1\nbatch_size = 0\nseed = 1\ninput = 1 4 4\n[layer] sc_fc n=2 c=2\n"), ConfigError);
}

TEST_CASE("block and inline layer forms agree and formatting round-trips") {
  const std::string head = "optimizer = sgd_momentum\nmomentum = 0.8\nlearning_rate = 0.01\nepochs = 3\nbatch_size = 5\nseed = 9\ninput = 2 6 6\n";
  const auto inline_form = parse_config_text(head + "[layer] sc_conv n=3 c=2 k=3 stride=2 activation=squashing\n[layer] sc_fc n=4 c=3\n");
  const auto block_form = parse_config_text(head +
      "[layer]\nkind = sc_conv\nn = 3\nc = 2\nk = 3\nstride = 2\nactivation = squashing\n\n"
      "[layer]\nkind = sc_fc   # head\nn = 4\nc = 3\n");
  CHECK(inline_form.architecture == block_form.architecture);
  const auto again = parse_config_text(format_config(inline_form));
  CHECK(again.architecture == inline_form.architecture);
  CHECK(again.optimizer == train::OptimizerKind::sgd_momentum);
  CHECK(again.momentum == 0.8);
  CHECK(again.seed == 9);
  CHECK(parse_layer_spec(inline_form.architecture[0].describe()) == inline_form.architecture[0]);
}

TEST_CASE("shipped configs express the reference capsule architectures") {
  const fs::path root = SCN_SOURCE_DIR;
  const auto svhn = parse_config(root / "configs" / "svhn_classifier.cfg");
  const auto shapes = train::propagate_shapes(svhn.input, svhn.architecture);
  CHECK(shapes[5] == capsule::FieldShape{128, 8, 8, 0, 0});
  CHECK(shapes[6] == capsule::FieldShape{128, 6, 6, 64, 2});
  CHECK(shapes[9] == capsule::FieldShape{128, 1, 1, 64, 2});
  CHECK(shapes.back() == capsule::FieldShape{40, 1, 1, 10, 4});

  const auto head = parse_config(root / "configs" / "capsule_head_10x4.cfg");
  const auto hs = train::propagate_shapes(head.input, head.architecture);
  CHECK(hs[1].types == 64);
  CHECK(hs[1].dim == 2);
  CHECK(hs.back() == capsule::FieldShape{40, 1, 1, 10, 4});
  CHECK_NOTHROW(parse_config(root / "configs" / "mnist.cfg"));
}

TEST_CASE("SCN_SEED overrides the configured seed") {
  train::TrainConfig c;
  c.seed = 5;
  setenv("SCN_SEED", "123", 1);
  apply_env_overrides(c);
  unsetenv("SCN_SEED");
  CHECK(c.seed == 123);
  apply_env_overrides(c);
  CHECK(c.seed == 123);
}

TEST_CASE("checkpoint round trip gives bit-identical logits") {
  const fs::path dir = scratch("ckpt");
  auto cfg = parse_config_text(kToyConfig);
  train::Model m(cfg.input, cfg.architecture, 77);
  Rng rng(3);
  // Perturb away from the initialization so the test cannot pass by reseeding.
  for (auto* p : m.parameters()) p->assign(add(p->value, rng.normal_tensor(p->value.shape(), 0.05)));
  train::OptimizerState st;
  st.step = 4;
  for (auto* p : m.parameters()) {
    st.first.push_back(rng.normal_tensor(p->value.shape()));
    st.second.push_back(rng.uniform_tensor(p->value.shape(), 0.0, 1.0));
  }
  save_checkpoint(dir / "m.ckpt", capture(m, cfg, &st, {{"test_err", 0.125}}));

  const auto loaded = load_checkpoint(dir / "m.ckpt");
  CHECK(loaded.metrics.at(0).second == 0.125);
  CHECK(loaded.state.step == 4);
  CHECK(loaded.state.first == st.first);
  CHECK(loaded.state.second == st.second);
  auto m2 = restore_model(loaded);
  const Tensor x = rng.uniform_tensor({100, 1, 6, 6}, 0.0, 1.0);
  CHECK(m.class_norms(x, 20) == m2.class_norms(x, 20));
}

TEST_CASE("checkpoint version and corruption errors") {
  const fs::path dir = scratch("ckpt_err");
  auto cfg = parse_config_text(kToyConfig);
  train::Model m(cfg.input, cfg.architecture, 1);
  save_checkpoint(dir / "ok.ckpt", capture(m, cfg));

  auto bytes = file_bytes(dir / "ok.ckpt");
  const std::string text(bytes.begin(), bytes.end());
  std::string v2 = text;
  v2.replace(v2.find("scn-checkpoint 1"), 16, "scn-checkpoint 2");
  write_text(dir / "v2.ckpt", v2);
  CHECK_THROWS_AS(load_checkpoint(dir / "v2.ckpt"), VersionError);
  write_text(dir / "cut.ckpt", text.substr(0, text.size() - 9));
  CHECK_THROWS_AS(load_checkpoint(dir / "cut.ckpt"), IoError);
  write_text(dir / "junk.ckpt", "hello\n");
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), IoError);

  std::ostringstream out, err;
  CHECK(cmd_eval(dir / "v2.ckpt", dir, out, err) == exit_code::version);
  CHECK(cmd_eval(dir / "cut.ckpt", dir, out, err) == exit_code::io);
}

TEST_CASE("train, eval and inspect through the command layer") {
  const fs::path dir = scratch("cmd");
  write_toy_split(dir, "train", 200, 1);
  write_toy_split(dir, "t10k", 60, 2);
  write_text(dir / "toy.cfg", kToyConfig);

  std::ostringstream out, err;
  REQUIRE(cmd_train(dir / "toy.cfg", dir, dir / "run", out, err) == exit_code::ok);
  CHECK(out.str().find("trained 2 epochs") != std::string::npos);
  std::ifstream csv(dir / "run" / "metrics.csv");
  std::string header, row1, row2, extra;
  std::getline(csv, header);
  std::getline(csv, row1);
  std::getline(csv, row2);
  CHECK(header.rfind("epoch,train_loss,train_err,test_err,seconds", 0) == 0);
  CHECK(row1.rfind("1,", 0) == 0);
  CHECK(row2.rfind("2,", 0) == 0);
  CHECK_FALSE(std::getline(csv, extra));

  std::ostringstream eval_out;
  CHECK(cmd_eval(dir / "run" / "model.ckpt", dir, eval_out, err) == exit_code::ok);
  CHECK(eval_out.str().find("test error") != std::string::npos);

  std::ostringstream inspect_out;
  CHECK(cmd_inspect(dir / "run" / "model.ckpt", dir / "t10k-images-idx3-ubyte", inspect_out, err) ==
        exit_code::ok);
  std::istringstream lines(inspect_out.str());
  std::size_t n = 0;
  for (std::string line; std::getline(lines, line); ++n) {
    CHECK(line.find("predicted") != std::string::npos);
  }
  CHECK(n == 60);
}

TEST_CASE("same config and seed give identical metrics files") {
  const fs::path dir = scratch("determinism");
  write_toy_split(dir, "train", 64, 1);
  write_text(dir / "toy.cfg", kToyConfig);
  std::ostringstream out, err;
  REQUIRE(cmd_train(dir / "toy.cfg", dir, dir / "a", out, err) == exit_code::ok);
  REQUIRE(cmd_train(dir / "toy.cfg", dir, dir / "b", out, err) == exit_code::ok);
  // Drop the wall-clock column before comparing.
  auto strip = [](const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> rows;
    for (std::string line; std::getline(in, line);) {
      std::vector<std::string> cells;
      std::stringstream ss(line);
      for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
      cells.erase(cells.begin() + 4);
      std::string joined;
      for (const auto& c : cells) joined += c + ",";
      rows.push_back(joined);
    }
    return rows;
  };
  CHECK(strip(dir / "a" / "metrics.csv") == strip(dir / "b" / "metrics.csv"));
  CHECK(file_bytes(dir / "a" / "model.ckpt") == file_bytes(dir / "b" / "model.ckpt"));
}

TEST_CASE("training with zero learning rate reproduces the initial model") {
  const fs::path dir = scratch("lr0");
  write_toy_split(dir, "train", 32, 1);
  std::string cfg_text = kToyConfig;
  cfg_text.replace(cfg_text.find("learning_rate = 0.003"), 21, "learning_rate = 0");
  write_text(dir / "zero.cfg", cfg_text);
  std::ostringstream out, err;
  REQUIRE(cmd_train(dir / "zero.cfg", dir, dir / "run", out, err) == exit_code::ok);
  const auto cfg = parse_config(dir / "zero.cfg");
  train::Model initial(cfg.input, cfg.architecture, cfg.seed);
  auto trained = restore_model(load_checkpoint(dir / "run" / "model.ckpt"));
  const Tensor x = Rng(5).uniform_tensor({20, 1, 6, 6}, 0.0, 1.0);
  CHECK(initial.class_norms(x, 20) == trained.class_norms(x, 20));
}

TEST_CASE("command exit codes") {
  const fs::path dir = scratch("exit");
  std::ostringstream out, err;
  write_text(dir / "bad.cfg", "optimizer = adam\n");
  CHECK(cmd_train(dir / "bad.cfg", dir, dir / "run", out, err) == exit_code::config);
  write_text(dir / "toy.cfg", kToyConfig);
  CHECK(cmd_train(dir / "toy.cfg", dir / "nowhere", dir / "run", out, err) == exit_code::io);
  CHECK(cmd_train(dir / "missing.cfg", dir, dir / "run", out, err) == exit_code::io);

  write_toy_split(dir, "train", 32, 1);
  std::string blowup = kToyConfig;
  blowup.replace(blowup.find("optimizer = adam"), 16, "optimizer = sgd_momentum");
  blowup.replace(blowup.find("learning_rate = 0.003"), 21, "learning_rate = 1e300");
  write_text(dir / "blowup.cfg", blowup);
  CHECK(cmd_train(dir / "blowup.cfg", dir, dir / "run", out, err) == exit_code::numeric);
}

TEST_CASE("bench reports the overhead ratio and the reference figures") {
  const fs::path dir = scratch("bench");
  write_text(dir / "toy.cfg", kToyConfig);
  std::ostringstream out, err;
  BenchOptions o;
  o.min_seconds = 0.01;
  CHECK(cmd_bench(dir / "toy.cfg", out, err, o) == exit_code::ok);
  CHECK(out.str().find("overhead ratio") != std::string::npos);
  CHECK(out.str().find("0.0529") != std::string::npos);
  CHECK(out.str().find("0.047") != std::string::npos);
}

TEST_CASE("plain baseline keeps the channel counts") {
  const auto cfg = parse_config_text(kToyConfig);
  const auto plain = plain_equivalent(cfg.input, cfg.architecture);
  const auto shapes = train::propagate_shapes(cfg.input, plain);
  CHECK(shapes[1].channels == 8);
  CHECK(shapes.back().channels == 4);
  CHECK(shapes.back().height == 1);
  for (const auto& s : plain) CHECK(s.kind != capsule::LayerKind::sc_conv);
}

}
