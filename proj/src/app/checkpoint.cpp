#include "scn/app/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "scn/app/config.hpp"
#include "scn/core/errors.hpp"

namespace scn::app {

namespace {

constexpr const char* kMagic = "scn-checkpoint";

void write_blob(std::ostream& out, const Tensor& t) {
  std::vector<char> bytes(t.size() * 8);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(t[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Tensor read_blob(std::istream& in, const Shape& shape) {
  Tensor t(shape);
  std::vector<unsigned char> bytes(t.size() * 8);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) throw IoError("checkpoint: truncated data");
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= std::uint64_t{bytes[i * 8 + b]} << (8 * b);
    t[i] = std::bit_cast<double>(bits);
  }
  return t;
}

std::string shape_field(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out.empty() ? "scalar" : out;
}

Shape parse_shape(const std::string& field) {
  Shape s;
  if (field == "scalar") return s;
  std::istringstream is(field);
  for (std::string part; std::getline(is, part, 'x');) s.push_back(std::stoul(part));
  return s;
}

}  // namespace

Checkpoint capture(train::Model& model, const train::TrainConfig& config,
                   const train::OptimizerState* state,
                   std::vector<std::pair<std::string, double>> metrics) {
  Checkpoint c;
  c.input = model.input_shape();
  c.architecture = model.specs();
  c.seed = config.seed;
  c.newton_schulz_iters = config.newton_schulz_iters;
  c.metrics = std::move(metrics);
  c.param_names = model.parameter_names();
  for (auto* p : model.parameters()) c.params.push_back(p->value);
  if (state) {
    c.optimizer = config.optimizer;
    c.state = *state;
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.precision(17);
  out << kMagic << ' ' << kCheckpointVersion << '\n';
  out << "input " << c.input.channels << ' ' << c.input.height << ' ' << c.input.width << '\n';
  out << "seed " << c.seed << '\n';
  out << "newton_schulz_iters " << c.newton_schulz_iters << '\n';
  for (const auto& spec : c.architecture) out << "layer " << spec.describe() << '\n';
  for (const auto& [name, value] : c.metrics) out << "metric " << name << ' ' << value << '\n';
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    out << "param " << c.param_names.at(i) << ' ' << shape_field(c.params[i].shape()) << '\n';
  }
  if (c.optimizer) {
    out << "optimizer " << train::to_string(*c.optimizer) << " step " << c.state.step << " first "
        << c.state.first.size() << " second " << c.state.second.size() << " velocity "
        << c.state.velocity.size() << '\n';
  }
  out << "end\n";
  for (const auto& t : c.params) write_blob(out, t);
  if (c.optimizer) {
    for (const auto& t : c.state.first) write_blob(out, t);
    for (const auto& t : c.state.second) write_blob(out, t);
    for (const auto& t : c.state.velocity) write_blob(out, t);
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("checkpoint: empty file");
  {
    std::istringstream is(line);
    std::string magic;
    int version = 0;
    if (!(is >> magic >> version) || magic != kMagic) throw IoError("checkpoint: not an scn checkpoint");
    if (version != kCheckpointVersion) {
      throw VersionError("checkpoint format version " + std::to_string(version) + ", expected " +
                         std::to_string(kCheckpointVersion));
    }
  }

  Checkpoint c;
  std::vector<Shape> shapes;
  std::size_t n_first = 0, n_second = 0, n_velocity = 0;
  bool ended = false;
  try {
    while (std::getline(in, line)) {
      std::istringstream is(line);
      std::string tag;
      is >> tag;
      if (tag == "end") {
        ended = true;
        break;
      } else if (tag == "input") {
        is >> c.input.channels >> c.input.height >> c.input.width;
      } else if (tag == "seed") {
        is >> c.seed;
      } else if (tag == "newton_schulz_iters") {
        is >> c.newton_schulz_iters;
      } else if (tag == "layer") {
        c.architecture.push_back(parse_layer_spec(line.substr(6)));
      } else if (tag == "metric") {
        std::string name, value;
        is >> name >> value;
        c.metrics.emplace_back(name, std::stod(value));
      } else if (tag == "param") {
        std::string name, shape;
        is >> name >> shape;
        c.param_names.push_back(name);
        shapes.push_back(parse_shape(shape));
      } else if (tag == "optimizer") {
        std::string kind, k1, k2, k3, k4;
        is >> kind >> k1 >> c.state.step >> k2 >> n_first >> k3 >> n_second >> k4 >> n_velocity;
        if (kind == "adam") {
          c.optimizer = train::OptimizerKind::adam;
        } else if (kind == "sgd_momentum") {
          c.optimizer = train::OptimizerKind::sgd_momentum;
        } else {
          throw IoError("unknown optimizer " + kind);
        }
      } else {
        throw IoError("unknown header line '" + line + "'");
      }
      if (is.fail()) throw IoError("malformed header line '" + line + "'");
    }
  } catch (const ConfigError& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw IoError("checkpoint: malformed number in '" + line + "'");
  }
  if (!ended) throw IoError("checkpoint: header not terminated");

  for (const auto& s : shapes) c.params.push_back(read_blob(in, s));
  auto read_state = [&](std::size_t count, std::vector<Tensor>& dst) {
    if (count && count != shapes.size()) throw IoError("checkpoint: optimizer state count mismatch");
    for (std::size_t i = 0; i < count; ++i) dst.push_back(read_blob(in, shapes[i]));
  };
  read_state(n_first, c.state.first);
  read_state(n_second, c.state.second);
  read_state(n_velocity, c.state.velocity);
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("checkpoint: trailing bytes");
  return c;
}

train::Model restore_model(const Checkpoint& c) {
  train::Model model(c.input, c.architecture, c.seed);
  auto params = model.parameters();
  const auto names = model.parameter_names();
  if (params.size() != c.params.size()) throw IoError("checkpoint: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (names[i] != c.param_names[i] || params[i]->value.shape() != c.params[i].shape()) {
      throw IoError("checkpoint: parameter " + c.param_names[i] + " does not match the architecture");
    }
    params[i]->assign(c.params[i]);
  }
  return model;
}

}  // namespace scn::app
