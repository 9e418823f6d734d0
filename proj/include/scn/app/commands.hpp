#ifndef SCN_APP_COMMANDS_HPP
#define SCN_APP_COMMANDS_HPP

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "scn/capsule/layers.hpp"
#include "scn/train/verify.hpp"

namespace scn::app {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int verify_failed = 1;
inline constexpr int config = 2;
inline constexpr int io = 3;
inline constexpr int numeric = 4;
inline constexpr int version = 5;
}  // namespace exit_code

/// Writes <out>/metrics.csv and <out>/model.ckpt.
int cmd_train(const std::filesystem::path& config, const std::filesystem::path& data_dir,
              const std::filesystem::path& out_dir, std::ostream& out, std::ostream& err);

/// Test error of a checkpoint on the t10k split of `data_dir`.
int cmd_eval(const std::filesystem::path& ckpt, const std::filesystem::path& data_dir,
             std::ostream& out, std::ostream& err);

int cmd_verify(std::ostream& out, std::ostream& err, const train::VerifyOptions& options = {});

/// Per-class capsule norms and the predicted class for every image of an IDX file.
int cmd_inspect(const std::filesystem::path& ckpt, const std::filesystem::path& images,
                std::ostream& out, std::ostream& err);

struct BenchOptions {
  std::size_t batch = 0;         // 0: the configured batch size
  double min_seconds = 0.5;      // per measurement
  std::size_t min_repeats = 2;
};

int cmd_bench(const std::filesystem::path& config, std::ostream& out, std::ostream& err,
              const BenchOptions& options = {});

/// The bench baseline: sc_conv(n,c,k) becomes conv(n*c, k) with relu when the
/// capsule layer had an activation, sc_fc(n,c) becomes a full-window conv(n*c)
/// and capsule activations become relu.
std::vector<capsule::LayerSpec> plain_equivalent(const capsule::FieldShape& input,
                                                 const std::vector<capsule::LayerSpec>& specs);

}  // namespace scn::app

#endif  // SCN_APP_COMMANDS_HPP
