#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mcu/io.hpp"
#include "mcu/pipeline.hpp"

namespace {

struct Flags {
  std::string config;
  std::string method;
  std::optional<std::uint64_t> seed;
  std::string output;
  bool allow_nonconverged = false;
};

void add_common(CLI::App* cmd, Flags& f, bool with_method) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--seed", f.seed, "master seed (overrides MCU_SEED and the file)");
  cmd->add_option("--output", f.output, "output directory (overrides MCU_OUTPUT and the file)");
  if (with_method) cmd->add_option("--method", f.method, "mcu, mvu or pca (overrides MCU_METHOD)");
  cmd->add_flag("--allow-nonconverged", f.allow_nonconverged, "keep results from an unconverged SDP solve");
}

mcu::pipeline::RunConfig resolve(const Flags& f, std::optional<mcu::Method>& method) {
  using namespace mcu::pipeline;
  RunConfig config = f.config.empty() ? RunConfig{} : load_config(f.config);
  apply_environment(config, method);
  if (f.seed) config.seed = *f.seed;
  if (!f.output.empty()) config.output_dir = f.output;
  if (!f.method.empty()) method = parse_method(f.method);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Maximum covariance unfolding regression"};
  app.require_subcommand(1);
  Flags f;
  CLI::App* generate = app.add_subcommand("generate", "write a synthetic dataset and its nominal sample");
  CLI::App* fit = app.add_subcommand("fit", "unfold, recover the embedding and fit the regression");
  CLI::App* compare = app.add_subcommand("compare", "reconstruction-error report across fitted methods");
  CLI::App* optimize = app.add_subcommand("optimize", "recover control settings for the nominal response");
  CLI::App* replay = app.add_subcommand("replay", "rerun a command from its run_*.json echo");
  add_common(generate, f, false);
  add_common(fit, f, true);
  add_common(compare, f, false);
  add_common(optimize, f, true);
  replay->add_option("--config", f.config, "run_*.json echo written by an earlier command")->required();
  replay->add_option("--output", f.output, "directory for the replayed artifacts (default: the echo's directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    using namespace mcu::pipeline;
    if (replay->parsed()) {
      cmd_replay(f.config, f.output.empty() ? std::nullopt : std::optional<std::string>(f.output));
      return 0;
    }
    std::optional<mcu::Method> method;
    const RunConfig config = resolve(f, method);
    if (generate->parsed()) cmd_generate(config);
    else if (fit->parsed()) cmd_fit(config, method, f.allow_nonconverged);
    else if (compare->parsed()) cmd_compare(config);
    else if (optimize->parsed()) cmd_optimize(config, method);
    return 0;
  } catch (const mcu::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return mcu::exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
