#include <cstdint>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <tbb/global_control.h>

#include "blockjm/config.hpp"
#include "blockjm/error.hpp"
#include "blockjm/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Blockwise Bayesian joint longitudinal-multistate models"};

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool list_presets = false;

  for (const char* name : {"simulate", "fit", "compare", "study"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "Output directory")->required();
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--threads", threads, "Worker threads (default: all cores)")->check(CLI::PositiveNumber);
  }
  app.add_flag("--list-presets", list_presets, "Print preset names and exit");
  app.require_subcommand(list_presets ? 0 : 1, 1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (list_presets) {
    for (const auto& p : blockjm::preset_names()) std::cout << p << '\n';
    return 0;
  }

  try {
    blockjm::RunConfig config = blockjm::load_run_config(config_path);
    if (seed) config.seed = *seed;
    if (threads) config.threads = *threads;
    std::unique_ptr<tbb::global_control> limit;
    if (config.threads > 0) {
      limit = std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism,
                                                    static_cast<std::size_t>(config.threads));
    }
    auto command = blockjm::command_from_string(app.get_subcommands().front()->get_name());
    return blockjm::run(command, config, out_dir, std::cerr);
  } catch (const blockjm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
