// agw: command-line frontend for the weather measurement-error pipeline.
//
//   agw <command> --config run.ini [--set section.key=value]... [--seed N] [--out DIR] [--quiet]
//
// Exit status: 0 success, 1 validation/config error, 2 runtime error.

#include <iostream>

#include <CLI11.hpp>

#include "agw/pipeline.hpp"

namespace {

int exit_code(agw::ErrorCode code) {
  return code == agw::ErrorCode::InvalidConfig ? 1 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weather measurement-error pipeline", "agw"};
  app.set_version_flag("--version", std::string(agw::kVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<long long> seed;
  std::string out_dir;
  bool quiet = false;

  for (const auto& name : agw::pipeline_commands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "INI run configuration")->required();
    sub->add_option("--set", overrides, "Override a config key: section.key=value (repeatable)");
    sub->add_option("--seed", seed, "Override [run] seed");
    sub->add_option("--out", out_dir, "Override [run] out directory");
    sub->add_flag("--quiet", quiet, "Suppress progress output");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    auto config = agw::Config::load(config_path);
    for (const auto& o : overrides) config.apply_override(o);
    if (seed) config.set("run", "seed", std::to_string(*seed));
    if (!out_dir.empty()) config.set("run", "out", out_dir);
    const auto pipeline = agw::pipeline_config(config);

    const auto report = agw::run_command(command, pipeline);
    const auto manifest = pipeline.out_dir / ("manifest_" + command + ".json");
    agw::write_manifest(manifest, command, config, pipeline, report);
    if (!quiet) {
      for (const auto& [stage, seconds] : report.timings)
        std::cerr << stage << ": " << report.outputs.size() << " output(s) in " << seconds << " s\n";
    }
    return 0;
  } catch (const agw::Error& e) {
    std::cerr << "agw " << command << ": " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "agw " << command << ": " << e.what() << '\n';
    return 2;
  }
}
