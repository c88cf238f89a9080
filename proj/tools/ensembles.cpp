#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "ensembles/cli_io.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Line ensembles with area tilts: exact, MCMC and Brownian-polymer experiments"};
  app.set_version_flag("--version", std::string(ensembles::kVersion));

  std::string experiment;
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string choices;
  for (auto e : ensembles::kExperiments) choices += (choices.empty() ? "" : ", ") + std::string(e);
  app.add_option("experiment", experiment, "one of: " + choices)->required();
  app.add_option("--config", config_path, "key = value configuration file")->required();
  auto* out_opt = app.add_option("--out", out_dir, "output directory (overrides output.dir)");
  auto* seed_opt = app.add_option("--seed", seed, "64-bit seed (overrides seed)");
  auto* threads_opt =
      app.add_option("--threads", threads, "worker threads (overrides threads)")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) {
      throw ensembles::Error(ensembles::ErrorCode::Io, "cli", "cannot read '" + config_path + "'");
    }
    std::ostringstream text;
    text << in.rdbuf();
    ensembles::RunConfig config = ensembles::parse_config(text.str(), experiment);
    if (*out_opt) config.set("output.dir", out_dir);
    if (*seed_opt) config.set("seed", std::to_string(seed));
    if (*threads_opt) config.set("threads", std::to_string(threads));
    config.validate();
    const int code = ensembles::run(config);
    std::cout << experiment << ": wrote " << config.output_dir() << "/results.json";
    if (code == 2) std::cout << " (verdict FAIL)";
    std::cout << "\n";
    return code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
