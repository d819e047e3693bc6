#include "rotinv/runner.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Rotation-invariance experiments for continuous local martingales"};
  app.set_version_flag("--version", std::string(rotinv::kVersion));
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  std::string config;
  std::optional<std::size_t> workers;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  run->add_option("config", config, "INI config file")->required();
  run->add_option("--workers", workers, "Worker threads (results do not depend on it)");
  run->add_option("--out", out, "Output directory for report.json and CSV dumps");
  run->add_option("--seed", seed, "Override [run] base_seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const rotinv::RunOutcome outcome = rotinv::run_config_file(config, {workers, out, seed});
  if (outcome.status == 2) {
    std::cerr << "rotinv: " << outcome.diagnostic << '\n';
    return 2;
  }
  for (const auto& t : outcome.report["tests"]) {
    std::cout << (t["passed"].get<bool>() ? "PASS " : "FAIL ") << t["name"].get<std::string>();
    if (t.contains("h")) std::cout << " (h=" << t["h"].get<double>() << ')';
    std::cout << '\n';
  }
  std::cout << "verdict: " << outcome.report["verdict"].get<std::string>() << '\n';
  return outcome.status;
}
