// avglemma <subcommand> --config <path> [--out <dir>] [--threads <n>]
//
// Exit status: 0 all checks pass, 1 a check failed, 2 invalid config,
// 3 I/O or other runtime error.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "avglemma/errors.hpp"
#include "avglemma/parallel.hpp"
#include "avglemma/report.hpp"
#include "avglemma/scenario.hpp"

namespace fs = std::filesystem;
using avglemma::Json;

namespace {

Json load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw avglemma::ConfigError("/", "cannot read config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return Json::parse(ss.str(), nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw avglemma::ConfigError("/", std::string("malformed JSON: ") + e.what());
  }
}

int resolve_threads(const Json& config, int cli_threads) {
  if (const char* env = std::getenv("AVGLEMMA_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 0) return n;
    } catch (const std::exception&) {
    }
    throw avglemma::ConfigError("/threads", std::string("invalid AVGLEMMA_THREADS value '") + env + "'");
  }
  if (cli_threads >= 0) return cli_threads;
  if (config.is_object() && config.contains("threads") && config["threads"].is_number_integer())
    return config["threads"].get<int>();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical checks for velocity averaging lemmas"};
  app.require_subcommand(1, 1);
  std::string config_path, out_dir;
  int threads = -1;
  for (const auto& name : avglemma::subcommands()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " scenario");
    sub->add_option("--config", config_path, "scenario config (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--threads", threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  Json config;
  avglemma::RunResult result;
  double wall = 0.0;
  try {
    config = load_config(config_path);
    avglemma::validate_config(command, config);
    avglemma::set_thread_count(resolve_threads(config, threads));
    if (out_dir.empty())
      out_dir = config.contains("output") ? config["output"].get<std::string>() : "out/" + command;
    const auto start = std::chrono::steady_clock::now();
    result = avglemma::run_scenario(command, config);
    wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  } catch (const avglemma::ConfigError& e) {
    std::cerr << "config error at " << e.path() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }

  try {
    const fs::path dir(out_dir);
    for (const auto& [name, content] : result.tables) avglemma::write_atomic(dir / name, content);
    for (const auto& [name, content] : result.plots) avglemma::write_atomic(dir / name, content);
    avglemma::write_atomic(dir / "report.json", avglemma::canonical_json(result.report));
    const Json timing = {{"wall_seconds", wall}, {"threads", avglemma::thread_count()}};
    avglemma::write_atomic(dir / "timing.json", avglemma::canonical_json(timing));
    std::cout << command << ": " << (result.pass ? "PASS" : "FAIL") << " ("
              << (dir / "report.json").string() << ")\n";
    for (const auto& c : result.report["checks"])
      std::cout << "  " << (c["pass"].get<bool>() ? "ok   " : "FAIL ") << c["name"].get<std::string>()
                << ": " << c["value"].dump() << " (" << c["relation"].get<std::string>() << ", "
                << c["tolerance"].dump() << ")\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return result.pass ? 0 : 1;
}
