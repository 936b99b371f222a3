// umvf: simulate a scenario and run the joint state/fault filter on it.
//
//   umvf run --config flight.cfg [--seed N] [--out DIR] [--mode sqrt|covariance|both]
//            [--path auto|full-rank|extended]
//   umvf montecarlo --config flight.cfg --runs M [--seed N] [--out DIR]
//   umvf validate --config flight.cfg
//
// Exit codes: 0 success, 1 numerical failure, 2 configuration/validation
// failure. UMVF_SEED overrides the seed from the config file; --seed
// overrides both.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "umvf/scenario.hpp"

namespace {

constexpr int kExitNumerical = 1;
constexpr int kExitValidation = 2;

int report(const umvf::Error& e, bool validation_phase) {
  std::cerr << "error: " << e.what() << '\n';
  return (validation_phase || e.is_validation_failure()) ? kExitValidation : kExitNumerical;
}

void apply_seed(umvf::io::ScenarioConfig& cfg, const std::optional<std::uint64_t>& flag) {
  if (flag) {
    cfg.run.seed = *flag;
    return;
  }
  if (const char* env = std::getenv("UMVF_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw umvf::Error(umvf::ErrorKind::Config, "UMVF_SEED is not an unsigned integer");
    cfg.run.seed = v;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unbiased minimum-variance state and fault estimation"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string mode;
  std::string path;
  long runs = 0;
  unsigned threads = 0;

  auto* run = app.add_subcommand("run", "simulate and filter one scenario");
  run->add_option("--config", config_path, "scenario file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "noise seed");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--mode", mode, "covariance|sqrt|both")->check(CLI::IsMember({"covariance", "sqrt", "both"}));
  run->add_option("--path", path, "auto|full-rank|extended")->check(CLI::IsMember({"auto", "full-rank", "extended"}));

  auto* mc = app.add_subcommand("montecarlo", "repeat the scenario over seeds and report error bias");
  mc->add_option("--config", config_path, "scenario file")->required()->check(CLI::ExistingFile);
  mc->add_option("--runs", runs, "number of runs")->required()->check(CLI::Range(2L, 10000000L));
  mc->add_option("--seed", seed, "base seed; run i uses seed + i");
  mc->add_option("--out", out_dir, "output directory");
  mc->add_option("--threads", threads, "worker threads (0 = hardware concurrency)");

  auto* val = app.add_subcommand("validate", "check the model assumptions and print the report");
  val->add_option("--config", config_path, "scenario file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }

  umvf::io::ScenarioConfig cfg;
  try {
    cfg = umvf::io::load_config(config_path);
    apply_seed(cfg, seed);
    if (!out_dir.empty()) cfg.output.directory = out_dir;
    if (mode == "covariance") cfg.run.mode = umvf::io::RunMode::covariance;
    if (mode == "sqrt") cfg.run.mode = umvf::io::RunMode::sqrt;
    if (mode == "both") cfg.run.mode = umvf::io::RunMode::both;
    if (path == "auto") cfg.run.path = umvf::FilterPath::automatic;
    if (path == "full-rank") cfg.run.path = umvf::FilterPath::full_rank;
    if (path == "extended") cfg.run.path = umvf::FilterPath::extended;

    const auto report_text = umvf::validate_scenario(cfg.model(), cfg.init);
    if (val->parsed()) {
      std::cout << report_text.to_text();
      return 0;
    }
  } catch (const umvf::Error& e) {
    return report(e, true);
  }

  try {
    if (run->parsed()) {
      const auto art = umvf::execute(cfg);
      std::cout << "path: " << umvf::to_string(art.records.front().path) << ", seed: " << umvf::resolve_seed(cfg)
                << ", steps: " << art.records.size() << '\n';
      std::cout << umvf::metrics_text(art.metrics);
      if (art.max_path_deviation) {
        std::cout << "max_path_deviation = " << umvf::io::format_double(*art.max_path_deviation) << '\n';
      }
      for (const auto& f : art.files) std::cout << "wrote " << f.string() << '\n';
      return 0;
    }

    const auto res = umvf::run_montecarlo(cfg, runs, umvf::resolve_seed(cfg), threads);
    std::filesystem::create_directories(cfg.output.directory);
    const auto csv = cfg.output.directory / "montecarlo.csv";
    std::ofstream out(csv);
    if (!out) throw umvf::Error(umvf::ErrorKind::Config, "cannot write " + csv.string());
    umvf::write_montecarlo_csv(out, res);

    std::cout << "runs: " << res.runs << ", base seed: " << umvf::resolve_seed(cfg) << '\n';
    std::cout << "channel  window   worst |mean|/(sd/sqrt(M))  within 4 sigma\n";
    bool ok = true;
    for (const auto& c : res.checks) {
      std::cout << "f" << c.channel + 1 << "       " << c.window.begin << ":" << c.window.end << "    "
                << umvf::io::format_double(c.worst_z) << "    " << (c.passed ? "yes" : "NO") << '\n';
      ok = ok && c.passed;
    }
    std::cout << "wrote " << csv.string() << '\n';
    return ok ? 0 : kExitNumerical;
  } catch (const umvf::Error& e) {
    return report(e, false);
  }
}
