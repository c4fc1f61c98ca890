#include <cstdint>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "gmc/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "gmctool: log-correlated field synthesis, Gaussian multiplicative chaos, "
      "multifractal analysis, multifractal random walk, and Liouville Brownian "
      "motion experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool report = false;

  const char* kinds[] = {"field-check",  "gmc-mass", "moment-scaling",
                         "tau-estimate", "spectrum", "thick-points",
                         "mrw",          "lbm-exit", "lbm-refine"};
  std::string chosen;
  for (const char* kind : kinds) {
    CLI::App* sub =
        app.add_subcommand(kind, std::string("run the ") + kind + " experiment");
    sub->add_option("--config", config_path, "key = value config file");
    sub->add_option("--seed", seed, "master seed override");
    sub->add_option("--out", out_dir, "output directory (default: out)");
    sub->add_option("--threads", threads, "worker threads (default: 1)")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--report", report, "print the summary table after the run");
    sub->callback([&chosen, kind] { chosen = kind; });
  }

  CLI::App* rep = app.add_subcommand("replay", "re-run the config echoed in a manifest");
  std::string manifest;
  rep->add_option("manifest", manifest, "path to manifest.json")->required();
  rep->add_option("--out", out_dir, "output directory (default: out)");
  rep->add_option("--threads", threads, "worker threads (default: 1)")
      ->check(CLI::PositiveNumber);
  rep->add_flag("--report", report, "print the summary table after the run");

  CLI::App* rpt = app.add_subcommand("report", "print the summary table of a results directory");
  std::string dir;
  rpt->add_option("dir", dir, "results directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    gmc::run::RunOptions opt;
    opt.out_dir = out_dir;
    opt.threads = threads;
    opt.print_report = report;

    if (rep->parsed()) return gmc::run::replay(manifest, opt);
    if (rpt->parsed()) return gmc::run::report_dir(dir);

    gmc::run::ConfigFile file;
    if (!config_path.empty())
      file = gmc::run::parse_config_file(config_path);
    else
      file.source_path = "<defaults>";
    const auto it = file.values.find("kind");
    if (it == file.values.end())
      file.values["kind"] = chosen;
    else if (it->second != chosen)
      throw std::invalid_argument("config kind '" + it->second +
                                  "' does not match subcommand '" + chosen + "'");
    opt.seed_override = seed;
    return gmc::run::run(gmc::run::resolve_config(file), opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
