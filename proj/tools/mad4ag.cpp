#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mad4ag/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"mad4ag: activity plans from sparse mobile data and a travel survey"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::int64_t> seed;
  unsigned workers = mad4ag::default_workers();
  std::string out_dir;
  std::vector<std::string> sets;

  for (std::string name : {"all", "gen-world", "detect-stops", "cluster", "infer-primary", "debias", "match",
                           "synthesize", "baseline", "evaluate"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "key = value configuration file");
    sub->add_option("--seed", seed, "master seed (overrides config)");
    sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", out_dir, "output directory (overrides config)");
    sub->add_option("--set", sets, "key=value override, repeatable");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const std::string stage = app.get_subcommands().front()->get_name();

  try {
    mad4ag::PipelineConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    cfg.apply_environment();
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw mad4ag::config_error("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1), "--set");
    }
    if (seed) cfg.set("seed", std::to_string(*seed), "--seed");
    if (!out_dir.empty()) cfg.set("out_dir", out_dir, "--out");

    mad4ag::Pipeline pipeline(std::move(cfg), workers);
    pipeline.run(stage);
  } catch (const mad4ag::Error& e) {
    std::cerr << "mad4ag " << stage << ": " << e.what() << '\n';
    return mad4ag::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "mad4ag " << stage << ": internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
