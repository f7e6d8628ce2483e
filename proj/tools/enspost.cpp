#include "enspost/run.hpp"

#include <CLI11.hpp>

int main(int argc, char** argv) {
  using namespace enspost::cli;
  CLI::App app{"Ensemble postprocessing experiments"};
  app.require_subcommand(1);
  CommandLine cl;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out;

  const std::vector<std::pair<const char*, const char*>> commands{
      {"synth", "Generate a synthetic ensemble dataset"},
      {"train", "Train a pool of postprocessing models"},
      {"evaluate", "Score the raw ensemble and trained pools on the test split"},
      {"importance", "Permutation importance of ensemble predictors"}};
  std::vector<CLI::App*> subs;
  std::vector<CLI::Option*> seed_opts, config_opts, out_opts;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    config_opts.push_back(sub->add_option("--config", config_path, "Run configuration (JSON)"));
    sub->add_option("--set", cl.sets, "Override a config entry, e.g. model.latent=32");
    sub->add_option("--workers", cl.workers, "Worker threads (default: $ENSPOST_WORKERS or 1)")
        ->check(CLI::NonNegativeNumber);
    out_opts.push_back(sub->add_option("--out", out, "Output directory"));
    seed_opts.push_back(sub->add_option("--seed", seed, "Top-level seed"));
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    if (config_opts[i]->count()) cl.config_path = config_path;
    if (seed_opts[i]->count()) cl.seed = seed;
    if (out_opts[i]->count()) cl.out = out;
    try {
      run_command(commands[i].first, resolve(cl));
      return 0;
    } catch (...) {
      return exit_code_for(std::current_exception(), std::cerr);
    }
  }
  return 2;
}
