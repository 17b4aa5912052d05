// Command-line harness for the latent-Gaussian-model toolkit.
//
// Subcommands: fit, gradcheck, sample, bench, simulate. Each reads a JSON
// config (see configs/) and writes its reports under --out. See README.md
// for the exit-code contract.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "lgm/lgm.hpp"

namespace {

struct SharedOptions {
  std::string config_path;
  std::string out;
  std::string strategy;
  std::string method = "marginal";
  std::optional<std::uint64_t> seed;
};

void add_shared(CLI::App* sub, SharedOptions& opt, bool config_required) {
  auto* c = sub->add_option("--config", opt.config_path,
                            "path to a JSON run configuration");
  if (config_required) c->required();
  sub->add_option("--out", opt.out, "output directory (overrides config)");
  sub->add_option("--strategy", opt.strategy,
                  "factorization strategy (overrides config)")
      ->check(CLI::IsMember({"b1", "b2", "b3"}));
  sub->add_option("--seed", opt.seed, "RNG seed (overrides config)");
}

lgm::cli::RunConfig load(const SharedOptions& opt) {
  lgm::cli::RunConfig cfg;
  if (!opt.config_path.empty()) {
    cfg = lgm::cli::load_config(opt.config_path);
  } else {
    cfg.model = "pk";  // simulate may run without a config
  }
  if (!opt.out.empty()) cfg.out = opt.out;
  if (!opt.strategy.empty()) cfg.strategy = opt.strategy;
  if (opt.seed) {
    cfg.seed = *opt.seed;
    if (cfg.sampler) cfg.sampler->seed = *opt.seed;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Latent Gaussian models: Laplace approximation of the marginal "
      "likelihood, adjoint hyperparameter gradients, posterior sampling"};
  app.require_subcommand(1);

  SharedOptions opt;
  CLI::App* fit = app.add_subcommand(
      "fit", "maximize the latent conditional and report the log marginal");
  add_shared(fit, opt, true);
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck",
      "compare adjoint hyperparameter gradients with finite differences");
  add_shared(gradcheck, opt, true);
  CLI::App* sample =
      app.add_subcommand("sample", "run HMC over the hyperparameters");
  add_shared(sample, opt, true);
  sample
      ->add_option("--method", opt.method,
                   "marginal (HMC on the approximate marginal) or full "
                   "(HMC on hyperparameters and latents jointly)")
      ->check(CLI::IsMember({"marginal", "full"}));
  CLI::App* bench = app.add_subcommand(
      "bench", "time fits and gradients over a grid of problem sizes");
  add_shared(bench, opt, true);
  CLI::App* simulate = app.add_subcommand(
      "simulate", "draw a synthetic dosing-study dataset (pk model)");
  add_shared(simulate, opt, false);

  CLI11_PARSE(app, argc, argv);

  return lgm::cli::run_guarded(
      [&]() -> int {
        lgm::cli::RunConfig cfg = load(opt);
        std::string command = app.get_subcommands().front()->get_name();
        return lgm::cli::run_command(command, cfg, opt.method, std::cout,
                                     std::cerr);
      },
      std::cerr);
}
