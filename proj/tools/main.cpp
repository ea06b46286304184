#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "saferl/manifest.hpp"
#include "saferl/pipeline.hpp"
#include "saferl/run_config.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  long seed = -1;
  bool seed_set = false;
};

saferl::io::RunConfig resolve_config(const CommonArgs& args) {
  std::string text = args.config_path.empty()
                         ? saferl::io::config_to_json(saferl::io::RunConfig{})
                         : saferl::io::read_text_file(args.config_path);
  std::vector<std::string> overrides = args.overrides;
  if (args.seed_set) overrides.push_back("seed=" + std::to_string(args.seed));
  if (!args.out_dir.empty()) overrides.push_back("out_dir=" + args.out_dir);
  text = saferl::io::apply_overrides(text, overrides);
  return saferl::io::config_from_json(text);
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file (defaults are built in)");
  cmd->add_option("--out", args.out_dir, "run directory for inputs and artifacts");
  cmd->add_option("--set", args.overrides,
                  "override a config key by dotted path, e.g. sim.num_steps=50000");
  auto* seed_opt = cmd->add_option("--seed", args.seed, "master seed");
  cmd->callback([&args, seed_opt]() { args.seed_set = seed_opt->count() > 0; });
}

void report(const std::vector<std::string>& outputs) {
  for (const auto& path : outputs) std::printf("wrote %s\n", path.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Dual-policy safe navigation trainer: shielded joint training, latent-distribution "
      "fine-tuning, and generalization bounds on held-out environments"};
  app.require_subcommand(1);

  CommonArgs args;
  int env_id = 0;
  std::string variant;

  auto* gen = app.add_subcommand("gen-envs", "generate the three environment sets");
  add_common(gen, args);
  auto* sim = app.add_subcommand("train-sim", "joint training of both agents with annealing");
  add_common(sim, args);
  auto* lab = app.add_subcommand("train-lab", "shielded fine-tuning of the latent distribution");
  add_common(lab, args);
  auto* bound = app.add_subcommand("bound", "empirical estimates and generalization bounds");
  add_common(bound, args);
  auto* verify = app.add_subcommand("verify", "expected success/safety on held-out environments");
  add_common(verify, args);
  auto* oracle = app.add_subcommand("oracle", "tabular value solve and critic agreement stats");
  add_common(oracle, args);
  oracle->add_option("--env-id", env_id, "environment index within the generated set");
  auto* baseline = app.add_subcommand("baseline", "run a comparison variant end to end");
  add_common(baseline, args);
  baseline->add_option("--variant", variant, "base | rp | risk_shield | no_latent_shield")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = resolve_config(args);
    if (gen->parsed()) report(saferl::pipeline::cmd_gen_envs(cfg));
    if (sim->parsed()) report(saferl::pipeline::cmd_train_sim(cfg));
    if (lab->parsed()) report(saferl::pipeline::cmd_train_lab(cfg));
    if (bound->parsed()) report(saferl::pipeline::cmd_bound(cfg));
    if (verify->parsed()) report(saferl::pipeline::cmd_verify(cfg));
    if (oracle->parsed()) report(saferl::pipeline::cmd_oracle(cfg, env_id));
    if (baseline->parsed()) report(saferl::pipeline::cmd_baseline(cfg, variant));
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  return 0;
}
