#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>

#include "doctest.h"
#include "saferl/checkpoint.hpp"
#include "saferl/manifest.hpp"
#include "saferl/pipeline.hpp"
#include "saferl/run_config.hpp"

using namespace saferl;
namespace fs = std::filesystem;

namespace {

io::RunConfig tiny_config(const std::string& out_dir, std::uint64_t seed = 5) {
  io::RunConfig cfg;
  cfg.seed = seed;
  cfg.out_dir = out_dir;
  cfg.n_envs_sim = 4;
  cfg.n_envs_lab = 4;
  cfg.n_envs_heldout = 4;
  cfg.agent.hidden = {16, 16};
  cfg.agent.n_z = 4;
  cfg.sim.num_steps = 2000;
  cfg.sim.optimize_freq = 1000;
  cfg.sim.updates_per_optimize = 10;
  cfg.sim.batch_size = 32;
  cfg.sim.buffer_capacity = 4000;
  cfg.sim.anneal.rho_period = 400;
  cfg.sim.anneal.eps_period = 400;
  cfg.lab.num_steps = 1000;
  cfg.lab.optimize_freq = 500;
  cfg.lab.updates_per_optimize = 10;
  cfg.lab.batch_size = 32;
  cfg.bound.n_latents = 20;
  cfg.bound.verify_latents = 5;
  cfg.oracle.nx = cfg.oracle.ny = 21;
  cfg.oracle.ntheta = 9;
  return cfg;
}

std::string fresh_dir(const std::string& name) {
  const std::string dir = (fs::temp_directory_path() / name).string();
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("config: canonical JSON round-trip and validation") {
  io::RunConfig cfg;
  const std::string a = io::config_to_json(cfg);
  const auto parsed = io::config_from_json(a);
  CHECK(io::config_to_json(parsed) == a);
  CHECK(io::config_hash(parsed) == io::config_hash(cfg));
}

TEST_CASE("config: unknown keys are rejected at every level") {
  CHECK_THROWS_WITH_AS(io::config_from_json(R"({"simulation": {}})"),
                       doctest::Contains("unknown config key"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(io::config_from_json(R"({"sim": {"numsteps": 5}})"),
                       doctest::Contains("sim.numsteps"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(io::config_from_json(R"({"agent": {"n_Z": 3}})"),
                       doctest::Contains("agent.n_Z"), std::invalid_argument);
}

TEST_CASE("config: dotted-path overrides with JSON and string values") {
  io::RunConfig cfg;
  std::string text = io::config_to_json(cfg);
  text = io::apply_overrides(text, {"sim.num_steps=777", "agent.hidden=[8,4]",
                                    "out_dir=somewhere/else", "sim.train_backup=false"});
  const auto parsed = io::config_from_json(text);
  CHECK(parsed.sim.num_steps == 777);
  CHECK(parsed.agent.hidden == std::vector<int>{8, 4});
  CHECK(parsed.out_dir == "somewhere/else");
  CHECK_FALSE(parsed.sim.train_backup);
  CHECK_THROWS(io::apply_overrides(text, {"missing-equals"}));
}

TEST_CASE("config: invalid values fail validation") {
  io::RunConfig cfg;
  cfg.bound.delta = 1.5;
  CHECK_THROWS(cfg.validate());
  io::RunConfig cfg2;
  cfg2.sim.anneal.rho_factor = 2.0;
  CHECK_THROWS(cfg2.validate());
}

TEST_CASE("checkpoint: save/load round-trip is bit-identical") {
  RngStream rng(3);
  agents::AgentConfig acfg;
  acfg.hidden = {8, 8};
  acfg.n_z = 3;
  io::Checkpoint cp;
  cp.config_hash = "deadbeef";
  cp.bundle = agents::make_bundle(acfg, rng);
  cp.bundle.log_alpha_perf = -1.7;
  cp.bundle.log_alpha_backup = 0.3;
  cp.prior = agents::LatentDistribution::isotropic(3, 2.0);
  cp.posterior = cp.prior;
  cp.posterior.mu = {0.1, -0.2, 0.3};
  cp.steps_completed = 1234;
  cp.gamma_b = 0.93;
  cp.rng_state = rng.save_state();

  const std::string dir = fresh_dir("saferl_cp_test");
  pipeline::ensure_dir(dir);
  const std::string path = pipeline::join_path(dir, "cp.json");
  io::save_checkpoint(cp, path);
  const auto loaded = io::load_checkpoint(path);
  CHECK(io::checkpoint_to_json(loaded) == io::checkpoint_to_json(cp));
  CHECK(nn::flatten_params(loaded.bundle.perf_actor.net) ==
        nn::flatten_params(cp.bundle.perf_actor.net));
  CHECK(nn::flatten_params(loaded.bundle.backup_critic2.net) ==
        nn::flatten_params(cp.bundle.backup_critic2.net));
  CHECK(loaded.posterior.mu == cp.posterior.mu);
  CHECK(loaded.rng_state == cp.rng_state);
}

TEST_CASE("commands: repeated runs produce byte-identical artifacts") {
  const std::string dir = fresh_dir("saferl_det_test");
  const auto cfg = tiny_config(dir);

  pipeline::cmd_gen_envs(cfg);
  pipeline::cmd_train_sim(cfg);
  pipeline::cmd_train_lab(cfg);
  pipeline::cmd_bound(cfg);
  const auto first_cp = io::file_digest(pipeline::join_path(dir, pipeline::kCheckpointSim));
  const auto first_csv = io::file_digest(pipeline::join_path(dir, pipeline::kMetricsSim));
  const auto first_bound = io::file_digest(pipeline::join_path(dir, pipeline::kBoundReport));
  const auto first_envs = io::file_digest(pipeline::join_path(dir, pipeline::kEnvsSim));

  pipeline::cmd_gen_envs(cfg);
  pipeline::cmd_train_sim(cfg);
  pipeline::cmd_train_lab(cfg);
  pipeline::cmd_bound(cfg);
  CHECK(io::file_digest(pipeline::join_path(dir, pipeline::kEnvsSim)) == first_envs);
  CHECK(io::file_digest(pipeline::join_path(dir, pipeline::kCheckpointSim)) == first_cp);
  CHECK(io::file_digest(pipeline::join_path(dir, pipeline::kMetricsSim)) == first_csv);
  CHECK(io::file_digest(pipeline::join_path(dir, pipeline::kBoundReport)) == first_bound);

  // Manifest records the config hash and digests of inputs and outputs.
  const auto manifest = io::read_text_file(pipeline::join_path(dir, "manifest_train_sim.json"));
  CHECK(manifest.find(io::config_hash(cfg)) != std::string::npos);
  CHECK(manifest.find(first_cp) != std::string::npos);
}

TEST_CASE("commands: posterior equal to prior reports zero KL") {
  const std::string dir = fresh_dir("saferl_kl0_test");
  auto cfg = tiny_config(dir, 7);
  cfg.lab.num_steps = 0;  // posterior never moves
  pipeline::cmd_gen_envs(cfg);
  pipeline::cmd_train_sim(cfg);
  pipeline::cmd_train_lab(cfg);
  pipeline::cmd_bound(cfg);
  const auto report = io::read_text_file(pipeline::join_path(dir, pipeline::kBoundReport));
  CHECK(report.find("\"kl_posterior_prior\": 0.0") != std::string::npos);
}

TEST_CASE("commands: verify output is stable across a checkpoint round-trip") {
  const std::string dir = fresh_dir("saferl_verify_test");
  const auto cfg = tiny_config(dir, 11);
  pipeline::cmd_gen_envs(cfg);
  pipeline::cmd_train_sim(cfg);
  pipeline::cmd_train_lab(cfg);
  pipeline::cmd_verify(cfg);
  const auto first = io::read_text_file(pipeline::join_path(dir, pipeline::kVerifyReport));

  const std::string cp_path = pipeline::join_path(dir, pipeline::kCheckpointLab);
  io::save_checkpoint(io::load_checkpoint(cp_path), cp_path);
  pipeline::cmd_verify(cfg);
  CHECK(io::read_text_file(pipeline::join_path(dir, pipeline::kVerifyReport)) == first);
}

TEST_CASE("baselines: reward penalty at lambda zero collapses onto base") {
  const std::string dir_a = fresh_dir("saferl_base_test");
  const std::string dir_b = fresh_dir("saferl_rp0_test");

  auto base_cfg = tiny_config(dir_a, 13);
  pipeline::apply_baseline_variant(base_cfg, "base");
  auto rp_cfg = tiny_config(dir_b, 13);
  pipeline::apply_baseline_variant(rp_cfg, "rp");
  rp_cfg.sim.lambda_penalty = 0.0;

  for (const auto* cfg : {&base_cfg, &rp_cfg}) {
    pipeline::cmd_gen_envs(*cfg);
    pipeline::cmd_train_sim(*cfg);
  }
  CHECK(io::file_digest(pipeline::join_path(dir_a, pipeline::kMetricsSim)) ==
        io::file_digest(pipeline::join_path(dir_b, pipeline::kMetricsSim)));

  // The stored checkpoints differ only in the config hash, which covers the
  // lambda field itself; parameters must match exactly.
  const auto cp_a = io::load_checkpoint(pipeline::join_path(dir_a, pipeline::kCheckpointSim));
  const auto cp_b = io::load_checkpoint(pipeline::join_path(dir_b, pipeline::kCheckpointSim));
  CHECK(nn::flatten_params(cp_a.bundle.perf_actor.net) ==
        nn::flatten_params(cp_b.bundle.perf_actor.net));
  CHECK(nn::flatten_params(cp_a.bundle.perf_critic1.net) ==
        nn::flatten_params(cp_b.bundle.perf_critic1.net));
}

TEST_CASE("baselines: unknown variant is rejected") {
  auto cfg = tiny_config(fresh_dir("saferl_badvariant"));
  CHECK_THROWS(pipeline::apply_baseline_variant(cfg, "nonsense"));
}

TEST_CASE("oracle command: grid export plus agreement stats, bad id rejected") {
  const std::string dir = fresh_dir("saferl_oracle_test");
  auto cfg = tiny_config(dir, 17);
  pipeline::cmd_gen_envs(cfg);
  pipeline::cmd_train_sim(cfg);
  const auto outputs = pipeline::cmd_oracle(cfg, 1);
  REQUIRE(outputs.size() == 2);
  CHECK(fs::exists(outputs[0]));
  const auto stats = io::read_text_file(outputs[1]);
  CHECK(stats.find("sign_agreement") != std::string::npos);
  CHECK_THROWS(pipeline::cmd_oracle(cfg, 99));
}

TEST_CASE("metrics CSV: fixed column order and numeric stability") {
  train::StageMetrics m;
  train::EpisodeRow row;
  row.step = 10;
  row.episode = 0;
  row.success = true;
  row.rho = 0.5;
  row.sum_reward = 0.1 + 0.2;  // 0.30000000000000004 must survive verbatim
  m.episodes.push_back(row);
  const std::string csv = pipeline::metrics_to_csv(m);
  CHECK(csv.rfind("step,episode,success,violation,rho,epsilon,gamma_b,sum_reward,", 0) == 0);
  CHECK(csv.find("0.30000000000000004") != std::string::npos);
}
