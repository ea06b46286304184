#include "saferl/checkpoint.hpp"

#include <stdexcept>

#include "json.hpp"
#include "saferl/manifest.hpp"

namespace saferl::io {

namespace {

using nlohmann::json;

json net_to_json(const nn::MlpParams& p) {
  return {{"layer_sizes", p.layer_sizes},
          {"activation", p.activation == nn::Activation::kRelu ? "relu" : "tanh"},
          {"params", nn::flatten_params(p)}};
}

void net_from_json(const json& j, nn::MlpParams& p) {
  const std::vector<int> sizes = j.at("layer_sizes");
  if (sizes != p.layer_sizes)
    throw std::runtime_error("checkpoint layer sizes do not match the configured architecture");
  nn::unflatten_params(p, j.at("params").get<std::vector<double>>());
}

json latent_to_json(const agents::LatentDistribution& d) {
  return {{"mu", d.mu}, {"sigma", d.sigma}};
}

agents::LatentDistribution latent_from_json(const json& j) {
  agents::LatentDistribution d;
  d.mu = j.at("mu").get<std::vector<double>>();
  d.sigma = j.at("sigma").get<std::vector<double>>();
  return d;
}

json agent_cfg_to_json(const agents::AgentConfig& c) {
  return {{"hidden", c.hidden},
          {"activation", c.activation == nn::Activation::kRelu ? "relu" : "tanh"},
          {"n_z", c.n_z},
          {"prior_sigma", c.prior_sigma},
          {"condition_perf_on_latent", c.condition_perf_on_latent},
          {"condition_backup_on_latent", c.condition_backup_on_latent},
          {"lr", c.lr},
          {"lr_alpha", c.lr_alpha},
          {"alpha_init", c.alpha_init},
          {"target_entropy_perf", c.target_entropy_perf},
          {"target_entropy_backup", c.target_entropy_backup},
          {"tau", c.tau},
          {"nu", c.nu},
          {"n_marginal_samples", c.n_marginal_samples},
          {"grad_clip", c.grad_clip},
          {"gamma_perf", c.gamma_perf},
          {"perf_v_min", c.perf_v_min},
          {"perf_v_max", c.perf_v_max},
          {"backup_v_min", c.backup_v_min},
          {"backup_v_max", c.backup_v_max},
          {"w_max", c.w_max}};
}

agents::AgentConfig agent_cfg_from_json(const json& j) {
  agents::AgentConfig c;
  c.hidden = j.at("hidden").get<std::vector<int>>();
  c.activation =
      j.at("activation").get<std::string>() == "relu" ? nn::Activation::kRelu
                                                      : nn::Activation::kTanh;
  c.n_z = j.at("n_z");
  c.prior_sigma = j.at("prior_sigma");
  c.condition_perf_on_latent = j.at("condition_perf_on_latent");
  c.condition_backup_on_latent = j.at("condition_backup_on_latent");
  c.lr = j.at("lr");
  c.lr_alpha = j.at("lr_alpha");
  c.alpha_init = j.at("alpha_init");
  c.target_entropy_perf = j.at("target_entropy_perf");
  c.target_entropy_backup = j.at("target_entropy_backup");
  c.tau = j.at("tau");
  c.nu = j.at("nu");
  c.n_marginal_samples = j.at("n_marginal_samples");
  c.grad_clip = j.at("grad_clip");
  c.gamma_perf = j.at("gamma_perf");
  c.perf_v_min = j.at("perf_v_min");
  c.perf_v_max = j.at("perf_v_max");
  c.backup_v_min = j.at("backup_v_min");
  c.backup_v_max = j.at("backup_v_max");
  c.w_max = j.at("w_max");
  return c;
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& cp) {
  json j;
  j["version"] = cp.version;
  j["config_hash"] = cp.config_hash;
  j["agent_config"] = agent_cfg_to_json(cp.bundle.cfg);
  json nets;
  nets["perf_actor"] = net_to_json(cp.bundle.perf_actor.net);
  nets["perf_critic1"] = net_to_json(cp.bundle.perf_critic1.net);
  nets["perf_critic2"] = net_to_json(cp.bundle.perf_critic2.net);
  nets["perf_target1"] = net_to_json(cp.bundle.perf_target1);
  nets["perf_target2"] = net_to_json(cp.bundle.perf_target2);
  nets["backup_actor"] = net_to_json(cp.bundle.backup_actor.net);
  nets["backup_critic1"] = net_to_json(cp.bundle.backup_critic1.net);
  nets["backup_critic2"] = net_to_json(cp.bundle.backup_critic2.net);
  nets["backup_target1"] = net_to_json(cp.bundle.backup_target1);
  nets["backup_target2"] = net_to_json(cp.bundle.backup_target2);
  nets["discriminator"] = net_to_json(cp.bundle.discriminator);
  j["nets"] = std::move(nets);
  j["log_alpha_perf"] = cp.bundle.log_alpha_perf;
  j["log_alpha_backup"] = cp.bundle.log_alpha_backup;
  j["prior"] = latent_to_json(cp.prior);
  j["posterior"] = latent_to_json(cp.posterior);
  j["steps_completed"] = cp.steps_completed;
  j["gamma_b"] = cp.gamma_b;
  j["rng_state"] = cp.rng_state;
  return j.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
  const json j = json::parse(text);
  Checkpoint cp;
  cp.version = j.at("version");
  if (cp.version != 1) throw std::runtime_error("unsupported checkpoint version");
  cp.config_hash = j.at("config_hash");

  const auto cfg = agent_cfg_from_json(j.at("agent_config"));
  RngStream scratch(0);  // shapes only; parameters are overwritten below
  cp.bundle = agents::make_bundle(cfg, scratch);

  const json& nets = j.at("nets");
  net_from_json(nets.at("perf_actor"), cp.bundle.perf_actor.net);
  net_from_json(nets.at("perf_critic1"), cp.bundle.perf_critic1.net);
  net_from_json(nets.at("perf_critic2"), cp.bundle.perf_critic2.net);
  net_from_json(nets.at("perf_target1"), cp.bundle.perf_target1);
  net_from_json(nets.at("perf_target2"), cp.bundle.perf_target2);
  net_from_json(nets.at("backup_actor"), cp.bundle.backup_actor.net);
  net_from_json(nets.at("backup_critic1"), cp.bundle.backup_critic1.net);
  net_from_json(nets.at("backup_critic2"), cp.bundle.backup_critic2.net);
  net_from_json(nets.at("backup_target1"), cp.bundle.backup_target1);
  net_from_json(nets.at("backup_target2"), cp.bundle.backup_target2);
  net_from_json(nets.at("discriminator"), cp.bundle.discriminator);
  cp.bundle.log_alpha_perf = j.at("log_alpha_perf");
  cp.bundle.log_alpha_backup = j.at("log_alpha_backup");
  cp.prior = latent_from_json(j.at("prior"));
  cp.posterior = latent_from_json(j.at("posterior"));
  cp.steps_completed = j.at("steps_completed");
  cp.gamma_b = j.at("gamma_b");
  cp.rng_state = j.at("rng_state");
  return cp;
}

void save_checkpoint(const Checkpoint& cp, const std::string& path) {
  write_text_file(path, checkpoint_to_json(cp) + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  return checkpoint_from_json(read_text_file(path));
}

}  // namespace saferl::io
