#include "saferl/pacbayes.hpp"

#include <cmath>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace saferl::pacbayes {

namespace {

using nn::Mat;

struct Episode {
  const env::EnvironmentSpec* e = nullptr;
  const std::vector<double>* z = nullptr;
  env::RobotState state;
  int steps = 0;
  bool done = false;
  bool success = false;
  bool safe = true;
};

// Advances a block of episodes in lockstep so policy and critic evaluations
// batch into matrix products. Row results are independent of the batching,
// so outcomes match one-at-a-time rollouts exactly.
void run_block(std::vector<Episode>& eps, const agents::AgentBundle& bundle,
               const EvalConfig& cfg) {
  const auto& b = bundle;
  const int n_z = b.cfg.n_z;
  const bool perf_latent = b.perf_actor.latent;
  const bool backup_latent = b.backup_actor.latent;

  std::vector<int> active(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    active[i] = static_cast<int>(i);
    Episode& ep = eps[i];
    ep.state = ep.e->start_pose;
    if (env::safety_margin(*ep.e, ep.state) >= 0.0) {
      ep.done = true;
      ep.safe = false;
    } else if (env::target_margin(*ep.e, ep.state) <= 0.0) {
      ep.done = true;
      ep.success = true;
    }
  }
  std::erase_if(active, [&](int i) { return eps[i].done; });

  std::vector<env::Observation> obs(eps.size());
  while (!active.empty()) {
    const int m = static_cast<int>(active.size());

    Mat actor_in(m, env::kObsDim + (perf_latent ? n_z : 0));
    for (int r = 0; r < m; ++r) {
      Episode& ep = eps[active[r]];
      obs[active[r]] = env::observe(*ep.e, ep.state);
      env::obs_to_row(obs[active[r]], actor_in.row(r));
      if (perf_latent)
        for (int j = 0; j < n_z; ++j) actor_in(r, env::kObsDim + j) = (*ep.z)[j];
    }
    const Mat trunk = nn::mlp_eval(b.perf_actor.net, actor_in);
    Mat action = nn::head_mean_eval(trunk, b.perf_actor.head);

    if (cfg.shield) {
      Mat critic_in(m, env::kObsDim + (backup_latent ? n_z : 0) + 2);
      for (int r = 0; r < m; ++r) {
        Episode& ep = eps[active[r]];
        env::obs_to_row(obs[active[r]], critic_in.row(r));
        int c = env::kObsDim;
        if (backup_latent)
          for (int j = 0; j < n_z; ++j) critic_in(r, c++) = (*ep.z)[j];
        critic_in(r, c) = action(r, 0);
        critic_in(r, c + 1) = action(r, 1);
      }
      const Mat q1 = nn::mlp_eval(b.backup_critic1.net, critic_in);
      const Mat q2 = nn::mlp_eval(b.backup_critic2.net, critic_in);

      std::vector<int> flagged;
      for (int r = 0; r < m; ++r)
        if (std::max(q1(r, 0), q2(r, 0)) > cfg.v_thr) flagged.push_back(r);

      if (!flagged.empty()) {
        Mat backup_in(static_cast<int>(flagged.size()), env::kObsDim + (backup_latent ? n_z : 0));
        for (std::size_t k = 0; k < flagged.size(); ++k) {
          Episode& ep = eps[active[flagged[k]]];
          env::obs_to_row(obs[active[flagged[k]]], backup_in.row(static_cast<int>(k)));
          if (backup_latent)
            for (int j = 0; j < n_z; ++j)
              backup_in(static_cast<int>(k), env::kObsDim + j) = (*ep.z)[j];
        }
        const Mat btrunk = nn::mlp_eval(b.backup_actor.net, backup_in);
        const Mat baction = nn::head_mean_eval(btrunk, b.backup_actor.head);
        for (std::size_t k = 0; k < flagged.size(); ++k) {
          action(flagged[k], 0) = baction(static_cast<int>(k), 0);
          action(flagged[k], 1) = baction(static_cast<int>(k), 1);
        }
      }
    }

    for (int r = 0; r < m; ++r) {
      Episode& ep = eps[active[r]];
      const env::StepResult res =
          env::step(*ep.e, ep.state, {action(r, 0), action(r, 1)});
      ep.state = res.next_state;
      ep.steps += 1;
      if (res.done == env::DoneKind::kCollided) {
        ep.done = true;
        ep.safe = false;
      } else if (res.done == env::DoneKind::kReachedTarget) {
        ep.done = true;
        ep.success = true;
      } else if (ep.steps >= cfg.max_steps) {
        ep.done = true;
      }
    }
    std::erase_if(active, [&](int i) { return eps[i].done; });
  }
}

}  // namespace

EmpiricalEstimate estimate_empirical(const std::vector<env::EnvironmentSpec>& envs,
                                     const agents::AgentBundle& bundle,
                                     const agents::LatentDistribution& p, long n_latents,
                                     RngStream& rng, const EvalConfig& cfg) {
  if (envs.empty() || n_latents < 1) throw std::invalid_argument("need envs and latents");
  EmpiricalEstimate est;
  est.n_envs = static_cast<long>(envs.size());
  est.n_latents = n_latents;
  const long cells = est.n_envs * n_latents;
  est.success.assign(cells, 0);
  est.safety.assign(cells, 0);

  std::vector<std::vector<double>> latents(n_latents);
  for (long l = 0; l < n_latents; ++l) latents[l] = agents::sample_latent(p, rng).z;

  const int n_threads = std::max(1, cfg.n_threads);
  auto worker = [&](long cell_begin, long cell_end) {
    long cursor = cell_begin;
    while (cursor < cell_end) {
      const long count = std::min<long>(cfg.chunk, cell_end - cursor);
      std::vector<Episode> block(count);
      for (long k = 0; k < count; ++k) {
        const long cell = cursor + k;
        block[k].e = &envs[cell / n_latents];
        block[k].z = &latents[cell % n_latents];
      }
      run_block(block, bundle, cfg);
      for (long k = 0; k < count; ++k) {
        est.success[cursor + k] = block[k].success ? 1 : 0;
        est.safety[cursor + k] = block[k].safe ? 1 : 0;
      }
      cursor += count;
    }
  };

  if (n_threads == 1) {
    worker(0, cells);
  } else {
    std::vector<std::thread> pool;
    const long per = (cells + n_threads - 1) / n_threads;
    for (int t = 0; t < n_threads; ++t) {
      const long lo = t * per, hi = std::min(cells, lo + per);
      if (lo < hi) pool.emplace_back(worker, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  long s = 0, f = 0;
  for (long i = 0; i < cells; ++i) {
    s += est.success[i];
    f += est.safety[i];
  }
  est.success_rate = static_cast<double>(s) / static_cast<double>(cells);
  est.safety_rate = static_cast<double>(f) / static_cast<double>(cells);
  return est;
}

double kl_bernoulli(double p, double q) {
  double kl = 0.0;
  if (p > 0.0) kl += p * std::log(p / q);
  if (p < 1.0) kl += (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
  return kl;
}

double klinv_lower(double p, double c) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("p must lie in [0, 1]");
  if (c < 0.0) throw std::invalid_argument("divergence budget must be >= 0");
  if (c == 0.0) return p;
  if (p <= 0.0) return 0.0;
  double lo = 0.0, hi = p;  // KL(p || q) decreases in q on (0, p]
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= 0.0 || kl_bernoulli(p, mid) > c)
      lo = mid;
    else
      hi = mid;
  }
  return hi;
}

double regularizer(double kl, long n_envs, double delta_pac) {
  if (n_envs < 1 || delta_pac <= 0.0 || delta_pac >= 1.0)
    throw std::invalid_argument("regularizer needs N >= 1 and delta in (0, 1)");
  return (kl + std::log(2.0 * std::sqrt(static_cast<double>(n_envs)) / delta_pac)) /
         (2.0 * static_cast<double>(n_envs));
}

BoundReport compute_bound(const std::string& metric, double r_hat, double kl, long n_envs,
                          long n_latents, double delta) {
  if (n_envs < 1 || n_latents < 1) throw std::invalid_argument("need N >= 1 and L >= 1");
  BoundReport rep;
  rep.metric = metric;
  rep.n_envs = n_envs;
  rep.n_latents = n_latents;
  rep.delta = delta;
  rep.kl_posterior_prior = kl;
  rep.r_hat = r_hat;

  const double delta_sample = delta / 2.0;
  const double delta_pac = delta / 2.0;
  // The L latent draws are the i.i.d. units; each N-environment average lies
  // in [0, 1].
  rep.r_bar = klinv_lower(r_hat, std::log(2.0 / delta_sample) / static_cast<double>(n_latents));
  const double c_pac =
      (kl + std::log(2.0 * std::sqrt(static_cast<double>(n_envs)) / delta_pac)) /
      static_cast<double>(n_envs);
  rep.bound_klinv = klinv_lower(rep.r_bar, c_pac);
  rep.bound_sqrt = std::max(0.0, rep.r_bar - std::sqrt(regularizer(kl, n_envs, delta_pac)));
  if (rep.bound_klinv < rep.bound_sqrt - 1e-12)
    throw std::logic_error("KL-inverse bound fell below the sqrt bound");
  return rep;
}

std::string bound_reports_to_json(const std::vector<BoundReport>& reports) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reports) {
    j.push_back({{"metric", r.metric},
                 {"n_envs", r.n_envs},
                 {"n_latents", r.n_latents},
                 {"delta", r.delta},
                 {"kl_posterior_prior", r.kl_posterior_prior},
                 {"r_hat", r.r_hat},
                 {"r_bar", r.r_bar},
                 {"bound_sqrt", r.bound_sqrt},
                 {"bound_klinv", r.bound_klinv}});
  }
  return j.dump(2);
}

}  // namespace saferl::pacbayes
