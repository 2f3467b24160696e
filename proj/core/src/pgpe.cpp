#include "opc/pgpe.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "opc/error.hpp"
#include "opc/rng.hpp"
#include "opc/thread_pool.hpp"

namespace opc {

ReturnEvaluator make_decoder_evaluator(const AutoencoderModel& model,
                                       const PolicyArch& arch, const std::string& env_name,
                                       const std::string& task) {
  auto model_copy = std::make_shared<AutoencoderModel>(model);
  return [model_copy, arch, env_name, task](std::span<const double> z,
                                            std::uint64_t episode_seed) {
    std::vector<double> theta = decode(*model_copy, z);
    auto env = make_environment(env_name);
    StateNormalizer norm = StateNormalizer::from_spec(env->spec());
    PolicyActionSource src(arch, theta, norm, true, 0, "decoded latent policy");
    return rollout(src, *env, task, episode_seed).total_reward;
  };
}

ReturnEvaluator make_parameter_space_evaluator(const PolicyArch& arch,
                                               const std::string& env_name,
                                               const std::string& task) {
  return [arch, env_name, task](std::span<const double> z, std::uint64_t episode_seed) {
    if (z.size() != param_count(arch)) {
      fail_numeric("parameter-space evaluator: got " + std::to_string(z.size()) +
                   " weights, arch needs " + std::to_string(param_count(arch)));
    }
    auto env = make_environment(env_name);
    StateNormalizer norm = StateNormalizer::from_spec(env->spec());
    PolicyActionSource src(arch, z, norm, true, 0, "parameter-space policy");
    return rollout(src, *env, task, episode_seed).total_reward;
  };
}

HyperPolicyState::HyperPolicyState(std::size_t dim, const PgpeConfig& config)
    : center(dim, 0.0),
      log_sigma(dim, std::log(std::max(config.init_sigma, kSigmaFloor))),
      center_opt(dim, config.adam_beta1, config.adam_beta2, config.adam_epsilon),
      sigma_opt(dim, config.adam_beta1, config.adam_beta2, config.adam_epsilon) {}

double HyperPolicyState::sigma(std::size_t d) const {
  return std::max(std::exp(log_sigma[d]), kSigmaFloor);
}

void score_function(std::span<const double> z, std::span<const double> center,
                    std::span<const double> sigma, std::span<double> d_center,
                    std::span<double> d_log_sigma) {
  for (std::size_t d = 0; d < z.size(); ++d) {
    double r = z[d] - center[d];
    double s2 = sigma[d] * sigma[d];
    d_center[d] = r / s2;
    // d/d log(sigma) = sigma * d/d sigma = (r^2 - sigma^2) / sigma^2
    d_log_sigma[d] = (r * r - s2) / s2;
  }
}

PgpeStepResult pgpe_step(HyperPolicyState& state, const ReturnEvaluator& evaluate,
                         const PgpeConfig& config, std::uint64_t seed) {
  std::size_t dim = state.center.size();
  std::size_t n = config.population;
  std::vector<double> sigma(dim);
  for (std::size_t d = 0; d < dim; ++d) sigma[d] = state.sigma(d);

  std::vector<std::vector<double>> codes(n, std::vector<double>(dim));
  PgpeStepResult result;
  result.returns.assign(n, 0.0);
  // per-member generators keep parallel and serial execution identical
  parallel_for(n, [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    for (std::size_t d = 0; d < dim; ++d) {
      codes[i][d] = state.center[d] + sigma[d] * rng.normal();
    }
    double ret = evaluate(codes[i], derive_seed(seed, 0x400000 + i));
    if (!std::isfinite(ret)) {
      std::string code;
      for (double v : codes[i]) code += std::to_string(v) + " ";
      fail_numeric("pgpe: non-finite return for population member " + std::to_string(i) +
                   " at z = " + code);
    }
    result.returns[i] = ret;
  });

  double baseline = 0.0;
  for (double r : result.returns) baseline += r;
  baseline /= static_cast<double>(n);
  result.mean_return = baseline;
  double base = config.use_baseline ? baseline : 0.0;

  std::vector<double> grad_center(dim, 0.0), grad_log_sigma(dim, 0.0);
  std::vector<double> dc(dim), ds(dim);
  for (std::size_t i = 0; i < n; ++i) {
    score_function(codes[i], state.center, sigma, dc, ds);
    double advantage = result.returns[i] - base;
    for (std::size_t d = 0; d < dim; ++d) {
      grad_center[d] += dc[d] * advantage;
      grad_log_sigma[d] += ds[d] * advantage;
    }
  }
  for (std::size_t d = 0; d < dim; ++d) {
    grad_center[d] /= static_cast<double>(n);
    grad_log_sigma[d] /= static_cast<double>(n);
  }

  // ascent with exponentially decayed rates
  double decay = std::pow(config.decay, static_cast<double>(state.step));
  for (double& g : grad_center) g = -g;
  for (double& g : grad_log_sigma) g = -g;
  state.center_opt.apply(state.center, grad_center, config.lr_center * decay);
  state.sigma_opt.apply(state.log_sigma, grad_log_sigma, config.lr_std * decay);
  double log_floor = std::log(kSigmaFloor);
  for (double& ls : state.log_sigma) ls = std::max(ls, log_floor);
  ++state.step;
  return result;
}

WarmStartResult warm_start(const ReturnEvaluator& evaluate, std::size_t dim,
                           std::size_t n_samples, std::uint64_t seed,
                           std::span<const double> pool, std::size_t pool_rows) {
  if (n_samples < 1) fail_config("warm start: need at least one sample");
  std::vector<std::vector<double>> codes(n_samples, std::vector<double>(dim));
  Rng rng(derive_seed(seed, 0x5753));
  for (std::size_t i = 0; i < n_samples; ++i) {
    if (pool_rows > 0) {
      std::size_t row = rng.index(pool_rows);
      std::copy_n(pool.data() + row * dim, dim, codes[i].data());
    } else {
      for (std::size_t d = 0; d < dim; ++d) codes[i][d] = rng.normal();
    }
  }
  std::vector<double> returns(n_samples);
  parallel_for(n_samples, [&](std::size_t i) {
    returns[i] = evaluate(codes[i], derive_seed(seed, 0x570000 + i));
  });
  WarmStartResult out;
  std::size_t best = 0;
  for (std::size_t i = 1; i < n_samples; ++i) {
    if (returns[i] > returns[best]) best = i;  // ties keep the lower index
  }
  out.best_code = codes[best];
  out.best_return = returns[best];
  out.episodes_used = n_samples;
  return out;
}

std::size_t default_warm_start_samples(std::size_t latent_dim) {
  return 8 * latent_dim + 16;
}

Campaign run_campaign(const PgpeConfig& config, const ReturnEvaluator& evaluate,
                      std::size_t dim, std::span<const std::uint64_t> seeds,
                      bool use_warm_start, std::size_t warm_start_samples,
                      std::span<const double> warm_start_pool,
                      std::size_t warm_start_pool_rows) {
  if (seeds.empty()) fail_config("campaign: need at least one seed");
  Campaign out;
  out.seeds.assign(seeds.begin(), seeds.end());
  out.per_seed.resize(seeds.size());

  for (std::size_t si = 0; si < seeds.size(); ++si) {
    std::uint64_t seed = seeds[si];
    HyperPolicyState state(dim, config);
    std::vector<CurvePoint>& curve = out.per_seed[si];
    std::size_t episodes = 0;
    if (use_warm_start) {
      std::size_t n_ws =
          warm_start_samples > 0 ? warm_start_samples : default_warm_start_samples(dim);
      WarmStartResult ws = warm_start(evaluate, dim, n_ws, seed, warm_start_pool,
                                      warm_start_pool_rows);
      state.center = ws.best_code;
      episodes += ws.episodes_used;  // warm-start episodes count into the budget
      curve.push_back({episodes, ws.best_return});
    }
    std::size_t step = 0;
    while (episodes + config.population <= config.episode_budget) {
      PgpeStepResult r = pgpe_step(state, evaluate, config, derive_seed(seed, 7000 + step));
      episodes += config.population;
      curve.push_back({episodes, r.mean_return});
      ++step;
    }
  }

  // aggregate over the common prefix of the aligned curves
  std::size_t points = out.per_seed[0].size();
  for (const auto& c : out.per_seed) points = std::min(points, c.size());
  if (seeds.size() == 1) {
    std::cerr << "warning: single-seed campaign, confidence interval is degenerate\n";
  }
  for (std::size_t t = 0; t < points; ++t) {
    double mean = 0.0;
    for (const auto& c : out.per_seed) mean += c[t].mean_return;
    mean /= static_cast<double>(seeds.size());
    double var = 0.0;
    for (const auto& c : out.per_seed) {
      double d = c[t].mean_return - mean;
      var += d * d;
    }
    var = seeds.size() > 1 ? var / static_cast<double>(seeds.size() - 1) : 0.0;
    double half = 1.959963984540054 * std::sqrt(var / static_cast<double>(seeds.size()));
    out.mean.push_back({out.per_seed[0][t].episodes, mean});
    out.ci_half_width.push_back(half);
  }
  return out;
}

}  // namespace opc
