#include "opc/pipeline.hpp"

#include <algorithm>
#include <numeric>

#include "opc/error.hpp"
#include "opc/rng.hpp"
#include "opc/thread_pool.hpp"

namespace opc {

PolicyArch arch_for(const Environment& env) {
  return PolicyArch{env.spec().state_dim, env.spec().action_dim};
}

PolicyBank generate_bank(const std::string& env_name, std::size_t count,
                         std::uint64_t seed) {
  if (count == 0) fail_config("gen: population size must be positive");
  auto env = make_environment(env_name);
  PolicyBank bank;
  bank.env_name = env_name;
  bank.arch = arch_for(*env);
  bank.generation_seed = seed;
  bank.count = count;
  std::size_t n = param_count(bank.arch);
  bank.weights.resize(count * n);
  parallel_for(count, [&](std::size_t i) {
    std::vector<double> p = sample_params(bank.arch, derive_seed(seed, i));
    std::copy(p.begin(), p.end(), bank.weights.begin() + i * n);
  });
  return bank;
}

TrajectoryArchive rollout_bank(const PolicyBank& bank, std::size_t per_policy,
                               std::uint64_t seed) {
  if (per_policy == 0) fail_config("rollout: need at least one episode per policy");
  auto probe_env = make_environment(bank.env_name);
  const CmpSpec& spec = probe_env->spec();
  StateNormalizer norm = StateNormalizer::from_spec(spec);

  std::vector<std::vector<Trajectory>> collected(bank.count);
  parallel_for(bank.count, [&](std::size_t i) {
    auto env = make_environment(bank.env_name);
    collected[i].reserve(per_policy);
    for (std::size_t ep = 0; ep < per_policy; ++ep) {
      std::uint64_t episode_seed = derive_seed(seed, i * 100003 + ep);
      PolicyActionSource src(bank.arch, bank.policy(i), norm, true, 0,
                             "policy " + std::to_string(i));
      collected[i].push_back(rollout(src, *env, "", episode_seed).trajectory);
    }
  });

  TrajectoryArchive archive;
  archive.env_name = bank.env_name;
  archive.state_dim = spec.state_dim;
  archive.action_dim = spec.action_dim;
  for (std::size_t i = 0; i < bank.count; ++i) {
    for (const Trajectory& t : collected[i]) archive.append(i, t);
  }
  return archive;
}

std::vector<double> evaluate_returns(const PolicyBank& bank, const std::string& task,
                                     std::uint64_t seed) {
  auto probe_env = make_environment(bank.env_name);
  StateNormalizer norm = StateNormalizer::from_spec(probe_env->spec());
  std::vector<double> returns(bank.count);
  parallel_for(bank.count, [&](std::size_t i) {
    auto env = make_environment(bank.env_name);
    PolicyActionSource src(bank.arch, bank.policy(i), norm, true, 0,
                           "policy " + std::to_string(i));
    returns[i] = rollout(src, *env, task, derive_seed(seed, 0xee0000 + i)).total_reward;
  });
  return returns;
}

OccupancyModels fit_occupancy_models(const PolicyBank& bank,
                                     const TrajectoryArchive& archive,
                                     const OpcCurationConfig& config) {
  auto env = make_environment(bank.env_name);
  StateNormalizer norm = StateNormalizer::from_spec(env->spec());
  std::size_t dim = archive.state_dim;

  // trajectory index per policy, computed once
  std::vector<std::vector<std::size_t>> by_policy(bank.count);
  for (std::size_t t = 0; t < archive.count(); ++t) {
    if (archive.policy_ids[t] >= bank.count) {
      fail_missing("curate: archive references policy " +
                   std::to_string(archive.policy_ids[t]) + " outside the bank");
    }
    by_policy[archive.policy_ids[t]].push_back(t);
  }

  OccupancyModels models;
  models.per_policy.resize(bank.count);
  parallel_for(bank.count, [&](std::size_t i) {
    if (by_policy[i].empty()) {
      fail_missing("curate: no trajectories stored for policy " + std::to_string(i));
    }
    // temporally downsampled, normalized states
    std::vector<double> pts;
    for (std::size_t t : by_policy[i]) {
      std::size_t lo = archive.state_offsets[t], hi = archive.state_offsets[t + 1];
      for (std::size_t s = lo; s < hi; s += config.downsample_stride) {
        std::size_t base = pts.size();
        pts.resize(base + dim);
        norm.apply(std::span<const double>(archive.states.data() + s * dim, dim),
                   std::span<double>(pts.data() + base, dim));
      }
    }
    std::size_t n = pts.size() / dim;
    models.per_policy[i] =
        fit_gmm(pts, n, dim, std::min(config.gmm_components, n),
                derive_seed(config.seed, 0x900000 + i));
  });

  // restricted mixture reference: a uniform random subset without replacement
  std::size_t m_ref = std::min(config.reference_subset, bank.count);
  std::vector<std::size_t> ids(bank.count);
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(derive_seed(config.seed, 0xa11ce));
  for (std::size_t t = 0; t < m_ref; ++t) {
    std::size_t pick = t + rng.index(ids.size() - t);
    std::swap(ids[t], ids[pick]);
  }
  models.reference_ids.assign(ids.begin(), ids.begin() + m_ref);
  std::sort(models.reference_ids.begin(), models.reference_ids.end());
  std::vector<GmmDensity> parts;
  parts.reserve(m_ref);
  for (std::size_t id : models.reference_ids) parts.push_back(models.per_policy[id]);
  models.mixture = GmmDensity::merge(parts);
  return models;
}

ScoreTable curate_opc(const PolicyBank& bank, const TrajectoryArchive& archive,
                      const OpcCurationConfig& config) {
  OccupancyModels models = fit_occupancy_models(bank, archive, config);
  std::vector<ParticleSet> particles(bank.count);
  parallel_for(bank.count, [&](std::size_t i) {
    particles[i].count = config.particles_per_policy;
    particles[i].states = sample_particles(models.per_policy[i],
                                           config.particles_per_policy,
                                           derive_seed(config.seed, 0xb00000 + i));
  });
  return score_opc(models.per_policy, models.mixture, particles);
}

ScoreTable curate_apc(const PolicyBank& bank, const TrajectoryArchive& archive,
                      const ApcCurationConfig& config) {
  auto env = make_environment(bank.env_name);
  StateNormalizer norm = StateNormalizer::from_spec(env->spec());
  Tensor probe = sample_probe_states(archive, norm, config.probe_count,
                                     derive_seed(config.seed, 0x9406e));
  return score_apc(bank.arch, bank.weights, bank.count, probe.span(),
                   config.probe_count, config.k_n);
}

Tensor sample_probe_states(const TrajectoryArchive& archive, const StateNormalizer& norm,
                           std::size_t count, std::uint64_t seed) {
  std::size_t total = archive.state_offsets.empty() ? 0 : archive.state_offsets.back();
  if (total == 0) fail_missing("probe states: empty trajectory archive");
  std::size_t dim = archive.state_dim;
  Rng rng(seed);
  Tensor probe({count, dim});
  for (std::size_t s = 0; s < count; ++s) {
    std::size_t pick = rng.index(total);
    norm.apply(std::span<const double>(archive.states.data() + pick * dim, dim),
               std::span<double>(probe.data() + s * dim, dim));
  }
  return probe;
}

}  // namespace opc
