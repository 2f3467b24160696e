#include "opc/occupancy_loss.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "opc/error.hpp"
#include "opc/rng.hpp"
#include "opc/thread_pool.hpp"

namespace opc {

BatchContext make_batch_context(const PolicyArch& arch, const StateNormalizer& norm,
                                std::vector<std::size_t> policy_ids,
                                std::vector<std::vector<double>> params,
                                std::span<const Trajectory> trajectories,
                                bool include_squash_correction) {
  BatchContext ctx;
  ctx.arch = arch;
  ctx.policy_ids = std::move(policy_ids);
  ctx.params = std::move(params);
  ctx.n_trajectories = trajectories.size();
  ctx.include_squash_correction = include_squash_correction;
  if (ctx.params.empty() || trajectories.empty()) {
    fail_numeric("batch context: empty batch");
  }

  std::vector<TrajectoryEvidence> evidence(trajectories.size());
  parallel_for(trajectories.size(), [&](std::size_t j) {
    evidence[j] = make_evidence(trajectories[j], arch, norm);
  });

  std::size_t total_steps = 0, total_states = 0;
  ctx.step_offsets.push_back(0);
  ctx.state_offsets.push_back(0);
  for (std::size_t j = 0; j < trajectories.size(); ++j) {
    total_steps += evidence[j].steps;
    total_states += evidence[j].steps + 1;
    ctx.step_offsets.push_back(total_steps);
    ctx.state_offsets.push_back(total_states);
    ctx.squash_corrections.push_back(evidence[j].squash_correction);
  }
  ctx.states = Tensor({total_steps, arch.input_dim});
  ctx.pre_actions = Tensor({total_steps, arch.action_dim});
  ctx.raw_states.resize(total_states * arch.input_dim);
  for (std::size_t j = 0; j < trajectories.size(); ++j) {
    const TrajectoryEvidence& ev = evidence[j];
    std::copy(ev.normalized_states.begin(), ev.normalized_states.end(),
              ctx.states.data() + ctx.step_offsets[j] * arch.input_dim);
    std::copy(ev.pre_actions.begin(), ev.pre_actions.end(),
              ctx.pre_actions.data() + ctx.step_offsets[j] * arch.action_dim);
    std::copy(trajectories[j].states.begin(), trajectories[j].states.end(),
              ctx.raw_states.begin() + ctx.state_offsets[j] * arch.input_dim);
  }

  // cached log-likelihoods of the original policies; constant for the batch
  std::size_t p = ctx.params.size();
  std::size_t jn = ctx.n_trajectories;
  ctx.cached_log_lik.assign(p * jn, 0.0);
  parallel_for(p, [&](std::size_t i) {
    for (std::size_t j = 0; j < jn; ++j) {
      TrajectoryEvidence view;
      view.steps = ctx.step_offsets[j + 1] - ctx.step_offsets[j];
      view.normalized_states.assign(
          ctx.states.data() + ctx.step_offsets[j] * arch.input_dim,
          ctx.states.data() + ctx.step_offsets[j + 1] * arch.input_dim);
      view.pre_actions.assign(
          ctx.pre_actions.data() + ctx.step_offsets[j] * arch.action_dim,
          ctx.pre_actions.data() + ctx.step_offsets[j + 1] * arch.action_dim);
      view.squash_correction = ctx.squash_corrections[j];
      ctx.cached_log_lik[i * jn + j] =
          traj_log_prob_value(ctx.params[i], arch, view, include_squash_correction);
    }
  });
  ctx.denominator.resize(jn);
  for (std::size_t j = 0; j < jn; ++j) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < p; ++i) mx = std::max(mx, ctx.cached_log_lik[i * jn + j]);
    double s = 0.0;
    for (std::size_t i = 0; i < p; ++i) s += std::exp(ctx.cached_log_lik[i * jn + j] - mx);
    ctx.denominator[j] = mx + std::log(s);
  }
  return ctx;
}

std::vector<std::size_t> knn_indices(std::span<const double> states, std::size_t n,
                                     std::size_t dim, std::size_t k) {
  if (k < 1 || k >= n) {
    fail_config("knn: need 1 <= k < particle count, got k=" + std::to_string(k) +
                ", n=" + std::to_string(n));
  }
  std::vector<std::size_t> table(n * k);
  parallel_for(n, [&](std::size_t i) {
    const double* xi = states.data() + i * dim;
    std::vector<std::pair<double, std::size_t>> cand;
    cand.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;  // a particle is not its own neighbor
      const double* xj = states.data() + j * dim;
      double d2 = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        double r = xi[d] - xj[d];
        d2 += r * r;
      }
      cand.emplace_back(d2, j);
    }
    // pair ordering breaks distance ties toward the lower index
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    for (std::size_t j = 0; j < k; ++j) table[i * k + j] = cand[j].second;
  });
  return table;
}

WeightedParticles build_particles(const BatchContext& ctx, const StateNormalizer& norm,
                                  std::size_t k, std::size_t max_particles,
                                  std::uint64_t seed) {
  WeightedParticles parts;
  parts.dim = ctx.arch.input_dim;
  parts.k = k;

  std::size_t total = ctx.state_offsets.back();
  std::vector<std::size_t> picked;  // indices into raw_states
  picked.reserve(std::min(total, max_particles));
  if (total <= max_particles) {
    picked.resize(total);
    std::iota(picked.begin(), picked.end(), 0);
    for (std::size_t j = 0; j < ctx.n_trajectories; ++j) {
      for (std::size_t s = ctx.state_offsets[j]; s < ctx.state_offsets[j + 1]; ++s) {
        parts.trajectory_of.push_back(j);
      }
    }
  } else {
    // uniform per-trajectory subsample, keeping the trajectory association
    Rng rng(seed);
    double keep_fraction =
        static_cast<double>(max_particles) / static_cast<double>(total);
    for (std::size_t j = 0; j < ctx.n_trajectories; ++j) {
      std::size_t lo = ctx.state_offsets[j], hi = ctx.state_offsets[j + 1];
      std::size_t quota = std::max<std::size_t>(
          1, static_cast<std::size_t>(keep_fraction * static_cast<double>(hi - lo)));
      // partial Fisher-Yates over the trajectory's state indices
      std::vector<std::size_t> pool(hi - lo);
      std::iota(pool.begin(), pool.end(), lo);
      for (std::size_t t = 0; t < quota; ++t) {
        std::size_t pick = t + rng.index(pool.size() - t);
        std::swap(pool[t], pool[pick]);
      }
      std::sort(pool.begin(), pool.begin() + quota);
      for (std::size_t t = 0; t < quota; ++t) {
        picked.push_back(pool[t]);
        parts.trajectory_of.push_back(j);
      }
    }
  }

  parts.count = picked.size();
  parts.states.resize(parts.count * parts.dim);
  for (std::size_t i = 0; i < parts.count; ++i) {
    norm.apply(std::span<const double>(ctx.raw_states.data() + picked[i] * parts.dim,
                                       parts.dim),
               std::span<double>(parts.states.data() + i * parts.dim, parts.dim));
  }
  parts.neighbors = knn_indices(parts.states, parts.count, parts.dim, k);
  return parts;
}

Var batch_log_likelihoods(const BatchContext& ctx, std::span<const Var> decoded) {
  std::size_t p = ctx.params.size();
  if (decoded.size() != p) {
    fail_numeric("batch likelihood: decoded set size " + std::to_string(decoded.size()) +
                 " does not match batch size " + std::to_string(p));
  }
  std::size_t jn = ctx.n_trajectories;

  struct Worker {
    std::shared_ptr<Tape> tape;
    Var leaf;
    Var out;
  };
  auto workers = std::make_shared<std::vector<Worker>>(p);
  parallel_for(p, [&](std::size_t i) {
    Worker& w = (*workers)[i];
    w.tape = std::make_shared<Tape>();
    w.leaf = w.tape->leaf(decoded[i].value());
    w.out = traj_set_log_prob(w.leaf, ctx.arch, ctx.states, ctx.pre_actions,
                              ctx.step_offsets, ctx.squash_corrections,
                              ctx.include_squash_correction);
  });

  Tensor value({p, jn});
  for (std::size_t i = 0; i < p; ++i) {
    const Tensor& row = (*workers)[i].out.value();
    std::copy(row.data(), row.data() + jn, value.data() + i * jn);
  }

  Tape* tape = nullptr;
  for (const Var& d : decoded) {
    if (d.tracked()) {
      tape = d.tape();
      break;
    }
  }
  if (!tape) return Var(std::move(value));

  std::vector<Var> parents(decoded.begin(), decoded.end());
  return tape->custom(
      "batch_log_likelihoods", std::move(parents), std::move(value),
      [workers, p, jn](const Tensor& g, Tape::GradSink& sink) {
        std::vector<Tensor> grads(p);
        parallel_for(p, [&](std::size_t i) {
          Worker& w = (*workers)[i];
          Tensor cotangent({jn});
          std::copy(g.data() + i * jn, g.data() + (i + 1) * jn, cotangent.data());
          Gradient grad = w.tape->backward_vjp(w.out, cotangent, {&w.leaf, 1});
          grads[i] = grad.at(w.leaf);
        });
        for (std::size_t i = 0; i < p; ++i) sink.add(i, std::move(grads[i]));
      });
}

Var log_importance_weights(const BatchContext& ctx, std::span<const Var> decoded) {
  Var ell = batch_log_likelihoods(ctx, decoded);
  Var numerator = logsumexp_cols(ell);
  Var lambda = numerator - Var(Tensor::vector(ctx.denominator));
  for (std::size_t j = 0; j < ctx.n_trajectories; ++j) {
    if (!std::isfinite(lambda.value()[j])) {
      fail_numeric("importance weights: non-finite log-weight for trajectory " +
                   std::to_string(j));
    }
  }
  return lambda;
}

Var self_normalize(const Var& log_weights) {
  if (log_weights.value().size() == 0) fail_numeric("self_normalize: empty input");
  return exp(log_weights - logsumexp(log_weights));
}

Var knn_kl_loss(const WeightedParticles& particles, const Var& log_particle_weights) {
  if (log_particle_weights.value().size() != particles.count) {
    fail_numeric("knn loss: weight count " +
                 std::to_string(log_particle_weights.value().size()) +
                 " does not match particle count " + std::to_string(particles.count));
  }
  Var gathered = gather(log_particle_weights, particles.neighbors);
  Var neighbor_mass = logsumexp_rows(reshape(gathered, {particles.count, particles.k}));
  double log_k_over_n = std::log(static_cast<double>(particles.k)) -
                        std::log(static_cast<double>(particles.count));
  // per-particle terms first: a uniformly weighted neighborhood contributes
  // an exact zero, so a perfect reconstruction sums to exactly zero
  return mean(scalar_var(log_k_over_n) - neighbor_mass);
}

Var knn_kl_loss_from_weights(const WeightedParticles& particles, const Var& weights) {
  return knn_kl_loss(particles, log(weights));
}

Var mixture_occupancy_loss(const BatchContext& ctx, const WeightedParticles& particles,
                           std::span<const Var> decoded) {
  Var lambda = log_importance_weights(ctx, decoded);
  // each particle inherits its trajectory's weight; normalization runs over
  // particles so unequal trajectory lengths weigh in correctly
  Var per_particle = gather(lambda, particles.trajectory_of);
  Var log_w = per_particle - logsumexp(per_particle);
  return knn_kl_loss(particles, log_w);
}

Var action_matching_loss(const PolicyArch& arch,
                         std::span<const std::vector<double>> original_params,
                         std::span<const Var> decoded,
                         const Tensor& probe_states_normalized) {
  if (original_params.size() != decoded.size()) {
    fail_numeric("action matching: original and decoded set sizes differ");
  }
  if (probe_states_normalized.size() == 0) {
    fail_config("action matching: no probe states");
  }
  std::size_t n_probe = probe_states_normalized.shape()[0];
  Var total = scalar_var(0.0);
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    PolicyHeads from = policy_heads(arch, original_params[i],
                                    probe_states_normalized.span(), n_probe);
    PolicyHeadVars to = policy_heads_on_tape(decoded[i], arch, probe_states_normalized);
    Tensor m0({n_probe, arch.action_dim}, from.mean);
    Tensor s0({n_probe, arch.action_dim}, from.log_std);
    Var dstd = to.log_std - Var(s0);
    Var dmean = Var(m0) - to.mean;
    Var elem = dstd + 0.5 * exp(dstd * -2.0) +
               0.5 * square(dmean) * exp(to.log_std * -2.0) - 0.5;
    total = total + sum(elem);
  }
  double scale = static_cast<double>(decoded.size()) * static_cast<double>(n_probe);
  return total / scale;
}

}  // namespace opc
