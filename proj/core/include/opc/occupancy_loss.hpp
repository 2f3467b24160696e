#ifndef OPC_OCCUPANCY_LOSS_HPP_
#define OPC_OCCUPANCY_LOSS_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "opc/envs.hpp"
#include "opc/policy.hpp"
#include "opc/tape.hpp"

namespace opc {

// Everything fixed for one mini-batch of policies: packed trajectory
// evidence and the cached log-likelihoods of the original (undecoded)
// policies, which never change within the batch.
struct BatchContext {
  PolicyArch arch;
  std::vector<std::size_t> policy_ids;                 // batch members
  std::vector<std::vector<double>> params;             // original weights, one per member
  std::size_t n_trajectories = 0;

  // evidence packed across all batch trajectories (policy-major order)
  Tensor states;                        // [total_steps, state_dim] normalized
  Tensor pre_actions;                   // [total_steps, action_dim]
  std::vector<std::size_t> step_offsets;  // n_trajectories + 1
  std::vector<double> squash_corrections;
  bool include_squash_correction = true;

  // raw states kept for particle building
  std::vector<double> raw_states;       // [total_states, state_dim] (includes finals)
  std::vector<std::size_t> state_offsets;  // per trajectory, n_trajectories + 1

  std::vector<double> cached_log_lik;   // [P, n_trajectories] row-major
  std::vector<double> denominator;      // per trajectory: LSE_i cached[i][j]
};

BatchContext make_batch_context(const PolicyArch& arch, const StateNormalizer& norm,
                                std::vector<std::size_t> policy_ids,
                                std::vector<std::vector<double>> params,
                                std::span<const Trajectory> trajectories,
                                bool include_squash_correction = true);

// States subsampled from the batch trajectories, their fixed neighbor
// table, and the particle -> trajectory map through which weights arrive.
struct WeightedParticles {
  std::size_t dim = 0;
  std::size_t count = 0;
  std::size_t k = 0;
  std::vector<double> states;               // [count, dim] normalized
  std::vector<std::size_t> trajectory_of;   // particle -> trajectory index
  std::vector<std::size_t> neighbors;       // [count, k] flattened, self excluded
};

// Exact k-nearest-neighbor table under the Euclidean metric; distance ties
// break toward the lower particle index.
std::vector<std::size_t> knn_indices(std::span<const double> states, std::size_t n,
                                     std::size_t dim, std::size_t k);

WeightedParticles build_particles(const BatchContext& ctx, const StateNormalizer& norm,
                                  std::size_t k, std::size_t max_particles,
                                  std::uint64_t seed);

// [P, n_trajectories] matrix of trajectory log-likelihoods under the
// decoded policies. Each policy's row is evaluated on its own worker tape
// (in parallel) and joined to the decoded vars' tape as a single node.
Var batch_log_likelihoods(const BatchContext& ctx, std::span<const Var> decoded);

// Unnormalized log importance weights: per-trajectory logsumexp over the
// decoded mixture minus the cached original-mixture constant. Errors on a
// non-finite entry, naming the trajectory.
Var log_importance_weights(const BatchContext& ctx, std::span<const Var> decoded);

// softmax: w = exp(v - logsumexp(v)); sums to 1
Var self_normalize(const Var& log_weights);

// Importance-sampling k-NN divergence estimate, computed from per-particle
// *log*-weights so underflowing weights cannot zero out a neighborhood:
//   mean_i [ ln(k/N) - ln(sum_{j in N_i} w_j) ]
// Only the weights carry gradient; the neighbor table is fixed.
Var knn_kl_loss(const WeightedParticles& particles, const Var& log_particle_weights);
// Convenience overload taking already-normalized weights.
Var knn_kl_loss_from_weights(const WeightedParticles& particles, const Var& weights);

// Full mixture-occupancy objective for one batch step: importance weights
// from the decoded policies, expanded to particles, self-normalized in log
// space, then the k-NN estimate.
Var mixture_occupancy_loss(const BatchContext& ctx, const WeightedParticles& particles,
                           std::span<const Var> decoded);

// Action-matching baseline: mean closed-form Gaussian KL between original
// and decoded action distributions over the probe states.
Var action_matching_loss(const PolicyArch& arch,
                         std::span<const std::vector<double>> original_params,
                         std::span<const Var> decoded,
                         const Tensor& probe_states_normalized);

}  // namespace opc

#endif  // OPC_OCCUPANCY_LOSS_HPP_
