#ifndef OPC_PIPELINE_HPP_
#define OPC_PIPELINE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "opc/curation.hpp"
#include "opc/density.hpp"
#include "opc/store.hpp"

namespace opc {

// Stage drivers shared by the command-line tool and the end-to-end tests.

PolicyArch arch_for(const Environment& env);

PolicyBank generate_bank(const std::string& env_name, std::size_t count,
                         std::uint64_t seed);

// Reward-free full-horizon rollouts, `per_policy` episodes each. Episode
// seeds derive from (seed, policy, episode); parallel across policies.
TrajectoryArchive rollout_bank(const PolicyBank& bank, std::size_t per_policy,
                               std::uint64_t seed);

// One deterministic episode per policy under a task; used for the
// curation-analysis reports.
std::vector<double> evaluate_returns(const PolicyBank& bank, const std::string& task,
                                     std::uint64_t seed);

struct OpcCurationConfig {
  std::size_t gmm_components = 4;
  std::size_t downsample_stride = 4;        // every 4th state feeds the fit
  std::size_t particles_per_policy = 2000;  // Monte-Carlo integration draws
  std::size_t reference_subset = 50;        // mixture restricted to this many policies
  std::uint64_t seed = 0;
};

struct ApcCurationConfig {
  std::size_t probe_count = 256;
  std::size_t k_n = 10;
  std::uint64_t seed = 0;
};

// Occupancy models fitted per policy plus the restricted mixture reference.
struct OccupancyModels {
  std::vector<GmmDensity> per_policy;
  GmmDensity mixture;
  std::vector<std::size_t> reference_ids;
};

OccupancyModels fit_occupancy_models(const PolicyBank& bank,
                                     const TrajectoryArchive& archive,
                                     const OpcCurationConfig& config);

ScoreTable curate_opc(const PolicyBank& bank, const TrajectoryArchive& archive,
                      const OpcCurationConfig& config);

ScoreTable curate_apc(const PolicyBank& bank, const TrajectoryArchive& archive,
                      const ApcCurationConfig& config);

// Probe states sampled uniformly from the pooled trajectories, normalized.
Tensor sample_probe_states(const TrajectoryArchive& archive, const StateNormalizer& norm,
                           std::size_t count, std::uint64_t seed);

}  // namespace opc

#endif  // OPC_PIPELINE_HPP_
