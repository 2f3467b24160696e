#ifndef OPC_CURATION_HPP_
#define OPC_CURATION_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "opc/density.hpp"
#include "opc/policy.hpp"

namespace opc {

struct ScoreTable {
  std::string method;          // "opc" or "apc"
  std::vector<double> scores;  // indexed by policy id
  double min_score = 0.0;
  double max_score = 0.0;

  void refresh_bounds();
};

struct CuratedDataset {
  std::vector<std::size_t> retained;  // policy ids, ascending
  double percentile = 0.0;
  std::string method;
  std::uint64_t seed = 0;
};

// States drawn from one policy's occupancy estimate.
struct ParticleSet {
  std::vector<double> states;  // n x dim
  std::size_t count = 0;
};

// Uniqueness score: per-policy entropy plus divergence from the population
// mixture. The assembly is exact given the estimates, so the same path
// serves both Monte-Carlo GMM estimates and closed-form test inputs.
ScoreTable assemble_opc_scores(std::span<const double> entropies,
                               std::span<const double> kls);

// Monte-Carlo scoring of fitted per-policy GMMs against the mixture
// reference. particles[i] must be drawn from policy_gmms[i].
ScoreTable score_opc(std::span<const GmmDensity> policy_gmms, const GmmDensity& mixture,
                     std::span<const ParticleSet> particles);

// Action-space novelty baseline: mean closed-form Gaussian KL to the k_n
// nearest policies, where distance(i, j) is the KL of i's action
// distribution to j's averaged over the probe states.
ScoreTable score_apc(const PolicyArch& arch, std::span<const double> param_matrix,
                     std::size_t n_policies, std::span<const double> probe_states,
                     std::size_t n_probe, std::size_t k_n);

// Pairwise averaged action KL used by score_apc; exposed for the
// brute-force oracle in tests.
double action_kl(const PolicyHeads& from, const PolicyHeads& to, std::size_t n_probe,
                 std::size_t action_dim);

// Keeps the top ceil(percentile * M) ids by score, ties broken by lower id.
CuratedDataset threshold(const ScoreTable& table, double percentile);

// (s - min) / (max - min); a constant table maps to all 0.5 with a warning
// on stderr.
ScoreTable minmax_normalize(const ScoreTable& table);

}  // namespace opc

#endif  // OPC_CURATION_HPP_
