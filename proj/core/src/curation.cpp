#include "opc/curation.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "opc/error.hpp"
#include "opc/thread_pool.hpp"

namespace opc {

void ScoreTable::refresh_bounds() {
  if (scores.empty()) return;
  min_score = *std::min_element(scores.begin(), scores.end());
  max_score = *std::max_element(scores.begin(), scores.end());
}

ScoreTable assemble_opc_scores(std::span<const double> entropies,
                               std::span<const double> kls) {
  if (entropies.size() != kls.size()) {
    fail_numeric("opc scores: entropy and kl counts differ");
  }
  ScoreTable table;
  table.method = "opc";
  table.scores.resize(entropies.size());
  for (std::size_t i = 0; i < entropies.size(); ++i) {
    table.scores[i] = entropies[i] + kls[i];
  }
  table.refresh_bounds();
  return table;
}

ScoreTable score_opc(std::span<const GmmDensity> policy_gmms, const GmmDensity& mixture,
                     std::span<const ParticleSet> particles) {
  if (policy_gmms.size() != particles.size()) {
    fail_numeric("score_opc: particle set count does not match policy count");
  }
  std::vector<double> entropies(policy_gmms.size()), kls(policy_gmms.size());
  parallel_for(policy_gmms.size(), [&](std::size_t i) {
    const GmmDensity& g = policy_gmms[i];
    if (g.components == 0) {
      fail_numeric("score_opc: missing occupancy model for policy " + std::to_string(i));
    }
    const ParticleSet& ps = particles[i];
    entropies[i] = mc_entropy(g, ps.states, ps.count);
    kls[i] = mc_kl(g, mixture, ps.states, ps.count);
  });
  return assemble_opc_scores(entropies, kls);
}

double action_kl(const PolicyHeads& from, const PolicyHeads& to, std::size_t n_probe,
                 std::size_t action_dim) {
  // KL(N(m0, s0) || N(m1, s1)) summed over action dims, averaged over states
  double total = 0.0;
  std::size_t n = n_probe * action_dim;
  for (std::size_t i = 0; i < n; ++i) {
    double s0 = from.log_std[i], s1 = to.log_std[i];
    double dm = from.mean[i] - to.mean[i];
    total += s1 - s0 + 0.5 * (std::exp(2.0 * (s0 - s1)) + dm * dm * std::exp(-2.0 * s1)) -
             0.5;
  }
  return total / static_cast<double>(n_probe);
}

ScoreTable score_apc(const PolicyArch& arch, std::span<const double> param_matrix,
                     std::size_t n_policies, std::span<const double> probe_states,
                     std::size_t n_probe, std::size_t k_n) {
  if (k_n >= n_policies) {
    fail_config("score_apc: k_n (" + std::to_string(k_n) +
                ") must be smaller than the population (" + std::to_string(n_policies) +
                ")");
  }
  if (n_probe == 0) fail_config("score_apc: no probe states");
  std::size_t n_params = param_count(arch);

  // action distributions of every policy at every probe state
  std::vector<PolicyHeads> heads(n_policies);
  parallel_for(n_policies, [&](std::size_t i) {
    heads[i] = policy_heads(arch,
                            std::span<const double>(param_matrix.data() + i * n_params,
                                                    n_params),
                            probe_states, n_probe);
  });

  ScoreTable table;
  table.method = "apc";
  table.scores.resize(n_policies);
  parallel_for(n_policies, [&](std::size_t i) {
    std::vector<double> divs;
    divs.reserve(n_policies - 1);
    for (std::size_t j = 0; j < n_policies; ++j) {
      if (j == i) continue;
      divs.push_back(action_kl(heads[i], heads[j], n_probe, arch.action_dim));
    }
    // summed in ascending order so the score is permutation-invariant
    std::partial_sort(divs.begin(), divs.begin() + k_n, divs.end());
    double s = 0.0;
    for (std::size_t j = 0; j < k_n; ++j) s += divs[j];
    table.scores[i] = s / static_cast<double>(k_n);
  });
  table.refresh_bounds();
  return table;
}

CuratedDataset threshold(const ScoreTable& table, double percentile) {
  if (table.scores.empty()) fail_config("threshold: empty score table");
  if (!(percentile > 0.0) || percentile > 1.0) {
    fail_config("threshold: percentile must be in (0, 1]");
  }
  std::size_t m = table.scores.size();
  std::size_t keep = static_cast<std::size_t>(
      std::ceil(percentile * static_cast<double>(m) - 1e-12));
  keep = std::max<std::size_t>(1, std::min(keep, m));

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (table.scores[a] != table.scores[b]) return table.scores[a] > table.scores[b];
    return a < b;  // tie: keep the lower policy id
  });
  CuratedDataset out;
  out.percentile = percentile;
  out.method = table.method;
  out.retained.assign(order.begin(), order.begin() + keep);
  std::sort(out.retained.begin(), out.retained.end());
  return out;
}

ScoreTable minmax_normalize(const ScoreTable& table) {
  ScoreTable out = table;
  if (table.scores.empty()) return out;
  double range = table.max_score - table.min_score;
  if (range <= 0.0) {
    std::cerr << "warning: constant score table, normalizing to 0.5\n";
    std::fill(out.scores.begin(), out.scores.end(), 0.5);
  } else {
    for (double& s : out.scores) s = (s - table.min_score) / range;
  }
  out.refresh_bounds();
  return out;
}

}  // namespace opc
