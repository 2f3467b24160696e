#ifndef OPC_POLICY_HPP_
#define OPC_POLICY_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "opc/envs.hpp"
#include "opc/rng.hpp"
#include "opc/tape.hpp"

namespace opc {

// Gaussian MLP: two ELU hidden layers, then separate linear mean and
// log-std heads. Actions are tanh-squashed samples (or the squashed mean
// when deterministic).
struct PolicyArch {
  std::size_t input_dim = 0;
  std::size_t action_dim = 0;
  std::size_t hidden1 = 32;
  std::size_t hidden2 = 32;
};

std::size_t param_count(const PolicyArch& arch);

// Flat layout: w1, b1, w2, b2, w_mean, b_mean, w_logstd, b_logstd.
struct ParamLayout {
  std::size_t w1, b1, w2, b2, wm, bm, ws, bs, total;
};
ParamLayout param_layout(const PolicyArch& arch);

constexpr double kLogStdLo = -5.0;
constexpr double kLogStdHi = 2.0;
constexpr double kAtanhClip = 1.0 - 1e-6;

double log_std_clamp(double raw);

// i.i.d. U(-2.5, 2.5) weights.
std::vector<double> sample_params(const PolicyArch& arch, std::uint64_t seed);

// Fixed affine state normalization derived from the CMP bounds.
struct StateNormalizer {
  std::vector<double> mean;
  std::vector<double> half_range;

  static StateNormalizer from_bounds(std::span<const double> low,
                                     std::span<const double> high);
  static StateNormalizer from_spec(const CmpSpec& spec);
  void apply(std::span<const double> raw, std::span<double> out) const;
};

// Mean/log-std heads for a batch of normalized states (no tape).
struct PolicyHeads {
  std::vector<double> mean;     // n x action_dim
  std::vector<double> log_std;  // n x action_dim, clamped
};
PolicyHeads policy_heads(const PolicyArch& arch, std::span<const double> params,
                         std::span<const double> normalized_states, std::size_t n_states);

// Allocation-free variant for hot rollout loops; buffers are resized on
// first use and reused afterwards.
struct MlpScratch {
  std::vector<double> h1, h2;
  PolicyHeads heads;
};
void policy_heads_into(const PolicyArch& arch, std::span<const double> params,
                       std::span<const double> normalized_states, std::size_t n_states,
                       MlpScratch& scratch);

// Single action. Stochastic draws need an rng; non-finite outputs abort.
void act(const PolicyArch& arch, std::span<const double> params,
         const StateNormalizer& norm, std::span<const double> raw_state,
         std::span<double> action_out, bool deterministic, Rng* rng);

// Rollout adapter owning scratch buffers; one per concurrent rollout.
class PolicyActionSource final : public ActionSource {
 public:
  PolicyActionSource(const PolicyArch& arch, std::span<const double> params,
                     StateNormalizer norm, bool deterministic, std::uint64_t noise_seed,
                     std::string label);
  void act(std::span<const double> raw_state, std::span<double> out,
           std::uint64_t step_index) override;
  std::string describe() const override { return label_; }

 private:
  PolicyArch arch_;
  std::span<const double> params_;
  StateNormalizer norm_;
  bool deterministic_;
  Rng rng_;
  std::string label_;
  MlpScratch scratch_;
  std::vector<double> x_;
};

// Pre-squash actions and the tanh change-of-variables term of a recorded
// trajectory. Computed once per trajectory; both are constants w.r.t.
// policy weights.
struct TrajectoryEvidence {
  std::vector<double> normalized_states;  // t x state_dim (states 0..T-1)
  std::vector<double> pre_actions;        // t x action_dim, atanh of recorded actions
  double squash_correction = 0.0;         // sum of -ln(1 - a^2) over steps/dims
  std::size_t steps = 0;
};
TrajectoryEvidence make_evidence(const Trajectory& traj, const PolicyArch& arch,
                                 const StateNormalizer& norm);

// Differentiable mean/log-std heads over a batch of normalized states.
struct PolicyHeadVars {
  Var mean;
  Var log_std;  // clamped
};
PolicyHeadVars policy_heads_on_tape(const Var& params, const PolicyArch& arch,
                                    const Tensor& normalized_states);

// Differentiable sum of per-step Gaussian log-densities for a batch of
// trajectories packed into one evidence block. `params` may be any tape
// value (a decoded weight vector included). Returns one scalar per
// trajectory segment.
Var traj_set_log_prob(const Var& params, const PolicyArch& arch,
                      const Tensor& normalized_states, const Tensor& pre_actions,
                      const std::vector<std::size_t>& step_offsets,
                      const std::vector<double>& squash_corrections,
                      bool include_squash_correction);

// Single-trajectory log-likelihood, differentiable w.r.t. params.
Var traj_log_prob(const Var& params, const PolicyArch& arch, const StateNormalizer& norm,
                  const Trajectory& traj, bool include_squash_correction = true);

// Plain-value variant used for cached (non-differentiated) likelihoods.
double traj_log_prob_value(std::span<const double> params, const PolicyArch& arch,
                           const TrajectoryEvidence& ev, bool include_squash_correction);

}  // namespace opc

#endif  // OPC_POLICY_HPP_
