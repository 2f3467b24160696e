#include "opc/policy.hpp"

#include <cmath>

#include "opc/error.hpp"
#include "opc/linalg.hpp"

namespace opc {

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2*pi)

double elu_value(double x) { return x > 0.0 ? x : std::expm1(x); }
}  // namespace

std::size_t param_count(const PolicyArch& a) {
  return (a.input_dim * a.hidden1 + a.hidden1) + (a.hidden1 * a.hidden2 + a.hidden2) +
         2 * (a.hidden2 * a.action_dim + a.action_dim);
}

ParamLayout param_layout(const PolicyArch& a) {
  ParamLayout l{};
  l.w1 = 0;
  l.b1 = l.w1 + a.input_dim * a.hidden1;
  l.w2 = l.b1 + a.hidden1;
  l.b2 = l.w2 + a.hidden1 * a.hidden2;
  l.wm = l.b2 + a.hidden2;
  l.bm = l.wm + a.hidden2 * a.action_dim;
  l.ws = l.bm + a.action_dim;
  l.bs = l.ws + a.hidden2 * a.action_dim;
  l.total = l.bs + a.action_dim;
  return l;
}

double log_std_clamp(double raw) {
  return raw < kLogStdLo ? kLogStdLo : (raw > kLogStdHi ? kLogStdHi : raw);
}

std::vector<double> sample_params(const PolicyArch& arch, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> params(param_count(arch));
  for (double& w : params) w = rng.uniform(-2.5, 2.5);
  return params;
}

StateNormalizer StateNormalizer::from_bounds(std::span<const double> low,
                                             std::span<const double> high) {
  StateNormalizer n;
  n.mean.resize(low.size());
  n.half_range.resize(low.size());
  for (std::size_t i = 0; i < low.size(); ++i) {
    if (!(low[i] < high[i])) {
      fail_config("state normalizer: bounds must satisfy low < high per dimension");
    }
    n.mean[i] = 0.5 * (low[i] + high[i]);
    n.half_range[i] = 0.5 * (high[i] - low[i]);
  }
  return n;
}

StateNormalizer StateNormalizer::from_spec(const CmpSpec& spec) {
  return from_bounds(spec.state_low, spec.state_high);
}

void StateNormalizer::apply(std::span<const double> raw, std::span<double> out) const {
  for (std::size_t i = 0; i < mean.size(); ++i) {
    out[i] = (raw[i] - mean[i]) / half_range[i];
  }
}

void policy_heads_into(const PolicyArch& arch, std::span<const double> params,
                       std::span<const double> normalized_states, std::size_t n,
                       MlpScratch& s) {
  ParamLayout l = param_layout(arch);
  if (params.size() != l.total) {
    fail_numeric("policy: parameter vector length " + std::to_string(params.size()) +
                 " does not match arch (" + std::to_string(l.total) + ")");
  }
  const double* p = params.data();
  s.h1.assign(n * arch.hidden1, 0.0);
  s.h2.assign(n * arch.hidden2, 0.0);
  s.heads.mean.assign(n * arch.action_dim, 0.0);
  s.heads.log_std.assign(n * arch.action_dim, 0.0);

  mm_nn(normalized_states.data(), n, arch.input_dim, p + l.w1, arch.hidden1, s.h1.data());
  for (std::size_t r = 0; r < n; ++r) {
    double* row = s.h1.data() + r * arch.hidden1;
    for (std::size_t c = 0; c < arch.hidden1; ++c) row[c] = elu_value(row[c] + p[l.b1 + c]);
  }
  mm_nn(s.h1.data(), n, arch.hidden1, p + l.w2, arch.hidden2, s.h2.data());
  for (std::size_t r = 0; r < n; ++r) {
    double* row = s.h2.data() + r * arch.hidden2;
    for (std::size_t c = 0; c < arch.hidden2; ++c) row[c] = elu_value(row[c] + p[l.b2 + c]);
  }
  mm_nn(s.h2.data(), n, arch.hidden2, p + l.wm, arch.action_dim, s.heads.mean.data());
  mm_nn(s.h2.data(), n, arch.hidden2, p + l.ws, arch.action_dim, s.heads.log_std.data());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < arch.action_dim; ++c) {
      s.heads.mean[r * arch.action_dim + c] += p[l.bm + c];
      s.heads.log_std[r * arch.action_dim + c] =
          log_std_clamp(s.heads.log_std[r * arch.action_dim + c] + p[l.bs + c]);
    }
  }
}

PolicyHeads policy_heads(const PolicyArch& arch, std::span<const double> params,
                         std::span<const double> normalized_states, std::size_t n) {
  MlpScratch scratch;
  policy_heads_into(arch, params, normalized_states, n, scratch);
  return std::move(scratch.heads);
}

void act(const PolicyArch& arch, std::span<const double> params,
         const StateNormalizer& norm, std::span<const double> raw_state,
         std::span<double> action_out, bool deterministic, Rng* rng) {
  std::vector<double> x(arch.input_dim);
  norm.apply(raw_state, x);
  PolicyHeads heads = policy_heads(arch, params, x, 1);
  for (std::size_t d = 0; d < arch.action_dim; ++d) {
    double u = heads.mean[d];
    if (!deterministic) {
      if (!rng) fail_numeric("policy: stochastic action requested without an rng");
      u += std::exp(heads.log_std[d]) * rng->normal();
    }
    if (!std::isfinite(u)) {
      fail_numeric("policy: non-finite network output in action dim " + std::to_string(d));
    }
    double a = std::tanh(u);
    action_out[d] = a < -1.0 ? -1.0 : (a > 1.0 ? 1.0 : a);
  }
}

PolicyActionSource::PolicyActionSource(const PolicyArch& arch, std::span<const double> params,
                                       StateNormalizer norm, bool deterministic,
                                       std::uint64_t noise_seed, std::string label)
    : arch_(arch),
      params_(params),
      norm_(std::move(norm)),
      deterministic_(deterministic),
      rng_(noise_seed),
      label_(std::move(label)) {}

void PolicyActionSource::act(std::span<const double> raw_state, std::span<double> out,
                             std::uint64_t /*step_index*/) {
  x_.resize(arch_.input_dim);
  norm_.apply(raw_state, x_);
  policy_heads_into(arch_, params_, x_, 1, scratch_);
  for (std::size_t d = 0; d < arch_.action_dim; ++d) {
    double u = scratch_.heads.mean[d];
    if (!deterministic_) u += std::exp(scratch_.heads.log_std[d]) * rng_.normal();
    if (!std::isfinite(u)) {
      fail_numeric("policy: non-finite network output in action dim " +
                   std::to_string(d) + " from " + label_);
    }
    double a = std::tanh(u);
    out[d] = a < -1.0 ? -1.0 : (a > 1.0 ? 1.0 : a);
  }
}

TrajectoryEvidence make_evidence(const Trajectory& traj, const PolicyArch& arch,
                                 const StateNormalizer& norm) {
  TrajectoryEvidence ev;
  ev.steps = traj.step_count(arch.action_dim);
  ev.normalized_states.resize(ev.steps * arch.input_dim);
  ev.pre_actions.resize(ev.steps * arch.action_dim);
  for (std::size_t t = 0; t < ev.steps; ++t) {
    norm.apply(std::span<const double>(traj.states.data() + t * arch.input_dim,
                                       arch.input_dim),
               std::span<double>(ev.normalized_states.data() + t * arch.input_dim,
                                 arch.input_dim));
    for (std::size_t d = 0; d < arch.action_dim; ++d) {
      double a = traj.actions[t * arch.action_dim + d];
      a = a < -kAtanhClip ? -kAtanhClip : (a > kAtanhClip ? kAtanhClip : a);
      ev.pre_actions[t * arch.action_dim + d] = std::atanh(a);
      ev.squash_correction -= std::log1p(-a * a);
    }
  }
  return ev;
}

PolicyHeadVars policy_heads_on_tape(const Var& params, const PolicyArch& arch,
                                    const Tensor& normalized_states) {
  ParamLayout l = param_layout(arch);
  if (params.value().size() != l.total) {
    fail_numeric("policy forward: parameter vector length " +
                 std::to_string(params.value().size()) + " does not match arch (" +
                 std::to_string(l.total) + ")");
  }
  Var w1 = reshape(slice(params, l.w1, arch.input_dim * arch.hidden1),
                   {arch.input_dim, arch.hidden1});
  Var b1 = slice(params, l.b1, arch.hidden1);
  Var w2 = reshape(slice(params, l.w2, arch.hidden1 * arch.hidden2),
                   {arch.hidden1, arch.hidden2});
  Var b2 = slice(params, l.b2, arch.hidden2);
  Var wm = reshape(slice(params, l.wm, arch.hidden2 * arch.action_dim),
                   {arch.hidden2, arch.action_dim});
  Var bm = slice(params, l.bm, arch.action_dim);
  Var ws = reshape(slice(params, l.ws, arch.hidden2 * arch.action_dim),
                   {arch.hidden2, arch.action_dim});
  Var bs = slice(params, l.bs, arch.action_dim);

  Var x(normalized_states);
  Var h1 = elu(matmul(x, w1) + b1);
  Var h2 = elu(matmul(h1, w2) + b2);
  PolicyHeadVars heads;
  heads.mean = matmul(h2, wm) + bm;
  heads.log_std = clamp(matmul(h2, ws) + bs, kLogStdLo, kLogStdHi);
  return heads;
}

Var traj_set_log_prob(const Var& params, const PolicyArch& arch,
                      const Tensor& normalized_states, const Tensor& pre_actions,
                      const std::vector<std::size_t>& step_offsets,
                      const std::vector<double>& squash_corrections,
                      bool include_squash_correction) {
  PolicyHeadVars heads = policy_heads_on_tape(params, arch, normalized_states);
  Var mean_head = heads.mean;
  Var log_std = heads.log_std;

  // diagonal Gaussian log-density at the pre-squash action
  Var residual = Var(pre_actions) - mean_head;
  Var precision = exp(log_std * -2.0);
  Var elem = (square(residual) * precision) * -0.5 - log_std - kHalfLog2Pi;
  Var per_step = row_sum(elem);
  Var per_traj = segment_sum(per_step, step_offsets);
  if (include_squash_correction) {
    per_traj = per_traj + Var(Tensor::vector(
                              std::vector<double>(squash_corrections.begin(),
                                                  squash_corrections.end())));
  }
  return per_traj;
}

Var traj_log_prob(const Var& params, const PolicyArch& arch, const StateNormalizer& norm,
                  const Trajectory& traj, bool include_squash_correction) {
  TrajectoryEvidence ev = make_evidence(traj, arch, norm);
  Tensor states({ev.steps, arch.input_dim}, ev.normalized_states);
  Tensor actions({ev.steps, arch.action_dim}, ev.pre_actions);
  Var per_traj = traj_set_log_prob(params, arch, states, actions, {0, ev.steps},
                                   {ev.squash_correction}, include_squash_correction);
  return reshape(per_traj, {});
}

double traj_log_prob_value(std::span<const double> params, const PolicyArch& arch,
                           const TrajectoryEvidence& ev, bool include_squash_correction) {
  PolicyHeads heads = policy_heads(arch, params, ev.normalized_states, ev.steps);
  // grouped exactly like the tape path so the two routes agree bitwise
  double lp = 0.0;
  for (std::size_t t = 0; t < ev.steps; ++t) {
    double row = 0.0;
    for (std::size_t d = 0; d < arch.action_dim; ++d) {
      std::size_t i = t * arch.action_dim + d;
      double s = heads.log_std[i];
      double r = ev.pre_actions[i] - heads.mean[i];
      row += ((r * r) * std::exp(s * -2.0)) * -0.5 - s - kHalfLog2Pi;
    }
    lp += row;
  }
  if (include_squash_correction) lp += ev.squash_correction;
  return lp;
}

}  // namespace opc
