#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "opc/envs.hpp"
#include "opc/policy.hpp"
#include "opc/rng.hpp"
#include "opc/tape.hpp"
#include "test_util.hpp"

using namespace opc;

namespace {
PolicyArch mc_arch() { return PolicyArch{2, 1}; }

StateNormalizer mc_normalizer() {
  MountainCar env;
  return StateNormalizer::from_spec(env.spec());
}

Trajectory deterministic_rollout(const PolicyArch& arch, std::span<const double> params,
                                 std::uint64_t seed, std::size_t max_steps = 0) {
  MountainCar env;
  StateNormalizer norm = mc_normalizer();
  PolicyActionSource src(arch, params, norm, true, 0, "test-policy");
  RolloutResult r = rollout(src, env, "", seed);
  if (max_steps > 0) {
    r.trajectory.states.resize((max_steps + 1) * 2);
    r.trajectory.actions.resize(max_steps);
  }
  return r.trajectory;
}
}  // namespace

TEST_CASE("policy: param_count matches the published architectures") {
  CHECK(param_count(PolicyArch{2, 1}) == 1218);
  CHECK(param_count(PolicyArch{6, 2}) == 1412);
  CHECK(param_count(PolicyArch{11, 3}) == 1638);
}

TEST_CASE("policy: sampled weights are U(-2.5, 2.5)") {
  PolicyArch arch{2, 1};
  double sum = 0.0, sum_sq = 0.0, mn = 1e9, mx = -1e9;
  std::size_t total = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    std::vector<double> p = sample_params(arch, derive_seed(123, s));
    for (double w : p) {
      sum += w;
      sum_sq += w * w;
      mn = std::min(mn, w);
      mx = std::max(mx, w);
    }
    total += p.size();
  }
  double mean = sum / total;                      // 1.2M+ draws
  double var = sum_sq / total - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(var == doctest::Approx(25.0 / 12.0).epsilon(0.01));
  CHECK(mn > -2.5);
  CHECK(mx < 2.5);
}

TEST_CASE("policy: log_std_clamp") {
  CHECK(log_std_clamp(-10.0) == -5.0);
  CHECK(log_std_clamp(0.0) == 0.0);
  CHECK(log_std_clamp(3.0) == 2.0);
}

TEST_CASE("policy: act basics") {
  PolicyArch arch = mc_arch();
  StateNormalizer norm = mc_normalizer();
  std::vector<double> zero(param_count(arch), 0.0);
  std::vector<double> state = {-0.5, 0.01};
  std::vector<double> action(1);
  act(arch, zero, norm, state, action, true, nullptr);
  CHECK(action[0] == 0.0);

  // deterministic actions ignore the rng entirely
  std::vector<double> params = sample_params(arch, 5);
  Rng r1(1), r2(999);
  std::vector<double> a1(1), a2(1);
  act(arch, params, norm, state, a1, true, &r1);
  act(arch, params, norm, state, a2, true, &r2);
  CHECK(a1[0] == a2[0]);

  // tanh keeps every action in [-1, 1]
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> p = sample_params(arch, derive_seed(31, i));
    for (int j = 0; j < 100; ++j) {
      std::vector<double> s = {rng.uniform(-1.2, 0.6), rng.uniform(-0.07, 0.07)};
      std::vector<double> a(1);
      act(arch, p, norm, s, a, (i + j) % 2 == 0, &rng);
      CHECK(a[0] >= -1.0);
      CHECK(a[0] <= 1.0);
    }
  }
}

TEST_CASE("policy: flat layout round-trips exactly") {
  PolicyArch arch{3, 2, 4, 5};
  ParamLayout l = param_layout(arch);
  CHECK(l.total == param_count(arch));
  std::vector<double> params = sample_params(arch, 7);
  // slicing through the tape and reassembling reproduces the vector
  Tape tape;
  Var p = tape.leaf(Tensor::vector(params));
  std::vector<std::pair<std::size_t, std::size_t>> pieces = {
      {l.w1, l.b1 - l.w1}, {l.b1, l.w2 - l.b1}, {l.w2, l.b2 - l.w2},
      {l.b2, l.wm - l.b2}, {l.wm, l.bm - l.wm}, {l.bm, l.ws - l.bm},
      {l.ws, l.bs - l.ws}, {l.bs, l.total - l.bs}};
  std::vector<double> rebuilt;
  for (auto [off, len] : pieces) {
    Var piece = slice(p, off, len);
    rebuilt.insert(rebuilt.end(), piece.value().data(), piece.value().data() + len);
  }
  CHECK(rebuilt == params);
}

TEST_CASE("policy: own trajectory has the highest likelihood") {
  PolicyArch arch = mc_arch();
  StateNormalizer norm = mc_normalizer();
  // scaled weights keep the mean head inside the invertible tanh range;
  // at saturation the recorded action no longer identifies the mean and
  // the self-consistency property does not apply
  std::vector<double> own = sample_params(arch, 100);
  for (double& w : own) w *= 0.05;
  Trajectory traj = deterministic_rollout(arch, own, 3);
  for (double a : traj.actions) CHECK(std::abs(a) < kAtanhClip);
  TrajectoryEvidence ev = make_evidence(traj, arch, norm);

  double own_ll = traj_log_prob_value(own, arch, ev, true);
  for (int i = 0; i < 10; ++i) {
    std::vector<double> other = sample_params(arch, derive_seed(200, i));
    CHECK(own_ll > traj_log_prob_value(other, arch, ev, true));
  }
}

TEST_CASE("policy: zero policy log-likelihood has the closed form") {
  PolicyArch arch = mc_arch();
  StateNormalizer norm = mc_normalizer();
  std::vector<double> zero(param_count(arch), 0.0);
  Trajectory traj = deterministic_rollout(arch, zero, 4, 6);
  TrajectoryEvidence ev = make_evidence(traj, arch, norm);
  // mean = 0 = recorded pre-squash action, std = 1: each step contributes
  // -0.5 ln(2 pi); the squash correction is zero at a = 0
  double ll = traj_log_prob_value(zero, arch, ev, true);
  CHECK(ll == doctest::Approx(-6 * 0.5 * std::log(2 * M_PI)).epsilon(1e-12));
}

TEST_CASE("policy: concatenating a trajectory with itself doubles the log-likelihood") {
  PolicyArch arch = mc_arch();
  StateNormalizer norm = mc_normalizer();
  std::vector<double> params = sample_params(arch, 10);
  Trajectory traj = deterministic_rollout(arch, params, 5, 8);

  TrajectoryEvidence single = make_evidence(traj, arch, norm);
  // evidence for the concatenated trajectory is the evidence repeated
  TrajectoryEvidence twice = single;
  twice.steps = 2 * single.steps;
  twice.normalized_states.insert(twice.normalized_states.end(),
                                 single.normalized_states.begin(),
                                 single.normalized_states.end());
  twice.pre_actions.insert(twice.pre_actions.end(), single.pre_actions.begin(),
                           single.pre_actions.end());
  twice.squash_correction *= 2.0;

  double one = traj_log_prob_value(params, arch, single, true);
  double two = traj_log_prob_value(params, arch, twice, true);
  CHECK(two == doctest::Approx(2.0 * one).epsilon(1e-12));
}

TEST_CASE("policy: traj_log_prob gradient matches finite differences") {
  PolicyArch arch = mc_arch();
  StateNormalizer norm = mc_normalizer();
  std::vector<double> params = sample_params(arch, 21);
  Trajectory traj = deterministic_rollout(arch, params, 6, 5);

  // gradient w.r.t. a policy other than the one that produced the
  // trajectory, as during compression
  std::vector<double> eval_params = sample_params(arch, 22);
  testing::check_gradients(
      {Tensor::vector(eval_params)},
      [&](Tape&, const std::vector<Var>& l) {
        return traj_log_prob(l[0], arch, norm, traj, true);
      },
      1e-3, 1e-5);
}

TEST_CASE("policy: tape and value likelihood paths agree") {
  PolicyArch arch = mc_arch();
  StateNormalizer norm = mc_normalizer();
  std::vector<double> params = sample_params(arch, 30);
  Trajectory traj = deterministic_rollout(arch, params, 8, 12);
  TrajectoryEvidence ev = make_evidence(traj, arch, norm);
  for (bool squash : {true, false}) {
    double direct = traj_log_prob_value(params, arch, ev, squash);
    double taped = traj_log_prob(Var(Tensor::vector(params)), arch, norm, traj, squash)
                       .scalar();
    CHECK(direct == doctest::Approx(taped).epsilon(1e-12));
  }
}

TEST_CASE("policy: likelihood depends on states only through normalization") {
  PolicyArch arch = mc_arch();
  std::vector<double> params = sample_params(arch, 40);
  StateNormalizer norm_a = mc_normalizer();
  Trajectory traj = deterministic_rollout(arch, params, 9, 10);

  // double the half-range and compensate by doubling the first-layer
  // weights: post-normalization behavior is identical
  StateNormalizer norm_b = norm_a;
  for (double& h : norm_b.half_range) h *= 2.0;
  std::vector<double> params_b = params;
  ParamLayout l = param_layout(arch);
  for (std::size_t i = l.w1; i < l.b1; ++i) params_b[i] *= 2.0;

  TrajectoryEvidence ev_a = make_evidence(traj, arch, norm_a);
  TrajectoryEvidence ev_b = make_evidence(traj, arch, norm_b);
  double ll_a = traj_log_prob_value(params, arch, ev_a, true);
  double ll_b = traj_log_prob_value(params_b, arch, ev_b, true);
  CHECK(ll_a == doctest::Approx(ll_b).epsilon(1e-10));
}
