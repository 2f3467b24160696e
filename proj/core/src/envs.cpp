#include "opc/envs.hpp"

#include <cmath>

#include "opc/error.hpp"
#include "opc/rng.hpp"

namespace opc {

namespace {
double clip(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }
}  // namespace

std::unique_ptr<Environment> make_environment(const std::string& env_name) {
  if (env_name == "mc") return std::make_unique<MountainCar>();
  if (env_name == "reacher") return std::make_unique<PlanarReacher>();
  fail_config("unknown environment '" + env_name + "' (expected: mc, reacher)");
}

// ---- Mountain Car ----

constexpr double kMcMinPos = -1.2;
constexpr double kMcMaxPos = 0.6;
constexpr double kMcMaxVel = 0.07;
constexpr double kMcPower = 0.0015;
constexpr double kMcGravity = 0.0025;
constexpr double kMcGoalRight = 0.45;
constexpr double kMcGoalLeft = -1.1;
constexpr std::size_t kMcHorizon = 999;

McState mc_step(const McState& s, double action) {
  double force = clip(action, -1.0, 1.0);
  McState n;
  n.velocity = s.velocity + force * kMcPower - kMcGravity * std::cos(3.0 * s.position);
  n.velocity = clip(n.velocity, -kMcMaxVel, kMcMaxVel);
  n.position = clip(s.position + n.velocity, kMcMinPos, kMcMaxPos);
  if (n.position <= kMcMinPos && n.velocity < 0.0) n.velocity = 0.0;
  return n;
}

double mc_height(double position) { return std::sin(3.0 * position) * 0.45 + 0.55; }

MountainCar::MountainCar() {
  spec_.state_dim = 2;
  spec_.action_dim = 1;
  spec_.horizon = kMcHorizon;
  spec_.state_low = {kMcMinPos, -kMcMaxVel};
  spec_.state_high = {kMcMaxPos, kMcMaxVel};
}

std::vector<std::string> MountainCar::tasks() const {
  return {"standard", "left", "speed", "height"};
}

int MountainCar::task_id(const std::string& task) const {
  if (task == "standard") return kStandard;
  if (task == "left") return kLeft;
  if (task == "speed") return kSpeed;
  if (task == "height") return kHeight;
  fail_config("mc: unknown task '" + task + "' (expected: standard, left, speed, height)");
}

void MountainCar::reset(std::uint64_t episode_seed) {
  Rng rng(episode_seed);
  state_.position = rng.uniform(-0.6, -0.4);
  state_.velocity = 0.0;
}

StepOutcome MountainCar::step(std::span<const double> action, int task_id) {
  double a = action[0];
  McState next = mc_step(state_, a);
  StepOutcome out;
  switch (task_id) {
    case kStandard:
      out.terminated = next.position >= kMcGoalRight;
      out.reward = (out.terminated ? 100.0 : 0.0) - 0.1 * a * a;
      break;
    case kLeft:
      out.terminated = next.position <= kMcGoalLeft;
      out.reward = (out.terminated ? 100.0 : 0.0) - 0.1 * a * a;
      break;
    case kSpeed:
      out.reward = next.velocity * next.velocity;
      break;
    case kHeight: {
      double h = mc_height(next.position);
      out.reward = h >= 0.2 ? h * h : 0.0;
      break;
    }
    case -1:
      break;  // reward-free
    default:
      fail_config("mc: invalid task id " + std::to_string(task_id));
  }
  state_ = next;
  return out;
}

void MountainCar::observe(std::span<double> out) const {
  out[0] = state_.position;
  out[1] = state_.velocity;
}

// ---- Planar reacher ----

constexpr std::size_t kReacherHorizon = 50;

FingertipKinematics fingertip_kinematics(const ReacherState& s, const ReacherParams& p) {
  FingertipKinematics k;
  double c1 = std::cos(s.q1), s1 = std::sin(s.q1);
  double c12 = std::cos(s.q1 + s.q2), s12 = std::sin(s.q1 + s.q2);
  k.x = p.link1 * c1 + p.link2 * c12;
  k.y = p.link1 * s1 + p.link2 * s12;
  double w12 = s.w1 + s.w2;
  k.vx = -p.link1 * s1 * s.w1 - p.link2 * s12 * w12;
  k.vy = p.link1 * c1 * s.w1 + p.link2 * c12 * w12;
  k.linear_speed = std::hypot(k.vx, k.vy);
  double r = std::hypot(k.x, k.y);
  if (r > 1e-9) {
    k.tangential = (k.x * k.vy - k.y * k.vx) / r;
    k.radial = (k.x * k.vx + k.y * k.vy) / r;
  }
  return k;
}

ReacherState reacher_step(const ReacherState& s, double torque1, double torque2,
                          const ReacherParams& p) {
  double t1 = p.torque_gain * clip(torque1, -1.0, 1.0);
  double t2 = p.torque_gain * clip(torque2, -1.0, 1.0);
  double l1 = p.link1, l2 = p.link2, m1 = p.mass1, m2 = p.mass2;

  // two-link arm with point masses at the link ends, no gravity; the small
  // inertia needs a fine integrator step, so one control period covers
  // several semi-implicit Euler substeps
  ReacherState n = s;
  double dt = p.dt / static_cast<double>(p.substeps);
  for (std::size_t sub = 0; sub < p.substeps; ++sub) {
    double c2 = std::cos(n.q2), s2 = std::sin(n.q2);
    double m11 = (m1 + m2) * l1 * l1 + m2 * l2 * l2 + 2.0 * m2 * l1 * l2 * c2;
    double m12 = m2 * l2 * l2 + m2 * l1 * l2 * c2;
    double m22 = m2 * l2 * l2;
    double h = m2 * l1 * l2 * s2;
    double cor1 = -h * (2.0 * n.w1 * n.w2 + n.w2 * n.w2);
    double cor2 = h * n.w1 * n.w1;

    double rhs1 = t1 - p.damping * n.w1 - cor1;
    double rhs2 = t2 - p.damping * n.w2 - cor2;
    double det = m11 * m22 - m12 * m12;
    double a1 = (m22 * rhs1 - m12 * rhs2) / det;
    double a2 = (m11 * rhs2 - m12 * rhs1) / det;

    n.w1 += dt * a1;
    n.w2 += dt * a2;
    n.q1 += dt * n.w1;
    n.q2 += dt * n.w2;
  }
  return n;
}

double reacher_energy(const ReacherState& s, const ReacherParams& p) {
  double l1 = p.link1, l2 = p.link2, m1 = p.mass1, m2 = p.mass2;
  double c2 = std::cos(s.q2);
  double m11 = (m1 + m2) * l1 * l1 + m2 * l2 * l2 + 2.0 * m2 * l1 * l2 * c2;
  double m12 = m2 * l2 * l2 + m2 * l1 * l2 * c2;
  double m22 = m2 * l2 * l2;
  return 0.5 * (m11 * s.w1 * s.w1 + 2.0 * m12 * s.w1 * s.w2 + m22 * s.w2 * s.w2);
}

PlanarReacher::PlanarReacher(ReacherParams params) : params_(params) {
  spec_.state_dim = 6;
  spec_.action_dim = 2;
  spec_.horizon = kReacherHorizon;
  double vc = params_.velocity_obs_clip;
  spec_.state_low = {-1.0, -1.0, -1.0, -1.0, -vc, -vc};
  spec_.state_high = {1.0, 1.0, 1.0, 1.0, vc, vc};
}

std::vector<std::string> PlanarReacher::tasks() const {
  return {"speed", "clockwise", "c-clockwise", "radial"};
}

int PlanarReacher::task_id(const std::string& task) const {
  if (task == "speed") return kSpeed;
  if (task == "clockwise") return kClockwise;
  if (task == "c-clockwise") return kCounterClockwise;
  if (task == "radial") return kRadial;
  fail_config("reacher: unknown task '" + task +
              "' (expected: speed, clockwise, c-clockwise, radial)");
}

void PlanarReacher::reset(std::uint64_t episode_seed) {
  Rng rng(episode_seed);
  state_.q1 = rng.uniform(-0.1, 0.1);
  state_.q2 = rng.uniform(-0.1, 0.1);
  state_.w1 = rng.uniform(-0.005, 0.005);
  state_.w2 = rng.uniform(-0.005, 0.005);
}

StepOutcome PlanarReacher::step(std::span<const double> action, int task_id) {
  state_ = reacher_step(state_, action[0], action[1], params_);
  StepOutcome out;
  // binary rewards on the true (unclipped) fingertip kinematics
  FingertipKinematics k = fingertip_kinematics(state_, params_);
  switch (task_id) {
    case kSpeed:
      out.reward = k.linear_speed > 6.0 ? 1.0 : 0.0;
      break;
    case kClockwise:
      out.reward = k.tangential < -1.0 ? 1.0 : 0.0;
      break;
    case kCounterClockwise:
      out.reward = k.tangential > 1.0 ? 1.0 : 0.0;
      break;
    case kRadial:
      out.reward = k.radial > 3.0 ? 1.0 : 0.0;
      break;
    case -1:
      break;
    default:
      fail_config("reacher: invalid task id " + std::to_string(task_id));
  }
  return out;
}

void PlanarReacher::observe(std::span<double> out) const {
  double vc = params_.velocity_obs_clip;
  out[0] = std::cos(state_.q1);
  out[1] = std::sin(state_.q1);
  out[2] = std::cos(state_.q2);
  out[3] = std::sin(state_.q2);
  out[4] = clip(state_.w1, -vc, vc);
  out[5] = clip(state_.w2, -vc, vc);
}

// ---- rollout ----

RolloutResult rollout(ActionSource& policy, Environment& env, const std::string& task,
                      std::uint64_t episode_seed) {
  const CmpSpec& spec = env.spec();
  int task_id = task.empty() ? -1 : env.task_id(task);

  RolloutResult result;
  result.trajectory.episode_seed = episode_seed;
  result.trajectory.states.reserve((spec.horizon + 1) * spec.state_dim);
  result.trajectory.actions.reserve(spec.horizon * spec.action_dim);

  env.reset(episode_seed);
  std::vector<double> state(spec.state_dim), action(spec.action_dim);
  env.observe(state);
  result.trajectory.states.insert(result.trajectory.states.end(), state.begin(), state.end());

  for (std::size_t t = 0; t < spec.horizon; ++t) {
    policy.act(state, action, t);
    for (double a : action) {
      if (std::isnan(a)) {
        fail_numeric("rollout: NaN action at step " + std::to_string(t) + " from " +
                     policy.describe());
      }
    }
    StepOutcome outcome = env.step(action, task_id);
    env.observe(state);
    result.trajectory.actions.insert(result.trajectory.actions.end(), action.begin(),
                                     action.end());
    result.trajectory.states.insert(result.trajectory.states.end(), state.begin(),
                                    state.end());
    result.total_reward += outcome.reward;
    if (outcome.terminated) {
      result.terminated_early = true;
      break;
    }
  }
  return result;
}

}  // namespace opc
