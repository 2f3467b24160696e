#ifndef OPC_ENVS_HPP_
#define OPC_ENVS_HPP_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace opc {

// Reward-free controlled Markov process descriptor. state_low/state_high
// double as the fixed normalization bounds fed to policies.
struct CmpSpec {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::size_t horizon = 0;
  std::vector<double> state_low;
  std::vector<double> state_high;
};

// One episode: states has exactly len(actions) + 1 entries, stored raw
// (unnormalized).
struct Trajectory {
  std::vector<double> states;   // (T+1) x state_dim, row-major
  std::vector<double> actions;  // T x action_dim
  std::uint64_t episode_seed = 0;

  std::size_t step_count(std::size_t action_dim) const {
    return action_dim == 0 ? 0 : actions.size() / action_dim;
  }
};

struct StepOutcome {
  double reward = 0.0;
  bool terminated = false;
};

// Episode dynamics plus per-task rewards. Implementations are cheap value
// objects; use one instance per rollout when running in parallel.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual const CmpSpec& spec() const = 0;
  virtual std::string name() const = 0;
  virtual std::vector<std::string> tasks() const = 0;

  // Resolves a task name to the id used by step(); unknown name errors.
  // task_id < 0 means reward-free (zero reward, horizon-only termination).
  virtual int task_id(const std::string& task) const = 0;

  virtual void reset(std::uint64_t episode_seed) = 0;
  virtual StepOutcome step(std::span<const double> action, int task_id) = 0;
  virtual void observe(std::span<double> out) const = 0;
};

std::unique_ptr<Environment> make_environment(const std::string& env_name);

// ---- Mountain Car Continuous ----

struct McState {
  double position = 0.0;
  double velocity = 0.0;
};

// One transition of the standard continuous mountain-car dynamics; the
// action is clipped to [-1, 1].
McState mc_step(const McState& s, double action);

// Hill elevation profile; the height task rewards h^2 above 0.2.
double mc_height(double position);

class MountainCar final : public Environment {
 public:
  enum Task { kStandard = 0, kLeft, kSpeed, kHeight };

  MountainCar();
  const CmpSpec& spec() const override { return spec_; }
  std::string name() const override { return "mc"; }
  std::vector<std::string> tasks() const override;
  int task_id(const std::string& task) const override;
  void reset(std::uint64_t episode_seed) override;
  StepOutcome step(std::span<const double> action, int task_id) override;
  void observe(std::span<double> out) const override;

  const McState& state() const { return state_; }
  void set_state(const McState& s) { state_ = s; }

 private:
  CmpSpec spec_;
  McState state_;
};

// ---- Planar two-link reacher ----

struct ReacherState {
  double q1 = 0.0, q2 = 0.0;      // joint angles
  double w1 = 0.0, w2 = 0.0;      // joint angular velocities
};

struct ReacherParams {
  double link1 = 0.1;
  double link2 = 0.11;
  double mass1 = 1.0;
  double mass2 = 1.0;
  double damping = 0.01;
  // tuned so random policies span all four task thresholds (bring-up check)
  double torque_gain = 1.25;
  double dt = 0.02;        // control period
  std::size_t substeps = 10;  // integrator steps per control period
  double velocity_obs_clip = 5.0;
};

// Fingertip position/velocity and the polar decomposition used by tasks.
struct FingertipKinematics {
  double x = 0.0, y = 0.0;
  double vx = 0.0, vy = 0.0;
  double linear_speed = 0.0;
  double tangential = 0.0;  // positive = counter-clockwise
  double radial = 0.0;      // positive = extending
};

FingertipKinematics fingertip_kinematics(const ReacherState& s, const ReacherParams& p);

// Semi-implicit Euler step of the ideal two-link dynamics (no gravity,
// viscous damping). Torques are clipped to [-1, 1] before the gain.
ReacherState reacher_step(const ReacherState& s, double torque1, double torque2,
                          const ReacherParams& p);

// Kinetic energy of the arm; conserved by the dynamics when torque and
// damping are zero.
double reacher_energy(const ReacherState& s, const ReacherParams& p);

class PlanarReacher final : public Environment {
 public:
  enum Task { kSpeed = 0, kClockwise, kCounterClockwise, kRadial };

  explicit PlanarReacher(ReacherParams params = {});
  const CmpSpec& spec() const override { return spec_; }
  std::string name() const override { return "reacher"; }
  std::vector<std::string> tasks() const override;
  int task_id(const std::string& task) const override;
  void reset(std::uint64_t episode_seed) override;
  StepOutcome step(std::span<const double> action, int task_id) override;
  void observe(std::span<double> out) const override;

  const ReacherState& state() const { return state_; }
  void set_state(const ReacherState& s) { state_ = s; }
  const ReacherParams& params() const { return params_; }

 private:
  CmpSpec spec_;
  ReacherParams params_;
  ReacherState state_;
};

// ---- rollout ----

// Deterministic-dims MLP policy hook used by rollout; implemented by the
// policy module. Writes action into `out`, reading the raw state.
class ActionSource {
 public:
  virtual ~ActionSource() = default;
  virtual void act(std::span<const double> raw_state, std::span<double> out,
                   std::uint64_t step_index) = 0;
  virtual std::string describe() const = 0;
};

struct RolloutResult {
  Trajectory trajectory;
  double total_reward = 0.0;
  bool terminated_early = false;
};

// Simulates one episode. task may be empty (reward-free). A NaN action
// aborts with the policy description.
RolloutResult rollout(ActionSource& policy, Environment& env, const std::string& task,
                      std::uint64_t episode_seed);

}  // namespace opc

#endif  // OPC_ENVS_HPP_
