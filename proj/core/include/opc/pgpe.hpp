#ifndef OPC_PGPE_HPP_
#define OPC_PGPE_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "opc/adam.hpp"
#include "opc/compression.hpp"
#include "opc/envs.hpp"
#include "opc/policy.hpp"

namespace opc {

// Maps a search-space point to episode return. The search space is the
// autoencoder latent space, or the raw parameter space for the
// parameter-space baseline; quadratic bandits plug in here for tests.
using ReturnEvaluator =
    std::function<double(std::span<const double> z, std::uint64_t episode_seed)>;

ReturnEvaluator make_decoder_evaluator(const AutoencoderModel& model,
                                       const PolicyArch& arch, const std::string& env_name,
                                       const std::string& task);
// Identity decoder: search directly over flat policy weights.
ReturnEvaluator make_parameter_space_evaluator(const PolicyArch& arch,
                                               const std::string& env_name,
                                               const std::string& task);

struct PgpeConfig {
  std::size_t population = 8;
  double lr_center = 0.1;
  double lr_std = 0.05;
  double init_sigma = 1.0;
  double decay = 0.999;  // exponential factor applied to both rates per step
  double adam_beta1 = 0.1;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t episode_budget = 300;
  bool use_baseline = true;  // population-mean return baseline
};

constexpr double kSigmaFloor = 1e-4;

// Gaussian search distribution over the latent space. sigma is optimized
// in log space so Adam steps keep it positive; the floor still applies.
struct HyperPolicyState {
  std::vector<double> center;
  std::vector<double> log_sigma;
  AdamState center_opt;
  AdamState sigma_opt;
  std::size_t step = 0;

  HyperPolicyState(std::size_t dim, const PgpeConfig& config);
  double sigma(std::size_t d) const;
};

struct PgpeStepResult {
  std::vector<double> returns;  // per population member
  double mean_return = 0.0;
};

// One update: sample the population, roll out deterministically, apply the
// score-function gradient with the mean baseline through Adam.
PgpeStepResult pgpe_step(HyperPolicyState& state, const ReturnEvaluator& evaluate,
                         const PgpeConfig& config, std::uint64_t seed);

// Gaussian score function, exposed for the estimator tests.
void score_function(std::span<const double> z, std::span<const double> center,
                    std::span<const double> sigma, std::span<double> d_center,
                    std::span<double> d_log_sigma);

struct WarmStartResult {
  std::vector<double> best_code;
  double best_return = 0.0;
  std::size_t episodes_used = 0;
};

// Evaluates n_samples codes from N(0, I) (or codes drawn from `pool` rows
// when provided) and returns the argmax, ties toward the lower index.
WarmStartResult warm_start(const ReturnEvaluator& evaluate, std::size_t dim,
                           std::size_t n_samples, std::uint64_t seed,
                           std::span<const double> pool = {}, std::size_t pool_rows = 0);

// Paper-reported warm-start sample counts grow affinely in the latent
// dimension: 40/56/80 at k = 3/5/8.
std::size_t default_warm_start_samples(std::size_t latent_dim);

struct CurvePoint {
  std::size_t episodes = 0;  // cumulative episodes consumed
  double mean_return = 0.0;
};

struct Campaign {
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<CurvePoint>> per_seed;  // aligned across seeds
  std::vector<CurvePoint> mean;
  std::vector<double> ci_half_width;  // normal-approximation 95% interval
};

Campaign run_campaign(const PgpeConfig& config, const ReturnEvaluator& evaluate,
                      std::size_t dim, std::span<const std::uint64_t> seeds,
                      bool use_warm_start, std::size_t warm_start_samples = 0,
                      std::span<const double> warm_start_pool = {},
                      std::size_t warm_start_pool_rows = 0);

}  // namespace opc

#endif  // OPC_PGPE_HPP_
