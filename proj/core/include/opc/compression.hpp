#ifndef OPC_COMPRESSION_HPP_
#define OPC_COMPRESSION_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "opc/occupancy_loss.hpp"
#include "opc/policy.hpp"
#include "opc/tape.hpp"

namespace opc {

// Symmetric autoencoder over flat policy weights: n -> 25 -> 10 -> k and
// back, ELU hidden layers, linear output layers. Weights pass through a
// fixed per-index standardization fitted on the curated dataset.
struct AutoencoderModel {
  std::size_t input_dim = 0;   // n, the policy parameter count
  std::size_t latent_dim = 0;  // k
  std::size_t hidden1 = 25;
  std::size_t hidden2 = 10;
  std::vector<double> standardize_mean;  // per parameter index
  std::vector<double> standardize_std;   // floored at 1e-8
  std::vector<Tensor> encoder;  // w0, b0, w1, b1, w2, b2
  std::vector<Tensor> decoder;

  std::size_t weight_count() const;
};

AutoencoderModel make_autoencoder(std::size_t input_dim, std::size_t latent_dim,
                                  std::span<const double> dataset,  // rows x n
                                  std::size_t rows, std::uint64_t seed);

// z = f(standardize(theta)); plain-value encode for analysis paths.
std::vector<double> encode(const AutoencoderModel& model, std::span<const double> theta);
std::vector<double> decode(const AutoencoderModel& model, std::span<const double> z);

// Tape versions; `leaves(model)` exposes every trainable tensor.
struct AutoencoderVars {
  std::vector<Var> encoder;
  std::vector<Var> decoder;
  std::vector<Var> all;  // encoder then decoder
};
AutoencoderVars autoencoder_leaves(Tape& tape, const AutoencoderModel& model);
Var encode_on_tape(const AutoencoderModel& model, const AutoencoderVars& vars,
                   std::span<const double> theta);
Var decode_on_tape(const AutoencoderModel& model, const AutoencoderVars& vars,
                   const Var& z);

std::vector<double> standardize(const AutoencoderModel& model,
                                std::span<const double> theta);
std::vector<double> destandardize(const AutoencoderModel& model,
                                  std::span<const double> row);

enum class LossKind { opc, apc };

struct TrainConfig {
  std::size_t batch_size = 5;        // P
  std::size_t inner_iterations = 10;  // I
  std::size_t knn = 30;
  double learning_rate = 1e-3;
  LossKind loss = LossKind::opc;
  std::size_t trajectories_per_policy = 20;
  double coverage_confidence = 0.99;
  std::size_t max_particles = 4000;
  std::size_t probe_states = 256;  // action-matching loss only
  bool include_squash_correction = true;
  std::uint64_t seed = 0;
};

struct LossLogEntry {
  std::size_t outer = 0;
  std::size_t inner = 0;
  double loss = 0.0;
};

// Smallest T with (1 - P/|D|)^T <= 1 - confidence.
std::size_t coverage_iterations(std::size_t dataset_size, std::size_t batch_size,
                                double confidence);

// Mini-batch trainer. `fetch_trajectories(policy_id)` returns the stored
// rollouts of one curated policy. Aborts with the offending batch on a
// non-finite loss; `model` keeps the last finished update so the caller
// can persist the partial state.
std::vector<LossLogEntry> train(
    AutoencoderModel& model, const PolicyArch& arch, const StateNormalizer& norm,
    std::span<const std::size_t> curated_ids,
    const std::function<std::vector<double>(std::size_t)>& fetch_params,
    const std::function<std::vector<Trajectory>(std::size_t)>& fetch_trajectories,
    const TrainConfig& config,
    const std::function<void(std::size_t outer, std::size_t total)>& progress = {});

struct GridSpec {
  double lo = -3.0;
  double hi = 3.0;
  std::size_t cells_per_axis = 10;  // grid resolution per latent dimension
};

struct GridCell {
  std::vector<double> z;
  double mean_return = 0.0;
};

// Decodes a uniform latent grid and evaluates each policy with
// deterministic rollouts. Latent dims beyond the first two are held at
// zero (a 2-d slice) when latent_dim > 3.
std::vector<GridCell> grid_eval(const AutoencoderModel& model, const PolicyArch& arch,
                                Environment& env, const std::string& task,
                                const GridSpec& grid, std::size_t episodes_per_cell,
                                std::uint64_t seed);

}  // namespace opc

#endif  // OPC_COMPRESSION_HPP_
