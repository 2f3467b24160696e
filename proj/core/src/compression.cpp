#include "opc/compression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "opc/adam.hpp"
#include "opc/error.hpp"
#include "opc/rng.hpp"
#include "opc/thread_pool.hpp"

namespace opc {

namespace {
constexpr double kStdFloor = 1e-8;

Tensor init_linear_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor w({fan_in, fan_out});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
  return w;
}

Tensor init_linear_bias(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor b({fan_out});
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = rng.uniform(-bound, bound);
  return b;
}

// w0,b0,w1,b1,w2,b2 with ELU after the first two layers, linear output
std::vector<Tensor> init_mlp(std::size_t d0, std::size_t d1, std::size_t d2,
                             std::size_t d3, Rng& rng) {
  std::vector<Tensor> layers;
  layers.push_back(init_linear_weight(d0, d1, rng));
  layers.push_back(init_linear_bias(d0, d1, rng));
  layers.push_back(init_linear_weight(d1, d2, rng));
  layers.push_back(init_linear_bias(d1, d2, rng));
  layers.push_back(init_linear_weight(d2, d3, rng));
  layers.push_back(init_linear_bias(d2, d3, rng));
  return layers;
}

std::vector<double> mlp_forward_value(const std::vector<Tensor>& layers,
                                      std::span<const double> x) {
  std::vector<double> cur(x.begin(), x.end());
  for (std::size_t layer = 0; layer < 3; ++layer) {
    const Tensor& w = layers[2 * layer];
    const Tensor& b = layers[2 * layer + 1];
    std::size_t out_dim = w.shape()[1];
    std::vector<double> next(out_dim, 0.0);
    for (std::size_t i = 0; i < w.shape()[0]; ++i) {
      double xv = cur[i];
      for (std::size_t j = 0; j < out_dim; ++j) next[j] += xv * w.at(i, j);
    }
    for (std::size_t j = 0; j < out_dim; ++j) {
      next[j] += b[j];
      if (layer < 2 && next[j] <= 0.0) next[j] = std::expm1(next[j]);
    }
    cur = std::move(next);
  }
  return cur;
}

Var mlp_forward_tape(const std::vector<Var>& layers, Var x) {
  for (std::size_t layer = 0; layer < 3; ++layer) {
    x = matmul(x, layers[2 * layer]) + layers[2 * layer + 1];
    if (layer < 2) x = elu(x);
  }
  return x;
}
}  // namespace

std::size_t AutoencoderModel::weight_count() const {
  std::size_t n = 0;
  for (const Tensor& t : encoder) n += t.size();
  for (const Tensor& t : decoder) n += t.size();
  return n;
}

AutoencoderModel make_autoencoder(std::size_t input_dim, std::size_t latent_dim,
                                  std::span<const double> dataset, std::size_t rows,
                                  std::uint64_t seed) {
  if (rows == 0 || input_dim == 0 || latent_dim == 0) {
    fail_config("autoencoder: empty dataset or zero dimensions");
  }
  AutoencoderModel m;
  m.input_dim = input_dim;
  m.latent_dim = latent_dim;
  m.standardize_mean.assign(input_dim, 0.0);
  m.standardize_std.assign(input_dim, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < input_dim; ++i) {
      m.standardize_mean[i] += dataset[r * input_dim + i];
    }
  }
  for (double& v : m.standardize_mean) v /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < input_dim; ++i) {
      double d = dataset[r * input_dim + i] - m.standardize_mean[i];
      m.standardize_std[i] += d * d;
    }
  }
  for (double& v : m.standardize_std) {
    v = std::max(std::sqrt(v / static_cast<double>(rows)), kStdFloor);
  }

  Rng rng(seed);
  m.encoder = init_mlp(input_dim, m.hidden1, m.hidden2, latent_dim, rng);
  m.decoder = init_mlp(latent_dim, m.hidden2, m.hidden1, input_dim, rng);
  return m;
}

std::vector<double> standardize(const AutoencoderModel& model,
                                std::span<const double> theta) {
  if (theta.size() != model.input_dim) {
    fail_numeric("autoencoder: input length " + std::to_string(theta.size()) +
                 " does not match model dimension " + std::to_string(model.input_dim));
  }
  std::vector<double> out(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    out[i] = (theta[i] - model.standardize_mean[i]) / model.standardize_std[i];
  }
  return out;
}

std::vector<double> destandardize(const AutoencoderModel& model,
                                  std::span<const double> row) {
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) {
    out[i] = row[i] * model.standardize_std[i] + model.standardize_mean[i];
  }
  return out;
}

std::vector<double> encode(const AutoencoderModel& model, std::span<const double> theta) {
  return mlp_forward_value(model.encoder, standardize(model, theta));
}

std::vector<double> decode(const AutoencoderModel& model, std::span<const double> z) {
  if (z.size() != model.latent_dim) {
    fail_numeric("autoencoder: latent length " + std::to_string(z.size()) +
                 " does not match model dimension " + std::to_string(model.latent_dim));
  }
  return destandardize(model, mlp_forward_value(model.decoder, z));
}

AutoencoderVars autoencoder_leaves(Tape& tape, const AutoencoderModel& model) {
  AutoencoderVars vars;
  for (const Tensor& t : model.encoder) vars.encoder.push_back(tape.leaf(t));
  for (const Tensor& t : model.decoder) vars.decoder.push_back(tape.leaf(t));
  vars.all = vars.encoder;
  vars.all.insert(vars.all.end(), vars.decoder.begin(), vars.decoder.end());
  return vars;
}

Var encode_on_tape(const AutoencoderModel& model, const AutoencoderVars& vars,
                   std::span<const double> theta) {
  return mlp_forward_tape(vars.encoder, Var(Tensor::vector(standardize(model, theta))));
}

Var decode_on_tape(const AutoencoderModel& model, const AutoencoderVars& vars,
                   const Var& z) {
  Var row = mlp_forward_tape(vars.decoder, z);
  return row * Var(Tensor::vector(model.standardize_std)) +
         Var(Tensor::vector(model.standardize_mean));
}

std::size_t coverage_iterations(std::size_t dataset_size, std::size_t batch_size,
                                double confidence) {
  if (batch_size == 0 || batch_size > dataset_size) {
    fail_config("coverage: need 0 < batch size <= dataset size");
  }
  if (!(confidence > 0.0 && confidence < 1.0)) {
    fail_config("coverage: confidence must be in (0, 1)");
  }
  if (batch_size == dataset_size) return 1;
  double miss = 1.0 - static_cast<double>(batch_size) / static_cast<double>(dataset_size);
  double target = 1.0 - confidence;
  auto t = static_cast<std::size_t>(std::ceil(std::log(target) / std::log(miss)));
  while (std::pow(miss, static_cast<double>(t)) > target) ++t;
  while (t > 1 && std::pow(miss, static_cast<double>(t - 1)) <= target) --t;
  return t;
}

std::vector<LossLogEntry> train(
    AutoencoderModel& model, const PolicyArch& arch, const StateNormalizer& norm,
    std::span<const std::size_t> curated_ids,
    const std::function<std::vector<double>(std::size_t)>& fetch_params,
    const std::function<std::vector<Trajectory>(std::size_t)>& fetch_trajectories,
    const TrainConfig& config,
    const std::function<void(std::size_t, std::size_t)>& progress) {
  if (config.batch_size < 2) fail_config("train: batch size must be at least 2");
  if (config.inner_iterations < 1) fail_config("train: need at least one inner iteration");
  if (curated_ids.size() < config.batch_size) {
    fail_config("train: curated dataset smaller than one batch");
  }

  std::size_t outer_total =
      coverage_iterations(curated_ids.size(), config.batch_size, config.coverage_confidence);
  Rng rng(derive_seed(config.seed, 0x7261696e));

  std::vector<AdamState> opt;
  std::vector<Tensor*> model_tensors;
  for (Tensor& t : model.encoder) model_tensors.push_back(&t);
  for (Tensor& t : model.decoder) model_tensors.push_back(&t);
  for (Tensor* t : model_tensors) opt.emplace_back(t->size());

  std::vector<LossLogEntry> log;
  log.reserve(outer_total * config.inner_iterations);

  std::vector<std::size_t> pool(curated_ids.begin(), curated_ids.end());
  for (std::size_t outer = 0; outer < outer_total; ++outer) {
    // batch of P distinct policies, uniform over the curated dataset
    for (std::size_t t = 0; t < config.batch_size; ++t) {
      std::size_t pick = t + rng.index(pool.size() - t);
      std::swap(pool[t], pool[pick]);
    }
    std::vector<std::size_t> batch_ids(pool.begin(), pool.begin() + config.batch_size);

    std::vector<std::vector<double>> params;
    std::vector<Trajectory> trajectories;
    for (std::size_t id : batch_ids) {
      params.push_back(fetch_params(id));
      std::vector<Trajectory> trajs = fetch_trajectories(id);
      if (trajs.size() < config.trajectories_per_policy) {
        fail_missing("train: policy " + std::to_string(id) + " has " +
                     std::to_string(trajs.size()) + " stored trajectories, need " +
                     std::to_string(config.trajectories_per_policy));
      }
      trajs.resize(config.trajectories_per_policy);
      for (Trajectory& t : trajs) trajectories.push_back(std::move(t));
    }

    BatchContext ctx;
    WeightedParticles particles;
    Tensor probe;
    if (config.loss == LossKind::opc) {
      ctx = make_batch_context(arch, norm, batch_ids, params, trajectories,
                               config.include_squash_correction);
      particles = build_particles(ctx, norm, config.knn, config.max_particles,
                                  derive_seed(config.seed, 1000 + outer));
    } else {
      // probe states drawn from the batch trajectories
      Rng probe_rng(derive_seed(config.seed, 2000 + outer));
      probe = Tensor({config.probe_states, arch.input_dim});
      std::size_t total_states = 0;
      for (const Trajectory& t : trajectories) {
        total_states += t.states.size() / arch.input_dim;
      }
      for (std::size_t s = 0; s < config.probe_states; ++s) {
        std::size_t flat = probe_rng.index(total_states);
        for (const Trajectory& t : trajectories) {
          std::size_t count = t.states.size() / arch.input_dim;
          if (flat < count) {
            norm.apply(std::span<const double>(t.states.data() + flat * arch.input_dim,
                                               arch.input_dim),
                       std::span<double>(probe.data() + s * arch.input_dim,
                                         arch.input_dim));
            break;
          }
          flat -= count;
        }
      }
    }

    for (std::size_t inner = 0; inner < config.inner_iterations; ++inner) {
      Tape tape;
      AutoencoderVars vars = autoencoder_leaves(tape, model);
      std::vector<Var> decoded;
      decoded.reserve(params.size());
      for (const std::vector<double>& theta : params) {
        decoded.push_back(decode_on_tape(model, vars, encode_on_tape(model, vars, theta)));
      }
      Var loss = config.loss == LossKind::opc
                     ? mixture_occupancy_loss(ctx, particles, decoded)
                     : action_matching_loss(arch, params, decoded, probe);
      double loss_value = loss.scalar();
      if (!std::isfinite(loss_value)) {
        std::string ids;
        for (std::size_t id : batch_ids) ids += std::to_string(id) + " ";
        fail_numeric("train: non-finite loss at outer " + std::to_string(outer) +
                     " inner " + std::to_string(inner) + ", batch ids: " + ids);
      }
      log.push_back({outer, inner, loss_value});

      Gradient grad = tape.backward(loss, vars.all);
      for (std::size_t t = 0; t < model_tensors.size(); ++t) {
        const Tensor& g = grad.at(vars.all[t]);
        opt[t].apply(model_tensors[t]->span(), g.span(), config.learning_rate);
      }
    }
    if (progress) progress(outer + 1, outer_total);
  }
  return log;
}

std::vector<GridCell> grid_eval(const AutoencoderModel& model, const PolicyArch& arch,
                                Environment& env, const std::string& task,
                                const GridSpec& grid, std::size_t episodes_per_cell,
                                std::uint64_t seed) {
  if (episodes_per_cell == 0) fail_config("grid_eval: need at least one episode per cell");
  std::size_t sweep_dims = model.latent_dim <= 3 ? model.latent_dim : 2;
  std::size_t cells = 1;
  for (std::size_t d = 0; d < sweep_dims; ++d) cells *= grid.cells_per_axis;

  StateNormalizer norm = StateNormalizer::from_spec(env.spec());
  std::vector<GridCell> out(cells);
  std::string env_name = env.name();
  parallel_for(cells, [&](std::size_t cell) {
    std::vector<double> z(model.latent_dim, 0.0);
    std::size_t rest = cell;
    for (std::size_t d = 0; d < sweep_dims; ++d) {
      std::size_t idx = rest % grid.cells_per_axis;
      rest /= grid.cells_per_axis;
      z[d] = grid.cells_per_axis == 1
                 ? 0.5 * (grid.lo + grid.hi)
                 : grid.lo + (grid.hi - grid.lo) * static_cast<double>(idx) /
                                 static_cast<double>(grid.cells_per_axis - 1);
    }
    std::vector<double> theta = decode(model, z);
    auto local_env = make_environment(env_name);
    double total = 0.0;
    for (std::size_t ep = 0; ep < episodes_per_cell; ++ep) {
      PolicyActionSource src(arch, theta, norm, true, 0, "grid cell");
      RolloutResult r =
          rollout(src, *local_env, task, derive_seed(seed, cell * 131071 + ep));
      total += r.total_reward;
    }
    out[cell].z = std::move(z);
    out[cell].mean_return = total / static_cast<double>(episodes_per_cell);
  });
  return out;
}

}  // namespace opc
