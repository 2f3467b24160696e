#include <cmath>

#include "doctest.h"
#include "opc/compression.hpp"
#include "opc/envs.hpp"
#include "opc/error.hpp"
#include "opc/pipeline.hpp"
#include "opc/rng.hpp"
#include "opc/store.hpp"

using namespace opc;

namespace {

PolicyArch toy_arch() { return PolicyArch{2, 1, 3, 3}; }  // 29 parameters

struct ToyDataset {
  PolicyArch arch = toy_arch();
  std::vector<std::vector<double>> params;
  std::vector<std::vector<Trajectory>> trajectories;
  std::vector<std::size_t> ids;
  std::vector<double> flat;
};

ToyDataset make_toy_dataset(std::size_t count, std::size_t per_policy,
                            std::size_t horizon, std::uint64_t seed) {
  ToyDataset d;
  StateNormalizer norm = StateNormalizer::from_spec(MountainCar().spec());
  for (std::size_t i = 0; i < count; ++i) {
    d.params.push_back(sample_params(d.arch, derive_seed(seed, i)));
    d.flat.insert(d.flat.end(), d.params.back().begin(), d.params.back().end());
    d.ids.push_back(i);
    std::vector<Trajectory> trajs;
    for (std::size_t ep = 0; ep < per_policy; ++ep) {
      MountainCar env;
      PolicyActionSource src(d.arch, d.params.back(), norm, true, 0, "toy");
      Trajectory t = rollout(src, env, "", derive_seed(seed, 1000 + i * 31 + ep)).trajectory;
      if (t.step_count(1) > horizon) {
        t.states.resize((horizon + 1) * 2);
        t.actions.resize(horizon);
      }
      trajs.push_back(std::move(t));
    }
    d.trajectories.push_back(std::move(trajs));
  }
  return d;
}

TrainConfig toy_config(LossKind loss, std::uint64_t seed) {
  TrainConfig c;
  c.batch_size = 2;
  c.inner_iterations = 5;
  c.knn = 3;
  c.trajectories_per_policy = 3;
  c.coverage_confidence = 0.99;
  c.loss = loss;
  c.probe_states = 32;
  c.seed = seed;
  return c;
}

std::vector<LossLogEntry> run_toy_training(AutoencoderModel& model, const ToyDataset& d,
                                           const TrainConfig& config) {
  StateNormalizer norm = StateNormalizer::from_spec(MountainCar().spec());
  return train(
      model, d.arch, norm, d.ids, [&](std::size_t id) { return d.params[id]; },
      [&](std::size_t id) { return d.trajectories[id]; }, config);
}

}  // namespace

TEST_CASE("compression: autoencoder shapes and weight count") {
  Rng rng(3);
  std::vector<double> dataset(4 * 1218);
  for (double& x : dataset) x = rng.uniform(-2.5, 2.5);
  AutoencoderModel m = make_autoencoder(1218, 2, dataset, 4, 0);
  CHECK(m.weight_count() == 62730);

  std::vector<double> z = encode(m, std::span<const double>(dataset.data(), 1218));
  CHECK(z.size() == 2);
  for (double v : z) CHECK(std::isfinite(v));
  std::vector<double> theta = decode(m, z);
  CHECK(theta.size() == 1218);
  for (double v : theta) CHECK(std::isfinite(v));
}

TEST_CASE("compression: standardization round trip") {
  Rng rng(5);
  std::vector<double> dataset(6 * 29);
  for (double& x : dataset) x = rng.uniform(-2.5, 2.5);
  AutoencoderModel m = make_autoencoder(29, 2, dataset, 6, 1);
  std::vector<double> theta(dataset.begin(), dataset.begin() + 29);
  std::vector<double> back = destandardize(m, standardize(m, theta));
  for (std::size_t i = 0; i < 29; ++i) {
    CHECK(std::abs(back[i] - theta[i]) < 1e-10);
  }
}

TEST_CASE("compression: coverage iterations") {
  CHECK(coverage_iterations(2500, 5, 0.99) == 2301);
  CHECK(coverage_iterations(100, 100, 0.99) == 1);
  CHECK(coverage_iterations(100, 5, 0.99) == 90);
  CHECK_THROWS_AS(coverage_iterations(10, 11, 0.99), Error);
  CHECK_THROWS_AS(coverage_iterations(10, 5, 1.5), Error);
}

TEST_CASE("compression: tape and plain autoencoder paths agree") {
  Rng rng(7);
  std::vector<double> dataset(5 * 29);
  for (double& x : dataset) x = rng.uniform(-2.5, 2.5);
  AutoencoderModel m = make_autoencoder(29, 3, dataset, 5, 2);

  std::vector<double> theta(dataset.begin() + 29, dataset.begin() + 58);
  Tape tape;
  AutoencoderVars vars = autoencoder_leaves(tape, m);
  Var z = encode_on_tape(m, vars, theta);
  Var rebuilt = decode_on_tape(m, vars, z);

  std::vector<double> z_plain = encode(m, theta);
  std::vector<double> rebuilt_plain = decode(m, z_plain);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(z.value()[i] == doctest::Approx(z_plain[i]).epsilon(1e-12));
  }
  for (std::size_t i = 0; i < 29; ++i) {
    CHECK(rebuilt.value()[i] == doctest::Approx(rebuilt_plain[i]).epsilon(1e-12));
  }
}

TEST_CASE("compression: a training step touches only the autoencoder") {
  ToyDataset d = make_toy_dataset(4, 3, 10, 11);
  std::vector<double> flat_before = d.flat;
  AutoencoderModel m = make_autoencoder(29, 2, d.flat, 4, 3);
  AutoencoderModel before = m;

  TrainConfig c = toy_config(LossKind::opc, 1);
  c.inner_iterations = 1;
  c.coverage_confidence = 0.5;  // one outer iteration at batch 2 of 4
  std::vector<LossLogEntry> log = run_toy_training(m, d, c);
  CHECK(log.size() == coverage_iterations(4, 2, 0.5) * 1);

  CHECK(d.flat == flat_before);  // dataset untouched
  bool changed = false;
  for (std::size_t t = 0; t < m.encoder.size(); ++t) {
    for (std::size_t i = 0; i < m.encoder[t].size(); ++i) {
      if (m.encoder[t][i] != before.encoder[t][i]) changed = true;
    }
  }
  CHECK(changed);
  CHECK(m.standardize_mean == before.standardize_mean);
}

TEST_CASE("compression: occupancy loss falls over the first training steps") {
  // whole 10-policy toy as one batch so the first 50 steps optimize a
  // fixed objective
  std::size_t wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ToyDataset d = make_toy_dataset(10, 3, 15, derive_seed(100, seed));
    AutoencoderModel m = make_autoencoder(29, 2, d.flat, 10, derive_seed(101, seed));
    TrainConfig c = toy_config(LossKind::opc, seed);
    c.batch_size = 10;
    c.inner_iterations = 50;
    c.coverage_confidence = 0.5;  // one outer pass
    c.learning_rate = 3e-3;
    std::vector<LossLogEntry> log = run_toy_training(m, d, c);
    REQUIRE(log.size() >= 50);
    double early = 0.0, late = 0.0;
    for (std::size_t i = 0; i < 5; ++i) early += log[i].loss;
    for (std::size_t i = 45; i < 50; ++i) late += log[i].loss;
    if (late < early) ++wins;
  }
  CHECK(wins >= 8);
}

TEST_CASE("compression: duplicated-policy batch gradient equals the single-policy one") {
  ToyDataset d = make_toy_dataset(1, 2, 8, 21);
  AutoencoderModel m = make_autoencoder(29, 2, d.flat, 1, 5);
  Rng rng(23);
  Tensor probe({16, 2});
  for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = rng.uniform(-1.0, 1.0);

  auto grads_for = [&](std::size_t copies) {
    Tape tape;
    AutoencoderVars vars = autoencoder_leaves(tape, m);
    std::vector<std::vector<double>> originals(copies, d.params[0]);
    std::vector<Var> decoded;
    for (std::size_t i = 0; i < copies; ++i) {
      decoded.push_back(decode_on_tape(m, vars, encode_on_tape(m, vars, d.params[0])));
    }
    Var loss = action_matching_loss(d.arch, originals, decoded, probe);
    Gradient g = tape.backward(loss, vars.all);
    std::vector<double> flat;
    for (const Var& v : vars.all) {
      const Tensor& t = g.at(v);
      flat.insert(flat.end(), t.data(), t.data() + t.size());
    }
    return flat;
  };
  std::vector<double> g1 = grads_for(1);
  std::vector<double> g3 = grads_for(3);
  REQUIRE(g1.size() == g3.size());
  for (std::size_t i = 0; i < g1.size(); ++i) {
    CHECK(g3[i] == doctest::Approx(g1[i]).epsilon(1e-12));
  }
}

TEST_CASE("compression: training is reproducible") {
  ToyDataset d = make_toy_dataset(6, 3, 10, 31);
  TrainConfig c = toy_config(LossKind::opc, 9);
  c.coverage_confidence = 0.9;

  AutoencoderModel m1 = make_autoencoder(29, 2, d.flat, 6, 7);
  std::vector<LossLogEntry> log1 = run_toy_training(m1, d, c);
  AutoencoderModel m2 = make_autoencoder(29, 2, d.flat, 6, 7);
  std::vector<LossLogEntry> log2 = run_toy_training(m2, d, c);

  REQUIRE(log1.size() == log2.size());
  CHECK(log1.size() ==
        coverage_iterations(6, 2, 0.9) * c.inner_iterations);
  for (std::size_t i = 0; i < log1.size(); ++i) {
    CHECK(log1[i].loss == log2[i].loss);
  }
  for (std::size_t t = 0; t < m1.decoder.size(); ++t) {
    for (std::size_t i = 0; i < m1.decoder[t].size(); ++i) {
      CHECK(m1.decoder[t][i] == m2.decoder[t][i]);
    }
  }
}

TEST_CASE("compression: apc training path runs and logs") {
  ToyDataset d = make_toy_dataset(5, 3, 10, 41);
  AutoencoderModel m = make_autoencoder(29, 2, d.flat, 5, 11);
  TrainConfig c = toy_config(LossKind::apc, 3);
  c.coverage_confidence = 0.9;
  std::vector<LossLogEntry> log = run_toy_training(m, d, c);
  CHECK(log.size() == coverage_iterations(5, 2, 0.9) * c.inner_iterations);
  for (const LossLogEntry& e : log) CHECK(std::isfinite(e.loss));
}

TEST_CASE("compression: grid evaluation") {
  ToyDataset d = make_toy_dataset(4, 2, 10, 51);
  AutoencoderModel m = make_autoencoder(29, 2, d.flat, 4, 13);
  MountainCar env;

  GridSpec one;
  one.cells_per_axis = 1;
  std::vector<GridCell> single = grid_eval(m, d.arch, env, "speed", one, 1, 3);
  REQUIRE(single.size() == 1);
  CHECK(single[0].z == std::vector<double>{0.0, 0.0});  // midpoint of [-3, 3]
  CHECK(std::isfinite(single[0].mean_return));

  GridSpec grid;
  grid.cells_per_axis = 3;
  std::vector<GridCell> cells = grid_eval(m, d.arch, env, "speed", grid, 2, 3);
  CHECK(cells.size() == 9);
  for (const GridCell& c : cells) {
    CHECK(c.z.size() == 2);
    CHECK(std::isfinite(c.mean_return));
  }
}
