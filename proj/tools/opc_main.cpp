// opc: pipeline driver for policy-population generation, information-
// theoretic curation, occupancy-matching compression, and latent policy
// search. Every stage reads/writes artifacts on disk and records a
// manifest with its exact configuration and input checksums.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "opc/compression.hpp"
#include "opc/curation.hpp"
#include "opc/envs.hpp"
#include "opc/error.hpp"
#include "opc/pgpe.hpp"
#include "opc/pipeline.hpp"
#include "opc/rng.hpp"
#include "opc/store.hpp"
#include "opc/thread_pool.hpp"

namespace {

using opc::Error;
using opc::fail_config;
using opc::fail_missing;

// Key-value options with flags > config file > preset precedence.
class Options {
 public:
  void set_flag(const std::string& key, std::string value) {
    flags_[key] = std::move(value);
  }
  void load_file(const std::string& path, bool preset) {
    std::ifstream in(path);
    if (!in) {
      fail_config((preset ? std::string("preset") : std::string("config")) +
                  " file not found: " + path);
    }
    auto& layer = preset ? preset_ : file_;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        if (line.find_first_not_of(" \t\r") != std::string::npos) {
          fail_config(path + ":" + std::to_string(line_no) +
                      ": expected 'key = value'");
        }
        continue;
      }
      auto trim = [](std::string s) {
        std::size_t b = s.find_first_not_of(" \t\r");
        std::size_t e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      layer[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
  }

  std::optional<std::string> raw(const std::string& key) const {
    for (const auto* layer : {&flags_, &file_, &preset_}) {
      auto it = layer->find(key);
      if (it != layer->end()) return it->second;
    }
    return std::nullopt;
  }

  std::string get(const std::string& key, const std::string& fallback) const {
    return raw(key).value_or(fallback);
  }
  std::string require(const std::string& key) const {
    auto v = raw(key);
    if (!v) fail_config("missing required option --" + key);
    return *v;
  }
  double get_double(const std::string& key, double fallback) const {
    auto v = raw(key);
    if (!v) return fallback;
    try {
      return std::stod(*v);
    } catch (...) {
      fail_config("option --" + key + ": '" + *v + "' is not a number");
    }
  }
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    auto v = raw(key);
    if (!v) return fallback;
    try {
      return std::stoull(*v);
    } catch (...) {
      fail_config("option --" + key + ": '" + *v + "' is not an integer");
    }
  }
  bool get_bool(const std::string& key, bool fallback) const {
    auto v = raw(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    fail_config("option --" + key + ": '" + *v + "' is not a boolean");
  }

  // resolved view for the manifest
  std::map<std::string, std::string> resolved() const {
    std::map<std::string, std::string> out = preset_;
    for (const auto& [k, v] : file_) out[k] = v;
    for (const auto& [k, v] : flags_) out[k] = v;
    return out;
  }

 private:
  std::map<std::string, std::string> preset_, file_, flags_;
};

std::string preset_dir(const Options& opt) {
  if (auto v = opt.raw("presets-dir")) return *v;
  if (const char* env = std::getenv("OPC_PRESETS")) return env;
  return "presets";
}

// Registers one subcommand's option surface; every value lands in the
// Options layers so precedence stays uniform.
void add_keys(CLI::App* cmd, Options& opt, const std::vector<std::string>& keys) {
  cmd->add_option_function<std::string>(
      "--presets-dir", [&opt](const std::string& v) { opt.set_flag("presets-dir", v); },
      "directory holding preset .conf files");
  cmd->add_option_function<std::string>(
      "--preset",
      [&opt](const std::string& v) {
        opt.load_file(preset_dir(opt) + "/" + v + ".conf", true);
      },
      "named preset (lowest precedence)");
  cmd->add_option_function<std::string>(
      "--config", [&opt](const std::string& v) { opt.load_file(v, false); },
      "key = value config file");
  cmd->add_option_function<std::string>(
      "--threads", [&opt](const std::string& v) { opt.set_flag("threads", v); },
      "worker cap; 1 guarantees bitwise reproducibility");
  for (const std::string& key : keys) {
    cmd->add_option_function<std::string>(
        "--" + key, [&opt, key](const std::string& v) { opt.set_flag(key, v); });
  }
}

void apply_threads(const Options& opt) {
  std::size_t hw = std::thread::hardware_concurrency();
  opc::set_thread_count(static_cast<std::size_t>(opt.get_u64("threads", hw ? hw : 1)));
}

void write_manifest(const std::string& out_path, const std::string& command,
                    const Options& opt,
                    const std::vector<std::pair<std::string, std::string>>& inputs,
                    const std::vector<std::string>& outputs,
                    const std::map<std::string, std::string>& extra = {}) {
  nlohmann::json manifest;
  manifest["command"] = command;
  nlohmann::json config = nlohmann::json::object();
  for (const auto& [k, v] : opt.resolved()) config[k] = v;
  for (const auto& [k, v] : extra) config[k] = v;
  manifest["config"] = config;
  nlohmann::json in = nlohmann::json::object();
  for (const auto& [name, path] : inputs) {
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(opc::file_checksum(path)));
    in[name] = nlohmann::json{{"path", path}, {"checksum", hex}};
  }
  manifest["inputs"] = in;
  manifest["outputs"] = outputs;
  opc::write_text_file(out_path + ".manifest.json", manifest.dump(2) + "\n");
}

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
  std::vector<std::uint64_t> seeds;
  std::size_t pos = 0;
  while (pos < spec.size()) {
    std::size_t comma = spec.find(',', pos);
    std::string part = spec.substr(
        pos, comma == std::string::npos ? spec.size() - pos : comma - pos);
    std::size_t dash = part.find('-');
    try {
      if (dash == std::string::npos) {
        seeds.push_back(std::stoull(part));
      } else {
        std::uint64_t lo = std::stoull(part.substr(0, dash));
        std::uint64_t hi = std::stoull(part.substr(dash + 1));
        if (hi < lo) fail_config("--seeds: bad range '" + part + "'");
        for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
      }
    } catch (const Error&) {
      throw;
    } catch (...) {
      fail_config("--seeds: cannot parse '" + part + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (seeds.empty()) fail_config("--seeds: no seeds given");
  return seeds;
}

opc::PolicyBank load_bank_checked(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    fail_missing("policy bank not found: " + path + " (run 'opc gen' first)");
  }
  return opc::load_policy_bank(path);
}

opc::TrajectoryArchive load_archive_checked(const std::string& path,
                                            const opc::PolicyBank& bank) {
  if (!std::filesystem::exists(path)) {
    fail_missing("trajectory archive not found: " + path + " (run 'opc rollout' first)");
  }
  opc::TrajectoryArchive archive = opc::load_trajectory_archive(path);
  if (archive.env_name != bank.env_name) {
    fail_config("archive environment '" + archive.env_name +
                "' does not match bank environment '" + bank.env_name + "'");
  }
  return archive;
}

opc::AutoencoderModel load_model_checked(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    fail_missing("model not found: " + path + " (run 'opc train-ae' first)");
  }
  return opc::load_autoencoder(path);
}

// ---- subcommands ----

int cmd_gen(const Options& opt) {
  apply_threads(opt);
  std::string env = opt.require("env");
  std::string out = opt.require("out");
  std::size_t count = opt.get_u64("count", 2500);
  std::uint64_t seed = opt.get_u64("seed", 0);
  opc::PolicyBank bank = opc::generate_bank(env, count, seed);
  opc::save_policy_bank(out, bank);
  write_manifest(out, "gen", opt, {}, {out});
  std::cout << "wrote " << out << ": " << count << " policies, "
            << opc::param_count(bank.arch) << " weights each\n";
  return 0;
}

int cmd_rollout(const Options& opt) {
  apply_threads(opt);
  std::string bank_path = opt.require("bank");
  std::string out = opt.require("out");
  std::size_t per_policy = opt.get_u64("per-policy", 20);
  std::uint64_t seed = opt.get_u64("seed", 0);
  opc::PolicyBank bank = load_bank_checked(bank_path);
  opc::TrajectoryArchive archive = opc::rollout_bank(bank, per_policy, seed);
  opc::save_trajectory_archive(out, archive);
  std::map<std::string, std::string> extra;
  if (bank.env_name == "reacher") {
    extra["reacher_torque_gain"] = std::to_string(opc::ReacherParams{}.torque_gain);
  }
  write_manifest(out, "rollout", opt, {{"bank", bank_path}}, {out}, extra);
  std::cout << "wrote " << out << ": " << archive.count() << " trajectories\n";
  return 0;
}

int cmd_curate(const Options& opt) {
  apply_threads(opt);
  std::string bank_path = opt.require("bank");
  std::string traj_path = opt.require("traj");
  std::string out = opt.require("out");
  std::string method = opt.get("method", "opc");
  double percentile = opt.get_double("percentile", 0.05);
  std::uint64_t seed = opt.get_u64("seed", 0);

  opc::PolicyBank bank = load_bank_checked(bank_path);
  opc::TrajectoryArchive archive = load_archive_checked(traj_path, bank);

  opc::ScoreTable table;
  if (method == "opc") {
    opc::OpcCurationConfig config;
    config.gmm_components = opt.get_u64("gmm-components", config.gmm_components);
    config.downsample_stride = opt.get_u64("downsample-stride", config.downsample_stride);
    config.particles_per_policy = opt.get_u64("particles", config.particles_per_policy);
    config.reference_subset = opt.get_u64("reference-subset", config.reference_subset);
    config.seed = seed;
    table = opc::curate_opc(bank, archive, config);
  } else if (method == "apc") {
    opc::ApcCurationConfig config;
    config.probe_count = opt.get_u64("probe-states", config.probe_count);
    config.k_n = opt.get_u64("k-n", config.k_n);
    config.seed = seed;
    table = opc::curate_apc(bank, archive, config);
  } else {
    fail_config("--method must be 'opc' or 'apc', got '" + method + "'");
  }
  opc::CuratedDataset curated = opc::threshold(table, percentile);
  opc::write_score_csv(out, table, curated);
  write_manifest(out, "curate", opt, {{"bank", bank_path}, {"traj", traj_path}}, {out});
  std::cout << "wrote " << out << ": method " << method << ", retained "
            << curated.retained.size() << " of " << bank.count << "\n";
  return 0;
}

int cmd_train_ae(const Options& opt) {
  apply_threads(opt);
  std::string bank_path = opt.require("bank");
  std::string traj_path = opt.require("traj");
  std::string scores_path = opt.require("scores");
  std::string out = opt.require("out");
  std::string loss_log_path = opt.get("loss-log", out + ".loss.csv");
  std::size_t latent = opt.get_u64("latent", 2);
  std::string loss_kind = opt.get("loss", "opc");

  opc::PolicyBank bank = load_bank_checked(bank_path);
  opc::TrajectoryArchive archive = load_archive_checked(traj_path, bank);
  if (!std::filesystem::exists(scores_path)) {
    fail_missing("score table not found: " + scores_path + " (run 'opc curate' first)");
  }
  opc::ScoreCsv scores = opc::read_score_csv(scores_path);
  if (scores.table.scores.size() != bank.count) {
    fail_config("score table covers " + std::to_string(scores.table.scores.size()) +
                " policies but the bank holds " + std::to_string(bank.count));
  }
  if (scores.retained.empty()) fail_config("score table retains no policies");
  if (latent != 1 && latent != 2 && latent != 3 && latent != 5 && latent != 8) {
    std::cerr << "warning: latent dim " << latent
              << " is outside the supported set {1, 2, 3, 5, 8}\n";
  }

  opc::TrainConfig config;
  config.batch_size = opt.get_u64("batch", config.batch_size);
  config.inner_iterations = opt.get_u64("inner", config.inner_iterations);
  config.knn = opt.get_u64("knn", config.knn);
  config.learning_rate = opt.get_double("lr", config.learning_rate);
  if (loss_kind == "opc") {
    config.loss = opc::LossKind::opc;
  } else if (loss_kind == "apc") {
    config.loss = opc::LossKind::apc;
  } else {
    fail_config("--loss must be 'opc' or 'apc', got '" + loss_kind + "'");
  }
  config.trajectories_per_policy =
      opt.get_u64("traj-per-policy", config.trajectories_per_policy);
  config.coverage_confidence = opt.get_double("confidence", config.coverage_confidence);
  config.max_particles = opt.get_u64("max-particles", config.max_particles);
  config.probe_states = opt.get_u64("probe-states", config.probe_states);
  config.include_squash_correction = opt.get_bool("squash-correction", true);
  config.seed = opt.get_u64("seed", 0);

  // standardization statistics come from the curated dataset
  std::size_t n = opc::param_count(bank.arch);
  std::vector<double> curated_flat;
  curated_flat.reserve(scores.retained.size() * n);
  for (std::size_t id : scores.retained) {
    auto p = bank.policy(id);
    curated_flat.insert(curated_flat.end(), p.begin(), p.end());
  }
  opc::AutoencoderModel model = opc::make_autoencoder(
      n, latent, curated_flat, scores.retained.size(), opc::derive_seed(config.seed, 0xae));

  auto env = opc::make_environment(bank.env_name);
  opc::StateNormalizer norm = opc::StateNormalizer::from_spec(env->spec());
  auto fetch_params = [&](std::size_t id) {
    auto p = bank.policy(id);
    return std::vector<double>(p.begin(), p.end());
  };
  auto fetch_trajectories = [&](std::size_t id) {
    std::vector<opc::Trajectory> out_trajs;
    for (std::size_t idx : archive.indices_of(id)) {
      out_trajs.push_back(archive.trajectory(idx));
    }
    return out_trajs;
  };

  std::vector<opc::LossLogEntry> log;
  try {
    log = opc::train(model, bank.arch, norm, scores.retained, fetch_params,
                     fetch_trajectories, config,
                     [](std::size_t done, std::size_t total) {
                       if (done % 25 == 0 || done == total) {
                         std::cout << "train-ae: " << done << "/" << total
                                   << " batches\r" << std::flush;
                       }
                     });
  } catch (const Error&) {
    // keep the last consistent parameters for inspection
    opc::save_autoencoder(out + ".partial", model);
    std::cerr << "\ntrain-ae: aborted; partial model saved to " << out << ".partial\n";
    throw;
  }
  std::cout << "\n";
  opc::save_autoencoder(out, model);
  opc::write_loss_csv(loss_log_path, log);
  write_manifest(out, "train-ae", opt,
                 {{"bank", bank_path}, {"traj", traj_path}, {"scores", scores_path}},
                 {out, loss_log_path});
  std::cout << "wrote " << out << " (latent dim " << latent << ", " << log.size()
            << " steps logged)\n";
  return 0;
}

int cmd_optimize(const Options& opt) {
  apply_threads(opt);
  std::string task = opt.require("task");
  std::string out = opt.require("out");
  bool param_space = opt.get_bool("param-space", false);
  std::vector<std::uint64_t> seeds = parse_seeds(opt.get("seeds", "0"));

  opc::PgpeConfig config;
  config.population = opt.get_u64("population", config.population);
  config.lr_center = opt.get_double("lr-center", config.lr_center);
  config.lr_std = opt.get_double("lr-std", config.lr_std);
  config.init_sigma = opt.get_double("init-sigma", config.init_sigma);
  config.decay = opt.get_double("decay", config.decay);
  config.adam_beta1 = opt.get_double("beta1", config.adam_beta1);
  config.adam_beta2 = opt.get_double("beta2", config.adam_beta2);
  config.episode_budget = opt.get_u64("budget", config.episode_budget);
  bool warm = opt.get_bool("warm-start", false);
  std::size_t warm_samples = opt.get_u64("warm-start-samples", 0);

  opc::ReturnEvaluator evaluate;
  std::size_t dim = 0;
  std::vector<std::pair<std::string, std::string>> inputs;
  std::string env_name = opt.require("env");
  auto env = opc::make_environment(env_name);
  env->task_id(task);  // validate early
  opc::PolicyArch arch = opc::arch_for(*env);
  std::vector<double> pool;
  std::size_t pool_rows = 0;
  if (param_space) {
    dim = opc::param_count(arch);
    evaluate = opc::make_parameter_space_evaluator(arch, env_name, task);
  } else {
    std::string model_path = opt.require("model");
    opc::AutoencoderModel model = load_model_checked(model_path);
    inputs.emplace_back("model", model_path);
    if (opc::param_count(arch) != model.input_dim) {
      fail_config("model expects " + std::to_string(model.input_dim) +
                  " policy weights but env '" + env_name + "' needs " +
                  std::to_string(opc::param_count(arch)));
    }
    dim = model.latent_dim;
    evaluate = opc::make_decoder_evaluator(model, arch, env_name, task);
    if (warm && opt.get_bool("warm-start-from-dataset", false)) {
      // candidate codes encoded from the curated dataset
      std::string bank_path = opt.require("bank");
      std::string scores_path = opt.require("scores");
      opc::PolicyBank bank = load_bank_checked(bank_path);
      opc::ScoreCsv scores = opc::read_score_csv(scores_path);
      inputs.emplace_back("bank", bank_path);
      inputs.emplace_back("scores", scores_path);
      for (std::size_t id : scores.retained) {
        std::vector<double> z = opc::encode(model, bank.policy(id));
        pool.insert(pool.end(), z.begin(), z.end());
      }
      pool_rows = scores.retained.size();
    }
  }

  opc::Campaign campaign = opc::run_campaign(config, evaluate, dim, seeds, warm,
                                             warm_samples, pool, pool_rows);
  std::vector<opc::CampaignCsvRow> rows;
  for (std::size_t s = 0; s < campaign.seeds.size(); ++s) {
    for (const opc::CurvePoint& p : campaign.per_seed[s]) {
      rows.push_back({campaign.seeds[s], p.episodes, p.mean_return});
    }
  }
  opc::write_curve_csv(out, rows);
  std::vector<std::size_t> episodes;
  std::vector<double> means;
  for (const opc::CurvePoint& p : campaign.mean) {
    episodes.push_back(p.episodes);
    means.push_back(p.mean_return);
  }
  std::string summary = out + ".summary.csv";
  opc::write_curve_summary_csv(summary, episodes, means, campaign.ci_half_width);
  write_manifest(out, "optimize", opt, inputs, {out, summary});
  double final_mean = means.empty() ? 0.0 : means.back();
  std::cout << "wrote " << out << " (" << seeds.size() << " seeds, final mean return "
            << final_mean << ")\n";
  return 0;
}

int cmd_grid_eval(const Options& opt) {
  apply_threads(opt);
  std::string model_path = opt.require("model");
  std::string env_name = opt.require("env");
  std::string task = opt.require("task");
  std::string out = opt.require("out");
  opc::AutoencoderModel model = load_model_checked(model_path);
  auto env = opc::make_environment(env_name);
  env->task_id(task);
  opc::PolicyArch arch = opc::arch_for(*env);
  if (opc::param_count(arch) != model.input_dim) {
    fail_config("model expects " + std::to_string(model.input_dim) +
                " policy weights but env '" + env_name + "' needs " +
                std::to_string(opc::param_count(arch)));
  }

  opc::GridSpec grid;
  grid.lo = opt.get_double("lo", grid.lo);
  grid.hi = opt.get_double("hi", grid.hi);
  grid.cells_per_axis = opt.get_u64("cells", 10);
  std::size_t episodes = opt.get_u64("episodes", 3);
  std::uint64_t seed = opt.get_u64("seed", 0);

  std::vector<opc::GridCell> cells =
      opc::grid_eval(model, arch, *env, task, grid, episodes, seed);
  opc::write_grid_csv(out, cells);
  write_manifest(out, "grid-eval", opt, {{"model", model_path}}, {out});
  std::cout << "wrote " << out << " (" << cells.size() << " cells)\n";
  return 0;
}

int cmd_report(const Options& opt) {
  apply_threads(opt);
  std::string bank_path = opt.require("bank");
  std::string task = opt.require("task");
  std::string opc_path = opt.require("scores-opc");
  std::string apc_path = opt.require("scores-apc");
  std::string out = opt.require("out");
  std::size_t bins = opt.get_u64("bins", 30);
  std::uint64_t seed = opt.get_u64("seed", 0);

  opc::PolicyBank bank = load_bank_checked(bank_path);
  for (const std::string& p : {opc_path, apc_path}) {
    if (!std::filesystem::exists(p)) fail_missing("score table not found: " + p);
  }
  opc::ScoreCsv opc_scores = opc::read_score_csv(opc_path);
  opc::ScoreCsv apc_scores = opc::read_score_csv(apc_path);
  if (opc_scores.table.scores.size() != bank.count ||
      apc_scores.table.scores.size() != bank.count) {
    fail_config("score tables do not cover the full bank");
  }

  std::vector<double> returns = opc::evaluate_returns(bank, task, seed);
  double lo = returns[0], hi = returns[0];
  for (double r : returns) {
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  if (hi <= lo) hi = lo + 1.0;
  std::vector<char> in_opc(bank.count, 0), in_apc(bank.count, 0);
  for (std::size_t id : opc_scores.retained) in_opc[id] = 1;
  for (std::size_t id : apc_scores.retained) in_apc[id] = 1;

  std::vector<std::size_t> count_all(bins, 0), count_opc(bins, 0), count_apc(bins, 0);
  for (std::size_t i = 0; i < bank.count; ++i) {
    auto bin = static_cast<std::size_t>((returns[i] - lo) / (hi - lo) *
                                        static_cast<double>(bins));
    if (bin >= bins) bin = bins - 1;
    ++count_all[bin];
    if (in_opc[i]) ++count_opc[bin];
    if (in_apc[i]) ++count_apc[bin];
  }
  std::ostringstream csv;
  csv << "bin_lo,bin_hi,count_all,count_opc_retained,count_apc_retained\n";
  for (std::size_t b = 0; b < bins; ++b) {
    double blo = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
    double bhi = lo + (hi - lo) * static_cast<double>(b + 1) / static_cast<double>(bins);
    csv << blo << "," << bhi << "," << count_all[b] << "," << count_opc[b] << ","
        << count_apc[b] << "\n";
  }
  opc::write_text_file(out, csv.str());
  write_manifest(out, "report", opt,
                 {{"bank", bank_path}, {"scores-opc", opc_path}, {"scores-apc", apc_path}},
                 {out});
  std::cout << "wrote " << out << " (" << bins << " bins over returns [" << lo << ", "
            << hi << "])\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"occupancy-based policy compression pipeline"};
  app.require_subcommand(1);

  Options gen_opt, rollout_opt, curate_opt, train_opt, optimize_opt, grid_opt, report_opt;

  CLI::App* gen = app.add_subcommand("gen", "generate a random policy population");
  add_keys(gen, gen_opt, {"env", "count", "seed", "out"});
  CLI::App* roll = app.add_subcommand("rollout", "collect reward-free trajectories");
  add_keys(roll, rollout_opt, {"bank", "per-policy", "seed", "out"});
  CLI::App* curate = app.add_subcommand("curate", "score the population and threshold");
  add_keys(curate, curate_opt,
           {"bank", "traj", "method", "percentile", "seed", "out", "gmm-components",
            "downsample-stride", "particles", "reference-subset", "probe-states", "k-n"});
  CLI::App* train = app.add_subcommand("train-ae", "train the weight-space autoencoder");
  add_keys(train, train_opt,
           {"bank", "traj", "scores", "latent", "loss", "seed", "out", "loss-log",
            "batch", "inner", "knn", "lr", "traj-per-policy", "confidence",
            "max-particles", "probe-states", "squash-correction"});
  CLI::App* optimize = app.add_subcommand("optimize", "latent policy search with pgpe");
  add_keys(optimize, optimize_opt,
           {"model", "env", "task", "seeds", "out", "population", "lr-center", "lr-std",
            "init-sigma", "decay", "beta1", "beta2", "budget", "warm-start",
            "warm-start-samples", "warm-start-from-dataset", "param-space", "bank",
            "scores"});
  CLI::App* grid = app.add_subcommand("grid-eval", "evaluate a latent grid");
  add_keys(grid, grid_opt,
           {"model", "env", "task", "lo", "hi", "cells", "episodes", "seed", "out"});
  CLI::App* report = app.add_subcommand("report", "curation comparison histograms");
  add_keys(report, report_opt,
           {"bank", "task", "scores-opc", "scores-apc", "bins", "seed", "out"});

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_gen(gen_opt);
    if (roll->parsed()) return cmd_rollout(rollout_opt);
    if (curate->parsed()) return cmd_curate(curate_opt);
    if (train->parsed()) return cmd_train_ae(train_opt);
    if (optimize->parsed()) return cmd_optimize(optimize_opt);
    if (grid->parsed()) return cmd_grid_eval(grid_opt);
    if (report->parsed()) return cmd_report(report_opt);
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
