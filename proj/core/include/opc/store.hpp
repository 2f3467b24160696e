#ifndef OPC_STORE_HPP_
#define OPC_STORE_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "opc/compression.hpp"
#include "opc/curation.hpp"
#include "opc/envs.hpp"
#include "opc/policy.hpp"

namespace opc {

// Random policy population: one flat weight row per policy.
struct PolicyBank {
  std::string env_name;
  PolicyArch arch;
  std::uint64_t generation_seed = 0;
  std::size_t count = 0;
  std::vector<double> weights;  // count x param_count(arch)

  std::span<const double> policy(std::size_t id) const;
};

// Packed episode rollouts with a per-policy index. States are stored raw;
// normalization happens at read time.
struct TrajectoryArchive {
  std::string env_name;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::vector<std::size_t> policy_ids;       // per trajectory, ascending
  std::vector<std::uint64_t> episode_seeds;  // per trajectory
  std::vector<std::size_t> state_offsets;    // count + 1, rows into states
  std::vector<std::size_t> action_offsets;   // count + 1, rows into actions
  std::vector<double> states;
  std::vector<double> actions;

  std::size_t count() const { return policy_ids.size(); }
  Trajectory trajectory(std::size_t index) const;
  std::vector<std::size_t> indices_of(std::size_t policy_id) const;
  void append(std::size_t policy_id, const Trajectory& traj);
};

// Binary containers: 4-byte magic, u32 version, little-endian payload,
// trailing 64-bit checksum over everything before it. A version or magic
// mismatch is an explicit error, never a reinterpretation.
void save_policy_bank(const std::string& path, const PolicyBank& bank);
PolicyBank load_policy_bank(const std::string& path);

void save_trajectory_archive(const std::string& path, const TrajectoryArchive& archive);
TrajectoryArchive load_trajectory_archive(const std::string& path);

void save_autoencoder(const std::string& path, const AutoencoderModel& model);
AutoencoderModel load_autoencoder(const std::string& path);

// FNV-1a over the file bytes; manifests record these for inputs.
std::uint64_t file_checksum(const std::string& path);

// ---- human-facing CSV exports ----

void write_score_csv(const std::string& path, const ScoreTable& table,
                     const CuratedDataset& curated);
struct ScoreCsv {
  ScoreTable table;
  std::vector<std::size_t> retained;
};
ScoreCsv read_score_csv(const std::string& path);

void write_loss_csv(const std::string& path, std::span<const LossLogEntry> log);
void write_grid_csv(const std::string& path, std::span<const GridCell> cells);

struct CampaignCsvRow {
  std::uint64_t seed = 0;
  std::size_t episodes = 0;
  double mean_return = 0.0;
};
void write_curve_csv(const std::string& path, std::span<const CampaignCsvRow> rows);
void write_curve_summary_csv(const std::string& path,
                             std::span<const std::size_t> episodes,
                             std::span<const double> mean,
                             std::span<const double> ci_half_width);

void write_text_file(const std::string& path, const std::string& contents);

}  // namespace opc

#endif  // OPC_STORE_HPP_
