#include <cstdint>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "opc/error.hpp"
#include "opc/pipeline.hpp"
#include "opc/rng.hpp"
#include "opc/store.hpp"

using namespace opc;

namespace {

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "opc_store_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

TEST_CASE("store: policy bank round trip is bit exact") {
  PolicyBank bank = generate_bank("mc", 100, 0);
  std::string path = (temp_dir() / "bank.opcb").string();
  save_policy_bank(path, bank);
  PolicyBank loaded = load_policy_bank(path);
  CHECK(loaded.env_name == "mc");
  CHECK(loaded.count == 100);
  CHECK(loaded.generation_seed == 0);
  CHECK(loaded.weights == bank.weights);  // bit-identical doubles
}

TEST_CASE("store: wrong magic is an unrecognized format") {
  std::string path = (temp_dir() / "not_a_bank.opcb").string();
  write_text_file(path, "plainly not a container");
  CHECK_THROWS_WITH_AS(load_policy_bank(path), doctest::Contains("unrecognized"),
                       Error);

  // a trajectory archive is not a policy bank
  PolicyBank bank = generate_bank("reacher", 3, 1);
  TrajectoryArchive archive = rollout_bank(bank, 2, 0);
  std::string tpath = (temp_dir() / "archive.opct").string();
  save_trajectory_archive(tpath, archive);
  CHECK_THROWS_WITH_AS(load_policy_bank(tpath), doctest::Contains("unrecognized"),
                       Error);
}

TEST_CASE("store: archive index for 10 policies x 20 trajectories") {
  PolicyBank bank = generate_bank("reacher", 10, 2);
  TrajectoryArchive archive = rollout_bank(bank, 20, 3);
  CHECK(archive.count() == 200);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(archive.indices_of(i).size() == 20);
  }

  std::string path = (temp_dir() / "archive200.opct").string();
  save_trajectory_archive(path, archive);
  TrajectoryArchive loaded = load_trajectory_archive(path);
  CHECK(loaded.states == archive.states);
  CHECK(loaded.actions == archive.actions);
  CHECK(loaded.episode_seeds == archive.episode_seeds);

  // trajectories reconstruct with the states/actions invariant intact
  Trajectory t = loaded.trajectory(57);
  CHECK(t.states.size() / loaded.state_dim == t.actions.size() / loaded.action_dim + 1);
}

TEST_CASE("store: single-byte corruption is detected") {
  PolicyBank bank = generate_bank("mc", 5, 7);
  std::string path = (temp_dir() / "bank_corrupt.opcb").string();
  save_policy_bank(path, bank);
  std::vector<std::uint8_t> bytes = read_bytes(path);
  // probe positions across the payload, including header and data bytes
  for (std::size_t pos : {std::size_t{5}, std::size_t{20}, bytes.size() / 2,
                          bytes.size() - 9}) {
    std::vector<std::uint8_t> corrupted = bytes;
    corrupted[pos] ^= 0x01;
    write_bytes(path, corrupted);
    CHECK_THROWS_AS(load_policy_bank(path), Error);
  }
  write_bytes(path, bytes);
  CHECK(load_policy_bank(path).count == 5);
}

TEST_CASE("store: version mismatch is explicit") {
  PolicyBank bank = generate_bank("mc", 2, 9);
  std::string path = (temp_dir() / "bank_version.opcb").string();
  save_policy_bank(path, bank);
  std::vector<std::uint8_t> bytes = read_bytes(path);
  bytes[4] = 99;  // version field follows the 4-byte magic
  std::uint64_t checksum = fnv1a(bytes.data(), bytes.size() - 8);
  for (std::size_t i = 0; i < 8; ++i) {
    bytes[bytes.size() - 8 + i] = static_cast<std::uint8_t>(checksum >> (8 * i));
  }
  write_bytes(path, bytes);
  CHECK_THROWS_WITH_AS(load_policy_bank(path), doctest::Contains("version"), Error);
}

TEST_CASE("store: autoencoder model round trip is bit exact") {
  Rng rng(11);
  std::vector<double> dataset(8 * 29);
  for (double& x : dataset) x = rng.uniform(-2.5, 2.5);
  AutoencoderModel m = make_autoencoder(29, 2, dataset, 8, 4);
  std::string path = (temp_dir() / "model.opcm").string();
  save_autoencoder(path, m);
  AutoencoderModel loaded = load_autoencoder(path);
  CHECK(loaded.input_dim == 29);
  CHECK(loaded.latent_dim == 2);
  CHECK(loaded.standardize_mean == m.standardize_mean);
  REQUIRE(loaded.encoder.size() == m.encoder.size());
  for (std::size_t t = 0; t < m.encoder.size(); ++t) {
    CHECK(loaded.encoder[t].shape() == m.encoder[t].shape());
    for (std::size_t i = 0; i < m.encoder[t].size(); ++i) {
      CHECK(loaded.encoder[t][i] == m.encoder[t][i]);
    }
  }
  // decode agrees bit for bit
  std::vector<double> z = {0.3, -0.7};
  CHECK(decode(loaded, z) == decode(m, z));
}

TEST_CASE("store: score csv round trip") {
  ScoreTable table;
  table.method = "opc";
  Rng rng(13);
  table.scores.resize(40);
  for (double& s : table.scores) s = rng.uniform(-3.0, 3.0);
  table.refresh_bounds();
  CuratedDataset curated = threshold(table, 0.1);

  std::string path = (temp_dir() / "scores.csv").string();
  write_score_csv(path, table, curated);
  ScoreCsv loaded = read_score_csv(path);
  CHECK(loaded.table.scores == table.scores);  // %.17g round-trips doubles
  CHECK(loaded.retained == curated.retained);
}

TEST_CASE("store: file checksum changes with content") {
  std::string a = (temp_dir() / "check_a.txt").string();
  std::string b = (temp_dir() / "check_b.txt").string();
  write_text_file(a, "contents one");
  write_text_file(b, "contents two");
  CHECK(file_checksum(a) != file_checksum(b));
  CHECK(file_checksum(a) == file_checksum(a));
}
