#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"

namespace {

namespace fs = std::filesystem;

std::string opc_bin() {
  const char* bin = std::getenv("OPC_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "OPC_BIN must point at the opc binary");
  return bin;
}

fs::path work_dir() {
  fs::path dir = fs::temp_directory_path() / "opc_cli_tests";
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args) {
  std::string cmd = opc_bin() + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("cli: gen is deterministic and idempotent") {
  fs::path dir = work_dir();
  fs::path a = dir / "bank_a.opcb";
  std::string cmd = "gen --env mc --count 30 --seed 0 --out " + q(a);
  CHECK(run(cmd) == 0);
  std::string first_bank = slurp(a);
  std::string first_manifest = slurp(a.string() + ".manifest.json");
  CHECK(run(cmd) == 0);  // rerun overwrites with identical bytes
  CHECK(slurp(a) == first_bank);
  CHECK(slurp(a.string() + ".manifest.json") == first_manifest);

  fs::path c = dir / "bank_c.opcb";
  CHECK(run("gen --env mc --count 30 --seed 1 --out " + q(c)) == 0);
  CHECK(slurp(c) != first_bank);
}

TEST_CASE("cli: exit codes") {
  fs::path dir = work_dir();
  // config error: unknown environment
  CHECK(run("gen --env hopper --count 5 --seed 0 --out " + q(dir / "x.opcb")) == 2);
  // config error: missing required option
  CHECK(run("gen --env mc --count 5 --seed 0") == 2);
  // missing artifact
  CHECK(run("rollout --bank " + q(dir / "does_not_exist.opcb") + " --out " +
            q(dir / "x.opct")) == 3);
  // unknown subcommand
  CHECK(run("frobnicate") == 2);
}

TEST_CASE("cli: curate emits matching id sets for both methods") {
  fs::path dir = work_dir();
  fs::path bank = dir / "curate_bank.opcb";
  fs::path traj = dir / "curate_traj.opct";
  fs::path opc_csv = dir / "scores_opc.csv";
  fs::path apc_csv = dir / "scores_apc.csv";
  REQUIRE(run("gen --env reacher --count 24 --seed 0 --out " + q(bank)) == 0);
  REQUIRE(run("rollout --bank " + q(bank) + " --per-policy 3 --seed 0 --out " +
              q(traj)) == 0);
  REQUIRE(run("curate --bank " + q(bank) + " --traj " + q(traj) +
              " --method opc --percentile 0.25 --seed 0 --reference-subset 8 "
              "--particles 300 --out " + q(opc_csv)) == 0);
  REQUIRE(run("curate --bank " + q(bank) + " --traj " + q(traj) +
              " --method apc --percentile 0.25 --seed 0 --k-n 3 --probe-states 64 "
              "--out " + q(apc_csv)) == 0);

  // identical policy id columns, independent scores
  std::ifstream fa(opc_csv), fb(apc_csv);
  std::string la, lb;
  std::getline(fa, la);
  std::getline(fb, lb);
  CHECK(la == lb);  // same header
  std::size_t rows = 0;
  while (std::getline(fa, la) && std::getline(fb, lb)) {
    CHECK(la.substr(0, la.find(',')) == lb.substr(0, lb.find(',')));
    ++rows;
  }
  CHECK(rows == 24);
}

TEST_CASE("cli: flags override preset values") {
  fs::path dir = work_dir();
  fs::path preset_dir = dir / "presets";
  fs::create_directories(preset_dir);
  {
    std::ofstream p(preset_dir / "tiny.conf");
    p << "# test preset\ncount = 7\nseed = 3\n";
  }
  fs::path a = dir / "preset_bank.opcb";
  CHECK(run("gen --env mc --presets-dir " + q(preset_dir) + " --preset tiny --out " +
            q(a)) == 0);
  // preset count applies
  fs::path direct = dir / "direct_bank.opcb";
  CHECK(run("gen --env mc --count 7 --seed 3 --out " + q(direct)) == 0);
  CHECK(slurp(a) == slurp(direct));

  // explicit flag wins over the preset value
  fs::path b = dir / "preset_bank_override.opcb";
  CHECK(run("gen --env mc --presets-dir " + q(preset_dir) +
            " --preset tiny --count 9 --out " + q(b)) == 0);
  fs::path direct9 = dir / "direct_bank9.opcb";
  CHECK(run("gen --env mc --count 9 --seed 3 --out " + q(direct9)) == 0);
  CHECK(slurp(b) == slurp(direct9));

  CHECK(run("gen --env mc --presets-dir " + q(preset_dir) + " --preset nope --out " +
            q(dir / "zz.opcb")) == 2);
}

TEST_CASE("cli: shipped pgpe presets parse") {
  const char* presets = std::getenv("OPC_PRESETS");
  REQUIRE_MESSAGE(presets != nullptr, "OPC_PRESETS must point at the presets dir");
  for (const std::string name :
       {"pgpe_mc_standard", "pgpe_mc_left", "pgpe_mc_speed", "pgpe_mc_height",
        "pgpe_reacher", "pgpe_ws_mc", "pgpe_ws_reacher", "scale_desk", "scale_paper"}) {
    CHECK(fs::exists(fs::path(presets) / (name + ".conf")));
  }
}
