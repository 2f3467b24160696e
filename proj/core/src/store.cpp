#include "opc/store.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "opc/error.hpp"

namespace opc {

namespace {

constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n,
                    std::uint64_t h = kFnvOffset) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= kFnvPrime;
  }
  return h;
}

class Writer {
 public:
  explicit Writer(const char magic[4]) {
    buf_.insert(buf_.end(), magic, magic + 4);
    put_u32(kVersion);
  }

  void put_u32(std::uint32_t v) { put_fixed(v); }
  void put_u64(std::uint64_t v) { put_fixed(v); }
  void put_f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_fixed(bits);
  }
  void put_string(const std::string& s) {
    put_u64(s.size());
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void put_f64_span(std::span<const double> v) {
    put_u64(v.size());
    for (double x : v) put_f64(x);
  }
  void put_u64_span(std::span<const std::size_t> v) {
    put_u64(v.size());
    for (std::size_t x : v) put_u64(x);
  }

  // write-temp-then-rename so readers only ever see complete files
  void commit(const std::string& path) {
    std::uint64_t checksum = fnv1a(buf_.data(), buf_.size());
    put_fixed(checksum);
    std::string tmp = path + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) fail_missing("cannot write file: " + tmp);
      out.write(reinterpret_cast<const char*>(buf_.data()),
                static_cast<std::streamsize>(buf_.size()));
      if (!out) fail_missing("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
  }

 private:
  template <class T>
  void put_fixed(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::string& path, const char magic[4]) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_missing("cannot open file: " + path);
    buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    if (buf_.size() < 16) fail_missing("truncated file: " + path);
    if (std::memcmp(buf_.data(), magic, 4) != 0) {
      fail_missing("unrecognized format in " + path + " (bad magic)");
    }
    std::uint64_t stored_le = 0;
    for (std::size_t i = 0; i < 8; ++i) {
      stored_le |= static_cast<std::uint64_t>(buf_[buf_.size() - 8 + i]) << (8 * i);
    }
    if (fnv1a(buf_.data(), buf_.size() - 8) != stored_le) {
      fail_missing("checksum mismatch in " + path + " (corrupt file)");
    }
    end_ = buf_.size() - 8;
    pos_ = 4;
    std::uint32_t version = get_u32();
    if (version != kVersion) {
      fail_missing("unsupported version " + std::to_string(version) + " in " + path);
    }
  }

  std::uint32_t get_u32() { return static_cast<std::uint32_t>(get_fixed(4)); }
  std::uint64_t get_u64() { return get_fixed(8); }
  double get_f64() {
    std::uint64_t bits = get_fixed(8);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string get_string() {
    std::uint64_t n = get_u64();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<double> get_f64_vector() {
    std::uint64_t n = get_u64();
    need(n * 8);
    std::vector<double> v(n);
    for (std::uint64_t i = 0; i < n; ++i) v[i] = get_f64();
    return v;
  }
  std::vector<std::size_t> get_u64_vector() {
    std::uint64_t n = get_u64();
    need(n * 8);
    std::vector<std::size_t> v(n);
    for (std::uint64_t i = 0; i < n; ++i) v[i] = get_u64();
    return v;
  }

 private:
  void need(std::uint64_t n) {
    if (pos_ + n > end_) fail_missing("truncated payload in " + path_);
  }
  std::uint64_t get_fixed(std::size_t bytes) {
    need(bytes);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < bytes; ++i) {
      v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    }
    pos_ += bytes;
    return v;
  }
  std::string path_;
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
};

}  // namespace

std::span<const double> PolicyBank::policy(std::size_t id) const {
  std::size_t n = param_count(arch);
  if (id >= count) fail_missing("policy bank: no policy " + std::to_string(id));
  return std::span<const double>(weights.data() + id * n, n);
}

Trajectory TrajectoryArchive::trajectory(std::size_t index) const {
  Trajectory t;
  t.episode_seed = episode_seeds[index];
  t.states.assign(states.begin() + state_offsets[index] * state_dim,
                  states.begin() + state_offsets[index + 1] * state_dim);
  t.actions.assign(actions.begin() + action_offsets[index] * action_dim,
                   actions.begin() + action_offsets[index + 1] * action_dim);
  return t;
}

std::vector<std::size_t> TrajectoryArchive::indices_of(std::size_t policy_id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < policy_ids.size(); ++i) {
    if (policy_ids[i] == policy_id) out.push_back(i);
  }
  return out;
}

void TrajectoryArchive::append(std::size_t policy_id, const Trajectory& traj) {
  if (state_offsets.empty()) {
    state_offsets.push_back(0);
    action_offsets.push_back(0);
  }
  policy_ids.push_back(policy_id);
  episode_seeds.push_back(traj.episode_seed);
  states.insert(states.end(), traj.states.begin(), traj.states.end());
  actions.insert(actions.end(), traj.actions.begin(), traj.actions.end());
  state_offsets.push_back(states.size() / state_dim);
  action_offsets.push_back(actions.size() / action_dim);
}

void save_policy_bank(const std::string& path, const PolicyBank& bank) {
  Writer w("OPCB");
  w.put_string(bank.env_name);
  w.put_u64(bank.arch.input_dim);
  w.put_u64(bank.arch.action_dim);
  w.put_u64(bank.arch.hidden1);
  w.put_u64(bank.arch.hidden2);
  w.put_u64(bank.generation_seed);
  w.put_u64(bank.count);
  w.put_f64_span(bank.weights);
  w.commit(path);
}

PolicyBank load_policy_bank(const std::string& path) {
  Reader r(path, "OPCB");
  PolicyBank bank;
  bank.env_name = r.get_string();
  bank.arch.input_dim = r.get_u64();
  bank.arch.action_dim = r.get_u64();
  bank.arch.hidden1 = r.get_u64();
  bank.arch.hidden2 = r.get_u64();
  bank.generation_seed = r.get_u64();
  bank.count = r.get_u64();
  bank.weights = r.get_f64_vector();
  if (bank.weights.size() != bank.count * param_count(bank.arch)) {
    fail_missing("policy bank " + path + ": weight matrix does not match header");
  }
  return bank;
}

void save_trajectory_archive(const std::string& path, const TrajectoryArchive& a) {
  Writer w("OPCT");
  w.put_string(a.env_name);
  w.put_u64(a.state_dim);
  w.put_u64(a.action_dim);
  w.put_u64_span(a.policy_ids);
  w.put_u64(a.episode_seeds.size());
  for (std::uint64_t s : a.episode_seeds) w.put_u64(s);
  w.put_u64_span(a.state_offsets);
  w.put_u64_span(a.action_offsets);
  w.put_f64_span(a.states);
  w.put_f64_span(a.actions);
  w.commit(path);
}

TrajectoryArchive load_trajectory_archive(const std::string& path) {
  Reader r(path, "OPCT");
  TrajectoryArchive a;
  a.env_name = r.get_string();
  a.state_dim = r.get_u64();
  a.action_dim = r.get_u64();
  a.policy_ids = r.get_u64_vector();
  std::uint64_t n_seeds = r.get_u64();
  a.episode_seeds.resize(n_seeds);
  for (std::uint64_t i = 0; i < n_seeds; ++i) a.episode_seeds[i] = r.get_u64();
  a.state_offsets = r.get_u64_vector();
  a.action_offsets = r.get_u64_vector();
  a.states = r.get_f64_vector();
  a.actions = r.get_f64_vector();
  if (a.policy_ids.size() + 1 != a.state_offsets.size() ||
      a.policy_ids.size() != a.episode_seeds.size() ||
      a.state_offsets.back() * a.state_dim != a.states.size() ||
      a.action_offsets.back() * a.action_dim != a.actions.size()) {
    fail_missing("trajectory archive " + path + ": inconsistent index");
  }
  return a;
}

void save_autoencoder(const std::string& path, const AutoencoderModel& m) {
  Writer w("OPCM");
  w.put_u64(m.input_dim);
  w.put_u64(m.latent_dim);
  w.put_u64(m.hidden1);
  w.put_u64(m.hidden2);
  w.put_f64_span(m.standardize_mean);
  w.put_f64_span(m.standardize_std);
  auto put_layers = [&w](const std::vector<Tensor>& layers) {
    w.put_u64(layers.size());
    for (const Tensor& t : layers) {
      w.put_u64(t.rank() == 2 ? t.shape()[0] : 1);
      w.put_u64(t.rank() == 2 ? t.shape()[1] : t.shape()[0]);
      w.put_u64(t.rank());
      w.put_f64_span(t.span());
    }
  };
  put_layers(m.encoder);
  put_layers(m.decoder);
  w.commit(path);
}

AutoencoderModel load_autoencoder(const std::string& path) {
  Reader r(path, "OPCM");
  AutoencoderModel m;
  m.input_dim = r.get_u64();
  m.latent_dim = r.get_u64();
  m.hidden1 = r.get_u64();
  m.hidden2 = r.get_u64();
  m.standardize_mean = r.get_f64_vector();
  m.standardize_std = r.get_f64_vector();
  auto get_layers = [&r, &path]() {
    std::uint64_t n = r.get_u64();
    std::vector<Tensor> layers;
    for (std::uint64_t i = 0; i < n; ++i) {
      std::uint64_t rows = r.get_u64();
      std::uint64_t cols = r.get_u64();
      std::uint64_t rank = r.get_u64();
      std::vector<double> data = r.get_f64_vector();
      if (rank == 2) {
        if (data.size() != rows * cols) fail_missing("model " + path + ": bad layer");
        layers.push_back(Tensor({rows, cols}, std::move(data)));
      } else {
        if (data.size() != cols) fail_missing("model " + path + ": bad layer");
        layers.push_back(Tensor({cols}, std::move(data)));
      }
    }
    return layers;
  };
  m.encoder = get_layers();
  m.decoder = get_layers();
  if (m.standardize_mean.size() != m.input_dim ||
      m.standardize_std.size() != m.input_dim) {
    fail_missing("model " + path + ": standardization stats do not match dimension");
  }
  return m;
}

std::uint64_t file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_missing("cannot open file for checksum: " + path);
  std::uint64_t h = kFnvOffset;
  char chunk[4096];
  while (in.read(chunk, sizeof(chunk)) || in.gcount() > 0) {
    h = fnv1a(reinterpret_cast<const std::uint8_t*>(chunk),
              static_cast<std::size_t>(in.gcount()), h);
    if (!in) break;
  }
  return h;
}

// ---- CSV ----

namespace {
std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

void write_score_csv(const std::string& path, const ScoreTable& table,
                     const CuratedDataset& curated) {
  std::vector<char> retained(table.scores.size(), 0);
  for (std::size_t id : curated.retained) retained[id] = 1;
  std::ostringstream out;
  out << "policy_id,score,retained\n";
  for (std::size_t i = 0; i < table.scores.size(); ++i) {
    out << i << "," << format_double(table.scores[i]) << ","
        << static_cast<int>(retained[i]) << "\n";
  }
  write_text_file(path, out.str());
}

ScoreCsv read_score_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_missing("cannot open score table: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("policy_id,score,retained", 0) != 0) {
    fail_missing("score table " + path + ": unexpected header");
  }
  ScoreCsv csv;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t c1 = line.find(',');
    std::size_t c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      fail_missing("score table " + path + ": malformed row '" + line + "'");
    }
    std::size_t id = std::stoull(line.substr(0, c1));
    double score = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    int flag = std::stoi(line.substr(c2 + 1));
    if (id != csv.table.scores.size()) {
      fail_missing("score table " + path + ": ids must be dense and ascending");
    }
    csv.table.scores.push_back(score);
    if (flag) csv.retained.push_back(id);
  }
  csv.table.refresh_bounds();
  return csv;
}

void write_loss_csv(const std::string& path, std::span<const LossLogEntry> log) {
  std::ostringstream out;
  out << "outer,inner,loss\n";
  for (const LossLogEntry& e : log) {
    out << e.outer << "," << e.inner << "," << format_double(e.loss) << "\n";
  }
  write_text_file(path, out.str());
}

void write_grid_csv(const std::string& path, std::span<const GridCell> cells) {
  std::ostringstream out;
  std::size_t dim = cells.empty() ? 0 : cells.front().z.size();
  for (std::size_t d = 0; d < dim; ++d) out << "z" << d << ",";
  out << "mean_return\n";
  for (const GridCell& c : cells) {
    for (double z : c.z) out << format_double(z) << ",";
    out << format_double(c.mean_return) << "\n";
  }
  write_text_file(path, out.str());
}

void write_curve_csv(const std::string& path, std::span<const CampaignCsvRow> rows) {
  std::ostringstream out;
  out << "seed,episode,return\n";
  for (const CampaignCsvRow& r : rows) {
    out << r.seed << "," << r.episodes << "," << format_double(r.mean_return) << "\n";
  }
  write_text_file(path, out.str());
}

void write_curve_summary_csv(const std::string& path,
                             std::span<const std::size_t> episodes,
                             std::span<const double> mean,
                             std::span<const double> ci_half_width) {
  std::ostringstream out;
  out << "episode,mean_return,ci_lo,ci_hi\n";
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    out << episodes[i] << "," << format_double(mean[i]) << ","
        << format_double(mean[i] - ci_half_width[i]) << ","
        << format_double(mean[i] + ci_half_width[i]) << "\n";
  }
  write_text_file(path, out.str());
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail_missing("cannot write file: " + tmp);
    out << contents;
    if (!out) fail_missing("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace opc
