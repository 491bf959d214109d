#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparsevote/core.hpp"
#include "sparsevote/datagen.hpp"
#include "sparsevote/debias.hpp"
#include "sparsevote/harness.hpp"
#include "sparsevote/protocol.hpp"
#include "sparsevote/theory.hpp"

// Binary container layout (all integers and doubles little-endian):
//
//   magic   "SPVT"           4 bytes
//   version u32              currently 1
//   kind    u32              1 = shards, 2 = ground truth, 3 = precision
//
//   shards:     count u32, d u32, then per shard
//               machine_id u32, n u32, X as n*d f64 row-major, y as n f64
//   truth:      d u32, K u32, theta* as d f64, support as K u32,
//               theta_min f64, c_omega f64
//   precision:  d u32, scale u8 (0 = paper_2n, 1 = literature_n),
//               lambda_omega f64, nonconverged u32, tau_sq as d f64,
//               then per row: nnz u32 followed by nnz pairs (col u32, value f64)

namespace sparsevote::io {

namespace detail {

constexpr char kMagic[4] = {'S', 'P', 'V', 'T'};
constexpr std::uint32_t kVersion = 1;

enum class Kind : std::uint32_t { shards = 1, truth = 2, precision = 3 };

inline std::vector<std::uint8_t> header(Kind kind) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  wire::put_u32(out, kVersion);
  wire::put_u32(out, static_cast<std::uint32_t>(kind));
  return out;
}

inline void check_header(wire::Reader& rd, Kind kind) {
  for (char c : kMagic)
    if (rd.u8() != static_cast<std::uint8_t>(c)) throw Error("container: bad magic");
  if (rd.u32() != kVersion) throw Error("container: unsupported version");
  if (rd.u32() != static_cast<std::uint32_t>(kind)) throw Error("container: wrong payload kind");
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void finish(const wire::Reader& rd) {
  if (!rd.done()) throw Error("container: trailing bytes");
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_shards(std::span<const DataShard> shards) {
  auto out = detail::header(detail::Kind::shards);
  const auto d = shards.empty() ? 0u : static_cast<std::uint32_t>(shards.front().X.cols());
  wire::put_u32(out, static_cast<std::uint32_t>(shards.size()));
  wire::put_u32(out, d);
  for (const auto& s : shards) {
    require(static_cast<std::uint32_t>(s.X.cols()) == d, "encode_shards: shards differ in d");
    require(s.X.rows() == s.y.size(), "encode_shards: X and y row counts differ");
    wire::put_u32(out, s.machine_id);
    wire::put_u32(out, static_cast<std::uint32_t>(s.X.rows()));
    for (Eigen::Index i = 0; i < s.X.rows(); ++i)
      for (Eigen::Index j = 0; j < s.X.cols(); ++j) wire::put_f64(out, s.X(i, j));
    for (Eigen::Index i = 0; i < s.y.size(); ++i) wire::put_f64(out, s.y[i]);
  }
  return out;
}

inline std::vector<DataShard> decode_shards(std::span<const std::uint8_t> buf) {
  wire::Reader rd(buf);
  detail::check_header(rd, detail::Kind::shards);
  const auto count = rd.u32();
  const auto d = rd.u32();
  std::vector<DataShard> shards(count);
  for (auto& s : shards) {
    s.machine_id = rd.u32();
    const auto n = rd.u32();
    s.X.resize(n, d);
    s.y.resize(n);
    for (std::uint32_t i = 0; i < n; ++i)
      for (std::uint32_t j = 0; j < d; ++j) s.X(i, j) = rd.f64();
    for (std::uint32_t i = 0; i < n; ++i) s.y[i] = rd.f64();
  }
  detail::finish(rd);
  return shards;
}

inline std::vector<std::uint8_t> encode_truth(const GroundTruth& gt) {
  auto out = detail::header(detail::Kind::truth);
  wire::put_u32(out, static_cast<std::uint32_t>(gt.theta_star.size()));
  wire::put_u32(out, static_cast<std::uint32_t>(gt.support.size()));
  for (Eigen::Index i = 0; i < gt.theta_star.size(); ++i) wire::put_f64(out, gt.theta_star[i]);
  for (auto i : gt.support) wire::put_u32(out, i);
  wire::put_f64(out, gt.theta_min);
  wire::put_f64(out, gt.c_omega);
  return out;
}

inline GroundTruth decode_truth(std::span<const std::uint8_t> buf) {
  wire::Reader rd(buf);
  detail::check_header(rd, detail::Kind::truth);
  GroundTruth gt;
  const auto d = rd.u32();
  const auto K = rd.u32();
  gt.theta_star.resize(d);
  for (std::uint32_t i = 0; i < d; ++i) gt.theta_star[i] = rd.f64();
  gt.support.resize(K);
  for (auto& i : gt.support) {
    i = rd.u32();
    require(i < d, "decode_truth: support index out of range");
  }
  gt.theta_min = rd.f64();
  gt.c_omega = rd.f64();
  detail::finish(rd);
  return gt;
}

inline std::vector<std::uint8_t> encode_precision(const PrecisionEstimate& p) {
  auto out = detail::header(detail::Kind::precision);
  const auto d = static_cast<std::uint32_t>(p.dim());
  wire::put_u32(out, d);
  wire::put_u8(out, p.scale == NodewiseScale::paper_2n ? 0 : 1);
  wire::put_f64(out, p.lambda_omega);
  wire::put_u32(out, static_cast<std::uint32_t>(p.nonconverged));
  for (Eigen::Index i = 0; i < p.tau_sq.size(); ++i) wire::put_f64(out, p.tau_sq[i]);
  for (Eigen::Index i = 0; i < p.omega_hat.outerSize(); ++i) {
    std::vector<std::pair<std::uint32_t, double>> row;
    for (SparseRows::InnerIterator it(p.omega_hat, i); it; ++it)
      row.emplace_back(static_cast<std::uint32_t>(it.col()), it.value());
    wire::put_u32(out, static_cast<std::uint32_t>(row.size()));
    for (const auto& [c, v] : row) {
      wire::put_u32(out, c);
      wire::put_f64(out, v);
    }
  }
  return out;
}

inline PrecisionEstimate decode_precision(std::span<const std::uint8_t> buf) {
  wire::Reader rd(buf);
  detail::check_header(rd, detail::Kind::precision);
  PrecisionEstimate p;
  const auto d = rd.u32();
  const auto scale = rd.u8();
  require(scale <= 1, "decode_precision: unknown nodewise scale");
  p.scale = scale == 0 ? NodewiseScale::paper_2n : NodewiseScale::literature_n;
  p.lambda_omega = rd.f64();
  p.nonconverged = static_cast<int>(rd.u32());
  p.tau_sq.resize(d);
  for (std::uint32_t i = 0; i < d; ++i) p.tau_sq[i] = rd.f64();
  std::vector<Eigen::Triplet<double>> entries;
  for (std::uint32_t i = 0; i < d; ++i) {
    const auto nnz = rd.u32();
    for (std::uint32_t k = 0; k < nnz; ++k) {
      const auto c = rd.u32();
      require(c < d, "decode_precision: column out of range");
      entries.emplace_back(static_cast<int>(i), static_cast<int>(c), rd.f64());
    }
  }
  detail::finish(rd);
  p.omega_hat.resize(d, d);
  p.omega_hat.setFromTriplets(entries.begin(), entries.end());
  p.omega_hat.makeCompressed();
  return p;
}

inline void save_shards(const std::filesystem::path& path, std::span<const DataShard> s) {
  detail::write_bytes(path, encode_shards(s));
}
inline std::vector<DataShard> load_shards(const std::filesystem::path& path) {
  return decode_shards(detail::read_bytes(path));
}
inline void save_truth(const std::filesystem::path& path, const GroundTruth& gt) {
  detail::write_bytes(path, encode_truth(gt));
}
inline GroundTruth load_truth(const std::filesystem::path& path) { return decode_truth(detail::read_bytes(path)); }
inline void save_precision(const std::filesystem::path& path, const PrecisionEstimate& p) {
  detail::write_bytes(path, encode_precision(p));
}
inline PrecisionEstimate load_precision(const std::filesystem::path& path) {
  return decode_precision(detail::read_bytes(path));
}

// ---------------------------------------------------------------------------
// CSV

/// Header x_1,...,x_d,y then one row per observation, full round-trip precision.
inline void write_shard_csv(std::ostream& os, const DataShard& s) {
  const auto d = s.X.cols();
  for (Eigen::Index j = 0; j < d; ++j) os << "x_" << (j + 1) << ',';
  os << "y\n";
  os << std::setprecision(17);
  for (Eigen::Index i = 0; i < s.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) os << s.X(i, j) << ',';
    os << s.y[i] << '\n';
  }
}

inline DataShard read_shard_csv(std::istream& is, std::uint32_t machine_id = 0) {
  std::string line;
  if (!std::getline(is, line)) throw Error("shard csv: missing header");
  std::size_t cols = 1;
  for (char c : line)
    if (c == ',') ++cols;
  require(cols >= 2, "shard csv: need at least one x column");
  std::vector<double> vals;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t k = 0;
    while (std::getline(ss, cell, ',')) {
      vals.push_back(std::stod(cell));
      ++k;
    }
    if (k != cols) throw Error("shard csv: ragged row");
    ++rows;
  }
  DataShard s;
  s.machine_id = machine_id;
  s.X.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols - 1));
  s.y.resize(static_cast<Eigen::Index>(rows));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j + 1 < cols; ++j) s.X(i, j) = vals[i * cols + j];
    s.y[i] = vals[i * cols + cols - 1];
  }
  return s;
}

inline const char* sweep_csv_header() {
  return "axis,value,scheme,f_mean,f_se,l2_mean,l2_se,oracle_l2_mean,bits_r1_mean,bits_r2_mean,reps";
}

inline void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows) {
  os << sweep_csv_header() << '\n' << std::setprecision(10);
  for (const auto& r : rows)
    os << r.axis << ',' << r.value << ',' << r.scheme << ',' << r.f_mean << ',' << r.f_se << ',' << r.l2_mean << ','
       << r.l2_se << ',' << r.oracle_l2_mean << ',' << r.bits_r1_mean << ',' << r.bits_r2_mean << ',' << r.reps
       << '\n';
}

inline std::vector<std::map<std::string, std::string>> read_csv_rows(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) return {};
  std::vector<std::string> head;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) head.push_back(c);
  }
  std::vector<std::map<std::string, std::string>> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string c;
    std::map<std::string, std::string> row;
    std::size_t k = 0;
    while (std::getline(ss, c, ',')) {
      if (k >= head.size()) throw Error("csv: row longer than header");
      row[head[k++]] = c;
    }
    if (k != head.size()) throw Error("csv: row shorter than header");
    out.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const FusionLog& f, const std::string& scheme, const Support& s_hat) {
  return {{"scheme", scheme},         {"rule", f.rule},   {"tau", f.tau},
          {"K", f.K},                 {"S_hat", s_hat},   {"votes_histogram", f.votes_histogram},
          {"bits_in", f.bits_in}};
}

inline nlohmann::json to_json(const ExperimentRecord& r) {
  nlohmann::json j;
  j["rep"] = r.rep;
  j["scheme"] = r.scheme;
  if (!std::isnan(r.grid_value)) j["grid_value"] = r.grid_value;
  j["S_hat"] = r.s_hat;
  j["f_measure"] = r.f_measure;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["l2_error"] = r.l2_error;
  j["l2_error_oracle"] = r.l2_error_oracle;
  j["bits_round1_per_machine"] = r.bits_round1_per_machine;
  j["bits_round1"] = r.bits_round1;
  j["bits_round2"] = r.bits_round2;
  j["wire_bytes_round1"] = r.wire_bytes_round1;
  j["wire_bytes_round2"] = r.wire_bytes_round2;
  j["wall_time"] = r.wall_time;
  j["flags"] = {{"empty_support", r.empty_support},
                {"round2_failed", r.round2_failed},
                {"nonconverged_fits", r.nonconverged_fits}};
  j["fusion"] = to_json(r.fusion, r.scheme, r.s_hat);
  return j;
}

inline nlohmann::json to_json(const theory::RegimeReport& rep) {
  return {{"snr_floor", rep.snr_floor},     {"m_lower", rep.m_lower}, {"m_upper", rep.m_upper},
          {"feasible", rep.feasible},       {"epsilon_tau", rep.epsilon_tau}, {"delta_R", rep.delta_R},
          {"epsilon_condition", rep.epsilon_condition}};
}

// ---------------------------------------------------------------------------
// Config

inline Scheme parse_scheme(const std::string& s) {
  if (s == "thresh_votes") return Scheme::thresh_votes;
  if (s == "top_L_votes") return Scheme::top_L_votes;
  if (s == "top_L_signs") return Scheme::top_L_signs;
  if (s == "bnm21") return Scheme::bnm21;
  if (s == "avg_deblasso") return Scheme::avg_deblasso;
  throw Error("unknown scheme: " + s);
}

inline SparsityMode parse_sparsity(const std::string& s) {
  if (s == "known") return SparsityMode::known;
  if (s == "unknown") return SparsityMode::unknown;
  throw Error("unknown sparsity mode: " + s);
}

inline SecondRound parse_second_round(const std::string& s) {
  if (s == "average") return SecondRound::average;
  if (s == "gram_exact") return SecondRound::gram_exact;
  if (s == "none") return SecondRound::none;
  throw Error("unknown second round: " + s);
}

inline TauMode parse_tau_mode(const std::string& s) {
  if (s == "sqrt_2_log_d") return TauMode::sqrt_2_log_d;
  if (s == "sqrt_2r_log_d") return TauMode::sqrt_2r_log_d;
  if (s == "explicit") return TauMode::explicit_value;
  throw Error("unknown tau mode: " + s);
}

inline NodewiseScale parse_nodewise_scale(const std::string& s) {
  if (s == "literature_n") return NodewiseScale::literature_n;
  if (s == "paper_2n") return NodewiseScale::paper_2n;
  throw Error("unknown nodewise scale: " + s);
}

inline SignEntry parse_sign_entry(const std::string& s) {
  if (s == "top_L") return SignEntry::top_L;
  if (s == "threshold") return SignEntry::threshold;
  throw Error("unknown sign entry rule: " + s);
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error("expected a boolean, got: " + v);
}

}  // namespace detail

/// Applies one config key. Keys are listed in README.md.
inline void apply_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& v) {
  try {
    if (key == "d") cfg.spec.d = std::stoi(v);
    else if (key == "K" || key == "k") cfg.spec.K = std::stoi(v);
    else if (key == "M" || key == "machines") cfg.spec.M = std::stoi(v);
    else if (key == "n") cfg.spec.n = std::stoi(v);
    else if (key == "r") cfg.spec.r = std::stod(v);
    else if (key == "corr_decay") cfg.spec.corr_decay = std::stod(v);
    else if (key == "sigma") cfg.spec.sigma = v == "from_r" ? std::optional<double>{} : std::optional{std::stod(v)};
    else if (key == "seed") cfg.spec.base_seed = std::stoull(v);
    else if (key == "scheme") cfg.scheme = parse_scheme(v);
    else if (key == "sparsity_mode") cfg.sparsity_mode = parse_sparsity(v);
    else if (key == "L" || key == "l") cfg.L = std::stoi(v);
    else if (key == "tau_mode") cfg.tau_mode = parse_tau_mode(v);
    else if (key == "tau") cfg.tau_explicit = std::stod(v);
    else if (key == "sign_entry") cfg.sign_entry = parse_sign_entry(v);
    else if (key == "lambda_mult") cfg.lambda_mult = std::stod(v);
    else if (key == "lambda_omega_mult") cfg.lambda_omega_mult = std::stod(v);
    else if (key == "lambda_sigma_scaling") cfg.lambda_sigma_scaling = detail::parse_bool(v);
    else if (key == "nodewise_scale") cfg.nodewise_scale = parse_nodewise_scale(v);
    else if (key == "second_round") cfg.second_round = parse_second_round(v);
    else if (key == "reps") cfg.reps = std::stoi(v);
    else if (key == "fixed_design") cfg.fixed_design = detail::parse_bool(v);
    else if (key == "precision_reuse") cfg.precision_reuse = detail::parse_bool(v);
    else if (key == "tau_votes") cfg.tau_votes = std::stod(v);
    else if (key == "avg_threshold_factor") cfg.avg_threshold_factor = std::stod(v);
    else if (key == "calibration_n") cfg.calibration_n = std::stoi(v);
    else if (key == "design_rows") cfg.design_rows = std::stoi(v);
    else if (key == "design_machines") cfg.design_machines = std::stoi(v);
    else if (key == "threads") cfg.threads = std::stoi(v);
    else throw Error("unknown config key: " + key);
  } catch (const std::logic_error&) {
    throw Error("bad value for config key " + key + ": " + v);
  }
}

/// key = value lines; '#' starts a comment.
inline void apply_config_stream(ExperimentConfig& cfg, std::istream& is) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key = value");
    apply_config_value(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
}

inline void apply_config_file(ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open config " + path.string());
  apply_config_stream(cfg, f);
}

}  // namespace sparsevote::io
