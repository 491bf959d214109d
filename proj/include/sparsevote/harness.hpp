#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "sparsevote/core.hpp"
#include "sparsevote/datagen.hpp"
#include "sparsevote/debias.hpp"
#include "sparsevote/fusion.hpp"
#include "sparsevote/lasso.hpp"
#include "sparsevote/protocol.hpp"

namespace sparsevote {

enum class Scheme { thresh_votes, top_L_votes, top_L_signs, bnm21, avg_deblasso };
enum class SparsityMode { known, unknown };
enum class TauMode { sqrt_2_log_d, sqrt_2r_log_d, explicit_value };
enum class SecondRound { average, gram_exact, none };
// How the signed scheme picks the indices it sends.
enum class SignEntry { top_L, threshold };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::thresh_votes: return "thresh_votes";
    case Scheme::top_L_votes: return "top_L_votes";
    case Scheme::top_L_signs: return "top_L_signs";
    case Scheme::bnm21: return "bnm21";
    case Scheme::avg_deblasso: return "avg_deblasso";
  }
  return "?";
}

inline const char* to_string(SparsityMode m) { return m == SparsityMode::known ? "known" : "unknown"; }

inline const char* to_string(SecondRound s) {
  switch (s) {
    case SecondRound::average: return "average";
    case SecondRound::gram_exact: return "gram_exact";
    case SecondRound::none: return "none";
  }
  return "?";
}

inline const char* to_string(TauMode t) {
  switch (t) {
    case TauMode::sqrt_2_log_d: return "sqrt_2_log_d";
    case TauMode::sqrt_2r_log_d: return "sqrt_2r_log_d";
    case TauMode::explicit_value: return "explicit";
  }
  return "?";
}

/// Everything that distinguishes one scheme run from another on the same
/// local fits.
struct SchemeVariant {
  Scheme scheme = Scheme::thresh_votes;
  int L = 0;  // 0 means L = K
  SparsityMode sparsity = SparsityMode::known;
  SecondRound second_round = SecondRound::average;
  TauMode tau_mode = TauMode::sqrt_2_log_d;
  double tau = 0.0;  // used when tau_mode == explicit_value
  SignEntry sign_entry = SignEntry::top_L;

  std::string label() const {
    std::string s = to_string(scheme);
    if (scheme == Scheme::top_L_votes || scheme == Scheme::top_L_signs) s += "(L=" + std::to_string(L) + ")";
    if (sparsity == SparsityMode::unknown) s += "[unknown_K]";
    if (scheme != Scheme::avg_deblasso && second_round != SecondRound::average) s += std::string("[") + to_string(second_round) + "]";
    return s;
  }
};

struct ExperimentConfig {
  ProblemSpec spec;
  Scheme scheme = Scheme::thresh_votes;
  SparsityMode sparsity_mode = SparsityMode::known;
  int L = 0;
  TauMode tau_mode = TauMode::sqrt_2_log_d;
  double tau_explicit = 0.0;
  SignEntry sign_entry = SignEntry::top_L;
  double lambda_mult = 8.0;        // lambda = lambda_mult sqrt(ln d / n)
  double lambda_omega_mult = 2.0;  // lambda_omega = lambda_omega_mult sqrt(ln d / n)
  bool lambda_sigma_scaling = false;
  NodewiseScale nodewise_scale = NodewiseScale::literature_n;
  SecondRound second_round = SecondRound::average;
  int reps = 100;
  bool fixed_design = true;
  bool precision_reuse = false;
  std::optional<double> tau_votes;          // unknown-K vote threshold, default 2 ln d
  double avg_threshold_factor = 11.0;       // unknown-K averaging threshold factor * ln d / n
  std::optional<int> calibration_n;         // n used to calibrate theta_min, default spec.n
  // Size of the generated fixed designs when larger than what the run needs,
  // so several sweeps can share one design, one Omega_hat and one theta*.
  std::optional<int> design_rows;
  std::optional<int> design_machines;
  int threads = 1;

  SchemeVariant variant() const {
    SchemeVariant v;
    v.scheme = scheme;
    v.L = L > 0 ? L : spec.K;
    v.sparsity = sparsity_mode;
    v.second_round = second_round;
    v.tau_mode = tau_mode;
    v.tau = tau_explicit;
    v.sign_entry = sign_entry;
    return v;
  }

  void validate() const {
    spec.validate();
    require(reps >= 1, "ExperimentConfig: reps must be positive");
    require(lambda_mult > 0 && lambda_omega_mult > 0, "ExperimentConfig: lambda multipliers must be positive");
    const bool top_l = scheme == Scheme::top_L_votes || scheme == Scheme::top_L_signs;
    if (top_l) {
      const int l = L > 0 ? L : spec.K;
      require(l <= spec.d, "ExperimentConfig: L must not exceed d");
      if (sparsity_mode == SparsityMode::known) require(l >= spec.K, "ExperimentConfig: L must be >= K for top-L");
    }
    if (tau_mode == TauMode::explicit_value) require(tau_explicit > 0, "ExperimentConfig: explicit tau must be positive");
    require(threads >= 1, "ExperimentConfig: threads must be positive");
  }
};

struct FusionLog {
  std::string rule;
  double tau = 0.0;
  int K = 0;
  std::vector<int> votes_histogram;  // votes_histogram[v] = #indices with V_i = v
  std::uint64_t bits_in = 0;
};

struct ExperimentRecord {
  std::uint64_t rep = 0;
  std::string scheme;
  double grid_value = std::numeric_limits<double>::quiet_NaN();
  Support s_hat;
  Vector theta_hat;
  double f_measure = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double l2_error = 0.0;
  double l2_error_oracle = 0.0;
  std::vector<std::uint64_t> bits_round1_per_machine;
  std::uint64_t bits_round1 = 0;
  std::uint64_t bits_round2 = 0;
  std::uint64_t wire_bytes_round1 = 0;
  std::uint64_t wire_bytes_round2 = 0;
  double wall_time = 0.0;  // seconds; the only non-deterministic field
  bool empty_support = false;
  bool round2_failed = false;
  int nonconverged_fits = 0;
  FusionLog fusion;

  double bits_round1_mean_per_machine() const {
    return bits_round1_per_machine.empty() ? 0.0
                                           : static_cast<double>(bits_round1) / bits_round1_per_machine.size();
  }
};

struct FMeasure {
  double f = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// F-measure of an estimated support against the true one. An empty
/// estimate has precision 0 and F = 0.
inline FMeasure f_measure(const Support& s_hat, const Support& s) {
  require(!s.empty(), "f_measure: true support must be nonempty");
  std::size_t hit = 0;
  for (auto i : s_hat)
    if (std::binary_search(s.begin(), s.end(), i)) ++hit;
  FMeasure out;
  out.recall = static_cast<double>(hit) / s.size();
  out.precision = s_hat.empty() ? 0.0 : static_cast<double>(hit) / s_hat.size();
  out.f = (out.precision + out.recall) > 0 ? 2.0 * out.precision * out.recall / (out.precision + out.recall) : 0.0;
  return out;
}

/// Pooled least squares on the true support, assembled from per-shard Gram
/// summaries.
inline Vector oracle_ls(std::span<const DataShard> shards, const Support& s) {
  require(!shards.empty(), "oracle_ls: no shards");
  std::vector<Message> msgs;
  msgs.reserve(shards.size());
  for (const auto& sh : shards) msgs.push_back(round2_gram(sh, s));
  return centralized_ls(msgs, s, static_cast<std::size_t>(shards.front().X.cols()));
}

/// A fixed set of machine designs with their precision estimates, ground
/// truth calibrated from them, and per-replication noise. Replications only
/// redraw the noise unless the config asks for fresh designs.
class Experiment {
 public:
  /// Grid-independent setting of one replication.
  struct View {
    int n = 0;
    int M = 0;
    double r = 0.0;
  };

  explicit Experiment(ExperimentConfig cfg, std::optional<int> rows = {}, std::optional<int> machines = {})
      : cfg_(std::move(cfg)) {
    cfg_.validate();
    rows_ = rows.value_or(cfg_.spec.n);
    machines_ = machines.value_or(cfg_.spec.M);
    require(rows_ >= cfg_.spec.n && machines_ >= cfg_.spec.M, "Experiment: rows/machines below the spec");
    designs_ = build_designs(0);
    calibrate();
  }

  const ExperimentConfig& config() const { return cfg_; }
  const GroundTruth& truth() const { return truth_; }
  int rows() const { return rows_; }
  int machines() const { return machines_; }
  View default_view() const { return {cfg_.spec.n, cfg_.spec.M, cfg_.spec.r}; }

  double sigma_for(double r) const { return cfg_.spec.sigma ? *cfg_.spec.sigma : 1.0 / std::sqrt(r); }

  /// theta* for SNR r. Support and signs never change; in the from_r noise
  /// convention the magnitudes do not change either.
  GroundTruth truth_for(double r) const {
    const int n_cal = cfg_.calibration_n.value_or(cfg_.spec.n);
    const double tmin = theta_min_from_snr(cfg_.spec.d, sigma_for(r), r, n_cal, c_omega_);
    GroundTruth gt = make_theta_star(cfg_.spec, tmin, derive_seed(cfg_.spec.base_seed, StreamTag::theta));
    gt.c_omega = c_omega_;
    return gt;
  }

  double c_omega() const { return c_omega_; }

  /// Computes the caches a view needs. Must be called before concurrent run().
  void prepare(const View& v) {
    require(v.n >= 1 && v.n <= rows_, "Experiment: view n outside generated rows");
    require(v.M >= 1 && v.M <= machines_, "Experiment: view M outside generated machines");
    if (!cfg_.fixed_design) return;
    prepared_for(designs_, v.n);
  }

  std::vector<ExperimentRecord> run(std::uint64_t rep, std::span<const SchemeVariant> variants, const View& v) const {
    if (cfg_.fixed_design) {
      const auto& cache = cache_.at(v.n);
      return run_on(designs_, cache, rep, variants, v);
    }
    // Fresh designs for every replication.
    auto designs = build_designs(rep + 1);
    std::map<int, NCache> local;
    const auto& cache = prepared_for(designs, v.n, &local);
    return run_on(designs, cache, rep, variants, v);
  }

  ExperimentRecord run(std::uint64_t rep) {
    const View v = default_view();
    prepare(v);
    const SchemeVariant var = cfg_.variant();
    return run(rep, std::span<const SchemeVariant>(&var, 1), v).front();
  }

 private:
  struct Machine {
    Matrix X;  // rows_ x d
    std::optional<PrecisionEstimate> full_precision;  // from all rows_
  };
  struct NCache {
    std::vector<PrecisionEstimate> own;  // per-n precision when not reused
    std::vector<Vector> c_diag;
    int nonconverged = 0;
  };

  double lambda_omega_for(int n) const {
    return cfg_.lambda_omega_mult * std::sqrt(std::log(static_cast<double>(cfg_.spec.d)) / n);
  }

  double lambda_for(int n, double sigma) const {
    const double base = cfg_.lambda_mult * std::sqrt(std::log(static_cast<double>(cfg_.spec.d)) / n);
    return cfg_.lambda_sigma_scaling ? base * sigma : base;
  }

  std::vector<Machine> build_designs(std::uint64_t design_round) const {
    auto shards = sample_shards(cfg_.spec, rows_, machines_, design_round);
    std::vector<Machine> out(shards.size());
    parallel_for(static_cast<int>(shards.size()), [&](int m) {
      out[m].X = std::move(shards[m].X);
      if (cfg_.precision_reuse || rows_ == cfg_.spec.n)
        out[m].full_precision =
            estimate_precision(out[m].X, lambda_omega_for(rows_), cfg_.nodewise_scale, LassoOptions{});
    });
    return out;
  }

  const NCache& prepared_for(std::vector<Machine>& designs, int n, std::map<int, NCache>* store = nullptr) const {
    auto& caches = store ? *store : cache_;
    if (auto it = caches.find(n); it != caches.end()) return it->second;
    NCache c;
    const bool use_full = n == rows_ || cfg_.precision_reuse;
    if (!use_full) c.own.resize(designs.size());
    c.c_diag.resize(designs.size());
    parallel_for(static_cast<int>(designs.size()), [&](int m) {
      auto Xn = designs[m].X.topRows(n);
      if (use_full) {
        if (!designs[m].full_precision)
          designs[m].full_precision = estimate_precision(designs[m].X, lambda_omega_for(rows_), cfg_.nodewise_scale);
      } else {
        c.own[m] = estimate_precision(Xn, lambda_omega_for(n), cfg_.nodewise_scale);
      }
      const auto& prec = use_full ? *designs[m].full_precision : c.own[m];
      c.c_diag[m] = sandwich_diagonal_from_design(prec.omega_hat, Xn);
    });
    for (std::size_t m = 0; m < designs.size(); ++m)
      c.nonconverged += use_full ? designs[m].full_precision->nonconverged : c.own[m].nonconverged;
    return caches.emplace(n, std::move(c)).first->second;
  }

  void calibrate() {
    // c_Omega over every generated machine, with Omega and Sigma from all rows.
    auto& cache = prepared_for(designs_, rows_);
    c_omega_ = compute_c_omega(std::span<const Vector>(cache.c_diag));
    truth_ = truth_for(cfg_.spec.r);
  }

  double tau_for(const SchemeVariant& v, double r) const {
    const double ld = std::log(static_cast<double>(cfg_.spec.d));
    switch (v.tau_mode) {
      case TauMode::sqrt_2_log_d: return std::sqrt(2.0 * ld);
      case TauMode::sqrt_2r_log_d: return std::sqrt(2.0 * r * ld);
      case TauMode::explicit_value: return v.tau;
    }
    return std::sqrt(2.0 * ld);
  }

  template <typename F>
  void parallel_for(int count, F&& fn) const {
    const int workers = std::min(cfg_.threads, count);
    if (workers <= 1) {
      for (int i = 0; i < count; ++i) fn(i);
      return;
    }
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (int i = w; i < count; i += workers) fn(i);
      });
    for (auto& t : pool) t.join();
  }

  std::vector<ExperimentRecord> run_on(const std::vector<Machine>& designs, const NCache& cache, std::uint64_t rep,
                                       std::span<const SchemeVariant> variants, const View& v) const {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const int d = cfg_.spec.d;
    const double sigma = sigma_for(v.r);
    const GroundTruth gt = truth_for(v.r);

    LocalFitParams params;
    params.lambda = lambda_for(v.n, sigma);
    params.lambda_omega = lambda_omega_for(v.n);
    params.sigma = sigma;
    params.scale = cfg_.nodewise_scale;

    // Round-1 local computation, shared by all variants.
    std::vector<DataShard> shards(static_cast<std::size_t>(v.M));
    std::vector<LocalFit> fits(static_cast<std::size_t>(v.M));
    for (int m = 0; m < v.M; ++m) {
      auto& sh = shards[m];
      sh.machine_id = static_cast<std::uint32_t>(m);
      sh.X = designs[m].X.topRows(v.n);
      GaussianStream gen(derive_seed(cfg_.spec.base_seed, StreamTag::noise, rep, static_cast<std::uint64_t>(m)));
      Vector w(rows_);
      for (int i = 0; i < rows_; ++i) w[i] = gen();
      sh.y = sh.X * gt.theta_star + sigma * w.head(v.n);
      const auto& prec = cache.own.empty() ? *designs[m].full_precision : cache.own[m];
      fits[m] = local_fit_with(sh.machine_id, sh.X, sh.y, prec, cache.c_diag[m], params);
    }
    int nonconverged = cache.nonconverged;
    for (const auto& f : fits)
      if (!f.lasso_converged) ++nonconverged;

    const Vector oracle = oracle_ls(shards, gt.support);
    const double oracle_err = (oracle - gt.theta_star).norm();
    const double shared_time = std::chrono::duration<double>(clock::now() - t0).count();

    std::vector<ExperimentRecord> out;
    for (const auto& var : variants) {
      const auto t1 = clock::now();
      ExperimentRecord rec = fuse(var, shards, fits, gt, v);
      rec.rep = rep;
      rec.l2_error_oracle = oracle_err;
      rec.nonconverged_fits = nonconverged;
      rec.wall_time = shared_time + std::chrono::duration<double>(clock::now() - t1).count();
      out.push_back(std::move(rec));
    }
    (void)d;
    return out;
  }

  ExperimentRecord fuse(const SchemeVariant& var, const std::vector<DataShard>& shards,
                        const std::vector<LocalFit>& fits, const GroundTruth& gt, const View& v) const {
    const auto d = static_cast<std::size_t>(cfg_.spec.d);
    const int K = cfg_.spec.K;
    const double ld = std::log(static_cast<double>(d));
    const double tau = tau_for(var, v.r);
    const int L = var.L > 0 ? var.L : K;
    const double tau_votes = cfg_.tau_votes.value_or(default_tau_votes(static_cast<double>(d)));

    ExperimentRecord rec;
    rec.scheme = var.label();
    CommLedger ledger(d);

    std::vector<Message> round1;
    round1.reserve(fits.size());
    for (const auto& f : fits) {
      switch (var.scheme) {
        case Scheme::thresh_votes:
        case Scheme::bnm21: round1.push_back(round1_thresh_votes(f, tau)); break;
        case Scheme::top_L_votes: round1.push_back(round1_top_L(f, L, false)); break;
        case Scheme::top_L_signs:
          round1.push_back(var.sign_entry == SignEntry::top_L ? round1_top_L(f, L, true)
                                                              : round1_thresh_signs(f.machine_id, f.xi_hat, tau));
          break;
        case Scheme::avg_deblasso: round1.push_back(round1_dense(f)); break;
      }
      ledger.record(round1.back(), 1);
    }

    Vector estimate = Vector::Zero(static_cast<Eigen::Index>(d));
    SupportEstimate s_hat;
    bool run_round2 = true;
    if (var.scheme == Scheme::avg_deblasso) {
      const AvgRule rule = var.sparsity == SparsityMode::known
                               ? AvgRule::top_k(K)
                               : AvgRule::above(cfg_.avg_threshold_factor * ld / v.n);
      AvgResult avg = avg_debiased(round1, rule);
      s_hat = std::move(avg.support);
      estimate = std::move(avg.estimate);
      run_round2 = false;
      rec.fusion.tau = rule.kind == AvgRule::Kind::threshold ? rule.threshold : 0.0;
    } else {
      const VoteTally t = tally(round1, d);
      const bool signs = var.scheme == Scheme::top_L_signs;
      if (var.scheme == Scheme::bnm21) {
        s_hat = select_majority(t, v.M);
      } else if (var.sparsity == SparsityMode::known) {
        s_hat = select_topk(t, K, signs);
      } else {
        s_hat = select_vote_threshold(t, tau_votes, signs);
      }
      int vmax = 0;
      for (int x : t.votes) vmax = std::max(vmax, x);
      rec.fusion.votes_histogram.assign(static_cast<std::size_t>(vmax) + 1, 0);
      for (int x : t.votes) ++rec.fusion.votes_histogram[static_cast<std::size_t>(x)];
      rec.fusion.tau = var.scheme == Scheme::top_L_votes ||
                               (var.scheme == Scheme::top_L_signs && var.sign_entry == SignEntry::top_L)
                           ? 0.0
                           : tau;
    }
    rec.fusion.rule = to_string(s_hat.rule);
    rec.fusion.K = K;
    rec.fusion.bits_in = ledger.round_bits(1);
    rec.s_hat = s_hat.indices;
    rec.empty_support = s_hat.indices.empty();

    if (run_round2 && !s_hat.indices.empty()) {
      try {
        std::vector<Message> round2;
        round2.reserve(shards.size());
        switch (var.second_round) {
          case SecondRound::average:
            for (const auto& sh : shards) round2.push_back(round2_restricted(sh, s_hat.indices));
            for (const auto& msg : round2) ledger.record(msg, 2);
            estimate = aggregate_round2(round2, s_hat.indices, d);
            break;
          case SecondRound::gram_exact:
            for (const auto& sh : shards) round2.push_back(round2_gram(sh, s_hat.indices));
            for (const auto& msg : round2) ledger.record(msg, 2);
            estimate = centralized_ls(round2, s_hat.indices, d);
            break;
          case SecondRound::none: break;
        }
      } catch (const Error&) {
        rec.round2_failed = true;
        estimate.setZero();
      }
    }

    rec.theta_hat = estimate;
    const FMeasure fm = f_measure(rec.s_hat, gt.support);
    rec.f_measure = fm.f;
    rec.precision = fm.precision;
    rec.recall = fm.recall;
    rec.l2_error = (estimate - gt.theta_star).norm();
    rec.bits_round1_per_machine = ledger.per_machine_bits(1, static_cast<std::uint32_t>(v.M));
    rec.bits_round1 = ledger.round_bits(1);
    rec.bits_round2 = ledger.round_bits(2);
    rec.wire_bytes_round1 = ledger.round_wire_bytes(1);
    rec.wire_bytes_round2 = ledger.round_wire_bytes(2);
    return rec;
  }

  ExperimentConfig cfg_;
  int rows_ = 0;
  int machines_ = 0;
  std::vector<Machine> designs_;
  mutable std::map<int, NCache> cache_;
  double c_omega_ = 0.0;
  GroundTruth truth_;
};

/// One replication of the configured scheme.
inline ExperimentRecord run_replication(const ExperimentConfig& cfg, std::uint64_t rep) {
  Experiment exp(cfg);
  return exp.run(rep);
}

enum class SweepAxis { r, n, M, L };

inline const char* to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::r: return "r";
    case SweepAxis::n: return "n";
    case SweepAxis::M: return "M";
    case SweepAxis::L: return "L";
  }
  return "?";
}

struct SweepRow {
  std::string axis;
  double value = 0.0;
  std::string scheme;
  double f_mean = 0.0;
  double f_se = 0.0;
  double l2_mean = 0.0;
  double l2_se = 0.0;
  double oracle_l2_mean = 0.0;
  double bits_r1_mean = 0.0;  // per machine, averaged over replications
  double bits_r2_mean = 0.0;  // per machine, averaged over replications
  int reps = 0;
};

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(std::span<const double> xs) {
  MeanSe out;
  if (xs.empty()) return out;
  double s = 0.0;
  for (double x : xs) s += x;
  out.mean = s / xs.size();
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.se = std::sqrt(ss / (xs.size() - 1) / xs.size());
  }
  return out;
}

/// Aggregates records of one (grid point, scheme) cell.
inline SweepRow aggregate(const std::string& axis, double value, const std::string& scheme,
                          std::span<const ExperimentRecord> recs) {
  SweepRow row;
  row.axis = axis;
  row.value = value;
  row.scheme = scheme;
  row.reps = static_cast<int>(recs.size());
  std::vector<double> f, l2, orc, b1, b2;
  for (const auto& r : recs) {
    f.push_back(r.f_measure);
    l2.push_back(r.l2_error);
    orc.push_back(r.l2_error_oracle);
    const double machines = std::max<std::size_t>(r.bits_round1_per_machine.size(), 1);
    b1.push_back(static_cast<double>(r.bits_round1) / machines);
    b2.push_back(static_cast<double>(r.bits_round2) / machines);
  }
  const auto fm = mean_se(f);
  const auto lm = mean_se(l2);
  row.f_mean = fm.mean;
  row.f_se = fm.se;
  row.l2_mean = lm.mean;
  row.l2_se = lm.se;
  row.oracle_l2_mean = mean_se(orc).mean;
  row.bits_r1_mean = mean_se(b1).mean;
  row.bits_r2_mean = mean_se(b2).mean;
  return row;
}

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<ExperimentRecord> records;
};

using RecordSink = std::function<void(const ExperimentRecord&)>;

/// Replicates every variant at every grid point of one axis. Fixed designs
/// are generated once for the largest n / M on the grid; for the n axis the
/// signal is calibrated at the smallest n so every grid point has SNR >= r.
inline SweepResult run_sweep(const ExperimentConfig& cfg, SweepAxis axis, std::span<const double> grid,
                             std::vector<SchemeVariant> variants = {}, const RecordSink& sink = {}) {
  require(!grid.empty(), "run_sweep: empty grid");
  if (variants.empty()) variants.push_back(cfg.variant());

  ExperimentConfig base = cfg;
  std::optional<int> rows;
  std::optional<int> machines;
  const double gmax = *std::max_element(grid.begin(), grid.end());
  const double gmin = *std::min_element(grid.begin(), grid.end());
  if (cfg.design_rows) rows = *cfg.design_rows;
  if (cfg.design_machines) machines = *cfg.design_machines;
  if (axis == SweepAxis::n) {
    rows = std::max(rows.value_or(0), static_cast<int>(gmax));
    base.spec.n = static_cast<int>(gmin);
    if (!base.calibration_n) base.calibration_n = static_cast<int>(gmin);
  } else if (axis == SweepAxis::M) {
    machines = std::max(machines.value_or(0), static_cast<int>(gmax));
    base.spec.M = static_cast<int>(gmin);
  } else if (axis == SweepAxis::r) {
    base.spec.r = gmax;
  }
  if (axis == SweepAxis::L)
    for (double g : grid) require(g >= 1 && g <= cfg.spec.d, "run_sweep: L grid outside [1, d]");
  if (axis == SweepAxis::r)
    for (double g : grid) require(g > 0 && g <= 1, "run_sweep: r grid outside (0, 1]");

  Experiment exp(base, rows, machines);
  SweepResult result;
  for (double g : grid) {
    Experiment::View view{cfg.spec.n, cfg.spec.M, cfg.spec.r};
    std::vector<SchemeVariant> vars = variants;
    switch (axis) {
      case SweepAxis::r: view.r = g; break;
      case SweepAxis::n: view.n = static_cast<int>(g); break;
      case SweepAxis::M: view.M = static_cast<int>(g); break;
      case SweepAxis::L:
        for (auto& v : vars) v.L = static_cast<int>(g);
        break;
    }
    exp.prepare(view);

    std::vector<std::vector<ExperimentRecord>> per_rep(static_cast<std::size_t>(cfg.reps));
    const int workers = std::min(cfg.threads, cfg.reps);
    auto work = [&](int w) {
      for (int rep = w; rep < cfg.reps; rep += workers)
        per_rep[static_cast<std::size_t>(rep)] = exp.run(static_cast<std::uint64_t>(rep), vars, view);
    };
    if (workers <= 1 || !cfg.fixed_design) {
      for (int rep = 0; rep < cfg.reps; ++rep) per_rep[static_cast<std::size_t>(rep)] = exp.run(rep, vars, view);
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
      for (auto& t : pool) t.join();
    }

    for (std::size_t k = 0; k < vars.size(); ++k) {
      std::vector<ExperimentRecord> cell;
      for (auto& recs : per_rep) {
        recs[k].grid_value = g;
        cell.push_back(recs[k]);
      }
      result.rows.push_back(aggregate(to_string(axis), g, vars[k].label(), cell));
      for (auto& r : cell) {
        if (sink) sink(r);
        result.records.push_back(std::move(r));
      }
    }
  }
  return result;
}

}  // namespace sparsevote
