#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sparsevote/harness.hpp"

using namespace sparsevote;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.spec.d = 60;
  cfg.spec.K = 3;
  cfg.spec.n = 100;
  cfg.spec.M = 8;
  cfg.spec.r = 0.8;
  cfg.spec.base_seed = 7;
  cfg.reps = 3;
  return cfg;
}

void expect_same_record(const ExperimentRecord& a, const ExperimentRecord& b) {
  EXPECT_EQ(a.s_hat, b.s_hat);
  EXPECT_EQ(a.theta_hat, b.theta_hat);
  EXPECT_EQ(a.l2_error, b.l2_error);
  EXPECT_EQ(a.l2_error_oracle, b.l2_error_oracle);
  EXPECT_EQ(a.bits_round1_per_machine, b.bits_round1_per_machine);
  EXPECT_EQ(a.bits_round2, b.bits_round2);
  EXPECT_EQ(a.fusion.votes_histogram, b.fusion.votes_histogram);
}

}  // namespace

TEST(FMeasure, Examples) {
  const auto perfect = f_measure({1, 2, 3}, {1, 2, 3});
  EXPECT_DOUBLE_EQ(perfect.f, 1.0);
  const auto half = f_measure({1, 9}, {1, 2});
  EXPECT_DOUBLE_EQ(half.precision, 0.5);
  EXPECT_DOUBLE_EQ(half.recall, 0.5);
  EXPECT_DOUBLE_EQ(half.f, 0.5);
  const auto empty = f_measure({}, {1, 2});
  EXPECT_DOUBLE_EQ(empty.f, 0.0);
  EXPECT_DOUBLE_EQ(empty.precision, 0.0);
  EXPECT_DOUBLE_EQ(f_measure({1, 2, 3, 4}, {1}).f, 2.0 * 0.25 / 1.25);
  EXPECT_THROW(f_measure({1}, {}), Error);
}

TEST(OracleLs, MatchesStackedSolve) {
  ProblemSpec spec;
  spec.d = 10;
  spec.K = 2;
  spec.n = 15;
  spec.M = 3;
  auto shards = sample_shards(spec);
  const auto gt = make_theta_star(spec, 1.0, 1);
  sample_responses(shards, gt.theta_star, 1.0, 2);
  Matrix X(45, 2);
  Vector y(45);
  for (int m = 0; m < 3; ++m) {
    X.middleRows(m * 15, 15) = select_columns(shards[m].X, gt.support);
    y.segment(m * 15, 15) = shards[m].y;
  }
  const Vector ref = oracle::svd_least_squares(X, y);
  const Vector got = oracle_ls(shards, gt.support);
  EXPECT_NEAR(got[gt.support[0]], ref[0], 1e-10);
  EXPECT_NEAR(got[gt.support[1]], ref[1], 1e-10);
}

TEST(SchemeVariant, Labels) {
  SchemeVariant v;
  EXPECT_EQ(v.label(), "thresh_votes");
  v.scheme = Scheme::top_L_signs;
  v.L = 25;
  EXPECT_EQ(v.label(), "top_L_signs(L=25)");
  v.sparsity = SparsityMode::unknown;
  v.second_round = SecondRound::gram_exact;
  EXPECT_EQ(v.label(), "top_L_signs(L=25)[unknown_K][gram_exact]");
}

TEST(ExperimentConfig, Validation) {
  auto cfg = small_config();
  cfg.scheme = Scheme::top_L_votes;
  cfg.L = 2;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.sparsity_mode = SparsityMode::unknown;
  EXPECT_NO_THROW(cfg.validate());
  cfg = small_config();
  cfg.reps = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Experiment, DeterministicAcrossRunsAndThreads) {
  auto cfg = small_config();
  const auto a = run_replication(cfg, 1);
  const auto b = run_replication(cfg, 1);
  expect_same_record(a, b);
  const auto c = run_replication(cfg, 2);
  EXPECT_NE(a.theta_hat, c.theta_hat);

  cfg.threads = 3;
  const double grid[] = {0.8};
  const auto s1 = run_sweep(cfg, SweepAxis::r, grid);
  cfg.threads = 1;
  const auto s2 = run_sweep(cfg, SweepAxis::r, grid);
  ASSERT_EQ(s1.records.size(), s2.records.size());
  for (std::size_t i = 0; i < s1.records.size(); ++i) expect_same_record(s1.records[i], s2.records[i]);
}

TEST(Experiment, AvgDebiasedSendsDenseVectors) {
  auto cfg = small_config();
  cfg.scheme = Scheme::avg_deblasso;
  const auto rec = run_replication(cfg, 0);
  ASSERT_EQ(rec.bits_round1_per_machine.size(), 8u);
  for (auto b : rec.bits_round1_per_machine) EXPECT_EQ(b, 64u * 60u);
  EXPECT_EQ(rec.bits_round2, 0u);
}

TEST(Experiment, ExactRecoveryWithGramRoundEqualsOracle) {
  auto cfg = small_config();
  cfg.second_round = SecondRound::gram_exact;
  cfg.spec.M = 30;
  Experiment exp(cfg);
  int exact = 0;
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    const auto rec = exp.run(rep);
    if (rec.s_hat != exp.truth().support) continue;
    ++exact;
    EXPECT_NEAR(rec.l2_error, rec.l2_error_oracle, 1e-10);
    EXPECT_DOUBLE_EQ(rec.f_measure, 1.0);
  }
  EXPECT_GT(exact, 0);
}

TEST(Experiment, RecordInvariants) {
  auto cfg = small_config();
  for (auto scheme : {Scheme::thresh_votes, Scheme::top_L_votes, Scheme::top_L_signs, Scheme::bnm21}) {
    cfg.scheme = scheme;
    const auto rec = run_replication(cfg, 0);
    EXPECT_TRUE(std::is_sorted(rec.s_hat.begin(), rec.s_hat.end()));
    EXPECT_EQ(rec.empty_support, rec.s_hat.empty());
    std::uint64_t sum = 0;
    for (auto b : rec.bits_round1_per_machine) sum += b;
    EXPECT_EQ(sum, rec.bits_round1);
    for (Eigen::Index i = 0; i < rec.theta_hat.size(); ++i)
      if (rec.theta_hat[i] != 0.0)
        EXPECT_TRUE(std::binary_search(rec.s_hat.begin(), rec.s_hat.end(), static_cast<std::uint32_t>(i)));
    if (scheme == Scheme::top_L_votes) {
      for (auto b : rec.bits_round1_per_machine) EXPECT_EQ(b, 3u * index_bits(60));
    }
    int hist_total = 0;
    for (int h : rec.fusion.votes_histogram) hist_total += h;
    EXPECT_EQ(hist_total, 60);
  }
}

TEST(Experiment, HugeThresholdGivesEmptySupport) {
  auto cfg = small_config();
  cfg.sparsity_mode = SparsityMode::unknown;
  cfg.tau_mode = TauMode::explicit_value;
  cfg.tau_explicit = 1e6;
  const auto rec = run_replication(cfg, 0);
  EXPECT_TRUE(rec.empty_support);
  EXPECT_EQ(rec.f_measure, 0.0);
  EXPECT_EQ(rec.theta_hat, Vector::Zero(60));
}

TEST(RunSweep, SinglePointShape) {
  auto cfg = small_config();
  std::vector<SchemeVariant> vars(2);
  vars[1].scheme = Scheme::avg_deblasso;
  const double grid[] = {0.5};
  std::vector<ExperimentRecord> seen;
  const auto res = run_sweep(cfg, SweepAxis::r, grid, vars, [&](const ExperimentRecord& r) { seen.push_back(r); });
  ASSERT_EQ(res.rows.size(), 2u);
  EXPECT_EQ(res.rows[0].reps, 3);
  EXPECT_EQ(res.rows[0].axis, "r");
  EXPECT_EQ(res.rows[1].scheme, "avg_deblasso");
  EXPECT_EQ(seen.size(), 6u);
  for (const auto& r : seen) EXPECT_DOUBLE_EQ(r.grid_value, 0.5);
  EXPECT_DOUBLE_EQ(res.rows[1].bits_r1_mean, 64.0 * 60);
}

TEST(MeanSe, Examples) {
  const double xs[] = {1.0, 2.0, 3.0};
  const auto m = mean_se(xs);
  EXPECT_DOUBLE_EQ(m.mean, 2.0);
  EXPECT_NEAR(m.se, 1.0 / std::sqrt(3.0), 1e-15);
}
