#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "sparsevote/fusion.hpp"

using namespace sparsevote;

namespace {

std::vector<Message> index_messages(const std::vector<Support>& sets) {
  std::vector<Message> out;
  for (std::size_t m = 0; m < sets.size(); ++m) out.push_back({static_cast<std::uint32_t>(m), IndexSet{sets[m]}});
  return out;
}

}  // namespace

TEST(Tally, Examples) {
  const auto msgs = index_messages({{0, 2}, {2}, {1, 2}});
  const auto t = tally(msgs, 4);
  EXPECT_EQ(t.votes, (std::vector<int>{1, 1, 3, 0}));
  EXPECT_EQ(t.contributing_machines, 3);

  std::vector<Message> signed_msgs{{0, SignedIndexSet{{1}, {1}}}, {1, SignedIndexSet{{1}, {-1}}},
                                   {2, SignedIndexSet{{1, 3}, {-1, 1}}}};
  const auto s = tally(signed_msgs, 4);
  EXPECT_EQ(s.votes, (std::vector<int>{0, 3, 0, 1}));
  EXPECT_EQ(s.sign_sums, (std::vector<int>{0, -1, 0, 1}));
}

TEST(Tally, RejectsDuplicatesAndWrongPayloads) {
  auto msgs = index_messages({{0}, {1}});
  msgs[1].machine_id = 0;
  EXPECT_THROW(tally(msgs, 3), Error);
  std::vector<Message> dense{{0, DenseEstimate{Vector::Zero(3)}}};
  EXPECT_THROW(tally(dense, 3), Error);
  EXPECT_THROW(tally(index_messages({{5}}), 3), Error);
}

TEST(Tally, MatchesBruteForceCounting) {
  std::mt19937 rng(17);
  for (int c = 0; c < 200; ++c) {
    const int M = 1 + rng() % 10;
    const int d = 1 + rng() % 20;
    std::vector<Support> sets(M);
    std::vector<std::vector<std::uint32_t>> raw(M);
    for (int m = 0; m < M; ++m) {
      for (int i = 0; i < d; ++i)
        if (rng() % 3 == 0) sets[m].push_back(i);
      raw[m] = sets[m];
    }
    auto msgs = index_messages(sets);
    EXPECT_EQ(tally(msgs, d).votes, oracle::count_votes(raw, d));
    std::shuffle(msgs.begin(), msgs.end(), rng);
    EXPECT_EQ(tally(msgs, d).votes, oracle::count_votes(raw, d));
  }
}

TEST(SelectTopK, TiesAndSigns) {
  VoteTally t;
  t.votes = {3, 5, 5, 1, 0};
  t.sign_sums = {3, -1, 5, -1, 0};
  EXPECT_EQ(select_topk(t, 2).indices, (Support{1, 2}));
  EXPECT_EQ(select_topk(t, 1).indices, (Support{1}));
  EXPECT_EQ(select_topk(t, 2, true).indices, (Support{0, 2}));
  EXPECT_EQ(select_topk(t, 3, true).indices, (Support{0, 1, 2}));
  EXPECT_THROW(select_topk(t, 0), Error);
  EXPECT_THROW(select_topk(t, 6), Error);
}

TEST(SelectVoteThreshold, StrictInequality) {
  VoteTally t;
  t.votes = {3, 5, 6, 1};
  t.sign_sums = {3, -5, 2, 1};
  EXPECT_EQ(select_vote_threshold(t, 5.0).indices, (Support{2}));
  EXPECT_EQ(select_vote_threshold(t, 2.0).indices, (Support{0, 1, 2}));
  EXPECT_EQ(select_vote_threshold(t, 2.5, true).indices, (Support{0, 1}));
  EXPECT_TRUE(select_vote_threshold(t, 6.0).indices.empty());
  EXPECT_NEAR(default_tau_votes(1000.0), 2.0 * std::log(1000.0), 1e-15);
}

TEST(SelectMajority, HalfOfMachines) {
  VoteTally t;
  t.votes = {50, 49, 100, 0};
  t.sign_sums.assign(4, 0);
  EXPECT_EQ(select_majority(t, 100).indices, (Support{0, 2}));
  t.votes = {2, 1, 3};
  EXPECT_EQ(select_majority(t, 5).indices, (Support{2}));
}

TEST(AvgDebiased, MeanAndSelection) {
  std::vector<Message> msgs{{1, DenseEstimate{Vector{{1.0, 0.0, -0.2}}}}, {0, DenseEstimate{Vector{{0.0, 0.1, -0.4}}}}};
  const auto k1 = avg_debiased(msgs, AvgRule::top_k(1));
  EXPECT_TRUE(k1.theta_avg.isApprox(Vector{{0.5, 0.05, -0.3}}));
  EXPECT_EQ(k1.support.indices, (Support{0}));
  EXPECT_EQ(k1.estimate, (Vector{{0.5, 0.0, 0.0}}));
  const auto th = avg_debiased(msgs, AvgRule::above(0.1));
  EXPECT_EQ(th.support.indices, (Support{0, 2}));
  EXPECT_EQ(th.support.rule, SupportRule::avg_threshold);
  EXPECT_NEAR(default_avg_threshold(5000, 250), 0.3748, 1e-4);
}

TEST(AggregateRound2, MeanOfRestrictedEstimates) {
  const Support s{1, 3};
  std::vector<Message> msgs{{0, RestrictedEstimate{s, Vector{{1.0, 2.0}}}}, {1, RestrictedEstimate{s, Vector{{3.0, -2.0}}}}};
  EXPECT_EQ(aggregate_round2(msgs, s, 5), (Vector{{0, 2.0, 0, 0.0, 0}}));
  std::vector<Message> bad{{0, RestrictedEstimate{{1, 2}, Vector::Zero(2)}}};
  EXPECT_THROW(aggregate_round2(bad, s, 5), Error);
}

TEST(CentralizedLs, MatchesStackedLeastSquares) {
  std::mt19937 rng(5);
  for (int c = 0; c < 50; ++c) {
    const int M = 1 + rng() % 6, d = 8, n = 6 + rng() % 10;
    Support s;
    for (int i = 0; i < d; ++i)
      if (rng() % 2 || s.empty()) s.push_back(i);
    if (s.size() > static_cast<std::size_t>(n)) s.resize(n);
    GaussianStream g(100 + c);
    Matrix stacked(M * n, static_cast<Eigen::Index>(s.size()));
    Vector ys(M * n);
    std::vector<Message> msgs;
    for (int m = 0; m < M; ++m) {
      Matrix X(n, d);
      Vector y(n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) X(i, j) = g();
        y[i] = g();
      }
      msgs.push_back(round2_gram(m, X, y, s));
      stacked.middleRows(m * n, n) = select_columns(X, s);
      ys.segment(m * n, n) = y;
    }
    const Vector ref = oracle::svd_least_squares(stacked, ys);
    const Vector got = centralized_ls(msgs, s, d);
    for (std::size_t k = 0; k < s.size(); ++k) EXPECT_NEAR(got[s[k]], ref[k], 1e-8);
  }
}

TEST(CentralizedLs, SingularGramThrows) {
  Matrix X = Matrix::Ones(5, 2);
  std::vector<Message> msgs{round2_gram(0, X, Vector::Ones(5), {0, 1})};
  EXPECT_THROW(centralized_ls(msgs, {0, 1}, 2), Error);
}
