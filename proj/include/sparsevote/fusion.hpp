#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sparsevote/core.hpp"
#include "sparsevote/protocol.hpp"

namespace sparsevote {

struct VoteTally {
  std::vector<int> votes;      // V_i
  std::vector<int> sign_sums;  // V_i^sign
  int contributing_machines = 0;

  std::size_t dim() const { return votes.size(); }
};

enum class SupportRule { topK, vote_threshold, majority, avg_topK, avg_threshold };

inline const char* to_string(SupportRule r) {
  switch (r) {
    case SupportRule::topK: return "topK";
    case SupportRule::vote_threshold: return "vote_threshold";
    case SupportRule::majority: return "majority";
    case SupportRule::avg_topK: return "avg_topK";
    case SupportRule::avg_threshold: return "avg_threshold";
  }
  return "?";
}

struct SupportEstimate {
  Support indices;
  SupportRule rule = SupportRule::topK;
  double rule_param = 0.0;  // K, tau_votes, M/2 or the averaging threshold
  bool use_signs = false;
};

/// Counts votes (and sums of signs) over round-1 index messages. Messages
/// are folded in machine-id order; duplicate senders are rejected.
inline VoteTally tally(std::span<const Message> messages, std::size_t d) {
  std::vector<const Message*> order;
  order.reserve(messages.size());
  for (const auto& m : messages) order.push_back(&m);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->machine_id < b->machine_id; });
  for (std::size_t i = 1; i < order.size(); ++i)
    if (order[i]->machine_id == order[i - 1]->machine_id) throw Error("duplicate sender");

  VoteTally t;
  t.votes.assign(d, 0);
  t.sign_sums.assign(d, 0);
  t.contributing_machines = static_cast<int>(messages.size());
  for (const Message* msg : order) {
    if (const auto* p = std::get_if<IndexSet>(&msg->payload)) {
      for (auto i : p->indices) {
        require(i < d, "tally: index out of range");
        ++t.votes[i];
      }
    } else if (const auto* p = std::get_if<SignedIndexSet>(&msg->payload)) {
      require(p->signs.size() == p->indices.size(), "tally: one sign per index");
      for (std::size_t k = 0; k < p->indices.size(); ++k) {
        const auto i = p->indices[k];
        require(i < d, "tally: index out of range");
        ++t.votes[i];
        t.sign_sums[i] += p->signs[k];
      }
    } else {
      throw Error("tally: round-1 messages must be index sets");
    }
  }
  return t;
}

namespace detail {

inline std::vector<double> ranking_scores(const VoteTally& t, bool use_signs) {
  std::vector<double> s(t.dim());
  for (std::size_t i = 0; i < s.size(); ++i)
    s[i] = use_signs ? std::abs(static_cast<double>(t.sign_sums[i])) : static_cast<double>(t.votes[i]);
  return s;
}

// K largest scores, ties to the lower index, returned sorted by index.
inline Support top_k_of(const std::vector<double>& score, int K) {
  require(K >= 1 && static_cast<std::size_t>(K) <= score.size(), "select_topk: need 1 <= K <= d");
  std::vector<std::uint32_t> order(score.size());
  std::iota(order.begin(), order.end(), 0u);
  std::partial_sort(order.begin(), order.begin() + K, order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return score[a] != score[b] ? score[a] > score[b] : a < b;
  });
  Support out(order.begin(), order.begin() + K);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

inline SupportEstimate select_topk(const VoteTally& t, int K, bool use_signs = false) {
  SupportEstimate est;
  est.indices = detail::top_k_of(detail::ranking_scores(t, use_signs), K);
  est.rule = SupportRule::topK;
  est.rule_param = K;
  est.use_signs = use_signs;
  return est;
}

/// { i : V_i > tau_votes } (or |V_i^sign| > tau_votes).
inline SupportEstimate select_vote_threshold(const VoteTally& t, double tau_votes, bool use_signs = false) {
  require(tau_votes >= 0.0, "select_vote_threshold: tau_votes must be nonnegative");
  const auto score = detail::ranking_scores(t, use_signs);
  SupportEstimate est;
  for (std::size_t i = 0; i < score.size(); ++i)
    if (score[i] > tau_votes) est.indices.push_back(static_cast<std::uint32_t>(i));
  est.rule = SupportRule::vote_threshold;
  est.rule_param = tau_votes;
  est.use_signs = use_signs;
  return est;
}

/// { i : V_i >= M/2 }
inline SupportEstimate select_majority(const VoteTally& t, int M) {
  require(M >= 1, "select_majority: M must be positive");
  SupportEstimate est;
  for (std::size_t i = 0; i < t.dim(); ++i)
    if (2 * static_cast<long>(t.votes[i]) >= M) est.indices.push_back(static_cast<std::uint32_t>(i));
  est.rule = SupportRule::majority;
  est.rule_param = 0.5 * M;
  return est;
}

inline double default_tau_votes(double d) { return 2.0 * std::log(d); }

inline double default_avg_threshold(double d, double n) { return 11.0 * std::log(d) / n; }

struct AvgRule {
  enum class Kind { topK, threshold } kind = Kind::topK;
  int K = 0;
  double threshold = 0.0;

  static AvgRule top_k(int K) { return {Kind::topK, K, 0.0}; }
  static AvgRule above(double t) { return {Kind::threshold, 0, t}; }
};

struct AvgResult {
  Vector theta_avg;  // plain coordinate-wise mean
  Vector estimate;   // theta_avg restricted to the support, zero elsewhere
  SupportEstimate support;
};

/// Fusion side of the one-round averaging baseline.
inline AvgResult avg_debiased(std::span<const Message> dense_messages, const AvgRule& rule) {
  require(!dense_messages.empty(), "avg_debiased: no messages");
  std::vector<const Message*> order;
  for (const auto& m : dense_messages) order.push_back(&m);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->machine_id < b->machine_id; });

  AvgResult out;
  for (const Message* msg : order) {
    const auto* p = std::get_if<DenseEstimate>(&msg->payload);
    require(p != nullptr, "avg_debiased: messages must be dense estimates");
    if (out.theta_avg.size() == 0) out.theta_avg = Vector::Zero(p->values.size());
    require(p->values.size() == out.theta_avg.size(), "avg_debiased: length mismatch");
    out.theta_avg += p->values;
  }
  out.theta_avg /= static_cast<double>(order.size());

  const auto d = static_cast<std::size_t>(out.theta_avg.size());
  if (rule.kind == AvgRule::Kind::topK) {
    std::vector<double> score(d);
    for (std::size_t i = 0; i < d; ++i) score[i] = std::abs(out.theta_avg[static_cast<Eigen::Index>(i)]);
    out.support.indices = detail::top_k_of(score, rule.K);
    out.support.rule = SupportRule::avg_topK;
    out.support.rule_param = rule.K;
  } else {
    for (std::size_t i = 0; i < d; ++i)
      if (std::abs(out.theta_avg[static_cast<Eigen::Index>(i)]) > rule.threshold)
        out.support.indices.push_back(static_cast<std::uint32_t>(i));
    out.support.rule = SupportRule::avg_threshold;
    out.support.rule_param = rule.threshold;
  }
  out.estimate = Vector::Zero(out.theta_avg.size());
  for (auto i : out.support.indices) out.estimate[i] = out.theta_avg[i];
  return out;
}

/// Coordinate-wise mean of the round-2 restricted estimates, zero off support.
inline Vector aggregate_round2(std::span<const Message> messages, const Support& s_hat, std::size_t d) {
  require(!messages.empty(), "aggregate_round2: no messages");
  Vector sum = Vector::Zero(static_cast<Eigen::Index>(s_hat.size()));
  std::vector<const Message*> order;
  for (const auto& m : messages) order.push_back(&m);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->machine_id < b->machine_id; });
  for (const Message* msg : order) {
    const auto* p = std::get_if<RestrictedEstimate>(&msg->payload);
    require(p != nullptr, "aggregate_round2: messages must be restricted estimates");
    if (p->support != s_hat) throw Error("inconsistent round-2 support");
    sum += p->beta;
  }
  sum /= static_cast<double>(order.size());
  Vector theta = Vector::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < s_hat.size(); ++k) theta[s_hat[k]] = sum[static_cast<Eigen::Index>(k)];
  return theta;
}

/// Exact pooled least squares from summed Gram summaries.
inline Vector centralized_ls(std::span<const Message> messages, const Support& s_hat, std::size_t d) {
  require(!messages.empty(), "centralized_ls: no messages");
  const auto k = static_cast<Eigen::Index>(s_hat.size());
  Matrix G = Matrix::Zero(k, k);
  Vector v = Vector::Zero(k);
  std::vector<const Message*> order;
  for (const auto& m : messages) order.push_back(&m);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->machine_id < b->machine_id; });
  for (const Message* msg : order) {
    const auto* p = std::get_if<GramSummary>(&msg->payload);
    require(p != nullptr, "centralized_ls: messages must be Gram summaries");
    if (p->support != s_hat) throw Error("inconsistent round-2 support");
    G += p->gram;
    v += p->xty;
  }
  Eigen::LLT<Matrix> llt(G);
  if (llt.info() != Eigen::Success) throw Error("singular pooled Gram");
  const Vector beta = llt.solve(v);
  // LLT accepts numerically singular matrices with tiny pivots; reject those.
  const double min_pivot = llt.matrixL().toDenseMatrix().diagonal().cwiseAbs().minCoeff();
  const double max_pivot = llt.matrixL().toDenseMatrix().diagonal().cwiseAbs().maxCoeff();
  if (!(min_pivot > max_pivot * 1e-7) || !beta.allFinite()) throw Error("singular pooled Gram");
  Vector theta = Vector::Zero(static_cast<Eigen::Index>(d));
  for (Eigen::Index j = 0; j < k; ++j) theta[s_hat[static_cast<std::size_t>(j)]] = beta[j];
  return theta;
}

}  // namespace sparsevote
