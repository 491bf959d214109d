#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <numeric>
#include <span>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "sparsevote/core.hpp"
#include "sparsevote/datagen.hpp"
#include "sparsevote/debias.hpp"
#include "sparsevote/lasso.hpp"

namespace sparsevote {

// ---------------------------------------------------------------------------
// Payloads

struct IndexSet {
  Support indices;
};

struct SignedIndexSet {
  Support indices;
  std::vector<std::int8_t> signs;  // +1 or -1, parallel to indices
};

struct DenseEstimate {
  Vector values;
};

struct RestrictedEstimate {
  Support support;
  Vector beta;
};

struct GramSummary {
  Support support;
  Matrix gram;  // X_S^T X_S
  Vector xty;   // X_S^T y
};

using Payload = std::variant<IndexSet, SignedIndexSet, DenseEstimate, RestrictedEstimate, GramSummary>;

// Wire tags, in variant order.
enum class PayloadTag : std::uint8_t {
  index_set = 1,
  signed_index_set = 2,
  dense_estimate = 3,
  restricted_estimate = 4,
  gram_summary = 5,
};

struct Message {
  std::uint32_t machine_id = 0;
  Payload payload;

  PayloadTag tag() const { return static_cast<PayloadTag>(payload.index() + 1); }
};

inline bool operator==(const Message& a, const Message& b) {
  if (a.machine_id != b.machine_id || a.payload.index() != b.payload.index()) return false;
  return std::visit(
      [&](const auto& pa) {
        using T = std::decay_t<decltype(pa)>;
        const auto& pb = std::get<T>(b.payload);
        if constexpr (std::is_same_v<T, IndexSet>) {
          return pa.indices == pb.indices;
        } else if constexpr (std::is_same_v<T, SignedIndexSet>) {
          return pa.indices == pb.indices && pa.signs == pb.signs;
        } else if constexpr (std::is_same_v<T, DenseEstimate>) {
          return pa.values == pb.values;
        } else if constexpr (std::is_same_v<T, RestrictedEstimate>) {
          return pa.support == pb.support && pa.beta == pb.beta;
        } else {
          return pa.support == pb.support && pa.gram == pb.gram && pa.xty == pb.xty;
        }
      },
      a.payload);
}

inline bool strictly_increasing(const Support& s, std::uint64_t d) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] >= d) return false;
    if (i > 0 && s[i] <= s[i - 1]) return false;
  }
  return true;
}

/// Checks the payload invariants against dimension d; throws on violation.
inline void validate(const Message& msg, std::uint64_t d) {
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, IndexSet>) {
          require(strictly_increasing(p.indices, d), "message: indices must be strictly increasing and < d");
        } else if constexpr (std::is_same_v<T, SignedIndexSet>) {
          require(strictly_increasing(p.indices, d), "message: indices must be strictly increasing and < d");
          require(p.signs.size() == p.indices.size(), "message: one sign per index");
          for (auto s : p.signs) require(s == 1 || s == -1, "message: signs must be +1 or -1");
        } else if constexpr (std::is_same_v<T, DenseEstimate>) {
          require(static_cast<std::uint64_t>(p.values.size()) == d, "message: dense estimate must have length d");
        } else if constexpr (std::is_same_v<T, RestrictedEstimate>) {
          require(strictly_increasing(p.support, d), "message: support must be strictly increasing and < d");
          require(p.beta.size() == static_cast<Eigen::Index>(p.support.size()), "message: beta length != support size");
        } else {
          const auto k = static_cast<Eigen::Index>(p.support.size());
          require(strictly_increasing(p.support, d), "message: support must be strictly increasing and < d");
          require(p.gram.rows() == k && p.gram.cols() == k && p.xty.size() == k, "message: Gram shape mismatch");
          require(p.gram == p.gram.transpose(), "message: Gram not symmetric");
        }
      },
      msg.payload);
}

// ---------------------------------------------------------------------------
// Machine-side message construction

/// { i : |xi_i| > tau }
inline Message round1_thresh_votes(std::uint32_t machine_id, const Eigen::Ref<const Vector>& xi, double tau) {
  require(tau > 0.0, "round1_thresh_votes: tau must be positive");
  IndexSet p;
  for (Eigen::Index i = 0; i < xi.size(); ++i)
    if (std::abs(xi[i]) > tau) p.indices.push_back(static_cast<std::uint32_t>(i));
  return {machine_id, std::move(p)};
}

inline Message round1_thresh_votes(const LocalFit& fit, double tau) {
  return round1_thresh_votes(fit.machine_id, fit.xi_hat, tau);
}

/// Thresholded entry rule with signs attached.
inline Message round1_thresh_signs(std::uint32_t machine_id, const Eigen::Ref<const Vector>& xi, double tau) {
  require(tau > 0.0, "round1_thresh_signs: tau must be positive");
  SignedIndexSet p;
  for (Eigen::Index i = 0; i < xi.size(); ++i)
    if (std::abs(xi[i]) > tau) {
      p.indices.push_back(static_cast<std::uint32_t>(i));
      p.signs.push_back(xi[i] > 0.0 ? 1 : -1);
    }
  return {machine_id, std::move(p)};
}

/// Indices of the L largest |xi_i|, ties to the lower index, sorted.
inline Support top_l_indices(const Eigen::Ref<const Vector>& xi, int L) {
  const auto d = static_cast<int>(xi.size());
  require(L >= 1 && L <= d, "top_L: need 1 <= L <= d");
  std::vector<std::uint32_t> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0u);
  auto larger = [&](std::uint32_t a, std::uint32_t b) {
    const double fa = std::abs(xi[a]);
    const double fb = std::abs(xi[b]);
    return fa != fb ? fa > fb : a < b;
  };
  std::partial_sort(order.begin(), order.begin() + L, order.end(), larger);
  Support out(order.begin(), order.begin() + L);
  std::sort(out.begin(), out.end());
  return out;
}

inline Message round1_top_L(std::uint32_t machine_id, const Eigen::Ref<const Vector>& xi, int L, bool with_signs) {
  Support idx = top_l_indices(xi, L);
  if (!with_signs) return {machine_id, IndexSet{std::move(idx)}};
  SignedIndexSet p;
  p.signs.reserve(idx.size());
  for (auto i : idx) p.signs.push_back(xi[i] >= 0.0 ? 1 : -1);
  p.indices = std::move(idx);
  return {machine_id, std::move(p)};
}

inline Message round1_top_L(const LocalFit& fit, int L, bool with_signs) {
  return round1_top_L(fit.machine_id, fit.xi_hat, L, with_signs);
}

inline Message round1_dense(const LocalFit& fit) { return {fit.machine_id, DenseEstimate{fit.theta_hat}}; }

/// beta^m = argmin ||X_S beta - y||^2 on this machine.
inline Message round2_restricted(std::uint32_t machine_id, const Eigen::Ref<const Matrix>& X,
                                 const Eigen::Ref<const Vector>& y, const Support& s_hat) {
  require(!s_hat.empty(), "round2_restricted: empty support");
  RestrictedEstimate p;
  p.support = s_hat;
  p.beta = restricted_ols(select_columns(X, s_hat), y);
  return {machine_id, std::move(p)};
}

inline Message round2_restricted(const DataShard& shard, const Support& s_hat) {
  return round2_restricted(shard.machine_id, shard.X, shard.y, s_hat);
}

inline Message round2_gram(std::uint32_t machine_id, const Eigen::Ref<const Matrix>& X,
                           const Eigen::Ref<const Vector>& y, const Support& s_hat) {
  require(!s_hat.empty(), "round2_gram: empty support");
  const Matrix XS = select_columns(X, s_hat);
  GramSummary p;
  p.support = s_hat;
  p.gram = XS.transpose() * XS;
  p.gram = 0.5 * (p.gram + p.gram.transpose()).eval();
  p.xty = XS.transpose() * y;
  return {machine_id, std::move(p)};
}

inline Message round2_gram(const DataShard& shard, const Support& s_hat) {
  return round2_gram(shard.machine_id, shard.X, shard.y, s_hat);
}

// ---------------------------------------------------------------------------
// Accounting

/// ceil(log2 d): bits to name one index in [0, d).
inline std::uint64_t index_bits(std::uint64_t d) {
  require(d >= 1, "index_bits: d must be positive");
  return static_cast<std::uint64_t>(std::bit_width(d - 1));
}

/// Model bit cost: indices ceil(log2 d) bits, signs 1 bit, reals 64 bits.
/// Cardinality headers are not charged.
inline std::uint64_t bit_cost(const Message& msg, std::uint64_t d) {
  const std::uint64_t ib = index_bits(d);
  return std::visit(
      [&](const auto& p) -> std::uint64_t {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, IndexSet>) {
          return p.indices.size() * ib;
        } else if constexpr (std::is_same_v<T, SignedIndexSet>) {
          return p.indices.size() * (ib + 1);
        } else if constexpr (std::is_same_v<T, DenseEstimate>) {
          return 64 * static_cast<std::uint64_t>(p.values.size());
        } else if constexpr (std::is_same_v<T, RestrictedEstimate>) {
          return p.support.size() * (ib + 64);
        } else {
          const std::uint64_t k = p.support.size();
          return k * ib + 64 * (k * k + k);
        }
      },
      msg.payload);
}

// ---------------------------------------------------------------------------
// Wire format: tag u8, machine id u32, count u32, then the payload.
// Integers and doubles are little-endian; signs are packed LSB-first, one
// bit per index (1 = positive), padded to a whole byte. `count` is the number
// of indices, d for a dense estimate, and |S| for the round-2 payloads. A
// Gram summary carries |S| indices, the |S|x|S| matrix row-major, then X_S^T y.

namespace wire {

inline void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> buf) : buf_(buf) {}

  std::uint8_t u8() {
    need(1);
    return buf_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * b);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(buf_[pos_++]) << (8 * b);
    return std::bit_cast<double>(v);
  }
  std::size_t position() const { return pos_; }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t k) const {
    if (pos_ + k > buf_.size()) throw Error("wire: truncated message");
  }
  std::span<const std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

}  // namespace wire

inline std::vector<std::uint8_t> encode(const Message& msg) {
  std::vector<std::uint8_t> out;
  wire::put_u8(out, static_cast<std::uint8_t>(msg.tag()));
  wire::put_u32(out, msg.machine_id);
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, IndexSet>) {
          wire::put_u32(out, static_cast<std::uint32_t>(p.indices.size()));
          for (auto i : p.indices) wire::put_u32(out, i);
        } else if constexpr (std::is_same_v<T, SignedIndexSet>) {
          wire::put_u32(out, static_cast<std::uint32_t>(p.indices.size()));
          for (auto i : p.indices) wire::put_u32(out, i);
          std::vector<std::uint8_t> packed((p.signs.size() + 7) / 8, 0);
          for (std::size_t k = 0; k < p.signs.size(); ++k)
            if (p.signs[k] > 0) packed[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
          out.insert(out.end(), packed.begin(), packed.end());
        } else if constexpr (std::is_same_v<T, DenseEstimate>) {
          wire::put_u32(out, static_cast<std::uint32_t>(p.values.size()));
          for (Eigen::Index i = 0; i < p.values.size(); ++i) wire::put_f64(out, p.values[i]);
        } else if constexpr (std::is_same_v<T, RestrictedEstimate>) {
          wire::put_u32(out, static_cast<std::uint32_t>(p.support.size()));
          for (auto i : p.support) wire::put_u32(out, i);
          for (Eigen::Index i = 0; i < p.beta.size(); ++i) wire::put_f64(out, p.beta[i]);
        } else {
          const auto k = static_cast<Eigen::Index>(p.support.size());
          wire::put_u32(out, static_cast<std::uint32_t>(k));
          for (auto i : p.support) wire::put_u32(out, i);
          for (Eigen::Index r = 0; r < k; ++r)
            for (Eigen::Index c = 0; c < k; ++c) wire::put_f64(out, p.gram(r, c));
          for (Eigen::Index i = 0; i < k; ++i) wire::put_f64(out, p.xty[i]);
        }
      },
      msg.payload);
  return out;
}

inline Message decode(std::span<const std::uint8_t> buf) {
  wire::Reader rd(buf);
  const auto tag = static_cast<PayloadTag>(rd.u8());
  Message msg;
  msg.machine_id = rd.u32();
  const std::uint32_t count = rd.u32();
  auto read_indices = [&] {
    Support s(count);
    for (auto& i : s) i = rd.u32();
    return s;
  };
  switch (tag) {
    case PayloadTag::index_set:
      msg.payload = IndexSet{read_indices()};
      break;
    case PayloadTag::signed_index_set: {
      SignedIndexSet p;
      p.indices = read_indices();
      p.signs.resize(count);
      std::uint8_t byte = 0;
      for (std::uint32_t k = 0; k < count; ++k) {
        if (k % 8 == 0) byte = rd.u8();
        p.signs[k] = (byte >> (k % 8)) & 1u ? 1 : -1;
      }
      msg.payload = std::move(p);
      break;
    }
    case PayloadTag::dense_estimate: {
      DenseEstimate p;
      p.values.resize(count);
      for (std::uint32_t i = 0; i < count; ++i) p.values[i] = rd.f64();
      msg.payload = std::move(p);
      break;
    }
    case PayloadTag::restricted_estimate: {
      RestrictedEstimate p;
      p.support = read_indices();
      p.beta.resize(count);
      for (std::uint32_t i = 0; i < count; ++i) p.beta[i] = rd.f64();
      msg.payload = std::move(p);
      break;
    }
    case PayloadTag::gram_summary: {
      GramSummary p;
      p.support = read_indices();
      p.gram.resize(count, count);
      for (std::uint32_t r = 0; r < count; ++r)
        for (std::uint32_t c = 0; c < count; ++c) p.gram(r, c) = rd.f64();
      p.xty.resize(count);
      for (std::uint32_t i = 0; i < count; ++i) p.xty[i] = rd.f64();
      msg.payload = std::move(p);
      break;
    }
    default:
      throw Error("wire: unknown payload tag");
  }
  if (!rd.done()) throw Error("wire: trailing bytes after message");
  return msg;
}

inline std::uint64_t wire_bytes(const Message& msg) { return encode(msg).size(); }

/// Uplink traffic per (machine, round).
class CommLedger {
 public:
  struct Entry {
    std::uint64_t payload_bits = 0;
    std::uint64_t wire_bytes = 0;
    std::uint64_t message_count = 0;
  };

  explicit CommLedger(std::uint64_t d = 1) : d_(d) {}

  std::uint64_t record(const Message& msg, int round) {
    const std::uint64_t bits = bit_cost(msg, d_);
    auto& e = entries_[{msg.machine_id, round}];
    e.payload_bits += bits;
    e.wire_bytes += wire_bytes(msg);
    e.message_count += 1;
    return bits;
  }

  std::uint64_t total_bits() const {
    std::uint64_t t = 0;
    for (const auto& [key, e] : entries_) t += e.payload_bits;
    return t;
  }

  std::uint64_t round_bits(int round) const {
    std::uint64_t t = 0;
    for (const auto& [key, e] : entries_)
      if (key.second == round) t += e.payload_bits;
    return t;
  }

  std::uint64_t round_wire_bytes(int round) const {
    std::uint64_t t = 0;
    for (const auto& [key, e] : entries_)
      if (key.second == round) t += e.wire_bytes;
    return t;
  }

  /// Bits of every machine in `round`, indexed by machine id (0 when silent).
  std::vector<std::uint64_t> per_machine_bits(int round, std::uint32_t machines) const {
    std::vector<std::uint64_t> out(machines, 0);
    for (const auto& [key, e] : entries_)
      if (key.second == round && key.first < machines) out[key.first] = e.payload_bits;
    return out;
  }

  const std::map<std::pair<std::uint32_t, int>, Entry>& entries() const { return entries_; }

 private:
  std::uint64_t d_;
  std::map<std::pair<std::uint32_t, int>, Entry> entries_;
};

}  // namespace sparsevote
