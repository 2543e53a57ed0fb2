// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ghostserve/gf256.hpp"

namespace ghostserve {

enum class CodeKind { kXor, kRdp, kReedSolomon };

inline const char* to_string(CodeKind k) {
  switch (k) {
    case CodeKind::kXor: return "xor";
    case CodeKind::kRdp: return "rdp";
    case CodeKind::kReedSolomon: return "rs";
  }
  return "?";
}

// Thrown when an erasure pattern exceeds what the scheme can repair. Callers
// that own a recompute path catch this and fall back.
class UnrecoverableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// n data shards, k parity shards. XOR fixes k=1, RDP fixes k=2,
// Reed-Solomon takes 1 <= k <= n with n + k <= 255 (byte-symbol field).
struct CodingScheme {
  CodeKind kind = CodeKind::kXor;
  int n = 1;
  int k = 1;

  void validate() const {
    if (n < 1) throw std::invalid_argument("coding: data shard count must be positive");
    if (k < 1) throw std::invalid_argument("coding: parity shard count must be positive");
    if (n + k > 255)
      throw std::invalid_argument("coding: n + k exceeds the GF(2^8) bound of 255");
    switch (kind) {
      case CodeKind::kXor:
        if (k != 1) throw std::invalid_argument("coding: xor requires exactly one parity shard");
        break;
      case CodeKind::kRdp:
        if (k != 2) throw std::invalid_argument("coding: rdp requires exactly two parity shards");
        break;
      case CodeKind::kReedSolomon:
        if (k > n) throw std::invalid_argument("coding: reed-solomon requires k <= n");
        break;
    }
  }

  static CodingScheme xor_code(int n) { return {CodeKind::kXor, n, 1}; }
  static CodingScheme rdp(int n) { return {CodeKind::kRdp, n, 2}; }
  static CodingScheme reed_solomon(int n, int k) { return {CodeKind::kReedSolomon, n, k}; }

  bool operator==(const CodingScheme&) const = default;
};

inline int max_tolerance(const CodingScheme& s) {
  switch (s.kind) {
    case CodeKind::kXor: return 1;
    case CodeKind::kRdp: return 2;
    case CodeKind::kReedSolomon: return s.k;
  }
  return 0;
}

// Parity bytes as a fraction of what full replication would store.
inline double memory_overhead_ratio(const CodingScheme& s) {
  return static_cast<double>(s.k) / static_cast<double>(s.n);
}

// k x n coefficient view of the code. For Reed-Solomon these are the actual
// GF(2^8) multipliers (systematic Cauchy construction); for XOR and RDP the
// entries are 0/1 membership masks -- every data shard participates in every
// parity -- and the positional row/diagonal structure of RDP lives in the
// codec itself.
struct EncodingMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> coef;  // row-major

  std::uint8_t at(int r, int c) const { return coef[static_cast<std::size_t>(r) * cols + c]; }
};

inline EncodingMatrix build_encoding_matrix(const CodingScheme& scheme) {
  scheme.validate();
  EncodingMatrix m;
  m.rows = scheme.k;
  m.cols = scheme.n;
  m.coef.assign(static_cast<std::size_t>(scheme.k) * scheme.n, 0);
  switch (scheme.kind) {
    case CodeKind::kXor:
    case CodeKind::kRdp:
      std::fill(m.coef.begin(), m.coef.end(), std::uint8_t{1});
      break;
    case CodeKind::kReedSolomon:
      // Cauchy points: x_i = i for parity rows, y_j = k + j for data columns.
      // The two sets are disjoint, so every entry 1/(x_i ^ y_j) is defined and
      // every square submatrix of the stacked [I; C] system is invertible.
      for (int i = 0; i < scheme.k; ++i)
        for (int j = 0; j < scheme.n; ++j)
          m.coef[static_cast<std::size_t>(i) * scheme.n + j] =
              gf256::inv(static_cast<std::uint8_t>(i ^ (scheme.k + j)));
      break;
  }
  return m;
}

// One coded unit: n equal-length data shards plus k parity shards.
struct ShardSet {
  std::vector<std::vector<std::uint8_t>> data;
  std::vector<std::vector<std::uint8_t>> parity;
  std::size_t shard_len = 0;
};

// Set of lost shard indices in [0, n+k); data shards come first.
struct ErasurePattern {
  std::vector<int> lost;

  explicit ErasurePattern(std::vector<int> indices = {}) : lost(std::move(indices)) {
    std::sort(lost.begin(), lost.end());
    lost.erase(std::unique(lost.begin(), lost.end()), lost.end());
  }

  bool contains(int idx) const { return std::binary_search(lost.begin(), lost.end(), idx); }
};

using ConstShardSpan = std::span<const std::uint8_t>;

namespace detail {

inline void xor_bytes(std::uint8_t* dst, const std::uint8_t* src, std::size_t len) {
  std::size_t i = 0;
  for (; i + 8 <= len; i += 8) {
    std::uint64_t a, b;
    std::memcpy(&a, dst + i, 8);
    std::memcpy(&b, src + i, 8);
    a ^= b;
    std::memcpy(dst + i, &a, 8);
  }
  for (; i < len; ++i) dst[i] ^= src[i];
}

// dst ^= coef * src, byte-wise over GF(2^8).
inline void mul_xor_bytes(std::uint8_t* dst, const std::uint8_t* src, std::size_t len,
                          std::uint8_t coef) {
  if (coef == 0) return;
  if (coef == 1) {
    xor_bytes(dst, src, len);
    return;
  }
  const std::uint8_t* row = gf256::mul_row(coef);
  std::size_t i = 0;
  for (; i + 4 <= len; i += 4) {
    dst[i] ^= row[src[i]];
    dst[i + 1] ^= row[src[i + 1]];
    dst[i + 2] ^= row[src[i + 2]];
    dst[i + 3] ^= row[src[i + 3]];
  }
  for (; i < len; ++i) dst[i] ^= row[src[i]];
}

inline int smallest_prime_ge(int x) {
  auto is_prime = [](int v) {
    if (v < 2) return false;
    for (int d = 2; d * d <= v; ++d)
      if (v % d == 0) return false;
    return true;
  };
  int p = std::max(x, 2);
  while (!is_prime(p)) ++p;
  return p;
}

// Gauss-Jordan inverse of a dense GF(2^8) matrix. Returns false if singular.
inline bool gf_invert_matrix(std::vector<std::uint8_t>& m, int dim,
                             std::vector<std::uint8_t>& out) {
  out.assign(static_cast<std::size_t>(dim) * dim, 0);
  for (int i = 0; i < dim; ++i) out[static_cast<std::size_t>(i) * dim + i] = 1;
  auto at = [dim](std::vector<std::uint8_t>& v, int r, int c) -> std::uint8_t& {
    return v[static_cast<std::size_t>(r) * dim + c];
  };
  for (int col = 0; col < dim; ++col) {
    int pivot = -1;
    for (int r = col; r < dim; ++r)
      if (at(m, r, col) != 0) {
        pivot = r;
        break;
      }
    if (pivot < 0) return false;
    if (pivot != col)
      for (int c = 0; c < dim; ++c) {
        std::swap(at(m, pivot, c), at(m, col, c));
        std::swap(at(out, pivot, c), at(out, col, c));
      }
    const std::uint8_t piv_inv = gf256::inv(at(m, col, col));
    for (int c = 0; c < dim; ++c) {
      at(m, col, c) = gf256::mul(at(m, col, c), piv_inv);
      at(out, col, c) = gf256::mul(at(out, col, c), piv_inv);
    }
    for (int r = 0; r < dim; ++r) {
      if (r == col) continue;
      const std::uint8_t f = at(m, r, col);
      if (f == 0) continue;
      for (int c = 0; c < dim; ++c) {
        at(m, r, c) ^= gf256::mul(f, at(m, col, c));
        at(out, r, c) ^= gf256::mul(f, at(out, col, c));
      }
    }
  }
  return true;
}

/*
 * RDP geometry.
 *
 * The code is laid out over a (p-1)-row, (p+1)-column array for the smallest
 * prime p with p-1 >= n. Columns 0..p-2 are data (columns n..p-2 are virtual
 * all-zero shards used to shorten the code), column p-1 is row parity, and
 * the diagonal-parity column sits outside the array. Cell (r, c) of stripe t
 * is byte t*(p-1) + r of column c's buffer. Diagonal d = (r + c) mod p
 * collects one cell from each of the p in-array columns; diagonals 0..p-2 are
 * stored at rows 0..p-2 of the diagonal-parity buffer and diagonal p-1 is
 * never stored.
 *
 * A buffer tail shorter than p-1 bytes cannot carry a full diagonal set, so
 * tail bytes are protected by a P/Q pair instead: P is the same byte-wise XOR
 * as row parity and Q[b] = sum over data columns c of 2^c * data_c[b] in
 * GF(2^8), which keeps any two-erasure pattern solvable on the tail.
 */
struct RdpLayout {
  int p;          // prime
  int rows;       // p - 1 bytes per stripe per shard
  std::size_t full;  // bytes covered by whole stripes
  std::size_t len;

  RdpLayout(int n, std::size_t shard_len) : p(smallest_prime_ge(n + 1)), rows(p - 1), len(shard_len) {
    full = shard_len / static_cast<std::size_t>(rows) * static_cast<std::size_t>(rows);
  }
};

}  // namespace detail

namespace detail {

inline void check_equal_lengths(std::span<const ConstShardSpan> bufs) {
  for (std::size_t i = 1; i < bufs.size(); ++i)
    if (bufs[i].size() != bufs[0].size())
      throw std::invalid_argument("coding: shard buffers must all have the same length");
}

inline void encode_xor(std::span<const ConstShardSpan> data,
                       std::vector<std::vector<std::uint8_t>>& parity) {
  auto& p0 = parity[0];
  for (const auto& d : data) xor_bytes(p0.data(), d.data(), d.size());
}

inline void encode_rs(const CodingScheme& scheme, std::span<const ConstShardSpan> data,
                      std::vector<std::vector<std::uint8_t>>& parity) {
  const EncodingMatrix m = build_encoding_matrix(scheme);
  for (int i = 0; i < scheme.k; ++i)
    for (int j = 0; j < scheme.n; ++j)
      mul_xor_bytes(parity[i].data(), data[j].data(), data[j].size(), m.at(i, j));
}

inline void encode_rdp(const CodingScheme& scheme, std::span<const ConstShardSpan> data,
                       std::vector<std::vector<std::uint8_t>>& parity) {
  const RdpLayout lay(scheme.n, data.empty() ? 0 : data[0].size());
  auto& row_par = parity[0];
  auto& diag_par = parity[1];

  // Row parity doubles as the tail's P parity: plain XOR over the whole span.
  for (const auto& d : data) xor_bytes(row_par.data(), d.data(), d.size());

  const int p = lay.p;
  for (std::size_t base = 0; base < lay.full; base += static_cast<std::size_t>(lay.rows)) {
    for (int c = 0; c < scheme.n; ++c) {
      const std::uint8_t* col = data[c].data() + base;
      for (int r = 0; r < lay.rows; ++r) {
        const int d = (r + c) % p;
        if (d != p - 1) diag_par[base + static_cast<std::size_t>(d)] ^= col[r];
      }
    }
    // Row-parity column participates in the diagonals as column p-1.
    const std::uint8_t* col = row_par.data() + base;
    for (int r = 0; r < lay.rows; ++r) {
      const int d = (r + p - 1) % p;
      if (d != p - 1) diag_par[base + static_cast<std::size_t>(d)] ^= col[r];
    }
  }

  // Tail Q parity.
  for (int c = 0; c < scheme.n; ++c)
    mul_xor_bytes(diag_par.data() + lay.full, data[c].data() + lay.full, lay.len - lay.full,
                  gf256::exp2(static_cast<unsigned>(c)));
}

}  // namespace detail

// Encode n data shards into k parity shards. Deterministic; a single fused
// pass per (parity, data) pair.
inline std::vector<std::vector<std::uint8_t>> encode(const CodingScheme& scheme,
                                                     std::span<const ConstShardSpan> data) {
  scheme.validate();
  if (static_cast<int>(data.size()) != scheme.n)
    throw std::invalid_argument("coding: expected " + std::to_string(scheme.n) +
                                " data shards, got " + std::to_string(data.size()));
  detail::check_equal_lengths(data);
  const std::size_t len = data.empty() ? 0 : data[0].size();
  std::vector<std::vector<std::uint8_t>> parity(static_cast<std::size_t>(scheme.k));
  for (auto& p : parity) p.assign(len, 0);

  switch (scheme.kind) {
    case CodeKind::kXor: detail::encode_xor(data, parity); break;
    case CodeKind::kRdp: detail::encode_rdp(scheme, data, parity); break;
    case CodeKind::kReedSolomon: detail::encode_rs(scheme, data, parity); break;
  }
  return parity;
}

inline std::vector<std::vector<std::uint8_t>> encode(
    const CodingScheme& scheme, const std::vector<std::vector<std::uint8_t>>& data) {
  std::vector<ConstShardSpan> spans(data.begin(), data.end());
  return encode(scheme, spans);
}

namespace detail {

// Recover one or two lost columns of the RDP array (data and/or the
// row-parity column) for every full stripe, plus the P/Q tail. `lost_cols`
// holds array-column indices; outputs are written into `out` keyed by column.
inline void rdp_recover_columns(const CodingScheme& scheme, const RdpLayout& lay,
                                const std::map<int, ConstShardSpan>& cols_present,
                                std::vector<int> lost_cols,
                                std::map<int, std::vector<std::uint8_t>>& out,
                                ConstShardSpan diag_par) {
  const int p = lay.p;
  for (int c : lost_cols) out[c].assign(lay.len, 0);

  auto col_ptr = [&](int c) -> const std::uint8_t* {
    auto it = cols_present.find(c);
    return it == cols_present.end() ? nullptr : it->second.data();
  };

  if (lost_cols.size() == 1 && lost_cols[0] != p - 1) {
    // Single data column: row parity is present, XOR everything else.
    auto& dst = out[lost_cols[0]];
    for (const auto& [c, span] : cols_present) {
      (void)c;
      xor_bytes(dst.data(), span.data(), lay.len);
    }
    return;
  }
  if (lost_cols.size() == 1) {
    // Row-parity column: re-encode from data.
    auto& dst = out[p - 1];
    for (const auto& [c, span] : cols_present)
      if (c != p - 1) xor_bytes(dst.data(), span.data(), lay.len);
    return;
  }

  const int i = std::min(lost_cols[0], lost_cols[1]);
  const int j = std::max(lost_cols[0], lost_cols[1]);
  std::uint8_t* out_i = out[i].data();
  std::uint8_t* out_j = out[j].data();

  // Full stripes: two independent diagonal-walk chains. Each chain solves its
  // primary column's cell from a stored diagonal, then the partner's cell in
  // the same row from the row relation (all p in-array columns XOR to zero).
  std::vector<const std::uint8_t*> col(static_cast<std::size_t>(p), nullptr);
  for (int c = 0; c < p; ++c) col[static_cast<std::size_t>(c)] = col_ptr(c);

  for (std::size_t base = 0; base < lay.full; base += static_cast<std::size_t>(lay.rows)) {
    auto cell = [&](int c, int r) -> std::uint8_t {
      if (c == i) return out_i[base + static_cast<std::size_t>(r)];
      if (c == j) return out_j[base + static_cast<std::size_t>(r)];
      const std::uint8_t* ptr = col[static_cast<std::size_t>(c)];
      return ptr ? ptr[base + static_cast<std::size_t>(r)] : 0;
    };
    auto run_chain = [&](int primary, int partner, std::uint8_t* prim_out,
                         std::uint8_t* part_out) {
      int d = (partner - 1 + p) % p;  // diagonal with no partner cell
      const int step = ((partner - primary) % p + p) % p;
      while (d != p - 1) {
        const int r = ((d - primary) % p + p) % p;
        std::uint8_t v = diag_par[base + static_cast<std::size_t>(d)];
        for (int c = 0; c < p; ++c) {
          if (c == primary) continue;
          const int rc = ((d - c) % p + p) % p;
          if (rc != p - 1) v ^= cell(c, rc);
        }
        prim_out[base + static_cast<std::size_t>(r)] = v;
        std::uint8_t w = 0;
        for (int c = 0; c < p; ++c)
          if (c != partner) w ^= cell(c, r);
        part_out[base + static_cast<std::size_t>(r)] = w;
        d = (d + step) % p;
      }
    };
    run_chain(i, j, out_i, out_j);
    run_chain(j, i, out_j, out_i);
  }

  // Tail: P/Q algebra over the real data columns. Column p-1 is P itself.
  const std::size_t tail = lay.len - lay.full;
  if (tail == 0) return;
  auto q_coef = [](int c) { return gf256::exp2(static_cast<unsigned>(c)); };
  std::vector<std::uint8_t> psum(tail, 0), qsum(tail, 0);
  for (int c = 0; c < scheme.n; ++c) {
    if (c == i || c == j) continue;
    const std::uint8_t* ptr = col_ptr(c);
    if (ptr == nullptr) continue;
    xor_bytes(psum.data(), ptr + lay.full, tail);
    mul_xor_bytes(qsum.data(), ptr + lay.full, tail, q_coef(c));
  }
  if (j == p - 1) {
    // Data column i plus the P column: solve i from Q, then rebuild P.
    mul_xor_bytes(qsum.data(), diag_par.data() + lay.full, tail, 1);
    const std::uint8_t ci = gf256::inv(q_coef(i));
    for (std::size_t b = 0; b < tail; ++b)
      out_i[lay.full + b] = gf256::mul(qsum[b], ci);
    for (std::size_t b = 0; b < tail; ++b)
      out_j[lay.full + b] = static_cast<std::uint8_t>(psum[b] ^ out_i[lay.full + b]);
  } else {
    // Two data columns: P' = di ^ dj, Q' = 2^i*di ^ 2^j*dj.
    const std::uint8_t* p_par = col_ptr(p - 1);
    for (std::size_t b = 0; b < tail; ++b) psum[b] ^= p_par[lay.full + b];
    mul_xor_bytes(qsum.data(), diag_par.data() + lay.full, tail, 1);
    const std::uint8_t gi = q_coef(i), gj = q_coef(j);
    const std::uint8_t denom_inv = gf256::inv(static_cast<std::uint8_t>(gi ^ gj));
    for (std::size_t b = 0; b < tail; ++b) {
      const std::uint8_t di =
          gf256::mul(static_cast<std::uint8_t>(qsum[b] ^ gf256::mul(gj, psum[b])), denom_inv);
      out_i[lay.full + b] = di;
      out_j[lay.full + b] = static_cast<std::uint8_t>(psum[b] ^ di);
    }
  }
}

}  // namespace detail

// Rebuild the lost *data* shards from the survivors. `surviving` maps shard
// index (data 0..n-1, parity n..n+k-1) to its buffer and must cover every
// index outside `lost`. Lost parity shards are not returned; re-encode to
// restore them. Throws UnrecoverableError when the pattern exceeds the
// scheme's tolerance.
inline std::map<int, std::vector<std::uint8_t>> reconstruct(
    const CodingScheme& scheme, const std::map<int, ConstShardSpan>& surviving,
    const ErasurePattern& lost) {
  scheme.validate();
  const int total = scheme.n + scheme.k;
  for (int idx : lost.lost)
    if (idx < 0 || idx >= total)
      throw std::invalid_argument("coding: lost shard index out of range");
  if (static_cast<int>(lost.lost.size()) > max_tolerance(scheme))
    throw UnrecoverableError("coding: " + std::to_string(lost.lost.size()) +
                             " erasures exceed tolerance " +
                             std::to_string(max_tolerance(scheme)) + " for scheme " +
                             to_string(scheme.kind));

  std::size_t len = 0;
  bool have_len = false;
  for (int idx = 0; idx < total; ++idx) {
    if (lost.contains(idx)) continue;
    auto it = surviving.find(idx);
    if (it == surviving.end())
      throw std::invalid_argument("coding: surviving shard " + std::to_string(idx) +
                                  " missing from input");
    if (!have_len) {
      len = it->second.size();
      have_len = true;
    } else if (it->second.size() != len) {
      throw std::invalid_argument("coding: shard buffers must all have the same length");
    }
  }

  std::vector<int> lost_data, lost_parity;
  for (int idx : lost.lost)
    (idx < scheme.n ? lost_data : lost_parity).push_back(idx);

  std::map<int, std::vector<std::uint8_t>> out;
  if (lost_data.empty()) return out;

  switch (scheme.kind) {
    case CodeKind::kXor: {
      auto& dst = out[lost_data[0]];
      dst.assign(len, 0);
      for (const auto& [idx, span] : surviving)
        if (!lost.contains(idx)) detail::xor_bytes(dst.data(), span.data(), len);
      break;
    }
    case CodeKind::kRdp: {
      const detail::RdpLayout lay(scheme.n, len);
      // Map shard space onto array columns: data c -> c, row parity -> p-1.
      std::map<int, ConstShardSpan> cols;
      for (const auto& [idx, span] : surviving) {
        if (lost.contains(idx)) continue;
        if (idx < scheme.n)
          cols[idx] = span;
        else if (idx == scheme.n)
          cols[lay.p - 1] = span;
      }
      std::vector<int> lost_cols;
      for (int d : lost_data) lost_cols.push_back(d);
      const bool row_parity_lost = lost.contains(scheme.n);
      const bool diag_lost = lost.contains(scheme.n + 1);
      if (row_parity_lost && !lost_data.empty()) lost_cols.push_back(lay.p - 1);
      if (diag_lost) {
        // Diagonal parity unavailable: at most one more loss, repair via rows.
        std::map<int, std::vector<std::uint8_t>> cols_out;
        detail::rdp_recover_columns(scheme, lay, cols, lost_cols, cols_out, {});
        for (int d : lost_data) out[d] = std::move(cols_out[d]);
        break;
      }
      auto diag_it = surviving.find(scheme.n + 1);
      if (diag_it == surviving.end())
        throw std::invalid_argument("coding: surviving shard " +
                                    std::to_string(scheme.n + 1) + " missing from input");
      std::map<int, std::vector<std::uint8_t>> cols_out;
      detail::rdp_recover_columns(scheme, lay, cols, lost_cols, cols_out, diag_it->second);
      for (int d : lost_data) out[d] = std::move(cols_out[d]);
      break;
    }
    case CodeKind::kReedSolomon: {
      const EncodingMatrix mat = build_encoding_matrix(scheme);
      const int e = static_cast<int>(lost_data.size());
      // Pick e surviving parity rows and solve the e x e system once; the
      // inverse folds into per-source coefficients applied stripe-wise.
      std::vector<int> rows;
      for (int i = 0; i < scheme.k && static_cast<int>(rows.size()) < e; ++i)
        if (!lost.contains(scheme.n + i)) rows.push_back(i);
      if (static_cast<int>(rows.size()) < e)
        throw UnrecoverableError("coding: not enough surviving parity shards");
      std::vector<std::uint8_t> sys(static_cast<std::size_t>(e) * e);
      for (int a = 0; a < e; ++a)
        for (int b = 0; b < e; ++b)
          sys[static_cast<std::size_t>(a) * e + b] = mat.at(rows[a], lost_data[b]);
      std::vector<std::uint8_t> inv_sys;
      if (!detail::gf_invert_matrix(sys, e, inv_sys))
        throw UnrecoverableError("coding: singular decode system");  // cannot happen for Cauchy

      for (int b = 0; b < e; ++b) out[lost_data[b]].assign(len, 0);
      for (int b = 0; b < e; ++b) {
        std::uint8_t* dst = out[lost_data[b]].data();
        for (int j = 0; j < scheme.n; ++j) {
          if (lost.contains(j)) continue;
          std::uint8_t coef = 0;
          for (int a = 0; a < e; ++a)
            coef ^= gf256::mul(inv_sys[static_cast<std::size_t>(b) * e + a], mat.at(rows[a], j));
          detail::mul_xor_bytes(dst, surviving.at(j).data(), len, coef);
        }
        for (int a = 0; a < e; ++a)
          detail::mul_xor_bytes(dst, surviving.at(scheme.n + rows[a]).data(), len,
                                inv_sys[static_cast<std::size_t>(b) * e + a]);
      }
      break;
    }
  }
  return out;
}

}  // namespace ghostserve
