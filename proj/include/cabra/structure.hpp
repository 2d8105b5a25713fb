#ifndef CABRA_STRUCTURE_HPP_
#define CABRA_STRUCTURE_HPP_

#include <optional>
#include <utility>
#include <vector>

#include "cabra/core.hpp"

namespace cabra {

/// Lifted spaces of the coupled inclusion.
///   Gy: the original variable y, one G_k per block.
///   Hx: operator-grouped copies (x_i)_i, x_i stacking G_k for k in K^A_i.
///   Bx: cocoercive-grouped copies (x'_j)_j.
///   Hy: block-grouped copies, n_k copies of G_k per block.
///   By: block-grouped copies, m_k copies of G_k per block.
///   Hz: n_k - 1 copies of G_k per block.
enum class Space { Gy, Hx, Bx, Hy, By, Hz };

inline const char* space_name(Space s) {
  switch (s) {
    case Space::Gy: return "G_y";
    case Space::Hx: return "H_x";
    case Space::Bx: return "B_x";
    case Space::Hy: return "H_y";
    case Space::By: return "B_y";
    case Space::Hz: return "H_z";
  }
  return "?";
}

/// Coupling combinatorics of the problem. All indices are 0-based; the JSON
/// form is 1-based. Immutable after build_structure().
struct CouplingStructure {
  int p = 0;
  int n = 0;
  int m = 0;
  std::vector<int> dims;

  std::vector<std::vector<int>> KA;  // per monotone operator, sorted blocks
  std::vector<std::vector<int>> KB;  // per cocoercive operator, sorted blocks
  std::vector<std::vector<int>> Ik;  // per block, sorted monotone operators
  std::vector<std::vector<int>> Jk;  // per block, sorted cocoercive operators

  // s_of[i][o]: position of operator i in I_k for k = KA[i][o].
  std::vector<std::vector<int>> s_of;
  // t_of[j][o]: position of operator j in J_k for k = KB[j][o].
  std::vector<std::vector<int>> t_of;
  // a_slot[k][s]: index o such that KA[Ik[k][s]][o] == k. b_slot likewise.
  std::vector<std::vector<int>> a_slot;
  std::vector<std::vector<int>> b_slot;

  std::vector<int> ibar;    // latest first-touch over K^B_j
  std::vector<int> iunder;  // earliest last-touch over K^B_j
  std::vector<int> istar;   // chosen cutoff operator per j
  // skj[j][o]: position in I_k of the last operator <= istar[j], k = KB[j][o].
  std::vector<std::vector<int>> skj;

  // Flat offsets of every block inside each lifted space.
  std::vector<std::vector<Index>> hx_off;  // [i][o]
  std::vector<Index> hx_op_off;            // start of x_i
  std::vector<std::vector<Index>> bx_off;  // [j][o]
  std::vector<Index> bx_op_off;
  std::vector<Index> gy_off;  // [k]
  std::vector<Index> hy_off;  // [k], copy s at hy_off[k] + s * dims[k]
  std::vector<Index> by_off;
  std::vector<Index> hz_off;
  Index gy_size = 0, hx_size = 0, bx_size = 0, hy_size = 0, by_size = 0,
        hz_size = 0;

  int nk(int k) const { return static_cast<int>(Ik[k].size()); }
  int mk(int k) const { return static_cast<int>(Jk[k].size()); }

  Index hx_op_size(int i) const {
    const Index end = (i + 1 < n) ? hx_op_off[i + 1] : hx_size;
    return end - hx_op_off[i];
  }
  Index bx_op_size(int j) const {
    const Index end = (j + 1 < m) ? bx_op_off[j + 1] : bx_size;
    return end - bx_op_off[j];
  }

  // Position o of block k inside KA[i], or -1.
  int slot_A(int i, int k) const {
    const auto& ks = KA[i];
    auto it = std::lower_bound(ks.begin(), ks.end(), k);
    return (it != ks.end() && *it == k) ? static_cast<int>(it - ks.begin())
                                        : -1;
  }
  int slot_B(int j, int k) const {
    const auto& ks = KB[j];
    auto it = std::lower_bound(ks.begin(), ks.end(), k);
    return (it != ks.end() && *it == k) ? static_cast<int>(it - ks.begin())
                                        : -1;
  }

  Index size(Space s) const {
    switch (s) {
      case Space::Gy: return gy_size;
      case Space::Hx: return hx_size;
      case Space::Bx: return bx_size;
      case Space::Hy: return hy_size;
      case Space::By: return by_size;
      case Space::Hz: return hz_size;
    }
    return 0;
  }

  void require(Space s, const Vec& v, const char* what) const {
    if (v.size() != size(s))
      throw ShapeMismatch(std::string(what) + ": expected a " + space_name(s) +
                          " vector of length " + std::to_string(size(s)) +
                          ", got " + std::to_string(v.size()));
  }
};

/// Builds the structure from K-sets (0-based block indices, any order).
/// istar: std::nullopt picks the earliest legal cutoff ibar_j for every j.
inline CouplingStructure build_structure(
    std::vector<std::vector<int>> KA, std::vector<std::vector<int>> KB,
    std::vector<int> dims, std::optional<std::vector<int>> istar = std::nullopt) {
  CouplingStructure cs;
  cs.p = static_cast<int>(dims.size());
  cs.n = static_cast<int>(KA.size());
  cs.m = static_cast<int>(KB.size());
  for (int d : dims)
    if (d <= 0) throw ShapeMismatch("block dimensions must be positive");
  cs.dims = std::move(dims);

  auto normalize = [&](std::vector<std::vector<int>>& sets, const char* name) {
    for (auto& s : sets) {
      std::sort(s.begin(), s.end());
      s.erase(std::unique(s.begin(), s.end()), s.end());
      for (int k : s)
        if (k < 0 || k >= cs.p)
          throw ShapeMismatch(std::string(name) + " references block " +
                              std::to_string(k + 1) + " outside 1.." +
                              std::to_string(cs.p));
    }
  };
  normalize(KA, "K^A");
  normalize(KB, "K^B");
  for (int j = 0; j < cs.m; ++j)
    if (KB[j].empty())
      throw CutoffInfeasible(j, "K^B_j must be nonempty");
  for (int i = 0; i < cs.n; ++i)
    if (KA[i].empty())
      throw ShapeMismatch("K^A_" + std::to_string(i + 1) + " is empty");
  cs.KA = std::move(KA);
  cs.KB = std::move(KB);

  cs.Ik.assign(cs.p, {});
  cs.Jk.assign(cs.p, {});
  for (int i = 0; i < cs.n; ++i)
    for (int k : cs.KA[i]) cs.Ik[k].push_back(i);
  for (int j = 0; j < cs.m; ++j)
    for (int k : cs.KB[j]) cs.Jk[k].push_back(j);
  for (int k = 0; k < cs.p; ++k)
    if (cs.nk(k) < 2) throw BlockUnderCovered(k);

  cs.s_of.resize(cs.n);
  cs.a_slot.assign(cs.p, {});
  for (int k = 0; k < cs.p; ++k) cs.a_slot[k].assign(cs.nk(k), -1);
  for (int i = 0; i < cs.n; ++i) {
    cs.s_of[i].resize(cs.KA[i].size());
    for (std::size_t o = 0; o < cs.KA[i].size(); ++o) {
      const int k = cs.KA[i][o];
      const auto& ik = cs.Ik[k];
      const int s = static_cast<int>(
          std::lower_bound(ik.begin(), ik.end(), i) - ik.begin());
      cs.s_of[i][o] = s;
      cs.a_slot[k][s] = static_cast<int>(o);
    }
  }
  cs.t_of.resize(cs.m);
  cs.b_slot.assign(cs.p, {});
  for (int k = 0; k < cs.p; ++k) cs.b_slot[k].assign(cs.mk(k), -1);
  for (int j = 0; j < cs.m; ++j) {
    cs.t_of[j].resize(cs.KB[j].size());
    for (std::size_t o = 0; o < cs.KB[j].size(); ++o) {
      const int k = cs.KB[j][o];
      const auto& jk = cs.Jk[k];
      const int t = static_cast<int>(
          std::lower_bound(jk.begin(), jk.end(), j) - jk.begin());
      cs.t_of[j][o] = t;
      cs.b_slot[k][t] = static_cast<int>(o);
    }
  }

  // Cutoffs.
  cs.ibar.resize(cs.m);
  cs.iunder.resize(cs.m);
  for (int j = 0; j < cs.m; ++j) {
    int lo = -1, hi = cs.n;
    for (int k : cs.KB[j]) {
      lo = std::max(lo, cs.Ik[k].front());
      hi = std::min(hi, cs.Ik[k].back());
    }
    cs.ibar[j] = lo;
    cs.iunder[j] = hi;
    if (lo >= hi)
      throw CutoffInfeasible(j, "ibar_j = " + std::to_string(lo + 1) +
                                    " is not below iunder_j = " +
                                    std::to_string(hi + 1));
  }
  if (istar) {
    if (static_cast<int>(istar->size()) != cs.m)
      throw ShapeMismatch("istar must have one entry per cocoercive operator");
    cs.istar = *istar;
  } else {
    cs.istar = cs.ibar;
  }
  cs.skj.resize(cs.m);
  for (int j = 0; j < cs.m; ++j) {
    const int is = cs.istar[j];
    if (is < cs.ibar[j] || is >= cs.iunder[j])
      throw CutoffInfeasible(j, "cutoff i*_j = " + std::to_string(is + 1) +
                                    " outside [" + std::to_string(cs.ibar[j] + 1) +
                                    ", " + std::to_string(cs.iunder[j] + 1) + ")");
    cs.skj[j].resize(cs.KB[j].size());
    for (std::size_t o = 0; o < cs.KB[j].size(); ++o) {
      const auto& ik = cs.Ik[cs.KB[j][o]];
      const int s = static_cast<int>(
          std::upper_bound(ik.begin(), ik.end(), is) - ik.begin()) - 1;
      cs.skj[j][o] = s;
    }
  }

  // Offsets.
  Index off = 0;
  cs.gy_off.resize(cs.p);
  for (int k = 0; k < cs.p; ++k) {
    cs.gy_off[k] = off;
    off += cs.dims[k];
  }
  cs.gy_size = off;

  off = 0;
  cs.hx_off.resize(cs.n);
  cs.hx_op_off.resize(cs.n);
  for (int i = 0; i < cs.n; ++i) {
    cs.hx_op_off[i] = off;
    for (int k : cs.KA[i]) {
      cs.hx_off[i].push_back(off);
      off += cs.dims[k];
    }
  }
  cs.hx_size = off;

  off = 0;
  cs.bx_off.resize(cs.m);
  cs.bx_op_off.resize(cs.m);
  for (int j = 0; j < cs.m; ++j) {
    cs.bx_op_off[j] = off;
    for (int k : cs.KB[j]) {
      cs.bx_off[j].push_back(off);
      off += cs.dims[k];
    }
  }
  cs.bx_size = off;

  Index hy = 0, by = 0, hz = 0;
  cs.hy_off.resize(cs.p);
  cs.by_off.resize(cs.p);
  cs.hz_off.resize(cs.p);
  for (int k = 0; k < cs.p; ++k) {
    cs.hy_off[k] = hy;
    cs.by_off[k] = by;
    cs.hz_off[k] = hz;
    hy += cs.nk(k) * cs.dims[k];
    by += cs.mk(k) * cs.dims[k];
    hz += (cs.nk(k) - 1) * cs.dims[k];
  }
  cs.hy_size = hy;
  cs.by_size = by;
  cs.hz_size = hz;
  return cs;
}

// ---------------------------------------------------------------------------
// Selection operators and their adjoints.

inline Vec select_A(const CouplingStructure& cs, const Vec& y) {
  cs.require(Space::Gy, y, "select_A");
  Vec x(cs.hx_size);
  for (int i = 0; i < cs.n; ++i)
    for (std::size_t o = 0; o < cs.KA[i].size(); ++o) {
      const int k = cs.KA[i][o];
      x.segment(cs.hx_off[i][o], cs.dims[k]) = y.segment(cs.gy_off[k], cs.dims[k]);
    }
  return x;
}

inline Vec adjoint_A(const CouplingStructure& cs, const Vec& x) {
  cs.require(Space::Hx, x, "adjoint_A");
  Vec y = Vec::Zero(cs.gy_size);
  for (int i = 0; i < cs.n; ++i)
    for (std::size_t o = 0; o < cs.KA[i].size(); ++o) {
      const int k = cs.KA[i][o];
      y.segment(cs.gy_off[k], cs.dims[k]) += x.segment(cs.hx_off[i][o], cs.dims[k]);
    }
  return y;
}

inline Vec select_B(const CouplingStructure& cs, const Vec& y) {
  cs.require(Space::Gy, y, "select_B");
  Vec xb(cs.bx_size);
  for (int j = 0; j < cs.m; ++j)
    for (std::size_t o = 0; o < cs.KB[j].size(); ++o) {
      const int k = cs.KB[j][o];
      xb.segment(cs.bx_off[j][o], cs.dims[k]) = y.segment(cs.gy_off[k], cs.dims[k]);
    }
  return xb;
}

inline Vec adjoint_B(const CouplingStructure& cs, const Vec& xb) {
  cs.require(Space::Bx, xb, "adjoint_B");
  Vec y = Vec::Zero(cs.gy_size);
  for (int j = 0; j < cs.m; ++j)
    for (std::size_t o = 0; o < cs.KB[j].size(); ++o) {
      const int k = cs.KB[j][o];
      y.segment(cs.gy_off[k], cs.dims[k]) += xb.segment(cs.bx_off[j][o], cs.dims[k]);
    }
  return y;
}

// ---------------------------------------------------------------------------
// Permutations between block-grouped (Hy/By) and operator-grouped (Hx/Bx).

/// Hy -> Hx: copy s of block k lands in operator Ik[k][s]'s slot for k.
inline Vec permute_A(const CouplingStructure& cs, const Vec& yv) {
  cs.require(Space::Hy, yv, "permute_A");
  Vec x(cs.hx_size);
  for (int k = 0; k < cs.p; ++k)
    for (int s = 0; s < cs.nk(k); ++s) {
      const int i = cs.Ik[k][s];
      x.segment(cs.hx_off[i][cs.a_slot[k][s]], cs.dims[k]) =
          yv.segment(cs.hy_off[k] + s * cs.dims[k], cs.dims[k]);
    }
  return x;
}

inline Vec permute_A_inverse(const CouplingStructure& cs, const Vec& x) {
  cs.require(Space::Hx, x, "permute_A_inverse");
  Vec yv(cs.hy_size);
  for (int k = 0; k < cs.p; ++k)
    for (int s = 0; s < cs.nk(k); ++s) {
      const int i = cs.Ik[k][s];
      yv.segment(cs.hy_off[k] + s * cs.dims[k], cs.dims[k]) =
          x.segment(cs.hx_off[i][cs.a_slot[k][s]], cs.dims[k]);
    }
  return yv;
}

inline Vec permute_B(const CouplingStructure& cs, const Vec& yb) {
  cs.require(Space::By, yb, "permute_B");
  Vec xb(cs.bx_size);
  for (int k = 0; k < cs.p; ++k)
    for (int t = 0; t < cs.mk(k); ++t) {
      const int j = cs.Jk[k][t];
      xb.segment(cs.bx_off[j][cs.b_slot[k][t]], cs.dims[k]) =
          yb.segment(cs.by_off[k] + t * cs.dims[k], cs.dims[k]);
    }
  return xb;
}

inline Vec permute_B_inverse(const CouplingStructure& cs, const Vec& xb) {
  cs.require(Space::Bx, xb, "permute_B_inverse");
  Vec yb(cs.by_size);
  for (int k = 0; k < cs.p; ++k)
    for (int t = 0; t < cs.mk(k); ++t) {
      const int j = cs.Jk[k][t];
      yb.segment(cs.by_off[k] + t * cs.dims[k], cs.dims[k]) =
          xb.segment(cs.bx_off[j][cs.b_slot[k][t]], cs.dims[k]);
    }
  return yb;
}

/// All-copies lift of y into Hy (every copy of block k equals y_k).
inline Vec lift_copies(const CouplingStructure& cs, const Vec& y) {
  cs.require(Space::Gy, y, "lift_copies");
  Vec yv(cs.hy_size);
  for (int k = 0; k < cs.p; ++k)
    for (int s = 0; s < cs.nk(k); ++s)
      yv.segment(cs.hy_off[k] + s * cs.dims[k], cs.dims[k]) =
          y.segment(cs.gy_off[k], cs.dims[k]);
  return yv;
}

// ---------------------------------------------------------------------------
// Consensus subspace N_A.

/// Per block k, the average of its n_k copies.
inline Vec mean_estimate(const CouplingStructure& cs, const Vec& x) {
  cs.require(Space::Hx, x, "mean_estimate");
  Vec y = adjoint_A(cs, x);
  for (int k = 0; k < cs.p; ++k)
    y.segment(cs.gy_off[k], cs.dims[k]) /= static_cast<double>(cs.nk(k));
  return y;
}

/// Orthogonal split x = consensus + residual with consensus in N_A and the
/// residual in N_A^perp.
inline std::pair<Vec, Vec> project_consensus(const CouplingStructure& cs,
                                             const Vec& x) {
  Vec consensus = select_A(cs, mean_estimate(cs, x));
  Vec residual = x - consensus;
  return {std::move(consensus), std::move(residual)};
}

inline Vec project_consensus_perp(const CouplingStructure& cs, const Vec& x) {
  return project_consensus(cs, x).second;
}

}  // namespace cabra

#endif  // CABRA_STRUCTURE_HPP_
