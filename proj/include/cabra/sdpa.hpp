#ifndef CABRA_SDPA_HPP_
#define CABRA_SDPA_HPP_

#include <algorithm>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "cabra/core.hpp"
#include "cabra/design.hpp"

namespace cabra {

/// Sparse SDPA data: minimize c^T x s.t. sum_i x_i F_i - F_0 >= 0.
/// Negative block sizes denote diagonal (LP) blocks.
struct SdpaModel {
  struct Entry {
    int cons = 0;   // 0 for F_0
    int block = 1;  // 1-based
    int i = 1, j = 1;
    double value = 0.0;
    auto key() const { return std::tie(cons, block, i, j, value); }
    bool operator<(const Entry& o) const { return key() < o.key(); }
    bool operator==(const Entry& o) const { return key() == o.key(); }
  };
  int m = 0;
  std::vector<int> block_struct;
  std::vector<double> c;
  std::vector<Entry> entries;

  bool same_as(const SdpaModel& o) const {
    if (m != o.m || block_struct != o.block_struct || c != o.c) return false;
    auto a = entries, b = o.entries;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
  }
  int psd_blocks() const {
    return static_cast<int>(std::count_if(block_struct.begin(), block_struct.end(),
                                          [](int s) { return s > 0; }));
  }
};

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Converts the design constraints. PSD blocks come first, then one LP block
/// carrying each equality as a pair of inequalities.
inline SdpaModel to_sdpa(const SdpProblem& P) {
  SdpaModel M;
  M.m = P.vars.size;
  M.c.assign(P.cost.data(), P.cost.data() + P.cost.size());
  int bi = 0;
  for (const auto& b : P.blocks) {
    ++bi;
    M.block_struct.push_back(b.size);
    for (int r = 0; r < b.size; ++r)
      for (int c = r; c < b.size; ++c)
        if (b.C(r, c) != 0.0) M.entries.push_back({0, bi, r + 1, c + 1, -b.C(r, c)});
    // merge duplicate (var, r, c) coefficients
    std::vector<std::tuple<int, int, int, double>> co = b.coeffs;
    for (auto& [a, r, c, v] : co)
      if (r > c) std::swap(r, c);
    std::sort(co.begin(), co.end());
    for (std::size_t q = 0; q < co.size();) {
      auto [a, r, c, v] = co[q];
      double sum = 0.0;
      while (q < co.size() && std::get<0>(co[q]) == a && std::get<1>(co[q]) == r &&
             std::get<2>(co[q]) == c) {
        sum += std::get<3>(co[q]);
        ++q;
      }
      if (sum != 0.0) M.entries.push_back({a + 1, bi, r + 1, c + 1, sum});
    }
  }
  if (P.Aeq.rows() > 0) {
    ++bi;
    const int rows = static_cast<int>(P.Aeq.rows());
    M.block_struct.push_back(-2 * rows);
    for (int e = 0; e < rows; ++e) {
      const int up = 2 * e + 1, dn = 2 * e + 2;
      if (P.beq(e) != 0.0) {
        M.entries.push_back({0, bi, up, up, P.beq(e)});
        M.entries.push_back({0, bi, dn, dn, -P.beq(e)});
      }
      for (int a = 0; a < P.vars.size; ++a)
        if (P.Aeq(e, a) != 0.0) {
          M.entries.push_back({a + 1, bi, up, up, P.Aeq(e, a)});
          M.entries.push_back({a + 1, bi, dn, dn, -P.Aeq(e, a)});
        }
    }
  }
  return M;
}

inline void write_sdpa(const SdpaModel& M, std::ostream& os) {
  os << "\"cabra design problem\"\n";
  os << M.m << " = mDIM\n";
  os << M.block_struct.size() << " = nBLOCK\n";
  for (std::size_t b = 0; b < M.block_struct.size(); ++b)
    os << (b ? " " : "") << M.block_struct[b];
  os << " = bLOCKsTRUCT\n";
  for (std::size_t i = 0; i < M.c.size(); ++i) os << (i ? " " : "") << fmt17(M.c[i]);
  os << "\n";
  for (const auto& e : M.entries)
    os << e.cons << " " << e.block << " " << e.i << " " << e.j << " "
       << fmt17(e.value) << "\n";
  if (!os) throw IoError("write_sdpa: stream error");
}

inline std::string to_sdpa_string(const SdpaModel& M) {
  std::ostringstream os;
  write_sdpa(M, os);
  return os.str();
}

namespace detail {

// SDPA allows the punctuation ",(){}" and "=" comments inside header lines.
inline std::string sdpa_clean(std::string line) {
  const auto eq = line.find('=');
  if (eq != std::string::npos) line.resize(eq);
  for (char& ch : line)
    if (ch == ',' || ch == '(' || ch == ')' || ch == '{' || ch == '}') ch = ' ';
  return line;
}

}  // namespace detail

inline SdpaModel parse_sdpa(std::istream& is) {
  SdpaModel M;
  std::string line;
  std::vector<std::string> content;
  while (std::getline(is, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (line[first] == '"' || line[first] == '*') continue;
    content.push_back(line);
  }
  auto fail = [](const std::string& why, std::size_t ln) {
    throw SchemaError("sdpa parse error at content line " + std::to_string(ln + 1) +
                      ": " + why);
  };
  if (content.size() < 4) fail("header incomplete", content.size());
  std::size_t ln = 0;
  {
    std::istringstream ss(detail::sdpa_clean(content[ln]));
    if (!(ss >> M.m)) fail("mDIM", ln);
  }
  int nblocks = 0;
  {
    std::istringstream ss(detail::sdpa_clean(content[++ln]));
    if (!(ss >> nblocks)) fail("nBLOCK", ln);
  }
  {
    std::istringstream ss(detail::sdpa_clean(content[++ln]));
    for (int b = 0; b < nblocks; ++b) {
      int s;
      if (!(ss >> s)) fail("block structure", ln);
      M.block_struct.push_back(s);
    }
  }
  {
    // the cost vector may span several lines
    std::string acc;
    std::vector<double> c;
    while (static_cast<int>(c.size()) < M.m) {
      if (++ln >= content.size()) fail("cost vector", ln);
      std::istringstream ss(detail::sdpa_clean(content[ln]));
      double v;
      while (ss >> v) c.push_back(v);
    }
    if (static_cast<int>(c.size()) != M.m) fail("cost vector length", ln);
    M.c = c;
  }
  for (++ln; ln < content.size(); ++ln) {
    std::istringstream ss(content[ln]);
    SdpaModel::Entry e;
    if (!(ss >> e.cons >> e.block >> e.i >> e.j >> e.value)) fail("entry", ln);
    if (e.cons < 0 || e.cons > M.m || e.block < 1 || e.block > nblocks)
      fail("entry index out of range", ln);
    const int bs = std::abs(M.block_struct[e.block - 1]);
    if (e.i < 1 || e.j < 1 || e.i > bs || e.j > bs) fail("entry position out of range", ln);
    M.entries.push_back(e);
  }
  return M;
}

inline SdpaModel parse_sdpa_string(const std::string& s) {
  std::istringstream is(s);
  return parse_sdpa(is);
}

}  // namespace cabra

#endif  // CABRA_SDPA_HPP_
