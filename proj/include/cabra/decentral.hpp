#ifndef CABRA_DECENTRAL_HPP_
#define CABRA_DECENTRAL_HPP_

#include <algorithm>
#include <map>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "cabra/core.hpp"
#include "cabra/matparams.hpp"
#include "cabra/operators.hpp"
#include "cabra/solver.hpp"
#include "cabra/structure.hpp"

namespace cabra {

enum class MsgKind { XShare, BShare };

inline const char* msg_kind_name(MsgKind k) {
  return k == MsgKind::XShare ? "x-share" : "b-share";
}

struct LogEntry {
  int iter = 0;  // 1-based
  std::string sender;
  std::string receiver;
  std::string kind;
  int block = 0;  // 1-based, 0 for aggregates
  int scalars = 0;
};

struct MessageLog {
  std::vector<LogEntry> entries;
};

struct MessageSummary {
  int iterations = 0;
  long total_messages = 0;
  long total_scalars = 0;
  double messages_per_iter = 0.0;
  double scalars_per_iter = 0.0;
  std::map<std::pair<std::string, std::string>, long> per_edge;  // scalars
  std::map<int, long> messages_by_iter;
};

inline MessageSummary count_messages(const MessageLog& log) {
  MessageSummary s;
  int maxit = 0;
  for (const auto& e : log.entries) {
    ++s.total_messages;
    s.total_scalars += e.scalars;
    s.per_edge[{e.sender, e.receiver}] += e.scalars;
    ++s.messages_by_iter[e.iter];
    maxit = std::max(maxit, e.iter);
  }
  s.iterations = maxit;
  if (maxit > 0) {
    s.messages_per_iter = static_cast<double>(s.total_messages) / maxit;
    s.scalars_per_iter = static_cast<double>(s.total_scalars) / maxit;
  }
  return s;
}

enum class ScheduleOrder { Forward, Reverse, Shuffled };

struct SimOptions {
  ScheduleOrder order = ScheduleOrder::Forward;
  unsigned seed = 0;
};

struct SimResult {
  Vec y;
  std::vector<Vec> x_iterates;  // H_x per iteration
  std::vector<TraceRow> trace;
  MessageLog log;
  int converged_iteration = -1;
};

namespace detail {

struct Need {
  int sender;  // node id; cocoercive j is n + j
  MsgKind kind;
  int block;
  bool operator<(const Need& o) const {
    return std::tie(sender, kind, block) < std::tie(o.sender, o.kind, o.block);
  }
};

struct Send {
  int receiver;
  MsgKind kind;
  int block;
};

}  // namespace detail

/// Message-passing execution of the expanded method. Every node only sees
/// its own blocks and the messages it receives. Cocoercive outputs are sent
/// unscaled and multiplied by alpha once at the receiver.
class DecentralSimulator {
 public:
  DecentralSimulator(const CouplingStructure& cs, const ParamSet& ps,
                     const OperatorBank& bank)
      : cs_(cs), ps_(ps), bank_(bank) {
    check_bank(cs, bank);
    plan_ = SweepPlan::build(cs, ps);
    build_patterns();
  }

  std::string node_name(int id) const {
    return id < cs_.n ? "A" + std::to_string(id + 1)
                      : "B" + std::to_string(id - cs_.n + 1);
  }

  SimResult run(const SolverConfig& cfg, const SimOptions& opt = {}) {
    validate_config(cfg, cs_.m > 0);
    prepare_bank(cs_, bank_, plan_, cfg.alpha);
    const int n = cs_.n, m = cs_.m, T = cfg.max_iterations;
    Vec v0 = cfg.v0 ? project_consensus_perp(cs_, *cfg.v0) : Vec::Zero(cs_.hx_size);
    cs_.require(Space::Hx, v0, "simulate v0");

    // Node state.
    std::vector<Vec> v(n), xi(n), wi(n);
    for (int i = 0; i < n; ++i) v[i] = v0.segment(cs_.hx_op_off[i], cs_.hx_op_size(i));
    std::vector<int> iter(n + m, 0), phase(n, 0);
    // mailbox[(iter, receiver, sender, kind, block)]
    std::map<std::tuple<int, int, int, int, int>, Vec> box;

    SimResult res;
    res.x_iterates.assign(T, Vec::Zero(cs_.hx_size));
    std::vector<Vec> w_it(T, Vec::Zero(cs_.hx_size)), u_it(T, Vec::Zero(cs_.bx_size));

    auto have = [&](int it, int recv, const std::vector<detail::Need>& needs) {
      for (const auto& nd : needs)
        if (!box.count({it, recv, nd.sender, static_cast<int>(nd.kind), nd.block}))
          return false;
      return true;
    };
    auto get = [&](int it, int recv, int sender, MsgKind kind, int block) -> const Vec& {
      return box.at({it, recv, sender, static_cast<int>(kind), block});
    };
    auto post = [&](int it, int sender, const detail::Send& s, const Vec& payload) {
      box[{it, s.receiver, sender, static_cast<int>(s.kind), s.block}] = payload;
      res.log.entries.push_back({it + 1, node_name(sender), node_name(s.receiver),
                                 msg_kind_name(s.kind), s.block + 1,
                                 static_cast<int>(payload.size())});
    };
    auto consume = [&](int it, int recv, const std::vector<detail::Need>& needs) {
      for (const auto& nd : needs)
        box.erase({it, recv, nd.sender, static_cast<int>(nd.kind), nd.block});
    };

    std::vector<int> order(n + m);
    for (int q = 0; q < n + m; ++q) order[q] = q;
    if (opt.order == ScheduleOrder::Reverse) std::reverse(order.begin(), order.end());
    std::mt19937 rng(opt.seed);

    auto step_monotone = [&](int i) -> bool {
      const int it = iter[i];
      if (it >= T) return false;
      const Index base = cs_.hx_op_off[i];
      if (phase[i] == 0) {
        if (!have(it, i, pre_[i])) return false;
        Vec lrow = Vec::Zero(cs_.hx_op_size(i));
        Vec qrow = Vec::Zero(cs_.hx_op_size(i));
        for (std::size_t o = 0; o < cs_.KA[i].size(); ++o) {
          const int k = cs_.KA[i][o];
          const int s = cs_.s_of[i][o];
          const int d = cs_.dims[k];
          auto seg = lrow.segment(cs_.hx_off[i][o] - base, d);
          for (int sp = 0; sp < s; ++sp) {
            const double c = ps_.blocks[k].L(s, sp);
            if (c == 0.0) continue;
            seg += 2.0 * c * get(it, i, cs_.Ik[k][sp], MsgKind::XShare, k);
          }
          auto qs = qrow.segment(cs_.hx_off[i][o] - base, d);
          for (int t = 0; t < cs_.mk(k); ++t) {
            const double c = cs_.mk(k) ? ps_.blocks[k].Q(s, t) : 0.0;
            if (c == 0.0) continue;
            qs += c * get(it, i, n + cs_.Jk[k][t], MsgKind::BShare, k);
          }
        }
        Vec in = v[i] + lrow;
        if (m > 0) in -= cfg.alpha * qrow;
        in = in.cwiseQuotient(plan_.diag[i]);
        auto [x, w] = bank_.A[i]->resolve(in, cfg.alpha, plan_.diag[i]);
        xi[i] = x;
        wi[i] = w;
        for (const auto& s : sends_[i])
          post(it, i, s, x.segment(cs_.hx_off[i][cs_.slot_A(i, s.block)] - base,
                                   cs_.dims[s.block]));
        phase[i] = 1;
        return true;
      }
      if (!have(it, i, post_[i])) return false;
      // (W_A x)_i from own and received copies
      Vec wx = Vec::Zero(cs_.hx_op_size(i));
      for (std::size_t o = 0; o < cs_.KA[i].size(); ++o) {
        const int k = cs_.KA[i][o];
        const int s = cs_.s_of[i][o];
        const int d = cs_.dims[k];
        auto seg = wx.segment(cs_.hx_off[i][o] - base, d);
        for (int sp = 0; sp < cs_.nk(k); ++sp) {
          const double c = ps_.blocks[k].W(s, sp);
          if (c == 0.0) continue;
          const int src = cs_.Ik[k][sp];
          if (src == i)
            seg += c * xi[i].segment(cs_.hx_off[i][o] - base, d);
          else
            seg += c * get(it, i, src, MsgKind::XShare, k);
        }
      }
      consume(it, i, pre_[i]);
      consume(it, i, post_[i]);
      v[i] -= cfg.gamma.at(it) * wx;
      res.x_iterates[it].segment(base, cs_.hx_op_size(i)) = xi[i];
      w_it[it].segment(base, cs_.hx_op_size(i)) = wi[i];
      phase[i] = 0;
      ++iter[i];
      return true;
    };

    auto step_cocoercive = [&](int j) -> bool {
      const int id = n + j;
      const int it = iter[id];
      if (it >= T) return false;
      if (!have(it, id, pre_[id])) return false;
      Vec kx = Vec::Zero(cs_.bx_op_size(j));
      const Index base = cs_.bx_op_off[j];
      for (std::size_t o = 0; o < cs_.KB[j].size(); ++o) {
        const int k = cs_.KB[j][o];
        const int t = cs_.t_of[j][o];
        auto seg = kx.segment(cs_.bx_off[j][o] - base, cs_.dims[k]);
        for (int s = 0; s < cs_.nk(k); ++s) {
          const double c = ps_.blocks[k].K(t, s);
          if (c == 0.0) continue;
          seg += c * get(it, id, cs_.Ik[k][s], MsgKind::XShare, k);
        }
      }
      Vec b = bank_.B[j]->forward(kx);
      u_it[it].segment(base, cs_.bx_op_size(j)) = b;
      for (const auto& s : sends_[id])
        post(it, id, s, b.segment(cs_.bx_off[j][cs_.slot_B(j, s.block)] - base,
                                  cs_.dims[s.block]));
      consume(it, id, pre_[id]);
      ++iter[id];
      return true;
    };

    while (true) {
      bool all_done = true;
      for (int q = 0; q < n + m; ++q) all_done = all_done && iter[q] >= T;
      if (all_done) break;
      if (opt.order == ScheduleOrder::Shuffled) std::shuffle(order.begin(), order.end(), rng);
      bool progress = false;
      for (int id : order) {
        const bool moved = id < n ? step_monotone(id) : step_cocoercive(id - n);
        progress = progress || moved;
      }
      if (!progress) {
        std::string stuck;
        for (int q = 0; q < n + m; ++q)
          if (iter[q] < T) stuck += " " + node_name(q) + "@" + std::to_string(iter[q] + 1);
        throw Deadlock("decentralized run cannot progress; waiting nodes:" + stuck);
      }
    }

    for (int it = 0; it < T; ++it) {
      TraceRow row;
      row.iter = it + 1;
      row.fp_residual = apply_lifted(cs_, ps_, Which::M, res.x_iterates[it]).norm();
      row.consensus_residual = project_consensus_perp(cs_, res.x_iterates[it]).norm();
      row.inclusion_residual = inclusion_residual(cs_, w_it[it], u_it[it]);
      if (cfg.metrics) {
        auto mt = cfg.metrics(mean_estimate(cs_, res.x_iterates[it]), res.x_iterates[it]);
        row.objective_gap = mt.objective_gap;
        row.violation = mt.violation;
      }
      if (res.converged_iteration < 0 && row.fp_residual <= cfg.tol &&
          row.inclusion_residual <= 10.0 * cfg.tol)
        res.converged_iteration = it + 1;
      res.trace.push_back(row);
    }
    if (T > 0) res.y = mean_estimate(cs_, res.x_iterates[T - 1]);
    return res;
  }

  const std::vector<std::vector<detail::Need>>& pre_needs() const { return pre_; }

 private:
  void build_patterns() {
    const int n = cs_.n, m = cs_.m;
    pre_.assign(n + m, {});
    post_.assign(n, {});
    sends_.assign(n + m, {});
    for (int i = 0; i < n; ++i) {
      for (std::size_t o = 0; o < cs_.KA[i].size(); ++o) {
        const int k = cs_.KA[i][o];
        const int s = cs_.s_of[i][o];
        const auto& bp = ps_.blocks[k];
        for (int sp = 0; sp < cs_.nk(k); ++sp) {
          if (sp == s) continue;
          const int d = cs_.Ik[k][sp];
          if (sp < s) {
            if (bp.L(s, sp) != 0.0 || bp.W(s, sp) != 0.0)
              pre_[i].push_back({d, MsgKind::XShare, k});
            if (bp.W(s, sp) != 0.0) sends_[i].push_back({d, MsgKind::XShare, k});
          } else {
            if (bp.L(sp, s) != 0.0 || bp.W(sp, s) != 0.0)
              sends_[i].push_back({d, MsgKind::XShare, k});
            if (bp.W(s, sp) != 0.0) post_[i].push_back({d, MsgKind::XShare, k});
          }
        }
        for (int t = 0; t < cs_.mk(k); ++t) {
          const int j = cs_.Jk[k][t];
          if (bp.Q(s, t) != 0.0) pre_[i].push_back({n + j, MsgKind::BShare, k});
          if (bp.K(t, s) != 0.0) {
            sends_[i].push_back({n + j, MsgKind::XShare, k});
            pre_[n + j].push_back({i, MsgKind::XShare, k});
          }
          if (bp.Q(s, t) != 0.0) sends_[n + j].push_back({i, MsgKind::BShare, k});
        }
      }
    }
    for (auto& p : pre_) std::sort(p.begin(), p.end());
    for (auto& p : post_) std::sort(p.begin(), p.end());
  }

  const CouplingStructure& cs_;
  const ParamSet& ps_;
  const OperatorBank& bank_;
  SweepPlan plan_;
  std::vector<std::vector<detail::Need>> pre_, post_;
  std::vector<std::vector<detail::Send>> sends_;
};

inline SimResult simulate(const CouplingStructure& cs, const ParamSet& ps,
                          const OperatorBank& bank, const SolverConfig& cfg,
                          const SimOptions& opt = {}) {
  DecentralSimulator sim(cs, ps, bank);
  return sim.run(cfg, opt);
}

// ---------------------------------------------------------------------------
// Platform view: nodes grouped onto machines. Messages between nodes on the
// same platform are free. Cocoercive nodes flagged as replicated run on every
// platform; when they depend on x only through a linear functional (q^T x),
// each platform ships one partial sum per such node instead of its x blocks.

struct PlatformMap {
  int platforms = 0;
  std::vector<int> monotone_owner;   // -1: separable, owned per block
  std::vector<int> block_owner;      // used for separable monotone nodes
  std::vector<bool> cocoercive_replicated;
  std::vector<bool> cocoercive_functional;  // input used only via q^T x
};

struct PlatformExchange {
  int iter = 0;
  int sender = 0;
  int scalars = 0;
};

struct PlatformSummary {
  std::vector<PlatformExchange> exchanges;  // one broadcast per entry
  long other_inter_platform_messages = 0;   // must be 0 for a clean split
  std::map<int, int> exchanges_per_iter;
};

inline PlatformSummary platform_summary(const CouplingStructure& cs,
                                        const MessageLog& log,
                                        const PlatformMap& pm) {
  auto node_of = [&](const std::string& name) {
    const int id = std::stoi(name.substr(1)) - 1;
    return name[0] == 'A' ? id : cs.n + id;
  };
  PlatformSummary ps;
  // (iter, sender platform) -> set of cocoercive nodes fed
  std::map<std::pair<int, int>, std::map<int, int>> agg;
  for (const auto& e : log.entries) {
    const int s = node_of(e.sender), r = node_of(e.receiver);
    const int k = e.block - 1;
    auto plat_of_mono = [&](int id) {
      const int own = pm.monotone_owner[id];
      return own >= 0 ? own : pm.block_owner[k];
    };
    if (s < cs.n && r < cs.n) {
      if (plat_of_mono(s) != plat_of_mono(r)) ++ps.other_inter_platform_messages;
    } else if (s < cs.n && r >= cs.n) {
      const int j = r - cs.n;
      if (pm.cocoercive_replicated[j] && pm.cocoercive_functional[j]) {
        agg[{e.iter, plat_of_mono(s)}][j] = 1;  // one partial sum per node
      } else if (!pm.cocoercive_replicated[j]) {
        ++ps.other_inter_platform_messages;
      } else {
        agg[{e.iter, plat_of_mono(s)}][j] += e.scalars;
      }
    } else if (s >= cs.n && r < cs.n) {
      const int j = s - cs.n;
      if (!pm.cocoercive_replicated[j]) ++ps.other_inter_platform_messages;
    }
  }
  for (const auto& [key, nodes] : agg) {
    int sc = 0;
    for (const auto& kv : nodes) sc += kv.second;
    ps.exchanges.push_back({key.first, key.second, sc});
    ++ps.exchanges_per_iter[key.first];
  }
  return ps;
}

}  // namespace cabra

#endif  // CABRA_DECENTRAL_HPP_
