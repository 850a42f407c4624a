#include "otcr/ot_exact.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>

#include "otcr/error.hpp"

namespace otcr {

namespace {

constexpr double kDropMass = 1e-12;
constexpr double kMassTolerance = 1e-6;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Network simplex over an uncapacitated bipartite graph with an artificial
// root. Tree bookkeeping: parent/pred/pred_dir plus explicit child lists, so
// a pivot only touches the subtree that is re-hung below the entering arc.
class NetworkSimplex {
 public:
  enum : std::int8_t { kTree = 0, kLower = 1 };
  enum : std::int8_t { kUp = 1, kDown = -1 };

  NetworkSimplex(const std::vector<double>& cost, std::size_t n, std::size_t m,
                 const std::vector<double>& a, const std::vector<double>& b)
      : n_(n), m_(m), nodes_(n + m), root_(static_cast<int>(n + m)), real_arcs_(n * m) {
    const std::size_t all_arcs = real_arcs_ + nodes_;
    cost_.resize(all_arcs);
    flow_.assign(all_arcs, 0.0);
    state_.assign(all_arcs, kLower);
    art_src_.resize(nodes_);
    art_tgt_.resize(nodes_);
    std::copy(cost.begin(), cost.end(), cost_.begin());

    const std::size_t nn = nodes_ + 1;
    parent_.assign(nn, -1);
    pred_.assign(nn, -1);
    pred_dir_.assign(nn, kUp);
    depth_.assign(nn, 0);
    pi_.assign(nn, 0.0);
    first_child_.assign(nn, -1);
    next_sib_.assign(nn, -1);
    prev_sib_.assign(nn, -1);

    double max_cost = 0.0;
    for (std::size_t e = 0; e < real_arcs_; ++e) max_cost = std::max(max_cost, std::abs(cost_[e]));
    art_cost_ = (max_cost + 1.0) * static_cast<double>(nodes_);
    eps_ = 4.0 * static_cast<double>(nodes_) * art_cost_ * std::numeric_limits<double>::epsilon();

    for (std::size_t u = 0; u < nodes_; ++u) {
      const std::size_t e = real_arcs_ + u;
      const int node = static_cast<int>(u);
      parent_[u] = root_;
      pred_[u] = static_cast<int>(e);
      depth_[u] = 1;
      state_[e] = kTree;
      add_child(root_, node);
      const double supply = u < n_ ? a[u] : -b[u - n_];
      if (supply >= 0.0) {
        pred_dir_[u] = kUp;
        art_src_[u] = node;
        art_tgt_[u] = root_;
        flow_[e] = supply;
        cost_[e] = 0.0;
        pi_[u] = 0.0;
      } else {
        pred_dir_[u] = kDown;
        art_src_[u] = root_;
        art_tgt_[u] = node;
        flow_[e] = -supply;
        cost_[e] = art_cost_;
        pi_[u] = art_cost_;
      }
    }
    block_size_ = std::max<std::size_t>(
        10, static_cast<std::size_t>(std::sqrt(static_cast<double>(real_arcs_))));
  }

  // Returns the number of pivots performed.
  std::size_t run(std::size_t max_pivots) {
    std::size_t pivots = 0;
    while (find_entering_arc()) {
      if (pivots == max_pivots) {
        throw ConvergenceError("solve_exact_ot: pivot limit reached", pivots);
      }
      ++pivots;
      pivot();
    }
    return pivots;
  }

  double flow(std::size_t e) const { return flow_[e]; }
  double artificial_flow() const {
    double s = 0.0;
    for (std::size_t u = 0; u < nodes_; ++u) s += flow_[real_arcs_ + u];
    return s;
  }

 private:
  int src(std::size_t e) const {
    return e < real_arcs_ ? static_cast<int>(e / m_) : art_src_[e - real_arcs_];
  }
  int tgt(std::size_t e) const {
    return e < real_arcs_ ? static_cast<int>(n_ + e % m_) : art_tgt_[e - real_arcs_];
  }

  void add_child(int p, int c) {
    prev_sib_[c] = -1;
    next_sib_[c] = first_child_[p];
    if (first_child_[p] >= 0) prev_sib_[first_child_[p]] = c;
    first_child_[p] = c;
  }

  void remove_child(int p, int c) {
    if (prev_sib_[c] >= 0) next_sib_[prev_sib_[c]] = next_sib_[c];
    else first_child_[p] = next_sib_[c];
    if (next_sib_[c] >= 0) prev_sib_[next_sib_[c]] = prev_sib_[c];
    prev_sib_[c] = next_sib_[c] = -1;
  }

  double reduced_cost(std::size_t i, std::size_t j, std::size_t e) const {
    return cost_[e] + pi_[i] - pi_[n_ + j];
  }

  // Block search pricing over the real arcs only.
  bool find_entering_arc() {
    double best = -eps_;
    std::size_t cnt = block_size_;
    bool found = false;
    std::size_t e = next_arc_;
    for (std::size_t scanned = 0; scanned < real_arcs_; ++scanned) {
      if (state_[e] == kLower) {
        const double rc = reduced_cost(e / m_, e % m_, e);
        if (rc < best) {
          best = rc;
          in_arc_ = e;
          found = true;
        }
      }
      if (++e == real_arcs_) e = 0;
      if (--cnt == 0) {
        if (found) break;
        cnt = block_size_;
      }
    }
    next_arc_ = e;
    return found;
  }

  void pivot() {
    const int first = src(in_arc_);
    const int second = tgt(in_arc_);

    int u = first, v = second;
    while (u != v) {
      if (depth_[u] > depth_[v]) u = parent_[u];
      else if (depth_[v] > depth_[u]) v = parent_[v];
      else {
        u = parent_[u];
        v = parent_[v];
      }
    }
    const int join = u;

    // Leaving arc: last blocking arc in cycle orientation (strongly feasible
    // tree rule), giving '<' on the first side and '<=' on the second.
    double delta = kInf;
    int u_out = -1;
    int side = 0;
    for (int x = first; x != join; x = parent_[x]) {
      const double d = pred_dir_[x] == kUp ? flow_[pred_[x]] : kInf;
      if (d < delta) {
        delta = d;
        u_out = x;
        side = 1;
      }
    }
    for (int x = second; x != join; x = parent_[x]) {
      const double d = pred_dir_[x] == kDown ? flow_[pred_[x]] : kInf;
      if (d <= delta) {
        delta = d;
        u_out = x;
        side = 2;
      }
    }
    if (side == 0) throw NumericalError("solve_exact_ot: unbounded pivot");

    if (delta > 0.0) {
      flow_[in_arc_] += delta;
      for (int x = first; x != join; x = parent_[x]) flow_[pred_[x]] -= pred_dir_[x] * delta;
      for (int x = second; x != join; x = parent_[x]) flow_[pred_[x]] += pred_dir_[x] * delta;
    }

    const int u_in = side == 1 ? first : second;
    const int v_in = side == 1 ? second : first;
    const int leaving = pred_[u_out];
    state_[in_arc_] = kTree;
    state_[leaving] = kLower;
    flow_[leaving] = 0.0;

    // Re-hang the subtree of u_out below v_in, rooted at u_in.
    remove_child(parent_[u_out], u_out);
    int prev = v_in;
    int prev_arc = static_cast<int>(in_arc_);
    std::int8_t prev_dir = u_in == src(in_arc_) ? kUp : kDown;
    int x = u_in;
    while (true) {
      const int old_parent = parent_[x];
      const int old_arc = pred_[x];
      const std::int8_t old_dir = pred_dir_[x];
      if (x != u_out) remove_child(old_parent, x);
      parent_[x] = prev;
      pred_[x] = prev_arc;
      pred_dir_[x] = prev_dir;
      add_child(prev, x);
      if (x == u_out) break;
      prev = x;
      prev_arc = old_arc;
      prev_dir = static_cast<std::int8_t>(-old_dir);
      x = old_parent;
    }

    // Depths and potentials of the moved subtree.
    stack_.clear();
    stack_.push_back(u_in);
    while (!stack_.empty()) {
      const int y = stack_.back();
      stack_.pop_back();
      const int p = parent_[y];
      depth_[y] = depth_[p] + 1;
      const double c = cost_[pred_[y]];
      pi_[y] = pred_dir_[y] == kUp ? pi_[p] - c : pi_[p] + c;
      for (int ch = first_child_[y]; ch >= 0; ch = next_sib_[ch]) stack_.push_back(ch);
    }
  }

  std::size_t n_, m_, nodes_;
  int root_;
  std::size_t real_arcs_;
  std::vector<double> cost_, flow_;
  std::vector<std::int8_t> state_;
  std::vector<int> art_src_, art_tgt_;
  std::vector<int> parent_, pred_, depth_;
  std::vector<std::int8_t> pred_dir_;
  std::vector<double> pi_;
  std::vector<int> first_child_, next_sib_, prev_sib_;
  std::vector<int> stack_;
  double art_cost_ = 0.0;
  double eps_ = 0.0;
  std::size_t block_size_ = 10;
  std::size_t next_arc_ = 0;
  std::size_t in_arc_ = 0;
};

// Indices with mass >= kDropMass and their renormalised masses.
std::vector<std::size_t> support(std::span<const double> w, std::vector<double>& kept) {
  std::vector<std::size_t> idx;
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] >= kDropMass) {
      idx.push_back(i);
      total += w[i];
    }
  }
  kept.clear();
  for (std::size_t i : idx) kept.push_back(w[i] / total);
  return idx;
}

void check_masses(std::span<const double> w, const char* name) {
  for (double v : w) {
    if (!std::isfinite(v) || v < 0.0) {
      throw InfeasibleMarginals(std::string("solve_exact_ot: ") + name +
                                " has a negative or non-finite entry");
    }
  }
}

}  // namespace

TransportPlan solve_exact_ot(const Matrix& cost, std::span<const double> a,
                             std::span<const double> b) {
  if (cost.rows() != a.size() || cost.cols() != b.size()) {
    throw DimensionError("solve_exact_ot: cost is " + std::to_string(cost.rows()) + "x" +
                         std::to_string(cost.cols()) + " but marginals have sizes " +
                         std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  cost.require_finite("solve_exact_ot cost");
  check_masses(a, "a");
  check_masses(b, "b");
  const double sa = std::accumulate(a.begin(), a.end(), 0.0);
  const double sb = std::accumulate(b.begin(), b.end(), 0.0);
  if (std::abs(sa - sb) > kMassTolerance) {
    throw InfeasibleMarginals("solve_exact_ot: total masses " + std::to_string(sa) + " and " +
                              std::to_string(sb) + " differ");
  }
  if (sa < kDropMass) throw InfeasibleMarginals("solve_exact_ot: zero total mass");

  std::vector<double> ka, kb;
  const auto rows = support(a, ka);
  const auto cols = support(b, kb);
  const std::size_t n = rows.size(), m = cols.size();

  // Shift and scale costs into [0, 1]; neither changes the optimal plans.
  std::vector<double> c(n * m);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double v = cost(rows[i], cols[j]);
      c[i * m + j] = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const double range = hi - lo;
  for (double& v : c) v = range > 0.0 ? (v - lo) / range : 0.0;

  NetworkSimplex solver(c, n, m, ka, kb);
  const std::size_t limit = 100 * (n * m + n + m) + 1000;
  const std::size_t pivots = solver.run(limit);
  if (solver.artificial_flow() > 1e-9) {
    throw InfeasibleMarginals("solve_exact_ot: no feasible plan for the given marginals");
  }

  TransportPlan out;
  out.plan = Matrix(cost.rows(), cost.cols());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double f = solver.flow(i * m + j);
      out.plan(rows[i], cols[j]) = f > 0.0 ? f : 0.0;
    }
  out.cost = frobenius_dot(cost, out.plan);
  out.iterations = pivots;
  out.method = TransportMethod::ExactLp;
  out.converged = true;
  auto r = row_sums(out.plan);
  auto cs = col_sums(out.plan);
  for (std::size_t i = 0; i < a.size(); ++i) out.row_violation += std::abs(r[i] - a[i]);
  for (std::size_t j = 0; j < b.size(); ++j) out.col_violation += std::abs(cs[j] - b[j]);
  return out;
}

Assignment brute_force_assignment(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw DimensionError("brute_force_assignment: cost must be square");
  const std::size_t n = cost.rows();
  if (n > 8) {
    throw OracleLimitError("brute_force_assignment: n = " + std::to_string(n) +
                           " exceeds the enumeration limit of 8");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Assignment best;
  best.cost = std::numeric_limits<double>::infinity();
  // next_permutation visits permutations in lexicographic order, so a strict
  // '<' keeps the lexicographically smallest minimiser.
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += cost(i, perm[i]);
    if (s < best.cost) {
      best.cost = s;
      best.perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace otcr
