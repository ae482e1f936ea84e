#pragma once

// Scheduling analysis of a single route: reservation table, forbidden
// latencies, collision vector, and issue cycles over the collision-state
// graph (greedy cycle and minimal average latency).

#include <pipekit/dsl.hpp>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace pipekit {

/// Exact non-negative fraction, always kept in lowest terms.
struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  static Rational of(std::uint64_t n, std::uint64_t d) {
    if (d == 0)
      throw InvariantError("rational with zero denominator");
    std::uint64_t g = std::gcd(n, d);
    if (g == 0)
      g = 1;
    return {n / g, d / g};
  }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }

  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num * b.den == b.num * a.den;
  }
  friend bool operator<(const Rational& a, const Rational& b) {
    return a.num * b.den < b.num * a.den;
  }
  friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
};

inline std::string to_string(const Rational& r) {
  return r.den == 1 ? std::to_string(r.num) : std::to_string(r.num) + "/" + std::to_string(r.den);
}

struct ReservationTable {
  std::vector<StageId> stages;                 // distinct stages, declaration order
  std::size_t length = 0;                      // number of steps
  std::vector<std::vector<std::size_t>> marks; // marks[i] belongs to stages[i]

  const std::vector<std::size_t>& marks_of(const StageId& s) const {
    for (std::size_t i = 0; i < stages.size(); ++i)
      if (stages[i] == s)
        return marks[i];
    throw InvariantError("stage \"" + s.name + "\" has no row in the reservation table");
  }

  std::size_t max_row_marks() const {
    std::size_t m = 0;
    for (const auto& row : marks)
      m = std::max(m, row.size());
    return m;
  }
};

inline ReservationTable reservation_table(const Route& route) {
  ReservationTable t;
  t.length = route.length();
  for (const auto& s : route.stages()) {
    t.stages.push_back(s);
    std::vector<std::size_t> row;
    for (std::size_t i = 0; i < route.steps.size(); ++i) {
      const auto& st = route.steps[i];
      if (std::find(st.begin(), st.end(), s) != st.end())
        row.push_back(i);
    }
    t.marks.push_back(std::move(row));
  }
  return t;
}

inline ReservationTable reservation_table(const Route& route, const StageSet& decls) {
  for (const auto& s : route.stages())
    if (!decls.contains(s))
      throw ValidationError("stage \"" + s.name + "\" is not declared");
  return reservation_table(route);
}

/// Latency 0 is implicitly forbidden and never stored.
struct ForbiddenLatencySet {
  std::set<std::size_t> latencies;

  bool contains(std::size_t d) const { return latencies.count(d) != 0; }
  bool empty() const { return latencies.empty(); }
  friend bool operator==(const ForbiddenLatencySet&, const ForbiddenLatencySet&) = default;
};

inline ForbiddenLatencySet forbidden_latencies(const ReservationTable& t) {
  ForbiddenLatencySet f;
  for (const auto& row : t.marks)
    for (std::size_t i = 0; i < row.size(); ++i)
      for (std::size_t j = i + 1; j < row.size(); ++j)
        f.latencies.insert(row[j] - row[i]);
  return f;
}

/// bits[d - 1] is set iff latency d (1 <= d < length) is forbidden.
/// Printed with latency 1 leftmost.
struct CollisionVector {
  std::vector<bool> bits;

  std::size_t length() const noexcept { return bits.size() + 1; }
  bool forbids(std::size_t d) const { return d >= 1 && d <= bits.size() && bits[d - 1]; }

  std::string to_string() const {
    std::string s;
    for (bool b : bits)
      s += b ? '1' : '0';
    return s;
  }
  friend bool operator==(const CollisionVector&, const CollisionVector&) = default;
};

inline CollisionVector collision_vector(const ForbiddenLatencySet& f, std::size_t length) {
  if (length == 0)
    throw InvariantError("collision vector of an empty route");
  CollisionVector c;
  c.bits.assign(length - 1, false);
  for (std::size_t d : f.latencies) {
    if (d == 0 || d >= length)
      throw InvariantError("forbidden latency " + std::to_string(d) + " outside 1.." +
                           std::to_string(length - 1));
    c.bits[d - 1] = true;
  }
  return c;
}

/// A latency sequence that can be repeated forever without collisions.
struct IssueCycle {
  std::vector<std::size_t> latencies;

  std::size_t period() const {
    return std::accumulate(latencies.begin(), latencies.end(), std::size_t{0});
  }
  Rational average() const { return Rational::of(period(), latencies.size()); }
  friend bool operator==(const IssueCycle&, const IssueCycle&) = default;
};

inline std::string to_string(const IssueCycle& c) {
  std::string s = "(";
  for (std::size_t i = 0; i < c.latencies.size(); ++i)
    s += (i ? "," : "") + std::to_string(c.latencies[i]);
  return s + ")";
}

/// Collision-state machine. A state holds one bit per latency 1..L-1;
/// issuing after latency d from state S moves to (S >> d) | C. Any latency
/// >= L resets to C, so L stands in for all of them.
class CollisionStates {
public:
  using State = std::vector<bool>;

  explicit CollisionStates(CollisionVector c) : initial_(std::move(c.bits)) {}

  const State& initial() const { return initial_; }
  std::size_t length() const { return initial_.size() + 1; }

  bool permits(const State& s, std::size_t d) const {
    return d >= length() || (d >= 1 && !s[d - 1]);
  }

  State next(const State& s, std::size_t d) const {
    State out = initial_;
    for (std::size_t i = 0; i + d < s.size(); ++i)
      if (s[i + d])
        out[i] = true;
    return out;
  }

  /// Smallest permissible latency from `s` (always <= L).
  std::size_t greedy_latency(const State& s) const {
    for (std::size_t d = 1; d < length(); ++d)
      if (!s[d - 1])
        return d;
    return length();
  }

private:
  State initial_;
};

struct LatencySchedule {
  IssueCycle minimal;                // a cycle achieving the minimal average latency
  IssueCycle greedy;                 // the repeating part of the greedy sequence
  std::vector<std::size_t> greedy_prefix; // greedy latencies before the cycle is entered
  std::size_t states = 0;            // reachable collision states

  Rational mal() const { return minimal.average(); }
};

namespace detail {

struct StateGraph {
  std::vector<CollisionStates::State> states;
  // edges[v] = (latency, target)
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> edges;
};

inline StateGraph build_state_graph(const CollisionStates& m) {
  StateGraph g;
  std::map<CollisionStates::State, std::size_t> index;
  auto intern = [&](const CollisionStates::State& s) {
    auto [it, fresh] = index.emplace(s, g.states.size());
    if (fresh) {
      g.states.push_back(s);
      g.edges.emplace_back();
    }
    return it->second;
  };
  intern(m.initial());
  for (std::size_t v = 0; v < g.states.size(); ++v) {
    for (std::size_t d = 1; d <= m.length(); ++d) {
      if (!m.permits(g.states[v], d))
        continue;
      auto next = m.next(g.states[v], d);
      std::size_t w = intern(next);
      g.edges[v].emplace_back(d, w);
    }
  }
  return g;
}

/// Minimum-mean closed walk: for every start state, dynamic programming over
/// walks of exactly k edges (k <= number of states) back to the start.
inline IssueCycle minimal_mean_cycle(const StateGraph& g) {
  const std::size_t n = g.states.size();
  constexpr std::uint64_t inf = std::numeric_limits<std::uint64_t>::max();
  std::optional<IssueCycle> best;

  for (std::size_t start = 0; start < n; ++start) {
    // cost[k][v], with parent links for walk reconstruction
    std::vector<std::vector<std::uint64_t>> cost(n + 1, std::vector<std::uint64_t>(n, inf));
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> parent(
        n + 1, std::vector<std::pair<std::size_t, std::size_t>>(n, {0, 0}));
    cost[0][start] = 0;
    for (std::size_t k = 1; k <= n; ++k) {
      for (std::size_t v = 0; v < n; ++v) {
        if (cost[k - 1][v] == inf)
          continue;
        for (auto [lat, w] : g.edges[v]) {
          std::uint64_t c = cost[k - 1][v] + lat;
          if (c < cost[k][w]) {
            cost[k][w] = c;
            parent[k][w] = {v, lat};
          }
        }
      }
      if (cost[k][start] == inf)
        continue;
      Rational avg = Rational::of(cost[k][start], k);
      bool better = !best || avg < best->average() ||
                    (avg == best->average() && k < best->latencies.size());
      if (!better)
        continue;
      IssueCycle cyc;
      std::size_t v = start;
      for (std::size_t step = k; step > 0; --step) {
        auto [prev, lat] = parent[step][v];
        cyc.latencies.push_back(lat);
        v = prev;
      }
      std::reverse(cyc.latencies.begin(), cyc.latencies.end());
      best = std::move(cyc);
    }
  }
  if (!best)
    throw InvariantError("collision-state graph has no cycle");
  return *best;
}

} // namespace detail

inline LatencySchedule minimal_average_latency(const CollisionVector& c) {
  CollisionStates machine(c);
  LatencySchedule out;

  auto graph = detail::build_state_graph(machine);
  out.states = graph.states.size();
  out.minimal = detail::minimal_mean_cycle(graph);

  // Greedy: follow the smallest permissible latency until a state repeats.
  std::map<CollisionStates::State, std::size_t> seen;
  std::vector<std::size_t> lats;
  auto state = machine.initial();
  while (!seen.count(state)) {
    seen.emplace(state, lats.size());
    std::size_t d = machine.greedy_latency(state);
    lats.push_back(d);
    state = machine.next(state, d);
  }
  std::size_t loop_start = seen.at(state);
  out.greedy_prefix.assign(lats.begin(), lats.begin() + static_cast<std::ptrdiff_t>(loop_start));
  out.greedy.latencies.assign(lats.begin() + static_cast<std::ptrdiff_t>(loop_start), lats.end());
  return out;
}

/// Everything the analysis derives for one route.
struct AnalysisReport {
  std::string name;
  Route route;
  ReservationTable table;
  ForbiddenLatencySet forbidden;
  CollisionVector vector;
  LatencySchedule schedule;
  std::size_t lower_bound = 0; // max marks in any table row; MAL never goes below it
  std::vector<std::string> warnings;
};

inline AnalysisReport analyze(const Route& route, const StageSet& decls, std::string name = "default") {
  if (route.steps.empty())
    throw ValidationError("empty route");
  AnalysisReport r;
  r.name = std::move(name);
  r.route = route;
  r.table = reservation_table(route, decls);
  r.forbidden = forbidden_latencies(r.table);
  r.vector = collision_vector(r.forbidden, r.table.length);
  r.schedule = minimal_average_latency(r.vector);
  r.lower_bound = r.table.max_row_marks();
  if (r.schedule.mal() < Rational::of(r.lower_bound, 1))
    throw InvariantError("minimal average latency below the reservation-table bound");
  r.warnings = route_warnings(route);
  return r;
}

inline AnalysisReport analyze(const PipeExpr& e, const StageSet& decls, std::string name = "default") {
  validate(e, decls);
  return analyze(flatten(e), decls, std::move(name));
}

/// Multi-function pipelines are analyzed one route at a time.
inline std::vector<AnalysisReport> analyze(const std::vector<NamedPipeline>& pipelines,
                                           const StageSet& decls) {
  std::vector<AnalysisReport> out;
  for (const auto& p : pipelines)
    out.push_back(analyze(p.expr, decls, p.name));
  return out;
}

} // namespace pipekit
