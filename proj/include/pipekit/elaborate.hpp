#pragma once

// Expands routes into a netlist: one node per distinct stage, an entry router
// plus one router at every stage output, and channels between them. Stages
// never connect to each other directly; all fan-out and fan-in happens at
// routers, which forward transactions by looking up the step they just
// completed.

#include <pipekit/dsl.hpp>
#include <pipekit/policy.hpp>

#include <algorithm>
#include <cstddef>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace pipekit {

/// Where a router sends a transaction: a set of stages, or out of the pipeline.
struct Destination {
  std::vector<StageId> stages;
  bool exit = false;
  friend bool operator==(const Destination&, const Destination&) = default;
};

/// Keyed by the step index the transaction just completed at the owning stage.
struct RoutingTable {
  std::map<std::size_t, Destination> entries;

  const Destination* lookup(std::size_t completed_step) const {
    auto it = entries.find(completed_step);
    return it == entries.end() ? nullptr : &it->second;
  }
  friend bool operator==(const RoutingTable&, const RoutingTable&) = default;
};

inline RoutingTable routing_table(const Route& route, const StageId& s) {
  RoutingTable t;
  for (std::size_t i = 0; i < route.steps.size(); ++i) {
    const auto& step = route.steps[i];
    if (std::find(step.begin(), step.end(), s) == step.end())
      continue;
    Destination d;
    if (i + 1 == route.steps.size())
      d.exit = true;
    else
      d.stages = route.steps[i + 1];
    t.entries.emplace(i, std::move(d));
  }
  if (t.entries.empty())
    throw ElaborationError("stage \"" + s.name + "\" does not appear in the route");
  return t;
}

struct NodeRef {
  enum class Kind { Stage, Router } kind = Kind::Stage;
  std::size_t index = 0;
  friend bool operator==(const NodeRef&, const NodeRef&) = default;
  friend auto operator<=>(const NodeRef&, const NodeRef&) = default;
};

struct StageNode {
  StageId stage;
};

struct RouterNode {
  std::string name;
  std::optional<StageId> owner; // empty for the entry router
  std::vector<RoutingTable> tables; // one per route; empty tables for routes that skip the owner
  bool exit = false;                // has the pipeline's exit sink
};

/// A directed channel. All edges into one stage share that stage's single
/// input channel; `steps[r]` lists the completed steps of route r that use a
/// router->stage edge.
struct ChannelEdge {
  NodeRef from;
  NodeRef to;
  ChannelKind kind = ChannelKind::BlockingSingleSlot;
  std::vector<std::vector<std::size_t>> steps;
};

struct Netlist {
  std::vector<std::string> route_names;
  std::vector<Route> routes;
  std::vector<StageNode> stages;   // distinct stages, declaration order
  std::vector<RouterNode> routers; // [0] is the entry router, then routers[i + 1] follows stages[i]
  std::vector<ChannelEdge> channels;
  std::vector<Destination> entry; // first step of each route

  static constexpr std::size_t entry_router = 0;

  std::optional<std::size_t> stage_index(const StageId& s) const {
    for (std::size_t i = 0; i < stages.size(); ++i)
      if (stages[i].stage == s)
        return i;
    return std::nullopt;
  }
  std::size_t router_of_stage(std::size_t stage_index) const { return stage_index + 1; }

  std::string node_name(const NodeRef& n) const {
    return n.kind == NodeRef::Kind::Stage ? stages.at(n.index).stage.name : routers.at(n.index).name;
  }

  std::vector<const ChannelEdge*> edges_into(const NodeRef& n) const {
    std::vector<const ChannelEdge*> out;
    for (const auto& e : channels)
      if (e.to == n)
        out.push_back(&e);
    return out;
  }
  std::vector<const ChannelEdge*> edges_from(const NodeRef& n) const {
    std::vector<const ChannelEdge*> out;
    for (const auto& e : channels)
      if (e.from == n)
        out.push_back(&e);
    return out;
  }

  /// Removes the channel between two named nodes. Returns false if absent.
  bool sever(const std::string& from, const std::string& to) {
    auto it = std::find_if(channels.begin(), channels.end(), [&](const ChannelEdge& e) {
      return node_name(e.from) == from && node_name(e.to) == to;
    });
    if (it == channels.end())
      return false;
    channels.erase(it);
    return true;
  }
};

/// Elaborates one or more routes over shared stages. `kinds` overrides the
/// channel kind of individual stages by name.
inline Netlist elaborate(const std::vector<Route>& routes, const StageSet& decls,
                         ChannelKind default_kind = ChannelKind::BlockingSingleSlot,
                         const std::map<std::string, ChannelKind>& kinds = {},
                         std::vector<std::string> names = {}) {
  if (routes.empty())
    throw ElaborationError("nothing to elaborate");
  Netlist n;
  n.routes = routes;
  if (names.empty())
    for (std::size_t r = 0; r < routes.size(); ++r)
      names.push_back(routes.size() == 1 ? "default" : "route" + std::to_string(r));
  n.route_names = std::move(names);

  std::vector<StageId> used;
  for (const auto& r : routes) {
    if (r.steps.empty())
      throw ElaborationError("empty route");
    for (const auto& s : r.stages()) {
      if (!decls.contains(s))
        throw ElaborationError("stage \"" + s.name + "\" is not declared");
      if (std::find(used.begin(), used.end(), s) == used.end())
        used.push_back(s);
    }
  }
  std::sort(used.begin(), used.end());

  auto kind_of = [&](const StageId& s) {
    auto it = kinds.find(s.name);
    return it == kinds.end() ? default_kind : it->second;
  };

  n.routers.push_back(RouterNode{"entry", std::nullopt, {}, false});
  for (const auto& s : used) {
    n.stages.push_back(StageNode{s});
    RouterNode router{"r_" + s.name, s, {}, false};
    for (const auto& r : routes) {
      router.tables.push_back(r.uses(s) ? routing_table(r, s) : RoutingTable{});
      for (const auto& [step, dest] : router.tables.back().entries)
        router.exit = router.exit || dest.exit;
    }
    n.routers.push_back(std::move(router));
  }

  const std::size_t nroutes = routes.size();
  auto add_edge = [&](NodeRef from, NodeRef to, ChannelKind kind, std::size_t route,
                      std::optional<std::size_t> step) {
    auto it = std::find_if(n.channels.begin(), n.channels.end(),
                           [&](const ChannelEdge& e) { return e.from == from && e.to == to; });
    if (it == n.channels.end()) {
      n.channels.push_back(ChannelEdge{from, to, kind, std::vector<std::vector<std::size_t>>(nroutes)});
      it = std::prev(n.channels.end());
    }
    if (step)
      it->steps[route].push_back(*step);
  };
  auto stage_ref = [&](const StageId& s) { return NodeRef{NodeRef::Kind::Stage, *n.stage_index(s)}; };

  for (std::size_t r = 0; r < nroutes; ++r) {
    n.entry.push_back(Destination{routes[r].entry(), false});
    for (const auto& s : routes[r].entry())
      add_edge({NodeRef::Kind::Router, Netlist::entry_router}, stage_ref(s), kind_of(s), r, 0);
  }
  for (std::size_t i = 0; i < n.stages.size(); ++i) {
    const StageId& s = n.stages[i].stage;
    NodeRef router{NodeRef::Kind::Router, n.router_of_stage(i)};
    add_edge({NodeRef::Kind::Stage, i}, router, kind_of(s), 0, std::nullopt);
    for (std::size_t r = 0; r < nroutes; ++r)
      for (const auto& [step, dest] : n.routers[router.index].tables[r].entries)
        for (const auto& t : dest.stages)
          add_edge(router, stage_ref(t), kind_of(t), r, step);
  }
  std::stable_sort(n.channels.begin(), n.channels.end(), [](const ChannelEdge& a, const ChannelEdge& b) {
    return std::tie(a.from, a.to) < std::tie(b.from, b.to);
  });
  return n;
}

inline Netlist elaborate(const Route& route, const StageSet& decls,
                         ChannelKind kind = ChannelKind::BlockingSingleSlot) {
  return elaborate(std::vector<Route>{route}, decls, kind);
}

inline Netlist elaborate(const CheckedConfig& cfg) {
  std::vector<std::string> names;
  for (const auto& p : cfg.pipelines)
    names.push_back(p.name);
  return elaborate(cfg.routes, cfg.decls, ChannelKind::BlockingSingleSlot, cfg.channel_kinds(), names);
}

/// Graphviz rendering: stages are boxes, routers circles, nodes in
/// declaration order, router->stage edges labelled with the completed steps
/// that use them.
inline std::string to_dot(const Netlist& n) {
  std::ostringstream os;
  auto quote = [](const std::string& s) { return "\"" + s + "\""; };
  auto label = [&](const ChannelEdge& e) {
    std::string out;
    for (std::size_t r = 0; r < e.steps.size(); ++r) {
      if (e.steps[r].empty())
        continue;
      if (!out.empty())
        out += " ";
      if (n.routes.size() > 1)
        out += n.route_names.at(r) + ":";
      for (std::size_t i = 0; i < e.steps[r].size(); ++i)
        out += (i ? "," : "") + std::to_string(e.steps[r][i]);
    }
    return out;
  };

  os << "digraph pipeline {\n";
  os << "  rankdir=LR;\n";
  os << "  " << quote(n.routers[Netlist::entry_router].name) << " [shape=circle];\n";
  for (std::size_t i = 0; i < n.stages.size(); ++i) {
    os << "  " << quote(n.stages[i].stage.name) << " [shape=box];\n";
    os << "  " << quote(n.routers[n.router_of_stage(i)].name) << " [shape=circle];\n";
  }
  os << "  \"exit\" [shape=plaintext];\n";
  for (const auto& e : n.channels) {
    os << "  " << quote(n.node_name(e.from)) << " -> " << quote(n.node_name(e.to));
    std::vector<std::string> attrs;
    if (auto l = label(e); !l.empty())
      attrs.push_back("label=" + quote(l));
    if (e.kind == ChannelKind::OverwriteSignal)
      attrs.push_back("style=dashed");
    if (!attrs.empty()) {
      os << " [";
      for (std::size_t i = 0; i < attrs.size(); ++i)
        os << (i ? ", " : "") << attrs[i];
      os << "]";
    }
    os << ";\n";
  }
  for (const auto& r : n.routers) {
    if (!r.exit)
      continue;
    std::string l;
    for (std::size_t t = 0; t < r.tables.size(); ++t)
      for (const auto& [step, dest] : r.tables[t].entries)
        if (dest.exit)
          l += (l.empty() ? "" : " ") + (n.routes.size() > 1 ? n.route_names.at(t) + ":" : "") +
               std::to_string(step);
    os << "  " << quote(r.name) << " -> \"exit\" [label=" << quote(l) << "];\n";
  }
  os << "}\n";
  return os.str();
}

} // namespace pipekit
