#pragma once

// Report rendering: plain text for people, a canonical structured-text
// object for tools, and a CSV transaction trace.
//
// Structured text is JSON syntax with keys sorted, two-space indentation,
// integers printed bare and reals with at most 6 significant digits.

#include <pipekit/analysis.hpp>
#include <pipekit/elaborate.hpp>
#include <pipekit/simulate.hpp>

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace pipekit {

inline constexpr int report_format_version = 1;

using Document = nlohmann::json; // object keys are kept sorted

/// Reals with at most 6 significant digits; -0 prints as 0.
inline std::string format_real(double v) {
  if (v == 0)
    return "0";
  if (std::isnan(v))
    return "nan";
  if (std::isinf(v))
    return v < 0 ? "-inf" : "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

/// Shortest text that reads back as the same double.
inline std::string format_exact(double v) {
  if (v == 0)
    return "0";
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{})
    return format_real(v);
  return std::string(buf, end);
}

namespace detail {
inline void emit(std::ostream& os, const Document& d, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  const std::string inner(static_cast<std::size_t>(indent + 1) * 2, ' ');
  switch (d.type()) {
  case Document::value_t::object: {
    if (d.empty()) {
      os << "{}";
      return;
    }
    os << "{\n";
    bool first = true;
    for (auto it = d.begin(); it != d.end(); ++it) {
      os << (first ? "" : ",\n") << inner << Document(it.key()).dump() << ": ";
      emit(os, it.value(), indent + 1);
      first = false;
    }
    os << "\n" << pad << "}";
    return;
  }
  case Document::value_t::array: {
    if (d.empty()) {
      os << "[]";
      return;
    }
    bool scalars = std::none_of(d.begin(), d.end(), [](const Document& e) { return e.is_structured(); });
    if (scalars) {
      os << "[";
      for (std::size_t i = 0; i < d.size(); ++i) {
        os << (i ? ", " : "");
        emit(os, d[i], indent + 1);
      }
      os << "]";
      return;
    }
    os << "[\n";
    for (std::size_t i = 0; i < d.size(); ++i) {
      os << (i ? ",\n" : "") << inner;
      emit(os, d[i], indent + 1);
    }
    os << "\n" << pad << "]";
    return;
  }
  case Document::value_t::number_float:
    os << format_real(d.get<double>());
    return;
  default:
    os << d.dump();
  }
}
} // namespace detail

inline std::string canonical_text(const Document& d) {
  std::ostringstream os;
  detail::emit(os, d, 0);
  os << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// analyze

/// Rows are stages, columns steps, X marks a stage in use.
inline std::string reservation_grid(const ReservationTable& t) {
  std::size_t name_w = 5;
  for (const auto& s : t.stages)
    name_w = std::max(name_w, s.name.size());
  std::size_t col_w = std::to_string(t.length == 0 ? 0 : t.length - 1).size();
  std::ostringstream os;
  auto cell = [&](const std::string& v) { return std::string(col_w - v.size() + 1, ' ') + v; };
  os << std::string(name_w - 4, ' ') << "step";
  for (std::size_t c = 0; c < t.length; ++c)
    os << cell(std::to_string(c));
  os << "\n";
  for (std::size_t r = 0; r < t.stages.size(); ++r) {
    os << std::string(name_w - t.stages[r].name.size(), ' ') << t.stages[r].name;
    for (std::size_t c = 0; c < t.length; ++c) {
      bool mark = std::find(t.marks[r].begin(), t.marks[r].end(), c) != t.marks[r].end();
      os << cell(mark ? "X" : ".");
    }
    os << "\n";
  }
  return os.str();
}

inline std::string format_set(const ForbiddenLatencySet& f) {
  std::string s = "{";
  bool first = true;
  for (auto d : f.latencies) {
    s += (first ? "" : ", ") + std::to_string(d);
    first = false;
  }
  return s + "}";
}

inline std::string analysis_text(const AnalysisReport& r) {
  std::ostringstream os;
  os << "pipeline " << r.name << ": " << to_string(r.route) << "\n";
  os << "length: " << r.route.length() << "\n";
  os << "reservation table:\n" << reservation_grid(r.table);
  os << "forbidden latencies: " << format_set(r.forbidden) << "\n";
  os << "collision vector: " << (r.vector.bits.empty() ? "(empty)" : r.vector.to_string()) << "\n";
  os << "minimal average latency: " << to_string(r.schedule.mal()) << " via cycle "
     << to_string(r.schedule.minimal) << "\n";
  os << "greedy cycle: " << to_string(r.schedule.greedy) << " average "
     << to_string(r.schedule.greedy.average());
  if (!r.schedule.greedy_prefix.empty()) {
    os << " after";
    for (auto d : r.schedule.greedy_prefix)
      os << " " << d;
  }
  os << "\n";
  os << "lower bound: " << r.lower_bound << "\n";
  os << "collision states: " << r.schedule.states << "\n";
  return os.str();
}

inline Document rational_doc(const Rational& r) {
  return Document{{"num", r.num}, {"den", r.den}, {"value", r.value()}};
}

inline Document analysis_doc(const AnalysisReport& r) {
  Document d;
  d["name"] = r.name;
  d["route"] = to_string(r.route);
  d["length"] = r.route.length();
  Document table = Document::object();
  for (std::size_t i = 0; i < r.table.stages.size(); ++i)
    table[r.table.stages[i].name] = r.table.marks[i];
  d["reservation_table"] = table;
  d["forbidden_latencies"] = Document(std::vector<std::size_t>(r.forbidden.latencies.begin(), r.forbidden.latencies.end()));
  d["collision_vector"] = r.vector.to_string();
  d["mal"] = rational_doc(r.schedule.mal());
  d["mal_cycle"] = r.schedule.minimal.latencies;
  d["greedy_cycle"] = r.schedule.greedy.latencies;
  d["greedy_prefix"] = r.schedule.greedy_prefix;
  d["greedy_average"] = rational_doc(r.schedule.greedy.average());
  d["lower_bound"] = r.lower_bound;
  d["collision_states"] = r.schedule.states;
  d["warnings"] = r.warnings;
  return d;
}

inline Document analyze_doc(const std::vector<AnalysisReport>& reports) {
  Document d;
  d["format_version"] = report_format_version;
  d["command"] = "analyze";
  d["pipelines"] = Document::array();
  for (const auto& r : reports)
    d["pipelines"].push_back(analysis_doc(r));
  return d;
}

// ---------------------------------------------------------------------------
// run

/// Trace rows sorted by transaction id; unmerged fork copies keep exit order.
inline std::vector<kernel::TraceRecord<Sample>> sorted_trace(const SampleResult& r) {
  auto rows = r.trace;
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return rows;
}

inline std::string trace_csv(const SampleResult& r) {
  std::ostringstream os;
  os << "id,inject_ns,exit_ns,orig,data\n";
  for (const auto& t : sorted_trace(r))
    os << t.id << "," << t.injected_at.ns << "," << t.exited_at.ns << "," << format_exact(t.payload.orig) << ","
       << format_exact(t.payload.data) << "\n";
  return os.str();
}

inline Document stats_doc(const kernel::RunStats& s) {
  Document d;
  d["injected"] = s.injected;
  d["completed"] = s.completed;
  d["in_flight"] = s.in_flight;
  d["dropped"] = s.dropped;
  d["drops"] = s.drops;
  d["issue_stalls"] = s.issue_stalls;
  d["total_stalls"] = s.total_stalls;
  d["timed_waits"] = s.timed_waits;
  d["final_ns"] = s.final_time.ns;
  d["final_delta"] = s.final_time.delta;
  d["throughput"] = s.throughput ? Document(*s.throughput) : Document(nullptr);
  Document stages = Document::object();
  for (const auto& st : s.stages)
    stages[st.name] = Document{{"items", st.items},
                               {"busy_ns", st.busy_ns},
                               {"stalls", st.stalls},
                               {"output_stalls", st.output_stalls},
                               {"drops", st.drops}};
  d["stages"] = stages;
  return d;
}

struct RunSummary {
  const CheckedConfig* config = nullptr;
  std::vector<AnalysisReport> analyses;
  IssueSpec issue = IssueGreedy{};
};

inline Document run_doc(const SampleResult& r, const RunSummary& s) {
  Document d;
  d["format_version"] = report_format_version;
  d["command"] = "run";
  d["status"] = kernel::to_string(r.status);
  d["issue"] = to_string(s.issue);
  d["results"] = Document::array();
  for (const auto& t : sorted_trace(r)) {
    Document row;
    row["id"] = t.id;
    row["type"] = s.config ? s.config->pipelines.at(t.route).name : std::to_string(t.route);
    row["inject_ns"] = t.injected_at.ns;
    row["exit_ns"] = t.exited_at.ns;
    row["orig"] = t.payload.orig;
    row["data"] = t.payload.data;
    d["results"].push_back(row);
  }
  d["in_flight_ids"] = r.in_flight_ids;
  d["stats"] = stats_doc(r.stats);
  Document analysis = Document::object();
  for (const auto& a : s.analyses)
    analysis[a.name] = Document{
        {"mal", rational_doc(a.schedule.mal())},
        {"greedy_cycle", a.schedule.greedy.latencies},
        {"forbidden_latencies",
         std::vector<std::size_t>(a.forbidden.latencies.begin(), a.forbidden.latencies.end())}};
  d["analysis"] = analysis;
  d["warnings"] = r.warnings;
  return d;
}

inline std::string run_text(const SampleResult& r, const RunSummary& s) {
  std::ostringstream os;
  os << "status: " << kernel::to_string(r.status) << "\n";
  os << "issue: " << to_string(s.issue) << "\n";
  for (const auto& a : s.analyses)
    os << "pipeline " << a.name << ": MAL " << to_string(a.schedule.mal()) << ", greedy cycle "
       << to_string(a.schedule.greedy) << ", forbidden " << format_set(a.forbidden) << "\n";
  os << "results:\n";
  os << "  id  type        inject_ns  exit_ns  orig  data\n";
  for (const auto& t : sorted_trace(r)) {
    std::string type = s.config ? s.config->pipelines.at(t.route).name : std::to_string(t.route);
    char line[160];
    std::snprintf(line, sizeof line, "  %-3llu %-11s %9llu %8llu  %s  %s\n",
                  static_cast<unsigned long long>(t.id), type.c_str(),
                  static_cast<unsigned long long>(t.injected_at.ns), static_cast<unsigned long long>(t.exited_at.ns),
                  format_exact(t.payload.orig).c_str(), format_exact(t.payload.data).c_str());
    os << line;
  }
  const auto& st = r.stats;
  os << "stats:\n";
  os << "  injected " << st.injected << ", completed " << st.completed << ", in flight " << st.in_flight
     << ", dropped " << st.dropped << "\n";
  os << "  final time " << st.final_time.ns << " ns (delta " << st.final_time.delta << ")\n";
  os << "  throughput " << (st.throughput ? format_real(*st.throughput) + " txn/ns" : std::string("n/a")) << "\n";
  os << "  stalls " << st.total_stalls << " (issue " << st.issue_stalls << "), drops " << st.drops
     << ", timed waits " << st.timed_waits << "\n";
  for (const auto& sg : st.stages)
    os << "  " << sg.name << ": items " << sg.items << ", busy " << sg.busy_ns << " ns, stalls " << sg.stalls
       << ", output stalls " << sg.output_stalls << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// elaborate

inline std::string destination_text(const Destination& d) {
  if (d.exit)
    return "exit";
  std::string s;
  for (std::size_t i = 0; i < d.stages.size(); ++i)
    s += (i ? " + " : "") + d.stages[i].name;
  return s;
}

inline std::string netlist_text(const Netlist& n) {
  std::ostringstream os;
  os << "stages:";
  for (const auto& s : n.stages)
    os << " " << s.stage.name;
  os << "\nrouters:";
  for (const auto& r : n.routers)
    os << " " << r.name;
  os << "\n";
  for (std::size_t p = 0; p < n.routes.size(); ++p) {
    os << "pipeline " << n.route_names[p] << ": " << to_string(n.routes[p]) << "\n";
    os << "  entry -> " << destination_text(n.entry[p]) << "\n";
    for (const auto& r : n.routers) {
      if (!r.owner)
        continue;
      for (const auto& [step, dest] : r.tables[p].entries)
        os << "  " << r.name << " after step " << step << " -> " << destination_text(dest) << "\n";
    }
  }
  os << "channels:\n";
  for (const auto& e : n.channels)
    os << "  " << n.node_name(e.from) << " -> " << n.node_name(e.to) << " (" << to_string(e.kind) << ")\n";
  return os.str();
}

inline Document netlist_doc(const Netlist& n) {
  Document d;
  d["format_version"] = report_format_version;
  d["command"] = "elaborate";
  d["stages"] = Document::array();
  for (const auto& s : n.stages)
    d["stages"].push_back(s.stage.name);
  d["routers"] = Document::array();
  for (const auto& r : n.routers) {
    Document rd;
    rd["name"] = r.name;
    rd["owner"] = r.owner ? Document(r.owner->name) : Document(nullptr);
    Document tables = Document::object();
    for (std::size_t p = 0; p < n.routes.size(); ++p) {
      Document t = Document::array();
      if (!r.owner)
        t.push_back(Document{{"after_step", nullptr}, {"to", destination_text(n.entry[p])}});
      else
        for (const auto& [step, dest] : r.tables[p].entries)
          t.push_back(Document{{"after_step", step}, {"to", destination_text(dest)}});
      tables[n.route_names[p]] = t;
    }
    rd["tables"] = tables;
    d["routers"].push_back(rd);
  }
  d["channels"] = Document::array();
  for (const auto& e : n.channels)
    d["channels"].push_back(
        Document{{"from", n.node_name(e.from)}, {"to", n.node_name(e.to)}, {"kind", to_string(e.kind)}});
  return d;
}

} // namespace pipekit
