#pragma once

// Command-line front end. run_cli is the whole program; tools/pipekit.cpp
// only forwards argv.
//
// Exit codes: 0 success, 1 bad input (usage, parse, configuration,
// evaluation), 2 deadlock, 3 horizon reached with work in flight.

#include <pipekit/analysis.hpp>
#include <pipekit/elaborate.hpp>
#include <pipekit/pipeline_file.hpp>
#include <pipekit/report.hpp>
#include <pipekit/simulate.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace pipekit::cli {

enum ExitCode : int { Ok = 0, InputError = 1, Deadlock = 2, Horizon = 3 };

namespace detail {

inline std::optional<double> parse_real(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  if (s.empty())
    return std::nullopt;
  if (s.front() == '+')
    s.remove_prefix(1);
  double v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size())
    return std::nullopt;
  return v;
}

/// "0,1,2" or a path to a file of values separated by commas or newlines.
/// A non-numeric first line in a file is taken as a header.
inline std::vector<double> parse_inputs(const std::string& arg) {
  std::vector<double> out;
  auto split = [&](const std::string& text, const std::string& where, bool allow_header) {
    std::string cell;
    std::size_t line = 1;
    bool header_checked = !allow_header;
    std::istringstream lines(text);
    std::string row;
    while (std::getline(lines, row)) {
      if (!header_checked) {
        header_checked = true;
        std::istringstream cells(row);
        std::string first;
        std::getline(cells, first, ',');
        if (!first.empty() && !parse_real(first) && first.find_first_not_of(" \t\r") != std::string::npos) {
          ++line;
          continue;
        }
      }
      std::istringstream cells(row);
      while (std::getline(cells, cell, ',')) {
        if (cell.find_first_not_of(" \t\r") == std::string::npos)
          continue;
        auto v = parse_real(cell);
        if (!v)
          throw ConfigError(where + (allow_header ? ":" + std::to_string(line) : std::string()) +
                            ": input \"" + cell + "\" is not a number");
        out.push_back(*v);
      }
      ++line;
    }
  };
  std::error_code ec;
  if (std::filesystem::is_regular_file(arg, ec)) {
    std::ifstream in(arg, std::ios::binary);
    if (!in)
      throw ConfigError("cannot read inputs file \"" + arg + "\"");
    std::ostringstream ss;
    ss << in.rdbuf();
    split(ss.str(), arg, true);
  } else {
    split(arg, "--inputs", false);
  }
  return out;
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw ConfigError("cannot write \"" + path + "\"");
  out << text;
  if (!out)
    throw ConfigError("failed writing \"" + path + "\"");
}

inline void print_warnings(const std::vector<std::string>& ws, std::ostream& err) {
  for (const auto& w : ws)
    err << "warning: " << w << "\n";
}

inline void sever_all(Netlist& net, const std::vector<std::string>& specs) {
  for (const auto& s : specs) {
    auto arrow = s.find("->");
    if (arrow == std::string::npos)
      throw ConfigError("--sever expects FROM->TO, got \"" + s + "\"");
    std::string from = pipekit::detail::trim(s.substr(0, arrow));
    std::string to = pipekit::detail::trim(s.substr(arrow + 2));
    if (!net.sever(from, to))
      throw ConfigError("--sever: no channel from \"" + from + "\" to \"" + to + "\"");
  }
}

} // namespace detail

struct Options {
  std::string file;
  std::string format = "text";
  // run
  std::vector<std::string> inputs;
  std::vector<std::string> types;
  std::optional<std::string> issue;
  std::optional<std::uint64_t> horizon;
  std::optional<std::string> trace;
  std::vector<std::string> sever;
  // elaborate
  std::optional<std::string> dot;
};

inline int cmd_analyze(const Options& o, std::ostream& out, std::ostream& err) {
  auto cfg = check_file(load_pipeline_file(o.file));
  detail::print_warnings(cfg.warnings, err);
  std::vector<AnalysisReport> reports;
  for (std::size_t i = 0; i < cfg.routes.size(); ++i)
    reports.push_back(analyze(cfg.routes[i], cfg.decls, cfg.pipelines[i].name));
  if (o.format == "json-like") {
    out << canonical_text(analyze_doc(reports));
  } else {
    for (std::size_t i = 0; i < reports.size(); ++i)
      out << (i ? "\n" : "") << analysis_text(reports[i]);
  }
  return Ok;
}

inline int cmd_elaborate(const Options& o, std::ostream& out, std::ostream& err) {
  auto cfg = check_file(load_pipeline_file(o.file));
  detail::print_warnings(cfg.warnings, err);
  auto net = elaborate(cfg);
  detail::sever_all(net, o.sever);
  if (o.dot) {
    if (*o.dot == "-")
      out << to_dot(net);
    else
      detail::write_file(*o.dot, to_dot(net));
  }
  if (!o.dot || *o.dot != "-")
    out << (o.format == "json-like" ? canonical_text(netlist_doc(net)) : netlist_text(net));
  return Ok;
}

inline int cmd_run(const Options& o, std::ostream& out, std::ostream& err) {
  auto file = load_pipeline_file(o.file);
  auto cfg = check_file(file);

  if (o.inputs.empty())
    throw ConfigError("run needs at least one --inputs");
  if (!o.types.empty() && o.types.size() != o.inputs.size())
    throw ConfigError("give one --type per --inputs (" + std::to_string(o.inputs.size()) + " inputs, " +
                      std::to_string(o.types.size()) + " types)");
  if (o.types.empty() && cfg.pipelines.size() > 1)
    throw ConfigError("file defines " + std::to_string(cfg.pipelines.size()) +
                      " pipelines; choose one per --inputs with --type");

  std::vector<InputBatch> batches;
  for (std::size_t i = 0; i < o.inputs.size(); ++i) {
    InputBatch b;
    if (!o.types.empty()) {
      auto it = std::find_if(cfg.pipelines.begin(), cfg.pipelines.end(),
                             [&](const NamedPipeline& p) { return p.name == o.types[i]; });
      if (it == cfg.pipelines.end())
        throw ConfigError("unknown pipeline type \"" + o.types[i] + "\"");
      b.route = static_cast<std::size_t>(it - cfg.pipelines.begin());
    }
    b.values = detail::parse_inputs(o.inputs[i]);
    batches.push_back(std::move(b));
  }

  SimOptions opt;
  opt.issue = o.issue ? parse_issue(*o.issue) : file.issue.value_or(IssueGreedy{});
  opt.horizon_ns = o.horizon;

  auto net = elaborate(cfg);
  detail::sever_all(net, o.sever);

  RunSummary summary;
  summary.config = &cfg;
  summary.issue = opt.issue;
  for (std::size_t i = 0; i < cfg.routes.size(); ++i)
    summary.analyses.push_back(analyze(cfg.routes[i], cfg.decls, cfg.pipelines[i].name));

  auto result = simulate(net, cfg, batches, opt);
  detail::print_warnings(result.warnings, err);
  if (o.trace)
    detail::write_file(*o.trace, trace_csv(result));
  out << (o.format == "json-like" ? canonical_text(run_doc(result, summary)) : run_text(result, summary));

  switch (result.status) {
  case kernel::RunStatus::Completed:
    return Ok;
  case kernel::RunStatus::Deadlock:
    err << "error: " << result.diagnostic;
    return Deadlock;
  case kernel::RunStatus::HorizonReached:
    err << "error: " << result.diagnostic << "\n";
    return Horizon;
  }
  return Ok;
}

/// `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pipeline modeling toolkit: analyze, elaborate and simulate pipeline definitions", "pipekit"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::string> formats{"text", "json-like"};

  auto* analyze_cmd = app.add_subcommand("analyze", "Reservation table, forbidden latencies, collision vector, MAL");
  analyze_cmd->add_option("file", o.file, "Pipeline definition file")->required();
  analyze_cmd->add_option("--format", o.format, "text or json-like")->check(CLI::IsMember(formats));

  auto* elab_cmd = app.add_subcommand("elaborate", "Expand into stages, routers and channels");
  elab_cmd->add_option("file", o.file, "Pipeline definition file")->required();
  elab_cmd->add_option("--dot", o.dot, "Write Graphviz DOT to this path ('-' for stdout)");
  elab_cmd->add_option("--format", o.format, "text or json-like")->check(CLI::IsMember(formats));
  elab_cmd->add_option("--sever", o.sever, "Remove the channel FROM->TO");

  auto* run_cmd = app.add_subcommand("run", "Simulate transactions through the pipeline");
  run_cmd->add_option("file", o.file, "Pipeline definition file")->required();
  run_cmd->add_option("--inputs", o.inputs, "Comma-separated orig values, or a CSV file of them")
      ->allow_extra_args(false);
  run_cmd->add_option("--type", o.types, "Pipeline name for the matching --inputs")->allow_extra_args(false);
  run_cmd->add_option("--issue", o.issue, "greedy, eager or fixed:<k>");
  run_cmd->add_option("--horizon", o.horizon, "Stop after this many ns");
  run_cmd->add_option("--trace", o.trace, "Write the transaction trace as CSV");
  run_cmd->add_option("--format", o.format, "text or json-like")->check(CLI::IsMember(formats));
  run_cmd->add_option("--sever", o.sever, "Remove the channel FROM->TO before running")->allow_extra_args(false);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return InputError;
  }

  try {
    if (*analyze_cmd)
      return cmd_analyze(o, out, err);
    if (*elab_cmd)
      return cmd_elaborate(o, out, err);
    return cmd_run(o, out, err);
  } catch (const FileError& e) {
    err << e.what() << "\n";
  } catch (const Error& e) {
    err << (o.file.empty() ? "" : o.file + ": ") << "error: " << e.what() << "\n";
  }
  return InputError;
}

} // namespace pipekit::cli
