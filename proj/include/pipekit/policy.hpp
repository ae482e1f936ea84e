#pragma once

// Stage configuration dimensions. Each dimension is a small value type so that
// run configurations stay serializable; the engine turns them into statically
// composed behavior when it builds its processes.

#include <pipekit/dsl.hpp>

#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace pipekit {

// ---------------------------------------------------------------------------
// Arithmetic expressions over named real variables:
//   expr   ::= term (('+' | '-') term)*
//   term   ::= unary (('*' | '/') unary)*
//   unary  ::= '-' unary | atom
//   atom   ::= number | variable | 'sqr' '(' expr ')' | '(' expr ')'

class Expr {
public:
  static Expr parse(std::string_view text, std::vector<std::string> variables);

  /// `values[i]` binds `variables()[i]`. Throws EvalError on division by zero.
  double eval(std::span<const double> values) const;

  const std::vector<std::string>& variables() const noexcept { return vars_; }
  const std::string& source() const noexcept { return source_; }

  friend bool operator==(const Expr& a, const Expr& b) {
    return a.source_ == b.source_ && a.vars_ == b.vars_;
  }

private:
  struct Node {
    enum class Op { Const, Var, Add, Sub, Mul, Div, Neg, Sqr } op;
    double value = 0;
    std::size_t var = 0;
    std::unique_ptr<Node> lhs, rhs;
  };

  class Parser;
  static double eval_node(const Node& n, std::span<const double> values);

  std::string source_;
  std::vector<std::string> vars_;
  std::shared_ptr<const Node> root_;
};

class Expr::Parser {
public:
  Parser(std::string_view text, const std::vector<std::string>& vars) : s_(text), vars_(vars) {}

  std::unique_ptr<Node> run() {
    auto n = expr();
    skip();
    if (p_ != s_.size())
      fail("unexpected '" + std::string(1, s_[p_]) + "'");
    return n;
  }

private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("in expression \"" + std::string(s_) + "\": " + msg, 0, p_ + 1);
  }
  void skip() {
    while (p_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[p_])))
      ++p_;
  }
  bool eat(char c) {
    skip();
    if (p_ < s_.size() && s_[p_] == c) {
      ++p_;
      return true;
    }
    return false;
  }
  static std::unique_ptr<Node> make(Node::Op op, std::unique_ptr<Node> l = nullptr,
                                    std::unique_ptr<Node> r = nullptr) {
    auto n = std::make_unique<Node>();
    n->op = op;
    n->lhs = std::move(l);
    n->rhs = std::move(r);
    return n;
  }

  std::unique_ptr<Node> expr() {
    auto n = term();
    while (true) {
      if (eat('+'))
        n = make(Node::Op::Add, std::move(n), term());
      else if (eat('-'))
        n = make(Node::Op::Sub, std::move(n), term());
      else
        return n;
    }
  }
  std::unique_ptr<Node> term() {
    auto n = unary();
    while (true) {
      if (eat('*'))
        n = make(Node::Op::Mul, std::move(n), unary());
      else if (eat('/'))
        n = make(Node::Op::Div, std::move(n), unary());
      else
        return n;
    }
  }
  std::unique_ptr<Node> unary() {
    if (eat('-'))
      return make(Node::Op::Neg, unary());
    return atom();
  }
  std::unique_ptr<Node> atom() {
    skip();
    if (p_ >= s_.size())
      fail("unexpected end of expression");
    char c = s_[p_];
    if (c == '(') {
      ++p_;
      auto n = expr();
      if (!eat(')'))
        fail("expected ')'");
      return n;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t start = p_;
      while (p_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[p_])) || s_[p_] == '.'))
        ++p_;
      if (p_ < s_.size() && (s_[p_] == 'e' || s_[p_] == 'E')) {
        ++p_;
        if (p_ < s_.size() && (s_[p_] == '+' || s_[p_] == '-'))
          ++p_;
        while (p_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[p_])))
          ++p_;
      }
      auto n = make(Node::Op::Const);
      try {
        std::size_t used = 0;
        std::string lit(s_.substr(start, p_ - start));
        n->value = std::stod(lit, &used);
        if (used != lit.size())
          throw std::invalid_argument(lit);
      } catch (const std::exception&) {
        p_ = start;
        fail("malformed number");
      }
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = p_;
      while (p_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[p_])) || s_[p_] == '_'))
        ++p_;
      std::string id(s_.substr(start, p_ - start));
      if (id == "sqr") {
        if (!eat('('))
          fail("expected '(' after sqr");
        auto arg = expr();
        if (!eat(')'))
          fail("expected ')'");
        return make(Node::Op::Sqr, std::move(arg));
      }
      for (std::size_t i = 0; i < vars_.size(); ++i) {
        if (vars_[i] == id) {
          auto n = make(Node::Op::Var);
          n->var = i;
          return n;
        }
      }
      p_ = start;
      fail("unknown variable \"" + id + "\"");
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  std::string_view s_;
  const std::vector<std::string>& vars_;
  std::size_t p_ = 0;
};

inline Expr Expr::parse(std::string_view text, std::vector<std::string> variables) {
  Expr e;
  e.source_ = std::string(text);
  e.vars_ = std::move(variables);
  e.root_ = Parser(e.source_, e.vars_).run();
  return e;
}

inline double Expr::eval_node(const Node& n, std::span<const double> v) {
  switch (n.op) {
  case Node::Op::Const: return n.value;
  case Node::Op::Var: return v[n.var];
  case Node::Op::Add: return eval_node(*n.lhs, v) + eval_node(*n.rhs, v);
  case Node::Op::Sub: return eval_node(*n.lhs, v) - eval_node(*n.rhs, v);
  case Node::Op::Mul: return eval_node(*n.lhs, v) * eval_node(*n.rhs, v);
  case Node::Op::Div: {
    double num = eval_node(*n.lhs, v);
    double den = eval_node(*n.rhs, v);
    if (den == 0.0)
      throw EvalError("division by zero");
    return num / den;
  }
  case Node::Op::Neg: return -eval_node(*n.lhs, v);
  case Node::Op::Sqr: {
    double x = eval_node(*n.lhs, v);
    return x * x;
  }
  }
  throw InvariantError("bad expression node");
}

inline double Expr::eval(std::span<const double> values) const {
  if (values.size() != vars_.size())
    throw InvariantError("expression expects " + std::to_string(vars_.size()) + " values");
  return eval_node(*root_, values);
}

// ---------------------------------------------------------------------------
// Payload carried by the CLI-facing pipelines.

struct Sample {
  double orig = 0;
  double data = 0;
  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Stage function over `orig` and `data`; the result becomes the new `data`.
struct FunctionSpec {
  Expr expr;

  static FunctionSpec parse(std::string_view text) {
    return FunctionSpec{Expr::parse(text, {"orig", "data"})};
  }
  static FunctionSpec identity() { return parse("data"); }

  double operator()(double orig, double data) const {
    const double v[2] = {orig, data};
    return expr.eval(v);
  }
  Sample operator()(const Sample& s) const { return {s.orig, (*this)(s.orig, s.data)}; }
  friend bool operator==(const FunctionSpec&, const FunctionSpec&) = default;
};

inline double eval_function(const FunctionSpec& f, double orig, double data) { return f(orig, data); }

// ---------------------------------------------------------------------------
// Timing

struct Timed {
  std::uint64_t delay_ns = 1;
  friend bool operator==(const Timed&, const Timed&) = default;
};
struct Untimed {
  friend bool operator==(const Untimed&, const Untimed&) = default;
};
using TimingSpec = std::variant<Timed, Untimed>;

inline bool is_untimed(const TimingSpec& t) { return std::holds_alternative<Untimed>(t); }
inline std::uint64_t delay_of(const TimingSpec& t) {
  return is_untimed(t) ? 0 : std::get<Timed>(t).delay_ns;
}

/// Compile-time timing policies. The engine instantiates its stage loop with
/// one of these; the untimed instantiation contains no wait at all.
struct TimedPolicy {
  static constexpr bool timed = true;
  std::uint64_t delay_ns = 1;
};
struct UntimedPolicy {
  static constexpr bool timed = false;
  std::uint64_t delay_ns = 0;
};

// ---------------------------------------------------------------------------
// Communication and execution

enum class ChannelKind { BlockingSingleSlot, OverwriteSignal };
enum class ExecKind { SuspendableLoop, ReactiveCallback };

inline const char* to_string(ChannelKind k) {
  return k == ChannelKind::BlockingSingleSlot ? "blocking" : "signal";
}
inline const char* to_string(ExecKind k) {
  return k == ExecKind::SuspendableLoop ? "loop" : "reactive";
}

// ---------------------------------------------------------------------------
// Join: merging the branch copies of a forked transaction. Copies are ordered
// by their position in the fork, not by arrival.

struct JoinLeft {};
struct JoinRight {};
struct JoinSum {};
/// Expression over `orig`, `dataL`, `dataR`; folded left over n-way forks.
struct JoinCustom {
  Expr expr;
  static JoinCustom parse(std::string_view text) {
    return JoinCustom{Expr::parse(text, {"orig", "dataL", "dataR"})};
  }
};
using JoinSpec = std::variant<JoinLeft, JoinRight, JoinSum, JoinCustom>;

inline std::string to_string(const JoinSpec& j) {
  struct {
    std::string operator()(const JoinLeft&) const { return "left"; }
    std::string operator()(const JoinRight&) const { return "right"; }
    std::string operator()(const JoinSum&) const { return "sum"; }
    std::string operator()(const JoinCustom& c) const { return "\"" + c.expr.source() + "\""; }
  } v;
  return std::visit(v, j);
}

inline Sample merge(const JoinSpec& spec, std::span<const Sample> copies) {
  if (copies.empty())
    throw JoinError("join with no branch copies");
  for (const auto& c : copies)
    if (c.orig != copies.front().orig)
      throw JoinError("branch copies disagree on orig");
  Sample out = copies.front();
  if (std::holds_alternative<JoinRight>(spec)) {
    out = copies.back();
  } else if (std::holds_alternative<JoinSum>(spec)) {
    out.data = 0;
    for (const auto& c : copies)
      out.data += c.data;
  } else if (const auto* custom = std::get_if<JoinCustom>(&spec)) {
    for (std::size_t i = 1; i < copies.size(); ++i) {
      const double v[3] = {out.orig, out.data, copies[i].data};
      out.data = custom->expr.eval(v);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Arbitration between writers contending for one channel slot.

enum class ArbitrationSpec {
  ArrivalOrder, // earliest arrival nanosecond wins; ties go to the lower transaction id
  OldestFirst,  // lowest transaction id wins regardless of arrival
};

// ---------------------------------------------------------------------------
// Issue: when new transactions enter the pipeline.

struct IssueGreedy {
  friend bool operator==(const IssueGreedy&, const IssueGreedy&) = default;
};
struct IssueFixed {
  std::uint64_t interval = 1;
  friend bool operator==(const IssueFixed&, const IssueFixed&) = default;
};
struct IssueEager {
  friend bool operator==(const IssueEager&, const IssueEager&) = default;
};
using IssueSpec = std::variant<IssueGreedy, IssueFixed, IssueEager>;

inline IssueSpec parse_issue(std::string_view text) {
  if (text == "greedy")
    return IssueGreedy{};
  if (text == "eager")
    return IssueEager{};
  if (text.starts_with("fixed:")) {
    auto num = text.substr(6);
    if (!num.empty() && std::all_of(num.begin(), num.end(),
                                    [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      auto k = std::stoull(std::string(num));
      if (k >= 1)
        return IssueFixed{k};
    }
  }
  throw ConfigError("issue policy must be greedy, eager, or fixed:<k> with k >= 1, got \"" +
                    std::string(text) + "\"");
}

inline std::string to_string(const IssueSpec& s) {
  if (std::holds_alternative<IssueGreedy>(s))
    return "greedy";
  if (std::holds_alternative<IssueEager>(s))
    return "eager";
  return "fixed:" + std::to_string(std::get<IssueFixed>(s).interval);
}

// ---------------------------------------------------------------------------
// Stage configuration

struct StageConfig {
  StageId stage;
  FunctionSpec function = FunctionSpec::identity();
  TimingSpec timing = Timed{1};
  ChannelKind channel = ChannelKind::BlockingSingleSlot;
  ExecKind exec = ExecKind::SuspendableLoop;
};

/// A configuration that passed validate_config. `stages` is indexed by stage
/// ordinal; entries for stages no route uses stay empty.
struct CheckedConfig {
  StageSet decls;
  std::vector<NamedPipeline> pipelines;
  std::vector<Route> routes;
  std::vector<std::optional<StageConfig>> stages;
  std::optional<JoinSpec> join;
  std::vector<std::string> warnings;

  const StageConfig& config_of(const StageId& s) const {
    const auto& c = stages.at(s.ordinal);
    if (!c)
      throw ConfigError("no configuration for stage \"" + s.name + "\"");
    return *c;
  }

  std::map<std::string, ChannelKind> channel_kinds() const {
    std::map<std::string, ChannelKind> out;
    for (const auto& c : stages)
      if (c)
        out[c->stage.name] = c->channel;
    return out;
  }

  bool all_untimed() const {
    for (const auto& c : stages)
      if (c && !is_untimed(c->timing))
        return false;
    return true;
  }
};

inline CheckedConfig validate_config(const StageSet& decls, std::vector<NamedPipeline> pipelines,
                                     std::vector<StageConfig> configs,
                                     std::optional<JoinSpec> join = std::nullopt) {
  if (pipelines.empty())
    throw ConfigError("no pipeline expression");
  CheckedConfig out;
  out.decls = decls;
  out.join = std::move(join);
  out.stages.resize(decls.size());

  for (auto& c : configs) {
    if (!decls.contains(c.stage))
      throw ConfigError("configuration for undeclared stage \"" + c.stage.name + "\"");
    if (out.stages[c.stage.ordinal])
      throw ConfigError("stage \"" + c.stage.name + "\" is configured twice");
    if (c.exec == ExecKind::ReactiveCallback) {
      if (delay_of(c.timing) > 0)
        throw ConfigError("stage \"" + c.stage.name +
                          "\": reactive execution cannot wait; use untimed or delay 0");
      if (c.channel != ChannelKind::OverwriteSignal)
        throw ConfigError("stage \"" + c.stage.name +
                          "\": reactive execution requires signal channels");
    }
    out.stages[c.stage.ordinal] = std::move(c);
  }

  for (std::size_t p = 0; p < pipelines.size(); ++p) {
    for (std::size_t q = 0; q < p; ++q)
      if (pipelines[q].name == pipelines[p].name)
        throw ConfigError("pipeline \"" + pipelines[p].name + "\" is defined twice");
    validate(pipelines[p].expr, decls);
    Route route = flatten(pipelines[p].expr);
    for (const auto& s : route.stages())
      if (!out.stages[s.ordinal])
        throw ConfigError("stage \"" + s.name + "\" has no configuration");

    for (std::size_t i = 0; i < route.steps.size(); ++i) {
      const auto& step = route.steps[i];
      if (step.size() < 2)
        continue;
      if (i + 1 < route.steps.size()) {
        if (!out.join) {
          std::string routers;
          for (std::size_t m = 0; m < step.size(); ++m)
            routers += (m ? ", r_" : "r_") + step[m].name;
          std::string succ;
          for (std::size_t m = 0; m < route.steps[i + 1].size(); ++m)
            succ += (m ? "," : "") + route.steps[i + 1][m].name;
          throw ConfigError("pipeline \"" + pipelines[p].name + "\": fork at step " +
                            std::to_string(i) + " has no join spec; merge at routers " + routers +
                            " feeding " + succ);
        }
      }
    }
    for (auto& w : route_warnings(route))
      out.warnings.push_back("pipeline \"" + pipelines[p].name + "\": " + w);
    out.routes.push_back(std::move(route));
  }

  for (const auto& c : out.stages) {
    if (!c)
      continue;
    bool used = false;
    for (const auto& r : out.routes)
      used = used || r.uses(c->stage);
    if (!used)
      out.warnings.push_back("stage \"" + c->stage.name + "\" is not used by any pipeline");
  }
  out.pipelines = std::move(pipelines);
  return out;
}

} // namespace pipekit
