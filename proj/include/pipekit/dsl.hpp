#pragma once

// Pipeline expression language: stage declarations, an expression AST with
// an operator-overloaded builder (`>>`, `*`, `+`) and a textual parser for the
// same grammar, and flattening of expressions into routes.
//
//   Pipe  ::= Term '>>' Pipe | Term
//   Term  ::= Stage | Stage '*' int | Stage '+' Stage ('+' Stage)*
//   Stage ::= id

#include <pipekit/error.hpp>

#include <algorithm>
#include <cctype>
#include <compare>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace pipekit {

struct StageId {
  std::string name;
  std::size_t ordinal = 0;

  friend bool operator==(const StageId&, const StageId&) = default;
  friend std::strong_ordering operator<=>(const StageId& a, const StageId& b) {
    if (auto c = a.ordinal <=> b.ordinal; c != 0)
      return c;
    return a.name.compare(b.name) <=> 0;
  }
};

/// An ordered declaration set. Names are unique and ordinals are dense
/// 0..n-1 in declaration order.
class StageSet {
public:
  StageSet() = default;

  const StageId* find(std::string_view name) const {
    auto it = std::find_if(stages_.begin(), stages_.end(),
                           [&](const StageId& s) { return s.name == name; });
    return it == stages_.end() ? nullptr : &*it;
  }

  const StageId& at(std::string_view name) const {
    if (const StageId* s = find(name))
      return *s;
    throw ValidationError("unknown stage \"" + std::string(name) + "\"");
  }

  const StageId& operator[](std::string_view name) const { return at(name); }

  bool contains(const StageId& s) const {
    return s.ordinal < stages_.size() && stages_[s.ordinal] == s;
  }

  std::size_t size() const noexcept { return stages_.size(); }
  bool empty() const noexcept { return stages_.empty(); }
  auto begin() const noexcept { return stages_.begin(); }
  auto end() const noexcept { return stages_.end(); }
  const StageId& by_ordinal(std::size_t i) const { return stages_.at(i); }

  friend bool operator==(const StageSet&, const StageSet&) = default;

private:
  friend StageSet declare_stages(const std::vector<std::string>& names);
  std::vector<StageId> stages_;
};

inline StageSet declare_stages(const std::vector<std::string>& names) {
  if (names.empty())
    throw DeclarationError("no stages declared");
  StageSet set;
  for (const auto& name : names) {
    if (name.empty())
      throw DeclarationError("empty stage name");
    if (set.find(name))
      throw DeclarationError("duplicate stage \"" + name + "\"");
    set.stages_.push_back(StageId{name, set.stages_.size()});
  }
  return set;
}

inline StageSet declare_stages(std::initializer_list<std::string_view> names) {
  std::vector<std::string> v;
  for (auto n : names)
    v.emplace_back(n);
  return declare_stages(v);
}

// ---------------------------------------------------------------------------
// Expression AST

class PipeExpr;

namespace detail {
struct PipeNode;
}

class PipeExpr {
public:
  struct StageRef {
    StageId stage;
    friend bool operator==(const StageRef&, const StageRef&) = default;
  };
  struct Seq;
  struct Repeat {
    StageId stage;
    int count = 1;
    friend bool operator==(const Repeat&, const Repeat&) = default;
  };
  struct Fork {
    std::vector<StageId> members;
    friend bool operator==(const Fork&, const Fork&) = default;
  };

  // Implicit so that `s1 >> s2` works directly on declared stages.
  PipeExpr(const StageId& stage); // NOLINT(google-explicit-constructor)

  bool is_stage() const;
  bool is_seq() const;
  bool is_repeat() const;
  bool is_fork() const;

  const StageRef& as_stage() const;
  const Seq& as_seq() const;
  const Repeat& as_repeat() const;
  const Fork& as_fork() const;

  template <class Visitor> decltype(auto) visit(Visitor&& v) const;

  friend bool operator==(const PipeExpr& a, const PipeExpr& b);

private:
  friend PipeExpr seq(PipeExpr, PipeExpr);
  friend PipeExpr repeat(const StageId&, int);
  friend PipeExpr fork(std::vector<StageId>);

  explicit PipeExpr(std::shared_ptr<const detail::PipeNode> node) : node_(std::move(node)) {}

  std::shared_ptr<const detail::PipeNode> node_;
};

struct PipeExpr::Seq {
  PipeExpr head;
  PipeExpr tail;
};

namespace detail {
struct PipeNode {
  std::variant<PipeExpr::StageRef, PipeExpr::Seq, PipeExpr::Repeat, PipeExpr::Fork> value;
};
} // namespace detail

inline PipeExpr::PipeExpr(const StageId& stage)
    : node_(std::make_shared<const detail::PipeNode>(detail::PipeNode{StageRef{stage}})) {}

inline bool PipeExpr::is_stage() const { return std::holds_alternative<StageRef>(node_->value); }
inline bool PipeExpr::is_seq() const { return std::holds_alternative<Seq>(node_->value); }
inline bool PipeExpr::is_repeat() const { return std::holds_alternative<Repeat>(node_->value); }
inline bool PipeExpr::is_fork() const { return std::holds_alternative<Fork>(node_->value); }
inline const PipeExpr::StageRef& PipeExpr::as_stage() const { return std::get<StageRef>(node_->value); }
inline const PipeExpr::Seq& PipeExpr::as_seq() const { return std::get<Seq>(node_->value); }
inline const PipeExpr::Repeat& PipeExpr::as_repeat() const { return std::get<Repeat>(node_->value); }
inline const PipeExpr::Fork& PipeExpr::as_fork() const { return std::get<Fork>(node_->value); }

template <class Visitor> decltype(auto) PipeExpr::visit(Visitor&& v) const {
  return std::visit(std::forward<Visitor>(v), node_->value);
}

inline bool operator==(const PipeExpr& a, const PipeExpr& b) {
  if (a.node_ == b.node_)
    return true;
  if (a.node_->value.index() != b.node_->value.index())
    return false;
  if (a.is_seq())
    return a.as_seq().head == b.as_seq().head && a.as_seq().tail == b.as_seq().tail;
  if (a.is_stage())
    return a.as_stage() == b.as_stage();
  if (a.is_repeat())
    return a.as_repeat() == b.as_repeat();
  return a.as_fork() == b.as_fork();
}

inline PipeExpr seq(PipeExpr a, PipeExpr b) {
  return PipeExpr(std::make_shared<const detail::PipeNode>(
      detail::PipeNode{PipeExpr::Seq{std::move(a), std::move(b)}}));
}

inline PipeExpr repeat(const StageId& stage, int count) {
  if (count < 1)
    throw ValidationError("repeat count for \"" + stage.name + "\" must be at least 1, got " +
                          std::to_string(count));
  return PipeExpr(std::make_shared<const detail::PipeNode>(
      detail::PipeNode{PipeExpr::Repeat{stage, count}}));
}

inline PipeExpr fork(std::vector<StageId> members) {
  if (members.size() < 2)
    throw ValidationError("fork needs at least two stages");
  for (std::size_t i = 0; i < members.size(); ++i)
    for (std::size_t j = i + 1; j < members.size(); ++j)
      if (members[i] == members[j])
        throw ValidationError("duplicate stage \"" + members[i].name + "\" in fork");
  return PipeExpr(std::make_shared<const detail::PipeNode>(
      detail::PipeNode{PipeExpr::Fork{std::move(members)}}));
}

inline PipeExpr operator>>(PipeExpr a, PipeExpr b) { return seq(std::move(a), std::move(b)); }

inline PipeExpr operator*(const StageId& stage, int count) { return repeat(stage, count); }

inline PipeExpr operator+(const StageId& a, const StageId& b) { return fork({a, b}); }

/// Chained `+` extends an existing fork into an n-way fork.
inline PipeExpr operator+(const PipeExpr& lhs, const StageId& rhs) {
  if (!lhs.is_fork())
    throw ValidationError("'+' applies to stage names only");
  auto members = lhs.as_fork().members;
  members.push_back(rhs);
  return fork(std::move(members));
}

/// Every stage referenced by `e` must belong to `decls`.
inline void validate(const PipeExpr& e, const StageSet& decls) {
  auto check = [&](const StageId& s) {
    if (!decls.contains(s))
      throw ValidationError("stage \"" + s.name + "\" is not declared");
  };
  e.visit([&](const auto& node) {
    using T = std::decay_t<decltype(node)>;
    if constexpr (std::is_same_v<T, PipeExpr::StageRef>) {
      check(node.stage);
    } else if constexpr (std::is_same_v<T, PipeExpr::Seq>) {
      validate(node.head, decls);
      validate(node.tail, decls);
    } else if constexpr (std::is_same_v<T, PipeExpr::Repeat>) {
      check(node.stage);
    } else {
      for (const auto& m : node.members)
        check(m);
    }
  });
}

// ---------------------------------------------------------------------------
// Routes

/// A pipeline expression with the transaction type it serves.
struct NamedPipeline {
  std::string name;
  PipeExpr expr;
};

/// Stages active in one cycle of a transaction's path. Fork members keep
/// their written order; the first member is the join's "left" branch.
using Step = std::vector<StageId>;

struct Route {
  std::vector<Step> steps;

  std::size_t length() const noexcept { return steps.size(); }
  const Step& entry() const { return steps.front(); }
  const Step& exit() const { return steps.back(); }

  bool uses(const StageId& s) const {
    return std::any_of(steps.begin(), steps.end(), [&](const Step& st) {
      return std::find(st.begin(), st.end(), s) != st.end();
    });
  }

  /// Distinct stages in declaration order.
  std::vector<StageId> stages() const {
    std::vector<StageId> out;
    for (const auto& st : steps)
      for (const auto& s : st)
        if (std::find(out.begin(), out.end(), s) == out.end())
          out.push_back(s);
    std::sort(out.begin(), out.end());
    return out;
  }

  friend bool operator==(const Route&, const Route&) = default;
};

namespace detail {
inline void flatten_into(const PipeExpr& e, std::vector<Step>& out) {
  e.visit([&](const auto& node) {
    using T = std::decay_t<decltype(node)>;
    if constexpr (std::is_same_v<T, PipeExpr::StageRef>) {
      out.push_back({node.stage});
    } else if constexpr (std::is_same_v<T, PipeExpr::Seq>) {
      flatten_into(node.head, out);
      flatten_into(node.tail, out);
    } else if constexpr (std::is_same_v<T, PipeExpr::Repeat>) {
      for (int i = 0; i < node.count; ++i)
        out.push_back({node.stage});
    } else {
      out.push_back(node.members);
    }
  });
}
} // namespace detail

inline Route flatten(const PipeExpr& e) {
  Route r;
  detail::flatten_into(e, r.steps);
  return r;
}

/// Non-fatal observations about a route.
inline std::vector<std::string> route_warnings(const Route& r) {
  std::vector<std::string> w;
  if (!r.steps.empty() && r.exit().size() > 1)
    w.push_back("fork at the final step: each branch leaves the pipeline as an exit");
  return w;
}

// ---------------------------------------------------------------------------
// Textual front end

inline std::string to_string(const PipeExpr& e) {
  return e.visit([](const auto& node) -> std::string {
    using T = std::decay_t<decltype(node)>;
    if constexpr (std::is_same_v<T, PipeExpr::StageRef>) {
      return node.stage.name;
    } else if constexpr (std::is_same_v<T, PipeExpr::Seq>) {
      return to_string(node.head) + " >> " + to_string(node.tail);
    } else if constexpr (std::is_same_v<T, PipeExpr::Repeat>) {
      return node.stage.name + "*" + std::to_string(node.count);
    } else {
      std::string s;
      for (std::size_t i = 0; i < node.members.size(); ++i)
        s += (i ? " + " : "") + node.members[i].name;
      return s;
    }
  });
}

inline std::string to_string(const Route& r) {
  std::string s = "[";
  for (std::size_t i = 0; i < r.steps.size(); ++i) {
    if (i)
      s += ", ";
    const auto& st = r.steps[i];
    if (st.size() == 1) {
      s += st.front().name;
    } else {
      s += "{";
      for (std::size_t j = 0; j < st.size(); ++j)
        s += (j ? "," : "") + st[j].name;
      s += "}";
    }
  }
  return s + "]";
}

namespace detail {

struct Token {
  enum class Kind { Ident, Int, Shift, Star, Plus, LParen, RParen, End } kind;
  std::string text;
  std::size_t column; // 1-based
};

class ExprLexer {
public:
  explicit ExprLexer(std::string_view text) : text_(text) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
        ++pos_;
      std::size_t col = pos_ + 1;
      if (pos_ >= text_.size()) {
        out.push_back({Token::Kind::End, "", col});
        return out;
      }
      char c = text_[pos_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
          ++pos_;
        out.push_back({Token::Kind::Ident, std::string(text_.substr(start, pos_ - start)), col});
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '-') {
        std::size_t start = pos_;
        ++pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
          ++pos_;
        std::string num(text_.substr(start, pos_ - start));
        if (num == "-")
          throw ParseError("unexpected character '-'", 0, col);
        out.push_back({Token::Kind::Int, num, col});
      } else if (c == '>' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '>') {
        pos_ += 2;
        out.push_back({Token::Kind::Shift, ">>", col});
      } else if (c == '*') {
        ++pos_;
        out.push_back({Token::Kind::Star, "*", col});
      } else if (c == '+') {
        ++pos_;
        out.push_back({Token::Kind::Plus, "+", col});
      } else if (c == '(' || c == ')') {
        ++pos_;
        out.push_back({c == '(' ? Token::Kind::LParen : Token::Kind::RParen, std::string(1, c), col});
      } else {
        throw ParseError(std::string("unexpected character '") + c + "'", 0, col);
      }
    }
  }

private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

class ExprParser {
public:
  ExprParser(std::vector<Token> tokens, const StageSet& decls)
      : toks_(std::move(tokens)), decls_(decls) {}

  PipeExpr parse() {
    reject_parens();
    if (peek().kind == Token::Kind::End)
      throw ParseError("empty pipeline expression", 0, peek().column);
    PipeExpr e = pipe();
    if (peek().kind != Token::Kind::End)
      throw ParseError("unexpected trailing '" + peek().text + "'", 0, peek().column);
    return e;
  }

private:
  const Token& peek() const { return toks_[pos_]; }
  const Token& take() { return toks_[pos_++]; }

  void reject_parens() const {
    for (const auto& t : toks_)
      if (t.kind == Token::Kind::LParen || t.kind == Token::Kind::RParen)
        throw ParseError("parentheses are not supported in pipeline expressions", 0, t.column);
  }

  PipeExpr pipe() {
    PipeExpr head = term();
    if (peek().kind == Token::Kind::Shift) {
      take();
      return seq(std::move(head), pipe());
    }
    return head;
  }

  PipeExpr term() {
    const StageId& s = stage();
    if (peek().kind == Token::Kind::Star) {
      take();
      const Token& n = take();
      if (n.kind != Token::Kind::Int)
        throw ParseError("expected repeat count after '*'", 0, n.column);
      long count = 0;
      try {
        count = std::stol(n.text);
      } catch (const std::exception&) {
        throw ParseError("repeat count out of range", 0, n.column);
      }
      if (count < 1 || count > 1'000'000)
        throw ParseError("repeat count must be a positive integer, got " + n.text, 0, n.column);
      return repeat(s, static_cast<int>(count));
    }
    if (peek().kind == Token::Kind::Plus) {
      std::vector<StageId> members{s};
      while (peek().kind == Token::Kind::Plus) {
        take();
        std::size_t col = peek().column;
        const StageId& m = stage();
        if (std::find(members.begin(), members.end(), m) != members.end())
          throw ParseError("duplicate stage \"" + m.name + "\" in fork", 0, col);
        members.push_back(m);
      }
      return fork(std::move(members));
    }
    return PipeExpr(s);
  }

  const StageId& stage() {
    const Token& t = take();
    if (t.kind != Token::Kind::Ident)
      throw ParseError(t.kind == Token::Kind::End ? "expected stage name at end of expression"
                                                   : "expected stage name, found '" + t.text + "'",
                       0, t.column);
    const StageId* s = decls_.find(t.text);
    if (!s)
      throw ParseError("unknown stage \"" + t.text + "\"", 0, t.column);
    return *s;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  const StageSet& decls_;
};

} // namespace detail

/// Parses the textual form. `>>` nests to the right, so the result of
/// parsing `to_string(e)` equals `e` for every right-nested `e`.
inline PipeExpr parse(std::string_view text, const StageSet& decls) {
  return detail::ExprParser(detail::ExprLexer(text).run(), decls).parse();
}

} // namespace pipekit
