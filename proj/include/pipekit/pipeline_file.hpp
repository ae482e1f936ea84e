#pragma once

// Pipeline definition files.
//
//   # comment
//   stage S1 { fn = "data + 2*sqr(orig)"; delay = 1; }
//   stage S2 { fn = "data"; delay = untimed; channel = signal; exec = reactive; }
//   pipeline = S1 >> S2;
//   pipeline fast = S1;
//   join = sum;               # left | right | sum | "<expr over orig, dataL, dataR>"
//   issue = fixed:2;          # greedy | eager | fixed:<k>
//
// Stages may be declared in any order relative to the pipelines that use
// them; declaration order fixes stage ordinals.

#include <pipekit/dsl.hpp>
#include <pipekit/policy.hpp>

#include <cctype>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace pipekit {

struct SourcePos {
  std::size_t line = 1;
  std::size_t column = 1;
};

struct StageDecl {
  std::string name;
  SourcePos pos;
  std::optional<std::string> fn;
  SourcePos fn_pos;
  TimingSpec timing = Timed{1};
  ChannelKind channel = ChannelKind::BlockingSingleSlot;
  ExecKind exec = ExecKind::SuspendableLoop;
};

struct PipelineDecl {
  std::string name = "default";
  std::string text;
  std::size_t offset = 0; // of `text` in the file
  SourcePos pos;
};

struct PipelineFile {
  std::string filename;
  std::string source;
  std::vector<StageDecl> stages;
  std::vector<PipelineDecl> pipelines;
  std::optional<std::string> join; // raw spec; checked by check_file
  SourcePos join_pos;
  std::optional<IssueSpec> issue;
};

/// Error located in a pipeline file; what() reads "file:line:col: message".
class FileError : public ParseError {
public:
  FileError(const std::string& file, SourcePos pos, const std::string& msg)
      : ParseError(file + ":" + std::to_string(pos.line) + ":" + std::to_string(pos.column) + ": " + msg,
                   pos.line, pos.column) {}
};

namespace detail {

class FileScanner {
public:
  FileScanner(std::string_view text, std::string file) : s_(text), file_(std::move(file)) {}

  SourcePos pos_of(std::size_t offset) const {
    SourcePos p;
    for (std::size_t i = 0; i < offset && i < s_.size(); ++i) {
      if (s_[i] == '\n') {
        ++p.line;
        p.column = 1;
      } else {
        ++p.column;
      }
    }
    return p;
  }
  SourcePos pos() const { return pos_of(i_); }
  std::size_t offset() const { return i_; }

  [[noreturn]] void fail(const std::string& msg) const { throw FileError(file_, pos(), msg); }
  [[noreturn]] void fail_at(std::size_t offset, const std::string& msg) const {
    throw FileError(file_, pos_of(offset), msg);
  }

  void skip() {
    while (i_ < s_.size()) {
      if (std::isspace(static_cast<unsigned char>(s_[i_]))) {
        ++i_;
      } else if (s_[i_] == '#') {
        while (i_ < s_.size() && s_[i_] != '\n')
          ++i_;
      } else {
        break;
      }
    }
  }
  bool at_end() {
    skip();
    return i_ >= s_.size();
  }
  bool accept(char c) {
    skip();
    if (i_ < s_.size() && s_[i_] == c) {
      ++i_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) {
      if (i_ >= s_.size())
        fail(std::string("expected '") + c + "' before end of file");
      fail(std::string("expected '") + c + "', found '" + s_[i_] + "'");
    }
  }
  bool peek_ident() {
    skip();
    return i_ < s_.size() && (std::isalpha(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_');
  }
  std::string ident(const char* what) {
    if (!peek_ident())
      fail(std::string("expected ") + what);
    std::size_t b = i_;
    while (i_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_'))
      ++i_;
    return std::string(s_.substr(b, i_ - b));
  }
  std::string quoted() {
    skip();
    if (i_ >= s_.size() || s_[i_] != '"')
      fail("expected a quoted string");
    std::size_t b = ++i_;
    while (i_ < s_.size() && s_[i_] != '"' && s_[i_] != '\n')
      ++i_;
    if (i_ >= s_.size() || s_[i_] != '"')
      fail_at(b - 1, "unterminated string");
    return std::string(s_.substr(b, i_++ - b));
  }
  bool peek_quote() {
    skip();
    return i_ < s_.size() && s_[i_] == '"';
  }
  /// Raw text up to the next ';' (comments removed, ';' consumed).
  std::string until_semicolon(const char* what) {
    std::string out;
    std::size_t start = i_;
    while (i_ < s_.size() && s_[i_] != ';') {
      if (s_[i_] == '#') {
        while (i_ < s_.size() && s_[i_] != '\n')
          out += ' ', ++i_;
        continue;
      }
      out += s_[i_++];
    }
    if (i_ >= s_.size())
      fail_at(start, std::string("missing ';' after ") + what);
    ++i_;
    return out;
  }
  std::uint64_t integer(const char* what) {
    skip();
    std::size_t b = i_;
    while (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_])))
      ++i_;
    if (b == i_)
      fail(std::string("expected ") + what);
    if (i_ - b > 18)
      fail_at(b, std::string(what) + " out of range");
    return std::stoull(std::string(s_.substr(b, i_ - b)));
  }

private:
  std::string_view s_;
  std::string file_;
  std::size_t i_ = 0;
};

inline void parse_stage_body(FileScanner& sc, StageDecl& st) {
  sc.expect('{');
  bool have_delay = false, have_channel = false, have_exec = false;
  while (!sc.accept('}')) {
    if (sc.at_end())
      sc.fail("unterminated stage block for \"" + st.name + "\"");
    std::size_t koff = sc.offset();
    std::string key = sc.ident("a stage property (fn, delay, channel, exec)");
    sc.expect('=');
    auto dup = [&](bool& seen) {
      if (seen)
        sc.fail_at(koff, "\"" + key + "\" given twice in stage \"" + st.name + "\"");
      seen = true;
    };
    if (key == "fn") {
      if (st.fn)
        sc.fail_at(koff, "\"fn\" given twice in stage \"" + st.name + "\"");
      sc.skip();
      st.fn_pos = sc.pos();
      st.fn = sc.quoted();
    } else if (key == "delay") {
      dup(have_delay);
      if (sc.peek_ident()) {
        std::size_t off = sc.offset();
        if (sc.ident("delay") != "untimed")
          sc.fail_at(off, "delay must be a non-negative integer or \"untimed\"");
        st.timing = Untimed{};
      } else {
        st.timing = Timed{sc.integer("a non-negative integer delay")};
      }
    } else if (key == "channel") {
      dup(have_channel);
      std::size_t off = sc.offset();
      auto v = sc.ident("blocking or signal");
      if (v == "blocking")
        st.channel = ChannelKind::BlockingSingleSlot;
      else if (v == "signal")
        st.channel = ChannelKind::OverwriteSignal;
      else
        sc.fail_at(off, "channel must be blocking or signal, got \"" + v + "\"");
    } else if (key == "exec") {
      dup(have_exec);
      std::size_t off = sc.offset();
      auto v = sc.ident("loop or reactive");
      if (v == "loop")
        st.exec = ExecKind::SuspendableLoop;
      else if (v == "reactive")
        st.exec = ExecKind::ReactiveCallback;
      else
        sc.fail_at(off, "exec must be loop or reactive, got \"" + v + "\"");
    } else {
      sc.fail_at(koff, "unknown stage property \"" + key + "\" (expected fn, delay, channel or exec)");
    }
    sc.expect(';');
  }
}

inline std::string trim(std::string s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos)
    return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

} // namespace detail

/// Parses the file syntax only; names and expressions are checked by check_file.
inline PipelineFile parse_pipeline_file(std::string_view text, std::string filename = "<input>") {
  PipelineFile f;
  f.filename = filename;
  f.source = std::string(text);
  detail::FileScanner sc(f.source, filename);
  bool have_join = false, have_issue = false;
  while (!sc.at_end()) {
    std::size_t koff = sc.offset();
    SourcePos kpos = sc.pos();
    std::string kw = sc.ident("stage, pipeline, join or issue");
    if (kw == "stage") {
      StageDecl st;
      sc.skip();
      st.pos = sc.pos();
      st.name = sc.ident("a stage name");
      detail::parse_stage_body(sc, st);
      if (!st.fn)
        throw FileError(filename, st.pos, "stage \"" + st.name + "\" has no fn");
      f.stages.push_back(std::move(st));
    } else if (kw == "pipeline") {
      PipelineDecl p;
      p.pos = kpos;
      if (sc.peek_ident())
        p.name = sc.ident("a pipeline name");
      sc.expect('=');
      sc.skip();
      p.offset = sc.offset();
      p.text = sc.until_semicolon("pipeline expression");
      f.pipelines.push_back(std::move(p));
    } else if (kw == "join") {
      if (have_join)
        sc.fail_at(koff, "join given twice");
      have_join = true;
      sc.expect('=');
      sc.skip();
      f.join_pos = sc.pos();
      if (sc.peek_quote()) {
        f.join = "\"" + sc.quoted() + "\"";
      } else {
        f.join = sc.ident("left, right, sum or a quoted expression");
      }
      sc.expect(';');
    } else if (kw == "issue") {
      if (have_issue)
        sc.fail_at(koff, "issue given twice");
      have_issue = true;
      sc.expect('=');
      sc.skip();
      SourcePos ipos = sc.pos();
      std::string v = detail::trim(sc.until_semicolon("issue policy"));
      try {
        f.issue = parse_issue(v);
      } catch (const ConfigError& e) {
        throw FileError(filename, ipos, e.what());
      }
    } else {
      sc.fail_at(koff, "unknown statement \"" + kw + "\" (expected stage, pipeline, join or issue)");
    }
  }
  if (f.pipelines.empty())
    throw FileError(filename, sc.pos(), "no pipeline expression");
  return f;
}

inline PipelineFile load_pipeline_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ConfigError("cannot read pipeline file \"" + path + "\"");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_pipeline_file(ss.str(), path);
}

/// Resolves names, parses expressions and validates the configuration.
inline CheckedConfig check_file(const PipelineFile& f) {
  std::vector<std::string> names;
  for (const auto& st : f.stages) {
    for (const auto& n : names)
      if (n == st.name)
        throw FileError(f.filename, st.pos, "stage \"" + st.name + "\" declared twice");
    names.push_back(st.name);
  }
  if (names.empty())
    throw FileError(f.filename, f.pipelines.front().pos, "no stages declared");
  StageSet decls = declare_stages(names);

  std::vector<StageConfig> configs;
  for (const auto& st : f.stages) {
    StageConfig c;
    c.stage = decls[st.name];
    try {
      c.function = FunctionSpec::parse(*st.fn);
    } catch (const ParseError& e) {
      SourcePos p = st.fn_pos;
      p.column += e.column(); // opening quote occupies the first column
      throw FileError(f.filename, p, "stage \"" + st.name + "\": " + e.what());
    }
    c.timing = st.timing;
    c.channel = st.channel;
    c.exec = st.exec;
    configs.push_back(std::move(c));
  }

  detail::FileScanner sc(f.source, f.filename);
  std::vector<NamedPipeline> pipelines;
  for (const auto& p : f.pipelines) {
    try {
      pipelines.push_back(NamedPipeline{p.name, parse(p.text, decls)});
    } catch (const ParseError& e) {
      throw FileError(f.filename, sc.pos_of(p.offset + (e.column() ? e.column() - 1 : 0)), e.what());
    } catch (const ValidationError& e) {
      throw FileError(f.filename, sc.pos_of(p.offset), e.what());
    }
  }

  std::optional<JoinSpec> join;
  if (f.join) {
    const std::string& j = *f.join;
    if (j == "left")
      join = JoinLeft{};
    else if (j == "right")
      join = JoinRight{};
    else if (j == "sum")
      join = JoinSum{};
    else if (j.size() >= 2 && j.front() == '"') {
      try {
        join = JoinCustom::parse(j.substr(1, j.size() - 2));
      } catch (const ParseError& e) {
        SourcePos p = f.join_pos;
        p.column += e.column();
        throw FileError(f.filename, p, std::string("join: ") + e.what());
      }
    } else {
      throw FileError(f.filename, f.join_pos, "join must be left, right, sum or a quoted expression, got \"" + j + "\"");
    }
  }

  return validate_config(decls, std::move(pipelines), std::move(configs), std::move(join));
}

} // namespace pipekit
