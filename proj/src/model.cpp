#include "vsem/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "vsem/error.hpp"

namespace vsem {

const char* to_string(MatrixKind kind) {
  switch (kind) {
    case MatrixKind::Lambda: return "lambda";
    case MatrixKind::Beta: return "beta";
    case MatrixKind::Psi: return "psi";
    case MatrixKind::Mean: return "nu_alpha";
  }
  return "?";
}

std::vector<double> ModelSpec::start_values() const {
  std::vector<double> out;
  out.reserve(params.size());
  for (const auto& e : params) out.push_back(e.start);
  return out;
}

namespace {

enum class Tok { Ident, Number, Loading, Regress, Covary, Plus, Star, Sep, End };

struct Token {
  Tok kind;
  std::string text;
  double number = 0.0;
  int line = 0;
  int col = 0;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (c == '\n' || c == ';') {
        out.push_back({Tok::Sep, std::string(1, c), 0.0, line_, col_});
        advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else if (c == '=' && peek(1) == '~') {
        out.push_back({Tok::Loading, "=~", 0.0, line_, col_});
        advance(2);
      } else if (c == '~' && peek(1) == '~') {
        out.push_back({Tok::Covary, "~~", 0.0, line_, col_});
        advance(2);
      } else if (c == '~') {
        out.push_back({Tok::Regress, "~", 0.0, line_, col_});
        advance();
      } else if (c == '+') {
        out.push_back({Tok::Plus, "+", 0.0, line_, col_});
        advance();
      } else if (c == '*') {
        out.push_back({Tok::Star, "*", 0.0, line_, col_});
        advance();
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' ||
                 (c == '-' && (std::isdigit(static_cast<unsigned char>(peek(1))) || peek(1) == '.'))) {
        out.push_back(number());
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        out.push_back(ident());
      } else {
        throw ParseError(std::string("unexpected character '") + c + "'", line_, col_);
      }
    }
    out.push_back({Tok::End, "", 0.0, line_, col_});
    return out;
  }

 private:
  char peek(size_t off) const { return pos_ + off < src_.size() ? src_[pos_ + off] : '\0'; }

  void advance(size_t count = 1) {
    for (size_t i = 0; i < count && pos_ < src_.size(); ++i) {
      if (src_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
      ++pos_;
    }
  }

  Token number() {
    Token t{Tok::Number, "", 0.0, line_, col_};
    size_t start = pos_;
    if (src_[pos_] == '-') advance();
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      bool exp_sign = (c == '-' || c == '+') && pos_ > start && (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E');
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == 'e' || c == 'E' || exp_sign) {
        advance();
      } else {
        break;
      }
    }
    t.text = std::string(src_.substr(start, pos_ - start));
    auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.number);
    if (res.ec != std::errc() || res.ptr != t.text.data() + t.text.size()) {
      throw ParseError("malformed number '" + t.text + "'", t.line, t.col);
    }
    return t;
  }

  Token ident() {
    Token t{Tok::Ident, "", 0.0, line_, col_};
    size_t start = pos_;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
        advance();
      } else {
        break;
      }
    }
    t.text = std::string(src_.substr(start, pos_ - start));
    return t;
  }

  std::string_view src_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

enum class Modifier { None, Fixed, Free };

struct Term {
  std::string name;  // empty for an intercept
  Modifier mod = Modifier::None;
  double value = 0.0;
  int line = 0;
  int col = 0;

  bool is_intercept() const { return name.empty(); }
};

struct Statement {
  std::string lhs;
  Tok op;
  std::vector<Term> terms;
  int line = 0;
  int col = 0;
};

class StatementParser {
 public:
  explicit StatementParser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  std::vector<Statement> run() {
    std::vector<Statement> out;
    while (true) {
      skip_separators();
      if (cur().kind == Tok::End) break;
      out.push_back(statement());
      if (cur().kind != Tok::Sep && cur().kind != Tok::End) fail("expected end of statement");
    }
    return out;
  }

 private:
  const Token& cur() const { return toks_[pos_]; }
  [[noreturn]] void fail(const std::string& msg) const {
    const Token& t = cur();
    std::string what = t.kind == Tok::End ? "end of input" : t.kind == Tok::Sep ? "end of line" : "'" + t.text + "'";
    throw ParseError(msg + ", found " + what, t.line, t.col);
  }
  void skip_separators() {
    while (cur().kind == Tok::Sep) ++pos_;
  }
  // A newline directly after an operator, '+' or '*' continues the statement.
  void skip_continuation() {
    while (cur().kind == Tok::Sep && cur().text == "\n") ++pos_;
  }

  Statement statement() {
    Statement st;
    if (cur().kind != Tok::Ident) fail("expected variable name");
    st.lhs = cur().text;
    st.line = cur().line;
    st.col = cur().col;
    ++pos_;
    if (cur().kind != Tok::Loading && cur().kind != Tok::Regress && cur().kind != Tok::Covary) {
      fail("expected '=~', '~' or '~~'");
    }
    st.op = cur().kind;
    ++pos_;
    skip_continuation();
    st.terms.push_back(term(st.op));
    while (cur().kind == Tok::Plus) {
      ++pos_;
      skip_continuation();
      st.terms.push_back(term(st.op));
    }
    return st;
  }

  Term term(Tok op) {
    Term t;
    t.line = cur().line;
    t.col = cur().col;
    if (cur().kind == Tok::Number || (cur().kind == Tok::Ident && cur().text == "NA")) {
      bool is_na = cur().kind == Tok::Ident;
      double value = cur().number;
      std::string text = cur().text;
      ++pos_;
      if (cur().kind == Tok::Star) {
        ++pos_;
        skip_continuation();
        t.mod = is_na ? Modifier::Free : Modifier::Fixed;
        t.value = value;
      } else if (!is_na && text == "1") {
        if (op != Tok::Regress) throw ParseError("intercept '1' is only valid with '~'", t.line, t.col);
        return t;
      } else {
        fail("expected '*' after modifier");
      }
    }
    if (cur().kind == Tok::Number && cur().text == "1") {
      if (op != Tok::Regress) fail("intercept '1' is only valid with '~'");
      ++pos_;
      return t;
    }
    if (cur().kind != Tok::Ident || cur().text == "NA") fail("expected variable name");
    t.name = cur().text;
    t.line = cur().line;
    t.col = cur().col;
    ++pos_;
    return t;
  }

  std::vector<Token> toks_;
  size_t pos_ = 0;
};

// "X2" < "X10": digit runs compare numerically.
bool natural_less(const std::string& a, const std::string& b) {
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    bool da = std::isdigit(static_cast<unsigned char>(a[i]));
    bool db = std::isdigit(static_cast<unsigned char>(b[j]));
    if (da && db) {
      size_t i2 = i, j2 = j;
      while (i2 < a.size() && std::isdigit(static_cast<unsigned char>(a[i2]))) ++i2;
      while (j2 < b.size() && std::isdigit(static_cast<unsigned char>(b[j2]))) ++j2;
      std::string_view na(a.data() + i, i2 - i), nb(b.data() + j, j2 - j);
      while (na.size() > 1 && na.front() == '0') na.remove_prefix(1);
      while (nb.size() > 1 && nb.front() == '0') nb.remove_prefix(1);
      if (na.size() != nb.size()) return na.size() < nb.size();
      if (na != nb) return na < nb;
      i = i2;
      j = j2;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  if ((a.size() - i) != (b.size() - j)) return (a.size() - i) < (b.size() - j);
  return a < b;
}

class Builder {
 public:
  Builder(const std::vector<Statement>& stmts, const ParseOptions& opts) : stmts_(stmts), opts_(opts) {}

  ModelSpec build() {
    collect_names();
    spec_.meanstructure = opts_.meanstructure;
    for (const auto& st : stmts_) {
      for (const auto& t : st.terms) {
        if (t.is_intercept()) spec_.meanstructure = true;
      }
    }
    const int p = spec_.p(), m = spec_.m(), nv = p + m;
    spec_.lambda = Pattern(p, m);
    spec_.beta = Pattern(nv, nv);
    spec_.psi = Pattern(nv, nv);
    spec_.nu_alpha = Pattern(nv, 1);

    std::set<std::string> has_marker;
    for (const auto& st : stmts_) {
      int lhs = index_of(st.lhs);
      for (const auto& t : st.terms) {
        switch (st.op) {
          case Tok::Loading: {
            int rhs = index_of(t.name);
            if (rhs == lhs) throw ParseError("variable loads on itself", t.line, t.col);
            bool first = has_marker.insert(st.lhs).second;
            Modifier mod = t.mod;
            double value = t.value;
            if (mod == Modifier::None && first) {
              mod = Modifier::Fixed;
              value = 1.0;
            }
            if (rhs < p) {
              assign(spec_.lambda(rhs, lhs - p), MatrixKind::Lambda, rhs, lhs - p, mod, value, 1.0,
                     st.lhs + "=~" + t.name, t);
            } else {
              assign(spec_.beta(rhs, lhs), MatrixKind::Beta, rhs, lhs, mod, value, 1.0, st.lhs + "=~" + t.name, t);
            }
            break;
          }
          case Tok::Regress: {
            if (t.is_intercept()) {
              double start = lhs < p ? std::numeric_limits<double>::quiet_NaN() : 0.0;
              assign(spec_.nu_alpha(lhs, 0), MatrixKind::Mean, lhs, 0, t.mod, t.value, start, st.lhs + "~1", t);
            } else {
              int rhs = index_of(t.name);
              if (rhs == lhs) throw ParseError("variable regressed on itself", t.line, t.col);
              assign(spec_.beta(lhs, rhs), MatrixKind::Beta, lhs, rhs, t.mod, t.value, 0.0, st.lhs + "~" + t.name, t);
            }
            break;
          }
          case Tok::Covary: {
            int rhs = index_of(t.name);
            int r = std::max(lhs, rhs), c = std::min(lhs, rhs);
            double start = 0.0;
            if (r == c) start = r < p ? std::numeric_limits<double>::quiet_NaN() : 1.0;
            assign(spec_.psi(r, c), MatrixKind::Psi, r, c, t.mod, t.value, start,
                   spec_.var_name(c) + "~~" + spec_.var_name(r), t);
            break;
          }
          default:
            break;
        }
      }
    }
    auto_add();
    check_start_invertible();
    return std::move(spec_);
  }

 private:
  void collect_names() {
    std::set<std::string> latents;
    for (const auto& st : stmts_) {
      if (st.op == Tok::Loading) latents.insert(st.lhs);
    }
    std::set<std::string> manifests;
    auto visit = [&](const std::string& name, int line, int col) {
      if (name.empty() || latents.count(name)) return;
      if (opts_.known_manifests) {
        const auto& known = *opts_.known_manifests;
        if (std::find(known.begin(), known.end(), name) == known.end()) {
          throw ParseError("unknown variable '" + name + "'", line, col);
        }
      }
      manifests.insert(name);
    };
    for (const auto& st : stmts_) {
      visit(st.lhs, st.line, st.col);
      for (const auto& t : st.terms) visit(t.name, t.line, t.col);
    }
    spec_.manifest_names.assign(manifests.begin(), manifests.end());
    spec_.latent_names.assign(latents.begin(), latents.end());
    std::sort(spec_.manifest_names.begin(), spec_.manifest_names.end(), natural_less);
    std::sort(spec_.latent_names.begin(), spec_.latent_names.end(), natural_less);
  }

  int index_of(const std::string& name) const {
    auto it = std::find(spec_.manifest_names.begin(), spec_.manifest_names.end(), name);
    if (it != spec_.manifest_names.end()) return static_cast<int>(it - spec_.manifest_names.begin());
    auto jt = std::find(spec_.latent_names.begin(), spec_.latent_names.end(), name);
    return spec_.p() + static_cast<int>(jt - spec_.latent_names.begin());
  }

  void assign(Cell& cell, MatrixKind kind, int row, int col, Modifier mod, double value, double start,
              const std::string& label, const Term& t) {
    if (cell.set) throw ParseError("duplicate parameter definition '" + label + "'", t.line, t.col);
    cell.set = true;
    if (mod == Modifier::Fixed) {
      cell.value = value;
      return;
    }
    add_param(cell, kind, row, col, start, label);
  }

  void add_param(Cell& cell, MatrixKind kind, int row, int col, double start, const std::string& label) {
    ParamEntry e;
    e.id = static_cast<int>(spec_.params.size());
    e.matrix = kind;
    e.row = row;
    e.col = col;
    e.start = start;
    if (kind == MatrixKind::Psi && row == col) e.lower = 0.0;
    e.label = label;
    cell.set = true;
    cell.param = e.id;
    spec_.params.push_back(std::move(e));
  }

  void auto_add() {
    const int p = spec_.p(), m = spec_.m(), nv = p + m;
    for (int i = 0; i < nv; ++i) {
      Cell& c = spec_.psi(i, i);
      if (!c.set) {
        double start = i < p ? std::numeric_limits<double>::quiet_NaN() : 1.0;
        add_param(c, MatrixKind::Psi, i, i, start, spec_.var_name(i) + "~~" + spec_.var_name(i));
      }
    }
    std::vector<int> exo_latents;
    for (int j = p; j < nv; ++j) {
      bool endogenous = false;
      for (int i = 0; i < nv; ++i) endogenous = endogenous || spec_.beta(j, i).set;
      if (!endogenous) exo_latents.push_back(j);
    }
    for (size_t a = 0; a < exo_latents.size(); ++a) {
      for (size_t b = a + 1; b < exo_latents.size(); ++b) {
        int r = exo_latents[b], c = exo_latents[a];
        Cell& cell = spec_.psi(r, c);
        if (!cell.set) add_param(cell, MatrixKind::Psi, r, c, 0.0, spec_.var_name(c) + "~~" + spec_.var_name(r));
      }
    }
    if (spec_.meanstructure) {
      for (int i = 0; i < p; ++i) {
        Cell& c = spec_.nu_alpha(i, 0);
        if (!c.set) {
          add_param(c, MatrixKind::Mean, i, 0, std::numeric_limits<double>::quiet_NaN(), spec_.var_name(i) + "~1");
        }
      }
    }
  }

  void check_start_invertible() const {
    const int p = spec_.p(), nv = spec_.n_vars();
    Eigen::MatrixXd ib = Eigen::MatrixXd::Identity(nv, nv);
    auto value = [&](const Cell& c) { return c.is_free() ? spec_.params[c.param].start : c.value; };
    for (int i = 0; i < nv; ++i) {
      for (int j = 0; j < nv; ++j) ib(i, j) -= value(spec_.beta(i, j));
    }
    for (int i = 0; i < p; ++i) {
      for (int j = 0; j < spec_.m(); ++j) ib(i, p + j) -= value(spec_.lambda(i, j));
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(ib);
    if (!lu.isInvertible()) {
      const auto& st = stmts_.front();
      throw ParseError("cyclic fixed structure: (I - B) is singular at start values", st.line, st.col);
    }
  }

  const std::vector<Statement>& stmts_;
  const ParseOptions& opts_;
  ModelSpec spec_;
};

std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

ModelSpec parse_model(std::string_view text, const ParseOptions& opts) {
  auto stmts = StatementParser(Lexer(text).run()).run();
  if (stmts.empty()) throw ParseError("model text contains no statements", 1, 1);
  return Builder(stmts, opts).build();
}

std::string print_model(const ModelSpec& spec) {
  std::ostringstream os;
  const int p = spec.p();
  // Latent-on-latent beta cells can come from either `=~` or `~`; `as_loading` picks the form.
  auto emit = [&](MatrixKind kind, int row, int col, const std::string& modifier, bool as_loading) {
    switch (kind) {
      case MatrixKind::Lambda:
        os << spec.latent_names[col] << " =~ " << modifier << spec.manifest_names[row] << "\n";
        break;
      case MatrixKind::Beta:
        if (as_loading) {
          os << spec.var_name(col) << " =~ " << modifier << spec.var_name(row) << "\n";
        } else {
          os << spec.var_name(row) << " ~ " << modifier << spec.var_name(col) << "\n";
        }
        break;
      case MatrixKind::Psi:
        os << spec.var_name(col) << " ~~ " << modifier << spec.var_name(row) << "\n";
        break;
      case MatrixKind::Mean:
        os << spec.var_name(row) << " ~ " << modifier << "1\n";
        break;
    }
  };
  // Fixed cells first; they create no parameters so table order is unaffected.
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < spec.m(); ++j) {
      const Cell& c = spec.lambda(i, j);
      if (c.set && !c.is_free()) emit(MatrixKind::Lambda, i, j, format_number(c.value) + "*", true);
    }
  }
  const int nv = spec.n_vars();
  for (int i = 0; i < nv; ++i) {
    for (int j = 0; j < nv; ++j) {
      const Cell& c = spec.beta(i, j);
      if (c.set && !c.is_free()) emit(MatrixKind::Beta, i, j, format_number(c.value) + "*", i >= p && j >= p);
    }
  }
  for (int i = 0; i < nv; ++i) {
    for (int j = 0; j <= i; ++j) {
      const Cell& c = spec.psi(i, j);
      if (c.set && !c.is_free()) emit(MatrixKind::Psi, i, j, format_number(c.value) + "*", false);
    }
  }
  for (int i = 0; i < nv; ++i) {
    const Cell& c = spec.nu_alpha(i, 0);
    if (c.set && !c.is_free()) emit(MatrixKind::Mean, i, 0, format_number(c.value) + "*", false);
  }
  for (const auto& e : spec.params) {
    bool loading = e.matrix == MatrixKind::Lambda || e.label.find("=~") != std::string::npos;
    emit(e.matrix, e.row, e.col, loading ? "NA*" : "", loading);
  }
  return os.str();
}

}  // namespace vsem
