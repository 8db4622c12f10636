#include "haarx/parse.hpp"

#include <cctype>
#include <charconv>
#include <string>

#include "haarx/common.hpp"

namespace haarx::parse {

using ncalg::Kind;
using ncalg::NCPoly;

ParseError::ParseError(const std::string& what, std::size_t pos)
    : std::runtime_error(what + " at position " + std::to_string(pos)),
      position(pos) {}

namespace {

class Cursor {
 public:
  explicit Cursor(const std::string& text) : text_(text) {}

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
  }
  bool eof() {
    skip_ws();
    return pos_ >= text_.size();
  }
  // raw view, no whitespace skipping
  char raw() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
  char raw_at(std::size_t off) const {
    return pos_ + off < text_.size() ? text_[pos_ + off] : '\0';
  }
  char peek() {
    skip_ws();
    return raw();
  }
  void advance() { ++pos_; }
  std::size_t here() const { return pos_ + 1; }  // 1-based for messages

  long long parse_int() {
    skip_ws();
    const std::size_t start = pos_;
    if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
    std::size_t digits = 0;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
      ++digits;
    }
    if (digits == 0) throw ParseError("expected an integer", start + 1);
    long long v = 0;
    const auto res = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (res.ec != std::errc{}) throw ParseError("integer out of range", start + 1);
    return v;
  }

  double parse_number() {
    skip_ws();
    const std::size_t start = pos_;
    if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
    std::size_t body = pos_;
    while (pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.'))
      ++pos_;
    if (pos_ == body) throw ParseError("expected a number", start + 1);
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t mark = pos_;
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      std::size_t ed = pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
        ++pos_;
      if (pos_ == ed) pos_ = mark;  // bare 'e' belongs to whatever follows
    }
    double v = 0.0;
    const auto res = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (res.ec != std::errc{} || res.ptr != text_.data() + pos_)
      throw ParseError("malformed number", start + 1);
    return v;
  }

 private:
  const std::string& text_;
  std::size_t pos_ = 0;
};

bool atom_start(char c) { return c == 'U' || c == 'Z' || c == '('; }

// one parenthesized complex literal: (a), (a+bi), (a-bi)
cplx parse_scalar(Cursor& cur) {
  cur.advance();  // '('
  const double re = cur.parse_number();
  cur.skip_ws();
  double im = 0.0;
  if (cur.raw() == '+' || cur.raw() == '-') {
    im = cur.parse_number();
    cur.skip_ws();
    if (cur.raw() != 'i') throw ParseError("expected 'i' after the imaginary part", cur.here());
    cur.advance();
    cur.skip_ws();
  }
  if (cur.raw() != ')') throw ParseError("expected ')'", cur.here());
  cur.advance();
  return cplx{re, im};
}

NCPoly parse_factor(Cursor& cur) {
  const char c = cur.peek();
  NCPoly base;
  if (c == '(') {
    base = ncalg::scale(NCPoly::unit(), parse_scalar(cur));
  } else if (c == 'U' || c == 'Z') {
    const std::size_t letter_pos = cur.here();
    cur.advance();
    if (!std::isdigit(static_cast<unsigned char>(cur.raw())))
      throw ParseError("expected a letter index", cur.here());
    const long long idx = cur.parse_int();
    if (idx < 1) throw ParseError("letter index must be >= 1", letter_pos);
    if (idx > 1'000'000) throw ParseError("letter index too large", letter_pos);
    Kind k = (c == 'U') ? Kind::U : Kind::Z;
    // attached star is an adjoint unless it directly touches the next atom
    if (cur.raw() == '*' && !atom_start(cur.raw_at(1))) {
      cur.advance();
      k = (c == 'U') ? Kind::V : Kind::Y;
    }
    base = NCPoly::letter(k, static_cast<int>(idx));
  } else if (c == '\0') {
    throw ParseError("unexpected end of input", cur.here());
  } else {
    throw ParseError(std::string("unexpected character '") + c + "'", cur.here());
  }
  if (cur.peek() == '^') {
    cur.advance();
    const std::size_t ppos = cur.here();
    const long long n = cur.parse_int();
    if (n < 0) throw ParseError("power must be >= 0", ppos);
    if (n > 64) throw ParseError("power too large", ppos);
    NCPoly acc = NCPoly::unit();
    for (long long r = 0; r < n; ++r) acc = acc * base;
    base = acc;
  }
  return base;
}

NCPoly parse_term(Cursor& cur) {
  NCPoly acc = parse_factor(cur);
  for (;;) {
    const char c = cur.peek();
    if (c == '*') {
      cur.advance();
      acc = acc * parse_factor(cur);
    } else if (atom_start(c)) {
      acc = acc * parse_factor(cur);
    } else {
      return acc;
    }
  }
}

NCPoly parse_expr(Cursor& cur) {
  NCPoly acc;
  bool negate = false;
  if (cur.peek() == '-') {
    cur.advance();
    negate = true;
  } else if (cur.peek() == '+') {
    cur.advance();
  }
  for (;;) {
    NCPoly t = parse_term(cur);
    acc = negate ? acc - t : acc + t;
    const char c = cur.peek();
    if (c == '+' || c == '-') {
      cur.advance();
      negate = (c == '-');
    } else {
      return acc;
    }
  }
}

}  // namespace

NCPoly parse_poly(const std::string& text) {
  Cursor cur(text);
  if (cur.eof()) throw ParseError("empty input", 1);
  NCPoly p = parse_expr(cur);
  if (!cur.eof()) throw ParseError("trailing input", cur.here());
  return p;
}

namespace {

void print_scalar(std::string& out, cplx c) {
  out += '(';
  out += fmt_double(c.real());
  if (c.imag() < 0.0 || std::signbit(c.imag())) {
    out += '-';
    out += fmt_double(-c.imag());
  } else {
    out += '+';
    out += fmt_double(c.imag());
  }
  out += "i)";
}

}  // namespace

std::string print_poly(const NCPoly& p) {
  if (p.has_exp())
    throw std::invalid_argument("print_poly: no surface syntax for exponential atoms");
  if (p.is_zero()) return "(0+0i)";
  std::string out;
  bool first_term = true;
  for (const auto& [word, coef] : p.terms()) {
    if (!first_term) out += " + ";
    first_term = false;
    bool need_sep = false;    // next factor needs a separator
    bool star_tail = false;   // previous text ended in an adjoint star
    if (coef != cplx{1.0, 0.0} || word.empty()) {
      print_scalar(out, coef);
      need_sep = true;
    }
    std::size_t i = 0;
    const auto& fs = word.factors;
    while (i < fs.size()) {
      const auto& l = std::get<ncalg::Letter>(fs[i]);
      std::size_t run = 1;
      while (i + run < fs.size() &&
             ncalg::cmp(fs[i + run], fs[i]) == 0)
        ++run;
      if (need_sep) out += star_tail ? " " : "*";
      const bool adj = (l.kind == Kind::V || l.kind == Kind::Y);
      out += (l.kind == Kind::U || l.kind == Kind::V) ? 'U' : 'Z';
      out += std::to_string(l.index);
      if (adj) out += '*';
      if (run > 1) {
        out += '^';
        out += std::to_string(run);
      }
      star_tail = adj && run == 1;
      need_sep = true;
      i += run;
    }
  }
  return out;
}

}  // namespace haarx::parse
