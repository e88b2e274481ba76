#pragma once

// Tiny arithmetic expression language for scenario files: +, -, *, /, ^,
// sin, cos, sqrt, abs, sign, variadic norm, named variables, and the
// constant pi. Parse errors carry line and column.

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stochstab {

struct ParseError : std::runtime_error {
  ParseError(int line_, int column_, const std::string& what_)
      : std::runtime_error("parse error at line " + std::to_string(line_) +
                          ", column " + std::to_string(column_) + ": " +
                          what_),
        line(line_),
        column(column_) {}
  int line;
  int column;
};

namespace expr_detail {

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen,
                 RParen, Comma, End };

struct Token {
  Tok kind = Tok::End;
  double number = 0.0;
  std::string text;
  int line = 1;
  int column = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) { advance(); }

  const Token& peek() const { return cur_; }

  Token take() {
    Token t = cur_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (pos_ < src_.size() &&
           (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' ||
            src_[pos_] == '\r')) {
      if (src_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
      ++pos_;
    }
    cur_.line = line_;
    cur_.column = col_;
    if (pos_ >= src_.size()) {
      cur_.kind = Tok::End;
      return;
    }
    const char c = src_[pos_];
    if ((c >= '0' && c <= '9') || c == '.') {
      std::size_t used = 0;
      try {
        cur_.number = std::stod(src_.substr(pos_), &used);
      } catch (const std::exception&) {
        throw ParseError(line_, col_, "malformed number");
      }
      cur_.kind = Tok::Number;
      pos_ += used;
      col_ += static_cast<int>(used);
      return;
    }
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_') {
      std::size_t end = pos_;
      while (end < src_.size() &&
             ((src_[end] >= 'a' && src_[end] <= 'z') ||
              (src_[end] >= 'A' && src_[end] <= 'Z') ||
              (src_[end] >= '0' && src_[end] <= '9') || src_[end] == '_'))
        ++end;
      cur_.kind = Tok::Ident;
      cur_.text = src_.substr(pos_, end - pos_);
      col_ += static_cast<int>(end - pos_);
      pos_ = end;
      return;
    }
    switch (c) {
      case '+': cur_.kind = Tok::Plus; break;
      case '-': cur_.kind = Tok::Minus; break;
      case '*': cur_.kind = Tok::Star; break;
      case '/': cur_.kind = Tok::Slash; break;
      case '^': cur_.kind = Tok::Caret; break;
      case '(': cur_.kind = Tok::LParen; break;
      case ')': cur_.kind = Tok::RParen; break;
      case ',': cur_.kind = Tok::Comma; break;
      default:
        throw ParseError(line_, col_,
                         std::string("unexpected character '") + c + "'");
    }
    ++pos_;
    ++col_;
  }

  const std::string& src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  Token cur_;
};

struct Node {
  virtual ~Node() = default;
  virtual double eval(std::span<const double> vars) const = 0;
};

using NodePtr = std::shared_ptr<const Node>;

struct ConstNode final : Node {
  explicit ConstNode(double v) : value(v) {}
  double eval(std::span<const double>) const override { return value; }
  double value;
};

struct VarNode final : Node {
  explicit VarNode(int i) : index(i) {}
  double eval(std::span<const double> vars) const override {
    return vars[index];
  }
  int index;
};

struct BinNode final : Node {
  BinNode(char op_, NodePtr l, NodePtr r)
      : op(op_), lhs(std::move(l)), rhs(std::move(r)) {}
  double eval(std::span<const double> vars) const override {
    const double a = lhs->eval(vars);
    const double b = rhs->eval(vars);
    switch (op) {
      case '+': return a + b;
      case '-': return a - b;
      case '*': return a * b;
      case '/': return a / b;
      case '^': return std::pow(a, b);
    }
    return 0.0;
  }
  char op;
  NodePtr lhs, rhs;
};

struct NegNode final : Node {
  explicit NegNode(NodePtr c) : child(std::move(c)) {}
  double eval(std::span<const double> vars) const override {
    return -child->eval(vars);
  }
  NodePtr child;
};

struct CallNode final : Node {
  enum class Fn { Sin, Cos, Sqrt, Abs, Sign, Norm };
  CallNode(Fn f, std::vector<NodePtr> a) : fn(f), args(std::move(a)) {}
  double eval(std::span<const double> vars) const override {
    switch (fn) {
      case Fn::Sin: return std::sin(args[0]->eval(vars));
      case Fn::Cos: return std::cos(args[0]->eval(vars));
      case Fn::Sqrt: return std::sqrt(args[0]->eval(vars));
      case Fn::Abs: return std::abs(args[0]->eval(vars));
      case Fn::Sign: {
        const double v = args[0]->eval(vars);
        return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
      }
      case Fn::Norm: {
        double s = 0.0;
        for (const auto& a : args) {
          const double v = a->eval(vars);
          s += v * v;
        }
        return std::sqrt(s);
      }
    }
    return 0.0;
  }
  Fn fn;
  std::vector<NodePtr> args;
};

class Parser {
 public:
  Parser(const std::string& src, const std::vector<std::string>& vars,
         const std::map<std::string, double>& constants)
      : lex_(src), vars_(vars), constants_(constants) {}

  NodePtr parse() {
    NodePtr e = expression();
    const Token& t = lex_.peek();
    if (t.kind != Tok::End)
      throw ParseError(t.line, t.column, "unexpected trailing input");
    return e;
  }

 private:
  NodePtr expression() {
    NodePtr lhs = term();
    for (;;) {
      const Tok k = lex_.peek().kind;
      if (k != Tok::Plus && k != Tok::Minus) return lhs;
      lex_.take();
      lhs = std::make_shared<BinNode>(k == Tok::Plus ? '+' : '-', lhs, term());
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      const Tok k = lex_.peek().kind;
      if (k != Tok::Star && k != Tok::Slash) return lhs;
      lex_.take();
      lhs = std::make_shared<BinNode>(k == Tok::Star ? '*' : '/', lhs, unary());
    }
  }

  NodePtr unary() {
    const Tok k = lex_.peek().kind;
    if (k == Tok::Minus) {
      lex_.take();
      return std::make_shared<NegNode>(unary());
    }
    if (k == Tok::Plus) {
      lex_.take();
      return unary();
    }
    return power();
  }

  // right associative: a ^ b ^ c == a ^ (b ^ c)
  NodePtr power() {
    NodePtr base = primary();
    if (lex_.peek().kind == Tok::Caret) {
      lex_.take();
      return std::make_shared<BinNode>('^', base, unary());
    }
    return base;
  }

  NodePtr primary() {
    const Token t = lex_.take();
    switch (t.kind) {
      case Tok::Number:
        return std::make_shared<ConstNode>(t.number);
      case Tok::LParen: {
        NodePtr e = expression();
        expect(Tok::RParen, ")");
        return e;
      }
      case Tok::Ident:
        return identifier(t);
      default:
        throw ParseError(t.line, t.column, "expected a value");
    }
  }

  NodePtr identifier(const Token& t) {
    if (lex_.peek().kind == Tok::LParen) {
      lex_.take();
      std::vector<NodePtr> args;
      if (lex_.peek().kind != Tok::RParen) {
        args.push_back(expression());
        while (lex_.peek().kind == Tok::Comma) {
          lex_.take();
          args.push_back(expression());
        }
      }
      expect(Tok::RParen, ")");
      return call(t, std::move(args));
    }
    for (std::size_t i = 0; i < vars_.size(); ++i)
      if (vars_[i] == t.text)
        return std::make_shared<VarNode>(static_cast<int>(i));
    if (const auto it = constants_.find(t.text); it != constants_.end())
      return std::make_shared<ConstNode>(it->second);
    throw ParseError(t.line, t.column,
                     "unknown symbol '" + t.text + "'");
  }

  NodePtr call(const Token& t, std::vector<NodePtr> args) {
    using Fn = CallNode::Fn;
    Fn fn;
    std::size_t arity = 1;
    if (t.text == "sin") fn = Fn::Sin;
    else if (t.text == "cos") fn = Fn::Cos;
    else if (t.text == "sqrt") fn = Fn::Sqrt;
    else if (t.text == "abs") fn = Fn::Abs;
    else if (t.text == "sign") fn = Fn::Sign;
    else if (t.text == "norm") { fn = Fn::Norm; arity = 0; }
    else
      throw ParseError(t.line, t.column,
                       "unknown function '" + t.text + "'");
    if (arity == 1 && args.size() != 1)
      throw ParseError(t.line, t.column,
                       "'" + t.text + "' takes exactly one argument");
    if (fn == Fn::Norm && args.empty())
      throw ParseError(t.line, t.column, "'norm' needs at least one argument");
    return std::make_shared<CallNode>(fn, std::move(args));
  }

  void expect(Tok k, const char* what) {
    const Token t = lex_.take();
    if (t.kind != k)
      throw ParseError(t.line, t.column,
                       std::string("expected '") + what + "'");
  }

  Lexer lex_;
  const std::vector<std::string>& vars_;
  const std::map<std::string, double>& constants_;
};

}  // namespace expr_detail

// Compiled expression over a fixed, ordered variable list. Every symbol is
// resolved at compile time; evaluation cannot fail on names.
class Expression {
 public:
  Expression() = default;

  static Expression compile(const std::string& source,
                            const std::vector<std::string>& variables,
                            const std::map<std::string, double>& constants = {
                                {"pi", 3.14159265358979323846},
                                {"e", 2.71828182845904523536}}) {
    expr_detail::Parser parser(source, variables, constants);
    Expression e;
    e.root_ = parser.parse();
    e.source_ = source;
    e.arity_ = static_cast<int>(variables.size());
    return e;
  }

  double operator()(std::span<const double> vars) const {
    return root_->eval(vars);
  }

  double operator()(std::initializer_list<double> vars) const {
    return root_->eval(std::span<const double>(vars.begin(), vars.size()));
  }

  bool valid() const { return static_cast<bool>(root_); }
  int arity() const { return arity_; }
  const std::string& source() const { return source_; }

 private:
  expr_detail::NodePtr root_;
  std::string source_;
  int arity_ = 0;
};

}  // namespace stochstab
