#include "maf/checkers/expression.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>

namespace maf::checkers {

Expr Expr::literal(double value) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Literal;
    n->value = value;
    return Expr(std::move(n));
}

Expr Expr::negate(Expr operand) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Negate;
    n->lhs = std::make_shared<const Expr>(std::move(operand));
    return Expr(std::move(n));
}

Expr Expr::binary(BinaryOp op, Expr lhs, Expr rhs) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Binary;
    n->op = op;
    n->lhs = std::make_shared<const Expr>(std::move(lhs));
    n->rhs = std::make_shared<const Expr>(std::move(rhs));
    return Expr(std::move(n));
}

std::size_t Expr::operator_count() const {
    switch (kind()) {
        case Kind::Literal: return 0;
        case Kind::Negate: return 1 + operand().operator_count();
        case Kind::Binary: return 1 + lhs().operator_count() + rhs().operator_count();
    }
    return 0;
}

namespace {

enum class Tok { Number, Plus, Minus, Star, Slash, LParen, RParen, End };

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src) { advance(); }

    Expr parse() {
        Expr e = expr();
        if (tok_ != Tok::End) throw ExprParseError("unexpected trailing input", tok_pos_);
        return e;
    }

private:
    Expr expr() {
        Expr lhs = term();
        while (tok_ == Tok::Plus || tok_ == Tok::Minus) {
            BinaryOp op = tok_ == Tok::Plus ? BinaryOp::Add : BinaryOp::Sub;
            advance();
            lhs = Expr::binary(op, lhs, term());
        }
        return lhs;
    }

    Expr term() {
        Expr lhs = unary();
        while (tok_ == Tok::Star || tok_ == Tok::Slash) {
            BinaryOp op = tok_ == Tok::Star ? BinaryOp::Mul : BinaryOp::Div;
            advance();
            lhs = Expr::binary(op, lhs, unary());
        }
        return lhs;
    }

    Expr unary() {
        if (tok_ == Tok::Minus) {
            advance();
            return Expr::negate(unary());
        }
        if (tok_ == Tok::Plus) {
            advance();
            return unary();
        }
        return primary();
    }

    Expr primary() {
        if (tok_ == Tok::Number) {
            double v = number_;
            advance();
            return Expr::literal(v);
        }
        if (tok_ == Tok::LParen) {
            advance();
            Expr inner = expr();
            if (tok_ != Tok::RParen) throw ExprParseError("expected ')'", tok_pos_);
            advance();
            return inner;
        }
        throw ExprParseError(tok_ == Tok::End ? "unexpected end of expression" : "expected a number or '('",
                             tok_pos_);
    }

    bool match_utf8(std::string_view seq) {
        if (src_.substr(pos_, seq.size()) == seq) {
            pos_ += seq.size();
            return true;
        }
        return false;
    }

    static bool is_digit(char c) { return c >= '0' && c <= '9'; }

    void advance() {
        while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t')) ++pos_;
        tok_pos_ = pos_;
        if (pos_ >= src_.size()) {
            tok_ = Tok::End;
            return;
        }
        char c = src_[pos_];
        switch (c) {
            case '+': ++pos_; tok_ = Tok::Plus; return;
            case '-': ++pos_; tok_ = Tok::Minus; return;
            case '*': ++pos_; tok_ = Tok::Star; return;
            case '/': ++pos_; tok_ = Tok::Slash; return;
            case '(': ++pos_; tok_ = Tok::LParen; return;
            case ')': ++pos_; tok_ = Tok::RParen; return;
            default: break;
        }
        if (match_utf8("\xC3\x97")) { tok_ = Tok::Star; return; }       // ×
        if (match_utf8("\xC3\xB7")) { tok_ = Tok::Slash; return; }      // ÷
        if (match_utf8("\xE2\x88\x92")) { tok_ = Tok::Minus; return; }  // −
        if (is_digit(c) || c == '.') {
            lex_number();
            return;
        }
        throw ExprParseError("unexpected character", pos_);
    }

    void lex_number() {
        std::string digits;
        std::size_t p = pos_;
        while (p < src_.size() && is_digit(src_[p])) digits += src_[p++];
        // Thousands groups: ",ddd" directly after at most three leading digits.
        if (!digits.empty() && digits.size() <= 3) {
            while (p + 3 < src_.size() + 0 && src_[p] == ',' && is_digit(src_[p + 1]) &&
                   is_digit(src_[p + 2]) && is_digit(src_[p + 3]) &&
                   (p + 4 >= src_.size() || !is_digit(src_[p + 4]))) {
                digits.append(src_.substr(p + 1, 3));
                p += 4;
            }
        }
        if (p < src_.size() && src_[p] == '.') {
            std::size_t q = p + 1;
            std::string frac;
            while (q < src_.size() && is_digit(src_[q])) frac += src_[q++];
            if (frac.empty()) {
                if (digits.empty()) throw ExprParseError("malformed number", pos_);
            } else {
                digits += '.';
                digits += frac;
                p = q;
            }
        }
        if (digits.empty()) throw ExprParseError("malformed number", pos_);
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
        if (ec != std::errc() || ptr != digits.data() + digits.size()) {
            throw ExprParseError("malformed number", pos_);
        }
        number_ = v;
        tok_ = Tok::Number;
        pos_ = p;
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::size_t tok_pos_ = 0;
    Tok tok_ = Tok::End;
    double number_ = 0.0;
};

int precedence(const Expr& e) {
    switch (e.kind()) {
        case Expr::Kind::Literal: return 4;
        case Expr::Kind::Negate: return 3;
        case Expr::Kind::Binary:
            return (e.op() == BinaryOp::Add || e.op() == BinaryOp::Sub) ? 1 : 2;
    }
    return 0;
}

char op_char(BinaryOp op) {
    switch (op) {
        case BinaryOp::Add: return '+';
        case BinaryOp::Sub: return '-';
        case BinaryOp::Mul: return '*';
        case BinaryOp::Div: return '/';
    }
    return '?';
}

void print_into(const Expr& e, std::string& out) {
    switch (e.kind()) {
        case Expr::Kind::Literal:
            out += format_number(e.value());
            return;
        case Expr::Kind::Negate: {
            out += '-';
            bool wrap = precedence(e.operand()) < 3;
            if (wrap) out += '(';
            print_into(e.operand(), out);
            if (wrap) out += ')';
            return;
        }
        case Expr::Kind::Binary: {
            int p = precedence(e);
            bool wrap_l = precedence(e.lhs()) < p;
            bool wrap_r = precedence(e.rhs()) <= p;
            if (wrap_l) out += '(';
            print_into(e.lhs(), out);
            if (wrap_l) out += ')';
            out += ' ';
            out += op_char(e.op());
            out += ' ';
            if (wrap_r) out += '(';
            print_into(e.rhs(), out);
            if (wrap_r) out += ')';
            return;
        }
    }
}

}  // namespace

Expr parse_expression(std::string_view src) { return Parser(src).parse(); }

double evaluate(const Expr& expr) {
    switch (expr.kind()) {
        case Expr::Kind::Literal: return expr.value();
        case Expr::Kind::Negate: return -evaluate(expr.operand());
        case Expr::Kind::Binary: {
            double a = evaluate(expr.lhs());
            double b = evaluate(expr.rhs());
            switch (expr.op()) {
                case BinaryOp::Add: return a + b;
                case BinaryOp::Sub: return a - b;
                case BinaryOp::Mul: return a * b;
                case BinaryOp::Div:
                    if (b == 0.0) throw EvalError("division by zero");
                    return a / b;
            }
        }
    }
    return 0.0;
}

std::string print_expression(const Expr& expr) {
    std::string out;
    print_into(expr, out);
    return out;
}

std::string format_number(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    if (value == 0.0) return "0";
    char buf[512];
    auto fmt = std::abs(value) < 1e21 && std::abs(value) >= 1e-7 ? std::chars_format::fixed
                                                                  : std::chars_format::general;
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value, fmt);
    if (ec != std::errc()) return std::to_string(value);
    return std::string(buf, ptr);
}

}  // namespace maf::checkers
