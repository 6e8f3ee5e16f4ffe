#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>

#include "maf/core.hpp"

namespace maf::checkers {

class ExprParseError : public Error {
public:
    ExprParseError(const std::string& message, std::size_t position)
        : Error(message + " at offset " + std::to_string(position)), position_(position) {}

    std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

class EvalError : public Error {
public:
    using Error::Error;
};

enum class BinaryOp { Add, Sub, Mul, Div };

// Immutable arithmetic expression tree: decimal literals, unary negation and
// the four binary operators. Parentheses only shape the tree.
class Expr {
public:
    enum class Kind { Literal, Negate, Binary };

    static Expr literal(double value);
    static Expr negate(Expr operand);
    static Expr binary(BinaryOp op, Expr lhs, Expr rhs);

    Kind kind() const { return node_->kind; }
    double value() const { return node_->value; }
    BinaryOp op() const { return node_->op; }
    const Expr& lhs() const { return *node_->lhs; }
    const Expr& rhs() const { return *node_->rhs; }
    const Expr& operand() const { return *node_->lhs; }

    // Number of operator nodes.
    std::size_t operator_count() const;

private:
    struct Node {
        Kind kind = Kind::Literal;
        double value = 0.0;
        BinaryOp op = BinaryOp::Add;
        std::shared_ptr<const Expr> lhs;
        std::shared_ptr<const Expr> rhs;
    };

    explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

    std::shared_ptr<const Node> node_;
};

// Grammar (whitespace ignored):
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | primary
//   primary := number | '(' expr ')'
//   number  := digits (',' ddd)* ('.' digits)?  |  '.' digits
// The Unicode signs × ÷ − are accepted as * / -.
Expr parse_expression(std::string_view src);

// Throws EvalError on division by zero.
double evaluate(const Expr& expr);

// Minimal-parenthesis rendering that reparses to the same tree.
std::string print_expression(const Expr& expr);

// Shortest decimal text for a double (no exponent for moderate magnitudes).
std::string format_number(double value);

}  // namespace maf::checkers
