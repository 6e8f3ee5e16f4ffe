#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "maf/checkers/expression.hpp"
#include "maf/core.hpp"

namespace maf::checkers {

// An arithmetic claim "<lhs_expr> = <rhs_value>" found inside a step.
struct Equation {
    std::string lhs_expr;
    double rhs_value = 0.0;
    std::string rhs_text;
    std::size_t source_step = 0;
    // [begin, end) byte range of the claim inside the step text.
    std::size_t span_begin = 0;
    std::size_t span_end = 0;
};

struct ExtractOptions {
    // Programs are only scanned after this delimiter on each line.
    std::string comment_delimiter = "#";
};

// Finds equation claims. The right-hand side must be a number, so program
// assignments such as "total = a + b" never match. The left-hand side is the
// longest token-aligned suffix before '=' that parses as an expression with at
// least one operator.
std::vector<Equation> extract_equations(const Solution& solution, const ExtractOptions& options = {});

inline constexpr double kDefaultRelativeTolerance = 1e-6;
inline constexpr double kZeroAbsoluteTolerance = 1e-9;

// True when the two values agree within tol_rel (absolute 1e-9 when either is 0).
bool values_agree(double computed, double claimed, double tol_rel);

// One StepFeedback per step that carries equations: ok when all of them hold.
Feedback check_arithmetic(const Solution& solution, double tol_rel = kDefaultRelativeTolerance,
                          const std::string& module_name = "arithmetic",
                          const std::string& ok_marker = std::string(kDefaultOkMarker),
                          const ExtractOptions& options = {});

}  // namespace maf::checkers
