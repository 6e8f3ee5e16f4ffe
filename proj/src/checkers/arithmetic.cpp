#include "maf/checkers/arithmetic.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>

namespace maf::checkers {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_word(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Parses a number starting at p (optionally signed, '$' allowed). Returns the
// end offset or npos.
std::size_t scan_rhs_number(const std::string& s, std::size_t p, double& value, std::string& text) {
    std::size_t q = p;
    while (q < s.size() && s[q] == ' ') ++q;
    std::size_t text_begin = q;
    bool negative = false;
    if (q < s.size() && s[q] == '-') {
        negative = true;
        ++q;
    }
    if (q < s.size() && s[q] == '$') ++q;
    std::string digits;
    while (q < s.size() && is_digit(s[q])) digits += s[q++];
    if (digits.empty()) return std::string::npos;
    if (digits.size() <= 3) {
        while (q + 3 < s.size() && s[q] == ',' && is_digit(s[q + 1]) && is_digit(s[q + 2]) &&
               is_digit(s[q + 3]) && (q + 4 >= s.size() || !is_digit(s[q + 4]))) {
            digits.append(s, q + 1, 3);
            q += 4;
        }
    }
    if (q + 1 < s.size() && s[q] == '.' && is_digit(s[q + 1])) {
        digits += '.';
        ++q;
        while (q < s.size() && is_digit(s[q])) digits += s[q++];
    }
    // A letter glued to the number or a percent sign makes the claim ambiguous.
    if (q < s.size() && (is_word(s[q]) || s[q] == '%')) return std::string::npos;
    // The right-hand side must be a single number, not an expression.
    std::size_t r = q;
    while (r < s.size() && s[r] == ' ') ++r;
    if (r < s.size()) {
        char c = s[r];
        if (c == '*' || c == '/' || c == '(' || s.compare(r, 2, "\xC3\x97") == 0 ||
            s.compare(r, 2, "\xC3\xB7") == 0) {
            return std::string::npos;
        }
        if (c == '+' || c == '-') {
            std::size_t t = r + 1;
            while (t < s.size() && s[t] == ' ') ++t;
            if (t < s.size() && (is_digit(s[t]) || s[t] == '(' || s[t] == '$')) return std::string::npos;
        }
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (ec != std::errc()) return std::string::npos;
    value = negative ? -v : v;
    text = s.substr(text_begin, q - text_begin);
    return q;
}

void scan_region(const std::string& region, std::size_t offset, std::size_t step,
                 std::vector<Equation>& out) {
    // '$' is blanked so currency amounts parse; offsets stay aligned.
    std::string clean = region;
    std::replace(clean.begin(), clean.end(), '$', ' ');
    for (std::size_t e = 0; e < clean.size(); ++e) {
        if (clean[e] != '=') continue;
        if (e + 1 < clean.size() && clean[e + 1] == '=') continue;
        if (e > 0 && std::string_view("=<>!+-*/%").find(clean[e - 1]) != std::string_view::npos) continue;

        double rhs = 0.0;
        std::string rhs_text;
        std::size_t rhs_end = scan_rhs_number(region, e + 1, rhs, rhs_text);
        if (rhs_end == std::string::npos) continue;

        for (std::size_t s = 0; s < e; ++s) {
            if (clean[s] == ' ' || clean[s] == '\t') continue;
            if (s > 0 && (is_word(clean[s - 1]) || clean[s - 1] == '.' || clean[s - 1] == ',')) continue;
            std::size_t end = e;
            while (end > s && (clean[end - 1] == ' ' || clean[end - 1] == '\t')) --end;
            if (end <= s) break;
            std::string_view candidate(clean.data() + s, end - s);
            try {
                Expr ast = parse_expression(candidate);
                if (ast.operator_count() == 0) continue;
                Equation eq;
                eq.lhs_expr = std::string(candidate);
                eq.rhs_value = rhs;
                eq.rhs_text = rhs_text;
                eq.source_step = step;
                eq.span_begin = offset + s;
                eq.span_end = offset + rhs_end;
                out.push_back(std::move(eq));
                break;
            } catch (const ExprParseError&) {
            }
        }
    }
}

}  // namespace

std::vector<Equation> extract_equations(const Solution& solution, const ExtractOptions& options) {
    std::vector<Equation> out;
    for (const auto& step : solution.steps()) {
        if (solution.kind() == SolutionKind::Program) {
            if (options.comment_delimiter.empty()) continue;
            auto pos = step.text.find(options.comment_delimiter);
            if (pos == std::string::npos) continue;
            std::size_t begin = pos + options.comment_delimiter.size();
            scan_region(step.text.substr(begin), begin, step.index, out);
        } else {
            scan_region(step.text, 0, step.index, out);
        }
    }
    return out;
}

bool values_agree(double computed, double claimed, double tol_rel) {
    if (computed == 0.0 || claimed == 0.0) return std::abs(computed - claimed) <= kZeroAbsoluteTolerance;
    double scale = std::max(std::abs(computed), std::abs(claimed));
    return std::abs(computed - claimed) <= tol_rel * scale;
}

Feedback check_arithmetic(const Solution& solution, double tol_rel, const std::string& module_name,
                          const std::string& ok_marker, const ExtractOptions& options) {
    if (tol_rel < 0) throw InputError("relative tolerance must be non-negative");
    std::map<std::size_t, std::vector<std::string>> problems;
    std::map<std::size_t, bool> seen;
    for (const auto& eq : extract_equations(solution, options)) {
        seen[eq.source_step] = true;
        std::string claim = eq.lhs_expr + " = " + eq.rhs_text;
        try {
            double computed = evaluate(parse_expression(eq.lhs_expr));
            if (!values_agree(computed, eq.rhs_value, tol_rel)) {
                problems[eq.source_step].push_back("the claim `" + claim + "` is wrong: " + eq.lhs_expr +
                                                   " evaluates to " + format_number(computed) + ".");
            }
        } catch (const EvalError& err) {
            problems[eq.source_step].push_back("the claim `" + claim + "` cannot be evaluated: " +
                                               err.what() + ".");
        }
    }

    std::vector<StepFeedback> entries;
    std::string raw;
    for (const auto& [step, _] : seen) {
        StepFeedback sf;
        sf.step_index = step;
        auto it = problems.find(step);
        if (it == problems.end()) {
            sf.ok = true;
            sf.comment = ok_marker;
        } else {
            sf.ok = false;
            for (std::size_t i = 0; i < it->second.size(); ++i) {
                if (i) sf.comment += ' ';
                sf.comment += it->second[i];
            }
        }
        if (!raw.empty()) raw += '\n';
        raw += "Step " + std::to_string(step + 1) + ": " + sf.comment;
        entries.push_back(std::move(sf));
    }
    return make_feedback(module_name, ErrorCategory::Arithmetic, std::move(entries), std::move(raw));
}

}  // namespace maf::checkers
