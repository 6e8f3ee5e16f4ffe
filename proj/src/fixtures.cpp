#include "maf/fixtures.hpp"

#include <algorithm>
#include <array>
#include <random>
#include <regex>

namespace maf::fixtures {

namespace {

struct Story {
    // outer count, per-unit count, product, adjustment, result
    std::array<const char*, 5> names;
    char op;  // applied to product and adjustment
    const char* question;  // {A} {B} {C} placeholders
};

const std::vector<Story>& stories() {
    static const std::vector<Story> s{
        {{"boxes", "pens_per_box", "pens", "pens_sold", "pens_left"},
         '-',
         "A store has {A} boxes with {B} pens in each box. It sells {C} pens. How many pens are left?"},
        {{"bags", "apples_per_bag", "apples", "apples_bought", "apples_total"},
         '+',
         "Nina has {A} bags with {B} apples in each bag. She buys {C} more apples. How many apples does she have?"},
        {{"rows", "seats_per_row", "seats", "seats_taken", "seats_free"},
         '-',
         "A hall has {A} rows of {B} seats. {C} seats are taken. How many seats are free?"},
        {{"weeks", "dollars_per_week", "savings", "gift", "money_total"},
         '+',
         "Omar saves {B} dollars a week for {A} weeks and then gets a gift of {C} dollars. How much money does he have?"},
        {{"shelves", "books_per_shelf", "books", "books_lent", "books_remaining"},
         '-',
         "A library has {A} shelves with {B} books on each. It lends out {C} books. How many books remain?"},
    };
    return s;
}

const std::vector<std::string> kUnusedNames{"teacher_age", "bus_number", "room_color_code", "day_of_week",
                                            "door_count"};

std::uint64_t pick(std::mt19937_64& rng, std::uint64_t lo, std::uint64_t hi) { return lo + rng() % (hi - lo + 1); }

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
    std::size_t p = 0;
    while ((p = text.find(from, p)) != std::string::npos) {
        text.replace(p, from.size(), to);
        p += to.size();
    }
    return text;
}

std::string join_lines(const std::vector<std::string>& lines) {
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) out += (i ? "\n" : "") + lines[i];
    return out;
}

struct Base {
    std::string question;
    std::vector<std::string> lines;
    std::int64_t answer = 0;
    // Lines 2 and 4 carry "# <expr> = <value>" comments.
    std::array<std::int64_t, 2> equation_values{};
    const Story* story = nullptr;
};

Base make_base(std::mt19937_64& rng) {
    const Story& st = stories()[pick(rng, 0, stories().size() - 1)];
    auto a = static_cast<std::int64_t>(pick(rng, 2, 12));
    auto b = static_cast<std::int64_t>(pick(rng, 2, 20));
    std::int64_t product = a * b;
    auto c = st.op == '-' ? static_cast<std::int64_t>(pick(rng, 1, static_cast<std::uint64_t>(product - 1)))
                          : static_cast<std::int64_t>(pick(rng, 1, 50));
    std::int64_t result = st.op == '-' ? product - c : product + c;
    const auto& n = st.names;
    std::string sa = std::to_string(a), sb = std::to_string(b), sc = std::to_string(c), sp = std::to_string(product),
                sr = std::to_string(result);
    Base base;
    base.story = &st;
    base.question = replace_all(replace_all(replace_all(st.question, "{A}", sa), "{B}", sb), "{C}", sc);
    base.lines = {
        std::string(n[0]) + " = " + sa,
        std::string(n[1]) + " = " + sb,
        std::string(n[2]) + " = " + n[0] + " * " + n[1] + "  # " + sa + " * " + sb + " = " + sp,
        std::string(n[3]) + " = " + sc,
        std::string(n[4]) + " = " + n[2] + " " + st.op + " " + n[3] + "  # " + sp + " " + st.op + " " + sc + " = " +
            sr,
        std::string("print(") + n[4] + ")",
    };
    base.answer = result;
    base.equation_values = {product, result};
    return base;
}

void seed_arithmetic(const Base& base, std::mt19937_64& rng, std::vector<std::string>& lines, SeededErrorCase& out) {
    std::size_t which = pick(rng, 0, 1);
    std::size_t line = which == 0 ? 2 : 4;
    std::int64_t truth = base.equation_values[which];
    auto delta = static_cast<std::int64_t>(pick(rng, 1, 9)) * (pick(rng, 0, 1) ? 1 : -1);
    std::string& text = lines[line];
    auto eq = text.rfind("= ");
    text = text.substr(0, eq) + "= " + std::to_string(truth + delta);
    out.expected_steps = {line};
    out.description = "comment on line " + std::to_string(line + 1) + " claims " + std::to_string(truth + delta) +
                      " instead of " + std::to_string(truth);
}

void seed_syntax(std::mt19937_64& rng, std::vector<std::string>& lines, SeededErrorCase& out) {
    std::size_t line = pick(rng, 0, lines.size() - 1);
    std::string& text = lines[line];
    if (line + 1 == lines.size()) {
        text.pop_back();
        out.description = "closing parenthesis removed on line " + std::to_string(line + 1);
    } else {
        text.erase(text.find(" = "), 2);
        out.description = "assignment operator removed on line " + std::to_string(line + 1);
    }
    out.expected_steps = {line};
}

void seed_redundancy(std::mt19937_64& rng, std::vector<std::string>& lines, SeededErrorCase& out) {
    std::size_t at = pick(rng, 0, lines.size() - 1);
    const std::string& name = kUnusedNames[pick(rng, 0, kUnusedNames.size() - 1)];
    lines.insert(lines.begin() + static_cast<std::ptrdiff_t>(at), name + " = " + std::to_string(pick(rng, 2, 60)));
    out.expected_steps = {at};
    out.description = "unused assignment to " + name + " inserted at line " + std::to_string(at + 1);
}

void seed_naming(const Base& base, std::mt19937_64& rng, std::vector<std::string>& lines, SeededErrorCase& out) {
    static const std::array<std::size_t, 3> renamable{0, 1, 3};
    std::size_t def = renamable[pick(rng, 0, renamable.size() - 1)];
    std::string old_name = base.story->names[def];
    std::string letter(1, static_cast<char>('a' + pick(rng, 0, 2)));
    std::regex word("\\b" + old_name + "\\b");
    for (auto& l : lines) {
        auto hash = l.find('#');
        std::string code = l.substr(0, hash);
        l = std::regex_replace(code, word, letter) + (hash == std::string::npos ? "" : l.substr(hash));
    }
    out.expected_steps = {def};
    out.description = old_name + " renamed to " + letter;
}

}  // namespace

bool can_seed(ErrorCategory category) {
    return category == ErrorCategory::Arithmetic || category == ErrorCategory::ProgramSyntax ||
           category == ErrorCategory::Redundancy || category == ErrorCategory::VariableNaming;
}

std::vector<SeededErrorCase> generate_seeded_corpus(std::size_t n, const std::vector<ErrorCategory>& categories,
                                                    std::uint64_t seed) {
    if (categories.empty()) throw InputError("seeded corpus needs at least one category");
    for (auto c : categories) {
        if (!can_seed(c)) throw InputError("cannot seed errors of category " + std::string(to_string(c)));
    }
    std::mt19937_64 rng(seed);
    std::vector<SeededErrorCase> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Base base = make_base(rng);
        SeededErrorCase c;
        c.id = "seeded-" + std::to_string(seed) + "-" + std::to_string(i);
        c.question = base.question;
        c.gold_answer = std::to_string(base.answer);
        c.category = categories[i % categories.size()];
        c.base = segment_solution(join_lines(base.lines), SolutionKind::Program);
        std::vector<std::string> lines = base.lines;
        switch (c.category) {
            case ErrorCategory::Arithmetic: seed_arithmetic(base, rng, lines, c); break;
            case ErrorCategory::ProgramSyntax: seed_syntax(rng, lines, c); break;
            case ErrorCategory::Redundancy: seed_redundancy(rng, lines, c); break;
            default: seed_naming(base, rng, lines, c); break;
        }
        c.corrupted = segment_solution(join_lines(lines), SolutionKind::Program);
        out.push_back(std::move(c));
    }
    return out;
}

std::string scripted_critique(const SeededErrorCase& c) {
    std::string out;
    for (std::size_t i = 0; i < c.corrupted.steps().size(); ++i) {
        bool flagged = std::find(c.expected_steps.begin(), c.expected_steps.end(), i) != c.expected_steps.end();
        if (i) out += '\n';
        out += "Step " + std::to_string(i + 1) + ": " + (flagged ? c.description : std::string(kDefaultOkMarker));
    }
    return out;
}

void to_json(json& j, const SeededErrorCase& c) {
    j = json{{"id", c.id},
             {"question", c.question},
             {"gold_answer", c.gold_answer},
             {"base", c.base.raw_text()},
             {"corrupted", c.corrupted.raw_text()},
             {"category", to_string(c.category)},
             {"description", c.description},
             {"expected_steps", c.expected_steps}};
}

std::vector<ProblemRecord> to_problem_records(const std::vector<SeededErrorCase>& cases) {
    std::vector<ProblemRecord> out;
    for (const auto& c : cases) {
        ProblemRecord p;
        p.id = c.id;
        p.task = Task::Math;
        p.question = c.question;
        p.gold_answer = c.gold_answer;
        p.metadata = {{"category", to_string(c.category)}, {"description", c.description}};
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace maf::fixtures
