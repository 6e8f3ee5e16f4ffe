#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maf/core.hpp"

namespace maf::fixtures {

// A correct program with one injected error.
struct SeededErrorCase {
    std::string id;
    std::string question;
    std::string gold_answer;
    Solution base;
    Solution corrupted;
    ErrorCategory category = ErrorCategory::Arithmetic;
    std::string description;
    // 0-based lines a checker for `category` should flag.
    std::vector<std::size_t> expected_steps;
};

// Arithmetic, ProgramSyntax, Redundancy and VariableNaming can be seeded.
bool can_seed(ErrorCategory category);

// Deterministic for a given (n, categories, seed). Categories are used round
// robin. Arithmetic perturbs the right-hand side of one commented equation;
// ProgramSyntax deletes one structural token; Redundancy inserts an unused
// assignment; VariableNaming renames one variable to a single letter.
// Throws InputError for an empty or unseedable category list.
std::vector<SeededErrorCase> generate_seeded_corpus(std::size_t n, const std::vector<ErrorCategory>& categories,
                                                    std::uint64_t seed);

// What a scripted critic for the case's category says about the corrupted
// solution: "Step k: ..." for expected steps, "looks good" elsewhere.
std::string scripted_critique(const SeededErrorCase& c);

void to_json(json& j, const SeededErrorCase& c);

// Dataset records (math format) for the corrupted cases.
std::vector<ProblemRecord> to_problem_records(const std::vector<SeededErrorCase>& cases);

}  // namespace maf::fixtures
