#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "maf/eval.hpp"
#include "maf/fixtures.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Write a seeded-error corpus"};
    std::size_t n = 10;
    std::uint64_t seed = 7;
    std::vector<std::string> categories{"Arithmetic"};
    std::string out, dataset;
    app.add_option("-n,--count", n, "Number of cases");
    app.add_option("--seed", seed, "Generator seed");
    app.add_option("--categories", categories, "Error categories")->delimiter(',');
    app.add_option("--out", out, "Case file (JSONL); stdout when absent");
    app.add_option("--dataset", dataset, "Also write the cases as a math dataset");
    CLI11_PARSE(app, argc, argv);

    try {
        std::vector<maf::ErrorCategory> cats;
        for (const auto& c : categories) cats.push_back(maf::error_category_from_string(c));
        auto cases = maf::fixtures::generate_seeded_corpus(n, cats, seed);
        std::string lines;
        for (const auto& c : cases) lines += maf::json(c).dump() + "\n";
        if (out.empty()) {
            std::cout << lines;
        } else {
            std::ofstream(out) << lines;
        }
        if (!dataset.empty()) std::ofstream(dataset) << maf::eval::dataset_to_jsonl(maf::fixtures::to_problem_records(cases));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
