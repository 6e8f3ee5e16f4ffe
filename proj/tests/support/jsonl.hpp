#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "maf/core.hpp"

namespace maf::testing {

inline std::vector<json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<json> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(json::parse(line));
    }
    return out;
}

}  // namespace maf::testing
