#include "maf/prompts.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace maf::prompts {

namespace {

std::string trim_newlines(std::string s) {
    while (!s.empty() && (s.front() == '\n' || s.front() == '\r')) s.erase(s.begin());
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

std::string trim(std::string s) {
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    for (;;) {
        auto nl = text.find('\n', start);
        std::string line = text.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
        if (nl == std::string::npos) break;
        start = nl + 1;
    }
    return lines;
}

bool has_delimiter_line(const std::string& block, const std::string& delimiter) {
    for (const auto& line : split_lines(block)) {
        if (line == delimiter) return true;
    }
    return false;
}

}  // namespace

std::string_view to_string(Role role) {
    switch (role) {
        case Role::Generator: return "generator";
        case Role::Critic: return "critic";
        case Role::EagerRefiner: return "eager-refiner";
        case Role::LazyRefiner: return "lazy-refiner";
    }
    return "generator";
}

Role role_from_string(std::string_view name) {
    for (Role r : {Role::Generator, Role::Critic, Role::EagerRefiner, Role::LazyRefiner}) {
        if (to_string(r) == name) return r;
    }
    throw PromptError("unknown prompt role '" + std::string(name) + "'");
}

std::vector<std::string> required_placeholders(Role role) {
    switch (role) {
        case Role::Generator: return {"problem"};
        case Role::Critic: return {"problem", "solution"};
        case Role::EagerRefiner:
        case Role::LazyRefiner: return {"problem", "solution", "feedback"};
    }
    return {};
}

void validate(const PromptBundle& bundle) {
    if (bundle.delimiter.empty()) throw PromptError("prompt delimiter must not be empty");
    for (const auto& name : required_placeholders(bundle.role)) {
        if (bundle.input_template.find("{" + name + "}") == std::string::npos) {
            throw PromptError(std::string(to_string(bundle.role)) + " prompt template is missing {" + name + "}");
        }
    }
    auto check = [&](const std::string& block, const std::string& what) {
        if (has_delimiter_line(block, bundle.delimiter)) {
            throw PromptError(what + " contains the delimiter line '" + bundle.delimiter + "'");
        }
    };
    check(bundle.instruction, "instruction");
    for (std::size_t i = 0; i < bundle.exemplars.size(); ++i) {
        check(bundle.exemplars[i], "exemplar " + std::to_string(i + 1));
        if (trim(bundle.exemplars[i]).empty()) {
            throw PromptError("exemplar " + std::to_string(i + 1) + " is empty");
        }
    }
    check(bundle.input_template, "input template");
}

PromptBundle parse_bundle(const std::string& text, const std::string& origin) {
    auto lines = split_lines(text);
    std::map<std::string, std::string> header;
    std::size_t i = 0;
    for (; i < lines.size(); ++i) {
        if (lines[i] == "---") break;
        if (trim(lines[i]).empty()) continue;
        auto colon = lines[i].find(':');
        if (colon == std::string::npos) {
            throw PromptError(origin + ": malformed header line '" + lines[i] + "'");
        }
        header[trim(lines[i].substr(0, colon))] = trim(lines[i].substr(colon + 1));
    }
    if (i == lines.size()) throw PromptError(origin + ": missing '---' after the header");

    PromptBundle b;
    auto need = [&](const char* key) {
        auto it = header.find(key);
        if (it == header.end()) throw PromptError(origin + ": header is missing '" + key + "'");
        return it->second;
    };
    b.role = role_from_string(need("role"));
    b.task = need("task");
    if (header.count("delimiter")) b.delimiter = header["delimiter"];
    if (header.count("category")) b.category = error_category_from_string(header["category"]);
    std::size_t declared_k = 0;
    try {
        declared_k = std::stoul(need("k"));
    } catch (const std::logic_error&) {
        throw PromptError(origin + ": k must be a non-negative integer");
    }

    std::vector<std::string> blocks(1);
    for (++i; i < lines.size(); ++i) {
        if (lines[i] == b.delimiter) {
            blocks.emplace_back();
            continue;
        }
        if (!blocks.back().empty()) blocks.back() += '\n';
        blocks.back() += lines[i];
    }
    for (auto& blk : blocks) blk = trim_newlines(blk);
    if (blocks.size() < 2) throw PromptError(origin + ": expected an instruction block and an input template");
    std::size_t found_k = blocks.size() - 2;
    if (found_k != declared_k) {
        throw PromptError(origin + ": declares k=" + std::to_string(declared_k) + " but has " +
                          std::to_string(found_k) + " exemplar blocks");
    }
    b.instruction = blocks.front();
    b.input_template = blocks.back();
    b.exemplars.assign(blocks.begin() + 1, blocks.end() - 1);
    try {
        validate(b);
    } catch (const PromptError& e) {
        throw PromptError(origin + ": " + e.what());
    }
    return b;
}

PromptBundle load_bundle(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PromptError("cannot read prompt file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_bundle(ss.str(), path);
}

std::string save_bundle(const PromptBundle& bundle) {
    validate(bundle);
    std::string out;
    out += "role: " + std::string(to_string(bundle.role)) + "\n";
    out += "task: " + bundle.task + "\n";
    out += "k: " + std::to_string(bundle.k()) + "\n";
    out += "delimiter: " + bundle.delimiter + "\n";
    if (bundle.category) out += "category: " + std::string(to_string(*bundle.category)) + "\n";
    out += "---\n";
    out += bundle.instruction + "\n";
    for (const auto& ex : bundle.exemplars) out += bundle.delimiter + "\n" + ex + "\n";
    out += bundle.delimiter + "\n" + bundle.input_template + "\n";
    return out;
}

std::size_t estimate_tokens(const std::string& text) { return (text.size() + 3) / 4; }

namespace {

std::string fill_template(const std::string& tmpl, const Bindings& bindings, Role role) {
    auto required = required_placeholders(role);
    std::string out;
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        auto open = tmpl.find('{', pos);
        if (open == std::string::npos) {
            out.append(tmpl, pos, std::string::npos);
            break;
        }
        auto close = tmpl.find('}', open + 1);
        if (close == std::string::npos) {
            out.append(tmpl, pos, std::string::npos);
            break;
        }
        std::string name = tmpl.substr(open + 1, close - open - 1);
        out.append(tmpl, pos, open - pos);
        auto it = bindings.find(name);
        if (it != bindings.end()) {
            out += it->second;
            pos = close + 1;
        } else if (std::find(required.begin(), required.end(), name) != required.end()) {
            throw PromptError("placeholder {" + name + "} is not bound");
        } else {
            out += '{';
            pos = open + 1;
        }
    }
    return out;
}

std::string assemble(const PromptBundle& bundle, std::size_t exemplars, const std::string& filled) {
    std::string out;
    if (!bundle.instruction.empty()) out += bundle.instruction + "\n\n";
    for (std::size_t i = 0; i < exemplars; ++i) {
        out += bundle.exemplars[i] + "\n" + bundle.delimiter + "\n\n";
    }
    out += filled;
    return out;
}

}  // namespace

RenderResult render_prompt(const PromptBundle& bundle, const Bindings& bindings, const RenderOptions& options) {
    std::string filled = fill_template(bundle.input_template, bindings, bundle.role);
    RenderResult r;
    r.exemplars_used = bundle.exemplars.size();
    r.text = assemble(bundle, r.exemplars_used, filled);
    if (options.max_prompt_tokens) {
        while (r.exemplars_used > 0 && estimate_tokens(r.text) > *options.max_prompt_tokens) {
            --r.exemplars_used;
            r.text = assemble(bundle, r.exemplars_used, filled);
        }
        r.exemplars_dropped = bundle.exemplars.size() - r.exemplars_used;
        if (r.exemplars_dropped > 0) {
            spdlog::warn("{} prompt for task '{}' exceeded {} tokens; dropped {} exemplar(s)",
                         to_string(bundle.role), bundle.task, *options.max_prompt_tokens, r.exemplars_dropped);
        }
    }
    return r;
}

std::string render(const PromptBundle& bundle, const Bindings& bindings, const RenderOptions& options) {
    return render_prompt(bundle, bindings, options).text;
}

}  // namespace maf::prompts
