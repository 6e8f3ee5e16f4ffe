#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "maf/core.hpp"

namespace maf::prompts {

class PromptError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

enum class Role { Generator, Critic, EagerRefiner, LazyRefiner };

std::string_view to_string(Role role);
Role role_from_string(std::string_view name);

// Placeholders the role's input template must contain.
std::vector<std::string> required_placeholders(Role role);

struct PromptBundle {
    Role role = Role::Generator;
    std::string task;
    std::string delimiter = "###";
    std::optional<ErrorCategory> category;
    std::string instruction;
    std::vector<std::string> exemplars;
    std::string input_template;

    std::size_t k() const { return exemplars.size(); }

    bool operator==(const PromptBundle&) const = default;
};

// Throws PromptError when a required placeholder is missing or a block
// contains the delimiter line.
void validate(const PromptBundle& bundle);

// File layout:
//
//   role: critic
//   task: math
//   k: 3
//   delimiter: ###
//   category: Redundancy        (critics only, optional)
//   ---
//   <instruction>
//   ###
//   <exemplar 1>
//   ###
//   ...
//   ###
//   <input template>
//
// Blocks are separated by lines equal to the delimiter; the declared k must
// match the number of exemplar blocks.
PromptBundle parse_bundle(const std::string& text, const std::string& origin = "<memory>");
PromptBundle load_bundle(const std::string& path);
std::string save_bundle(const PromptBundle& bundle);

using Bindings = std::map<std::string, std::string>;

struct RenderOptions {
    // Estimated at four characters per token; exemplars are dropped from the
    // end until the prompt fits.
    std::optional<std::size_t> max_prompt_tokens;
};

struct RenderResult {
    std::string text;
    std::size_t exemplars_used = 0;
    std::size_t exemplars_dropped = 0;
};

// Instruction, then each exemplar followed by a delimiter line, then the
// filled input template. Substitution is single-pass, so bound values that
// themselves contain "{...}" are left untouched.
RenderResult render_prompt(const PromptBundle& bundle, const Bindings& bindings, const RenderOptions& options = {});
std::string render(const PromptBundle& bundle, const Bindings& bindings, const RenderOptions& options = {});

std::size_t estimate_tokens(const std::string& text);

}  // namespace maf::prompts
