#include <gtest/gtest.h>

#include <random>

#include "maf/feedback.hpp"

namespace maf::feedback {
namespace {

const std::string kPromptDir = MAF_PROMPT_DIR;

TEST(ParseFeedbackText, SingleOkLine) {
    auto e = parse_feedback_text("Step 1: looks good");
    ASSERT_EQ(e.size(), 1u);
    EXPECT_EQ(e[0].step_index, 0u);
    EXPECT_TRUE(e[0].ok);
}

TEST(ParseFeedbackText, CaseInsensitive) {
    auto e = parse_feedback_text("Step 1: Looks Good\nStep 2: missing unit conversion");
    ASSERT_EQ(e.size(), 2u);
    EXPECT_TRUE(e[0].ok);
    EXPECT_FALSE(e[1].ok);
    EXPECT_EQ(e[1].step_index, 1u);
    EXPECT_EQ(e[1].comment, "missing unit conversion");
}

TEST(ParseFeedbackText, FlexibleSpacing) {
    auto e = parse_feedback_text("  STEP3 :fine?\nstep  10:   x");
    ASSERT_EQ(e.size(), 2u);
    EXPECT_EQ(e[0].step_index, 2u);
    EXPECT_EQ(e[0].comment, "fine?");
    EXPECT_EQ(e[1].step_index, 9u);
    EXPECT_EQ(e[1].comment, "x");
}

// Hand-parsed five-line critique.
TEST(ParseFeedbackText, ContinuationLines) {
    const char* raw =
        "Here is my review.\n"
        "Step 1: the variable `a`\n"
        "is never explained.\n"
        "Step 2: looks good\n"
        "\n"
        "Step 4: adds the wrong totals; should be 12.";
    auto e = parse_feedback_text(raw);
    std::vector<StepFeedback> expected{
        {0, false, "Here is my review. the variable `a` is never explained."},
        {1, true, "looks good"},
        {3, false, "adds the wrong totals; should be 12."},
    };
    EXPECT_EQ(e, expected);
}

TEST(ParseFeedbackText, ContinuationCanMakeAnEntryOk) {
    auto e = parse_feedback_text("Step 1: hmm\nactually it looks good");
    ASSERT_EQ(e.size(), 1u);
    EXPECT_TRUE(e[0].ok);
}

TEST(ParseFeedbackText, NoStructureGivesEmptyList) {
    EXPECT_TRUE(parse_feedback_text("The whole thing is wrong.").empty());
    EXPECT_TRUE(parse_feedback_text("").empty());
}

TEST(ParseFeedbackText, TotalOnRandomInput) {
    std::mt19937 rng(3);
    const std::vector<std::string> pieces{"Step ", "step", "1", "2", ":", " ", "\n", "looks good", "bad", "x", "\r"};
    std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
    for (int trial = 0; trial < 2000; ++trial) {
        std::string raw;
        int n = trial % 30;
        for (int i = 0; i < n; ++i) raw += pieces[pick(rng)];
        auto entries = parse_feedback_text(raw);
        // Every nonblank line lands in exactly one comment.
        std::size_t words_in = 0, words_out = 0;
        for (char c : raw) words_in += (c == 'x');
        for (const auto& e : entries) {
            for (char c : e.comment) words_out += (c == 'x');
        }
        if (!entries.empty()) EXPECT_EQ(words_in, words_out) << raw;
    }
}

TEST(FeedbackFromText, UnparsedOutputIsKeptWhole) {
    auto fb = feedback_from_text("crit", ErrorCategory::Commonsense, "This is all wrong.", 3);
    EXPECT_TRUE(fb.unparsed);
    ASSERT_EQ(fb.step_feedback.size(), 1u);
    EXPECT_EQ(fb.step_feedback[0].step_index, 0u);
    EXPECT_FALSE(fb.step_feedback[0].ok);
    EXPECT_EQ(fb.step_feedback[0].comment, "This is all wrong.");
    EXPECT_TRUE(fb.revision_required);
}

TEST(FeedbackFromText, StepIndicesAreClamped) {
    auto fb = feedback_from_text("crit", ErrorCategory::Commonsense, "Step 9: off the end", 3);
    EXPECT_EQ(fb.step_feedback[0].step_index, 2u);
    EXPECT_FALSE(fb.unparsed);
}

Feedback mixed() {
    return make_feedback("m", ErrorCategory::Redundancy,
                         {{0, true, "looks good"}, {1, false, "b"}, {2, true, "looks good"}, {3, false, "d"}}, "raw");
}

TEST(SummarizeFeedback, AllOk) {
    auto fb = make_feedback("m", ErrorCategory::Redundancy, {{0, true, "looks good"}}, "Step 1: looks good");
    auto s = summarize_feedback(fb);
    EXPECT_TRUE(s.step_feedback.empty());
    EXPECT_FALSE(s.revision_required);
    EXPECT_EQ(s.raw_text, "");
}

TEST(SummarizeFeedback, KeepsOrder) {
    auto s = summarize_feedback(mixed());
    ASSERT_EQ(s.step_feedback.size(), 2u);
    EXPECT_EQ(s.step_feedback[0].comment, "b");
    EXPECT_EQ(s.step_feedback[1].comment, "d");
    EXPECT_TRUE(s.revision_required);
    EXPECT_EQ(s.raw_text, "Step 2: b\nStep 4: d");
    EXPECT_EQ(s.module_name, "m");
    EXPECT_EQ(s.category, ErrorCategory::Redundancy);
}

Feedback random_feedback(std::mt19937& rng) {
    static const std::vector<std::string> comments{"looks good", "LOOKS GOOD!", "wrong total", "rename x",
                                                   "this looks good to me", "missing step", ""};
    std::uniform_int_distribution<std::size_t> pick(0, comments.size() - 1);
    std::uniform_int_distribution<int> len(0, 8);
    std::vector<StepFeedback> steps;
    int n = len(rng);
    for (int i = 0; i < n; ++i) {
        std::string c = comments[pick(rng)];
        bool ok = c.find("ood") != std::string::npos || c.find("OOD") != std::string::npos;
        steps.push_back({static_cast<std::size_t>(rng() % 6), ok, c});
    }
    auto cat = all_error_categories()[rng() % kErrorCategoryCount];
    return make_feedback("mod", cat, steps, render_steps(steps));
}

TEST(SummarizeFeedback, Properties) {
    std::mt19937 rng(21);
    for (int trial = 0; trial < 1500; ++trial) {
        Feedback fb = random_feedback(rng);
        Feedback s = summarize_feedback(fb);
        for (const auto& e : s.step_feedback) {
            EXPECT_FALSE(e.ok);
            std::string lower;
            for (char c : e.comment) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            EXPECT_EQ(lower.find("looks good"), std::string::npos);
        }
        // Survivors are the not-ok entries, in their original order.
        std::vector<StepFeedback> expected;
        for (const auto& e : fb.step_feedback) {
            if (!e.ok) expected.push_back(e);
        }
        EXPECT_EQ(s.step_feedback, expected);
        EXPECT_EQ(s.revision_required, !expected.empty());
        EXPECT_EQ(summarize_feedback(s), s);
    }
}

TEST(CombineFeedbacks, SingleSection) {
    auto fb = summarize_feedback(mixed());
    EXPECT_EQ(combine_feedbacks({fb}), "### Redundancy Feedback\nStep 2: b\nStep 4: d");
}

TEST(CombineFeedbacks, OrderPreserved) {
    auto a = make_feedback("c", ErrorCategory::Commonsense, {{0, false, "x"}}, "");
    auto b = make_feedback("m", ErrorCategory::MissingStep, {{1, false, "y"}}, "");
    std::string text = combine_feedbacks({a, b});
    auto pa = text.find("### Commonsense Feedback");
    auto pb = text.find("### MissingStep Feedback");
    ASSERT_NE(pa, std::string::npos);
    ASSERT_NE(pb, std::string::npos);
    EXPECT_LT(pa, pb);
    EXPECT_EQ(text.find("### Commonsense Feedback", pa + 1), std::string::npos);
    EXPECT_EQ(text.find("Redundancy"), std::string::npos);
}

TEST(CombineFeedbacks, EmptyListIsAnError) { EXPECT_THROW(combine_feedbacks({}), InputError); }

TEST(DefaultRoster, Math) {
    auto r = default_roster(Task::Math);
    ASSERT_EQ(r.size(), 5u);
    EXPECT_EQ(r[0].category, ErrorCategory::ProgramSyntax);
    EXPECT_EQ(r[0].backend, Backend::Interpreter);
    EXPECT_EQ(r[0].mode, RefineMode::Eager);
    EXPECT_EQ(r[1].category, ErrorCategory::VariableNaming);
    EXPECT_EQ(r[1].backend, Backend::LmPrompt);
    EXPECT_EQ(r[1].mode, RefineMode::Eager);
    std::vector<ErrorCategory> lazy;
    for (std::size_t i = 2; i < r.size(); ++i) {
        EXPECT_EQ(r[i].mode, RefineMode::Lazy);
        lazy.push_back(r[i].category);
    }
    EXPECT_EQ(lazy, (std::vector{ErrorCategory::Redundancy, ErrorCategory::Commonsense, ErrorCategory::MissingStep}));
}

TEST(DefaultRoster, LogicAndQa) {
    std::vector<ErrorCategory> logic, qa;
    for (const auto& s : default_roster(Task::Logic)) logic.push_back(s.category);
    for (const auto& s : default_roster(Task::Qa)) qa.push_back(s.category);
    EXPECT_EQ(logic, (std::vector{ErrorCategory::Redundancy, ErrorCategory::Repetition, ErrorCategory::Hallucination}));
    EXPECT_EQ(qa, (std::vector{ErrorCategory::Redundancy, ErrorCategory::Factuality, ErrorCategory::Commonsense,
                               ErrorCategory::MissingStep}));
}

RegistryOptions options_for(Task task) {
    RegistryOptions o;
    o.prompt_dir = kPromptDir;
    o.task = task;
    return o;
}

TEST(ModuleRegistry, BuildsEveryDefaultRoster) {
    for (Task task : {Task::Math, Task::Logic, Task::Qa}) {
        ModuleRegistry reg(default_roster(task), options_for(task));
        std::vector<std::string> expected;
        for (const auto& s : default_roster(task)) expected.push_back(s.name);
        EXPECT_EQ(reg.names(), expected);
        EXPECT_EQ(reg.specs(), default_roster(task));
    }
}

TEST(ModuleRegistry, RejectsBadSpecs) {
    auto roster = default_roster(Task::Math);
    roster[1].prompt_path = "math/does_not_exist.txt";
    EXPECT_THROW(ModuleRegistry(roster, options_for(Task::Math)), ConfigError);

    // Critic prompt written for another category.
    roster = default_roster(Task::Math);
    roster[2].category = ErrorCategory::Grammar;
    EXPECT_THROW(ModuleRegistry(roster, options_for(Task::Math)), ConfigError);

    // Prompt for another task.
    roster = default_roster(Task::Qa);
    EXPECT_THROW(ModuleRegistry(roster, options_for(Task::Math)), ConfigError);

    // The interpreter only checks programs.
    EXPECT_THROW(ModuleRegistry({default_roster(Task::Math)[0]}, options_for(Task::Qa)), ConfigError);

    roster = default_roster(Task::Math);
    roster.push_back(roster[2]);
    EXPECT_THROW(ModuleRegistry(roster, options_for(Task::Math)), ConfigError);
}

TEST(ModuleRegistry, SelectKeepsRegistryOrder) {
    ModuleRegistry reg(default_roster(Task::Math), options_for(Task::Math));
    auto sub = reg.select({"missing_step", "syntax"});
    EXPECT_EQ(sub.names(), (std::vector<std::string>{"syntax", "missing_step"}));
    EXPECT_THROW(reg.select({"foo"}), ConfigError);
    try {
        reg.at("foo");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("variable_naming"), std::string::npos);
    }
}

ProblemRecord problem() {
    ProblemRecord p;
    p.id = "p1";
    p.task = Task::Math;
    p.question = "Tom has 3 apples and buys 4 more. How many apples?";
    p.gold_answer = "7";
    return p;
}

TEST(GenerateFeedback, SyntaxModuleOnCleanProgram) {
    ModuleRegistry reg(default_roster(Task::Math), options_for(Task::Math));
    auto s = segment_solution("x = 1\nprint(x)", SolutionKind::Program);
    FeedbackContext ctx;
    auto fb = generate_feedback(reg.at("syntax"), s, problem(), ctx);
    EXPECT_FALSE(fb.revision_required);
    EXPECT_EQ(fb.category, ErrorCategory::ProgramSyntax);
    EXPECT_EQ(fb.module_name, "syntax");
}

TEST(GenerateFeedback, LmCriticPromptAndParse) {
    ModuleRegistry reg(default_roster(Task::Math), options_for(Task::Math));
    lm::ScriptedClient client({}, "Step 1: looks good\nStep 2: variable `a` is unclear");
    FeedbackContext ctx{&client, "m", "looks good"};
    auto s = segment_solution("apples = 3\na = apples + 4\nprint(a)", SolutionKind::Program);
    auto fb = generate_feedback(reg.at("variable_naming"), s, problem(), ctx);
    EXPECT_EQ(fb.category, ErrorCategory::VariableNaming);
    ASSERT_EQ(fb.step_feedback.size(), 2u);
    EXPECT_TRUE(fb.revision_required);

    ASSERT_EQ(client.call_count(), 1u);
    auto req = client.call_log()[0];
    std::string prompt = req.flattened();
    const auto& critic = dynamic_cast<const LmCriticModule&>(reg.at("variable_naming"));
    EXPECT_NE(prompt.find(critic.bundle().instruction), std::string::npos);
    for (const auto& ex : critic.bundle().exemplars) EXPECT_NE(prompt.find(ex), std::string::npos);
    EXPECT_NE(prompt.find(problem().question), std::string::npos);
    EXPECT_NE(prompt.find(s.raw_text()), std::string::npos);
    EXPECT_EQ(req.stage(), lm::Stage::Feedback);
    EXPECT_EQ(req.max_tokens(), 600);
    EXPECT_EQ(req.model_name(), "m");
}

TEST(GenerateFeedback, CategoryFidelityAcrossModules) {
    lm::ScriptedClient client({}, "no structure at all");
    FeedbackContext ctx{&client, "", "looks good"};
    auto s = segment_solution("x = 1\nprint(x)  # 1 + 1 = 2", SolutionKind::Program);
    std::vector<FeedbackModuleSpec> roster = default_roster(Task::Math);
    roster.push_back(arithmetic_spec());
    ModuleRegistry reg(roster, options_for(Task::Math));
    for (const auto& m : reg.modules()) {
        auto fb = generate_feedback(*m, s, problem(), ctx);
        EXPECT_EQ(fb.category, m->spec().category) << m->name();
        EXPECT_EQ(fb.module_name, m->name());
    }
}

TEST(GenerateFeedback, ArithmeticModuleFlagsBadClaim) {
    ModuleRegistry reg({arithmetic_spec()}, options_for(Task::Qa));
    auto s = segment_solution("Tom has 2 + 3 = 6 apples.", SolutionKind::ChainOfThought);
    auto fb = generate_feedback(reg.at("arithmetic"), s, problem(), FeedbackContext{});
    EXPECT_TRUE(fb.revision_required);
    EXPECT_NE(fb.step_feedback[0].comment.find("5"), std::string::npos);
}

TEST(GenerateFeedback, EmptySolutionRejected) {
    ModuleRegistry reg({arithmetic_spec()}, options_for(Task::Qa));
    EXPECT_THROW(generate_feedback(reg.at("arithmetic"), Solution{}, problem(), FeedbackContext{}), InputError);
}

}  // namespace
}  // namespace maf::feedback
