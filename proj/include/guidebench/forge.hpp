#pragma once

// Builds four-option questions from open-ended QA pairs: weak models supply
// wrong answers as distractors, a rewriter and a reviewer turn them into a
// clean item, and the answer position is shuffled with a per-item seed. A
// ladder of graders then assigns difficulty.

#include "guidebench/dialogue.hpp"
#include "guidebench/domain.hpp"
#include "guidebench/model_gateway.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace guidebench::forge {

struct RawQaItem {
    std::string id;
    std::string question;
    std::string gold_answer;
    std::string source_dataset;
    Category category = Category::Knowledge;

    friend bool operator==(const RawQaItem&, const RawQaItem&) = default;
};

void to_json(nlohmann::json& j, const RawQaItem& r);
void from_json(const nlohmann::json& j, RawQaItem& r);

inline constexpr int kRequiredDistractors = 3;

struct ForgeConfig {
    std::vector<ModelSpec> distractor_models;
    DecodingParams sampling{0.7, 256, std::nullopt};
    int required_distractors = kRequiredDistractors;
    int max_attempts = 20;
    ModelSpec rewriter;
    ModelSpec reviewer;
    DecodingParams editing{0.0, 1024, std::nullopt};  // rewriter and reviewer
    std::uint64_t rng_seed = 0;
};

/// Throws ConfigError on violated invariants.
void validate(const ForgeConfig& cfg);

struct GraderLadder {
    std::vector<ModelSpec> graders;  // weakest first
};

struct Rejection {
    std::string item_id;
    std::string stage;  // input, distractors, rewrite, review, validate, error
    std::string reason;

    friend bool operator==(const Rejection&, const Rejection&) = default;
};

void to_json(nlohmann::json& j, const Rejection& r);
void from_json(const nlohmann::json& j, Rejection& r);

template <class T>
using Outcome = std::variant<T, Rejection>;

/// Case-folded, with whitespace and ASCII punctuation removed.
std::string normalize_answer(std::string_view s);
/// Equal as numbers when both parse as numbers, otherwise equal after normalization.
bool same_answer(std::string_view a, std::string_view b);

std::vector<ChatMessage> render_distractor_prompt(const RawQaItem& item);
std::vector<ChatMessage> render_rewrite_prompt(const RawQaItem& item, std::span<const std::string> distractors);
std::vector<ChatMessage> render_review_prompt(std::string_view stem, std::string_view correct,
                                              std::span<const std::string> wrong);

struct Rewrite {
    std::string stem;
    std::string correct;
    std::vector<std::string> wrong;
};

/// Expects STEM:, CORRECT: and three WRONG: lines (stem may continue on following lines).
/// Throws MalformedRewrite otherwise.
Rewrite parse_rewrite(std::string_view text);

struct Review {
    bool accept = false;
    std::string reason;
};

/// "VERDICT: accept|reject" plus "REASON: ..."; anything else is read as a rejection.
Review parse_review(std::string_view text);

/// Round-robin sampling over the weak-model pool until three distinct wrong answers
/// are collected or max_attempts samples are spent.
Outcome<std::vector<std::string>> collect_distractors(Gateway& gateway, const RawQaItem& item, const ForgeConfig& cfg);

/// Seed for an item's option shuffle.
std::uint64_t item_seed(std::uint64_t rng_seed, std::string_view item_id);

/// Uniform Fisher-Yates permutation of `options`; returns the new position of `gold`.
int shuffle_options(std::vector<std::string>& options, int gold, std::uint64_t seed);

/// Throws MalformedRewrite when the rewriter output cannot be parsed.
Outcome<McqQuestion> rewrite_and_review(Gateway& gateway, const RawQaItem& item,
                                        std::span<const std::string> distractors, const ForgeConfig& cfg);

/// 1-based index of the first grader whose answer is gold; graders.size() + 1 if none.
int classify_difficulty(Gateway& gateway, const McqQuestion& q, const GraderLadder& ladder,
                        const PromptTemplateSet& tpl, const DecodingParams& params = {});

struct ForgeResult {
    std::vector<McqQuestion> questions;   // input order
    std::vector<Rejection> rejections;    // input order
    nlohmann::json manifest;
};

/// Runs the whole pipeline; items are processed concurrently, results kept in input order.
ForgeResult forge_dataset(Gateway& gateway, std::span<const RawQaItem> items, const ForgeConfig& cfg,
                          const GraderLadder* ladder, const PromptTemplateSet& tpl, unsigned workers = 1);

}  // namespace guidebench::forge
