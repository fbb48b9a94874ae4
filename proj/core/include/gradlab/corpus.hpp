#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gradlab/io.hpp"

namespace gradlab {

using Sentence = std::vector<std::string>;

// One feature class: an id such as "3SG" and the lowercase words that realize it.
struct FeatureClassSpec {
    std::string id;
    std::vector<std::string> target_words;

    bool contains(std::string_view word) const;
};

// Throws ConfigError when ids repeat, a word list is empty, words contain
// whitespace or repeat, or two classes share a word.
void validate_feature(std::span<const FeatureClassSpec> specs);

// Sentence templates with `<slot>` markers. Expansion is deterministic in `seed`.
struct TemplateGrammar {
    std::vector<Sentence> templates;
    std::map<std::string, std::vector<std::string>> slot_fillers;
    std::uint64_t seed = 0;

    void validate() const;
};

// "<subj> runs ." -> {"<subj>", "runs", "."}
Sentence split_template(std::string_view text);
bool is_slot(std::string_view token);
bool is_punctuation(std::string_view token);
std::string to_lower(std::string_view text);

struct PredictionInstance {
    Sentence tokens;
    std::size_t target_pos = 0;
    std::string factual_word;
    std::string counterfactual_word;
    std::string class_id;
    std::string counter_class_id;

    friend bool operator==(const PredictionInstance&, const PredictionInstance&) = default;
};

struct NeutralInstance {
    Sentence tokens;
    std::size_t target_pos = 0;

    friend bool operator==(const NeutralInstance&, const NeutralInstance&) = default;
};

struct ClassMergeMap {
    std::map<std::string, std::string> mapping;

    // Checks keys against the declared ids and that at least two merged ids result.
    void validate(std::span<const FeatureClassSpec> declared) const;
};

// The five-class English pronoun paradigm: 1SG, 1PL, 2SGPL, 3SG, 3PL.
std::vector<FeatureClassSpec> default_pronoun_feature();

// Shipped desk corpus: subject pronouns with agreeing verbs plus pronoun-free
// sentences for neutral data.
TemplateGrammar default_pronoun_grammar(std::uint64_t seed = 7);

std::vector<Sentence> generate_corpus(const TemplateGrammar& grammar, std::size_t n);

struct InstanceSet {
    std::vector<PredictionInstance> instances;
    // Sentences that qualified for each class before the cap.
    std::map<std::string, std::size_t> matched;
    // Instances actually emitted per class (<= max_per_class).
    std::map<std::string, std::size_t> emitted;
};

// A sentence belongs to a class when it holds exactly one occurrence of that
// class's words and no word of the other class or of any class in `declared`.
InstanceSet make_instances(std::span<const Sentence> corpus, const FeatureClassSpec& class_a,
                           const FeatureClassSpec& class_b, std::size_t max_per_class, std::uint64_t seed,
                           std::span<const FeatureClassSpec> declared = {});

std::vector<NeutralInstance> make_neutral(std::span<const Sentence> corpus, std::span<const FeatureClassSpec> all_specs,
                                          std::span<const std::string> extra_excluded, std::size_t max_size,
                                          std::uint64_t seed);

std::vector<PredictionInstance> merge_classes(std::span<const PredictionInstance> instances,
                                              const ClassMergeMap& merge_map);

// Checks every PredictionInstance invariant against the declared classes.
void check_instance(const PredictionInstance& instance, std::span<const FeatureClassSpec> declared);

// JSON-lines codecs. Prediction lines carry tokens, target_pos, factual,
// counterfactual, class, counter_class; neutral lines carry tokens, target_pos.
std::string to_jsonl(std::span<const PredictionInstance> instances);
std::string to_jsonl(std::span<const NeutralInstance> instances);
std::vector<PredictionInstance> parse_prediction_jsonl(std::string_view text);
std::vector<NeutralInstance> parse_neutral_jsonl(std::string_view text);

json to_json(const FeatureClassSpec& spec);
FeatureClassSpec feature_class_from_json(const json& j);
json to_json(const TemplateGrammar& grammar);
TemplateGrammar grammar_from_json(const json& j);

} // namespace gradlab
