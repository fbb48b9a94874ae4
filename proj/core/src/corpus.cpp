#include "gradlab/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "gradlab/error.hpp"
#include "gradlab/rng.hpp"

namespace gradlab {

bool FeatureClassSpec::contains(std::string_view word) const {
    return std::find(target_words.begin(), target_words.end(), word) != target_words.end();
}

std::string to_lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return out;
}

bool is_slot(std::string_view token) {
    return token.size() >= 3 && token.front() == '<' && token.back() == '>';
}

bool is_punctuation(std::string_view token) {
    return !token.empty() &&
           std::all_of(token.begin(), token.end(), [](unsigned char ch) { return std::ispunct(ch) != 0; });
}

Sentence split_template(std::string_view text) {
    Sentence out;
    std::istringstream ss{std::string(text)};
    std::string token;
    while (ss >> token) {
        out.push_back(std::move(token));
    }
    return out;
}

void validate_feature(std::span<const FeatureClassSpec> specs) {
    std::set<std::string> ids;
    std::map<std::string, std::string> owner;
    for (const auto& spec : specs) {
        if (spec.id.empty()) {
            throw ConfigError("feature class with empty id");
        }
        if (!ids.insert(spec.id).second) {
            throw ConfigError("duplicate feature class id: " + spec.id);
        }
        if (spec.target_words.empty()) {
            throw ConfigError("feature class " + spec.id + " has no target words");
        }
        std::set<std::string> seen;
        for (const auto& word : spec.target_words) {
            if (word.empty() || std::any_of(word.begin(), word.end(),
                                            [](unsigned char ch) { return std::isspace(ch) != 0; })) {
                throw ConfigError("feature class " + spec.id + ": invalid target word '" + word + "'");
            }
            if (!seen.insert(word).second) {
                throw ConfigError("feature class " + spec.id + ": repeated target word '" + word + "'");
            }
            auto [it, inserted] = owner.emplace(word, spec.id);
            if (!inserted) {
                throw ConfigError("target word '" + word + "' is shared by classes " + it->second + " and " +
                                  spec.id);
            }
        }
    }
}

void TemplateGrammar::validate() const {
    if (templates.empty()) {
        throw ConfigError("grammar has no templates");
    }
    for (const auto& tmpl : templates) {
        if (tmpl.empty()) {
            throw ConfigError("grammar contains an empty template");
        }
        for (const auto& token : tmpl) {
            if (!is_slot(token)) {
                continue;
            }
            const std::string name = token.substr(1, token.size() - 2);
            auto it = slot_fillers.find(name);
            if (it == slot_fillers.end() || it->second.empty()) {
                throw ConfigError("grammar slot <" + name + "> has no fillers");
            }
        }
    }
}

std::vector<Sentence> generate_corpus(const TemplateGrammar& grammar, std::size_t n) {
    if (n == 0) {
        throw ConfigError("corpus size must be at least 1");
    }
    grammar.validate();
    SplitMix64 rng(grammar.seed);
    std::vector<Sentence> corpus;
    corpus.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        const Sentence& tmpl = grammar.templates[rng.uniform_index(grammar.templates.size())];
        Sentence sentence;
        sentence.reserve(tmpl.size());
        for (const auto& token : tmpl) {
            if (is_slot(token)) {
                const auto& fillers = grammar.slot_fillers.at(token.substr(1, token.size() - 2));
                sentence.push_back(to_lower(fillers[rng.uniform_index(fillers.size())]));
            } else {
                sentence.push_back(to_lower(token));
            }
        }
        corpus.push_back(std::move(sentence));
    }
    return corpus;
}

namespace {

struct Occurrences {
    std::size_t count = 0;
    std::size_t first_pos = 0;
};

Occurrences count_words(const Sentence& sentence, const FeatureClassSpec& spec) {
    Occurrences occ;
    for (std::size_t i = 0; i < sentence.size(); ++i) {
        if (spec.contains(to_lower(sentence[i]))) {
            if (occ.count == 0) {
                occ.first_pos = i;
            }
            ++occ.count;
        }
    }
    return occ;
}

bool contains_any(const Sentence& sentence, std::span<const FeatureClassSpec> specs, const std::string& skip_a,
                  const std::string& skip_b) {
    for (const auto& spec : specs) {
        if (spec.id == skip_a || spec.id == skip_b) {
            continue;
        }
        if (count_words(sentence, spec).count > 0) {
            return true;
        }
    }
    return false;
}

Sentence lowered(const Sentence& sentence) {
    Sentence out;
    out.reserve(sentence.size());
    for (const auto& token : sentence) {
        out.push_back(to_lower(token));
    }
    return out;
}

} // namespace

InstanceSet make_instances(std::span<const Sentence> corpus, const FeatureClassSpec& class_a,
                           const FeatureClassSpec& class_b, std::size_t max_per_class, std::uint64_t seed,
                           std::span<const FeatureClassSpec> declared) {
    if (class_a.id == class_b.id) {
        throw ConfigError("make_instances needs two different classes, got " + class_a.id + " twice");
    }
    if (max_per_class == 0) {
        throw ConfigError("max_per_class must be at least 1");
    }
    SplitMix64 rng(derive_seed(seed, streams::kCounterfactual));
    InstanceSet out;
    out.matched[class_a.id] = 0;
    out.matched[class_b.id] = 0;
    out.emitted[class_a.id] = 0;
    out.emitted[class_b.id] = 0;

    for (const auto& sentence : corpus) {
        const Occurrences a = count_words(sentence, class_a);
        const Occurrences b = count_words(sentence, class_b);
        const FeatureClassSpec* factual = nullptr;
        const FeatureClassSpec* counter = nullptr;
        std::size_t pos = 0;
        if (a.count == 1 && b.count == 0) {
            factual = &class_a;
            counter = &class_b;
            pos = a.first_pos;
        } else if (b.count == 1 && a.count == 0) {
            factual = &class_b;
            counter = &class_a;
            pos = b.first_pos;
        } else {
            continue;
        }
        if (contains_any(sentence, declared, class_a.id, class_b.id)) {
            continue;
        }
        ++out.matched[factual->id];
        if (out.emitted[factual->id] >= max_per_class) {
            continue;
        }
        PredictionInstance inst;
        inst.tokens = lowered(sentence);
        inst.target_pos = pos;
        inst.factual_word = inst.tokens[pos];
        inst.counterfactual_word = counter->target_words[rng.uniform_index(counter->target_words.size())];
        inst.class_id = factual->id;
        inst.counter_class_id = counter->id;
        out.instances.push_back(std::move(inst));
        ++out.emitted[factual->id];
    }
    for (const auto* spec : {&class_a, &class_b}) {
        if (out.matched[spec->id] == 0) {
            throw DataError("no sentences found for feature class " + spec->id);
        }
    }
    return out;
}

std::vector<NeutralInstance> make_neutral(std::span<const Sentence> corpus, std::span<const FeatureClassSpec> all_specs,
                                          std::span<const std::string> extra_excluded, std::size_t max_size,
                                          std::uint64_t seed) {
    if (max_size == 0) {
        throw ConfigError("neutral max_size must be at least 1");
    }
    std::set<std::string, std::less<>> excluded;
    for (const auto& spec : all_specs) {
        excluded.insert(spec.target_words.begin(), spec.target_words.end());
    }
    for (const auto& word : extra_excluded) {
        excluded.insert(to_lower(word));
    }
    SplitMix64 rng(derive_seed(seed, streams::kNeutral));
    std::vector<NeutralInstance> out;
    for (const auto& sentence : corpus) {
        if (out.size() >= max_size) {
            break;
        }
        Sentence tokens = lowered(sentence);
        const bool clean =
            std::none_of(tokens.begin(), tokens.end(), [&](const std::string& t) { return excluded.contains(t); });
        if (!clean) {
            continue;
        }
        std::vector<std::size_t> candidates;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (!is_punctuation(tokens[i])) {
                candidates.push_back(i);
            }
        }
        if (candidates.empty()) {
            continue;
        }
        NeutralInstance inst;
        inst.target_pos = candidates[rng.uniform_index(candidates.size())];
        inst.tokens = std::move(tokens);
        out.push_back(std::move(inst));
    }
    if (out.empty()) {
        throw DataError("no feature-neutral sentences in corpus");
    }
    return out;
}

void ClassMergeMap::validate(std::span<const FeatureClassSpec> declared) const {
    std::set<std::string> merged;
    for (const auto& [from, to] : mapping) {
        const bool known = std::any_of(declared.begin(), declared.end(),
                                       [&](const FeatureClassSpec& s) { return s.id == from; });
        if (!known) {
            throw ConfigError("merge map key is not a declared class: " + from);
        }
        if (to.empty()) {
            throw ConfigError("merge map entry for " + from + " has an empty target id");
        }
        merged.insert(to);
    }
    if (merged.size() < 2) {
        throw ConfigError("merge map must produce at least two merged classes");
    }
}

std::vector<PredictionInstance> merge_classes(std::span<const PredictionInstance> instances,
                                              const ClassMergeMap& merge_map) {
    std::vector<PredictionInstance> out;
    out.reserve(instances.size());
    for (const auto& inst : instances) {
        auto a = merge_map.mapping.find(inst.class_id);
        auto b = merge_map.mapping.find(inst.counter_class_id);
        if (a == merge_map.mapping.end()) {
            throw ConfigError("class not covered by merge map: " + inst.class_id);
        }
        if (b == merge_map.mapping.end()) {
            throw ConfigError("class not covered by merge map: " + inst.counter_class_id);
        }
        if (a->second == b->second) {
            continue;
        }
        PredictionInstance merged = inst;
        merged.class_id = a->second;
        merged.counter_class_id = b->second;
        out.push_back(std::move(merged));
    }
    return out;
}

void check_instance(const PredictionInstance& inst, std::span<const FeatureClassSpec> declared) {
    auto find = [&](const std::string& id) -> const FeatureClassSpec* {
        for (const auto& s : declared) {
            if (s.id == id) {
                return &s;
            }
        }
        return nullptr;
    };
    if (inst.target_pos >= inst.tokens.size()) {
        throw DataError("target_pos out of range");
    }
    if (inst.tokens[inst.target_pos] != inst.factual_word) {
        throw DataError("token at target_pos is not the factual word");
    }
    if (inst.class_id == inst.counter_class_id) {
        throw DataError("class_id equals counter_class_id");
    }
    const auto* cls = find(inst.class_id);
    const auto* counter = find(inst.counter_class_id);
    if (cls == nullptr || counter == nullptr) {
        throw DataError("instance references an undeclared class");
    }
    if (!cls->contains(inst.factual_word) || !counter->contains(inst.counterfactual_word)) {
        throw DataError("factual/counterfactual word does not belong to its class");
    }
    for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
        if (i == inst.target_pos) {
            continue;
        }
        for (const auto& s : declared) {
            if (s.contains(inst.tokens[i])) {
                throw DataError("instance contains a second target word: " + inst.tokens[i]);
            }
        }
    }
}

std::string to_jsonl(std::span<const PredictionInstance> instances) {
    std::string out;
    for (const auto& inst : instances) {
        json j;
        j["tokens"] = inst.tokens;
        j["target_pos"] = inst.target_pos;
        j["factual"] = inst.factual_word;
        j["counterfactual"] = inst.counterfactual_word;
        j["class"] = inst.class_id;
        j["counter_class"] = inst.counter_class_id;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::string to_jsonl(std::span<const NeutralInstance> instances) {
    std::string out;
    for (const auto& inst : instances) {
        json j;
        j["tokens"] = inst.tokens;
        j["target_pos"] = inst.target_pos;
        out += j.dump();
        out += '\n';
    }
    return out;
}

namespace {

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0;
    while (!text.empty()) {
        const std::size_t end = text.find('\n');
        std::string_view line = text.substr(0, end);
        ++line_no;
        if (!line.empty()) {
            json j;
            try {
                j = json::parse(line);
            } catch (const json::parse_error& e) {
                throw IntegrityError("malformed JSON on line " + std::to_string(line_no) + ": " + e.what());
            }
            try {
                fn(j);
            } catch (const json::exception& e) {
                throw IntegrityError("bad record on line " + std::to_string(line_no) + ": " + e.what());
            }
        }
        if (end == std::string_view::npos) {
            break;
        }
        text.remove_prefix(end + 1);
    }
}

} // namespace

std::vector<PredictionInstance> parse_prediction_jsonl(std::string_view text) {
    std::vector<PredictionInstance> out;
    for_each_line(text, [&](const json& j) {
        PredictionInstance inst;
        inst.tokens = j.at("tokens").get<Sentence>();
        inst.target_pos = j.at("target_pos").get<std::size_t>();
        inst.factual_word = j.at("factual").get<std::string>();
        inst.counterfactual_word = j.at("counterfactual").get<std::string>();
        inst.class_id = j.at("class").get<std::string>();
        inst.counter_class_id = j.at("counter_class").get<std::string>();
        if (inst.target_pos >= inst.tokens.size()) {
            throw IntegrityError("target_pos out of range in instance file");
        }
        out.push_back(std::move(inst));
    });
    return out;
}

std::vector<NeutralInstance> parse_neutral_jsonl(std::string_view text) {
    std::vector<NeutralInstance> out;
    for_each_line(text, [&](const json& j) {
        NeutralInstance inst;
        inst.tokens = j.at("tokens").get<Sentence>();
        inst.target_pos = j.at("target_pos").get<std::size_t>();
        if (inst.target_pos >= inst.tokens.size()) {
            throw IntegrityError("target_pos out of range in neutral file");
        }
        out.push_back(std::move(inst));
    });
    return out;
}

json to_json(const FeatureClassSpec& spec) { return json{{"id", spec.id}, {"target_words", spec.target_words}}; }

FeatureClassSpec feature_class_from_json(const json& j) {
    reject_unknown_keys(j, {"id", "target_words"}, "feature.classes[]");
    FeatureClassSpec spec;
    try {
        spec.id = j.at("id").get<std::string>();
        for (const auto& w : j.at("target_words")) {
            spec.target_words.push_back(to_lower(w.get<std::string>()));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("feature class: ") + e.what());
    }
    return spec;
}

json to_json(const TemplateGrammar& grammar) {
    json templates = json::array();
    for (const auto& t : grammar.templates) {
        std::string joined;
        for (const auto& token : t) {
            if (!joined.empty()) {
                joined += ' ';
            }
            joined += token;
        }
        templates.push_back(joined);
    }
    return json{{"templates", templates}, {"slot_fillers", grammar.slot_fillers}, {"seed", grammar.seed}};
}

TemplateGrammar grammar_from_json(const json& j) {
    reject_unknown_keys(j, {"templates", "slot_fillers", "seed"}, "grammar");
    TemplateGrammar g;
    try {
        for (const auto& t : j.at("templates")) {
            g.templates.push_back(split_template(t.get<std::string>()));
        }
        g.slot_fillers = j.at("slot_fillers").get<std::map<std::string, std::vector<std::string>>>();
        if (j.contains("seed")) {
            g.seed = j.at("seed").get<std::uint64_t>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("grammar: ") + e.what());
    }
    g.validate();
    return g;
}

} // namespace gradlab
