#include "gradlab/config.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gradlab/error.hpp"
#include "gradlab/io.hpp"

namespace fs = std::filesystem;

namespace gradlab::cli {

namespace {

std::string join_path(const std::string& where, const std::string& key) { return where + "." + key; }

[[noreturn]] void bad(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

std::size_t get_count(const json& obj, const char* key, std::size_t fallback, const std::string& where) {
    if (!obj.contains(key)) {
        return fallback;
    }
    const auto& v = obj.at(key);
    if (!v.is_number_unsigned()) {
        bad(join_path(where, key), "expected a non-negative integer");
    }
    return v.get<std::size_t>();
}

double get_real(const json& obj, const char* key, double fallback, const std::string& where) {
    if (!obj.contains(key)) {
        return fallback;
    }
    const auto& v = obj.at(key);
    if (!v.is_number()) {
        bad(join_path(where, key), "expected a number");
    }
    return v.get<double>();
}

std::string get_string(const json& obj, const char* key, std::string fallback, const std::string& where) {
    if (!obj.contains(key)) {
        return fallback;
    }
    const auto& v = obj.at(key);
    if (!v.is_string()) {
        bad(join_path(where, key), "expected a string");
    }
    return v.get<std::string>();
}

std::vector<std::string> get_strings(const json& obj, const char* key, std::vector<std::string> fallback,
                                     const std::string& where) {
    if (!obj.contains(key)) {
        return fallback;
    }
    const auto& v = obj.at(key);
    if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); })) {
        bad(join_path(where, key), "expected a list of strings");
    }
    return v.get<std::vector<std::string>>();
}

std::map<std::string, std::string> get_string_map(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) {
        return {};
    }
    const auto& v = obj.at(key);
    if (!v.is_object() || !std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); })) {
        bad(join_path(where, key), "expected an object of strings");
    }
    return v.get<std::map<std::string, std::string>>();
}

const json& section(const json& root, const char* key) {
    static const json empty = json::object();
    if (!root.contains(key)) {
        return empty;
    }
    const auto& v = root.at(key);
    if (!v.is_object()) {
        bad(key, "expected an object");
    }
    return v;
}

// Wraps library validation so the message carries the section path.
template <typename F>
void within(const std::string& where, F&& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

json read_referenced_json(const fs::path& path, const std::string& where) {
    if (!fs::is_regular_file(path)) {
        bad(where, "referenced file does not exist: " + path.string());
    }
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        bad(where, path.string() + " is not valid JSON (" + e.what() + ")");
    }
}

CorpusSection parse_corpus(const json& root, const fs::path& config_dir) {
    const std::string where = "corpus";
    const json& j = section(root, "corpus");
    reject_unknown_keys(j, {"grammar", "inline", "n", "seed"}, where);
    CorpusSection out;
    if (j.contains("grammar") && j.contains("inline")) {
        bad(where, "give either grammar or inline, not both");
    }
    if (j.contains("grammar")) {
        const auto file = config_dir / get_string(j, "grammar", "", where);
        const json g = read_referenced_json(file, "corpus.grammar");
        within("corpus.grammar", [&] { out.grammar = grammar_from_json(g); });
    } else if (j.contains("inline")) {
        within("corpus.inline", [&] { out.grammar = grammar_from_json(j.at("inline")); });
    } else {
        out.grammar = default_pronoun_grammar();
    }
    if (j.contains("seed")) {
        out.grammar.seed = get_count(j, "seed", 0, where);
    }
    out.n = get_count(j, "n", out.n, where);
    if (out.n == 0) {
        bad("corpus.n", "must be at least 1");
    }
    within(where, [&] { out.grammar.validate(); });
    return out;
}

FeatureSection parse_feature(const json& root) {
    const std::string where = "feature";
    const json& j = section(root, "feature");
    reject_unknown_keys(j,
                        {"preset", "classes", "pair", "merge_map", "max_per_class", "neutral_max", "extra_excluded",
                         "val_fraction", "seed"},
                        where);
    FeatureSection out;
    if (j.contains("preset") && j.contains("classes")) {
        bad(where, "give either preset or classes, not both");
    }
    if (j.contains("classes")) {
        const auto& c = j.at("classes");
        if (!c.is_array()) {
            bad("feature.classes", "expected a list of class objects");
        }
        for (std::size_t i = 0; i < c.size(); ++i) {
            within("feature.classes[" + std::to_string(i) + "]",
                   [&] { out.classes.push_back(feature_class_from_json(c[i])); });
        }
    } else {
        const auto preset = get_string(j, "preset", "pronouns", where);
        if (preset != "pronouns") {
            bad("feature.preset", "unknown preset '" + preset + "' (known: pronouns)");
        }
        out.classes = default_pronoun_feature();
    }
    within("feature.classes", [&] { validate_feature(out.classes); });

    if (j.contains("merge_map")) {
        ClassMergeMap map{get_string_map(j, "merge_map", where)};
        within("feature.merge_map", [&] { map.validate(out.classes); });
        out.merge_map = std::move(map);
    }
    out.pair = get_strings(j, "pair", out.pair, where);
    if (out.pair.size() != 2 || out.pair[0] == out.pair[1]) {
        bad("feature.pair", "expected two distinct class ids");
    }
    for (const auto& id : out.pair) {
        bool known = false;
        if (out.merge_map) {
            for (const auto& [from, to] : out.merge_map->mapping) {
                known = known || to == id;
            }
        } else {
            for (const auto& c : out.classes) {
                known = known || c.id == id;
            }
        }
        if (!known) {
            bad("feature.pair", "class '" + id + "' is not declared");
        }
    }
    out.max_per_class = get_count(j, "max_per_class", out.max_per_class, where);
    out.neutral_max = get_count(j, "neutral_max", out.neutral_max, where);
    if (out.max_per_class == 0 || out.neutral_max == 0) {
        bad(where, "max_per_class and neutral_max must be at least 1");
    }
    out.extra_excluded = get_strings(j, "extra_excluded", out.extra_excluded, where);
    out.val_fraction = get_real(j, "val_fraction", out.val_fraction, where);
    if (!(out.val_fraction > 0.0 && out.val_fraction < 1.0)) {
        bad("feature.val_fraction", "must lie in (0, 1)");
    }
    out.seed = get_count(j, "seed", out.seed, where);
    return out;
}

BaseSection parse_base(const json& root) {
    const std::string where = "base_model";
    const json& j = section(root, "base_model");
    reject_unknown_keys(j,
                        {"d_embed", "context", "d_hidden", "objective", "init_seed", "steps", "batch", "lr", "seed",
                         "probe_size"},
                        where);
    BaseSection out;
    out.model.d_embed = get_count(j, "d_embed", out.model.d_embed, where);
    out.model.context = get_count(j, "context", out.model.context, where);
    out.model.d_hidden = get_count(j, "d_hidden", out.model.d_hidden, where);
    within("base_model.objective",
           [&] { out.model.objective = objective_from_string(get_string(j, "objective", "MLM", where)); });
    out.model.init_seed = get_count(j, "init_seed", out.model.init_seed, where);
    within(where, [&] { out.model.validate(); });
    out.train.steps = get_count(j, "steps", out.train.steps, where);
    out.train.batch = get_count(j, "batch", out.train.batch, where);
    out.train.lr = get_real(j, "lr", out.train.lr, where);
    out.train.seed = get_count(j, "seed", out.train.seed, where);
    out.train.probe_size = get_count(j, "probe_size", out.train.probe_size, where);
    if (out.train.steps == 0 || out.train.batch == 0 || out.train.probe_size == 0) {
        bad(where, "steps, batch and probe_size must be at least 1");
    }
    if (!(out.train.lr >= 0.0) || !std::isfinite(out.train.lr)) {
        bad("base_model.lr", "must be finite and non-negative");
    }
    return out;
}

GradiendSection parse_gradiend(const json& root, const FeatureSection& feature) {
    const std::string where = "gradiend";
    const json& j = section(root, "gradiend");
    reject_unknown_keys(j,
                        {"batch", "max_steps", "eval_steps", "lr", "lr_scale", "seeds", "pre_prune", "post_prune",
                         "val_fraction", "signal", "selection"},
                        where);
    GradiendSection out;
    auto& t = out.train;
    t.batch = get_count(j, "batch", t.batch, where);
    t.max_steps = get_count(j, "max_steps", t.max_steps, where);
    t.eval_steps = get_count(j, "eval_steps", t.eval_steps, where);
    t.lr = get_real(j, "lr", t.lr, where);
    t.lr_scale = get_real(j, "lr_scale", t.lr_scale, where);
    if (j.contains("seeds")) {
        const auto& s = j.at("seeds");
        if (!s.is_array() || !std::all_of(s.begin(), s.end(), [](const json& e) { return e.is_number_unsigned(); })) {
            bad("gradiend.seeds", "expected a list of non-negative integers");
        }
        t.seeds = s.get<std::vector<std::uint64_t>>();
    }
    if (j.contains("pre_prune") && !j.at("pre_prune").is_null()) {
        const json& p = j.at("pre_prune");
        reject_unknown_keys(p, {"n_samples", "topk"}, "gradiend.pre_prune");
        PrePruneConfig pre;
        pre.n_samples = get_count(p, "n_samples", pre.n_samples, "gradiend.pre_prune");
        pre.topk = get_real(p, "topk", pre.topk, "gradiend.pre_prune");
        t.pre_prune = pre;
    }
    if (j.contains("post_prune") && !j.at("post_prune").is_null()) {
        const json& p = j.at("post_prune");
        reject_unknown_keys(p, {"topk"}, "gradiend.post_prune");
        PostPruneConfig post;
        post.topk = get_real(p, "topk", post.topk, "gradiend.post_prune");
        t.post_prune = post;
    }
    t.val_fraction = get_real(j, "val_fraction", t.val_fraction, where);
    t.class_order = feature.pair;
    within(where, [&] { t.validate(); });

    if (j.contains("signal")) {
        const json& s = j.at("signal");
        reject_unknown_keys(s, {"source", "target"}, "gradiend.signal");
        within("gradiend.signal", [&] {
            out.signal.source = signal_from_string(get_string(s, "source", "FACTUAL", "gradiend.signal"));
            out.signal.target = signal_from_string(get_string(s, "target", "COUNTERFACTUAL", "gradiend.signal"));
            out.signal.validate();
        });
    }
    if (j.contains("selection")) {
        out.selection.clear();
        within("gradiend.selection", [&] {
            for (const auto& name : get_strings(j, "selection", {}, where)) {
                out.selection.push_back(tensor_from_name(name));
            }
            if (out.selection.empty()) {
                throw ConfigError("selection is empty");
            }
        });
    }
    return out;
}

EvalSection parse_eval(const json& root, const FeatureSection& feature) {
    const std::string where = "eval";
    const json& j = section(root, "eval");
    reject_unknown_keys(j, {"grid_lrs", "delta", "target_class", "mode"}, where);
    EvalSection out;
    if (j.contains("grid_lrs")) {
        const auto& g = j.at("grid_lrs");
        if (!g.is_array() || g.empty() || !std::all_of(g.begin(), g.end(), [](const json& e) { return e.is_number(); })) {
            bad("eval.grid_lrs", "expected a non-empty list of numbers");
        }
        out.decoder.grid_lrs = g.get<std::vector<double>>();
        for (double lr : out.decoder.grid_lrs) {
            if (!(lr >= 0.0) || !std::isfinite(lr)) {
                bad("eval.grid_lrs", "learning rates must be finite and non-negative");
            }
        }
    }
    out.decoder.delta = get_real(j, "delta", out.decoder.delta, where);
    if (!(out.decoder.delta >= 0.0 && out.decoder.delta <= 1.0)) {
        bad("eval.delta", "must lie in [0, 1]");
    }
    out.target_class = get_string(j, "target_class", feature.pair.front(), where);
    if (out.target_class != feature.pair[0] && out.target_class != feature.pair[1]) {
        bad("eval.target_class", "'" + out.target_class + "' is not one of feature.pair");
    }
    within("eval.mode", [&] { out.mode = rewrite_mode_from_string(get_string(j, "mode", "INCREASE", where)); });
    return out;
}

CompareSection parse_compare(const json& root) {
    const std::string where = "compare";
    const json& j = section(root, "compare");
    reject_unknown_keys(j, {"k", "runs", "groups", "labels"}, where);
    CompareSection out;
    out.k = get_count(j, "k", out.k, where);
    if (out.k == 0) {
        bad("compare.k", "must be at least 1");
    }
    out.runs = get_strings(j, "runs", {}, where);
    out.groups = get_string_map(j, "groups", where);
    out.labels = get_string_map(j, "labels", where);
    return out;
}

} // namespace

PipelineConfig parse_config(const json& j, const fs::path& config_dir) {
    if (!j.is_object()) {
        throw ConfigError("config: expected a JSON object at top level");
    }
    reject_unknown_keys(j, {"experiment_dir", "corpus", "feature", "base_model", "gradiend", "eval", "compare"},
                        "config");
    PipelineConfig out;
    out.config_dir = config_dir;
    out.experiment_dir = config_dir / get_string(j, "experiment_dir", "runs/demo", "config");
    out.corpus = parse_corpus(j, config_dir);
    out.feature = parse_feature(j);
    out.base = parse_base(j);
    out.gradiend = parse_gradiend(j, out.feature);
    out.eval = parse_eval(j, out.feature);
    out.compare = parse_compare(j);
    return out;
}

PipelineConfig load_config(const fs::path& path, const std::optional<fs::path>& out_dir) {
    if (!fs::is_regular_file(path)) {
        throw ConfigError("config file not found: " + path.string());
    }
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": malformed JSON (" + e.what() + ")");
    }
    PipelineConfig cfg = parse_config(j, fs::absolute(path).parent_path());
    if (out_dir) {
        cfg.experiment_dir = *out_dir;
    }
    return cfg;
}

std::string config_key_help() {
    struct Key {
        const char* path;
        const char* fallback;
        const char* meaning;
    };
    static const Key keys[] = {
        {"experiment_dir", "\"runs/demo\"", "output directory, relative to the config file (--out overrides)"},
        {"corpus.grammar", "(built-in)", "path to a grammar JSON file {templates, slot_fillers, seed}"},
        {"corpus.inline", "(built-in)", "grammar object given inline instead of a file"},
        {"corpus.n", "20000", "number of sentences to generate"},
        {"corpus.seed", "7", "grammar sampling seed"},
        {"feature.preset", "\"pronouns\"", "built-in feature classes 1SG, 1PL, 2SGPL, 3SG, 3PL"},
        {"feature.classes", "(preset)", "list of {id, target_words} instead of a preset"},
        {"feature.pair", "[\"3SG\", \"3PL\"]", "the two classes to contrast; the first maps to latent -1"},
        {"feature.merge_map", "(none)", "class id -> merged id; pair then names merged ids"},
        {"feature.max_per_class", "2500", "instance cap per class"},
        {"feature.neutral_max", "1000", "neutral instance cap"},
        {"feature.extra_excluded", "[\"i\", \"we\", \"you\"]", "further words barred from neutral data"},
        {"feature.val_fraction", "0.1", "held-out share per class written to val.jsonl"},
        {"feature.seed", "1", "seed for counterfactual draws, neutral targets and the split"},
        {"base_model.d_embed", "16", "embedding width"},
        {"base_model.context", "2", "context radius c"},
        {"base_model.d_hidden", "32", "hidden width"},
        {"base_model.objective", "\"MLM\"", "MLM or CLM"},
        {"base_model.init_seed", "42", "parameter init seed"},
        {"base_model.steps", "2000", "SGD steps"},
        {"base_model.batch", "16", "positions per step"},
        {"base_model.lr", "0.5", "SGD learning rate"},
        {"base_model.seed", "3", "position sampling and probe seed"},
        {"base_model.probe_size", "512", "probe positions for the loss report"},
        {"gradiend.batch", "8", "instances per Adam step"},
        {"gradiend.max_steps", "1000", "training steps per seed"},
        {"gradiend.eval_steps", "250", "steps between validation evaluations"},
        {"gradiend.lr", "1e-5", "learning rate"},
        {"gradiend.lr_scale", "1000", "Adam step size is lr * lr_scale"},
        {"gradiend.seeds", "[0, 1, 2]", "seeds tried; the best validation |r| wins"},
        {"gradiend.pre_prune", "null", "{n_samples: 16, topk: 0.01} or null"},
        {"gradiend.post_prune", "null", "{topk: 0.1} or null"},
        {"gradiend.val_fraction", "0.1", "validation share used for model selection"},
        {"gradiend.signal", "{\"source\": \"FACTUAL\", \"target\": \"COUNTERFACTUAL\"}", "FACTUAL, COUNTERFACTUAL or DIFF"},
        {"gradiend.selection", "[\"W1\"]", "base tensors (E, W1, b1, W2, b2) the gradients cover"},
        {"eval.grid_lrs", "[0.01, 0.05, 0.1, 0.5, 1, 2, 5, 10]", "decoder learning-rate grid"},
        {"eval.delta", "0.95", "minimum LMS as a fraction of the base LMS"},
        {"eval.target_class", "(first of feature.pair)", "class whose probability the rewrite raises"},
        {"eval.mode", "\"INCREASE\"", "INCREASE or DECREASE"},
        {"compare.k", "1000", "top-k coordinates per run"},
        {"compare.runs", "[]", "glob patterns of GRADIEND artifact directories, relative to the config file"},
        {"compare.groups", "{}", "run id -> group name for heatmap blocks"},
        {"compare.labels", "{}", "run id -> display label"},
    };
    std::ostringstream out;
    out << "Config keys (JSON, all optional):\n";
    for (const auto& k : keys) {
        out << "  " << k.path << " = " << k.fallback << "\n      " << k.meaning << "\n";
    }
    return out.str();
}

} // namespace gradlab::cli
