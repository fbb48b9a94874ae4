#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gradlab/corpus.hpp"
#include "gradlab/evalkit.hpp"
#include "gradlab/gradcore.hpp"
#include "gradlab/tinylm.hpp"

namespace gradlab::cli {

struct CorpusSection {
    TemplateGrammar grammar; // resolved from `grammar`, `inline` or the built-in default
    std::size_t n = 20000;
};

struct FeatureSection {
    std::vector<FeatureClassSpec> classes;
    std::vector<std::string> pair{"3SG", "3PL"};
    std::optional<ClassMergeMap> merge_map;
    std::size_t max_per_class = 2500;
    std::size_t neutral_max = 1000;
    std::vector<std::string> extra_excluded{"i", "we", "you"};
    double val_fraction = 0.1;
    std::uint64_t seed = 1;
};

struct BaseSection {
    ModelConfig model;
    BaseTrainConfig train;
};

struct GradiendSection {
    GradiendTrainConfig train;
    SignalConfig signal;
    std::vector<TensorId> selection{TensorId::W1};
};

struct EvalSection {
    DecoderEvalConfig decoder;
    std::string target_class = "3SG";
    RewriteMode mode = RewriteMode::INCREASE;
};

struct CompareSection {
    std::size_t k = 1000;
    std::vector<std::string> runs;
    std::map<std::string, std::string> groups;
    std::map<std::string, std::string> labels;
};

struct PipelineConfig {
    std::filesystem::path config_dir;
    std::filesystem::path experiment_dir;
    CorpusSection corpus;
    FeatureSection feature;
    BaseSection base;
    GradiendSection gradiend;
    EvalSection eval;
    CompareSection compare;
};

// Throws ConfigError naming the offending key path.
PipelineConfig load_config(const std::filesystem::path& path, const std::optional<std::filesystem::path>& out_dir);
PipelineConfig parse_config(const json& j, const std::filesystem::path& config_dir);

// One line per accepted key: path, default and meaning.
std::string config_key_help();

} // namespace gradlab::cli
