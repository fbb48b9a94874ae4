#pragma once

// The shipped desk scenario: default pronoun corpus, base model trained for
// 2000 SGD steps, 3SG/3PL instances split into train/held-out, 1000 neutral
// instances. Built once per test binary.

#include <string>
#include <vector>

#include "gradlab/corpus.hpp"
#include "gradlab/gradcore.hpp"
#include "gradlab/tinylm.hpp"

namespace desk {

inline constexpr std::size_t kCorpusSize = 20000;
inline constexpr std::uint64_t kDataSeed = 1;

struct Scenario {
    std::vector<gradlab::FeatureClassSpec> specs;
    std::vector<gradlab::Sentence> corpus;
    gradlab::BaseTrainResult base;
    std::vector<gradlab::PredictionInstance> train;
    std::vector<gradlab::PredictionInstance> held_out;
    std::vector<gradlab::NeutralInstance> neutral;

    const gradlab::FeatureClassSpec& spec(const std::string& id) const {
        for (const auto& s : specs) {
            if (s.id == id) {
                return s;
            }
        }
        throw std::out_of_range(id);
    }

    std::vector<gradlab::PredictionInstance> instances(const std::string& a, const std::string& b) const {
        return gradlab::make_instances(corpus, spec(a), spec(b), 2500, kDataSeed, specs).instances;
    }
};

inline const Scenario& scenario() {
    static const Scenario s = [] {
        Scenario out;
        out.specs = gradlab::default_pronoun_feature();
        out.corpus = gradlab::generate_corpus(gradlab::default_pronoun_grammar(), kCorpusSize);
        const auto vocab = gradlab::build_vocab(out.corpus);
        out.base = gradlab::train_base(gradlab::init_params(gradlab::ModelConfig{}, vocab), out.corpus,
                                       gradlab::BaseTrainConfig{});
        const auto split = gradlab::split_train_val(out.instances("3SG", "3PL"), 0.1, kDataSeed);
        out.train = split.train;
        out.held_out = split.val;
        const std::vector<std::string> extra{"i", "we", "you"};
        out.neutral = gradlab::make_neutral(out.corpus, out.specs, extra, 1000, kDataSeed);
        return out;
    }();
    return s;
}

inline gradlab::GradiendTrainConfig default_gradiend_config() {
    gradlab::GradiendTrainConfig cfg;
    cfg.class_order = {"3SG", "3PL"};
    return cfg;
}

} // namespace desk
