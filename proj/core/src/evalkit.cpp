#include "gradlab/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gradlab/error.hpp"
#include "gradlab/parallel.hpp"

namespace gradlab {

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw ShapeError("pearson: inputs differ in length");
    }
    if (x.size() < 2) {
        throw ShapeError("pearson: need at least two samples");
    }
    const double n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double syy = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw UndefinedCorrelationError("pearson: constant input");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

Histogram make_histogram(std::span<const double> values) {
    Histogram h;
    h.counts.assign(kHistogramBins, 0);
    for (double v : values) {
        const double t = (v + 1.0) / 2.0 * static_cast<double>(kHistogramBins);
        const auto bin = static_cast<std::ptrdiff_t>(std::floor(t));
        h.counts[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(bin, 0, kHistogramBins - 1))] += 1;
    }
    h.total = values.size();
    return h;
}

namespace {

void check_compatible(const GradiendModel& gm, const ModelParams& params) {
    gm.validate();
    if (!(ParamSelection(gm.selection.tensors(), params) == gm.selection)) {
        throw IncompatibleRunsError("GRADIEND parameter selection does not match the base model shapes");
    }
}

std::shared_ptr<const PruneMask> mask_for(const GradiendModel& gm) {
    if (gm.mask.size() == gm.selection.total_dim()) {
        return nullptr;
    }
    return std::make_shared<const PruneMask>(gm.mask);
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

} // namespace

EncoderReport evaluate_encoder(const GradiendModel& gm, const ModelParams& params,
                               const std::map<std::string, std::vector<PredictionInstance>>& class_instances,
                               std::span<const NeutralInstance> neutral) {
    check_compatible(gm, params);
    for (const auto& id : {gm.class_neg, gm.class_pos}) {
        auto it = class_instances.find(id);
        if (it == class_instances.end() || it->second.size() < 2) {
            throw DataError("encoder evaluation needs at least two instances of class " + id);
        }
    }
    const auto selection = std::make_shared<const ParamSelection>(gm.selection);
    const auto mask = mask_for(gm);

    EncoderReport report;
    std::vector<double> labels;
    std::vector<double> values;
    for (const auto& [cls, instances] : class_instances) {
        std::vector<double> encoded(instances.size());
        parallel_for(instances.size(), [&](std::size_t i) {
            const auto [src, tgt] = extract_pair(params, instances[i], gm.signal, selection, mask);
            encoded[i] = encode(gm, src.values);
        });
        report.mean_by_class[cls] = mean_of(encoded);
        report.histogram[cls] = make_histogram(encoded);
        if (cls == gm.class_neg || cls == gm.class_pos) {
            const double label = gm.pole(cls);
            for (double e : encoded) {
                labels.push_back(label);
                values.push_back(e);
            }
        }
        report.encoded[cls] = std::move(encoded);
    }
    report.correlation = pearson(labels, values);

    // Neutral positions only ever see the true token as label.
    std::vector<double> neutral_encoded(neutral.size());
    parallel_for(neutral.size(), [&](std::size_t i) {
        const auto g = token_gradient(params, neutral[i].tokens, neutral[i].target_pos, selection, mask);
        neutral_encoded[i] = encode(gm, g.values);
    });
    report.neutral_mean = mean_of(neutral_encoded);
    double var = 0.0;
    for (double e : neutral_encoded) {
        var += (e - report.neutral_mean) * (e - report.neutral_mean);
    }
    report.neutral_std = neutral_encoded.empty() ? 0.0 : std::sqrt(var / static_cast<double>(neutral_encoded.size()));
    report.histogram["neutral"] = make_histogram(neutral_encoded);
    report.encoded["neutral"] = std::move(neutral_encoded);
    return report;
}

const DecoderGridEntry* DecoderReport::selected_entry() const {
    if (!selected_lr) {
        return nullptr;
    }
    for (const auto& e : grid) {
        if (e.lr == *selected_lr) {
            return &e;
        }
    }
    return nullptr;
}

int rewrite_direction(const GradiendModel& gm, const std::string& target_class) {
    const double own = gm.pole(target_class);
    // The counterfactual signal of a class-A instance is the loss gradient of
    // the opposite class's word, so the target's words live at the other pole.
    const double h = gm.signal.target == Signal::COUNTERFACTUAL ? -own : own;
    return h < 0.0 ? -1 : 1;
}

ModelParams apply_decoded_update(const ModelParams& params, const GradiendModel& gm, double h, double lr) {
    check_compatible(gm, params);
    ModelParams out = params;
    const auto delta = decode(gm, h);
    for (std::size_t i = 0; i < delta.size(); ++i) {
        const auto loc = gm.selection.locate(gm.mask.kept[i]);
        out[loc.tensor].data[loc.index] -= lr * delta[i];
    }
    return out;
}

double class_probability(const ModelParams& params, std::span<const PredictionInstance> instances,
                         const FeatureClassSpec& words) {
    if (instances.empty()) {
        throw DataError("class probability over an empty instance set");
    }
    std::vector<TokenId> ids;
    for (const auto& w : words.target_words) {
        if (auto id = params.vocab.find(w)) {
            ids.push_back(*id);
        }
    }
    std::vector<double> per_instance(instances.size());
    parallel_for(instances.size(), [&](std::size_t i) {
        const auto tokens = params.vocab.encode(instances[i].tokens);
        const auto p = forward_probs(params, make_context(params.config, tokens, instances[i].target_pos));
        double mass = 0.0;
        for (TokenId id : ids) {
            mass += p[id];
        }
        per_instance[i] = mass;
    });
    return mean_of(per_instance);
}

std::map<std::string, FeatureClassSpec> class_words(std::span<const PredictionInstance> instances) {
    std::map<std::string, FeatureClassSpec> out;
    auto add = [&](const std::string& cls, const std::string& word) {
        auto& spec = out[cls];
        spec.id = cls;
        if (!spec.contains(word)) {
            spec.target_words.push_back(word);
        }
    };
    for (const auto& inst : instances) {
        add(inst.class_id, inst.factual_word);
        add(inst.counter_class_id, inst.counterfactual_word);
    }
    return out;
}

DecoderReport evaluate_decoder(const GradiendModel& gm, const ModelParams& params,
                               std::span<const PredictionInstance> held_out, std::span<const NeutralInstance> neutral,
                               const DecoderEvalConfig& config, const std::string& target_class) {
    if (config.grid_lrs.empty()) {
        throw ConfigError("decoder evaluation grid is empty");
    }
    for (double lr : config.grid_lrs) {
        if (!(lr >= 0.0) || !std::isfinite(lr)) {
            throw ConfigError("decoder grid learning rates must be finite and non-negative");
        }
    }
    check_compatible(gm, params);
    const std::string other_class = target_class == gm.class_neg ? gm.class_pos : gm.class_neg;
    gm.pole(target_class); // throws for a foreign class

    const auto words = class_words(held_out);
    const auto target_words = words.find(target_class);
    const auto other_words = words.find(other_class);
    if (target_words == words.end() || other_words == words.end()) {
        throw DataError("held-out instances do not cover classes " + target_class + " and " + other_class);
    }

    DecoderReport report;
    report.target_class = target_class;
    report.lms_threshold = config.delta;
    report.direction = rewrite_direction(gm, target_class);
    report.base_target_prob = class_probability(params, held_out, target_words->second);
    report.base_other_prob = class_probability(params, held_out, other_words->second);
    report.base_lms = lms(params, neutral);

    report.grid.resize(config.grid_lrs.size());
    for (std::size_t i = 0; i < config.grid_lrs.size(); ++i) {
        const double lr = config.grid_lrs[i];
        const ModelParams shifted = apply_decoded_update(params, gm, report.direction, lr);
        DecoderGridEntry& e = report.grid[i];
        e.lr = lr;
        e.direction = report.direction;
        e.target_prob = class_probability(shifted, held_out, target_words->second);
        e.other_prob = class_probability(shifted, held_out, other_words->second);
        e.lms = lms(shifted, neutral);
    }
    for (const auto& e : report.grid) {
        const bool keeps_lm = e.lms >= config.delta * report.base_lms;
        const bool improves = e.target_prob > report.base_target_prob;
        if (keeps_lm && improves && (!report.selected_lr || e.lr > *report.selected_lr)) {
            report.selected_lr = e.lr;
        }
    }
    return report;
}

std::string_view to_string(RewriteMode mode) { return mode == RewriteMode::INCREASE ? "INCREASE" : "DECREASE"; }

RewriteMode rewrite_mode_from_string(std::string_view name) {
    if (name == "INCREASE") {
        return RewriteMode::INCREASE;
    }
    if (name == "DECREASE") {
        return RewriteMode::DECREASE;
    }
    throw ConfigError("unknown rewrite mode: " + std::string(name));
}

ModelParams rewrite(const ModelParams& params, const GradiendModel& gm, const DecoderReport& report, RewriteMode mode) {
    if (!report.selected_lr) {
        throw NoViableRewriteError("decoder evaluation selected no learning rate for class " + report.target_class);
    }
    if (rewrite_direction(gm, report.target_class) != report.direction) {
        throw ConfigError("decoder report direction does not match this GRADIEND model");
    }
    const double h = mode == RewriteMode::INCREASE ? report.direction : -report.direction;
    return apply_decoded_update(params, gm, h, *report.selected_lr);
}

json to_json(const Histogram& histogram) {
    return json{{"bins", kHistogramBins}, {"range", {-1.0, 1.0}}, {"counts", histogram.counts}, {"total", histogram.total}};
}

json to_json(const EncoderReport& report) {
    json hist = json::object();
    for (const auto& [cls, h] : report.histogram) {
        hist[cls] = to_json(h);
    }
    return json{{"correlation", report.correlation},
                {"mean_by_feature_class", report.mean_by_class},
                {"neutral_mean", report.neutral_mean},
                {"neutral_std", report.neutral_std},
                {"histogram", hist}};
}

json to_json(const DecoderReport& report) {
    json grid = json::array();
    for (const auto& e : report.grid) {
        grid.push_back({{"lr", e.lr},
                        {"direction", e.direction},
                        {"target_prob", e.target_prob},
                        {"other_prob", e.other_prob},
                        {"lms", e.lms}});
    }
    return json{{"grid", grid},
                {"base_target_prob", report.base_target_prob},
                {"base_other_prob", report.base_other_prob},
                {"base_lms", report.base_lms},
                {"selected_lr", report.selected_lr ? json(*report.selected_lr) : json(nullptr)},
                {"target_class", report.target_class},
                {"lms_threshold", report.lms_threshold},
                {"direction", report.direction}};
}

DecoderReport decoder_report_from_json(const json& j) {
    DecoderReport r;
    try {
        for (const auto& e : j.at("grid")) {
            r.grid.push_back({e.at("lr").get<double>(), e.at("direction").get<int>(), e.at("target_prob").get<double>(),
                              e.at("other_prob").get<double>(), e.at("lms").get<double>()});
        }
        r.base_target_prob = j.at("base_target_prob").get<double>();
        r.base_other_prob = j.at("base_other_prob").get<double>();
        r.base_lms = j.at("base_lms").get<double>();
        if (!j.at("selected_lr").is_null()) {
            r.selected_lr = j.at("selected_lr").get<double>();
        }
        r.target_class = j.at("target_class").get<std::string>();
        r.lms_threshold = j.at("lms_threshold").get<double>();
        r.direction = j.at("direction").get<int>();
    } catch (const json::exception& e) {
        throw IntegrityError(std::string("decoder report: ") + e.what());
    }
    return r;
}

} // namespace gradlab
