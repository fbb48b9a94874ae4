#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradlab/gradcore.hpp"

namespace gradlab {

// Sample Pearson correlation. Throws UndefinedCorrelationError for constant
// input and ShapeError for mismatched or too-short input.
double pearson(std::span<const double> x, std::span<const double> y);

inline constexpr std::size_t kHistogramBins = 40;

struct Histogram {
    std::vector<std::size_t> counts; // kHistogramBins uniform bins over [-1, 1]
    std::size_t total = 0;
};

Histogram make_histogram(std::span<const double> values);

struct EncoderReport {
    double correlation = 0.0;
    std::map<std::string, double> mean_by_class;
    double neutral_mean = 0.0;
    double neutral_std = 0.0;
    // Keyed by class id plus "neutral".
    std::map<std::string, Histogram> histogram;
    std::map<std::string, std::vector<double>> encoded;
};

EncoderReport evaluate_encoder(const GradiendModel& gm, const ModelParams& params,
                               const std::map<std::string, std::vector<PredictionInstance>>& class_instances,
                               std::span<const NeutralInstance> neutral);

struct DecoderGridEntry {
    double lr = 0.0;
    int direction = 1;
    double target_prob = 0.0;
    double other_prob = 0.0;
    double lms = 0.0;
};

struct DecoderReport {
    std::vector<DecoderGridEntry> grid;
    double base_target_prob = 0.0;
    double base_other_prob = 0.0;
    double base_lms = 0.0;
    std::optional<double> selected_lr;
    std::string target_class;
    double lms_threshold = 0.95;
    // Latent value fed to the decoder for this target class.
    int direction = 1;

    const DecoderGridEntry* selected_entry() const;
};

struct DecoderEvalConfig {
    std::vector<double> grid_lrs{0.01, 0.05, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0};
    double delta = 0.95;
};

// Latent pole whose decoded signal corresponds to the target class's labels:
// the target's own pole when the decoder reproduces factual or diff gradients,
// the opposite pole when it reproduces counterfactual gradients.
int rewrite_direction(const GradiendModel& gm, const std::string& target_class);

// theta' = theta - lr * decode(h), scattered through selection and mask.
ModelParams apply_decoded_update(const ModelParams& params, const GradiendModel& gm, double h, double lr);

// Mean over instances of the summed probability of a class's words at the target position.
double class_probability(const ModelParams& params, std::span<const PredictionInstance> instances,
                         const FeatureClassSpec& words);

// Class word sets recovered from the instances (factual words per class_id).
std::map<std::string, FeatureClassSpec> class_words(std::span<const PredictionInstance> instances);

DecoderReport evaluate_decoder(const GradiendModel& gm, const ModelParams& params,
                               std::span<const PredictionInstance> held_out, std::span<const NeutralInstance> neutral,
                               const DecoderEvalConfig& config, const std::string& target_class);

enum class RewriteMode { INCREASE, DECREASE };
std::string_view to_string(RewriteMode mode);
RewriteMode rewrite_mode_from_string(std::string_view name);

ModelParams rewrite(const ModelParams& params, const GradiendModel& gm, const DecoderReport& report,
                    RewriteMode mode = RewriteMode::INCREASE);

json to_json(const Histogram& histogram);
json to_json(const EncoderReport& report);
json to_json(const DecoderReport& report);
DecoderReport decoder_report_from_json(const json& j);

} // namespace gradlab
