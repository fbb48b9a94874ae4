#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gradlab/corpus.hpp"
#include "gradlab/tinylm.hpp"

namespace gradlab {

enum class Signal { FACTUAL, COUNTERFACTUAL, DIFF };
std::string_view to_string(Signal signal);
Signal signal_from_string(std::string_view name);

struct SignalConfig {
    Signal source = Signal::FACTUAL;
    Signal target = Signal::COUNTERFACTUAL;

    // source and target must differ.
    void validate() const;

    friend bool operator==(const SignalConfig&, const SignalConfig&) = default;
};

// The learned feature direction.
//   encode(g) = tanh(w_enc . g + b_enc)       in (-1, 1)
//   decode(h) = h * w_dec + b_dec             over the kept coordinates
// class_neg sits at latent -1, class_pos at +1.
struct GradiendModel {
    std::vector<double> w_enc;
    double b_enc = 0.0;
    std::vector<double> w_dec;
    std::vector<double> b_dec;
    PruneMask mask;
    ParamSelection selection;
    SignalConfig signal;
    std::string class_neg;
    std::string class_pos;
    std::string base_checkpoint_ref;

    std::size_t dim() const noexcept { return mask.kept.size(); }
    void validate() const;
    // Latent pole of a class: -1 for class_neg, +1 for class_pos.
    double pole(const std::string& class_id) const;
};

struct PrePruneConfig {
    std::size_t n_samples = 16;
    double topk = 0.01;
};

struct PostPruneConfig {
    double topk = 0.1;
};

struct GradiendTrainConfig {
    std::size_t batch = 8;
    std::size_t max_steps = 1000;
    std::size_t eval_steps = 250;
    double lr = 1e-5;
    // Adam step size is lr * lr_scale; gradients of the desk model are far
    // larger than BERT-scale ones, so the default re-bases the step.
    double lr_scale = 1e3;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::optional<PrePruneConfig> pre_prune;
    std::optional<PostPruneConfig> post_prune;
    double val_fraction = 0.1;
    // Declared class order; the first id maps to -1. Empty means order of
    // first appearance in the instance list.
    std::vector<std::string> class_order;

    void validate() const;
};

struct TrainingTrace {
    std::uint64_t seed = 0;
    std::vector<std::size_t> step;
    std::vector<double> loss;        // mean training loss since the previous eval
    std::vector<double> correlation; // validation Pearson r
    double best_abs_correlation = 0.0;
    std::size_t best_step = 0;
};

struct GradiendTrainResult {
    GradiendModel model;
    TrainingTrace trace;                    // trace of the selected seed
    std::vector<TrainingTrace> seed_traces; // one per configured seed
};

std::size_t keep_count(double topk, std::size_t n);

// Source and target gradients (in that order) for one instance.
std::pair<GradientVector, GradientVector> extract_pair(const ModelParams& params, const PredictionInstance& instance,
                                                       const SignalConfig& signal,
                                                       std::shared_ptr<const ParamSelection> selection,
                                                       std::shared_ptr<const PruneMask> mask = nullptr);

// Factual-label gradient of an arbitrary position; used for neutral data.
GradientVector token_gradient(const ModelParams& params, std::span<const std::string> tokens, std::size_t pos,
                              std::shared_ptr<const ParamSelection> selection,
                              std::shared_ptr<const PruneMask> mask = nullptr);

// Keeps the top ceil(topk * total_dim) dims by mean |source gradient| over a
// seeded sample of n_samples instances (without replacement).
PruneMask pre_prune(const ModelParams& params, std::span<const PredictionInstance> instances, std::size_t n_samples,
                    double topk, std::uint64_t seed, const ParamSelection& selection,
                    const SignalConfig& signal = {});

// Indices of the `count` largest values; ties go to the lower index; result sorted ascending.
std::vector<std::size_t> top_indices(std::span<const double> importance, std::size_t count);

// tanh(w_enc . g + b_enc), clamped to the open interval (-1, 1).
double encode(const GradiendModel& gm, std::span<const double> g);
std::vector<double> decode(const GradiendModel& gm, double h);

// |w_enc|/max|w_enc| + |w_dec|/max|w_dec| per kept dim (a zero max drops its term).
std::vector<double> gradiend_importance(const GradiendModel& gm);

GradiendModel post_prune(const GradiendModel& gm, double topk);

struct TrainSplit {
    std::vector<PredictionInstance> train;
    std::vector<PredictionInstance> val;
};

// Per-class seeded split; each class contributes max(1, round(val_fraction * n)) to val.
TrainSplit split_train_val(std::span<const PredictionInstance> instances, double val_fraction, std::uint64_t seed);

GradiendTrainResult train_gradiend(const ModelParams& params, std::span<const PredictionInstance> instances,
                                   const SignalConfig& signal, const GradiendTrainConfig& config,
                                   const ParamSelection& selection);

// Artifact directory: gradiend.json + mask.bin + tensors.bin.
void save_gradiend(const GradiendModel& gm, const std::filesystem::path& dir);
GradiendModel load_gradiend(const std::filesystem::path& dir);

json to_json(const TrainingTrace& trace);
TrainingTrace trace_from_json(const json& j);

} // namespace gradlab
