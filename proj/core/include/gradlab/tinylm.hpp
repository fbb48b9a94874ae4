#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gradlab/corpus.hpp"

namespace gradlab {

using TokenId = std::uint32_t;

class Vocabulary {
public:
    static constexpr TokenId kMask = 0;
    static constexpr TokenId kPad = 1;
    static constexpr TokenId kBos = 2;
    static constexpr TokenId kUnk = 3;
    static constexpr std::array<std::string_view, 4> kSpecials{"[MASK]", "[PAD]", "[BOS]", "[UNK]"};

    Vocabulary();
    // Words must be distinct and must not collide with the special tokens.
    explicit Vocabulary(std::span<const std::string> words_after_specials);

    std::size_t size() const noexcept { return words_.size(); }
    std::optional<TokenId> find(std::string_view word) const;
    TokenId id_or_unk(std::string_view word) const;
    const std::string& word(TokenId id) const { return words_.at(id); }
    const std::vector<std::string>& words() const noexcept { return words_; }

    std::vector<TokenId> encode(std::span<const std::string> tokens) const;

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

private:
    void add(std::string word);

    std::vector<std::string> words_;
    std::map<std::string, TokenId, std::less<>> ids_;
};

// Specials first, then corpus words in first-occurrence order.
Vocabulary build_vocab(std::span<const Sentence> corpus);

enum class Objective { MLM, CLM };

std::string_view to_string(Objective objective);
Objective objective_from_string(std::string_view name);

struct ModelConfig {
    std::size_t d_embed = 16;
    std::size_t context = 2;
    std::size_t d_hidden = 32;
    Objective objective = Objective::MLM;
    std::uint64_t init_seed = 42;

    void validate() const;
    // Tokens fed to the MLP: 2c+1 for MLM (center masked), c for CLM.
    std::size_t window() const noexcept;
    std::size_t input_width() const noexcept { return window() * d_embed; }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class TensorId : std::uint8_t { E = 0, W1 = 1, b1 = 2, W2 = 3, b2 = 4 };
inline constexpr std::size_t kTensorCount = 5;
inline constexpr std::array<TensorId, kTensorCount> kAllTensors{TensorId::E, TensorId::W1, TensorId::b1, TensorId::W2,
                                                                TensorId::b2};

std::string_view tensor_name(TensorId id);
TensorId tensor_from_name(std::string_view name);

// Row-major; vectors have rows == 1 and serialize with a one-element shape.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::size_t size() const noexcept { return data.size(); }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

using TensorSet = std::array<Tensor, kTensorCount>;

// The base language model: configuration, vocabulary and the five tensors
//   E  : V x d_embed
//   W1 : (window * d_embed) x d_hidden
//   b1 : d_hidden
//   W2 : d_hidden x V
//   b2 : V
struct ModelParams {
    ModelConfig config;
    Vocabulary vocab;
    TensorSet tensors;

    Tensor& operator[](TensorId id) { return tensors[static_cast<std::size_t>(id)]; }
    const Tensor& operator[](TensorId id) const { return tensors[static_cast<std::size_t>(id)]; }

    // Throws ShapeError on inconsistent shapes, IntegrityError on non-finite entries.
    void validate() const;
    // Bitwise equality of every tensor entry, config and vocabulary.
    bool bit_equal(const ModelParams& other) const;
};

// Glorot-uniform matrices (s = sqrt(6 / (fan_in + fan_out))), zero biases,
// drawn in tensor order E, W1, W2 from SplitMix64(init_seed).
ModelParams init_params(const ModelConfig& config, const Vocabulary& vocab);

// All-zero model with the shapes implied by config and vocabulary.
ModelParams zero_params(const ModelConfig& config, const Vocabulary& vocab);

// Zero tensors shaped like the model's.
TensorSet zero_tensors(const ModelParams& params);

inline Tensor& at(TensorSet& set, TensorId id) { return set[static_cast<std::size_t>(id)]; }
inline const Tensor& at(const TensorSet& set, TensorId id) { return set[static_cast<std::size_t>(id)]; }

// Ordered subset of tensors that defines a flat coordinate space.
class ParamSelection {
public:
    ParamSelection() = default;
    ParamSelection(std::vector<TensorId> tensors, const ModelParams& shapes);
    ParamSelection(std::vector<TensorId> tensors, std::vector<std::size_t> sizes);

    const std::vector<TensorId>& tensors() const noexcept { return tensors_; }
    std::size_t total_dim() const noexcept { return total_dim_; }
    // Start of each selected tensor in the flat space (same order as tensors()).
    const std::vector<std::size_t>& offsets() const noexcept { return offsets_; }
    const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }

    struct Location {
        TensorId tensor;
        std::size_t index;
    };
    Location locate(std::size_t flat) const;

    std::vector<std::string> names() const;

    friend bool operator==(const ParamSelection&, const ParamSelection&) = default;

private:
    std::vector<TensorId> tensors_;
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> sizes_;
    std::size_t total_dim_ = 0;
};

ParamSelection default_selection(const ModelParams& params);

enum class MaskOrigin { FULL, PRE, POST };
std::string_view to_string(MaskOrigin origin);
MaskOrigin mask_origin_from_string(std::string_view name);

// Kept flat indices into a ParamSelection coordinate space.
struct PruneMask {
    std::vector<std::size_t> kept;
    MaskOrigin origin = MaskOrigin::FULL;

    static PruneMask full(std::size_t total_dim);
    // Strictly increasing, non-empty, all < total_dim.
    void validate(std::size_t total_dim) const;
    std::size_t size() const noexcept { return kept.size(); }
};

struct GradientVector {
    std::vector<double> values;
    std::shared_ptr<const ParamSelection> selection;
    std::shared_ptr<const PruneMask> mask;
};

// Context windows. MLM: 2c+1 ids centered on pos with the center replaced by
// [MASK] and out-of-range slots [PAD]. CLM: the c ids before pos, left-padded with [BOS].
std::vector<TokenId> mlm_context(std::span<const TokenId> ids, std::size_t pos, std::size_t c);
std::vector<TokenId> clm_context(std::span<const TokenId> ids, std::size_t pos, std::size_t c);
std::vector<TokenId> make_context(const ModelConfig& config, std::span<const TokenId> ids, std::size_t pos);

// softmax(W2^T tanh(W1^T x + b1) + b2), x = concatenated context embeddings.
std::vector<double> forward_probs(const ModelParams& params, std::span<const TokenId> context);

double nll_loss(const ModelParams& params, std::span<const TokenId> context, TokenId label);

// Exact gradient of nll_loss for every tensor (shaped like params.tensors).
TensorSet full_grad(const ModelParams& params, std::span<const TokenId> context, TokenId label,
                      double* loss_out = nullptr);

// Gradient flattened in selection order, optionally restricted to a mask.
GradientVector grad(const ModelParams& params, std::span<const TokenId> context, TokenId label,
                    std::shared_ptr<const ParamSelection> selection, std::shared_ptr<const PruneMask> mask = nullptr);

// Selection-space flattening helpers.
std::vector<double> flatten(const TensorSet& tensors, const ParamSelection& selection);
std::vector<double> gather(std::span<const double> flat, const PruneMask& mask);

struct BaseTrainConfig {
    std::size_t steps = 2000;
    std::size_t batch = 16;
    double lr = 0.5;
    std::uint64_t seed = 3;
    std::size_t probe_size = 512;
};

struct BaseTrainResult {
    ModelParams params;
    double initial_probe_loss = 0.0;
    double final_probe_loss = 0.0;
};

// Plain mini-batch SGD on uniformly sampled (sentence, position) pairs.
BaseTrainResult train_base(const ModelParams& params, std::span<const Sentence> corpus, const BaseTrainConfig& config);

// Mean loss over a fixed, seeded probe batch drawn from the corpus.
double probe_loss(const ModelParams& params, std::span<const Sentence> corpus, std::uint64_t seed,
                  std::size_t probe_size);

// Language-modeling score: top-1 accuracy on neutral positions, ties to the lowest id.
double lms(const ModelParams& params, std::span<const NeutralInstance> neutral);

TokenId argmax_lowest(std::span<const double> values);

// Checkpoint directory: manifest.json + tensors.bin.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& dir);
ModelParams load_checkpoint(const std::filesystem::path& dir);

// FNV-1a over the tensors.bin byte stream, hex encoded.
std::string content_hash(const ModelParams& params);

} // namespace gradlab
