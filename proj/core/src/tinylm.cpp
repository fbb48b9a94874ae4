#include "gradlab/tinylm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "gradlab/error.hpp"
#include "gradlab/rng.hpp"

namespace gradlab {

// ---------------------------------------------------------------- vocabulary

Vocabulary::Vocabulary() {
    for (auto special : kSpecials) {
        add(std::string(special));
    }
}

Vocabulary::Vocabulary(std::span<const std::string> words_after_specials) : Vocabulary() {
    for (const auto& w : words_after_specials) {
        if (ids_.contains(w)) {
            throw VocabularyError("duplicate vocabulary word: " + w);
        }
        add(w);
    }
}

void Vocabulary::add(std::string word) {
    const auto id = static_cast<TokenId>(words_.size());
    ids_.emplace(word, id);
    words_.push_back(std::move(word));
}

std::optional<TokenId> Vocabulary::find(std::string_view word) const {
    auto it = ids_.find(word);
    if (it == ids_.end()) {
        return std::nullopt;
    }
    return it->second;
}

TokenId Vocabulary::id_or_unk(std::string_view word) const { return find(word).value_or(kUnk); }

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> tokens) const {
    std::vector<TokenId> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) {
        ids.push_back(id_or_unk(t));
    }
    return ids;
}

Vocabulary build_vocab(std::span<const Sentence> corpus) {
    if (corpus.empty()) {
        throw DataError("cannot build a vocabulary from an empty corpus");
    }
    std::vector<std::string> words;
    std::set<std::string, std::less<>> seen;
    for (auto special : Vocabulary::kSpecials) {
        seen.emplace(special);
    }
    for (const auto& sentence : corpus) {
        for (const auto& token : sentence) {
            if (seen.insert(token).second) {
                words.push_back(token);
            }
        }
    }
    return Vocabulary(words);
}

// -------------------------------------------------------------------- config

std::string_view to_string(Objective objective) { return objective == Objective::MLM ? "MLM" : "CLM"; }

Objective objective_from_string(std::string_view name) {
    if (name == "MLM") {
        return Objective::MLM;
    }
    if (name == "CLM") {
        return Objective::CLM;
    }
    throw ConfigError("unknown objective: " + std::string(name));
}

void ModelConfig::validate() const {
    if (d_embed == 0 || context == 0 || d_hidden == 0) {
        throw ConfigError("model dimensions must be at least 1");
    }
}

std::size_t ModelConfig::window() const noexcept {
    return objective == Objective::MLM ? 2 * context + 1 : context;
}

std::string_view tensor_name(TensorId id) {
    switch (id) {
    case TensorId::E:
        return "E";
    case TensorId::W1:
        return "W1";
    case TensorId::b1:
        return "b1";
    case TensorId::W2:
        return "W2";
    case TensorId::b2:
        return "b2";
    }
    return "?";
}

TensorId tensor_from_name(std::string_view name) {
    for (TensorId id : kAllTensors) {
        if (tensor_name(id) == name) {
            return id;
        }
    }
    throw ConfigError("unknown tensor name: " + std::string(name));
}

namespace {

std::array<std::pair<std::size_t, std::size_t>, kTensorCount> expected_shapes(const ModelConfig& c, std::size_t v) {
    return {{{v, c.d_embed}, {c.input_width(), c.d_hidden}, {1, c.d_hidden}, {c.d_hidden, v}, {1, v}}};
}

} // namespace

void ModelParams::validate() const {
    config.validate();
    const auto shapes = expected_shapes(config, vocab.size());
    for (TensorId id : kAllTensors) {
        const Tensor& t = (*this)[id];
        const auto [r, c] = shapes[static_cast<std::size_t>(id)];
        if (t.rows != r || t.cols != c || t.data.size() != r * c) {
            throw ShapeError("tensor " + std::string(tensor_name(id)) + " has shape " + std::to_string(t.rows) +
                             "x" + std::to_string(t.cols) + ", expected " + std::to_string(r) + "x" +
                             std::to_string(c));
        }
        for (double v : t.data) {
            if (!std::isfinite(v)) {
                throw IntegrityError("tensor " + std::string(tensor_name(id)) + " holds a non-finite entry");
            }
        }
    }
}

bool ModelParams::bit_equal(const ModelParams& other) const {
    if (!(config == other.config) || !(vocab == other.vocab)) {
        return false;
    }
    for (std::size_t i = 0; i < kTensorCount; ++i) {
        const Tensor& a = tensors[i];
        const Tensor& b = other.tensors[i];
        if (a.rows != b.rows || a.cols != b.cols ||
            std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) != 0) {
            return false;
        }
    }
    return true;
}

TensorSet zero_tensors(const ModelParams& params) {
    TensorSet out;
    for (std::size_t i = 0; i < kTensorCount; ++i) {
        out[i] = Tensor(params.tensors[i].rows, params.tensors[i].cols);
    }
    return out;
}

ModelParams zero_params(const ModelConfig& config, const Vocabulary& vocab) {
    config.validate();
    ModelParams p;
    p.config = config;
    p.vocab = vocab;
    const auto shapes = expected_shapes(config, vocab.size());
    for (TensorId id : kAllTensors) {
        const auto [r, c] = shapes[static_cast<std::size_t>(id)];
        p[id] = Tensor(r, c);
    }
    return p;
}

ModelParams init_params(const ModelConfig& config, const Vocabulary& vocab) {
    ModelParams p = zero_params(config, vocab);
    SplitMix64 rng(config.init_seed);
    for (TensorId id : {TensorId::E, TensorId::W1, TensorId::W2}) {
        Tensor& t = p[id];
        const double s = std::sqrt(6.0 / static_cast<double>(t.rows + t.cols));
        for (double& v : t.data) {
            v = rng.uniform(-s, s);
        }
    }
    return p;
}

// ----------------------------------------------------------------- selection

ParamSelection::ParamSelection(std::vector<TensorId> tensors, const ModelParams& shapes) : tensors_(std::move(tensors)) {
    for (TensorId id : tensors_) {
        sizes_.push_back(shapes[id].size());
    }
    *this = ParamSelection(tensors_, sizes_);
}

ParamSelection::ParamSelection(std::vector<TensorId> tensors, std::vector<std::size_t> sizes)
    : tensors_(std::move(tensors)), sizes_(std::move(sizes)) {
    if (tensors_.empty()) {
        throw ConfigError("parameter selection is empty");
    }
    if (sizes_.size() != tensors_.size()) {
        throw ShapeError("parameter selection sizes do not match tensor list");
    }
    std::array<bool, kTensorCount> seen{};
    for (TensorId id : tensors_) {
        auto& flag = seen[static_cast<std::size_t>(id)];
        if (flag) {
            throw ConfigError("tensor selected twice: " + std::string(tensor_name(id)));
        }
        flag = true;
    }
    offsets_.clear();
    total_dim_ = 0;
    for (std::size_t s : sizes_) {
        offsets_.push_back(total_dim_);
        total_dim_ += s;
    }
}

ParamSelection::Location ParamSelection::locate(std::size_t flat) const {
    if (flat >= total_dim_) {
        throw ShapeError("flat index " + std::to_string(flat) + " outside selection of size " +
                         std::to_string(total_dim_));
    }
    std::size_t i = tensors_.size() - 1;
    while (offsets_[i] > flat) {
        --i;
    }
    return {tensors_[i], flat - offsets_[i]};
}

std::vector<std::string> ParamSelection::names() const {
    std::vector<std::string> out;
    for (TensorId id : tensors_) {
        out.emplace_back(tensor_name(id));
    }
    return out;
}

ParamSelection default_selection(const ModelParams& params) { return ParamSelection({TensorId::W1}, params); }

std::string_view to_string(MaskOrigin origin) {
    switch (origin) {
    case MaskOrigin::FULL:
        return "FULL";
    case MaskOrigin::PRE:
        return "PRE";
    case MaskOrigin::POST:
        return "POST";
    }
    return "?";
}

MaskOrigin mask_origin_from_string(std::string_view name) {
    for (MaskOrigin o : {MaskOrigin::FULL, MaskOrigin::PRE, MaskOrigin::POST}) {
        if (to_string(o) == name) {
            return o;
        }
    }
    throw ConfigError("unknown mask origin: " + std::string(name));
}

PruneMask PruneMask::full(std::size_t total_dim) {
    PruneMask m;
    m.kept.resize(total_dim);
    for (std::size_t i = 0; i < total_dim; ++i) {
        m.kept[i] = i;
    }
    return m;
}

void PruneMask::validate(std::size_t total_dim) const {
    if (kept.empty()) {
        throw ShapeError("prune mask is empty");
    }
    for (std::size_t i = 0; i < kept.size(); ++i) {
        if (kept[i] >= total_dim) {
            throw ShapeError("prune mask index " + std::to_string(kept[i]) + " out of range");
        }
        if (i > 0 && kept[i] <= kept[i - 1]) {
            throw ShapeError("prune mask indices are not strictly increasing");
        }
    }
}

// --------------------------------------------------------------- forward/bwd

std::vector<TokenId> mlm_context(std::span<const TokenId> ids, std::size_t pos, std::size_t c) {
    std::vector<TokenId> ctx(2 * c + 1, Vocabulary::kPad);
    for (std::size_t k = 0; k < ctx.size(); ++k) {
        const auto src = static_cast<std::ptrdiff_t>(pos + k) - static_cast<std::ptrdiff_t>(c);
        if (src >= 0 && static_cast<std::size_t>(src) < ids.size()) {
            ctx[k] = ids[static_cast<std::size_t>(src)];
        }
    }
    ctx[c] = Vocabulary::kMask;
    return ctx;
}

std::vector<TokenId> clm_context(std::span<const TokenId> ids, std::size_t pos, std::size_t c) {
    std::vector<TokenId> ctx(c, Vocabulary::kBos);
    for (std::size_t k = 0; k < c; ++k) {
        const auto src = static_cast<std::ptrdiff_t>(pos) - static_cast<std::ptrdiff_t>(c - k);
        if (src >= 0) {
            ctx[k] = ids[static_cast<std::size_t>(src)];
        }
    }
    return ctx;
}

std::vector<TokenId> make_context(const ModelConfig& config, std::span<const TokenId> ids, std::size_t pos) {
    if (pos >= ids.size()) {
        throw ShapeError("target position " + std::to_string(pos) + " outside sentence of length " +
                         std::to_string(ids.size()));
    }
    return config.objective == Objective::MLM ? mlm_context(ids, pos, config.context)
                                              : clm_context(ids, pos, config.context);
}

namespace {

struct Activations {
    std::vector<double> x; // concatenated embeddings
    std::vector<double> h; // tanh hidden
    std::vector<double> z; // logits
    std::vector<double> p; // softmax output
    double log_norm = 0.0; // log sum exp(z)
};

void check_context(const ModelParams& params, std::span<const TokenId> context) {
    if (context.size() != params.config.window()) {
        throw ShapeError("context has " + std::to_string(context.size()) + " tokens, model expects " +
                         std::to_string(params.config.window()));
    }
    for (TokenId id : context) {
        if (id >= params.vocab.size()) {
            throw ShapeError("token id " + std::to_string(id) + " outside vocabulary");
        }
    }
}

Activations run_forward(const ModelParams& params, std::span<const TokenId> context) {
    check_context(params, context);
    const std::size_t d = params.config.d_embed;
    const std::size_t hid = params.config.d_hidden;
    const Tensor& E = params[TensorId::E];
    const Tensor& W1 = params[TensorId::W1];
    const Tensor& b1 = params[TensorId::b1];
    const Tensor& W2 = params[TensorId::W2];
    const Tensor& b2 = params[TensorId::b2];
    const std::size_t vocab = E.rows;

    Activations a;
    a.x.resize(context.size() * d);
    for (std::size_t t = 0; t < context.size(); ++t) {
        std::copy_n(&E.data[context[t] * d], d, &a.x[t * d]);
    }
    a.h.assign(b1.data.begin(), b1.data.end());
    for (std::size_t i = 0; i < a.x.size(); ++i) {
        const double xi = a.x[i];
        const double* row = &W1.data[i * hid];
        for (std::size_t j = 0; j < hid; ++j) {
            a.h[j] += xi * row[j];
        }
    }
    for (double& v : a.h) {
        v = std::tanh(v);
    }
    std::vector<double> z(b2.data.begin(), b2.data.end());
    for (std::size_t j = 0; j < hid; ++j) {
        const double hj = a.h[j];
        const double* row = &W2.data[j * vocab];
        for (std::size_t k = 0; k < vocab; ++k) {
            z[k] += hj * row[k];
        }
    }
    const double zmax = *std::max_element(z.begin(), z.end());
    a.p.resize(z.size());
    double total = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
        a.p[k] = std::exp(z[k] - zmax);
        total += a.p[k];
    }
    for (double& v : a.p) {
        v /= total;
    }
    a.log_norm = zmax + std::log(total);
    a.z = std::move(z);
    return a;
}

void check_label(const ModelParams& params, TokenId label) {
    if (label >= params.vocab.size()) {
        throw ShapeError("label id " + std::to_string(label) + " outside vocabulary");
    }
}

// -log p[label] from the logits so it stays finite when p underflows.
double label_nll(const Activations& a, TokenId label) { return a.log_norm - a.z[label]; }

// Adds weight * dL/dtheta into out.
void backward_into(const ModelParams& params, const Activations& a, std::span<const TokenId> context, TokenId label,
                   double weight, TensorSet& out) {
    const std::size_t d = params.config.d_embed;
    const std::size_t hid = params.config.d_hidden;
    const std::size_t vocab = params.vocab.size();
    const Tensor& W1 = params[TensorId::W1];
    const Tensor& W2 = params[TensorId::W2];

    // dL/dz = p - onehot(label)
    std::vector<double> dz = a.p;
    dz[label] -= 1.0;
    auto& gb2 = at(out, TensorId::b2).data;
    for (std::size_t k = 0; k < vocab; ++k) {
        gb2[k] += weight * dz[k];
    }

    auto& gW2 = at(out, TensorId::W2).data;
    std::vector<double> da(hid, 0.0);
    for (std::size_t j = 0; j < hid; ++j) {
        const double hj = a.h[j];
        const double* w = &W2.data[j * vocab];
        double* gw = &gW2[j * vocab];
        double dh = 0.0;
        for (std::size_t k = 0; k < vocab; ++k) {
            gw[k] += weight * (hj * dz[k]);
            dh += w[k] * dz[k];
        }
        da[j] = dh * (1.0 - hj * hj);
    }
    auto& gb1 = at(out, TensorId::b1).data;
    for (std::size_t j = 0; j < hid; ++j) {
        gb1[j] += weight * da[j];
    }

    auto& gW1 = at(out, TensorId::W1).data;
    auto& gE = at(out, TensorId::E).data;
    for (std::size_t i = 0; i < a.x.size(); ++i) {
        const double xi = a.x[i];
        const double* w = &W1.data[i * hid];
        double* gw = &gW1[i * hid];
        double dx = 0.0;
        for (std::size_t j = 0; j < hid; ++j) {
            gw[j] += weight * (xi * da[j]);
            dx += w[j] * da[j];
        }
        gE[context[i / d] * d + (i % d)] += weight * dx;
    }
}

} // namespace

std::vector<double> forward_probs(const ModelParams& params, std::span<const TokenId> context) {
    return run_forward(params, context).p;
}

double nll_loss(const ModelParams& params, std::span<const TokenId> context, TokenId label) {
    check_label(params, label);
    return label_nll(run_forward(params, context), label);
}

TensorSet full_grad(const ModelParams& params, std::span<const TokenId> context, TokenId label, double* loss_out) {
    check_label(params, label);
    const Activations a = run_forward(params, context);
    if (loss_out != nullptr) {
        *loss_out = label_nll(a, label);
    }
    TensorSet g = zero_tensors(params);
    backward_into(params, a, context, label, 1.0, g);
    return g;
}

std::vector<double> flatten(const TensorSet& tensors, const ParamSelection& selection) {
    std::vector<double> out;
    out.reserve(selection.total_dim());
    for (TensorId id : selection.tensors()) {
        const auto& data = at(tensors, id).data;
        out.insert(out.end(), data.begin(), data.end());
    }
    if (out.size() != selection.total_dim()) {
        throw ShapeError("selection does not match model shapes");
    }
    return out;
}

std::vector<double> gather(std::span<const double> flat, const PruneMask& mask) {
    std::vector<double> out;
    out.reserve(mask.kept.size());
    for (std::size_t idx : mask.kept) {
        if (idx >= flat.size()) {
            throw ShapeError("mask index outside gradient");
        }
        out.push_back(flat[idx]);
    }
    return out;
}

GradientVector grad(const ModelParams& params, std::span<const TokenId> context, TokenId label,
                    std::shared_ptr<const ParamSelection> selection, std::shared_ptr<const PruneMask> mask) {
    if (!selection) {
        throw ConfigError("gradient requested without a parameter selection");
    }
    GradientVector gv;
    gv.values = flatten(full_grad(params, context, label), *selection);
    if (mask) {
        gv.values = gather(gv.values, *mask);
    }
    gv.selection = std::move(selection);
    gv.mask = std::move(mask);
    return gv;
}

// ------------------------------------------------------------------ training

namespace {

struct Position {
    std::size_t sentence;
    std::size_t pos;
};

Position sample_position(std::span<const Sentence> corpus, SplitMix64& rng) {
    const std::size_t s = rng.uniform_index(corpus.size());
    return {s, rng.uniform_index(corpus[s].size())};
}

void check_corpus(std::span<const Sentence> corpus) {
    if (corpus.empty()) {
        throw DataError("training corpus is empty");
    }
    for (const auto& s : corpus) {
        if (s.empty()) {
            throw DataError("training corpus contains an empty sentence");
        }
    }
}

} // namespace

double probe_loss(const ModelParams& params, std::span<const Sentence> corpus, std::uint64_t seed,
                  std::size_t probe_size) {
    check_corpus(corpus);
    SplitMix64 rng(derive_seed(seed, streams::kProbe));
    double total = 0.0;
    for (std::size_t n = 0; n < probe_size; ++n) {
        const Position where = sample_position(corpus, rng);
        const auto ids = params.vocab.encode(corpus[where.sentence]);
        total += nll_loss(params, make_context(params.config, ids, where.pos), ids[where.pos]);
    }
    return probe_size == 0 ? 0.0 : total / static_cast<double>(probe_size);
}

BaseTrainResult train_base(const ModelParams& params, std::span<const Sentence> corpus, const BaseTrainConfig& config) {
    if (config.steps == 0) {
        throw ConfigError("base training needs at least one step");
    }
    if (config.batch == 0) {
        throw ConfigError("base training batch must be at least 1");
    }
    if (!(config.lr >= 0.0) || !std::isfinite(config.lr)) {
        throw ConfigError("base learning rate must be finite and non-negative");
    }
    check_corpus(corpus);
    params.validate();

    BaseTrainResult result;
    result.params = params;
    result.initial_probe_loss = probe_loss(params, corpus, config.seed, config.probe_size);

    // Encode once; the vocabulary is fixed for the run.
    std::vector<std::vector<TokenId>> encoded;
    encoded.reserve(corpus.size());
    for (const auto& s : corpus) {
        encoded.push_back(params.vocab.encode(s));
    }

    SplitMix64 rng(derive_seed(config.seed, streams::kBaseTrain));
    ModelParams& p = result.params;
    const double weight = 1.0 / static_cast<double>(config.batch);
    for (std::size_t step = 1; step <= config.steps; ++step) {
        TensorSet acc = zero_tensors(p);
        double batch_loss = 0.0;
        for (std::size_t b = 0; b < config.batch; ++b) {
            const Position where = sample_position(corpus, rng);
            const auto& ids = encoded[where.sentence];
            const auto ctx = make_context(p.config, ids, where.pos);
            const Activations act = run_forward(p, ctx);
            batch_loss += label_nll(act, ids[where.pos]);
            backward_into(p, act, ctx, ids[where.pos], weight, acc);
        }
        if (!std::isfinite(batch_loss)) {
            throw DivergenceError("base training diverged at step " + std::to_string(step));
        }
        for (std::size_t t = 0; t < kTensorCount; ++t) {
            auto& dst = p.tensors[t].data;
            const auto& src = acc[t].data;
            for (std::size_t i = 0; i < dst.size(); ++i) {
                dst[i] -= config.lr * src[i];
            }
        }
    }
    result.final_probe_loss = probe_loss(p, corpus, config.seed, config.probe_size);
    return result;
}

TokenId argmax_lowest(std::span<const double> values) {
    TokenId best = 0;
    for (std::size_t k = 1; k < values.size(); ++k) {
        if (values[k] > values[best]) {
            best = static_cast<TokenId>(k);
        }
    }
    return best;
}

double lms(const ModelParams& params, std::span<const NeutralInstance> neutral) {
    if (neutral.empty()) {
        throw DataError("LMS needs at least one neutral instance");
    }
    std::size_t correct = 0;
    for (const auto& inst : neutral) {
        const auto ids = params.vocab.encode(inst.tokens);
        const auto p = forward_probs(params, make_context(params.config, ids, inst.target_pos));
        if (argmax_lowest(p) == ids[inst.target_pos]) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(neutral.size());
}

} // namespace gradlab
