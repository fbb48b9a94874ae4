#include "gradlab/gradcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gradlab/error.hpp"
#include "gradlab/evalkit.hpp"
#include "gradlab/parallel.hpp"
#include "gradlab/rng.hpp"

namespace gradlab {

std::string_view to_string(Signal signal) {
    switch (signal) {
    case Signal::FACTUAL:
        return "FACTUAL";
    case Signal::COUNTERFACTUAL:
        return "COUNTERFACTUAL";
    case Signal::DIFF:
        return "DIFF";
    }
    return "?";
}

Signal signal_from_string(std::string_view name) {
    for (Signal s : {Signal::FACTUAL, Signal::COUNTERFACTUAL, Signal::DIFF}) {
        if (to_string(s) == name) {
            return s;
        }
    }
    throw ConfigError("unknown gradient signal: " + std::string(name));
}

void SignalConfig::validate() const {
    if (source == target) {
        throw ConfigError("source and target signals must differ (both are " + std::string(to_string(source)) + ")");
    }
}

void GradiendModel::validate() const {
    const std::size_t m = mask.kept.size();
    mask.validate(selection.total_dim());
    if (w_enc.size() != m || w_dec.size() != m || b_dec.size() != m) {
        throw ShapeError("GRADIEND weights do not match mask length " + std::to_string(m));
    }
    auto finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    if (!finite(w_enc) || !finite(w_dec) || !finite(b_dec) || !std::isfinite(b_enc)) {
        throw IntegrityError("GRADIEND weights contain non-finite values");
    }
    if (class_neg.empty() || class_pos.empty() || class_neg == class_pos) {
        throw IntegrityError("GRADIEND classes must be two distinct ids");
    }
    signal.validate();
}

double GradiendModel::pole(const std::string& class_id) const {
    if (class_id == class_neg) {
        return -1.0;
    }
    if (class_id == class_pos) {
        return 1.0;
    }
    throw ConfigError("class " + class_id + " is not one of " + class_neg + "/" + class_pos);
}

void GradiendTrainConfig::validate() const {
    if (batch == 0 || max_steps == 0 || eval_steps == 0) {
        throw ConfigError("gradiend batch, max_steps and eval_steps must be at least 1");
    }
    if (eval_steps > max_steps) {
        throw ConfigError("gradiend eval_steps exceeds max_steps");
    }
    if (!(lr > 0.0) || !(lr_scale > 0.0) || !std::isfinite(lr * lr_scale)) {
        throw ConfigError("gradiend learning rate must be positive");
    }
    if (seeds.empty()) {
        throw ConfigError("gradiend needs at least one seed");
    }
    if (!(val_fraction > 0.0 && val_fraction <= 0.5)) {
        throw ConfigError("gradiend val_fraction must lie in (0, 0.5]");
    }
    if (pre_prune) {
        if (pre_prune->n_samples == 0) {
            throw ConfigError("pre_prune.n_samples must be at least 1");
        }
        if (!(pre_prune->topk > 0.0 && pre_prune->topk <= 1.0)) {
            throw ConfigError("pre_prune.topk must lie in (0, 1]");
        }
    }
    if (post_prune && !(post_prune->topk > 0.0 && post_prune->topk <= 1.0)) {
        throw ConfigError("post_prune.topk must lie in (0, 1]");
    }
}

std::size_t keep_count(double topk, std::size_t n) {
    if (!(topk > 0.0 && topk <= 1.0)) {
        throw ConfigError("topk must lie in (0, 1]");
    }
    // The epsilon keeps products such as 0.1 * 30 from rounding up to 4.
    const double raw = std::ceil(topk * static_cast<double>(n) - 1e-9);
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 0.0)), 1, std::max<std::size_t>(n, 1));
}

// ------------------------------------------------------------------ signals

namespace {

TokenId require_word(const Vocabulary& vocab, const std::string& word) {
    if (auto id = vocab.find(word)) {
        return *id;
    }
    throw VocabularyError("word not in base-model vocabulary: " + word);
}

std::vector<double> select_signal(Signal which, const std::vector<double>& factual,
                                  const std::vector<double>& counterfactual) {
    switch (which) {
    case Signal::FACTUAL:
        return factual;
    case Signal::COUNTERFACTUAL:
        return counterfactual;
    case Signal::DIFF: {
        std::vector<double> out(factual.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = factual[i] - counterfactual[i];
        }
        return out;
    }
    }
    return {};
}

struct PairValues {
    std::vector<double> source;
    std::vector<double> target;
};

PairValues pair_values(const ModelParams& params, const PredictionInstance& inst, const SignalConfig& signal,
                       const ParamSelection& selection, const PruneMask* mask) {
    const TokenId fact = require_word(params.vocab, inst.factual_word);
    const TokenId counter = require_word(params.vocab, inst.counterfactual_word);
    const auto ids = params.vocab.encode(inst.tokens);
    const auto ctx = make_context(params.config, ids, inst.target_pos);
    auto gf = flatten(full_grad(params, ctx, fact), selection);
    auto gc = flatten(full_grad(params, ctx, counter), selection);
    if (mask != nullptr) {
        gf = gather(gf, *mask);
        gc = gather(gc, *mask);
    }
    return {select_signal(signal.source, gf, gc), select_signal(signal.target, gf, gc)};
}

} // namespace

std::pair<GradientVector, GradientVector> extract_pair(const ModelParams& params, const PredictionInstance& instance,
                                                       const SignalConfig& signal,
                                                       std::shared_ptr<const ParamSelection> selection,
                                                       std::shared_ptr<const PruneMask> mask) {
    signal.validate();
    if (!selection) {
        throw ConfigError("extract_pair requires a parameter selection");
    }
    PairValues v = pair_values(params, instance, signal, *selection, mask.get());
    GradientVector src{std::move(v.source), selection, mask};
    GradientVector tgt{std::move(v.target), selection, mask};
    return {std::move(src), std::move(tgt)};
}

GradientVector token_gradient(const ModelParams& params, std::span<const std::string> tokens, std::size_t pos,
                              std::shared_ptr<const ParamSelection> selection,
                              std::shared_ptr<const PruneMask> mask) {
    const auto ids = params.vocab.encode(tokens);
    return grad(params, make_context(params.config, ids, pos), ids.at(pos), std::move(selection), std::move(mask));
}

// ------------------------------------------------------------------ pruning

std::vector<std::size_t> top_indices(std::span<const double> importance, std::size_t count) {
    std::vector<std::size_t> order(importance.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    count = std::min(count, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (importance[a] != importance[b]) {
                              return importance[a] > importance[b];
                          }
                          return a < b;
                      });
    order.resize(count);
    std::sort(order.begin(), order.end());
    return order;
}

PruneMask pre_prune(const ModelParams& params, std::span<const PredictionInstance> instances, std::size_t n_samples,
                    double topk, std::uint64_t seed, const ParamSelection& selection, const SignalConfig& signal) {
    if (n_samples == 0) {
        throw ConfigError("pre_prune n_samples must be at least 1");
    }
    if (instances.empty()) {
        throw DataError("pre_prune needs at least one instance");
    }
    const std::size_t total = selection.total_dim();
    const std::size_t keep = keep_count(topk, total);

    // Partial Fisher-Yates: the first `take` slots become the sample.
    SplitMix64 rng(derive_seed(seed, streams::kPrePrune));
    std::vector<std::size_t> pool(instances.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    const std::size_t take = std::min(n_samples, pool.size());
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + rng.uniform_index(pool.size() - i);
        std::swap(pool[i], pool[j]);
    }

    std::vector<double> importance(total, 0.0);
    for (std::size_t i = 0; i < take; ++i) {
        const auto v = pair_values(params, instances[pool[i]], signal, selection, nullptr).source;
        for (std::size_t d = 0; d < total; ++d) {
            importance[d] += std::abs(v[d]);
        }
    }
    for (double& v : importance) {
        v /= static_cast<double>(take);
    }
    PruneMask mask;
    mask.kept = top_indices(importance, keep);
    mask.origin = MaskOrigin::PRE;
    return mask;
}

double encode(const GradiendModel& gm, std::span<const double> g) {
    if (g.size() != gm.w_enc.size()) {
        throw ShapeError("gradient length " + std::to_string(g.size()) + " does not match encoder length " +
                         std::to_string(gm.w_enc.size()));
    }
    double z = gm.b_enc;
    for (std::size_t i = 0; i < g.size(); ++i) {
        z += gm.w_enc[i] * g[i];
    }
    // tanh rounds to exactly +-1 in double once |z| > ~19; keep the latent open.
    constexpr double kEdge = 1.0 - 0x1.0p-53;
    return std::clamp(std::tanh(z), -kEdge, kEdge);
}

std::vector<double> decode(const GradiendModel& gm, double h) {
    std::vector<double> out(gm.w_dec.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = h * gm.w_dec[i] + gm.b_dec[i];
    }
    return out;
}

std::vector<double> gradiend_importance(const GradiendModel& gm) {
    double max_enc = 0.0;
    double max_dec = 0.0;
    for (double v : gm.w_enc) {
        max_enc = std::max(max_enc, std::abs(v));
    }
    for (double v : gm.w_dec) {
        max_dec = std::max(max_dec, std::abs(v));
    }
    std::vector<double> out(gm.dim(), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (max_enc > 0.0) {
            out[i] += std::abs(gm.w_enc[i]) / max_enc;
        }
        if (max_dec > 0.0) {
            out[i] += std::abs(gm.w_dec[i]) / max_dec;
        }
    }
    return out;
}

GradiendModel post_prune(const GradiendModel& gm, double topk) {
    const auto keep = top_indices(gradiend_importance(gm), keep_count(topk, gm.dim()));
    GradiendModel out;
    out.b_enc = gm.b_enc;
    out.selection = gm.selection;
    out.signal = gm.signal;
    out.class_neg = gm.class_neg;
    out.class_pos = gm.class_pos;
    out.base_checkpoint_ref = gm.base_checkpoint_ref;
    out.mask.origin = MaskOrigin::POST;
    for (std::size_t local : keep) {
        out.mask.kept.push_back(gm.mask.kept[local]);
        out.w_enc.push_back(gm.w_enc[local]);
        out.w_dec.push_back(gm.w_dec[local]);
        out.b_dec.push_back(gm.b_dec[local]);
    }
    return out;
}

// ----------------------------------------------------------------- training

TrainSplit split_train_val(std::span<const PredictionInstance> instances, double val_fraction, std::uint64_t seed) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        auto [it, inserted] = by_class.try_emplace(instances[i].class_id);
        if (inserted) {
            order.push_back(instances[i].class_id);
        }
        it->second.push_back(i);
    }
    SplitMix64 rng(derive_seed(seed, streams::kSplit));
    std::vector<bool> is_val(instances.size(), false);
    for (const auto& cls : order) {
        auto idx = by_class[cls];
        shuffle(idx, rng);
        std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                         std::llround(val_fraction * static_cast<double>(idx.size()))));
        n_val = std::min(n_val, idx.size() > 1 ? idx.size() - 1 : std::size_t{0});
        for (std::size_t k = 0; k < n_val; ++k) {
            is_val[idx[k]] = true;
        }
    }
    TrainSplit split;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        (is_val[i] ? split.val : split.train).push_back(instances[i]);
    }
    return split;
}

namespace {

struct Adam {
    explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

    void step(std::vector<double>& theta, const std::vector<double>& g, double lr, std::size_t t) {
        constexpr double b1 = 0.9;
        constexpr double b2 = 0.999;
        constexpr double eps = 1e-8;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }

    std::vector<double> m;
    std::vector<double> v;
};

struct SeedOutcome {
    GradiendModel best;
    double best_correlation = std::numeric_limits<double>::quiet_NaN();
    TrainingTrace trace;
};

std::pair<std::string, std::string> resolve_classes(std::span<const PredictionInstance> instances,
                                                    const GradiendTrainConfig& cfg) {
    std::vector<std::string> present;
    std::map<std::string, std::size_t> counts;
    for (const auto& inst : instances) {
        if (counts[inst.class_id]++ == 0) {
            present.push_back(inst.class_id);
        }
    }
    if (present.size() != 2) {
        throw DataError("GRADIEND training needs instances of exactly two classes, found " +
                        std::to_string(present.size()));
    }
    for (const auto& id : present) {
        if (counts[id] < 2 * cfg.batch) {
            throw DataError("class " + id + " has " + std::to_string(counts[id]) + " instances, need at least " +
                            std::to_string(2 * cfg.batch));
        }
    }
    std::vector<std::string> ordered;
    for (const auto& id : cfg.class_order) {
        if (std::find(present.begin(), present.end(), id) != present.end() &&
            std::find(ordered.begin(), ordered.end(), id) == ordered.end()) {
            ordered.push_back(id);
        }
    }
    for (const auto& id : present) {
        if (std::find(ordered.begin(), ordered.end(), id) == ordered.end()) {
            ordered.push_back(id);
        }
    }
    return {ordered[0], ordered[1]};
}

double safe_pearson(std::span<const double> x, std::span<const double> y) {
    try {
        return pearson(x, y);
    } catch (const UndefinedCorrelationError&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

SeedOutcome train_one_seed(const ModelParams& params, std::span<const PredictionInstance> instances,
                           const SignalConfig& signal, const GradiendTrainConfig& cfg, const ParamSelection& selection,
                           const std::string& class_neg, const std::string& class_pos, std::uint64_t seed,
                           const std::string& base_ref) {
    const TrainSplit split = split_train_val(instances, cfg.val_fraction, seed);
    if (split.val.empty() || split.train.empty()) {
        throw DataError("train/validation split left an empty side");
    }

    PruneMask mask = cfg.pre_prune ? pre_prune(params, split.train, cfg.pre_prune->n_samples, cfg.pre_prune->topk, seed,
                                               selection, signal)
                                   : PruneMask::full(selection.total_dim());
    const std::size_t m = mask.size();
    const bool identity = m == selection.total_dim();
    const PruneMask* mask_ptr = identity ? nullptr : &mask;

    // Validation encodings are recomputed at every eval step from fixed source gradients.
    std::vector<std::vector<double>> val_src(split.val.size());
    std::vector<double> val_labels(split.val.size());
    parallel_for(split.val.size(), [&](std::size_t i) {
        val_src[i] = pair_values(params, split.val[i], signal, selection, mask_ptr).source;
    });
    for (std::size_t i = 0; i < split.val.size(); ++i) {
        val_labels[i] = split.val[i].class_id == class_neg ? -1.0 : 1.0;
    }

    GradiendModel gm;
    gm.mask = mask;
    gm.selection = selection;
    gm.signal = signal;
    gm.class_neg = class_neg;
    gm.class_pos = class_pos;
    gm.base_checkpoint_ref = base_ref;
    gm.w_enc.resize(m);
    gm.w_dec.resize(m);
    gm.b_dec.assign(m, 0.0);
    gm.b_enc = 0.0;
    {
        // Same Glorot-uniform rule as the base model: fan (m, 1) for both maps.
        SplitMix64 init(derive_seed(seed, streams::kGradiendInit));
        const double s = std::sqrt(6.0 / static_cast<double>(m + 1));
        for (double& v : gm.w_enc) {
            v = init.uniform(-s, s);
        }
        for (double& v : gm.w_dec) {
            v = init.uniform(-s, s);
        }
    }

    Adam opt_w_enc(m), opt_w_dec(m), opt_b_dec(m), opt_b_enc(1);
    std::vector<double> b_enc_vec{0.0};
    const double step_size = cfg.lr * cfg.lr_scale;
    const double inv_m = 1.0 / static_cast<double>(m);
    const double inv_b = 1.0 / static_cast<double>(cfg.batch);

    SplitMix64 batch_rng(derive_seed(seed, streams::kGradiendBatches));
    std::vector<std::size_t> order(split.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, batch_rng);
    std::size_t cursor = 0;

    SeedOutcome outcome;
    outcome.trace.seed = seed;
    double loss_acc = 0.0;
    std::size_t loss_steps = 0;

    std::vector<PairValues> batch(cfg.batch);
    std::vector<std::size_t> picks(cfg.batch);
    std::vector<double> g_w_enc(m), g_w_dec(m), g_b_dec(m), g_b_enc(1);
    for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
        for (std::size_t b = 0; b < cfg.batch; ++b) {
            if (cursor == order.size()) {
                shuffle(order, batch_rng);
                cursor = 0;
            }
            picks[b] = order[cursor++];
        }
        parallel_for(cfg.batch, [&](std::size_t b) {
            batch[b] = pair_values(params, split.train[picks[b]], signal, selection, mask_ptr);
        });

        std::fill(g_w_enc.begin(), g_w_enc.end(), 0.0);
        std::fill(g_w_dec.begin(), g_w_dec.end(), 0.0);
        std::fill(g_b_dec.begin(), g_b_dec.end(), 0.0);
        g_b_enc[0] = 0.0;
        double batch_loss = 0.0;
        std::vector<double> r(m);
        for (const auto& pv : batch) {
            const double h = encode(gm, pv.source);
            double loss = 0.0;
            double dh = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                r[i] = h * gm.w_dec[i] + gm.b_dec[i] - pv.target[i];
                loss += r[i] * r[i];
                dh += gm.w_dec[i] * r[i];
            }
            batch_loss += loss * inv_m;
            const double scale = 2.0 * inv_m * inv_b;
            const double dz = scale * dh * (1.0 - h * h);
            for (std::size_t i = 0; i < m; ++i) {
                g_w_dec[i] += scale * h * r[i];
                g_b_dec[i] += scale * r[i];
                g_w_enc[i] += dz * pv.source[i];
            }
            g_b_enc[0] += dz;
        }
        batch_loss *= inv_b;
        if (!std::isfinite(batch_loss)) {
            throw TrainingError("GRADIEND loss became non-finite at step " + std::to_string(step) + " (seed " +
                                std::to_string(seed) + ")");
        }
        opt_w_enc.step(gm.w_enc, g_w_enc, step_size, step);
        opt_w_dec.step(gm.w_dec, g_w_dec, step_size, step);
        opt_b_dec.step(gm.b_dec, g_b_dec, step_size, step);
        b_enc_vec[0] = gm.b_enc;
        opt_b_enc.step(b_enc_vec, g_b_enc, step_size, step);
        gm.b_enc = b_enc_vec[0];

        loss_acc += batch_loss;
        ++loss_steps;

        if (step % cfg.eval_steps == 0) {
            std::vector<double> encoded(val_src.size());
            for (std::size_t i = 0; i < val_src.size(); ++i) {
                encoded[i] = encode(gm, val_src[i]);
            }
            const double corr = safe_pearson(val_labels, encoded);
            outcome.trace.step.push_back(step);
            outcome.trace.loss.push_back(loss_acc / static_cast<double>(loss_steps));
            outcome.trace.correlation.push_back(corr);
            loss_acc = 0.0;
            loss_steps = 0;
            if (!std::isnan(corr) &&
                (std::isnan(outcome.best_correlation) || std::abs(corr) > std::abs(outcome.best_correlation))) {
                outcome.best_correlation = corr;
                outcome.best = gm;
                outcome.trace.best_step = step;
            }
        }
    }
    outcome.trace.best_abs_correlation = std::isnan(outcome.best_correlation) ? outcome.best_correlation
                                                                              : std::abs(outcome.best_correlation);
    return outcome;
}

} // namespace

GradiendTrainResult train_gradiend(const ModelParams& params, std::span<const PredictionInstance> instances,
                                   const SignalConfig& signal, const GradiendTrainConfig& config,
                                   const ParamSelection& selection) {
    signal.validate();
    config.validate();
    const auto [class_neg, class_pos] = resolve_classes(instances, config);
    const std::string base_ref = content_hash(params);

    GradiendTrainResult result;
    std::optional<SeedOutcome> best;
    for (std::uint64_t seed : config.seeds) {
        SeedOutcome outcome =
            train_one_seed(params, instances, signal, config, selection, class_neg, class_pos, seed, base_ref);
        result.seed_traces.push_back(outcome.trace);
        if (std::isnan(outcome.best_correlation)) {
            continue;
        }
        const double score = std::abs(outcome.best_correlation);
        const bool better = !best || score > std::abs(best->best_correlation) ||
                            (score == std::abs(best->best_correlation) && seed < best->trace.seed);
        if (better) {
            best = std::move(outcome);
        }
    }
    if (!best) {
        throw TrainingError("GRADIEND training failed: every validation correlation was undefined");
    }

    // tanh is odd, so negating encoder and decoder weights leaves decode(encode(g))
    // unchanged; this pins class_neg to the negative pole.
    if (best->best_correlation < 0.0) {
        GradiendModel& gm = best->best;
        for (double& v : gm.w_enc) {
            v = -v;
        }
        for (double& v : gm.w_dec) {
            v = -v;
        }
        gm.b_enc = -gm.b_enc;
        for (double& c : best->trace.correlation) {
            c = -c;
        }
        best->best_correlation = -best->best_correlation;
        for (auto& t : result.seed_traces) {
            if (t.seed == best->trace.seed) {
                t.correlation = best->trace.correlation;
            }
        }
    }
    result.model = std::move(best->best);
    result.trace = std::move(best->trace);
    if (config.post_prune) {
        result.model = post_prune(result.model, config.post_prune->topk);
    }
    return result;
}

} // namespace gradlab
