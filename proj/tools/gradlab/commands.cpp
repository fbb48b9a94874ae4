#include "gradlab/commands.hpp"

#include <glob.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "gradlab/compare.hpp"
#include "gradlab/error.hpp"
#include "gradlab/io.hpp"
#include "gradlab/svg.hpp"

namespace fs = std::filesystem;

namespace gradlab::cli {

namespace {

// Experiment-directory layout.
constexpr const char* kCorpus = "corpus.txt";
constexpr const char* kTrain = "train.jsonl";
constexpr const char* kVal = "val.jsonl";
constexpr const char* kNeutral = "neutral.jsonl";
constexpr const char* kDataReport = "data_report.json";
constexpr const char* kBaseDir = "base";
constexpr const char* kBaseReport = "base_report.json";
constexpr const char* kGradiendDir = "gradiend";
constexpr const char* kSeedTraces = "seed_traces.json";
constexpr const char* kTrace = "trace.json";
constexpr const char* kConvergenceJson = "convergence.json";
constexpr const char* kConvergenceSvg = "convergence.svg";
constexpr const char* kEncoderReport = "encoder_report.json";
constexpr const char* kEncoderPlot = "encoder_plot.json";
constexpr const char* kEncoderSvg = "encoder.svg";
constexpr const char* kDecoderReport = "decoder_report.json";
constexpr const char* kDecoderPlot = "decoder_plot.json";
constexpr const char* kDecoderSvg = "decoder.svg";
constexpr const char* kRewrittenDir = "rewritten";
constexpr const char* kRewriteReport = "rewrite_report.json";
constexpr const char* kOverlap = "overlap.json";
constexpr const char* kVenn = "venn.json";
constexpr const char* kCompareSvg = "compare.svg";

std::string corpus_to_text(const std::vector<Sentence>& corpus) {
    std::string out;
    for (const auto& s : corpus) {
        for (std::size_t i = 0; i < s.size(); ++i) {
            out += (i ? " " : "") + s[i];
        }
        out += '\n';
    }
    return out;
}

std::vector<Sentence> corpus_from_text(const std::string& text) {
    std::vector<Sentence> out;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        std::istringstream words(line);
        Sentence s;
        std::string w;
        while (words >> w) {
            s.push_back(w);
        }
        if (!s.empty()) {
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::vector<PredictionInstance> read_instances(const fs::path& path) {
    try {
        return parse_prediction_jsonl(read_file(path));
    } catch (const IntegrityError& e) {
        throw IntegrityError(path.string() + ": " + e.what());
    }
}

std::vector<NeutralInstance> read_neutral(const fs::path& path) {
    try {
        return parse_neutral_jsonl(read_file(path));
    } catch (const IntegrityError& e) {
        throw IntegrityError(path.string() + ": " + e.what());
    }
}

ModelParams read_checkpoint(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw IntegrityError("checkpoint directory not found: " + dir.string());
    }
    return load_checkpoint(dir);
}

GradiendModel read_gradiend(const fs::path& dir, const ModelParams& base) {
    if (!fs::is_directory(dir)) {
        throw IntegrityError("GRADIEND artifact not found: " + dir.string());
    }
    GradiendModel gm = load_gradiend(dir);
    if (gm.base_checkpoint_ref != content_hash(base)) {
        throw IntegrityError(dir.string() + ": trained against a different base checkpoint");
    }
    return gm;
}

const FeatureClassSpec& spec_of(const FeatureSection& f, const std::string& id) {
    for (const auto& c : f.classes) {
        if (c.id == id) {
            return c;
        }
    }
    throw ConfigError("feature.pair: class '" + id + "' is not declared");
}

struct BuiltInstances {
    std::vector<PredictionInstance> instances;
    std::map<std::string, std::size_t> matched;
};

BuiltInstances build_instances(const std::vector<Sentence>& corpus, const FeatureSection& f) {
    BuiltInstances out;
    if (!f.merge_map) {
        auto set = make_instances(corpus, spec_of(f, f.pair[0]), spec_of(f, f.pair[1]), f.max_per_class, f.seed,
                                  f.classes);
        out.instances = std::move(set.instances);
        out.matched = std::move(set.matched);
        return out;
    }
    const auto& map = f.merge_map->mapping;
    std::vector<PredictionInstance> raw;
    for (std::size_t i = 0; i < f.classes.size(); ++i) {
        for (std::size_t j = i + 1; j < f.classes.size(); ++j) {
            const auto a = map.find(f.classes[i].id);
            const auto b = map.find(f.classes[j].id);
            if (a == map.end() || b == map.end() || a->second == b->second) {
                continue;
            }
            const bool wanted = std::find(f.pair.begin(), f.pair.end(), a->second) != f.pair.end() &&
                                std::find(f.pair.begin(), f.pair.end(), b->second) != f.pair.end();
            if (!wanted) {
                continue;
            }
            auto set = make_instances(corpus, f.classes[i], f.classes[j], f.max_per_class, f.seed, f.classes);
            raw.insert(raw.end(), set.instances.begin(), set.instances.end());
        }
    }
    std::map<std::string, std::size_t> kept;
    for (auto& inst : merge_classes(raw, *f.merge_map)) {
        ++out.matched[inst.class_id];
        if (kept[inst.class_id] < f.max_per_class) {
            ++kept[inst.class_id];
            out.instances.push_back(std::move(inst));
        }
    }
    for (const auto& id : f.pair) {
        if (kept[id] == 0) {
            throw DataError("no instances for merged class " + id);
        }
    }
    return out;
}

json counts_by_class(const std::vector<PredictionInstance>& instances) {
    json out = json::object();
    for (const auto& inst : instances) {
        out[inst.class_id] = out.value(inst.class_id, 0) + 1;
    }
    return out;
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, dump_json(j)); }

std::vector<fs::path> expand_runs(const PipelineConfig& cfg) {
    std::vector<fs::path> out;
    for (const auto& pattern : cfg.compare.runs) {
        const std::string full = (cfg.config_dir / pattern).string();
        glob_t g{};
        const int rc = ::glob(full.c_str(), 0, nullptr, &g);
        std::vector<fs::path> matches;
        if (rc == 0) {
            for (std::size_t i = 0; i < g.gl_pathc; ++i) {
                const fs::path p = g.gl_pathv[i];
                if (fs::is_regular_file(p / "gradiend.json")) {
                    matches.push_back(p);
                }
            }
        }
        ::globfree(&g);
        if (matches.empty()) {
            throw IntegrityError("compare.runs: pattern '" + pattern + "' matched no GRADIEND artifact");
        }
        for (auto& m : matches) {
            if (std::find(out.begin(), out.end(), m) == out.end()) {
                out.push_back(std::move(m));
            }
        }
    }
    return out;
}

} // namespace

std::string cmd_gen_data(const PipelineConfig& cfg) {
    const fs::path dir = cfg.experiment_dir;
    const auto corpus = generate_corpus(cfg.corpus.grammar, cfg.corpus.n);
    const auto built = build_instances(corpus, cfg.feature);
    const auto split = split_train_val(built.instances, cfg.feature.val_fraction, cfg.feature.seed);
    const auto neutral =
        make_neutral(corpus, cfg.feature.classes, cfg.feature.extra_excluded, cfg.feature.neutral_max, cfg.feature.seed);

    write_file_atomic(dir / kCorpus, corpus_to_text(corpus));
    write_file_atomic(dir / kTrain, to_jsonl(std::span<const PredictionInstance>(split.train)));
    write_file_atomic(dir / kVal, to_jsonl(std::span<const PredictionInstance>(split.val)));
    write_file_atomic(dir / kNeutral, to_jsonl(std::span<const NeutralInstance>(neutral)));

    json report{{"corpus_sentences", corpus.size()},
                {"pair", cfg.feature.pair},
                {"matched_per_class", built.matched},
                {"instances_per_class", counts_by_class(built.instances)},
                {"train_per_class", counts_by_class(split.train)},
                {"val_per_class", counts_by_class(split.val)},
                {"neutral", neutral.size()},
                {"max_per_class", cfg.feature.max_per_class},
                {"neutral_max", cfg.feature.neutral_max}};
    write_json(dir / kDataReport, report);
    return "gen-data: " + std::to_string(split.train.size()) + " train, " + std::to_string(split.val.size()) +
           " val, " + std::to_string(neutral.size()) + " neutral instances in " + dir.string();
}

std::string cmd_train_base(const PipelineConfig& cfg) {
    const fs::path dir = cfg.experiment_dir;
    const auto corpus = corpus_from_text(read_file(dir / kCorpus));
    if (corpus.empty()) {
        throw IntegrityError((dir / kCorpus).string() + ": no sentences");
    }
    const auto neutral = read_neutral(dir / kNeutral);
    const auto vocab = build_vocab(corpus);
    const auto result = train_base(init_params(cfg.base.model, vocab), corpus, cfg.base.train);
    save_checkpoint(result.params, dir / kBaseDir);
    const double score = lms(result.params, neutral);
    json report{{"vocabulary_size", vocab.size()},
                {"steps", cfg.base.train.steps},
                {"initial_probe_loss", result.initial_probe_loss},
                {"final_probe_loss", result.final_probe_loss},
                {"lms", score},
                {"checkpoint_ref", content_hash(result.params)}};
    write_json(dir / kBaseReport, report);
    char buf[160];
    std::snprintf(buf, sizeof buf, "train-base: probe loss %.4f -> %.4f, LMS %.4f", result.initial_probe_loss,
                  result.final_probe_loss, score);
    return buf;
}

std::string cmd_train_gradiend(const PipelineConfig& cfg) {
    const fs::path dir = cfg.experiment_dir;
    const auto base = read_checkpoint(dir / kBaseDir);
    const auto train = read_instances(dir / kTrain);
    const ParamSelection selection(cfg.gradiend.selection, base);
    const auto result = train_gradiend(base, train, cfg.gradiend.signal, cfg.gradiend.train, selection);
    save_gradiend(result.model, dir / kGradiendDir);

    json seeds = json::array();
    for (const auto& t : result.seed_traces) {
        seeds.push_back(to_json(t));
    }
    write_json(dir / kSeedTraces, json{{"selected_seed", result.trace.seed}, {"seeds", seeds}});
    write_json(dir / kGradiendDir / kTrace, to_json(result.trace));
    write_json(dir / kConvergenceJson, to_json(result.trace));
    write_file_atomic(dir / kConvergenceSvg, convergence_svg(result.trace));
    char buf[160];
    std::snprintf(buf, sizeof buf, "train-gradiend: seed %llu, best |r| %.4f at step %zu, %zu dims",
                  static_cast<unsigned long long>(result.trace.seed), result.trace.best_abs_correlation,
                  result.trace.best_step, result.model.dim());
    return buf;
}

std::string cmd_eval_encoder(const PipelineConfig& cfg) {
    const fs::path dir = cfg.experiment_dir;
    const auto base = read_checkpoint(dir / kBaseDir);
    const auto gm = read_gradiend(dir / kGradiendDir, base);
    const auto neutral = read_neutral(dir / kNeutral);
    std::map<std::string, std::vector<PredictionInstance>> by_class;
    for (auto& inst : read_instances(dir / kVal)) {
        by_class[inst.class_id].push_back(std::move(inst));
    }
    const auto report = evaluate_encoder(gm, base, by_class, neutral);
    write_json(dir / kEncoderReport, to_json(report));

    json edges = json::array();
    for (std::size_t b = 0; b <= kHistogramBins; ++b) {
        edges.push_back(-1.0 + 2.0 * static_cast<double>(b) / static_cast<double>(kHistogramBins));
    }
    json hist = json::object();
    for (const auto& [name, h] : report.histogram) {
        hist[name] = h.counts;
    }
    write_json(dir / kEncoderPlot, json{{"bin_edges", edges}, {"counts", hist}, {"correlation", report.correlation}});
    write_file_atomic(dir / kEncoderSvg, encoder_svg(report));
    char buf[200];
    std::snprintf(buf, sizeof buf, "eval-encoder: r = %.4f, mean %s %.4f, mean %s %.4f, neutral %.4f", report.correlation,
                  gm.class_neg.c_str(), report.mean_by_class.at(gm.class_neg), gm.class_pos.c_str(),
                  report.mean_by_class.at(gm.class_pos), report.neutral_mean);
    return buf;
}

std::string cmd_eval_decoder(const PipelineConfig& cfg) {
    const fs::path dir = cfg.experiment_dir;
    const auto base = read_checkpoint(dir / kBaseDir);
    const auto gm = read_gradiend(dir / kGradiendDir, base);
    const auto held_out = read_instances(dir / kVal);
    const auto neutral = read_neutral(dir / kNeutral);
    const auto report = evaluate_decoder(gm, base, held_out, neutral, cfg.eval.decoder, cfg.eval.target_class);
    write_json(dir / kDecoderReport, to_json(report));

    json lrs = json::array(), tp = json::array(), op = json::array(), lm = json::array();
    for (const auto& e : report.grid) {
        lrs.push_back(e.lr);
        tp.push_back(e.target_prob);
        op.push_back(e.other_prob);
        lm.push_back(e.lms);
    }
    write_json(dir / kDecoderPlot, json{{"lr", lrs},
                                        {"target_prob", tp},
                                        {"other_prob", op},
                                        {"lms", lm},
                                        {"base_target_prob", report.base_target_prob},
                                        {"lms_threshold", report.lms_threshold * report.base_lms},
                                        {"selected_lr", report.selected_lr ? json(*report.selected_lr) : json()}});
    write_file_atomic(dir / kDecoderSvg, decoder_svg(report));
    if (!report.selected_lr) {
        return "eval-decoder: no learning rate improves " + report.target_class + " within the LMS bound";
    }
    char buf[200];
    std::snprintf(buf, sizeof buf, "eval-decoder: %s selects lr %g (target_prob %.4f -> %.4f, LMS %.4f -> %.4f)",
                  report.target_class.c_str(), *report.selected_lr, report.base_target_prob,
                  report.selected_entry()->target_prob, report.base_lms, report.selected_entry()->lms);
    return buf;
}

std::string cmd_rewrite(const PipelineConfig& cfg) {
    const fs::path dir = cfg.experiment_dir;
    const auto base = read_checkpoint(dir / kBaseDir);
    const auto gm = read_gradiend(dir / kGradiendDir, base);
    const auto report = decoder_report_from_json(read_json(dir / kDecoderReport));
    const auto held_out = read_instances(dir / kVal);
    const auto neutral = read_neutral(dir / kNeutral);

    const auto rewritten = rewrite(base, gm, report, cfg.eval.mode);
    save_checkpoint(rewritten, dir / kRewrittenDir);

    const auto words = class_words(held_out);
    const std::string other = report.target_class == gm.class_neg ? gm.class_pos : gm.class_neg;
    auto metrics = [&](const ModelParams& p) {
        return json{{"target_prob", class_probability(p, held_out, words.at(report.target_class))},
                    {"other_prob", class_probability(p, held_out, words.at(other))},
                    {"lms", lms(p, neutral)}};
    };
    const int h = cfg.eval.mode == RewriteMode::INCREASE ? report.direction : -report.direction;
    const json before = metrics(base);
    const json after = metrics(rewritten);
    write_json(dir / kRewriteReport, json{{"target_class", report.target_class},
                                          {"mode", std::string(to_string(cfg.eval.mode))},
                                          {"lr", *report.selected_lr},
                                          {"direction", h},
                                          {"before", before},
                                          {"after", after},
                                          {"base_checkpoint_ref", content_hash(base)},
                                          {"rewritten_checkpoint_ref", content_hash(rewritten)}});
    char buf[200];
    std::snprintf(buf, sizeof buf, "rewrite: %s %s at lr %g, target_prob %.4f -> %.4f", to_string(cfg.eval.mode).data(),
                  report.target_class.c_str(), *report.selected_lr, before["target_prob"].get<double>(),
                  after["target_prob"].get<double>());
    return buf;
}

std::string cmd_compare(const PipelineConfig& cfg) {
    const fs::path dir = cfg.experiment_dir;
    const auto paths = expand_runs(cfg);
    if (paths.size() < 2) {
        throw ConfigError("compare.runs: need at least two GRADIEND artifacts, found " + std::to_string(paths.size()));
    }
    std::vector<ImportanceProfile> profiles;
    for (const auto& p : paths) {
        const std::string id = fs::relative(p, cfg.config_dir).generic_string();
        profiles.push_back(importance_profile(load_gradiend(p), id));
    }
    // Runs of one group sit next to each other, groups in order of first appearance.
    std::vector<std::string> group_order;
    auto group_of = [&](const ImportanceProfile& p) {
        auto it = cfg.compare.groups.find(p.run_id);
        return it == cfg.compare.groups.end() ? std::string() : it->second;
    };
    for (const auto& p : profiles) {
        if (std::find(group_order.begin(), group_order.end(), group_of(p)) == group_order.end()) {
            group_order.push_back(group_of(p));
        }
    }
    std::stable_sort(profiles.begin(), profiles.end(), [&](const auto& a, const auto& b) {
        return std::find(group_order.begin(), group_order.end(), group_of(a)) <
               std::find(group_order.begin(), group_order.end(), group_of(b));
    });

    const auto matrix = overlap_matrix(profiles, cfg.compare.k, cfg.compare.groups);
    json overlap = to_json(matrix);
    overlap["labels"] = cfg.compare.labels;
    write_json(dir / kOverlap, overlap);
    const auto vis = choose_visualization(profiles.size());
    std::string kind;
    if (vis == Visualization::VENN) {
        const auto regions = venn_regions(profiles, cfg.compare.k);
        write_json(dir / kVenn, to_json(regions));
        if (profiles.size() <= 3) {
            write_file_atomic(dir / kCompareSvg, venn_svg(regions, cfg.compare.labels));
            kind = "Venn diagram";
        } else {
            write_file_atomic(dir / kCompareSvg, region_table_svg(regions, cfg.compare.labels));
            kind = "region table";
        }
    } else {
        write_file_atomic(dir / kCompareSvg, heatmap_svg(matrix, cfg.compare.labels));
        kind = "heatmap";
    }
    return "compare: " + std::to_string(profiles.size()) + " runs, top-" + std::to_string(cfg.compare.k) + ", " + kind;
}

} // namespace gradlab::cli
