#include "doctest.h"

#include "support/cli.hpp"
#include "support/temp_dir.hpp"

#include <gradlab/corpus.hpp>
#include <gradlab/evalkit.hpp>
#include <gradlab/gradcore.hpp>
#include <gradlab/io.hpp>
#include <gradlab/tinylm.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace gradlab;

namespace {

using support::run_cli;
using support::tree;
using support::write_text;

// Small data, default training schedule: the full pipeline runs in well under a second.
const char* kSmallConfig = R"({
  "experiment_dir": "run",
  "corpus": {"n": 4000, "seed": 7},
  "feature": {"pair": ["3SG", "3PL"], "max_per_class": 400, "neutral_max": 200},
  "base_model": {"steps": 800},
  "gradiend": {"seeds": [0]},
  "eval": {"target_class": "3SG"}
})";

const std::vector<std::string> kPipeline{"gen-data",     "train-base",   "train-gradiend",
                                         "eval-encoder", "eval-decoder", "rewrite"};

void run_pipeline(const fs::path& cwd, const std::string& config, const std::string& out = "",
                  const std::string& env = "") {
    for (const auto& command : kPipeline) {
        const auto r = run_cli(cwd, command + " --config " + config + (out.empty() ? "" : " --out " + out), env);
        INFO(command << ": " << r.output);
        REQUIRE(r.code == 0);
    }
}

// One pipeline run shared by the read-only checks below.
const fs::path& shared_run() {
    static support::TempDir dir;
    static const bool ready = [] {
        write_text(dir.path() / "small.json", kSmallConfig);
        run_pipeline(dir.path(), "small.json");
        return true;
    }();
    (void)ready;
    static const fs::path run = dir.path() / "run";
    return run;
}

} // namespace

TEST_CASE("cli: --help lists every config key and exits 0") {
    support::TempDir dir;
    const auto r = run_cli(dir.path(), "--help");
    CHECK(r.code == 0);
    for (const char* key :
         {"experiment_dir",        "corpus.grammar",         "corpus.inline",        "corpus.n",
          "corpus.seed",           "feature.preset",         "feature.classes",      "feature.pair",
          "feature.merge_map",     "feature.max_per_class",  "feature.neutral_max",  "feature.extra_excluded",
          "feature.val_fraction",  "feature.seed",           "base_model.d_embed",   "base_model.context",
          "base_model.d_hidden",   "base_model.objective",   "base_model.init_seed", "base_model.steps",
          "base_model.batch",      "base_model.lr",          "base_model.seed",      "base_model.probe_size",
          "gradiend.batch",        "gradiend.max_steps",     "gradiend.eval_steps",  "gradiend.lr",
          "gradiend.lr_scale",     "gradiend.seeds",         "gradiend.pre_prune",   "gradiend.post_prune",
          "gradiend.val_fraction", "gradiend.signal",        "gradiend.selection",   "eval.grid_lrs",
          "eval.delta",            "eval.target_class",      "eval.mode",            "compare.k",
          "compare.runs",          "compare.groups",         "compare.labels"}) {
        CHECK_MESSAGE(r.output.find(std::string(key) + " =") != std::string::npos, key);
    }
    for (const auto& command : kPipeline) {
        const auto sub = run_cli(dir.path(), command + " --help");
        CHECK(sub.code == 0);
        CHECK(sub.output.find("gradiend.selection =") != std::string::npos);
    }
    CHECK(run_cli(dir.path(), "compare --help").code == 0);
}

TEST_CASE("cli: config errors exit 2 and name the offending key") {
    support::TempDir dir;
    auto expect = [&](const std::string& config, const std::string& needle) {
        write_text(dir.path() / "c.json", config);
        const auto r = run_cli(dir.path(), "gen-data --config c.json");
        INFO(r.output);
        CHECK(r.code == 2);
        CHECK(r.output.find(needle) != std::string::npos);
    };
    expect(R"({"colour": 1})", "colour");
    expect(R"({"feature": {"bogus": 1}})", "feature.bogus");
    expect(R"({"gradiend": {"signal": {"sourc": "FACTUAL"}}})", "gradiend.signal.sourc");
    expect(R"({"gradiend": {"pre_prune": {"topk": 0.1, "extra": 2}}})", "gradiend.pre_prune.extra");
    expect(R"({"corpus": {"n": "many"}})", "corpus.n");
    expect(R"({"base_model": {"objective": "XLM"}})", "base_model.objective");
    expect(R"({"feature": {"pair": ["3SG", "9XX"]}})", "9XX");
    expect("{", "c.json");

    CHECK(run_cli(dir.path(), "gen-data --config missing.json").code == 2);
    CHECK(run_cli(dir.path(), "gen-data").code == 2);
    CHECK(run_cli(dir.path(), "").code == 2);
    CHECK(run_cli(dir.path(), "gen-data --config c.json --bogus").code == 2);
}

TEST_CASE("cli: a feature class with no matching sentences exits 2 naming the class") {
    support::TempDir dir;
    write_text(dir.path() / "c.json", R"({
      "experiment_dir": "e",
      "corpus": {"n": 500},
      "feature": {"classes": [{"id": "A", "target_words": ["he"]}, {"id": "ZZ", "target_words": ["zebra"]}],
                  "pair": ["A", "ZZ"]}
    })");
    const auto r = run_cli(dir.path(), "gen-data --config c.json");
    INFO(r.output);
    CHECK(r.code == 2);
    CHECK(r.output.find("ZZ") != std::string::npos);
    CHECK_FALSE(fs::exists(dir.path() / "e" / "train.jsonl"));
}

TEST_CASE("cli: missing artifacts exit 3") {
    support::TempDir dir;
    write_text(dir.path() / "small.json", kSmallConfig);
    for (const char* command : {"train-base", "train-gradiend", "eval-encoder", "eval-decoder", "rewrite"}) {
        const auto r = run_cli(dir.path(), std::string(command) + " --config small.json");
        INFO(command << ": " << r.output);
        CHECK(r.code == 3);
    }
    REQUIRE(run_cli(dir.path(), "gen-data --config small.json").code == 0);
    REQUIRE(run_cli(dir.path(), "train-base --config small.json").code == 0);
    CHECK(run_cli(dir.path(), "eval-encoder --config small.json").code == 3);
    REQUIRE(run_cli(dir.path(), "train-gradiend --config small.json").code == 0);
    CHECK(run_cli(dir.path(), "rewrite --config small.json").code == 3);
}

TEST_CASE("cli: corrupted artifacts exit 3") {
    support::TempDir dir;
    fs::copy(shared_run(), dir.path() / "run", fs::copy_options::recursive);
    write_text(dir.path() / "small.json", kSmallConfig);
    const fs::path run = dir.path() / "run";
    const auto pristine = tree(run);
    auto restore = [&] {
        for (const auto& [name, bytes] : pristine) {
            write_text(run / name, bytes);
        }
    };
    auto expect_3 = [&](const std::string& command) {
        const auto r = run_cli(dir.path(), command + " --config small.json");
        INFO(command << ": " << r.output);
        CHECK(r.code == 3);
        restore();
    };

    write_text(run / "base" / "manifest.json", "{\"format_version\": \"1\", \"tensors\": [");
    expect_3("eval-encoder");
    std::string manifest = pristine.at("base/manifest.json");
    const std::string version = "\"format_version\": \"1\"";
    REQUIRE(manifest.find(version) != std::string::npos);
    manifest.replace(manifest.find(version), version.size(), "\"format_version\": \"7\"");
    write_text(run / "base" / "manifest.json", manifest);
    expect_3("train-gradiend");
    const std::string& tensors = pristine.at("base/tensors.bin");
    write_text(run / "base" / "tensors.bin", tensors.substr(0, tensors.size() - 8));
    expect_3("eval-decoder");
    std::string patched = tensors;
    patched[patched.size() / 2] ^= 0x40;
    write_text(run / "base" / "tensors.bin", patched);
    expect_3("eval-encoder");
    write_text(run / "gradiend" / "gradiend.json", "not json");
    expect_3("eval-decoder");
    const std::string& mask = pristine.at("gradiend/mask.bin");
    write_text(run / "gradiend" / "mask.bin", mask.substr(0, mask.size() - 3));
    expect_3("rewrite");
    write_text(run / "decoder_report.json", "[]");
    expect_3("rewrite");

    const auto r = run_cli(dir.path(), "eval-encoder --config small.json");
    INFO(r.output);
    CHECK(r.code == 0);
}

TEST_CASE("cli: rewrite without a selected learning rate exits 3") {
    support::TempDir dir;
    fs::copy(shared_run(), dir.path() / "run", fs::copy_options::recursive);
    write_text(dir.path() / "small.json", kSmallConfig);
    json report = read_json(dir.path() / "run" / "decoder_report.json");
    report["selected_lr"] = nullptr;
    write_text(dir.path() / "run" / "decoder_report.json", dump_json(report));
    const auto r = run_cli(dir.path(), "rewrite --config small.json");
    INFO(r.output);
    CHECK(r.code == 3);
    CHECK(r.output.find("3SG") != std::string::npos);
}

TEST_CASE("cli: reruns are byte-identical, with or without a thread cap") {
    support::TempDir dir;
    write_text(dir.path() / "small.json", kSmallConfig);
    run_pipeline(dir.path(), "small.json", "again");
    run_pipeline(dir.path(), "small.json", "capped", "GRADLAB_THREADS=1");
    const auto reference = tree(shared_run());
    CHECK(reference.size() > 20);
    CHECK(tree(dir.path() / "again") == reference);
    CHECK(tree(dir.path() / "capped") == reference);

    // Rerunning a single step over an existing directory rewrites the same bytes.
    REQUIRE(run_cli(dir.path(), "train-gradiend --config small.json --out again").code == 0);
    CHECK(tree(dir.path() / "again") == reference);
}

TEST_CASE("cli: outputs leave no temporary files behind") {
    for (const auto& entry : fs::recursive_directory_iterator(shared_run())) {
        CHECK(entry.path().filename().string().find(".tmp") == std::string::npos);
    }
}

TEST_CASE("cli: convergence data has one point per evaluation and its best is the trace maximum") {
    const json conv = read_json(shared_run() / "convergence.json");
    REQUIRE(conv.at("step").size() == 4);
    CHECK(conv.at("loss").size() == 4);
    CHECK(conv.at("correlation").size() == 4);
    CHECK(conv.at("step") == json::array({250, 500, 750, 1000}));
    double best = 0.0;
    for (const auto& c : conv.at("correlation")) {
        best = std::max(best, std::abs(c.get<double>()));
    }
    CHECK(conv.at("best_abs_correlation").get<double>() == best);
    CHECK(read_json(shared_run() / "gradiend" / "trace.json") == conv);
    const json seeds = read_json(shared_run() / "seed_traces.json");
    CHECK(seeds.at("seeds").size() == 1);
}

TEST_CASE("cli: SVG outputs are self-contained") {
    std::size_t count = 0;
    for (const auto& entry : fs::recursive_directory_iterator(shared_run())) {
        if (entry.path().extension() != ".svg") {
            continue;
        }
        ++count;
        const std::string svg = read_file(entry.path());
        INFO(entry.path().string());
        CHECK(svg.find("<svg") != std::string::npos);
        CHECK(svg.find("</svg>") != std::string::npos);
        CHECK(svg.find("href") == std::string::npos);
        CHECK(svg.find("<image") == std::string::npos);
        CHECK(svg.find("url(") == std::string::npos);
        CHECK(svg.find("@import") == std::string::npos);
    }
    CHECK(count == 3);
}

TEST_CASE("cli: reports agree with the stored artifacts") {
    const fs::path run = shared_run();
    const json data = read_json(run / "data_report.json");
    CHECK(data.at("train_per_class").at("3SG").get<int>() + data.at("val_per_class").at("3SG").get<int>() ==
          data.at("instances_per_class").at("3SG").get<int>());

    const auto base = load_checkpoint(run / "base");
    const auto gm = load_gradiend(run / "gradiend");
    CHECK(gm.class_neg == "3SG");
    CHECK(gm.class_pos == "3PL");

    const json enc = read_json(run / "encoder_report.json");
    CHECK(enc.at("mean_by_feature_class").at("3SG").get<double>() < 0.0);
    CHECK(enc.at("mean_by_feature_class").at("3PL").get<double>() > 0.0);

    // The saved rewritten checkpoint reproduces the reported target probability exactly.
    const json report = read_json(run / "rewrite_report.json");
    const auto rewritten = load_checkpoint(run / "rewritten");
    const auto held_out = parse_prediction_jsonl(read_file(run / "val.jsonl"));
    const auto words = class_words(held_out);
    CHECK(class_probability(rewritten, held_out, words.at("3SG")) ==
          report.at("after").at("target_prob").get<double>());
    CHECK(class_probability(base, held_out, words.at("3SG")) == report.at("before").at("target_prob").get<double>());
    CHECK(report.at("after").at("target_prob").get<double>() > report.at("before").at("target_prob").get<double>());

    const json decoder = read_json(run / "decoder_report.json");
    CHECK(report.at("lr") == decoder.at("selected_lr"));
}

TEST_CASE("cli: compare over stored runs") {
    support::TempDir dir;
    auto config = [](const std::string& name, const std::string& pair, int seed) {
        return R"({"experiment_dir": "runs/)" + name + R"(", "corpus": {"n": 4000},
          "feature": {"pair": )" + pair + R"(, "max_per_class": 400, "neutral_max": 200},
          "base_model": {"steps": 800}, "gradiend": {"seeds": [)" + std::to_string(seed) + "]}}";
    };
    write_text(dir.path() / "a.json", config("a", R"(["3SG", "3PL"])", 11));
    write_text(dir.path() / "b.json", config("b", R"(["3SG", "3PL"])", 12));
    write_text(dir.path() / "c.json", config("c", R"(["1SG", "1PL"])", 11));
    for (const char* name : {"a.json", "b.json", "c.json"}) {
        for (const char* command : {"gen-data", "train-base", "train-gradiend"}) {
            const auto r = run_cli(dir.path(), std::string(command) + " --config " + name);
            INFO(r.output);
            REQUIRE(r.code == 0);
        }
    }
    write_text(dir.path() / "cmp.json", R"({"experiment_dir": "out", "compare": {"k": 200, "runs": ["runs/*/gradiend"],
        "groups": {"runs/c/gradiend": "first person"}, "labels": {"runs/a/gradiend": "A"}}})");
    const auto r = run_cli(dir.path(), "compare --config cmp.json");
    INFO(r.output);
    REQUIRE(r.code == 0);
    const json overlap = read_json(dir.path() / "out" / "overlap.json");
    CHECK(overlap.at("run_ids").size() == 3);
    const json venn = read_json(dir.path() / "out" / "venn.json");
    std::size_t total = 0;
    for (const auto& [key, count] : venn.at("region_counts").items()) {
        total += count.get<std::size_t>();
    }
    CHECK(total == venn.at("union_size").get<std::size_t>());
    const std::string svg = read_file(dir.path() / "out" / "compare.svg");
    CHECK(svg.find("href") == std::string::npos);
    CHECK(svg.find(">A (200)<") != std::string::npos);

    const auto first = tree(dir.path() / "out");
    REQUIRE(run_cli(dir.path(), "compare --config cmp.json").code == 0);
    CHECK(tree(dir.path() / "out") == first);

    write_text(dir.path() / "none.json", R"({"compare": {"runs": ["nowhere/*/gradiend", "runs/a/gradiend"]}})");
    CHECK(run_cli(dir.path(), "compare --config none.json").code == 3);
    write_text(dir.path() / "one.json", R"({"compare": {"runs": ["runs/a/gradiend"]}})");
    CHECK(run_cli(dir.path(), "compare --config one.json").code == 2);

    // A run trained on a different base checkpoint cannot be compared.
    write_text(dir.path() / "d.json", R"({"experiment_dir": "other/d", "corpus": {"n": 4000},
      "feature": {"max_per_class": 400, "neutral_max": 200},
      "base_model": {"steps": 800, "init_seed": 43}, "gradiend": {"seeds": [11]}})");
    for (const char* command : {"gen-data", "train-base", "train-gradiend"}) {
        REQUIRE(run_cli(dir.path(), std::string(command) + " --config d.json").code == 0);
    }
    write_text(dir.path() / "mixed.json", R"({"compare": {"runs": ["runs/a/gradiend", "other/d/gradiend"]}})");
    const auto mixed = run_cli(dir.path(), "compare --config mixed.json");
    INFO(mixed.output);
    CHECK(mixed.code == 2);
}
