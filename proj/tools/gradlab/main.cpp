#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gradlab/commands.hpp"
#include "gradlab/config.hpp"
#include "gradlab/error.hpp"

namespace {

// 0 ok, 2 malformed config or data, 3 missing or corrupted artifact, 4 internal invariant.
int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const gradlab::ConfigError*>(&e) || dynamic_cast<const gradlab::DataError*>(&e) ||
        dynamic_cast<const gradlab::IncompatibleRunsError*>(&e)) {
        return 2;
    }
    // A decoder report without a selected lr is a missing prerequisite for rewrite.
    if (dynamic_cast<const gradlab::IntegrityError*>(&e) || dynamic_cast<const gradlab::NoViableRewriteError*>(&e)) {
        return 3;
    }
    return 4;
}

struct Command {
    const char* name;
    const char* summary;
    std::string (*run)(const gradlab::cli::PipelineConfig&);
};

} // namespace

int main(int argc, char** argv) {
    const std::vector<Command> commands{
        {"gen-data", "generate the corpus, feature instances and neutral data", gradlab::cli::cmd_gen_data},
        {"train-base", "train the base language model", gradlab::cli::cmd_train_base},
        {"train-gradiend", "train the gradient autoencoder over the configured seeds", gradlab::cli::cmd_train_gradiend},
        {"eval-encoder", "evaluate encoder separation on held-out and neutral data", gradlab::cli::cmd_eval_encoder},
        {"eval-decoder", "search the decoder learning-rate grid", gradlab::cli::cmd_eval_decoder},
        {"rewrite", "apply the selected decoder update and save a new checkpoint", gradlab::cli::cmd_rewrite},
        {"compare", "compare stored GRADIEND runs by top-k parameter overlap", gradlab::cli::cmd_compare},
    };

    CLI::App app{"gradlab: gradient-based feature directions on a tiny language model"};
    app.require_subcommand(1);
    app.footer("Exit codes: 0 ok, 2 malformed config or data, 3 missing or corrupted artifact, 4 internal error.\n"
               "Set GRADLAB_THREADS to cap internal parallelism.\n\n" +
               gradlab::cli::config_key_help());

    std::string config_path;
    std::string out_dir;
    const Command* chosen = nullptr;
    for (const auto& c : commands) {
        auto* sub = app.add_subcommand(c.name, c.summary);
        sub->add_option("--config", config_path, "pipeline config file (JSON)")->required();
        sub->add_option("--out", out_dir, "experiment directory, overriding experiment_dir");
        sub->footer(gradlab::cli::config_key_help());
        sub->callback([&chosen, &c] { chosen = &c; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        std::optional<std::filesystem::path> out;
        if (!out_dir.empty()) {
            out = out_dir;
        }
        const auto cfg = gradlab::cli::load_config(config_path, out);
        std::filesystem::create_directories(cfg.experiment_dir);
        std::cout << chosen->run(cfg) << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "gradlab " << chosen->name << ": error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}
