#pragma once

#include <string>

#include "gradlab/config.hpp"

namespace gradlab::cli {

// Each command reads its inputs from and writes its outputs to
// cfg.experiment_dir, returning a one-line summary for the terminal.
std::string cmd_gen_data(const PipelineConfig& cfg);
std::string cmd_train_base(const PipelineConfig& cfg);
std::string cmd_train_gradiend(const PipelineConfig& cfg);
std::string cmd_eval_encoder(const PipelineConfig& cfg);
std::string cmd_eval_decoder(const PipelineConfig& cfg);
std::string cmd_rewrite(const PipelineConfig& cfg);
std::string cmd_compare(const PipelineConfig& cfg);

} // namespace gradlab::cli
