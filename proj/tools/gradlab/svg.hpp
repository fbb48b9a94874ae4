#pragma once

#include <map>
#include <string>
#include <vector>

#include "gradlab/compare.hpp"
#include "gradlab/evalkit.hpp"
#include "gradlab/gradcore.hpp"

namespace gradlab::cli {

// Self-contained SVG documents (no scripts, fonts or external references).
// Numbers are printed with fixed precision so reruns are byte-identical.

// Loss (left axis) and validation correlation (right axis) against step.
std::string convergence_svg(const TrainingTrace& trace);

// Per-source-set histograms of encoded values over [-1, 1], as fractions of each set.
std::string encoder_svg(const EncoderReport& report);

// target_prob, other_prob and LMS across the learning-rate grid; the selected lr is marked.
std::string decoder_svg(const DecoderReport& report);

// Proportional-circle Venn diagram for 2 or 3 sets with region counts.
std::string venn_svg(const VennRegions& regions, const std::map<std::string, std::string>& labels);

// Region-count table for 4 to 6 sets.
std::string region_table_svg(const VennRegions& regions, const std::map<std::string, std::string>& labels);

// Overlap heatmap with values x100, run labels and separators between groups.
std::string heatmap_svg(const OverlapMatrix& matrix, const std::map<std::string, std::string>& labels);

} // namespace gradlab::cli
