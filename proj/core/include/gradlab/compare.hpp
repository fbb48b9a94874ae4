#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradlab/gradcore.hpp"

namespace gradlab {

// A base-model coordinate: (tensor, row-major index). Orders by tensor then index.
struct Coordinate {
    TensorId tensor = TensorId::E;
    std::size_t index = 0;

    friend auto operator<=>(const Coordinate&, const Coordinate&) = default;
};

struct ImportanceProfile {
    std::string run_id;
    // Every kept coordinate, sorted by Coordinate; unkept coordinates are implicitly zero.
    std::vector<std::pair<Coordinate, double>> entries;
    std::string base_checkpoint_ref;
};

ImportanceProfile importance_profile(const GradiendModel& gm, std::string run_id);

struct TopkSet {
    std::vector<Coordinate> coordinates; // sorted by Coordinate
    std::size_t shortfall = 0;           // k minus the number of available coordinates, if positive
};

// Highest importance first, ties by coordinate order.
TopkSet topk_set(const ImportanceProfile& profile, std::size_t k);

struct OverlapMatrix {
    std::vector<std::string> run_ids;
    std::size_t k = 0;
    std::vector<std::vector<double>> values;
    std::map<std::string, std::string> group_labels;
    std::vector<std::size_t> shortfalls;
};

OverlapMatrix overlap_matrix(std::span<const ImportanceProfile> profiles, std::size_t k,
                             const std::map<std::string, std::string>& groups = {});

struct VennRegions {
    std::vector<std::string> set_ids;
    // Keyed by membership bitmask (bit i = set_ids[i]); only non-empty regions with count > 0 are listed.
    std::map<unsigned, std::size_t> region_counts;
    std::size_t union_size = 0;

    // "A+B" style key with ids sorted lexicographically.
    std::string region_key(unsigned mask) const;
};

inline constexpr std::size_t kMaxVennSets = 6;

VennRegions venn_regions(std::span<const ImportanceProfile> profiles, std::size_t k);

enum class Visualization { VENN, HEATMAP };
Visualization choose_visualization(std::size_t n_runs);

json to_json(const OverlapMatrix& matrix);
json to_json(const VennRegions& regions);

} // namespace gradlab
