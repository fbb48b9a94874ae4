#include "gradlab/compare.hpp"

#include <algorithm>

#include "gradlab/error.hpp"

namespace gradlab {

ImportanceProfile importance_profile(const GradiendModel& gm, std::string run_id) {
    gm.validate();
    const auto importance = gradiend_importance(gm);
    if (std::all_of(importance.begin(), importance.end(), [](double v) { return v == 0.0; })) {
        throw DataError("run " + run_id + " has all-zero encoder and decoder weights");
    }
    ImportanceProfile profile;
    profile.run_id = std::move(run_id);
    profile.base_checkpoint_ref = gm.base_checkpoint_ref;
    profile.entries.reserve(importance.size());
    for (std::size_t i = 0; i < importance.size(); ++i) {
        const auto loc = gm.selection.locate(gm.mask.kept[i]);
        profile.entries.push_back({Coordinate{loc.tensor, loc.index}, importance[i]});
    }
    std::sort(profile.entries.begin(), profile.entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return profile;
}

TopkSet topk_set(const ImportanceProfile& profile, std::size_t k) {
    if (k == 0) {
        throw ConfigError("top-k needs k >= 1");
    }
    std::vector<std::pair<Coordinate, double>> ranked = profile.entries;
    const std::size_t take = std::min(k, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take), ranked.end(),
                      [](const auto& a, const auto& b) {
                          if (a.second != b.second) {
                              return a.second > b.second;
                          }
                          return a.first < b.first;
                      });
    TopkSet out;
    out.coordinates.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        out.coordinates.push_back(ranked[i].first);
    }
    std::sort(out.coordinates.begin(), out.coordinates.end());
    out.shortfall = k - take;
    return out;
}

namespace {

void require_shared_base(std::span<const ImportanceProfile> profiles) {
    for (const auto& p : profiles) {
        if (p.base_checkpoint_ref != profiles.front().base_checkpoint_ref) {
            throw IncompatibleRunsError("runs " + profiles.front().run_id + " and " + p.run_id +
                                        " were trained on different base models");
        }
    }
}

std::size_t intersection_size(const std::vector<Coordinate>& a, const std::vector<Coordinate>& b) {
    std::size_t n = 0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i < *j) {
            ++i;
        } else if (*j < *i) {
            ++j;
        } else {
            ++n;
            ++i;
            ++j;
        }
    }
    return n;
}

} // namespace

OverlapMatrix overlap_matrix(std::span<const ImportanceProfile> profiles, std::size_t k,
                             const std::map<std::string, std::string>& groups) {
    if (profiles.size() < 2) {
        throw ConfigError("overlap matrix needs at least two runs");
    }
    require_shared_base(profiles);
    std::vector<TopkSet> sets;
    sets.reserve(profiles.size());
    for (const auto& p : profiles) {
        sets.push_back(topk_set(p, k));
    }
    OverlapMatrix out;
    out.k = k;
    const std::size_t n = profiles.size();
    out.values.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        out.run_ids.push_back(profiles[i].run_id);
        out.shortfalls.push_back(sets[i].shortfall);
        out.values[i][i] = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = static_cast<double>(intersection_size(sets[i].coordinates, sets[j].coordinates)) /
                             static_cast<double>(k);
            out.values[i][j] = v;
            out.values[j][i] = v;
        }
    }
    for (const auto& id : out.run_ids) {
        if (auto it = groups.find(id); it != groups.end()) {
            out.group_labels[id] = it->second;
        }
    }
    return out;
}

std::string VennRegions::region_key(unsigned mask) const {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < set_ids.size(); ++i) {
        if (mask & (1u << i)) {
            ids.push_back(set_ids[i]);
        }
    }
    std::sort(ids.begin(), ids.end());
    std::string key;
    for (const auto& id : ids) {
        if (!key.empty()) {
            key += '+';
        }
        key += id;
    }
    return key;
}

VennRegions venn_regions(std::span<const ImportanceProfile> profiles, std::size_t k) {
    if (profiles.size() < 2 || profiles.size() > kMaxVennSets) {
        throw ConfigError("Venn regions need 2 to 6 runs, got " + std::to_string(profiles.size()) +
                          "; use overlap_matrix for larger collections");
    }
    require_shared_base(profiles);
    std::map<Coordinate, unsigned> membership;
    VennRegions out;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        out.set_ids.push_back(profiles[i].run_id);
        for (const auto& c : topk_set(profiles[i], k).coordinates) {
            membership[c] |= 1u << i;
        }
    }
    for (const auto& [coord, mask] : membership) {
        ++out.region_counts[mask];
    }
    out.union_size = membership.size();
    return out;
}

Visualization choose_visualization(std::size_t n_runs) {
    if (n_runs < 2) {
        throw ConfigError("comparison needs at least two runs");
    }
    return n_runs <= kMaxVennSets ? Visualization::VENN : Visualization::HEATMAP;
}

json to_json(const OverlapMatrix& matrix) {
    json pct = json::array();
    for (const auto& row : matrix.values) {
        json r = json::array();
        for (double v : row) {
            r.push_back(v * 100.0);
        }
        pct.push_back(r);
    }
    json shortfalls = json::object();
    for (std::size_t i = 0; i < matrix.run_ids.size(); ++i) {
        shortfalls[matrix.run_ids[i]] = matrix.shortfalls[i];
    }
    return json{{"run_ids", matrix.run_ids}, {"k", matrix.k},           {"matrix", matrix.values},
                {"matrix_pct", pct},         {"groups", matrix.group_labels}, {"shortfalls", shortfalls}};
}

json to_json(const VennRegions& regions) {
    json counts = json::object();
    for (const auto& [mask, count] : regions.region_counts) {
        counts[regions.region_key(mask)] = count;
    }
    return json{{"set_ids", regions.set_ids}, {"region_counts", counts}, {"union_size", regions.union_size}};
}

} // namespace gradlab
