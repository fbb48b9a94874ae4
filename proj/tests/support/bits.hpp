#pragma once

#include <cstring>
#include <vector>

#include "gradlab/gradcore.hpp"

namespace support {

inline bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

inline bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

// Weights, biases, kept indices and class layout; mask provenance is ignored.
inline bool same_model(const gradlab::GradiendModel& a, const gradlab::GradiendModel& b) {
    return same_bits(a.w_enc, b.w_enc) && same_bits(a.w_dec, b.w_dec) && same_bits(a.b_dec, b.b_dec) &&
           same_bits(a.b_enc, b.b_enc) && a.mask.kept == b.mask.kept && a.selection == b.selection &&
           a.signal == b.signal && a.class_neg == b.class_neg && a.class_pos == b.class_pos &&
           a.base_checkpoint_ref == b.base_checkpoint_ref;
}

} // namespace support
