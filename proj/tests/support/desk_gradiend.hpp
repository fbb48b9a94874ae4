#pragma once

// Default-config GRADIEND on the desk scenario, trained once per test binary.

#include "gradlab/gradcore.hpp"
#include "support/desk_scenario.hpp"

namespace desk {

inline const gradlab::GradiendTrainResult& trained_gradiend() {
    static const gradlab::GradiendTrainResult r = [] {
        const auto& s = scenario();
        return gradlab::train_gradiend(s.base.params, s.train, {}, default_gradiend_config(),
                                       gradlab::default_selection(s.base.params));
    }();
    return r;
}

} // namespace desk
