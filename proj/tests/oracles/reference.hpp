#pragma once

// Test-only reference implementations. Nothing here calls into the code under
// test except for plain data accessors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gradlab/tinylm.hpp"

namespace oracle {

// Straight transcription of Vigna's splitmix64.c.
struct RefSplitMix {
    std::uint64_t x;
    std::uint64_t next() {
        std::uint64_t z = (x += 0x9e3779b97f4a7c15);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9;
        z = (z ^ (z >> 27)) * 0x94d049bb133111eb;
        return z ^ (z >> 31);
    }
};

// Long-double forward pass over loose arrays (no shared code with tinylm).
struct RefModel {
    std::size_t vocab = 0;
    std::size_t d = 0;
    std::size_t hidden = 0;
    std::vector<long double> E, W1, b1, W2, b2;

    static RefModel from(const gradlab::ModelParams& p) {
        RefModel m;
        m.vocab = p.vocab.size();
        m.d = p.config.d_embed;
        m.hidden = p.config.d_hidden;
        auto copy = [](const gradlab::Tensor& t) { return std::vector<long double>(t.data.begin(), t.data.end()); };
        m.E = copy(p[gradlab::TensorId::E]);
        m.W1 = copy(p[gradlab::TensorId::W1]);
        m.b1 = copy(p[gradlab::TensorId::b1]);
        m.W2 = copy(p[gradlab::TensorId::W2]);
        m.b2 = copy(p[gradlab::TensorId::b2]);
        return m;
    }

    std::vector<long double>& tensor(gradlab::TensorId id) {
        switch (id) {
        case gradlab::TensorId::E:
            return E;
        case gradlab::TensorId::W1:
            return W1;
        case gradlab::TensorId::b1:
            return b1;
        case gradlab::TensorId::W2:
            return W2;
        case gradlab::TensorId::b2:
            return b2;
        }
        return E;
    }

    std::vector<long double> probs(const std::vector<gradlab::TokenId>& ctx) const {
        std::vector<long double> x;
        for (auto t : ctx) {
            for (std::size_t k = 0; k < d; ++k) {
                x.push_back(E[t * d + k]);
            }
        }
        std::vector<long double> h(hidden);
        for (std::size_t j = 0; j < hidden; ++j) {
            long double a = b1[j];
            for (std::size_t i = 0; i < x.size(); ++i) {
                a += x[i] * W1[i * hidden + j];
            }
            h[j] = std::tanh(a);
        }
        std::vector<long double> z(vocab);
        long double zmax = -1e300L;
        for (std::size_t k = 0; k < vocab; ++k) {
            long double s = b2[k];
            for (std::size_t j = 0; j < hidden; ++j) {
                s += h[j] * W2[j * vocab + k];
            }
            z[k] = s;
            zmax = std::max(zmax, s);
        }
        long double total = 0;
        for (auto& v : z) {
            v = std::exp(v - zmax);
            total += v;
        }
        for (auto& v : z) {
            v /= total;
        }
        return z;
    }

    long double loss(const std::vector<gradlab::TokenId>& ctx, gradlab::TokenId label) const {
        return -std::log(probs(ctx)[label]);
    }
};

inline double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

// Indices of the k largest values (ties to lower index) by a full stable sort.
inline std::vector<std::size_t> full_sort_topk(const std::vector<double>& v, std::size_t k) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        idx[i] = i;
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
    idx.resize(std::min(k, idx.size()));
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline double direct_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= x.size();
    my /= y.size();
    long double c = 0, vx = 0, vy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        c += (x[i] - mx) * (y[i] - my);
        vx += (x[i] - mx) * (x[i] - mx);
        vy += (y[i] - my) * (y[i] - my);
    }
    return static_cast<double>(c / std::sqrt(vx * vy));
}

} // namespace oracle
