#pragma once

// Central finite differences evaluated in binary128 (libquadmath). Each
// perturbed loss reuses the unperturbed quad forward pass and recomputes only
// the quantities that depend on the perturbed entry; nothing here calls into
// the gradient code under test.

#include <quadmath.h>

#include <algorithm>
#include <map>
#include <vector>

#include "gradlab/tinylm.hpp"

namespace oracle {

using quad = __float128;

// exp(u); for |u| <= 2^-16 a degree-7 Taylor polynomial, whose truncation
// error (< 1e-43) is far below binary128 rounding, replaces the slower expq.
inline quad exp_near_zero(quad u) {
    static const quad coeff[8] = {quad(1), quad(1), quad(1) / 2, quad(1) / 6, quad(1) / 24, quad(1) / 120,
                                  quad(1) / 720, quad(1) / 5040};
    if (fabsq(u) > static_cast<quad>(0x1p-16)) {
        return expq(u);
    }
    quad sum = coeff[7];
    for (int n = 6; n >= 0; --n) {
        sum = sum * u + coeff[n];
    }
    return sum;
}

class QuadLoss {
public:
    QuadLoss(const gradlab::ModelParams& p, const std::vector<gradlab::TokenId>& ctx, gradlab::TokenId label)
        : p_(p), ctx_(ctx), label_(label), vocab_(p.vocab.size()), d_(p.config.d_embed), hidden_(p.config.d_hidden) {
        const auto& E = p[gradlab::TensorId::E].data;
        const auto& W1 = p[gradlab::TensorId::W1].data;
        const auto& b1 = p[gradlab::TensorId::b1].data;
        for (auto t : ctx) {
            for (std::size_t k = 0; k < d_; ++k) {
                x_.push_back(E[t * d_ + k]);
            }
        }
        a_.assign(hidden_, 0);
        h_.assign(hidden_, 0);
        for (std::size_t j = 0; j < hidden_; ++j) {
            quad s = b1[j];
            for (std::size_t i = 0; i < x_.size(); ++i) {
                s += x_[i] * static_cast<quad>(W1[i * hidden_ + j]);
            }
            a_[j] = s;
            h_[j] = tanhq(s);
        }
        z_ = logits(h_);
        m_ = *std::max_element(z_.begin(), z_.end());
        total_ = 0;
        for (auto v : z_) {
            e_.push_back(expq(v - m_));
            total_ += e_.back();
        }
    }

    std::size_t inputs() const { return x_.size(); }

    // Loss with the given logits.
    quad loss_of(const std::vector<quad>& z) const {
        quad m = z[0];
        for (auto v : z) {
            m = v > m ? v : m;
        }
        quad total = 0;
        for (auto v : z) {
            total += expq(v - m);
        }
        return m + logq(total) - z[label_];
    }

    // Only logit k moves: update the cached normaliser instead of re-summing.
    quad with_logit(std::size_t k, quad delta) const {
        const quad zk = z_[k] + delta;
        const quad total = total_ - e_[k] + expq(zk - m_);
        return m_ + logq(total) - (k == label_ ? zk : z_[label_]);
    }

    quad with_preactivation(std::size_t j, quad delta) const {
        const auto& W2 = p_[gradlab::TensorId::W2].data;
        const quad dh = tanhq(a_[j] + delta) - h_[j];
        quad total = 0;
        for (std::size_t k = 0; k < vocab_; ++k) {
            total += e_[k] * exp_near_zero(dh * static_cast<quad>(W2[j * vocab_ + k]));
        }
        return m_ + logq(total) - (z_[label_] + dh * static_cast<quad>(W2[j * vocab_ + label_]));
    }

    // Shift of the given input coordinates (context slots sharing an embedding row move together).
    quad with_inputs(const std::vector<std::size_t>& slots, quad delta) const {
        const auto& W1 = p_[gradlab::TensorId::W1].data;
        std::vector<quad> h(hidden_);
        for (std::size_t j = 0; j < hidden_; ++j) {
            quad a = a_[j];
            for (auto i : slots) {
                a += delta * static_cast<quad>(W1[i * hidden_ + j]);
            }
            h[j] = tanhq(a);
        }
        return loss_of(logits(h));
    }

    quad input(std::size_t i) const { return x_[i]; }
    quad hidden(std::size_t j) const { return h_[j]; }

private:
    std::vector<quad> logits(const std::vector<quad>& h) const {
        const auto& W2 = p_[gradlab::TensorId::W2].data;
        const auto& b2 = p_[gradlab::TensorId::b2].data;
        std::vector<quad> z(vocab_);
        for (std::size_t k = 0; k < vocab_; ++k) {
            quad s = b2[k];
            for (std::size_t j = 0; j < hidden_; ++j) {
                s += h[j] * static_cast<quad>(W2[j * vocab_ + k]);
            }
            z[k] = s;
        }
        return z;
    }

    const gradlab::ModelParams& p_;
    std::vector<gradlab::TokenId> ctx_;
    gradlab::TokenId label_;
    std::size_t vocab_, d_, hidden_;
    std::vector<quad> x_, a_, h_, z_, e_;
    quad m_ = 0;
    quad total_ = 0;
};

// (loss(theta + h e_i) - loss(theta - h e_i)) / 2h for every entry of every tensor.
inline std::map<gradlab::TensorId, std::vector<double>> finite_difference(const gradlab::ModelParams& p,
                                                                          const std::vector<gradlab::TokenId>& ctx,
                                                                          gradlab::TokenId label, double step = 1e-5) {
    using gradlab::TensorId;
    const QuadLoss f(p, ctx, label);
    const quad h = step;
    auto central = [&](auto&& loss_at) { return static_cast<double>((loss_at(h) - loss_at(-h)) / (2 * h)); };
    const std::size_t V = p.vocab.size();
    const std::size_t d = p.config.d_embed;
    const std::size_t H = p.config.d_hidden;
    std::map<TensorId, std::vector<double>> out;

    auto& gE = out[TensorId::E];
    gE.assign(V * d, 0.0);
    for (std::size_t t = 0; t < V; ++t) {
        std::vector<std::size_t> slots;
        for (std::size_t s = 0; s < ctx.size(); ++s) {
            if (ctx[s] == t) {
                slots.push_back(s);
            }
        }
        if (slots.empty()) {
            continue; // the loss does not read this row
        }
        for (std::size_t k = 0; k < d; ++k) {
            std::vector<std::size_t> inputs;
            for (auto s : slots) {
                inputs.push_back(s * d + k);
            }
            gE[t * d + k] = central([&](quad dx) { return f.with_inputs(inputs, dx); });
        }
    }
    auto& gW1 = out[TensorId::W1];
    gW1.assign(f.inputs() * H, 0.0);
    for (std::size_t i = 0; i < f.inputs(); ++i) {
        for (std::size_t j = 0; j < H; ++j) {
            gW1[i * H + j] = central([&](quad dw) { return f.with_preactivation(j, dw * f.input(i)); });
        }
    }
    auto& gb1 = out[TensorId::b1];
    gb1.assign(H, 0.0);
    for (std::size_t j = 0; j < H; ++j) {
        gb1[j] = central([&](quad db) { return f.with_preactivation(j, db); });
    }
    auto& gW2 = out[TensorId::W2];
    gW2.assign(H * V, 0.0);
    for (std::size_t j = 0; j < H; ++j) {
        for (std::size_t k = 0; k < V; ++k) {
            gW2[j * V + k] = central([&](quad dw) { return f.with_logit(k, dw * f.hidden(j)); });
        }
    }
    auto& gb2 = out[TensorId::b2];
    gb2.assign(V, 0.0);
    for (std::size_t k = 0; k < V; ++k) {
        gb2[k] = central([&](quad db) { return f.with_logit(k, db); });
    }
    return out;
}

} // namespace oracle
