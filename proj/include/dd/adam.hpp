#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "dd/errors.hpp"
#include "dd/tensor.hpp"

namespace dd {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam over a named parameter map. Moment tensors mirror
// parameter shapes; the step counter advances by exactly one per update.
template <typename S>
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    std::uint64_t step_count() const { return step_; }

    void update(std::map<std::string, Tensor<S>>& params,
                const std::map<std::string, const Tensor<S>*>& grads) {
        ++step_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (auto& [name, p] : params) {
            auto git = grads.find(name);
            if (git == grads.end()) throw ArgumentError("adam: missing gradient for " + name);
            const Tensor<S>& g = *git->second;
            if (g.dims != p.dims)
                throw ShapeError("adam: grad shape " + shape_str(g.dims) + " vs param " + shape_str(p.dims) +
                                 " for " + name);
            Tensor<S>& m = moment(m_, name, p.dims);
            Tensor<S>& v = moment(v_, name, p.dims);
            const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
            const S lr = static_cast<S>(cfg_.lr), eps = static_cast<S>(cfg_.eps);
            const S ic1 = static_cast<S>(1.0 / c1), ic2 = static_cast<S>(1.0 / c2);
            for (std::size_t i = 0; i < p.numel(); ++i) {
                const S gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (S(1) - b1) * gi;
                v.data[i] = b2 * v.data[i] + (S(1) - b2) * gi * gi;
                const S mhat = m.data[i] * ic1;
                const S vhat = v.data[i] * ic2;
                p.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

    // Exposed for checkpointing.
    std::map<std::string, Tensor<S>>& first_moments() { return m_; }
    std::map<std::string, Tensor<S>>& second_moments() { return v_; }
    const std::map<std::string, Tensor<S>>& first_moments() const { return m_; }
    const std::map<std::string, Tensor<S>>& second_moments() const { return v_; }
    void restore(std::uint64_t step) { step_ = step; }

private:
    AdamConfig cfg_;
    std::uint64_t step_ = 0;
    std::map<std::string, Tensor<S>> m_, v_;

    static Tensor<S>& moment(std::map<std::string, Tensor<S>>& store, const std::string& name, const Shape& dims) {
        auto it = store.find(name);
        if (it == store.end()) it = store.emplace(name, Tensor<S>::zeros(dims)).first;
        if (it->second.dims != dims) throw ShapeError("adam: moment shape drift for " + name);
        return it->second;
    }
};

}  // namespace dd
