#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dd/diffusion.hpp"
#include "dd/errors.hpp"
#include "dd/graph.hpp"
#include "dd/rng.hpp"
#include "dd/tensor.hpp"

namespace dd {

enum class Arch { Mlp, Cnn };

inline std::string arch_name(Arch a) { return a == Arch::Mlp ? "mlp" : "cnn"; }
inline Arch arch_from_name(const std::string& s) {
    if (s == "mlp") return Arch::Mlp;
    if (s == "cnn") return Arch::Cnn;
    throw ArgumentError("unknown architecture: " + s);
}

// Architecture description. `hidden` holds layer widths for the MLP and
// per-stage channel counts for the CNN. The CNN expects input_dims
// [C, H, W]; the MLP flattens whatever it is given.
struct DenoiserSpec {
    Arch arch = Arch::Mlp;
    Shape input_dims;
    std::vector<std::size_t> hidden;
    std::size_t time_dim = 16;

    std::size_t sample_numel() const { return shape_numel(input_dims); }

    void validate() const {
        if (input_dims.empty() || sample_numel() == 0) throw ArgumentError("denoiser spec: empty input dims");
        if (hidden.empty()) throw ArgumentError("denoiser spec: need at least one hidden stage");
        if (time_dim == 0 || time_dim % 2 != 0) throw ArgumentError("denoiser spec: time_dim must be positive even");
        if (arch == Arch::Cnn && input_dims.size() != 3)
            throw ArgumentError("cnn spec: input dims must be [C,H,W]");
    }

    bool operator==(const DenoiserSpec&) const = default;
};

// Sinusoidal timestep features: dim/2 sines then dim/2 cosines at
// geometrically spaced frequencies 10000^(-i/(dim/2)).
inline std::vector<double> time_embedding(int t, int dim, int T) {
    if (dim <= 0 || dim % 2 != 0) throw ArgumentError("time embedding dim must be positive even");
    if (t < 0 || t > T) throw ArgumentError("time embedding: t outside [0, T]");
    const int half = dim / 2;
    std::vector<double> out(static_cast<std::size_t>(dim));
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        const double arg = static_cast<double>(t) * freq;
        out[static_cast<std::size_t>(i)] = std::sin(arg);
        out[static_cast<std::size_t>(half + i)] = std::cos(arg);
    }
    return out;
}

template <typename S>
Tensor<S> time_embedding_batch(std::span<const int> ts, std::size_t dim, int T) {
    Tensor<S> out = Tensor<S>::zeros({ts.size(), dim});
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const auto e = time_embedding(ts[i], static_cast<int>(dim), T);
        for (std::size_t j = 0; j < dim; ++j) out.data[i * dim + j] = static_cast<S>(e[j]);
    }
    return out;
}

// Handle to a denoiser subgraph: the two input nodes, one node per named
// parameter, and the two heads (both shaped like the input).
struct DenoiserBinding {
    NodeId x = kNoNode;
    NodeId temb = kNoNode;
    std::vector<std::pair<std::string, NodeId>> params;
    NodeId eps = kNoNode;
    NodeId v = kNoNode;
};

namespace detail {

// Broadcasts a per-sample per-channel bias [B,C] across the spatial grid by
// multiplying with a constant ones row: [B*C,1] x [1,H*W] -> [B,C,H,W].
template <typename S>
NodeId spread_spatial(Graph<S>& g, NodeId bc, std::size_t B, std::size_t C, std::size_t H, std::size_t W) {
    NodeId col = g.reshape(bc, {B * C, 1});
    NodeId ones = g.constant(Tensor<S>::full({1, H * W}, S(1)), "ones_hw");
    return g.reshape(g.matmul(col, ones), {B, C, H, W});
}

template <typename S>
NodeId linear(Graph<S>& g, DenoiserBinding& b, const std::string& name, NodeId x, std::size_t in, std::size_t out) {
    NodeId w = g.input(name + ".w", {in, out}, true);
    NodeId bias = g.input(name + ".b", {out}, true);
    b.params.emplace_back(name + ".w", w);
    b.params.emplace_back(name + ".b", bias);
    return g.add(g.matmul(x, w), bias);
}

template <typename S>
NodeId conv(Graph<S>& g, DenoiserBinding& b, const std::string& name, NodeId x, std::size_t cin, std::size_t cout) {
    NodeId w = g.input(name + ".w", {cout, cin, 3, 3}, true);
    NodeId bias = g.input(name + ".b", {cout}, true);
    b.params.emplace_back(name + ".w", w);
    b.params.emplace_back(name + ".b", bias);
    return g.conv2d(x, w, bias);
}

}  // namespace detail

// Builds the denoiser forward pass for one batch size. MLP: flattened input
// concatenated with the time features, silu stack, two linear heads. CNN:
// 3x3 conv stem, projected time features added as a per-channel bias, silu
// conv stack, two conv heads. Heads are zero-initialized elsewhere so both
// start as the zero function.
template <typename S>
DenoiserBinding build_denoiser_graph(Graph<S>& g, const DenoiserSpec& spec, std::size_t batch) {
    spec.validate();
    DenoiserBinding b;
    Shape in_dims = spec.input_dims;
    in_dims.insert(in_dims.begin(), batch);
    b.x = g.input("x", in_dims);
    b.temb = g.input("temb", {batch, spec.time_dim});
    if (spec.arch == Arch::Mlp) {
        const std::size_t d = spec.sample_numel();
        NodeId h = g.concat(g.reshape(b.x, {batch, d}), b.temb, 1);
        std::size_t width = d + spec.time_dim;
        for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
            h = g.silu(detail::linear(g, b, "fc" + std::to_string(i + 1), h, width, spec.hidden[i]));
            width = spec.hidden[i];
        }
        b.eps = g.reshape(detail::linear(g, b, "head_eps", h, width, d), in_dims);
        b.v = g.reshape(detail::linear(g, b, "head_v", h, width, d), in_dims);
    } else {
        const std::size_t C = spec.input_dims[0], H = spec.input_dims[1], W = spec.input_dims[2];
        NodeId h = g.silu(detail::conv(g, b, "stem", b.x, C, spec.hidden[0]));
        NodeId tb = detail::linear(g, b, "tproj", b.temb, spec.time_dim, spec.hidden[0]);
        h = g.add(h, detail::spread_spatial(g, tb, batch, spec.hidden[0], H, W));
        std::size_t ch = spec.hidden[0];
        for (std::size_t i = 1; i < spec.hidden.size(); ++i) {
            h = g.silu(detail::conv(g, b, "conv" + std::to_string(i), h, ch, spec.hidden[i]));
            ch = spec.hidden[i];
        }
        b.eps = detail::conv(g, b, "head_eps", h, ch, C);
        b.v = detail::conv(g, b, "head_v", h, ch, C);
    }
    return b;
}

// He-style init for the hidden stack, zeros for the output heads. Weights
// are drawn in a fixed layer order from the given stream.
template <typename S>
std::map<std::string, Tensor<S>> init_denoiser_params(const DenoiserSpec& spec, CounterRng& rng) {
    spec.validate();
    std::map<std::string, Tensor<S>> params;
    auto normal_scaled = [&](Shape dims, double fan_in) {
        Tensor<S> t = Tensor<S>::zeros(std::move(dims));
        const double s = std::sqrt(2.0 / fan_in);
        for (auto& v : t.data) v = static_cast<S>(rng.normal() * s);
        return t;
    };
    if (spec.arch == Arch::Mlp) {
        const std::size_t d = spec.sample_numel();
        std::size_t width = d + spec.time_dim;
        for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
            const std::string name = "fc" + std::to_string(i + 1);
            params[name + ".w"] = normal_scaled({width, spec.hidden[i]}, static_cast<double>(width));
            params[name + ".b"] = Tensor<S>::zeros({spec.hidden[i]});
            width = spec.hidden[i];
        }
        params["head_eps.w"] = Tensor<S>::zeros({width, d});
        params["head_eps.b"] = Tensor<S>::zeros({d});
        params["head_v.w"] = Tensor<S>::zeros({width, d});
        params["head_v.b"] = Tensor<S>::zeros({d});
    } else {
        const std::size_t C = spec.input_dims[0];
        params["stem.w"] = normal_scaled({spec.hidden[0], C, 3, 3}, static_cast<double>(C) * 9.0);
        params["stem.b"] = Tensor<S>::zeros({spec.hidden[0]});
        params["tproj.w"] = normal_scaled({spec.time_dim, spec.hidden[0]}, static_cast<double>(spec.time_dim));
        params["tproj.b"] = Tensor<S>::zeros({spec.hidden[0]});
        std::size_t ch = spec.hidden[0];
        for (std::size_t i = 1; i < spec.hidden.size(); ++i) {
            const std::string name = "conv" + std::to_string(i);
            params[name + ".w"] = normal_scaled({spec.hidden[i], ch, 3, 3}, static_cast<double>(ch) * 9.0);
            params[name + ".b"] = Tensor<S>::zeros({spec.hidden[i]});
            ch = spec.hidden[i];
        }
        params["head_eps.w"] = Tensor<S>::zeros({C, ch, 3, 3});
        params["head_eps.b"] = Tensor<S>::zeros({C});
        params["head_v.w"] = Tensor<S>::zeros({C, ch, 3, 3});
        params["head_v.b"] = Tensor<S>::zeros({C});
    }
    return params;
}

inline std::size_t param_count(const DenoiserSpec& spec) {
    spec.validate();
    std::size_t n = 0;
    if (spec.arch == Arch::Mlp) {
        const std::size_t d = spec.sample_numel();
        std::size_t width = d + spec.time_dim;
        for (std::size_t h : spec.hidden) {
            n += width * h + h;
            width = h;
        }
        n += 2 * (width * d + d);
    } else {
        const std::size_t C = spec.input_dims[0];
        n += spec.hidden[0] * C * 9 + spec.hidden[0];
        n += spec.time_dim * spec.hidden[0] + spec.hidden[0];
        std::size_t ch = spec.hidden[0];
        for (std::size_t i = 1; i < spec.hidden.size(); ++i) {
            n += spec.hidden[i] * ch * 9 + spec.hidden[i];
            ch = spec.hidden[i];
        }
        n += 2 * (C * ch * 9 + C);
    }
    return n;
}

// A denoiser: spec plus named parameter tensors. forward() runs the model
// on a batch at per-sample timesteps; graphs are cached per batch size and
// the per-sample evaluation counter feeds the teacher-cost instrumentation.
template <typename S>
class DenoiserModel {
public:
    DenoiserModel() = default;
    DenoiserModel(DenoiserSpec spec, std::map<std::string, Tensor<S>> params)
        : spec_(std::move(spec)), params_(std::move(params)) {
        spec_.validate();
        check_param_inventory();
    }

    static DenoiserModel random_init(DenoiserSpec spec, CounterRng& rng) {
        auto params = init_denoiser_params<S>(spec, rng);
        return DenoiserModel(std::move(spec), std::move(params));
    }

    // Copies carry spec and parameters only; cached graphs and the forward
    // counter start fresh.
    DenoiserModel(const DenoiserModel& o) : spec_(o.spec_), params_(o.params_) {}
    DenoiserModel& operator=(const DenoiserModel& o) {
        spec_ = o.spec_;
        params_ = o.params_;
        forward_evals_ = 0;
        cache_.clear();
        return *this;
    }
    DenoiserModel(DenoiserModel&&) = default;
    DenoiserModel& operator=(DenoiserModel&&) = default;

    const DenoiserSpec& spec() const { return spec_; }
    std::map<std::string, Tensor<S>>& params() { return params_; }
    const std::map<std::string, Tensor<S>>& params() const { return params_; }

    std::uint64_t forward_evals() const { return forward_evals_; }
    void reset_forward_evals() const { forward_evals_ = 0; }

    ModelOut<S> forward(const Tensor<S>& x, std::span<const int> ts, int T) const {
        Shape expect = spec_.input_dims;
        expect.insert(expect.begin(), ts.size());
        if (x.dims != expect)
            throw ShapeError("denoiser input shape " + shape_str(x.dims) + ", expected " + shape_str(expect));
        Cached& c = cached(ts.size());
        Tensor<S> temb = time_embedding_batch<S>(ts, spec_.time_dim, T);
        typename Graph<S>::NamedTensors in;
        in["x"] = &x;
        in["temb"] = &temb;
        for (const auto& [name, id] : c.binding.params) in[name] = &params_.at(name);
        c.graph.evaluate(in);
        forward_evals_ += ts.size();
        return ModelOut<S>{c.graph.value(c.binding.eps), c.graph.value(c.binding.v)};
    }

private:
    struct Cached {
        Graph<S> graph;
        DenoiserBinding binding;
    };

    DenoiserSpec spec_;
    std::map<std::string, Tensor<S>> params_;
    mutable std::uint64_t forward_evals_ = 0;
    mutable std::map<std::size_t, std::unique_ptr<Cached>> cache_;

    Cached& cached(std::size_t batch) const {
        auto it = cache_.find(batch);
        if (it == cache_.end()) {
            auto c = std::make_unique<Cached>();
            c->binding = build_denoiser_graph(c->graph, spec_, batch);
            it = cache_.emplace(batch, std::move(c)).first;
        }
        return *it->second;
    }

    void check_param_inventory() const {
        CounterRng probe(0);
        auto expected = init_denoiser_params<S>(spec_, probe);
        if (expected.size() != params_.size())
            throw ArgumentError("denoiser params do not match spec inventory");
        for (const auto& [name, t] : expected) {
            auto it = params_.find(name);
            if (it == params_.end()) throw ArgumentError("denoiser params missing " + name);
            if (it->second.dims != t.dims)
                throw ShapeError("denoiser param " + name + " has shape " + shape_str(it->second.dims) +
                                 ", spec expects " + shape_str(t.dims));
        }
    }
};

}  // namespace dd
