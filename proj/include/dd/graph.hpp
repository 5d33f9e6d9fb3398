#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dd/errors.hpp"
#include "dd/tensor.hpp"

namespace dd {

using NodeId = std::size_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

enum class OpKind {
    Input,
    Constant,
    MatMul,
    Add,
    Mul,
    Affine,
    Relu,
    Silu,
    Tanh,
    Exp,
    Sum,
    Mean,
    Conv2d,
    Reshape,
    Concat,
    StopGrad,
};

inline const char* op_name(OpKind op) {
    switch (op) {
        case OpKind::Input: return "input";
        case OpKind::Constant: return "constant";
        case OpKind::MatMul: return "matmul";
        case OpKind::Add: return "add";
        case OpKind::Mul: return "mul";
        case OpKind::Affine: return "affine";
        case OpKind::Relu: return "relu";
        case OpKind::Silu: return "silu";
        case OpKind::Tanh: return "tanh";
        case OpKind::Exp: return "exp";
        case OpKind::Sum: return "sum";
        case OpKind::Mean: return "mean";
        case OpKind::Conv2d: return "conv2d";
        case OpKind::Reshape: return "reshape";
        case OpKind::Concat: return "concat";
        case OpKind::StopGrad: return "stop_gradient";
    }
    return "?";
}

// Record of a computation: nodes are appended in topological order at build
// time, so one forward sweep evaluates and one reverse sweep differentiates.
// Shapes are fixed when a node is created; evaluate() may be called any
// number of times with fresh input values and reuses the node buffers.
//
// Elementwise add/mul accept equal shapes, or a right operand whose dims are
// a strict suffix of the left's (broadcast across the leading batch extent).
template <typename S>
class Graph {
public:
    NodeId input(std::string name, Shape dims, bool requires_grad = false) {
        if (name.empty()) throw ArgumentError("graph input needs a name");
        if (input_ids_.count(name)) throw ArgumentError("duplicate graph input: " + name);
        NodeId id = add_node(OpKind::Input, {}, std::move(dims), requires_grad);
        nodes_[id].name = name;
        input_ids_[name] = id;
        return id;
    }

    NodeId constant(Tensor<S> value, std::string name = "") {
        if (!value.all_finite()) throw NumericError("non-finite constant" + (name.empty() ? "" : ": " + name));
        NodeId id = add_node(OpKind::Constant, {}, value.dims, false);
        nodes_[id].value = std::move(value);
        nodes_[id].name = std::move(name);
        return id;
    }

    NodeId matmul(NodeId a, NodeId b) {
        const Node& na = node(a);
        const Node& nb = node(b);
        if (na.dims.size() != 2 || nb.dims.size() != 2)
            throw ShapeError("matmul expects rank-2 operands, got " + shape_str(na.dims) + " x " + shape_str(nb.dims));
        if (na.dims[1] != nb.dims[0])
            throw ShapeError("matmul inner dims differ: " + shape_str(na.dims) + " x " + shape_str(nb.dims));
        return add_node(OpKind::MatMul, {a, b}, {na.dims[0], nb.dims[1]}, any_grad({a, b}));
    }

    NodeId add(NodeId a, NodeId b) { return elementwise2(OpKind::Add, a, b); }
    NodeId mul(NodeId a, NodeId b) { return elementwise2(OpKind::Mul, a, b); }

    NodeId affine(NodeId x, S scale, S shift) {
        NodeId id = add_node(OpKind::Affine, {x}, node(x).dims, node(x).requires_grad);
        nodes_[id].scale = scale;
        nodes_[id].shift = shift;
        return id;
    }

    NodeId relu(NodeId x) { return unary(OpKind::Relu, x); }
    NodeId silu(NodeId x) { return unary(OpKind::Silu, x); }
    NodeId tanh(NodeId x) { return unary(OpKind::Tanh, x); }
    NodeId exp(NodeId x) { return unary(OpKind::Exp, x); }

    NodeId sum(NodeId x) { return add_node(OpKind::Sum, {x}, {}, node(x).requires_grad); }
    NodeId mean(NodeId x) {
        if (node(x).numel() == 0) throw ShapeError("mean of empty tensor");
        return add_node(OpKind::Mean, {x}, {}, node(x).requires_grad);
    }

    // 2D convolution, stride 1, zero padding to "same" size, odd kernel.
    // x: [B,Cin,H,W], w: [Cout,Cin,kh,kw], bias: [Cout] -> [B,Cout,H,W].
    NodeId conv2d(NodeId x, NodeId w, NodeId bias) {
        const Node& nx = node(x);
        const Node& nw = node(w);
        const Node& nb = node(bias);
        if (nx.dims.size() != 4 || nw.dims.size() != 4)
            throw ShapeError("conv2d expects x [B,C,H,W], w [Co,Ci,kh,kw]");
        if (nw.dims[1] != nx.dims[1])
            throw ShapeError("conv2d channel mismatch: x " + shape_str(nx.dims) + " w " + shape_str(nw.dims));
        if (nw.dims[2] % 2 == 0 || nw.dims[3] % 2 == 0)
            throw ShapeError("conv2d kernel extents must be odd");
        if (nb.dims.size() != 1 || nb.dims[0] != nw.dims[0])
            throw ShapeError("conv2d bias must be [Cout]");
        Shape out{nx.dims[0], nw.dims[0], nx.dims[2], nx.dims[3]};
        return add_node(OpKind::Conv2d, {x, w, bias}, std::move(out), any_grad({x, w, bias}));
    }

    NodeId reshape(NodeId x, Shape dims) {
        if (shape_numel(dims) != node(x).numel())
            throw ShapeError("reshape " + shape_str(node(x).dims) + " -> " + shape_str(dims) + " changes element count");
        return add_node(OpKind::Reshape, {x}, std::move(dims), node(x).requires_grad);
    }

    NodeId concat(NodeId a, NodeId b, std::size_t axis) {
        const Node& na = node(a);
        const Node& nb = node(b);
        if (na.dims.size() != nb.dims.size() || axis >= na.dims.size())
            throw ShapeError("concat rank/axis mismatch");
        for (std::size_t i = 0; i < na.dims.size(); ++i)
            if (i != axis && na.dims[i] != nb.dims[i])
                throw ShapeError("concat dims differ off-axis: " + shape_str(na.dims) + " vs " + shape_str(nb.dims));
        Shape out = na.dims;
        out[axis] += nb.dims[axis];
        NodeId id = add_node(OpKind::Concat, {a, b}, std::move(out), any_grad({a, b}));
        nodes_[id].axis = axis;
        return id;
    }

    // Value passes through; gradient does not. The node itself never
    // requires a gradient, so every path through it is dead in backward.
    NodeId stop_gradient(NodeId x) {
        return add_node(OpKind::StopGrad, {x}, node(x).dims, false);
    }

    void mark_output(std::string name, NodeId id) {
        node(id);
        outputs_.emplace_back(std::move(name), id);
    }

    using NamedTensors = std::map<std::string, const Tensor<S>*>;

    // Binds input values and runs the forward sweep. Returns the marked
    // outputs. Deterministic: identical inputs give bit-identical values.
    NamedTensors evaluate(const NamedTensors& inputs) {
        for (auto& [name, id] : input_ids_) {
            auto it = inputs.find(name);
            if (it == inputs.end()) throw ArgumentError("missing graph input: " + name);
            const Tensor<S>& t = *it->second;
            if (t.dims != nodes_[id].dims)
                throw ShapeError("input '" + name + "' has shape " + shape_str(t.dims) +
                                 ", graph expects " + shape_str(nodes_[id].dims));
            if (!t.all_finite()) throw NumericError("non-finite values in input '" + name + "'");
            nodes_[id].value.dims = t.dims;
            nodes_[id].value.data = t.data;
        }
        for (NodeId id = 0; id < nodes_.size(); ++id) forward_node(id);
        evaluated_ = true;
        NamedTensors out;
        for (const auto& [name, id] : outputs_) out[name] = &nodes_[id].value;
        return out;
    }

    // Reverse sweep from `output` seeded with `output_grad`. Each node is
    // visited exactly once; contributions into shared parents accumulate in
    // fixed (descending id) order, so results are deterministic.
    void backward(NodeId output, const Tensor<S>& output_grad) {
        if (!evaluated_) throw StateError("backward called before evaluate");
        Node& out = nodes_.at(output);
        if (output_grad.dims != out.dims)
            throw ShapeError("output grad shape " + shape_str(output_grad.dims) +
                             " does not match node shape " + shape_str(out.dims));
        for (auto& n : nodes_) {
            if (!n.requires_grad) continue;
            n.grad.dims = n.dims;
            n.grad.data.assign(n.numel(), S(0));
        }
        if (!out.requires_grad) return;  // nothing upstream to differentiate
        out.grad.data = output_grad.data;
        for (NodeId id = output + 1; id-- > 0;) {
            Node& n = nodes_[id];
            if (!n.requires_grad || id > output) continue;
            backward_node(id);
        }
    }

    // Convenience: scalar output seeded with grad 1.
    void backward(NodeId output) { backward(output, Tensor<S>::scalar(S(1))); }

    const Tensor<S>& value(NodeId id) const {
        const Node& n = node(id);
        if (!evaluated_ && n.op != OpKind::Constant) throw StateError("value requested before evaluate");
        return n.value;
    }

    const Tensor<S>& grad(NodeId id) const {
        const Node& n = node(id);
        if (!n.requires_grad) throw StateError("node does not require grad: " + node_label(id));
        return n.grad;
    }

    // Gradients of every requires_grad input, by name.
    NamedTensors input_gradients() const {
        NamedTensors out;
        for (const auto& [name, id] : input_ids_)
            if (nodes_[id].requires_grad) out[name] = &nodes_[id].grad;
        return out;
    }

    bool evaluated() const { return evaluated_; }
    std::size_t size() const { return nodes_.size(); }
    const Shape& dims(NodeId id) const { return node(id).dims; }

private:
    struct Node {
        OpKind op = OpKind::Input;
        std::vector<NodeId> parents;
        Shape dims;
        std::string name;
        bool requires_grad = false;
        S scale = S(0), shift = S(0);  // Affine
        std::size_t axis = 0;          // Concat
        Tensor<S> value;
        Tensor<S> grad;
        std::size_t numel() const { return shape_numel(dims); }
    };

    std::vector<Node> nodes_;
    std::map<std::string, NodeId> input_ids_;
    std::vector<std::pair<std::string, NodeId>> outputs_;
    bool evaluated_ = false;

    const Node& node(NodeId id) const {
        if (id >= nodes_.size()) throw ArgumentError("bad node id");
        return nodes_[id];
    }

    std::string node_label(NodeId id) const {
        const Node& n = nodes_[id];
        if (!n.name.empty()) return n.name;
        return "#" + std::to_string(id) + ":" + op_name(n.op);
    }

    bool any_grad(std::initializer_list<NodeId> ids) const {
        for (NodeId id : ids)
            if (node(id).requires_grad) return true;
        return false;
    }

    NodeId add_node(OpKind op, std::vector<NodeId> parents, Shape dims, bool requires_grad) {
        Node n;
        n.op = op;
        n.parents = std::move(parents);
        n.dims = std::move(dims);
        n.requires_grad = requires_grad;
        if (op != OpKind::Constant && op != OpKind::Input) n.value = Tensor<S>::zeros(n.dims);
        if (op == OpKind::Input) n.value = Tensor<S>::zeros(n.dims);
        nodes_.push_back(std::move(n));
        evaluated_ = false;
        return nodes_.size() - 1;
    }

    NodeId unary(OpKind op, NodeId x) {
        return add_node(op, {x}, node(x).dims, node(x).requires_grad);
    }

    // Right operand may be a strict suffix of the left (leading broadcast).
    NodeId elementwise2(OpKind op, NodeId a, NodeId b) {
        const Node& na = node(a);
        const Node& nb = node(b);
        if (na.dims != nb.dims) {
            if (nb.dims.size() >= na.dims.size() ||
                !std::equal(nb.dims.begin(), nb.dims.end(), na.dims.end() - nb.dims.size()))
                throw ShapeError(std::string(op_name(op)) + " shapes incompatible: " + shape_str(na.dims) +
                                 " vs " + shape_str(nb.dims));
        }
        return add_node(op, {a, b}, na.dims, any_grad({a, b}));
    }

    void ensure_finite(NodeId id) {
        if (!nodes_[id].value.all_finite())
            throw NumericError("non-finite output at node " + node_label(id));
    }

    // ---- forward kernels -------------------------------------------------

    void forward_node(NodeId id) {
        Node& n = nodes_[id];
        switch (n.op) {
            case OpKind::Input:
            case OpKind::Constant:
                return;  // checked at bind/creation
            case OpKind::MatMul: {
                const auto& A = nodes_[n.parents[0]].value;
                const auto& B = nodes_[n.parents[1]].value;
                matmul_kernel(A.data.data(), B.data.data(), n.value.data.data(),
                              A.dims[0], A.dims[1], B.dims[1]);
                break;
            }
            case OpKind::Add:
            case OpKind::Mul: {
                const auto& A = nodes_[n.parents[0]].value;
                const auto& B = nodes_[n.parents[1]].value;
                const std::size_t nb = B.numel() == 0 ? 1 : B.numel();
                const bool is_add = n.op == OpKind::Add;
                for (std::size_t i = 0; i < n.value.numel(); ++i) {
                    const S b = B.data[B.numel() == n.value.numel() ? i : i % nb];
                    n.value.data[i] = is_add ? A.data[i] + b : A.data[i] * b;
                }
                break;
            }
            case OpKind::Affine: {
                const auto& X = nodes_[n.parents[0]].value;
                for (std::size_t i = 0; i < X.numel(); ++i) {
                    S y = n.scale * X.data[i];
                    n.value.data[i] = y + n.shift;
                }
                break;
            }
            case OpKind::Relu: {
                const auto& X = nodes_[n.parents[0]].value;
                for (std::size_t i = 0; i < X.numel(); ++i)
                    n.value.data[i] = X.data[i] > S(0) ? X.data[i] : S(0);
                break;
            }
            case OpKind::Silu: {
                const auto& X = nodes_[n.parents[0]].value;
                for (std::size_t i = 0; i < X.numel(); ++i) {
                    const S x = X.data[i];
                    n.value.data[i] = x / (S(1) + std::exp(-x));
                }
                break;
            }
            case OpKind::Tanh: {
                const auto& X = nodes_[n.parents[0]].value;
                for (std::size_t i = 0; i < X.numel(); ++i) n.value.data[i] = std::tanh(X.data[i]);
                break;
            }
            case OpKind::Exp: {
                const auto& X = nodes_[n.parents[0]].value;
                for (std::size_t i = 0; i < X.numel(); ++i) n.value.data[i] = std::exp(X.data[i]);
                break;
            }
            case OpKind::Sum:
            case OpKind::Mean: {
                const auto& X = nodes_[n.parents[0]].value;
                S acc = S(0);
                for (S v : X.data) acc += v;
                if (n.op == OpKind::Mean) acc /= static_cast<S>(X.numel());
                n.value.data[0] = acc;
                break;
            }
            case OpKind::Conv2d:
                conv2d_forward(n);
                break;
            case OpKind::Reshape:
            case OpKind::StopGrad:
                n.value.data = nodes_[n.parents[0]].value.data;
                break;
            case OpKind::Concat: {
                const auto& A = nodes_[n.parents[0]].value;
                const auto& B = nodes_[n.parents[1]].value;
                concat_kernel(A, B, n.value, n.axis, /*forward=*/true);
                break;
            }
        }
        ensure_finite(id);
    }

    static void matmul_kernel(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n) {
        for (std::size_t i = 0; i < m * n; ++i) c[i] = S(0);
        for (std::size_t i = 0; i < m; ++i) {
            const S* arow = a + i * k;
            S* crow = c + i * n;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const S av = arow[kk];
                const S* brow = b + kk * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }

    // C += A^T B with A [m,k], B [m,n], C [k,n]
    static void matmul_at_b(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n) {
        for (std::size_t i = 0; i < m; ++i) {
            const S* arow = a + i * k;
            const S* brow = b + i * n;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const S av = arow[kk];
                S* crow = c + kk * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }

    // C += A B^T with A [m,k], B [n,k], C [m,n]
    static void matmul_a_bt(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n) {
        for (std::size_t i = 0; i < m; ++i) {
            const S* arow = a + i * k;
            S* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                const S* brow = b + j * k;
                S acc = S(0);
                for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
                crow[j] += acc;
            }
        }
    }

    void conv2d_forward(Node& n) {
        const auto& X = nodes_[n.parents[0]].value;
        const auto& W = nodes_[n.parents[1]].value;
        const auto& bias = nodes_[n.parents[2]].value;
        const std::size_t B = X.dims[0], Ci = X.dims[1], H = X.dims[2], Wd = X.dims[3];
        const std::size_t Co = W.dims[0], kh = W.dims[2], kw = W.dims[3];
        const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh / 2), pw = static_cast<std::ptrdiff_t>(kw / 2);
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t co = 0; co < Co; ++co) {
                S* out = n.value.data.data() + ((b * Co + co) * H) * Wd;
                for (std::size_t i = 0; i < H * Wd; ++i) out[i] = bias.data[co];
                for (std::size_t ci = 0; ci < Ci; ++ci) {
                    const S* xin = X.data.data() + ((b * Ci + ci) * H) * Wd;
                    const S* wk = W.data.data() + ((co * Ci + ci) * kh) * kw;
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const S wv = wk[ky * kw + kx];
                            const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - ph;
                            const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pw;
                            const std::size_t y0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dy));
                            const std::size_t y1 = static_cast<std::size_t>(
                                std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(H), static_cast<std::ptrdiff_t>(H) - dy));
                            const std::size_t x0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dx));
                            const std::size_t x1 = static_cast<std::size_t>(
                                std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(Wd), static_cast<std::ptrdiff_t>(Wd) - dx));
                            for (std::size_t y = y0; y < y1; ++y) {
                                S* orow = out + y * Wd;
                                const S* xrow = xin + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + dy) * Wd;
                                for (std::size_t x = x0; x < x1; ++x)
                                    orow[x] += wv * xrow[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(x) + dx)];
                            }
                        }
                    }
                }
            }
        }
    }

    static void concat_kernel(const Tensor<S>& A, const Tensor<S>& B, Tensor<S>& out, std::size_t axis, bool forward) {
        // outer = product of dims before axis, inner = product after
        std::size_t outer = 1, inner = 1;
        for (std::size_t i = 0; i < axis; ++i) outer *= out.dims[i];
        for (std::size_t i = axis + 1; i < out.dims.size(); ++i) inner *= out.dims[i];
        const std::size_t wa = A.dims[axis] * inner, wb = B.dims[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o) {
            S* dst = out.data.data() + o * (wa + wb);
            if (forward) {
                std::memcpy(dst, A.data.data() + o * wa, wa * sizeof(S));
                std::memcpy(dst + wa, B.data.data() + o * wb, wb * sizeof(S));
            }
        }
    }

    // ---- backward kernels ------------------------------------------------

    void backward_node(NodeId id) {
        Node& n = nodes_[id];
        const Tensor<S>& g = n.grad;
        switch (n.op) {
            case OpKind::Input:
            case OpKind::Constant:
            case OpKind::StopGrad:
                return;
            case OpKind::MatMul: {
                Node& A = nodes_[n.parents[0]];
                Node& B = nodes_[n.parents[1]];
                const std::size_t m = A.dims[0], k = A.dims[1], c = B.dims[1];
                if (A.requires_grad) matmul_a_bt(g.data.data(), B.value.data.data(), A.grad.data.data(), m, c, k);
                if (B.requires_grad) matmul_at_b(A.value.data.data(), g.data.data(), B.grad.data.data(), m, k, c);
                break;
            }
            case OpKind::Add: {
                Node& A = nodes_[n.parents[0]];
                Node& B = nodes_[n.parents[1]];
                if (A.requires_grad)
                    for (std::size_t i = 0; i < g.numel(); ++i) A.grad.data[i] += g.data[i];
                if (B.requires_grad) {
                    const std::size_t nb = B.numel() == 0 ? 1 : B.numel();
                    for (std::size_t i = 0; i < g.numel(); ++i) B.grad.data[i % nb] += g.data[i];
                }
                break;
            }
            case OpKind::Mul: {
                Node& A = nodes_[n.parents[0]];
                Node& B = nodes_[n.parents[1]];
                const std::size_t nb = B.numel() == 0 ? 1 : B.numel();
                const bool same = B.numel() == g.numel();
                if (A.requires_grad)
                    for (std::size_t i = 0; i < g.numel(); ++i)
                        A.grad.data[i] += g.data[i] * B.value.data[same ? i : i % nb];
                if (B.requires_grad)
                    for (std::size_t i = 0; i < g.numel(); ++i)
                        B.grad.data[same ? i : i % nb] += g.data[i] * A.value.data[i];
                break;
            }
            case OpKind::Affine: {
                Node& X = nodes_[n.parents[0]];
                if (X.requires_grad)
                    for (std::size_t i = 0; i < g.numel(); ++i) X.grad.data[i] += n.scale * g.data[i];
                break;
            }
            case OpKind::Relu: {
                Node& X = nodes_[n.parents[0]];
                if (X.requires_grad)
                    for (std::size_t i = 0; i < g.numel(); ++i)
                        if (X.value.data[i] > S(0)) X.grad.data[i] += g.data[i];
                break;
            }
            case OpKind::Silu: {
                Node& X = nodes_[n.parents[0]];
                if (X.requires_grad)
                    for (std::size_t i = 0; i < g.numel(); ++i) {
                        const S x = X.value.data[i];
                        const S sig = S(1) / (S(1) + std::exp(-x));
                        X.grad.data[i] += g.data[i] * sig * (S(1) + x * (S(1) - sig));
                    }
                break;
            }
            case OpKind::Tanh: {
                Node& X = nodes_[n.parents[0]];
                if (X.requires_grad)
                    for (std::size_t i = 0; i < g.numel(); ++i) {
                        const S th = n.value.data[i];
                        X.grad.data[i] += g.data[i] * (S(1) - th * th);
                    }
                break;
            }
            case OpKind::Exp: {
                Node& X = nodes_[n.parents[0]];
                if (X.requires_grad)
                    for (std::size_t i = 0; i < g.numel(); ++i) X.grad.data[i] += g.data[i] * n.value.data[i];
                break;
            }
            case OpKind::Sum: {
                Node& X = nodes_[n.parents[0]];
                if (X.requires_grad)
                    for (std::size_t i = 0; i < X.numel(); ++i) X.grad.data[i] += g.data[0];
                break;
            }
            case OpKind::Mean: {
                Node& X = nodes_[n.parents[0]];
                if (X.requires_grad) {
                    const S gv = g.data[0] / static_cast<S>(X.numel());
                    for (std::size_t i = 0; i < X.numel(); ++i) X.grad.data[i] += gv;
                }
                break;
            }
            case OpKind::Conv2d:
                conv2d_backward(n);
                break;
            case OpKind::Reshape: {
                Node& X = nodes_[n.parents[0]];
                if (X.requires_grad)
                    for (std::size_t i = 0; i < g.numel(); ++i) X.grad.data[i] += g.data[i];
                break;
            }
            case OpKind::Concat: {
                Node& A = nodes_[n.parents[0]];
                Node& B = nodes_[n.parents[1]];
                std::size_t outer = 1, inner = 1;
                for (std::size_t i = 0; i < n.axis; ++i) outer *= n.dims[i];
                for (std::size_t i = n.axis + 1; i < n.dims.size(); ++i) inner *= n.dims[i];
                const std::size_t wa = A.dims[n.axis] * inner, wb = B.dims[n.axis] * inner;
                for (std::size_t o = 0; o < outer; ++o) {
                    const S* src = g.data.data() + o * (wa + wb);
                    if (A.requires_grad) {
                        S* dst = A.grad.data.data() + o * wa;
                        for (std::size_t i = 0; i < wa; ++i) dst[i] += src[i];
                    }
                    if (B.requires_grad) {
                        S* dst = B.grad.data.data() + o * wb;
                        for (std::size_t i = 0; i < wb; ++i) dst[i] += src[wa + i];
                    }
                }
                break;
            }
        }
    }

    void conv2d_backward(Node& n) {
        Node& X = nodes_[n.parents[0]];
        Node& W = nodes_[n.parents[1]];
        Node& bias = nodes_[n.parents[2]];
        const Tensor<S>& g = n.grad;
        const std::size_t B = X.dims[0], Ci = X.dims[1], H = X.dims[2], Wd = X.dims[3];
        const std::size_t Co = W.dims[0], kh = W.dims[2], kw = W.dims[3];
        const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh / 2), pw = static_cast<std::ptrdiff_t>(kw / 2);
        if (bias.requires_grad) {
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t co = 0; co < Co; ++co) {
                    const S* grow = g.data.data() + ((b * Co + co) * H) * Wd;
                    S acc = S(0);
                    for (std::size_t i = 0; i < H * Wd; ++i) acc += grow[i];
                    bias.grad.data[co] += acc;
                }
        }
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t co = 0; co < Co; ++co) {
                const S* gout = g.data.data() + ((b * Co + co) * H) * Wd;
                for (std::size_t ci = 0; ci < Ci; ++ci) {
                    const S* xin = X.value.data.data() + ((b * Ci + ci) * H) * Wd;
                    S* xg = X.requires_grad ? X.grad.data.data() + ((b * Ci + ci) * H) * Wd : nullptr;
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const std::size_t widx = ((co * Ci + ci) * kh + ky) * kw + kx;
                            const S wv = W.value.data[widx];
                            const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - ph;
                            const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pw;
                            const std::size_t y0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dy));
                            const std::size_t y1 = static_cast<std::size_t>(
                                std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(H), static_cast<std::ptrdiff_t>(H) - dy));
                            const std::size_t x0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dx));
                            const std::size_t x1 = static_cast<std::size_t>(
                                std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(Wd), static_cast<std::ptrdiff_t>(Wd) - dx));
                            S wacc = S(0);
                            for (std::size_t y = y0; y < y1; ++y) {
                                const S* grow = gout + y * Wd;
                                const std::size_t yy = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + dy);
                                const S* xrow = xin + yy * Wd;
                                S* xgrow = xg ? xg + yy * Wd : nullptr;
                                for (std::size_t x = x0; x < x1; ++x) {
                                    const std::size_t xx = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(x) + dx);
                                    wacc += grow[x] * xrow[xx];
                                    if (xgrow) xgrow[xx] += grow[x] * wv;
                                }
                            }
                            if (W.requires_grad) W.grad.data[widx] += wacc;
                        }
                    }
                }
            }
        }
    }
};

}  // namespace dd
