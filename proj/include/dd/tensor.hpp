#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "dd/errors.hpp"
#include "dd/rng.hpp"

namespace dd {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& dims) {
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    return n;
}

inline std::string shape_str(const Shape& dims) {
    std::string s = "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(dims[i]);
    }
    return s + "]";
}

// Dense row-major tensor. Rank 0 is a scalar (one element). The scalar type
// is float for training and double for the verification paths.
template <typename S>
struct Tensor {
    Shape dims;
    std::vector<S> data;

    Tensor() = default;
    Tensor(Shape d, std::vector<S> values) : dims(std::move(d)), data(std::move(values)) {
        if (data.size() != shape_numel(dims))
            throw ShapeError("tensor: " + std::to_string(data.size()) + " elements for shape " + shape_str(dims));
    }

    static Tensor zeros(Shape d) {
        std::size_t n = shape_numel(d);
        return Tensor(std::move(d), std::vector<S>(n, S(0)));
    }
    static Tensor full(Shape d, S value) {
        std::size_t n = shape_numel(d);
        return Tensor(std::move(d), std::vector<S>(n, value));
    }
    static Tensor scalar(S value) { return Tensor({}, {value}); }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return dims.size(); }
    S& operator[](std::size_t i) { return data[i]; }
    const S& operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return dims == o.dims; }

    bool all_finite() const {
        for (S v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

template <typename S>
void fill_normal(Tensor<S>& t, CounterRng& rng) {
    for (auto& v : t.data) v = static_cast<S>(rng.normal());
}

// ---------------------------------------------------------------------------
// Tensor blob format: magic "DKT1", 1 byte dtype (0 = f32, 1 = f64), 1 byte
// rank, rank x u32 little-endian dims, then the row-major little-endian
// payload. Used by checkpoints and anything else that persists tensors.
// ---------------------------------------------------------------------------

static_assert(std::endian::native == std::endian::little,
              "tensor blob I/O assumes a little-endian host");

template <typename S>
constexpr std::uint8_t dtype_code() {
    static_assert(std::is_same_v<S, float> || std::is_same_v<S, double>);
    return std::is_same_v<S, float> ? 0 : 1;
}

template <typename S>
void write_tensor_blob(const Tensor<S>& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for write: " + path);
    out.write("DKT1", 4);
    const std::uint8_t dtype = dtype_code<S>();
    const std::uint8_t rank = static_cast<std::uint8_t>(t.rank());
    if (t.rank() > 255) throw FormatError("tensor rank exceeds blob format limit");
    out.put(static_cast<char>(dtype));
    out.put(static_cast<char>(rank));
    for (std::size_t d : t.dims) {
        const std::uint32_t v = static_cast<std::uint32_t>(d);
        out.write(reinterpret_cast<const char*>(&v), 4);
    }
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(S)));
    if (!out) throw FormatError("short write: " + path);
}

template <typename S>
Tensor<S> read_tensor_blob(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "DKT1", 4) != 0)
        throw FormatError("bad tensor blob magic in " + path);
    const int dtype = in.get();
    const int rank = in.get();
    if (dtype == EOF || rank == EOF) throw FormatError("truncated tensor blob header in " + path);
    if (dtype != dtype_code<S>())
        throw FormatError("tensor blob dtype mismatch in " + path + " (found code " +
                          std::to_string(dtype) + ")");
    Shape dims(static_cast<std::size_t>(rank));
    for (auto& d : dims) {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 4);
        if (!in) throw FormatError("truncated tensor blob dims in " + path);
        d = v;
    }
    Tensor<S> t = Tensor<S>::zeros(dims);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(S)));
    if (static_cast<std::size_t>(in.gcount()) != t.data.size() * sizeof(S))
        throw FormatError("truncated tensor blob payload in " + path);
    return t;
}

}  // namespace dd
