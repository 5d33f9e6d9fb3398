#include "dd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dd/errors.hpp"

namespace dd {

Tensor<float> Dataset::sample(std::size_t i) const {
    const std::size_t d = shape_numel(sample_dims);
    Shape dims = sample_dims;
    dims.insert(dims.begin(), 1);
    Tensor<float> out = Tensor<float>::zeros(dims);
    std::copy_n(samples.data.begin() + static_cast<std::ptrdiff_t>(i * d), d, out.data.begin());
    return out;
}

Tensor<float> Dataset::gather(std::span<const std::size_t> idx) const {
    const std::size_t d = shape_numel(sample_dims);
    Shape dims = sample_dims;
    dims.insert(dims.begin(), idx.size());
    Tensor<float> out = Tensor<float>::zeros(dims);
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(samples.data.begin() + static_cast<std::ptrdiff_t>(idx[i] * d), d,
                    out.data.begin() + static_cast<std::ptrdiff_t>(i * d));
    return out;
}

namespace {

Dataset make_gauss2d(std::size_t n, std::uint64_t seed, const DataParams& p) {
    Dataset ds;
    ds.kind = "gauss2d";
    ds.sample_dims = {2};
    ds.seed = seed;
    ds.samples = Tensor<float>::zeros({n, 2});
    CounterRng rng(CounterRng::derive_key(seed, "dataset:gauss2d"));
    for (std::size_t i = 0; i < n; ++i) {
        ds.samples.data[2 * i] = static_cast<float>(p.mean_x + p.std_dev * rng.normal());
        ds.samples.data[2 * i + 1] = static_cast<float>(p.mean_y + p.std_dev * rng.normal());
    }
    return ds;
}

Dataset make_rings(std::size_t n, std::uint64_t seed, const DataParams& p) {
    if (p.modes < 1) throw ArgumentError("mixture needs at least one mode");
    Dataset ds;
    ds.kind = "mixture2d-rings";
    ds.sample_dims = {2};
    ds.seed = seed;
    ds.samples = Tensor<float>::zeros({n, 2});
    CounterRng rng(CounterRng::derive_key(seed, "dataset:rings"));
    const double tau = 2.0 * 3.14159265358979323846;
    for (std::size_t i = 0; i < n; ++i) {
        const auto mode = static_cast<double>(rng.uniform_int(static_cast<std::uint64_t>(p.modes)));
        const double ang = tau * mode / static_cast<double>(p.modes);
        ds.samples.data[2 * i] = static_cast<float>(p.ring_radius * std::cos(ang) + p.mode_sigma * rng.normal());
        ds.samples.data[2 * i + 1] = static_cast<float>(p.ring_radius * std::sin(ang) + p.mode_sigma * rng.normal());
    }
    return ds;
}

// 8x8 canvas, background -1, one jittered rectangle or cross per image,
// light pixel noise, clamped to [-1, 1].
Dataset make_shapes(std::size_t n, std::uint64_t seed) {
    Dataset ds;
    ds.kind = "shapes8x8";
    ds.sample_dims = {1, 8, 8};
    ds.seed = seed;
    ds.samples = Tensor<float>::zeros({n, 1, 8, 8});
    CounterRng rng(CounterRng::derive_key(seed, "dataset:shapes8x8"));
    for (std::size_t i = 0; i < n; ++i) {
        float* img = ds.samples.data.data() + i * 64;
        for (int k = 0; k < 64; ++k) img[k] = -1.0f;
        const double fg = 0.4 + 0.6 * rng.uniform();
        if (rng.uniform_int(2) == 0) {
            const int w = 2 + static_cast<int>(rng.uniform_int(5));
            const int h = 2 + static_cast<int>(rng.uniform_int(5));
            const int x0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(9 - w)));
            const int y0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(9 - h)));
            for (int y = y0; y < y0 + h; ++y)
                for (int x = x0; x < x0 + w; ++x) img[y * 8 + x] = static_cast<float>(fg);
        } else {
            const int cx = 2 + static_cast<int>(rng.uniform_int(4));
            const int cy = 2 + static_cast<int>(rng.uniform_int(4));
            const int arm = 1 + static_cast<int>(rng.uniform_int(2));
            for (int dx = -arm; dx <= arm; ++dx) {
                const int x = cx + dx;
                if (x >= 0 && x < 8) img[cy * 8 + x] = static_cast<float>(fg);
            }
            for (int dy = -arm; dy <= arm; ++dy) {
                const int y = cy + dy;
                if (y >= 0 && y < 8) img[y * 8 + cx] = static_cast<float>(fg);
            }
        }
        for (int k = 0; k < 64; ++k) {
            const double v = static_cast<double>(img[k]) + 0.05 * rng.normal();
            img[k] = static_cast<float>(std::clamp(v, -1.0, 1.0));
        }
    }
    return ds;
}

}  // namespace

Dataset make_dataset(const std::string& kind, std::size_t n, std::uint64_t seed, const DataParams& params) {
    if (n < 1) throw ArgumentError("dataset size must be >= 1");
    if (kind == "gauss2d") return make_gauss2d(n, seed, params);
    if (kind == "mixture2d-rings") return make_rings(n, seed, params);
    if (kind == "shapes8x8") return make_shapes(n, seed);
    throw ArgumentError("unknown dataset kind: " + kind);
}

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for write: " + path);
    out << "DKDS v1 " << ds.kind << " " << ds.size() << " " << ds.sample_dims.size();
    for (std::size_t d : ds.sample_dims) out << " " << d;
    out << " " << ds.seed << "\n";
    out.write(reinterpret_cast<const char*>(ds.samples.data.data()),
              static_cast<std::streamsize>(ds.samples.data.size() * sizeof(float)));
    if (!out) throw FormatError("short write: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path);
    std::string header;
    if (!std::getline(in, header)) throw FormatError("missing dataset header in " + path);
    std::istringstream hs(header);
    std::string magic, version;
    Dataset ds;
    std::size_t n = 0, rank = 0;
    hs >> magic >> version >> ds.kind >> n >> rank;
    if (magic != "DKDS" || version != "v1") throw FormatError("bad dataset header in " + path);
    ds.sample_dims.resize(rank);
    for (auto& d : ds.sample_dims) hs >> d;
    hs >> ds.seed;
    if (!hs) throw FormatError("bad dataset header fields in " + path);
    Shape dims = ds.sample_dims;
    dims.insert(dims.begin(), n);
    ds.samples = Tensor<float>::zeros(dims);
    in.read(reinterpret_cast<char*>(ds.samples.data.data()),
            static_cast<std::streamsize>(ds.samples.data.size() * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != ds.samples.data.size() * sizeof(float))
        throw FormatError("truncated dataset payload in " + path);
    return ds;
}

Dataset mix_dataset(const Dataset& real, const Dataset& synthetic, double p, CounterRng& rng) {
    if (p < 0.0 || p > 1.0) throw ArgumentError("mix fraction must lie in [0, 1]");
    if (real.sample_dims != synthetic.sample_dims) throw ShapeError("mix_dataset: sample dims differ");
    const std::size_t n = synthetic.size();
    const auto n_real = static_cast<std::size_t>(std::llround(p * static_cast<double>(n)));
    if (n_real > real.size())
        throw ArgumentError("real dataset too small: need " + std::to_string(n_real) + " of " +
                            std::to_string(real.size()));
    // draw real indices without replacement (partial Fisher-Yates)
    std::vector<std::size_t> ridx(real.size());
    for (std::size_t i = 0; i < ridx.size(); ++i) ridx[i] = i;
    for (std::size_t i = 0; i < n_real; ++i)
        std::swap(ridx[i], ridx[i + rng.uniform_int(ridx.size() - i)]);
    std::vector<std::size_t> sidx(synthetic.size());
    for (std::size_t i = 0; i < sidx.size(); ++i) sidx[i] = i;
    for (std::size_t i = 0; i < n - n_real && i < sidx.size(); ++i)
        std::swap(sidx[i], sidx[i + rng.uniform_int(sidx.size() - i)]);

    Dataset out;
    out.kind = synthetic.kind;
    out.sample_dims = synthetic.sample_dims;
    out.seed = synthetic.seed;
    const std::size_t d = shape_numel(out.sample_dims);
    Shape dims = out.sample_dims;
    dims.insert(dims.begin(), n);
    out.samples = Tensor<float>::zeros(dims);
    for (std::size_t i = 0; i < n; ++i) {
        const float* src = i < n_real ? real.samples.data.data() + ridx[i] * d
                                      : synthetic.samples.data.data() + sidx[i - n_real] * d;
        std::copy_n(src, d, out.samples.data.data() + i * d);
    }
    // final shuffle so real and synthetic interleave
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const std::size_t j = i + rng.uniform_int(n - i);
        if (j != i)
            for (std::size_t k = 0; k < d; ++k)
                std::swap(out.samples.data[i * d + k], out.samples.data[j * d + k]);
    }
    return out;
}

}  // namespace dd
