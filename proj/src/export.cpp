#include "dd/export.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "dd/errors.hpp"

namespace dd {

void export_pgm_grid(const Tensor<float>& batch, const std::string& path) {
    std::size_t n = 0, H = 0, W = 0;
    if (batch.rank() == 4 && batch.dims[1] == 1) {
        n = batch.dims[0];
        H = batch.dims[2];
        W = batch.dims[3];
    } else if (batch.rank() == 3) {
        n = batch.dims[0];
        H = batch.dims[1];
        W = batch.dims[2];
    } else {
        throw ArgumentError("pgm-grid needs [n,1,H,W] or [n,H,W] samples, got " + shape_str(batch.dims));
    }
    if (n == 0) throw ArgumentError("pgm-grid: empty batch");
    std::size_t grid = 1;
    while (grid * grid < n) ++grid;
    const std::size_t rows = (n + grid - 1) / grid;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for write: " + path);
    out << "P5\n" << grid * W << " " << rows * H << "\n255\n";
    std::vector<unsigned char> canvas(grid * W * rows * H, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t gy = i / grid, gx = i % grid;
        const float* img = batch.data.data() + i * H * W;
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const double v = (static_cast<double>(img[y * W + x]) + 1.0) * 0.5 * 255.0;
                const double c = std::clamp(v, 0.0, 255.0);
                canvas[(gy * H + y) * grid * W + gx * W + x] = static_cast<unsigned char>(std::lround(c));
            }
    }
    out.write(reinterpret_cast<const char*>(canvas.data()), static_cast<std::streamsize>(canvas.size()));
    if (!out) throw FormatError("short write: " + path);
}

void export_csv_points(const Tensor<float>& batch, const std::string& path) {
    if (batch.rank() != 2 || batch.dims[1] != 2)
        throw ArgumentError("csv-points needs [n, 2] samples, got " + shape_str(batch.dims));
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for write: " + path);
    out << std::setprecision(9);
    for (std::size_t i = 0; i < batch.dims[0]; ++i)
        out << batch.data[2 * i] << "," << batch.data[2 * i + 1] << "\n";
    if (!out) throw FormatError("short write: " + path);
}

void export_samples(const Tensor<float>& batch, const std::string& path, const std::string& format) {
    if (format == "pgm-grid") {
        export_pgm_grid(batch, path);
    } else if (format == "csv-points") {
        export_csv_points(batch, path);
    } else {
        throw ArgumentError("unknown export format: " + format);
    }
}

}  // namespace dd
