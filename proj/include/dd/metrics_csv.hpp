#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>

#include "dd/errors.hpp"

namespace dd {

// One metrics row. Optional fields render as empty CSV cells (absence is
// not zero).
struct MetricsRecord {
    std::uint64_t iteration = 0;
    double loss_simple = 0.0;
    std::optional<double> loss_vlb;
    double loss = 0.0;
    std::uint64_t teacher_fwd = 0;
    std::uint64_t wall_ms = 0;
    std::optional<std::string> metric_name;
    std::optional<double> metric_value;
};

// Appends rows under the fixed header
//   iter,loss_simple,loss_vlb,loss,teacher_fwd,wall_ms,metric_name,metric_value
// and enforces strictly increasing iterations within one file.
class MetricsWriter {
public:
    explicit MetricsWriter(const std::string& path);
    void append(const MetricsRecord& rec);
    const std::string& path() const { return path_; }

    static constexpr const char* kHeader = "iter,loss_simple,loss_vlb,loss,teacher_fwd,wall_ms,metric_name,metric_value";

private:
    std::string path_;
    std::ofstream out_;
    bool any_ = false;
    std::uint64_t last_iteration_ = 0;
};

}  // namespace dd
