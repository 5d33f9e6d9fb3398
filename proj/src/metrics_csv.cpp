#include "dd/metrics_csv.hpp"

#include <iomanip>
#include <sstream>

namespace dd {

namespace {

std::string fmt(double v) {
    std::ostringstream ss;
    ss << std::setprecision(10) << v;
    return ss.str();
}

}  // namespace

MetricsWriter::MetricsWriter(const std::string& path) : path_(path), out_(path) {
    if (!out_) throw FormatError("cannot open metrics file for write: " + path);
    out_ << kHeader << "\n";
    out_.flush();
}

void MetricsWriter::append(const MetricsRecord& rec) {
    if (any_ && rec.iteration <= last_iteration_)
        throw StateError("metrics iteration " + std::to_string(rec.iteration) + " not above " +
                         std::to_string(last_iteration_));
    out_ << rec.iteration << "," << fmt(rec.loss_simple) << ","
         << (rec.loss_vlb ? fmt(*rec.loss_vlb) : std::string()) << "," << fmt(rec.loss) << "," << rec.teacher_fwd
         << "," << rec.wall_ms << "," << (rec.metric_name ? *rec.metric_name : std::string()) << ","
         << (rec.metric_value ? fmt(*rec.metric_value) : std::string()) << "\n";
    out_.flush();
    any_ = true;
    last_iteration_ = rec.iteration;
}

}  // namespace dd
