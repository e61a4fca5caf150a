#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pfcache {

// Shortest decimal form that round-trips the exact double; keeps metrics
// files byte-identical across runs with the same seed.
inline std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// One flat row per (episode, server), plus a "system" aggregate row per
// episode. The system row sums cost/penalties/reward/utility/D over servers
// and averages chr.
struct MetricsRecord {
    std::string run_id;
    std::string mode;
    int episode = 0;
    std::string server_id;  // "1".."M" or "system"
    double chr = 0;
    double replacement_cost = 0;
    int penalties = 0;
    double reward = 0;
    double utility = 0;
    long requests = 0;  // D_m

    static const char* csv_header() {
        return "run_id,mode,episode,server_id,chr,replacement_cost,penalties,reward,utility,d_m";
    }

    std::string to_csv() const {
        std::string row;
        row.reserve(128);
        row += run_id;
        row += ',';
        row += mode;
        row += ',';
        row += std::to_string(episode);
        row += ',';
        row += server_id;
        row += ',';
        row += format_double(chr);
        row += ',';
        row += format_double(replacement_cost);
        row += ',';
        row += std::to_string(penalties);
        row += ',';
        row += format_double(reward);
        row += ',';
        row += format_double(utility);
        row += ',';
        row += std::to_string(requests);
        return row;
    }
};

class MetricsSink {
public:
    void append(MetricsRecord rec) { rows_.push_back(std::move(rec)); }

    const std::vector<MetricsRecord>& rows() const { return rows_; }

    void write_csv(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);  // binary: identical bytes on any platform
        if (!os) throw std::runtime_error("metrics: cannot open " + path);
        os << MetricsRecord::csv_header() << '\n';
        for (const auto& r : rows_) os << r.to_csv() << '\n';
        if (!os) throw std::runtime_error("metrics: write failed for " + path);
    }

private:
    std::vector<MetricsRecord> rows_;
};

}  // namespace pfcache
