#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace kept {

// One training-metrics record. Eval fields are populated only on eval steps;
// wall_ms is zero unless wall-clock recording was requested (reruns of a
// seeded run must produce byte-identical CSVs).
struct MetricsRow {
    std::size_t step = 0;
    std::size_t tokens_seen = 0;
    double loss = 0.0;
    double lr = 0.0;
    std::optional<double> eval_loss;
    std::optional<double> top1_agreement;
    std::optional<double> mean_kl;
    std::uint64_t wall_ms = 0;
};

inline constexpr const char* kMetricsHeader =
    "step,tokens_seen,loss,lr,eval_loss,top1_agreement,mean_kl,wall_ms";

// Locale-independent shortest round-trip formatting ('.' decimal separator).
inline std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw std::runtime_error("format_number: to_chars failed");
    return std::string(buf, ptr);
}

class MetricsSink {
  public:
    virtual ~MetricsSink() = default;
    virtual void write(const MetricsRow& row) = 0;
};

class MetricsVectorSink : public MetricsSink {
  public:
    void write(const MetricsRow& row) override { rows.push_back(row); }
    std::vector<MetricsRow> rows;
};

// Appends CSV rows in the fixed column order above; emits the header before
// the first row.
class MetricsCsvWriter : public MetricsSink {
  public:
    explicit MetricsCsvWriter(std::ostream& out) : out_(&out) {}
    explicit MetricsCsvWriter(const std::string& path)
        : file_(std::make_unique<std::ofstream>(path, std::ios::binary)), out_(file_.get()) {
        if (!*file_) throw std::runtime_error("cannot open metrics file: " + path);
    }

    void write(const MetricsRow& row) override {
        if (!wrote_header_) {
            *out_ << kMetricsHeader << "\n";
            wrote_header_ = true;
        }
        *out_ << row.step << ',' << row.tokens_seen << ',' << format_number(row.loss) << ','
              << format_number(row.lr) << ',' << opt(row.eval_loss) << ',' << opt(row.top1_agreement)
              << ',' << opt(row.mean_kl) << ',' << row.wall_ms << "\n";
        if (!*out_) throw std::runtime_error("metrics write failure");
    }

    void flush() { out_->flush(); }

  private:
    static std::string opt(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

    std::unique_ptr<std::ofstream> file_;
    std::ostream* out_;
    bool wrote_header_ = false;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline double parse_double_field(const std::string& s, const char* what) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw std::runtime_error(std::string("malformed metrics CSV: bad ") + what + " '" + s + "'");
    return v;
}

inline std::uint64_t parse_uint_field(const std::string& s, const char* what) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw std::runtime_error(std::string("malformed metrics CSV: bad ") + what + " '" + s + "'");
    return v;
}

}  // namespace detail

inline std::vector<MetricsRow> parse_metrics_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("malformed metrics CSV: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kMetricsHeader)
        throw std::runtime_error("malformed metrics CSV: unexpected header '" + line + "'");
    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != 8)
            throw std::runtime_error("malformed metrics CSV: expected 8 fields, got " +
                                     std::to_string(fields.size()));
        MetricsRow row;
        row.step = detail::parse_uint_field(fields[0], "step");
        row.tokens_seen = detail::parse_uint_field(fields[1], "tokens_seen");
        row.loss = detail::parse_double_field(fields[2], "loss");
        row.lr = detail::parse_double_field(fields[3], "lr");
        if (!fields[4].empty()) row.eval_loss = detail::parse_double_field(fields[4], "eval_loss");
        if (!fields[5].empty())
            row.top1_agreement = detail::parse_double_field(fields[5], "top1_agreement");
        if (!fields[6].empty()) row.mean_kl = detail::parse_double_field(fields[6], "mean_kl");
        row.wall_ms = detail::parse_uint_field(fields[7], "wall_ms");
        rows.push_back(row);
    }
    return rows;
}

inline std::vector<MetricsRow> parse_metrics_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read metrics CSV: " + path);
    return parse_metrics_csv(in);
}

}  // namespace kept
