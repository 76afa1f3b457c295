#include "flowobs/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "flowobs/error.hpp"

namespace flowobs {

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

double parse_double(std::string_view text, const std::string& context) {
    double v = 0.0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    if (!text.empty() && *first == '+') ++first;
    const auto r = std::from_chars(first, last, v);
    if (text.empty() || r.ec != std::errc() || r.ptr != last)
        throw IngestError(context + ": cannot parse number '" + std::string(text) + "'");
    return v;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestError("cannot open " + path.string() + " for writing");
    return out;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        cells.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cells;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

// Reads a header line and numeric rows. Row numbers in errors are 1-based
// file lines.
CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot open " + path.string());
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split(line);
        if (t.header.empty()) {
            for (auto c : cells) t.header.emplace_back(c);
            continue;
        }
        if (cells.size() != t.header.size()) {
            throw IngestError(path.filename().string() + " line " + std::to_string(lineno) + ": expected " +
                              std::to_string(t.header.size()) + " columns, found " + std::to_string(cells.size()));
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            row.push_back(parse_double(cells[c], path.filename().string() + " line " + std::to_string(lineno) +
                                                     " column " + t.header[c]));
        }
        t.rows.push_back(std::move(row));
    }
    if (t.header.empty()) throw IngestError(path.filename().string() + ": empty file (header required)");
    if (t.rows.empty()) throw IngestError(path.filename().string() + ": no data rows");
    return t;
}

void expect_header(const CsvTable& t, const std::vector<std::string>& want, const std::filesystem::path& path) {
    if (t.header != want) {
        std::string w;
        for (const auto& h : want) w += (w.empty() ? "" : ",") + h;
        throw IngestError(path.filename().string() + ": header must be '" + w + "'");
    }
}

void check_increasing(const CsvTable& t, const std::filesystem::path& path) {
    for (std::size_t i = 1; i < t.rows.size(); ++i) {
        if (!(t.rows[i][0] > t.rows[i - 1][0])) {
            throw IngestError(path.filename().string() + " data row " + std::to_string(i + 1) +
                              ": time is not strictly increasing");
        }
    }
}

void write_row(std::ostream& out, const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out << ',';
        out << format_double(values[i]);
    }
    out << '\n';
}

const std::vector<std::string> kMeasurementHeader{"time_min", "v_out_V", "current_A", "flow_L_per_min"};
const std::vector<std::string> kTruthHeader{"time_min", "soc", "soc_cell", "crossover_mol_per_min", "v_out_V"};

std::vector<std::string> trace_header(Eigen::Index n) {
    std::vector<std::string> h{"time_min", "soc_hat", "soc_cell_hat", "theta_hat"};
    for (Eigen::Index i = 3; i < n; ++i) h.push_back("omega_" + std::to_string(i - 1) + "_hat");
    h.push_back("y_hat");
    h.push_back("innovation");
    for (Eigen::Index i = 0; i < n; ++i) h.push_back("gain_" + std::to_string(i));
    h.push_back("crossover_hat_mol_per_min");
    return h;
}

}  // namespace

void write_measurements_csv(const std::filesystem::path& path, const std::vector<MeasurementSample>& samples) {
    auto out = open_out(path);
    for (std::size_t i = 0; i < kMeasurementHeader.size(); ++i) out << (i ? "," : "") << kMeasurementHeader[i];
    out << '\n';
    for (const auto& s : samples) write_row(out, {s.time, s.v_out, s.current, s.flow_rate});
}

std::vector<MeasurementSample> read_measurements_csv(const std::filesystem::path& path) {
    const auto t = read_csv(path);
    expect_header(t, kMeasurementHeader, path);
    check_increasing(t, path);
    std::vector<MeasurementSample> out;
    out.reserve(t.rows.size());
    for (const auto& r : t.rows) out.push_back({r[0], r[1], r[2], r[3]});
    return out;
}

void write_truth_csv(const std::filesystem::path& path, const Trajectory& truth) {
    auto out = open_out(path);
    for (std::size_t i = 0; i < kTruthHeader.size(); ++i) out << (i ? "," : "") << kTruthHeader[i];
    out << '\n';
    for (const auto& s : truth.samples)
        write_row(out, {s.time, s.state.soc, s.state.soc_cell, s.crossover_flux, s.v_out});
}

Trajectory read_truth_csv(const std::filesystem::path& path) {
    const auto t = read_csv(path);
    expect_header(t, kTruthHeader, path);
    check_increasing(t, path);
    Trajectory tr;
    for (const auto& r : t.rows) {
        TrajectorySample s;
        s.time = r[0];
        s.state = {r[1], r[2]};
        s.crossover_flux = r[3];
        s.v_out = r[4];
        tr.samples.push_back(s);
    }
    return tr;
}

void write_trace_csv(const std::filesystem::path& path, const ObserverTrace& trace) {
    auto out = open_out(path);
    const Eigen::Index n = trace.records.empty() ? 5 : trace.records.front().x_hat.size();
    const auto header = trace_header(n);
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    std::vector<double> row;
    for (const auto& r : trace.records) {
        row.clear();
        row.push_back(r.time);
        for (Eigen::Index i = 0; i < n; ++i) row.push_back(r.x_hat(i));
        row.push_back(r.y_hat);
        row.push_back(r.innovation);
        for (Eigen::Index i = 0; i < n; ++i) row.push_back(r.gain(i));
        row.push_back(r.crossover);
        write_row(out, row);
    }
}

ObserverTrace read_trace_csv(const std::filesystem::path& path) {
    const auto t = read_csv(path);
    if (t.header.size() < 10 || (t.header.size() - 4) % 2 != 0)
        throw IngestError(path.filename().string() + ": unexpected trace column count");
    const auto n = static_cast<Eigen::Index>((t.header.size() - 4) / 2);
    expect_header(t, trace_header(n), path);
    check_increasing(t, path);
    ObserverTrace trace;
    for (const auto& r : t.rows) {
        TraceRecord rec;
        rec.time = r[0];
        rec.x_hat = Eigen::Map<const Vector>(r.data() + 1, n);
        rec.y_hat = r[static_cast<std::size_t>(n) + 1];
        rec.innovation = r[static_cast<std::size_t>(n) + 2];
        rec.gain = Eigen::Map<const Vector>(r.data() + n + 3, n);
        rec.crossover = r.back();
        trace.records.push_back(std::move(rec));
    }
    return trace;
}

}  // namespace flowobs
