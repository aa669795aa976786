#include "oodnorm/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "oodnorm/errors.hpp"

namespace oodnorm {

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary); // binary keeps line endings fixed
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    return out;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "' for reading");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_double(const std::string& cell, const std::string& path) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) {
        throw DataError("'" + path + "': cannot parse number '" + cell + "'");
    }
    return v;
}

long long parse_int(const std::string& cell, const std::string& path) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw DataError("'" + path + "': cannot parse integer '" + cell + "'");
    }
    return v;
}

} // namespace

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_matrix_csv(const std::string& path, const Matrix& m) {
    auto out = open_out(path);
    for (std::size_t c = 0; c < m.cols(); ++c) {
        out << (c ? ",x" : "x") << c;
    }
    out << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (c) out << ',';
            out << fmt17(m(r, c));
        }
        out << '\n';
    }
}

Matrix read_matrix_csv(const std::string& path) {
    const auto lines = read_lines(path);
    if (lines.size() < 2) throw DataError("'" + path + "': expected a header and data rows");
    const std::size_t cols = split_commas(lines[0]).size();
    if (cols == 0) throw DataError("'" + path + "': empty header");
    Matrix m(lines.size() - 1, cols);
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto cells = split_commas(lines[r]);
        if (cells.size() != cols) {
            throw DataError("'" + path + "': row " + std::to_string(r) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(cols));
        }
        for (std::size_t c = 0; c < cols; ++c) m(r - 1, c) = parse_double(cells[c], path);
    }
    return m;
}

void write_scores_csv(const std::string& path, const std::vector<ScoredSample>& scored) {
    auto out = open_out(path);
    out << "sample_id,statistic,score,label\n";
    for (const auto& s : scored) {
        out << s.sample_id << ',' << s.statistic << ',' << fmt17(s.score) << ',' << s.label
            << '\n';
    }
}

std::vector<ScoredSample> read_scores_csv(const std::string& path) {
    const auto lines = read_lines(path);
    if (lines.empty() || lines[0] != "sample_id,statistic,score,label") {
        throw DataError("'" + path + "': not a scores file");
    }
    std::vector<ScoredSample> out;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto cells = split_commas(lines[r]);
        if (cells.size() != 4) {
            throw DataError("'" + path + "': row " + std::to_string(r) + " is malformed");
        }
        ScoredSample s;
        s.sample_id = cells[0];
        s.statistic = cells[1];
        s.score = parse_double(cells[2], path);
        const long long label = parse_int(cells[3], path);
        if (label != 0 && label != 1) {
            throw DataError("'" + path + "': label must be 0 or 1");
        }
        s.label = static_cast<int>(label);
        out.push_back(std::move(s));
    }
    return out;
}

void write_report_csv(const std::string& path, const std::vector<DetectionReport>& reports) {
    auto out = open_out(path);
    out << "statistic,auc,ap,n_pos,n_neg\n";
    for (const auto& r : reports) {
        out << r.statistic << ',' << fmt17(r.auc) << ',' << fmt17(r.ap) << ',' << r.n_pos << ','
            << r.n_neg << '\n';
    }
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    auto out = open_out(path);
    out << "r,mean_bpd,stderr_bpd\n";
    for (const auto& row : rows) {
        out << fmt17(row.r) << ',' << fmt17(row.mean_bpd) << ',' << fmt17(row.stderr_bpd) << '\n';
    }
}

void write_train_log_csv(const std::string& path, const std::vector<TrainLogRow>& rows) {
    auto out = open_out(path);
    out << "step,train_loss,eval_bpd\n";
    for (const auto& row : rows) {
        out << row.step << ',' << fmt17(row.train_loss) << ',' << fmt17(row.eval_bpd) << '\n';
    }
}

void write_kv_csv(const std::string& path,
                  const std::vector<std::pair<std::string, std::string>>& rows) {
    auto out = open_out(path);
    out << "key,value\n";
    for (const auto& [k, v] : rows) out << k << ',' << v << '\n';
}

} // namespace oodnorm
