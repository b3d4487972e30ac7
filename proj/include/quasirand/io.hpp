#pragma once

// CSV ingestion for the estimate command, and the plot-ready CSV outputs of
// the simulation and numerical-study commands. All files are UTF-8 with '.'
// decimal separators; parsing is locale-independent.

#include "quasirand/model.hpp"
#include "quasirand/simlab.hpp"
#include "quasirand/theory.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace quasirand {

namespace csv {

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        while (!field.empty() && (field.back() == '\r' || field.back() == ' '))
            field.pop_back();
        std::size_t start = 0;
        while (start < field.size() && field[start] == ' ') ++start;
        fields.push_back(field.substr(start));
    }
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

inline double parse_double(const std::string& text, const std::string& context) {
    double value = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end)
        throw std::invalid_argument("could not parse number '" + text + "' in " + context);
    return value;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    int column(const std::string& name) const {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) return static_cast<int>(j);
        return -1;
    }
};

inline Table read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open file: " + path);
    Table table;
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("empty file: " + path);
    table.header = split_line(line);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_line(line);
        if (fields.size() != table.header.size())
            throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                        ": wrong number of fields");
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields)
            row.push_back(parse_double(f, path + ":" + std::to_string(line_no)));
        table.rows.push_back(std::move(row));
    }
    return table;
}

} // namespace csv

// Convenience file: columns y,x1..xp[,pi_r]. Reference file: x1..xp,pi_r.
// Header row required; the covariate count p is inferred from the contiguous
// x1..xp names.
inline ObservedData read_observed_data(const std::string& conv_path, const std::string& ref_path) {
    const csv::Table conv = csv::read_table(conv_path);
    const csv::Table ref = csv::read_table(ref_path);

    auto covariate_count = [](const csv::Table& t) {
        int p = 0;
        while (t.column("x" + std::to_string(p + 1)) >= 0) ++p;
        return p;
    };
    const int p_conv = covariate_count(conv);
    const int p_ref = covariate_count(ref);
    if (p_conv == 0) throw std::invalid_argument(conv_path + ": missing column x1");
    if (p_ref == 0) throw std::invalid_argument(ref_path + ": missing column x1");
    if (p_conv != p_ref)
        throw std::invalid_argument("covariate count mismatch between convenience and reference files");
    const int y_col = conv.column("y");
    if (y_col < 0) throw std::invalid_argument(conv_path + ": missing column y");
    const int ref_pi_col = ref.column("pi_r");
    if (ref_pi_col < 0) throw std::invalid_argument(ref_path + ": missing column pi_r");
    const int conv_pi_col = conv.column("pi_r");

    ObservedData data;
    const auto n_c = static_cast<Eigen::Index>(conv.rows.size());
    const auto n_r = static_cast<Eigen::Index>(ref.rows.size());
    data.conv_x.resize(n_c, p_conv);
    data.conv_y.resize(n_c);
    Vector conv_pi(n_c);
    for (Eigen::Index i = 0; i < n_c; ++i) {
        data.conv_y[i] = conv.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(y_col)];
        for (int j = 0; j < p_conv; ++j) {
            const int col = conv.column("x" + std::to_string(j + 1));
            data.conv_x(i, j) = conv.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(col)];
        }
        if (conv_pi_col >= 0)
            conv_pi[i] = conv.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(conv_pi_col)];
    }
    if (conv_pi_col >= 0) data.conv_pi_r = std::move(conv_pi);
    data.ref_x.resize(n_r, p_ref);
    data.ref_pi_r.resize(n_r);
    data.ref_w.resize(n_r);
    for (Eigen::Index i = 0; i < n_r; ++i) {
        for (int j = 0; j < p_ref; ++j) {
            const int col = ref.column("x" + std::to_string(j + 1));
            data.ref_x(i, j) = ref.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(col)];
        }
        data.ref_pi_r[i] = ref.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(ref_pi_col)];
        data.ref_w[i] = 1.0 / data.ref_pi_r[i];
    }
    data.validate();
    return data;
}

namespace csv {

inline std::string format_double(double v) {
    char buffer[40];
    std::snprintf(buffer, sizeof(buffer), "%.10g", v);
    return buffer;
}

} // namespace csv

inline void write_summary_csv(const std::string& path, const MCSummary& summary) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "scenario,overlap,method,parameter,mean,se,se_hat,coverage,rmse,n_flags\n";
    for (const auto& cell : summary.cells) {
        const int n_flags = cell.n_nonconverged + cell.n_inf_variance;
        out << summary.config.id << ',' << summary.config.overlap << ',' << cell.method << ','
            << cell.parameter << ',' << csv::format_double(cell.mean) << ','
            << csv::format_double(cell.se) << ',' << csv::format_double(cell.mean_se_hat) << ','
            << csv::format_double(cell.coverage) << ',' << csv::format_double(cell.rmse) << ','
            << n_flags << '\n';
    }
}

inline void write_replicates_csv(const std::string& path, const MCSummary& summary) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "scenario,overlap,method,parameter,rep,estimate,rel_bias\n";
    for (const auto& rec : summary.replicates) {
        for (const auto& mr : rec.methods) {
            const double truths[2] = {summary.beta_true, summary.mu_true};
            const double values[2] = {mr.beta1, mr.mu};
            const char* names[2] = {"beta_c1", "mu"};
            for (int k = 0; k < 2; ++k) {
                out << summary.config.id << ',' << summary.config.overlap << ','
                    << method_name(mr.method) << ',' << names[k] << ',' << rec.rep << ','
                    << csv::format_double(values[k]) << ','
                    << csv::format_double((values[k] - truths[k]) / truths[k]) << '\n';
            }
        }
    }
}

inline void write_overlap_hist_csv(const std::string& path, const HistogramResult& hist) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "bin,x_lo,x_hi,conv_count,ref_count\n";
    for (std::size_t b = 0; b < hist.conv_counts.size(); ++b) {
        out << b << ',' << csv::format_double(hist.edges[static_cast<Eigen::Index>(b)]) << ','
            << csv::format_double(hist.edges[static_cast<Eigen::Index>(b + 1)]) << ','
            << hist.conv_counts[b] << ',' << hist.ref_counts[b] << '\n';
    }
}

inline void write_grid_csv(const std::string& path, const std::vector<GridPoint>& grid) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "f_c,f_r,overlap,method,se_beta,se_mu\n";
    for (const auto& point : grid) {
        for (MethodKind m : GridPoint::kMethods) {
            out << csv::format_double(point.f_c) << ',' << csv::format_double(point.f_r) << ','
                << point.overlap << ',' << method_name(m) << ','
                << csv::format_double(point.beta_se(m)) << ','
                << csv::format_double(point.mu_se(m)) << '\n';
        }
    }
}

// Per-unit predicted vs true participation probabilities (two-step bias
// comparison output).
inline void write_predictions_csv(const std::string& path, const std::string& scenario,
                                  const std::string& overlap, const FinitePopulation& pop,
                                  const std::vector<std::pair<MethodKind, Vector>>& predictions) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "scenario,overlap,method,unit,true_pi_c,pred_pi_c\n";
    for (const auto& [method, pred] : predictions) {
        for (Eigen::Index i = 0; i < pop.size(); ++i) {
            out << scenario << ',' << overlap << ',' << method_name(method) << ',' << i << ','
                << csv::format_double(pop.pi_c_true[i]) << ',' << csv::format_double(pred[i])
                << '\n';
        }
    }
}

} // namespace quasirand
