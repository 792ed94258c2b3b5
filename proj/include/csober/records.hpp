#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace csober {

/// Per-iteration metrics row. best_feasible uses the minimised convention
/// (negated objective), so the trace is nonincreasing.
struct RunRecord {
    int iteration = 0;
    double best_feasible = 0.0;
    std::optional<double> log_regret;
    double eps_lp = 0.0;
    double est_rejection = 0.0;
    double realised_rejection = 0.0;
    double batch_logdet = 0.0;
    double wce = 0.0;
    int batch_size = 0;
    double elapsed_seconds = 0.0;
    std::uint64_t seed = 0;
};

std::string csv_header();
std::string to_csv_row(const RunRecord& r);
RunRecord parse_csv_row(const std::string& line);

/// Field-wise equality ignoring the wall-clock column.
bool same_results(const RunRecord& a, const RunRecord& b);

std::string records_to_csv(const std::vector<RunRecord>& records);
std::vector<RunRecord> parse_csv(const std::string& text);

}  // namespace csober
