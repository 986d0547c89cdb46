#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dpmv3 {

/// One benchmark measurement. Summary rows use seed -1.
struct ReportRow {
    std::string solver;
    int order = 0;
    std::string corrector;
    std::size_t nfe = 0;
    double h_max = 0.0;
    double l2_error = 0.0;
    double linf_error = 0.0;
    double seconds = 0.0;
    std::int64_t seed = 0;

    bool operator==(const ReportRow&) const = default;
};

struct RunReport {
    std::vector<ReportRow> rows;

    /// Orders rows by (solver, order, nfe, seed).
    void sort();
    bool operator==(const RunReport&) const = default;
};

inline constexpr const char* kCsvHeader = "solver,order,corrector,nfe,h_max,l2_error,linf_error,seconds,seed";

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

std::string to_csv(const RunReport& report);
RunReport parse_csv(const std::string& text);

/// Least-squares slope of log(l2_error) against log(h_max).
double measure_order(const std::vector<ReportRow>& rows);

} // namespace dpmv3
