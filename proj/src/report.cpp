#include "dpmv3/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <tuple>

#include "dpmv3/errors.hpp"

namespace dpmv3 {

void RunReport::sort()
{
    std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
        return std::tie(a.solver, a.order, a.nfe, a.seed) < std::tie(b.solver, b.order, b.nfe, b.seed);
    });
}

std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string to_csv(const RunReport& report)
{
    std::string out = std::string(kCsvHeader) + "\n";
    for (const auto& r : report.rows) {
        if (r.solver.find_first_of(",\n\"") != std::string::npos ||
            r.corrector.find_first_of(",\n\"") != std::string::npos)
            throw ArgumentError("CSV fields may not contain commas, quotes or newlines");
        out += r.solver + "," + std::to_string(r.order) + "," + r.corrector + "," + std::to_string(r.nfe) + "," +
               format_double(r.h_max) + "," + format_double(r.l2_error) + "," + format_double(r.linf_error) + "," +
               format_double(r.seconds) + "," + std::to_string(r.seed) + "\n";
    }
    return out;
}

namespace {

template <class T>
T parse_field(const std::string& s, std::size_t line)
{
    T v{};
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ParseError("CSV line " + std::to_string(line) + ": bad field '" + s + "'");
    return v;
}

} // namespace

RunReport parse_csv(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader)
        throw ParseError("CSV line 1: expected header '" + std::string(kCsvHeader) + "'");
    RunReport report;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ','))
            f.push_back(cell);
        if (f.size() != 9)
            throw ParseError("CSV line " + std::to_string(lineno) + ": expected 9 fields");
        report.rows.push_back({f[0], parse_field<int>(f[1], lineno), f[2], parse_field<std::size_t>(f[3], lineno),
                               parse_field<double>(f[4], lineno), parse_field<double>(f[5], lineno),
                               parse_field<double>(f[6], lineno), parse_field<double>(f[7], lineno),
                               parse_field<std::int64_t>(f[8], lineno)});
    }
    return report;
}

double measure_order(const std::vector<ReportRow>& rows)
{
    if (rows.size() < 3)
        throw ArgumentError("measure_order needs at least three rows");
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& r : rows) {
        if (!(r.l2_error > 0.0) || !(r.h_max > 0.0))
            throw ArgumentError("measure_order needs positive errors and step sizes");
        xs.push_back(std::log(r.h_max));
        ys.push_back(std::log(r.l2_error));
    }
    const auto n = static_cast<double>(xs.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx == 0.0)
        throw ArgumentError("measure_order needs distinct step sizes");
    return sxy / sxx;
}

} // namespace dpmv3
