#include "dpmv3/ems.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dpmv3/errors.hpp"

namespace dpmv3 {

using nlohmann::json;

void EmsConfig::validate() const
{
    if (num_intervals < 1)
        throw ArgumentError("EMS needs at least one grid interval");
    if (num_datapoints < 1)
        throw ArgumentError("EMS needs at least one datapoint");
    if (probes_per_point < 1)
        throw ArgumentError("EMS needs at least one probe per datapoint");
    if (!(lam_max > lam_min))
        throw ArgumentError("EMS lambda range must be increasing");
    if (!(floor_rel >= 0.0) || !(floor_abs >= 0.0))
        throw ArgumentError("EMS variance floor must be non-negative");
}

std::size_t EmsTable::nearest_index(double lam) const
{
    const double h = spacing();
    const double pos = (lam - lambda_grid.front()) / h;
    const double last = static_cast<double>(size() - 1);
    if (!(pos >= -0.5 - 1e-9) || !(pos <= last + 0.5 + 1e-9))
        throw DomainError("lambda " + std::to_string(lam) + " lies outside the EMS grid");
    return static_cast<std::size_t>(std::clamp(std::round(pos), 0.0, last));
}

void EmsTable::validate() const
{
    const auto n = static_cast<Eigen::Index>(size());
    if (n < 2)
        throw ArgumentError("EMS grid needs at least two points");
    for (const Rows* r : {&l, &s, &b, &l_dot}) {
        if (r->rows() != n || r->cols() != l.cols() || r->cols() < 1)
            throw ArgumentError("EMS arrays must have one row per grid point and a common dimension");
        if (!r->allFinite())
            throw ArgumentError("EMS entries must be finite");
    }
    const double h = spacing();
    for (std::size_t j = 0; j + 1 < size(); ++j) {
        const double step = lambda_grid[j + 1] - lambda_grid[j];
        if (!(step > 0.0) || std::abs(step - h) > 1e-12 * std::max(1.0, std::abs(lambda_grid[j])))
            throw ArgumentError("EMS lambda grid must be uniform and increasing");
    }
}

bool operator==(const EmsTable& a, const EmsTable& b)
{
    auto same = [](const Rows& x, const Rows& y) {
        return x.rows() == y.rows() && x.cols() == y.cols() && (x == y).all();
    };
    return a.lambda_grid == b.lambda_grid && same(a.l, b.l) && same(a.s, b.s) && same(a.b, b.b) &&
           same(a.l_dot, b.l_dot) && a.schedule == b.schedule && a.meta.num_datapoints == b.meta.num_datapoints &&
           a.meta.seed == b.meta.seed && a.meta.model == b.meta.model;
}

namespace {

Vec l_kernel(const ModelSpec& model, const Schedule& sched, double lam, const std::vector<Vec>& xs,
             const std::vector<Vec>& probes, std::size_t per_point)
{
    const double sigma = sched.sigma_of_lambda(lam);
    Vec acc = Vec::Zero(model.dim());
    for (std::size_t k = 0; k < xs.size(); ++k)
        for (std::size_t p = 0; p < per_point; ++p) {
            const Vec& v = probes[k * per_point + p];
            acc += sigma * eval_jvp(model, sched, xs[k], lam, v) * v;
        }
    return acc / static_cast<double>(xs.size() * per_point);
}

std::vector<Vec> diffuse_all(const Schedule& sched, const std::vector<Vec>& x0s, const std::vector<Vec>& zs, double lam)
{
    const double alpha = sched.alpha_of_lambda(lam);
    const double sigma = sched.sigma_of_lambda(lam);
    std::vector<Vec> xs;
    xs.reserve(x0s.size());
    for (std::size_t k = 0; k < x0s.size(); ++k)
        xs.push_back(alpha * x0s[k] + sigma * zs[k]);
    return xs;
}

std::size_t on_grid_index(const EmsTable& table, double lam)
{
    const std::size_t j = table.nearest_index(lam);
    if (std::abs(table.lambda_grid[j] - lam) > 1e-9 * std::max(1.0, std::abs(lam)))
        throw DomainError("lambda " + std::to_string(lam) + " is not an EMS grid point");
    return j;
}

// Runs body(j) for j in [0, n), in parallel when requested; rethrows the first failure.
template <class F>
void for_each_index(std::size_t n, Execution exec, F&& body)
{
    if (exec == Execution::Serial) {
        for (std::size_t j = 0; j < n; ++j)
            body(j);
        return;
    }
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(n); ++j) {
        try {
            body(static_cast<std::size_t>(j));
        } catch (...) {
#pragma omp critical(dpmv3_ems_failure)
            if (!failure)
                failure = std::current_exception();
        }
    }
    if (failure)
        std::rethrow_exception(failure);
}

} // namespace

Vec estimate_l(const ModelSpec& model, const Schedule& sched, double lam, const std::vector<Vec>& xs,
               CounterRng& rng, std::size_t probes)
{
    if (xs.empty())
        throw ArgumentError("estimate_l needs at least one datapoint");
    if (probes < 1)
        throw ArgumentError("estimate_l needs at least one probe");
    std::vector<Vec> v;
    v.reserve(xs.size() * probes);
    for (std::size_t i = 0; i < xs.size() * probes; ++i)
        v.push_back(rng.rademacher_vector(model.dim()));
    return l_kernel(model, sched, lam, xs, v, probes);
}

Vec estimate_l_dot(const std::vector<double>& lambda_grid, const Rows& l, std::size_t j)
{
    const std::size_t n = lambda_grid.size();
    if (n < 2 || static_cast<std::size_t>(l.rows()) != n || j >= n)
        throw ArgumentError("estimate_l_dot: index or shape out of range");
    const double h = (lambda_grid.back() - lambda_grid.front()) / static_cast<double>(n - 1);
    if (n == 2)
        return (l.row(1) - l.row(0)).transpose() / h;
    if (j == 0)
        return (-3.0 * l.row(0) + 4.0 * l.row(1) - l.row(2)).transpose() / (2.0 * h);
    if (j == n - 1)
        return (3.0 * l.row(n - 1) - 4.0 * l.row(n - 2) + l.row(n - 3)).transpose() / (2.0 * h);
    return (l.row(j + 1) - l.row(j - 1)).transpose() / (2.0 * h);
}

Vec eval_f(const ModelSpec& model, const Schedule& sched, const Vec& l, const Vec& x, double lam)
{
    const double alpha = sched.alpha_of_lambda(lam);
    const double sigma = sched.sigma_of_lambda(lam);
    return (sigma * eval_eps(model, sched, x, lam) - l * x) / alpha;
}

Vec eval_f(const ModelSpec& model, const Schedule& sched, const EmsTable& table, const Vec& x, double lam)
{
    const std::size_t j = on_grid_index(table, lam);
    return eval_f(model, sched, Vec(table.l.row(j).transpose()), x, table.lambda_grid[j]);
}

Vec eval_f1(const ModelSpec& model, const Schedule& sched, const Vec& l, const Vec& l_dot, const Vec& x, double lam)
{
    const double alpha = sched.alpha_of_lambda(lam);
    const double sigma = sched.sigma_of_lambda(lam);
    const double da = sched.dlog_alpha_dlambda(lam);
    const Vec eps = eval_eps(model, sched, x, lam);
    const Vec velocity = da * x - sigma * eps;
    const Vec eps1 = eval_eps_dlambda(model, sched, x, lam) + eval_jvp(model, sched, x, lam, velocity);
    return std::exp(-lam) * ((l - 1.0) * eps + eps1) - l_dot * x / alpha;
}

Vec eval_f1(const ModelSpec& model, const Schedule& sched, const EmsTable& table, const Vec& x, double lam)
{
    const std::size_t j = on_grid_index(table, lam);
    return eval_f1(model, sched, Vec(table.l.row(j).transpose()), Vec(table.l_dot.row(j).transpose()), x,
                   table.lambda_grid[j]);
}

std::pair<Vec, Vec> estimate_sb(const std::vector<Vec>& f, const std::vector<Vec>& f1, double floor_rel,
                                double floor_abs)
{
    if (f.empty() || f.size() != f1.size())
        throw ArgumentError("estimate_sb needs equal-length nonempty samples");
    const Eigen::Index d = f.front().size();
    const auto n = static_cast<double>(f.size());
    Vec mean_f = Vec::Zero(d);
    Vec mean_f1 = Vec::Zero(d);
    Vec mean_ff = Vec::Zero(d);
    for (std::size_t k = 0; k < f.size(); ++k) {
        if (f[k].size() != d || f1[k].size() != d)
            throw ArgumentError("estimate_sb samples must share one dimension");
        mean_f += f[k];
        mean_f1 += f1[k];
        mean_ff += f[k].square();
    }
    mean_f /= n;
    mean_f1 /= n;
    mean_ff /= n;
    Vec var = Vec::Zero(d);
    Vec cov = Vec::Zero(d);
    for (std::size_t k = 0; k < f.size(); ++k) {
        const Vec df = f[k] - mean_f;
        var += df.square();
        cov += df * (f1[k] - mean_f1);
    }
    var /= n;
    cov /= n;
    const Vec floor = floor_rel * mean_ff + floor_abs;
    // Variance at or below the floor is treated as roundoff of a constant f.
    const Vec s = (var <= floor).select(Vec::Zero(d), cov / (var + floor));
    const Vec b = mean_f1 - s * mean_f;
    return {s, b};
}

EmsTable estimate_table(const ModelSpec& model, const Schedule& sched, const EmsConfig& cfg)
{
    cfg.validate();
    const std::size_t n = cfg.num_intervals + 1;
    const Eigen::Index d = model.dim();

    EmsTable table;
    table.schedule = sched;
    table.meta = {cfg.num_datapoints, cfg.seed, model.kind_name()};
    table.lambda_grid.resize(n);
    const double h = (cfg.lam_max - cfg.lam_min) / static_cast<double>(cfg.num_intervals);
    for (std::size_t j = 0; j < n; ++j)
        table.lambda_grid[j] = cfg.lam_min + static_cast<double>(j) * h;
    table.lambda_grid.back() = cfg.lam_max;

    // The same datapoints, noises and probes are reused at every grid point.
    CounterRng data_rng(cfg.seed, 0);
    CounterRng noise_rng(cfg.seed, 1);
    CounterRng probe_rng(cfg.seed, 2);
    const std::vector<Vec> x0s = sample_data(model, data_rng, cfg.num_datapoints);
    std::vector<Vec> zs;
    zs.reserve(cfg.num_datapoints);
    for (std::size_t k = 0; k < cfg.num_datapoints; ++k)
        zs.push_back(noise_rng.normal_vector(d));
    std::vector<Vec> probes;
    probes.reserve(cfg.num_datapoints * cfg.probes_per_point);
    for (std::size_t i = 0; i < cfg.num_datapoints * cfg.probes_per_point; ++i)
        probes.push_back(probe_rng.rademacher_vector(d));

    table.l.resize(static_cast<Eigen::Index>(n), d);
    for_each_index(n, cfg.execution, [&](std::size_t j) {
        const double lam = table.lambda_grid[j];
        const auto xs = diffuse_all(sched, x0s, zs, lam);
        table.l.row(static_cast<Eigen::Index>(j)) = l_kernel(model, sched, lam, xs, probes, cfg.probes_per_point).transpose();
    });

    table.l_dot.resize(static_cast<Eigen::Index>(n), d);
    for (std::size_t j = 0; j < n; ++j)
        table.l_dot.row(static_cast<Eigen::Index>(j)) = estimate_l_dot(table.lambda_grid, table.l, j).transpose();

    table.s.resize(static_cast<Eigen::Index>(n), d);
    table.b.resize(static_cast<Eigen::Index>(n), d);
    for_each_index(n, cfg.execution, [&](std::size_t j) {
        const auto row = static_cast<Eigen::Index>(j);
        const double lam = table.lambda_grid[j];
        const Vec l = table.l.row(row).transpose();
        const Vec l_dot = table.l_dot.row(row).transpose();
        const auto xs = diffuse_all(sched, x0s, zs, lam);
        std::vector<Vec> f;
        std::vector<Vec> f1;
        f.reserve(xs.size());
        f1.reserve(xs.size());
        for (const auto& x : xs) {
            f.push_back(eval_f(model, sched, l, x, lam));
            f1.push_back(eval_f1(model, sched, l, l_dot, x, lam));
        }
        const auto [s, b] = estimate_sb(f, f1, cfg.floor_rel, cfg.floor_abs);
        table.s.row(row) = s.transpose();
        table.b.row(row) = b.transpose();
    });

    table.validate();
    return table;
}

std::string to_string(DegenerateKind kind)
{
    return kind == DegenerateKind::NoisePred ? "noise-pred" : "data-pred";
}

DegenerateKind degenerate_kind_from_string(const std::string& name)
{
    if (name == "noise-pred")
        return DegenerateKind::NoisePred;
    if (name == "data-pred")
        return DegenerateKind::DataPred;
    throw ArgumentError("unknown degenerate kind '" + name + "' (expected noise-pred or data-pred)");
}

EmsTable degenerate_table(DegenerateKind kind, const Schedule& sched, std::size_t num_intervals, double lam_min,
                          double lam_max, Eigen::Index dim)
{
    if (num_intervals < 1 || !(lam_max > lam_min) || dim < 1)
        throw ArgumentError("degenerate_table needs N >= 1, an increasing range and D >= 1");
    const auto n = static_cast<Eigen::Index>(num_intervals + 1);
    EmsTable table;
    table.schedule = sched;
    table.meta = {0, 0, to_string(kind)};
    table.lambda_grid.resize(num_intervals + 1);
    const double h = (lam_max - lam_min) / static_cast<double>(num_intervals);
    for (std::size_t j = 0; j <= num_intervals; ++j)
        table.lambda_grid[j] = lam_min + static_cast<double>(j) * h;
    table.lambda_grid.back() = lam_max;
    const bool data = kind == DegenerateKind::DataPred;
    table.l = Rows::Constant(n, dim, data ? 1.0 : 0.0);
    table.s = Rows::Constant(n, dim, data ? 0.0 : -1.0);
    table.b = Rows::Zero(n, dim);
    table.l_dot = Rows::Zero(n, dim);
    return table;
}

namespace {

json rows_to_json(const Rows& r)
{
    json out = json::array();
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index c = 0; c < r.cols(); ++c)
            row.push_back(r(i, c));
        out.push_back(std::move(row));
    }
    return out;
}

Rows rows_from_json(const json& j, const char* name, std::size_t n)
{
    if (!j.is_array() || j.size() != n)
        throw ParseError(std::string("field '") + name + "' must have one row per grid point");
    const std::size_t d = j.empty() ? 0 : j.front().size();
    Rows r(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = j[i].get<std::vector<double>>();
        if (row.size() != d)
            throw ParseError(std::string("field '") + name + "' has ragged rows");
        for (std::size_t c = 0; c < d; ++c)
            r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = row[c];
    }
    return r;
}

std::size_t line_of(const std::string& text, std::size_t byte)
{
    const auto end = text.begin() + static_cast<std::ptrdiff_t>(std::min(byte, text.size()));
    return 1 + static_cast<std::size_t>(std::count(text.begin(), end, '\n'));
}

} // namespace

std::string table_to_json_string(const EmsTable& table)
{
    json j;
    j["version"] = 1;
    j["schedule"] = table.schedule;
    j["lambda_grid"] = table.lambda_grid;
    j["l"] = rows_to_json(table.l);
    j["s"] = rows_to_json(table.s);
    j["b"] = rows_to_json(table.b);
    j["l_dot"] = rows_to_json(table.l_dot);
    j["meta"] = {{"K", table.meta.num_datapoints}, {"seed", table.meta.seed}, {"model", table.meta.model}};
    return j.dump() + "\n";
}

EmsTable table_from_json_string(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError("EMS table, line " + std::to_string(line_of(text, e.byte)) + ": " + e.what());
    }
    try {
        if (!j.is_object())
            throw ParseError("EMS table must be a JSON object");
        const int version = j.at("version").get<int>();
        if (version != 1)
            throw UnsupportedVersionError("unsupported EMS table version " + std::to_string(version) +
                                          " (this build reads version 1)");
        EmsTable table;
        table.schedule = schedule_from_json(j.at("schedule"));
        table.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
        const std::size_t n = table.lambda_grid.size();
        table.l = rows_from_json(j.at("l"), "l", n);
        table.s = rows_from_json(j.at("s"), "s", n);
        table.b = rows_from_json(j.at("b"), "b", n);
        table.l_dot = rows_from_json(j.at("l_dot"), "l_dot", n);
        const auto& meta = j.at("meta");
        table.meta = {meta.at("K").get<std::size_t>(), meta.at("seed").get<std::uint64_t>(),
                      meta.at("model").get<std::string>()};
        try {
            table.validate();
        } catch (const ArgumentError& e) {
            throw ParseError(std::string("EMS table: ") + e.what());
        }
        return table;
    } catch (const json::exception& e) {
        throw ParseError(std::string("EMS table: ") + e.what());
    }
}

void save_table(const std::string& path, const EmsTable& table)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open '" + path + "' for writing");
    out << table_to_json_string(table);
    if (!out)
        throw std::runtime_error("failed writing '" + path + "'");
}

LoadedTable load_table(const std::string& path, const Schedule* expected)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    LoadedTable loaded{table_from_json_string(buf.str()), {}};
    if (expected && !(*expected == loaded.table.schedule))
        loaded.warnings.push_back("EMS table schedule (" + to_string(loaded.table.schedule.kind()) +
                                  ") differs from the requested schedule (" + to_string(expected->kind()) + ")");
    return loaded;
}

} // namespace dpmv3
