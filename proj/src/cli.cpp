#include "dpmv3/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dpmv3/bench.hpp"
#include "dpmv3/errors.hpp"

namespace dpmv3 {

namespace {

using nlohmann::json;

json read_json_file(const std::string& path, const char* what)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error(std::string("cannot open ") + what + " file '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string(what) + " file '" + path + "': " + e.what());
    }
}

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open '" + path + "' for writing");
    out << text;
    if (!out)
        throw std::runtime_error("failed writing '" + path + "'");
}

// A schedule argument is either a JSON file or one of the kind names with default parameters.
Schedule resolve_schedule(const std::string& arg)
{
    if (std::filesystem::is_regular_file(arg))
        return schedule_from_json(read_json_file(arg, "schedule"));
    switch (schedule_kind_from_string(arg)) {
    case ScheduleKind::VpLinear:
        return Schedule::vp_linear();
    case ScheduleKind::VpCosine:
        return Schedule::vp_cosine();
    case ScheduleKind::Edm:
        return Schedule::edm();
    }
    throw ArgumentError("unknown schedule '" + arg + "'");
}

std::shared_ptr<const ModelSpec> load_model(const std::string& path)
{
    return std::make_shared<const ModelSpec>(model_from_json(read_json_file(path, "model")));
}

std::string fixed6(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", std::abs(v) < 5e-7 ? 0.0 : v);
    return buf;
}

std::string sci(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "% .6e", v == 0.0 ? 0.0 : v);
    return buf;
}

struct EmsArgs {
    std::string model;
    std::string schedule = "vp-linear";
    std::size_t n = 120;
    std::size_t k = 1024;
    std::size_t probes = 1;
    std::uint64_t seed = 0;
    std::optional<double> lam_min;
    std::optional<double> lam_max;
    std::string out;
    bool serial = false;
};

int cmd_ems(const EmsArgs& a, std::ostream& out)
{
    const auto model = load_model(a.model);
    const Schedule sched = resolve_schedule(a.schedule);
    EmsConfig cfg;
    cfg.num_intervals = a.n;
    cfg.num_datapoints = a.k;
    cfg.probes_per_point = a.probes;
    cfg.seed = a.seed;
    cfg.lam_min = a.lam_min.value_or(sched.lambda_min());
    cfg.lam_max = a.lam_max.value_or(sched.lambda_of_t(sched.default_t_end()));
    cfg.execution = a.serial ? Execution::Serial : Execution::Parallel;
    const EmsTable table = estimate_table(*model, sched, cfg);
    save_table(a.out, table);

    out << "EMS table: " << table.size() << " grid points, D = " << table.dim() << ", K = " << cfg.num_datapoints
        << ", lambda in [" << fixed6(cfg.lam_min) << ", " << fixed6(cfg.lam_max) << "]\n";
    out << "l mean = " << fixed6(table.l.mean()) << "\n";
    out << "s mean = " << fixed6(table.s.mean()) << "\n";
    out << "b mean = " << fixed6(table.b.mean()) << "\n";
    out << "lambda,l_mean,s_mean,b_mean\n";
    for (std::size_t j = 0; j < table.size(); ++j) {
        const auto r = static_cast<Eigen::Index>(j);
        out << sci(table.lambda_grid[j]) << "," << sci(table.l.row(r).mean()) << "," << sci(table.s.row(r).mean())
            << "," << sci(table.b.row(r).mean()) << "\n";
    }
    out << "wrote " << a.out << "\n";
    return 0;
}

struct SolveArgs {
    std::string ems;
    std::string degenerate;
    std::string schedule;
    std::string model;
    int order = 2;
    std::string corrector = "none";
    bool pseudo_predictor = false;
    bool pseudo_corrector = false;
    bool singlestep = false;
    std::size_t steps = 10;
    std::string grid = "uniform-lambda";
    std::optional<double> t_start;
    std::optional<double> t_end;
    std::uint64_t noise_seed = 0;
    std::string out;
    bool trace = false;
};

json vec_json(const Vec& v)
{
    return std::vector<double>(v.data(), v.data() + v.size());
}

json num_or_null(double v)
{
    return std::isfinite(v) ? json(v) : json(nullptr);
}

int cmd_solve(const SolveArgs& a, std::ostream& out, std::ostream& err)
{
    const auto model = load_model(a.model);
    std::shared_ptr<const EmsTable> ems;
    Schedule sched = Schedule::vp_linear();
    if (!a.ems.empty()) {
        auto loaded = load_table(a.ems);
        sched = loaded.table.schedule;
        if (!a.schedule.empty() && !(resolve_schedule(a.schedule) == sched))
            throw ArgumentError("EMS table schedule (" + to_string(sched.kind()) +
                                ") is incompatible with the requested schedule");
        for (const auto& w : loaded.warnings)
            err << "warning: " << w << "\n";
        ems = std::make_shared<const EmsTable>(std::move(loaded.table));
    } else {
        sched = resolve_schedule(a.schedule);
    }
    if (ems && ems->dim() != model->dim())
        throw ArgumentError("EMS table dimension does not match the model");

    const double t_start = a.t_start.value_or(sched.t_max());
    const double t_end = a.t_end.value_or(sched.default_t_end());
    SolverConfig cfg;
    cfg.order = a.order;
    cfg.corrector = corrector_from_string(a.corrector);
    cfg.pseudo_predictor = a.pseudo_predictor;
    cfg.pseudo_corrector = a.pseudo_corrector;
    cfg.grid = make_time_grid(sched, a.steps, grid_kind_from_string(a.grid), t_start, t_end);
    if (!ems)
        ems = std::make_shared<const EmsTable>(degenerate_table(degenerate_kind_from_string(a.degenerate), sched, 1,
                                                                cfg.grid.lambdas.front(), cfg.grid.lambdas.back(),
                                                                model->dim()));
    const auto coeffs = make_coefficients(ems);
    const Vec x0 = initial_state(sched, model->dim(), t_start, a.noise_seed);
    const EpsFn eps = make_eps_fn(*model, sched);
    const auto res = a.singlestep ? singlestep_sample(eps, *coeffs, cfg, x0) : multistep_sample(eps, *coeffs, cfg, x0);

    json j;
    j["grid"] = res.grid.timesteps;
    j["x_final"] = vec_json(res.x_final);
    j["nfe"] = res.nfe;
    if (a.trace) {
        json trace = json::array();
        for (const auto& e : res.trace)
            trace.push_back({{"t", e.t},
                             {"lambda", e.lambda},
                             {"x", vec_json(e.x)},
                             {"eps_norm", num_or_null(e.eps_norm)},
                             {"g_norm", num_or_null(e.g_norm)}});
        j["trace"] = trace;
    }
    const std::string text = j.dump() + "\n";
    if (a.out.empty())
        out << text;
    else
        write_text(a.out, text);
    return 0;
}

struct BenchArgs {
    std::string model;
    std::string ems;
    std::string schedule;
    std::vector<int> orders{1, 2, 3};
    int order = 3;
    std::vector<std::size_t> nfes{10, 20, 40, 80};
    std::vector<std::uint64_t> seeds{0};
    std::string grid = "uniform-lambda";
    std::string corrector = "none";
    bool pseudo_predictor = false;
    bool pseudo_corrector = false;
    std::vector<std::string> baselines{"noise-pred", "data-pred", "ddim"};
    std::optional<double> t_start;
    std::optional<double> t_end;
    std::string out;
    bool timing = false;
};

BenchSetup make_setup(const BenchArgs& a, std::ostream& err)
{
    BenchSetup s;
    s.model = load_model(a.model);
    auto loaded = load_table(a.ems);
    s.schedule = loaded.table.schedule;
    if (!a.schedule.empty() && !(resolve_schedule(a.schedule) == s.schedule))
        throw ArgumentError("EMS table schedule is incompatible with the requested schedule");
    for (const auto& w : loaded.warnings)
        err << "warning: " << w << "\n";
    if (loaded.table.dim() != s.model->dim())
        throw ArgumentError("EMS table dimension does not match the model");
    s.ems = std::make_shared<const EmsTable>(std::move(loaded.table));
    s.grid = grid_kind_from_string(a.grid);
    s.t_start = a.t_start.value_or(s.schedule.t_max());
    s.t_end = a.t_end.value_or(s.schedule.default_t_end());
    s.nfes = a.nfes;
    s.seeds = a.seeds;
    s.timing = a.timing;
    return s;
}

void emit_report(const RunReport& report, const std::string& path, std::ostream& out)
{
    const std::string csv = to_csv(report);
    if (path.empty())
        out << csv;
    else
        write_text(path, csv);
}

int cmd_bench_convergence(const BenchArgs& a, std::ostream& out, std::ostream& err)
{
    ConvergenceOptions opts;
    opts.setup = make_setup(a, err);
    opts.orders = a.orders;
    opts.corrector = corrector_from_string(a.corrector);
    opts.pseudo_predictor = a.pseudo_predictor;
    opts.pseudo_corrector = a.pseudo_corrector;
    emit_report(bench_convergence(opts), a.out, out);
    return 0;
}

int cmd_bench_compare(const BenchArgs& a, std::ostream& out, std::ostream& err)
{
    CompareOptions opts;
    opts.setup = make_setup(a, err);
    opts.order = a.order;
    opts.corrector = corrector_from_string(a.corrector);
    opts.pseudo_predictor = a.pseudo_predictor;
    opts.pseudo_corrector = a.pseudo_corrector;
    opts.baselines = a.baselines;
    for (const auto& b : opts.baselines)
        if (b != "ddim")
            degenerate_kind_from_string(b);
    emit_report(bench_compare(opts), a.out, out);
    return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Exponential-integrator diffusion ODE sampler with empirical model statistics", "dpmv3"};
    app.require_subcommand(1);

    EmsArgs ems;
    auto* ems_cmd = app.add_subcommand("ems", "estimate l, s, b on a logSNR grid");
    ems_cmd->add_option("--model", ems.model, "model JSON file")->required();
    ems_cmd->add_option("--schedule", ems.schedule, "schedule JSON file or vp-linear|vp-cosine|edm")
        ->capture_default_str();
    ems_cmd->add_option("--num-timesteps", ems.n, "grid intervals N")->capture_default_str();
    ems_cmd->add_option("--num-datapoints", ems.k, "datapoints K")->capture_default_str();
    ems_cmd->add_option("--probes", ems.probes, "Rademacher probes per datapoint")->capture_default_str();
    ems_cmd->add_option("--seed", ems.seed, "RNG seed")->capture_default_str();
    ems_cmd->add_option("--lam-min", ems.lam_min, "lower logSNR (default lambda(t_max))");
    ems_cmd->add_option("--lam-max", ems.lam_max, "upper logSNR (default lambda of the default end time)");
    ems_cmd->add_option("--out", ems.out, "output EMS table JSON")->required();
    ems_cmd->add_flag("--serial", ems.serial, "use the serial reference kernel");

    SolveArgs solve;
    auto* solve_cmd = app.add_subcommand("solve", "sample one trajectory");
    auto* ems_opt = solve_cmd->add_option("--ems", solve.ems, "EMS table JSON");
    auto* deg_opt = solve_cmd->add_option("--degenerate", solve.degenerate, "noise-pred|data-pred instead of --ems");
    ems_opt->excludes(deg_opt);
    solve_cmd->add_option("--schedule", solve.schedule, "schedule JSON file or name (required with --degenerate)");
    solve_cmd->add_option("--model", solve.model, "model JSON file")->required();
    solve_cmd->add_option("--order", solve.order, "solver order 1..4")->capture_default_str();
    solve_cmd->add_option("--corrector", solve.corrector, "none|full|half")->capture_default_str();
    solve_cmd->add_flag("--pseudo-predictor", solve.pseudo_predictor);
    solve_cmd->add_flag("--pseudo-corrector", solve.pseudo_corrector);
    solve_cmd->add_flag("--singlestep", solve.singlestep, "singlestep sampler instead of multistep");
    solve_cmd->add_option("--steps", solve.steps, "number of steps M")->capture_default_str();
    solve_cmd->add_option("--grid", solve.grid, "uniform-lambda|uniform-t")->capture_default_str();
    solve_cmd->add_option("--t-start", solve.t_start);
    solve_cmd->add_option("--t-end", solve.t_end);
    solve_cmd->add_option("--noise-seed", solve.noise_seed)->capture_default_str();
    solve_cmd->add_option("--out", solve.out, "output JSON (stdout if omitted)");
    solve_cmd->add_flag("--trace", solve.trace, "include the per-step trace");

    BenchArgs conv;
    auto* conv_cmd = app.add_subcommand("bench-convergence", "error vs NFE against the reference solver");
    BenchArgs cmp;
    auto* cmp_cmd = app.add_subcommand("bench-compare", "estimated EMS vs degenerate baselines");
    for (auto [cmd, a] : {std::pair{conv_cmd, &conv}, std::pair{cmp_cmd, &cmp}}) {
        cmd->add_option("--model", a->model, "model JSON file")->required();
        cmd->add_option("--ems", a->ems, "estimated EMS table JSON")->required();
        cmd->add_option("--schedule", a->schedule, "expected schedule (checked against the table)");
        cmd->add_option("--nfe", a->nfes, "comma-separated NFE list")->delimiter(',')->capture_default_str();
        cmd->add_option("--seeds", a->seeds, "comma-separated noise seeds")->delimiter(',')->capture_default_str();
        cmd->add_option("--grid", a->grid, "uniform-lambda|uniform-t")->capture_default_str();
        cmd->add_option("--corrector", a->corrector, "none|full|half")->capture_default_str();
        cmd->add_flag("--pseudo-predictor", a->pseudo_predictor);
        cmd->add_flag("--pseudo-corrector", a->pseudo_corrector);
        cmd->add_option("--t-start", a->t_start);
        cmd->add_option("--t-end", a->t_end);
        cmd->add_option("--out", a->out, "output CSV (stdout if omitted)");
        cmd->add_flag("--timing", a->timing, "fill the seconds column with wall-clock times");
    }
    conv_cmd->add_option("--orders", conv.orders, "comma-separated solver orders")->delimiter(',')->capture_default_str();
    cmp_cmd->add_option("--order", cmp.order, "order of the estimated-EMS solver and the degenerate baselines")
        ->capture_default_str();
    cmp_cmd->add_option("--baselines", cmp.baselines, "comma-separated subset of noise-pred,data-pred,ddim")
        ->delimiter(',')
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        if (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front())
            err << sub->help();
        else
            err << app.help();
        return 2;
    }

    try {
        if (ems_cmd->parsed())
            return cmd_ems(ems, out);
        if (solve_cmd->parsed()) {
            if (solve.ems.empty() && solve.degenerate.empty()) {
                err << "error: solve needs --ems or --degenerate\n";
                return 2;
            }
            if (!solve.degenerate.empty() && solve.schedule.empty()) {
                err << "error: --degenerate needs --schedule\n";
                return 2;
            }
            return cmd_solve(solve, out, err);
        }
        if (conv_cmd->parsed())
            return cmd_bench_convergence(conv, out, err);
        if (cmp_cmd->parsed())
            return cmd_bench_compare(cmp, out, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    std::vector<const char*> argv{"dpmv3"};
    for (const auto& a : args)
        argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace dpmv3
