#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpmv3/bench.hpp"
#include "dpmv3/cli.hpp"
#include "dpmv3/report.hpp"
#include "dpmv3/solver.hpp"
#include "testbed.hpp"

using namespace dpmv3;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

Run cli(const std::vector<std::string>& args)
{
    std::ostringstream out;
    std::ostringstream err;
    Run r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Scratch directory with a point-gaussian and a mixture model file.
struct Workspace {
    fs::path dir;

    Workspace()
    {
        static int counter = 0;
        dir = fs::temp_directory_path() / ("dpmv3_cli_" + std::to_string(counter++));
        fs::remove_all(dir);
        fs::create_directories(dir);
        nlohmann::json point;
        to_json(point, testbed::point(testbed::vec({0.5, -0.25, 1.0, 0.0})));
        std::ofstream(dir / "point.json") << point.dump();
        nlohmann::json mix;
        to_json(mix, testbed::mixture());
        std::ofstream(dir / "mix.json") << mix.dump();
    }
    ~Workspace() { fs::remove_all(dir); }

    std::string operator()(const std::string& name) const { return (dir / name).string(); }
};

Vec json_vec(const nlohmann::json& j)
{
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<ReportRow> rows_of(const RunReport& rep, const std::string& solver, std::int64_t seed)
{
    std::vector<ReportRow> out;
    for (const auto& r : rep.rows)
        if (r.solver == solver && r.seed == seed)
            out.push_back(r);
    return out;
}

} // namespace

TEST_CASE("usage errors exit with code 2")
{
    Workspace ws;
    CHECK(cli({"ems", "--model", ws("point.json")}).code == 2);
    CHECK(cli({}).code == 2);
    CHECK(cli({"frobnicate"}).code == 2);
    CHECK(cli({"solve", "--model", ws("point.json"), "--ems", "a.json", "--degenerate", "noise-pred"}).code == 2);
    CHECK(cli({"solve", "--model", ws("point.json")}).code == 2);
    CHECK(cli({"solve", "--model", ws("point.json"), "--degenerate", "noise-pred"}).code == 2);
    CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("runtime errors exit with code 1")
{
    Workspace ws;
    CHECK(cli({"ems", "--model", ws("missing.json"), "--out", ws("t.json")}).code == 1);
    const Run r = cli({"solve", "--model", ws("point.json"), "--degenerate", "noise-pred", "--schedule", "vp-linear",
                       "--order", "9"});
    CHECK(r.code == 1);
    CHECK(r.err.find("error:") != std::string::npos);
}

TEST_CASE("ems on point-gaussian reports l mean of one")
{
    Workspace ws;
    const Run r = cli({"ems", "--model", ws("point.json"), "--num-timesteps", "40", "--num-datapoints", "32", "--out",
                       ws("t.json")});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("l mean = 1.000000\n") != std::string::npos);
    CHECK(r.out.find("s mean = 0.000000\n") != std::string::npos);
    CHECK(fs::exists(ws("t.json")));
}

TEST_CASE("ems output is deterministic")
{
    Workspace ws;
    const std::vector<std::string> base{"ems",  "--model", ws("mix.json"), "--num-timesteps", "30", "--num-datapoints",
                                        "64", "--seed",  "7"};
    auto a = base;
    a.insert(a.end(), {"--out", ws("a.json")});
    auto b = base;
    b.insert(b.end(), {"--out", ws("b.json"), "--serial"});
    REQUIRE(cli(a).code == 0);
    REQUIRE(cli(b).code == 0);
    CHECK(slurp(ws("a.json")) == slurp(ws("b.json")));
    a.back() = ws("c.json");
    a[a.size() - 2] = "--out";
    REQUIRE(cli(a).code == 0);
    CHECK(slurp(ws("a.json")) == slurp(ws("c.json")));
}

TEST_CASE("solve with one step is one first-order update")
{
    Workspace ws;
    const Run r = cli({"solve", "--model", ws("mix.json"), "--degenerate", "noise-pred", "--schedule", "vp-linear",
                       "--steps", "1", "--order", "3", "--noise-seed", "4"});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    const auto sched = Schedule::vp_linear();
    const auto model = testbed::mixture();
    const Vec x = initial_state(sched, 4, 1.0, 4);
    const Vec expect = ddim_step(sched, x, eval_eps(model, sched, x, sched.lambda_of_t(1.0)), 1.0, 1e-3);
    CHECK(testbed::max_abs(json_vec(j.at("x_final")) - expect) <= 1e-10 * testbed::max_abs(expect));
    CHECK(j.at("nfe").get<int>() == 1);
    CHECK(j.at("grid").size() == 2);
}

TEST_CASE("solve pseudo predictor at order two matches and output is deterministic")
{
    Workspace ws;
    REQUIRE(cli({"ems", "--model", ws("mix.json"), "--num-timesteps", "200", "--num-datapoints", "64", "--out",
                 ws("t.json")})
                .code == 0);
    const std::vector<std::string> base{"solve", "--model", ws("mix.json"), "--ems", ws("t.json"),
                                        "--order", "2",     "--steps", "10", "--trace"};
    const Run plain = cli(base);
    auto p = base;
    p.push_back("--pseudo-predictor");
    const Run pseudo = cli(p);
    REQUIRE(plain.code == 0);
    REQUIRE(pseudo.code == 0);
    const auto a = nlohmann::json::parse(plain.out);
    const auto b = nlohmann::json::parse(pseudo.out);
    CHECK(testbed::max_abs(json_vec(a.at("x_final")) - json_vec(b.at("x_final"))) <= 1e-12);
    CHECK(a.at("trace").size() == 11);
    CHECK(a.at("trace").back().at("eps_norm").is_null());
    CHECK(cli(base).out == plain.out);

    auto mismatch = base;
    mismatch.insert(mismatch.end(), {"--schedule", "edm"});
    const Run bad = cli(mismatch);
    CHECK(bad.code == 1);
    CHECK(bad.err.find("incompatible") != std::string::npos);
}

TEST_CASE("bench-convergence on point-gaussian sits at the floor")
{
    Workspace ws;
    REQUIRE(cli({"ems", "--model", ws("point.json"), "--num-timesteps", "160", "--num-datapoints", "16", "--out",
                 ws("t.json")})
                .code == 0);
    const Run r = cli({"bench-convergence", "--model", ws("point.json"), "--ems", ws("t.json"), "--orders", "1,2,3",
                       "--nfe", "5,10,20", "--seeds", "0,1"});
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind(std::string(kCsvHeader) + "\n", 0) == 0);
    const auto rep = parse_csv(r.out);
    int floors = 0;
    for (const auto& row : rep.rows) {
        if (row.seed >= 0) {
            CHECK(row.l2_error <= 1e-8);
            CHECK(row.solver == "dpmv3");
        } else {
            CHECK(row.solver == "floor");
            ++floors;
        }
    }
    CHECK(floors == 3);
    CHECK(rep.rows.size() == 3 * 3 * 2 + 3);
}

TEST_CASE("bench-compare ddim equals order-one noise-pred and output is deterministic")
{
    Workspace ws;
    REQUIRE(cli({"ems", "--model", ws("mix.json"), "--num-timesteps", "240", "--num-datapoints", "64", "--out",
                 ws("t.json")})
                .code == 0);
    const std::vector<std::string> args{"bench-compare", "--model", ws("mix.json"), "--ems",   ws("t.json"),
                                        "--order",       "1",       "--nfe",        "5,8,10", "--seeds",
                                        "0,1",           "--out",   ws("a.csv")};
    REQUIRE(cli(args).code == 0);
    auto again = args;
    again.back() = ws("b.csv");
    REQUIRE(cli(again).code == 0);
    CHECK(slurp(ws("a.csv")) == slurp(ws("b.csv")));

    const auto rep = parse_csv(slurp(ws("a.csv")));
    for (std::int64_t seed : {0, 1}) {
        const auto ddim = rows_of(rep, "ddim", seed);
        const auto noise = rows_of(rep, "noise-pred", seed);
        REQUIRE(ddim.size() == 3);
        REQUIRE(noise.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(ddim[i].nfe == noise[i].nfe);
            CHECK(std::abs(ddim[i].l2_error - noise[i].l2_error) <= 1e-10 * std::max(1.0, noise[i].l2_error));
        }
    }
    CHECK(rows_of(rep, "dpmv3", -1).size() == 3);
}

TEST_CASE("bench-compare on point-gaussian: estimated EMS is no worse than data-pred")
{
    Workspace ws;
    REQUIRE(cli({"ems", "--model", ws("point.json"), "--num-timesteps", "160", "--num-datapoints", "16", "--out",
                 ws("t.json")})
                .code == 0);
    const Run r = cli({"bench-compare", "--model", ws("point.json"), "--ems", ws("t.json"), "--nfe", "5,10",
                       "--baselines", "data-pred"});
    REQUIRE(r.code == 0);
    const auto rep = parse_csv(r.out);
    const auto ours = rows_of(rep, "dpmv3", -1);
    const auto base = rows_of(rep, "data-pred", -1);
    REQUIRE(ours.size() == 2);
    REQUIRE(base.size() == 2);
    for (std::size_t i = 0; i < 2; ++i)
        CHECK(ours[i].l2_error <= base[i].l2_error + 1e-8);
}
