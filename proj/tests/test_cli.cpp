#include "doctest.h"

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "runner.hpp"

using cllab::cli::run;
using cllab::cli::strip_timing;
using json = nlohmann::json;

namespace {

json report(const std::vector<std::string>& args, int expect = 0) {
    std::vector<std::string> argv = {"cllab"};
    argv.insert(argv.end(), args.begin(), args.end());
    auto r = run(argv);
    CHECK(r.exit_code == expect);
    return r.report.empty() ? json() : json::parse(r.report);
}

}  // namespace

TEST_CASE("report layout") {
    auto j = report({"decompose", "power:0.5", "--q", "4"});
    for (const char* key : {"command", "config", "checks", "totals", "wall_clock_seconds"}) CHECK(j.contains(key));
    CHECK(j["totals"]["failed"] == 0);
    for (const auto& c : j["checks"])
        for (const char* key : {"name", "anchor", "values", "bound", "margin", "pass", "witness"}) CHECK(c.contains(key));
    CHECK(j["config"]["q_prime"] == 0.0);
}

TEST_CASE("decompose csv covers the grid") {
    auto r = run({"cllab", "decompose", "power:0.25", "--q", "16", "--depth", "4"});
    CHECK(r.exit_code == 0);
    CHECK(r.csv.rfind("t,phi1,envelope,node\n", 0) == 0);
    std::size_t lines = 0;
    for (char ch : r.csv) lines += ch == '\n';
    CHECK(lines >= 66);
}

TEST_CASE("usage errors exit with 1") {
    CHECK(run({"cllab"}).exit_code == 1);
    CHECK(run({"cllab", "decompose"}).exit_code == 1);
    CHECK(run({"cllab", "decompose", "nosuch:1"}).exit_code == 1);
    CHECK(run({"cllab", "norm", "cl", "--couple", "lp:1:2|linf:2", "--x", "1,1"}).exit_code == 1);
    CHECK(run({"cllab", "rho", "--matrix", "1,2;3", "--dom", "lp:1:2", "--cod", "lp:1:2"}).exit_code == 1);
    CHECK(run({"cllab", "rho", "--matrix", "1", "--dom", "lp:1:1", "--cod", "lp:1:1", "--p", "0.5"}).exit_code == 1);
    CHECK(run({"cllab", "norm", "lattice", "--lattice", "lp:1:2", "--x", "1,1", "--csv", "x.csv"}).exit_code == 1);
    auto help = run({"cllab", "--help"});
    CHECK(help.exit_code == 0);
    CHECK(help.message.find("decompose") != std::string::npos);
}

TEST_CASE("known values through the command line") {
    auto cert = report({"pathology", "certificate", "--n", "4", "--p", "0.5"});
    CHECK(cert["checks"][0]["values"]["constant_lower_bound"].get<double>() == doctest::Approx(4.0).epsilon(1e-12));

    auto sub = report({"pathology", "submeasure", "--set", "bu:4:[1,0,0,0];[0,1,0,0]"});
    CHECK(sub["checks"][0]["values"]["value"] == "1/2");

    auto cl = report({"norm", "cl", "--couple", "lp:2:2|lp:2:2", "--phi", "power:0.5", "--x", "1,1", "--threads", "1"});
    auto v = cl["checks"][0]["values"];
    CHECK(v["lower"].get<double>() <= std::sqrt(2.0) * (1 + 1e-9));
    CHECK(v["upper"].get<double>() >= std::sqrt(2.0) * (1 - 1e-9));
    CHECK(v["upper"].get<double>() <= std::sqrt(2.0) * (1 + 1e-3));

    auto rho = report({"rho", "--matrix", "1,2;3,4", "--dom", "lp:1:2", "--cod", "lp:1:2", "--threads", "1"});
    CHECK(rho["checks"][0]["values"]["operator_norm"]["upper"].get<double>() == doctest::Approx(6.0));
    CHECK(rho["config"]["p"] == "inf");

    auto fac = report({"verify", "factorize", "--couple", "lp:1:2|linf:2", "--phi", "min"});
    CHECK(fac["checks"][0]["values"]["rejected"] == true);
}

TEST_CASE("reports are reproducible across runs and thread counts") {
    std::vector<std::string> a = {"cllab", "verify", "sum-regular", "--matrix", "1,2;3,4", "--dom", "lp:1:2|linf:2",
                                  "--cod", "lp:1:2|linf:2", "--samples", "12", "--seed", "9", "--starts", "6"};
    auto one = a, four = a;
    one.insert(one.end(), {"--threads", "1"});
    four.insert(four.end(), {"--threads", "4"});
    auto r1 = run(one), r2 = run(one), r4 = run(four);
    CHECK(strip_timing(r1.report) == strip_timing(r2.report));
    auto j1 = json::parse(strip_timing(r1.report)), j4 = json::parse(strip_timing(r4.report));
    j1["config"].erase("threads");
    j4["config"].erase("threads");
    j1.erase("command");
    j4.erase("command");
    CHECK(j1 == j4);
}
