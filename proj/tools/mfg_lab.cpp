// mfg_lab: command-line front end for the solvers and the sweep harness.
//
// Exit codes: 0 success, 1 other failure, 2 configuration error,
// 3 some point did not converge (output is still written).

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "mfg/harness.hpp"

namespace {

using nlohmann::json;

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNotConverged = 3;

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

mfg::PointConfig single_point(const mfg::ExperimentConfig& cfg, const char* cmd) {
    auto pts = cfg.points();
    if (pts.size() != 1)
        throw mfg::ConfigError("sweep", std::string(cmd) + " takes a single point; use 'sweep'");
    return pts.front();
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw mfg::Error("cannot open '" + path + "' for writing");
    return out;
}

void write_path_header(std::ostream& out, const mfg::PointConfig& c, const std::string& columns) {
    out << "# schema=" << mfg::kSchemaVersion << '\n';
    out << "# config=" << mfg::to_json(c).dump() << '\n';
    out << columns << '\n';
}

int cmd_solve_mfg(const std::string& config, const std::string& out_path) {
    const mfg::PointConfig c = single_point(mfg::load_config(config), "solve-mfg");
    const mfg::Problem p = mfg::build_problem(c);
    const mfg::MFGSolution s = mfg::solve_mfg(p, c.solver);
    const mfg::Grid& g = p.grid;
    std::ofstream out = open_out(out_path);
    write_path_header(out, c, "k,t,i,x,u,m,alpha_star");
    for (int k = 0; k <= g.nt; ++k)
        for (std::size_t i = 0; i < g.points(); ++i)
            out << k << ',' << fmt(g.time(k)) << ',' << i << ',' << fmt(g.point(i)[0]) << ',' << fmt(s.u(k, i))
                << ',' << fmt(s.m(k, i)) << ',' << fmt(s.alpha_star(k, i)) << '\n';
    std::cout << "converged=" << s.converged << " iterations=" << s.iterations
              << " fp_residual=" << fmt(s.fp_residual) << " social_cost=" << fmt(mfg::social_cost(s, p)) << '\n';
    return s.converged ? 0 : kExitNotConverged;
}

int cmd_solve_planner(const std::string& config, const std::string& out_path, const std::string& method) {
    const mfg::PointConfig c = single_point(mfg::load_config(config), "solve-planner");
    const mfg::Problem p = mfg::build_problem(c);
    const mfg::PlannerSolution s =
        method == "system" ? mfg::solve_planner_system(p, c.solver) : mfg::solve_planner_descent(p, c.solver);
    const mfg::Grid& g = p.grid;
    std::ofstream out = open_out(out_path);
    write_path_header(out, c, "k,t,i,x,u_hat,m_hat,alpha_hat,w_hat");
    for (int k = 0; k <= g.nt; ++k)
        for (std::size_t i = 0; i < g.points(); ++i)
            out << k << ',' << fmt(g.time(k)) << ',' << i << ',' << fmt(g.point(i)[0]) << ','
                << fmt(s.u_hat(k, i)) << ',' << fmt(s.m_hat(k, i)) << ','
                << fmt(s.alpha_hat(k, i)) << ',' << fmt(s.w_hat(k, i)) << '\n';
    std::cout << "method=" << mfg::to_string(s.method) << " status=\"" << s.status << "\" iterations=" << s.iterations
              << " cost=" << fmt(s.cost) << '\n';
    return s.converged ? 0 : kExitNotConverged;
}

int cmd_report(const std::string& config, const std::string& out_path) {
    mfg::ExperimentConfig cfg = mfg::load_config(config);
    single_point(cfg, "report");
    std::ofstream out = open_out(out_path);
    const mfg::RunSummary s = mfg::run(cfg, out);
    const auto cols = mfg::result_columns();
    const auto vals = mfg::row_values(s.rows.front());
    for (std::size_t i = 0; i < cols.size(); ++i)
        std::cout << cols[i] << '=' << vals[i] << '\n';
    return s.all_converged ? 0 : kExitNotConverged;
}

int cmd_sweep(const std::string& config, const std::string& out_path, int workers) {
    mfg::ExperimentConfig cfg = mfg::load_config(config);
    if (workers > 0)
        cfg.workers = workers;
    std::ofstream out = open_out(out_path.empty() ? cfg.output : out_path);
    const mfg::RunSummary s = mfg::run(cfg, out);
    std::size_t bad = 0;
    for (const auto& r : s.rows)
        bad += mfg::converged(r) ? 0 : 1;
    std::cout << s.rows.size() << " rows, " << bad << " not converged\n";
    return s.all_converged ? 0 : kExitNotConverged;
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw mfg::ConfigError("<file>", "cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw mfg::ConfigError("<file>", std::string("malformed JSON: ") + e.what());
    }
}

std::string required_string(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_string())
        throw mfg::ConfigError(key, "required string");
    return j.at(key).get<std::string>();
}

// {"results": path, "x": column, "y": column, "tolerance": number}
int cmd_fit(const std::string& config, const std::string& out_path) {
    const json j = load_json(config);
    if (!j.is_object())
        throw mfg::ConfigError("<root>", "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key() != "results" && it.key() != "x" && it.key() != "y" && it.key() != "tolerance")
            throw mfg::ConfigError(it.key(), "unknown field");
    double tol = 1e-8;
    if (j.contains("tolerance")) {
        if (!j.at("tolerance").is_number() || !(j.at("tolerance").get<double>() >= 0.0))
            throw mfg::ConfigError("tolerance", "expected a nonnegative number");
        tol = j.at("tolerance").get<double>();
    }
    const mfg::ResultTable t = mfg::read_results(required_string(j, "results"));
    const mfg::FitResult f = mfg::fit_scaling(t, required_string(j, "x"), required_string(j, "y"), tol);
    const json r = {{"slope", f.slope},
                    {"intercept", f.intercept},
                    {"r2", f.r2},
                    {"used", f.used},
                    {"degenerate", f.degenerate}};
    std::ofstream out = open_out(out_path);
    out << r.dump(2) << '\n';
    std::cout << r.dump() << '\n';
    return f.degenerate ? kExitFailure : 0;
}

// {"results": path, "series": [{"name": .., "x": .., "y": ..}, ...]}; --out is a directory
int cmd_emit(const std::string& config, const std::string& out_dir) {
    const json j = load_json(config);
    if (!j.is_object())
        throw mfg::ConfigError("<root>", "expected an object");
    const mfg::ResultTable t = mfg::read_results(required_string(j, "results"));
    if (!j.contains("series") || !j.at("series").is_array())
        throw mfg::ConfigError("series", "expected an array");
    std::vector<mfg::Series> series;
    for (std::size_t i = 0; i < j.at("series").size(); ++i) {
        const json& s = j.at("series")[i];
        const std::string at = "series[" + std::to_string(i) + "]";
        if (!s.is_object())
            throw mfg::ConfigError(at, "expected an object");
        try {
            series.push_back({required_string(s, "name"), required_string(s, "x"), required_string(s, "y")});
        } catch (const mfg::ConfigError& e) {
            throw mfg::ConfigError(at + "." + e.path(), "required string");
        }
    }
    for (const auto& f : mfg::emit_plotdata(t, series, out_dir))
        std::cout << f.string() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mean field game equilibria, planner optima and their efficiency gap on the 1-d torus"};
    app.require_subcommand(1);

    std::string config, out, method = "descent";
    int workers = 0;
    auto add = [&](const char* name, const char* help) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config, "JSON configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "output path")->required();
        return sub;
    };
    CLI::App* solve_mfg = add("solve-mfg", "solve the equilibrium system, write u, m, alpha* per grid node");
    CLI::App* solve_planner = add("solve-planner", "solve the planner problem, write u_hat, m_hat, alpha_hat, w_hat");
    solve_planner->add_option("--method", method, "system or descent")->check(CLI::IsMember({"system", "descent"}));
    CLI::App* report = add("report", "full efficiency report for one point (one CSV row)");
    CLI::App* sweep = add("sweep", "run every sweep point, one CSV row each");
    sweep->add_option("--workers", workers, "parallel workers (overrides the config)")->check(CLI::Range(1, 256));
    CLI::App* fit = add("fit", "log-log least squares of one result column against another");
    CLI::App* emit = add("emit", "write two-column plot series; --out is a directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*solve_mfg)
            return cmd_solve_mfg(config, out);
        if (*solve_planner)
            return cmd_solve_planner(config, out, method);
        if (*report)
            return cmd_report(config, out);
        if (*sweep)
            return cmd_sweep(config, out, workers);
        if (*fit)
            return cmd_fit(config, out);
        if (*emit)
            return cmd_emit(config, out);
    } catch (const mfg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitFailure;
}
