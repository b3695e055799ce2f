#include "mfg/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace mfg {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

// Field access on one JSON object; every lookup is recorded so that
// leftover keys can be rejected.
class ObjectReader {
  public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object())
            throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    double number(const std::string& key, double fallback) {
        if (!has(key))
            return fallback;
        const json& v = j_.at(key);
        if (!v.is_number())
            throw ConfigError(join(path_, key), "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x))
            throw ConfigError(join(path_, key), "must be finite");
        return x;
    }

    long long integer(const std::string& key, long long fallback) {
        if (!has(key))
            return fallback;
        const json& v = j_.at(key);
        if (v.is_number_integer())
            return v.get<long long>();
        if (v.is_number_float()) {
            const double x = v.get<double>();
            if (std::isfinite(x) && x == std::floor(x) && std::abs(x) < 9e15)
                return static_cast<long long>(x);
        }
        throw ConfigError(join(path_, key), "expected an integer");
    }

    bool boolean(const std::string& key, bool fallback) {
        if (!has(key))
            return fallback;
        if (!j_.at(key).is_boolean())
            throw ConfigError(join(path_, key), "expected true or false");
        return j_.at(key).get<bool>();
    }

    std::string string(const std::string& key, const std::string& fallback,
                       std::initializer_list<const char*> allowed = {}) {
        if (!has(key))
            return fallback;
        if (!j_.at(key).is_string())
            throw ConfigError(join(path_, key), "expected a string");
        std::string s = j_.at(key).get<std::string>();
        if (allowed.size() == 0)
            return s;
        std::string list;
        for (const char* a : allowed) {
            if (s == a)
                return s;
            list += list.empty() ? a : std::string(", ") + a;
        }
        throw ConfigError(join(path_, key), "unknown label '" + s + "' (expected one of " + list + ")");
    }

    const json& object(const std::string& key) {
        static const json empty = json::object();
        return has(key) ? j_.at(key) : empty;
    }

    std::string path(const std::string& key) const { return join(path_, key); }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError(join(path_, it.key()), "unknown field");
    }

  private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

int checked_int(long long v, const std::string& path, long long lo, long long hi) {
    if (v < lo || v > hi)
        throw ConfigError(path, "out of range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return static_cast<int>(v);
}

KernelSpec parse_kernel(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    KernelSpec k;
    k.label = r.string("label", k.label, {"cos_diff", "cos_product", "x_only"});
    k.frequency = r.number("frequency", k.frequency);
    k.phase = r.number("phase", k.phase);
    r.finish();
    return k;
}

WeightSpec parse_weight(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    WeightSpec w;
    w.label = r.string("label", w.label, {"cos", "constant"});
    w.frequency = r.number("frequency", w.frequency);
    w.value = r.number("value", w.value);
    r.finish();
    return w;
}

CouplingSpec parse_coupling(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    CouplingSpec c;
    c.label = r.string("label", c.label, {"zero", "fixed", "convolution", "efficient", "potential", "xfree"});
    c.lambda = r.number("lambda", c.lambda);
    c.kernel = parse_kernel(r.object("kernel"), r.path("kernel"));
    c.profile = r.string("profile", c.profile, {"square", "linear"});
    c.weight = parse_weight(r.object("weight"), r.path("weight"));
    c.amplitude = r.number("amplitude", c.amplitude);
    c.frequency = r.number("frequency", c.frequency);
    r.finish();
    if (c.label == "potential" && c.kernel.label == "cos_diff" && c.kernel.phase != 0.0)
        throw ConfigError(r.path("kernel.phase"), "potential coupling needs a symmetric kernel");
    return c;
}

Field read_density_file(const std::string& file, const std::string& path) {
    std::ifstream in(file);
    if (!in)
        throw ConfigError(path, "cannot open '" + file + "'");
    Field v;
    std::string tok;
    while (in >> tok) {
        char* end = nullptr;
        const double x = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0')
            throw ConfigError(path, "'" + file + "' contains a non-numeric entry '" + tok + "'");
        v.push_back(x);
    }
    return v;
}

DensitySpec parse_density(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    DensitySpec m;
    m.type = r.string("type", m.type, {"uniform", "cosine", "file"});
    m.amplitude = r.number("amplitude", m.amplitude);
    m.frequency = r.number("frequency", m.frequency);
    m.path = r.string("path", m.path);
    r.finish();
    if (m.type == "cosine" && !(std::abs(m.amplitude) < 1.0))
        throw ConfigError(r.path("amplitude"), "|amplitude| must be < 1 to keep the density positive");
    if (m.type == "file" && m.path.empty())
        throw ConfigError(r.path("path"), "required for type 'file'");
    return m;
}

Damping parse_damping(const std::string& s) {
    if (s == "fictitious_play")
        return Damping::fictitious_play;
    if (s == "harmonic")
        return Damping::harmonic;
    return Damping::fixed;
}

const char* damping_name(Damping d) {
    switch (d) {
    case Damping::fictitious_play:
        return "fictitious_play";
    case Damping::harmonic:
        return "harmonic";
    default:
        return "fixed";
    }
}

SolverParams parse_solver(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    SolverParams p;
    p.damping = parse_damping(r.string("damping", "fixed", {"fixed", "fictitious_play", "harmonic"}));
    p.delta = r.number("delta", p.delta);
    p.max_iters = checked_int(r.integer("max_iters", p.max_iters), r.path("max_iters"), 1, 1000000);
    p.tol_fixed_point = r.number("tol_fixed_point", p.tol_fixed_point);
    p.linear_tol = r.number("linear_tol", p.linear_tol);
    p.descent_max_iters =
        checked_int(r.integer("descent_max_iters", p.descent_max_iters), r.path("descent_max_iters"), 0, 1000000);
    p.descent_tol = r.number("descent_tol", p.descent_tol);
    p.lbfgs_memory = checked_int(r.integer("lbfgs_memory", p.lbfgs_memory), r.path("lbfgs_memory"), 1, 1000);
    r.finish();
    try {
        validate(p);
    } catch (const Error& e) {
        throw ConfigError(path, e.what());
    }
    return p;
}

json kernel_json(const KernelSpec& k) {
    return {{"label", k.label}, {"frequency", k.frequency}, {"phase", k.phase}};
}

json coupling_json(const CouplingSpec& c) {
    return {{"label", c.label},
            {"lambda", c.lambda},
            {"kernel", kernel_json(c.kernel)},
            {"profile", c.profile},
            {"weight", {{"label", c.weight.label}, {"frequency", c.weight.frequency}, {"value", c.weight.value}}},
            {"amplitude", c.amplitude},
            {"frequency", c.frequency}};
}

Kernel build_kernel(const KernelSpec& k) {
    if (k.label == "cos_product")
        return cos_product_kernel(k.frequency);
    if (k.label == "x_only")
        return x_only_kernel(k.frequency);
    return cos_diff_kernel(k.frequency, k.phase);
}

void set_path(json& j, const std::string& dotted, const json& value) {
    json* cur = &j;
    std::size_t start = 0;
    for (;;) {
        const std::size_t dot = dotted.find('.', start);
        const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty())
            throw ConfigError("sweep", "malformed parameter name '" + dotted + "'");
        if (dot == std::string::npos) {
            (*cur)[key] = value;
            return;
        }
        if (!cur->contains(key) || cur->at(key).is_null())
            (*cur)[key] = json::object();
        cur = &(*cur)[key];
        if (!cur->is_object())
            throw ConfigError("sweep", "'" + dotted + "' does not name a nested field");
        start = dot + 1;
    }
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, const json*>>& out) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it)
            flatten(it.value(), join(prefix, it.key()), out);
    } else {
        out.emplace_back(prefix, &j);
    }
}

std::vector<std::pair<std::string, const json*>> flat(const json& j) {
    std::vector<std::pair<std::string, const json*>> out;
    flatten(j, "", out);
    return out;
}

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string scalar_text(const json& v) {
    if (v.is_string())
        return v.get<std::string>();
    if (v.is_number_unsigned())
        return std::to_string(v.get<unsigned long long>());
    if (v.is_number_integer())
        return std::to_string(v.get<long long>());
    if (v.is_number_float())
        return fmt(v.get<double>());
    if (v.is_boolean())
        return v.get<bool>() ? "1" : "0";
    return "";
}

const std::vector<std::string>& report_columns() {
    static const std::vector<std::string> cols = {
        "cost_mfg",          "cost_planner",       "cost_planner_system", "gap",
        "lb_integrand_F",    "lb_integrand_G",     "ub_norm",             "residual_F_sup",
        "residual_G_sup",    "certificate",        "holder",              "duality_lhs",
        "duality_rhs",       "duality_slack",      "mfg_converged",       "descent_converged",
        "system_converged",  "planner_disagreement", "mfg_iterations",    "descent_iterations",
        "system_iterations", "fp_residual",        "hjb_residual",        "fpk_residual",
        "terminal_residual", "descent_gradient",   "tau_running",         "tau_terminal"};
    return cols;
}

std::vector<std::string> report_values(const EfficiencyReport& r) {
    auto b = [](bool v) { return std::string(v ? "1" : "0"); };
    auto i = [](int v) { return std::to_string(v); };
    return {fmt(r.cost_mfg),          fmt(r.cost_planner),       fmt(r.cost_planner_system), fmt(r.gap),
            fmt(r.lb_integrand_F),    fmt(r.lb_integrand_G),     fmt(r.ub_norm),             fmt(r.residual_F_sup),
            fmt(r.residual_G_sup),    fmt(r.certificate),        fmt(r.holder),              fmt(r.duality.lhs),
            fmt(r.duality.rhs),       fmt(r.duality.slack),      b(r.mfg_converged),         b(r.descent_converged),
            b(r.system_converged),    b(r.planner_disagreement), i(r.mfg_iterations),        i(r.descent_iterations),
            i(r.system_iterations),   fmt(r.fp_residual),        fmt(r.hjb_residual),        fmt(r.fpk_residual),
            fmt(r.terminal_residual), fmt(r.descent_gradient),   fmt(r.tau_running),         fmt(r.tau_terminal)};
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += "\"\"";
        else if (c == '\n' || c == '\r')
            out += ' ';
        else
            out += c;
    }
    return out + "\"";
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

double parse_number(const std::string& s) {
    if (s.empty())
        return std::nan("");
    char* end = nullptr;
    const double x = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw Error("not a number: '" + s + "'");
    return x;
}

} // namespace

Grid PointConfig::grid() const { return Grid::make(d, n, t0, T, nt); }

double PointConfig::resolved_epsilon() const { return epsilon ? *epsilon : default_epsilon(grid()); }

PointConfig parse_point(const json& j) {
    ObjectReader r(j, "");
    PointConfig c;
    {
        ObjectReader gr(r.object("grid"), "grid");
        c.d = checked_int(gr.integer("d", c.d), "grid.d", 1, 1);
        c.n = checked_int(gr.integer("n", c.n), "grid.n", 4, 1 << 20);
        c.nt = checked_int(gr.integer("nt", c.nt), "grid.nt", 4, 1 << 24);
        c.t0 = gr.number("t0", c.t0);
        c.T = gr.number("T", c.T);
        gr.finish();
        if (!(c.T > c.t0))
            throw ConfigError("grid.T", "must exceed grid.t0");
    }
    c.hamiltonian = r.string("hamiltonian", c.hamiltonian, {"quadratic"});
    c.coupling = parse_coupling(r.object("coupling"), "coupling");
    c.terminal = parse_coupling(r.object("terminal"), "terminal");
    c.m0 = parse_density(r.object("m0"), "m0");
    c.solver = parse_solver(r.object("solver"), "solver");
    if (r.has("epsilon")) {
        c.epsilon = r.number("epsilon", 0.0);
        if (!(*c.epsilon > 0.0 && *c.epsilon < 0.5 * (c.T - c.t0)))
            throw ConfigError("epsilon", "must lie in (0, (T - t0) / 2)");
    }
    c.h_samples = checked_int(r.integer("h_samples", c.h_samples), "h_samples", 2, 100000);
    {
        const long long s = r.integer("seed", 0);
        if (s < 0)
            throw ConfigError("seed", "must be nonnegative");
        c.seed = static_cast<std::uint64_t>(s);
    }
    r.finish();
    if (!c.epsilon) {
        const double eps = c.resolved_epsilon();
        if (!(eps < 0.5 * (c.T - c.t0)))
            throw ConfigError("grid.nt", "too coarse for the default epsilon");
    }
    return c;
}

json to_json(const PointConfig& c) {
    const SolverParams& s = c.solver;
    return {{"grid", {{"d", c.d}, {"n", c.n}, {"nt", c.nt}, {"t0", c.t0}, {"T", c.T}}},
            {"hamiltonian", c.hamiltonian},
            {"coupling", coupling_json(c.coupling)},
            {"terminal", coupling_json(c.terminal)},
            {"m0", {{"type", c.m0.type}, {"amplitude", c.m0.amplitude}, {"frequency", c.m0.frequency}, {"path", c.m0.path}}},
            {"solver",
             {{"damping", damping_name(s.damping)},
              {"delta", s.delta},
              {"max_iters", s.max_iters},
              {"tol_fixed_point", s.tol_fixed_point},
              {"linear_tol", s.linear_tol},
              {"descent_max_iters", s.descent_max_iters},
              {"descent_tol", s.descent_tol},
              {"lbfgs_memory", s.lbfgs_memory}}},
            {"epsilon", c.resolved_epsilon()},
            {"h_samples", c.h_samples},
            {"seed", c.seed}};
}

Coupling build_coupling(const CouplingSpec& s, const std::string& where) {
    try {
        if (s.label == "fixed")
            return coupling_fixed(cosine_profile(s.amplitude, s.frequency)).with_strength(s.lambda);
        if (s.label == "convolution")
            return coupling_convolution(build_kernel(s.kernel), s.lambda);
        if (s.label == "efficient")
            return coupling_efficient(build_kernel(s.kernel), s.lambda);
        if (s.label == "potential")
            return coupling_potential(build_kernel(s.kernel), s.lambda);
        if (s.label == "xfree") {
            const Profile g = s.profile == "linear" ? linear_profile() : square_profile();
            const MomentWeight c = s.weight.label == "constant" ? constant_weight(s.weight.value)
                                                                : cos_weight(s.weight.frequency);
            return coupling_xfree(g, c, s.lambda);
        }
        return coupling_zero();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(where, e.what());
    }
}

Field build_density(const DensitySpec& s, const Grid& g) {
    if (s.type == "uniform")
        return uniform_density(g);
    if (s.type == "file") {
        Field m = read_density_file(s.path, "m0.path");
        if (m.size() != g.points())
            throw ConfigError("m0.path", "'" + s.path + "' has " + std::to_string(m.size()) + " values, grid has " +
                                             std::to_string(g.points()));
        return m;
    }
    return cosine_density(g, s.amplitude, s.frequency);
}

Problem build_problem(const PointConfig& c) {
    Grid g;
    try {
        g = c.grid();
    } catch (const Error& e) {
        throw ConfigError("grid", e.what());
    }
    Coupling F = build_coupling(c.coupling, "coupling");
    Coupling G = build_coupling(c.terminal, "terminal");
    Field m0 = build_density(c.m0, g);
    try {
        return make_problem(quadratic_hamiltonian(), F, G, std::move(m0), g);
    } catch (const DensityError& e) {
        throw ConfigError("m0", e.what());
    }
}

ExperimentConfig parse_config(const json& j) {
    if (!j.is_object())
        throw ConfigError("<root>", "expected an object");
    ExperimentConfig cfg;
    cfg.base = json::object();
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        if (k == "output") {
            if (!it->is_string())
                throw ConfigError("output", "expected a string");
            cfg.output = it->get<std::string>();
        } else if (k == "workers") {
            if (!it->is_number_integer() || it->get<long long>() < 1 || it->get<long long>() > 256)
                throw ConfigError("workers", "expected an integer in [1, 256]");
            cfg.workers = it->get<int>();
        } else if (k == "record_wall_time") {
            if (!it->is_boolean())
                throw ConfigError("record_wall_time", "expected true or false");
            cfg.record_wall_time = it->get<bool>();
        } else if (k == "sweep") {
            continue;
        } else {
            cfg.base[k] = *it;
        }
    }
    if (j.contains("sweep") && !j.at("sweep").is_null()) {
        const json& s = j.at("sweep");
        if (!s.is_object())
            throw ConfigError("sweep", "expected an object");
        for (auto it = s.begin(); it != s.end(); ++it)
            if (it.key() != "parameter" && it.key() != "values" && it.key() != "parameters")
                throw ConfigError("sweep." + it.key(), "unknown field");
        auto value_list = [](const json& v, const std::string& path) {
            if (!v.is_array() || v.empty())
                throw ConfigError(path, "expected a non-empty array");
            return std::vector<json>(v.begin(), v.end());
        };
        if (s.contains("parameter")) {
            if (s.contains("parameters"))
                throw ConfigError("sweep", "give either 'parameter' with 'values' or 'parameters'");
            if (!s.at("parameter").is_string())
                throw ConfigError("sweep.parameter", "expected a string");
            if (!s.contains("values"))
                throw ConfigError("sweep.values", "required with 'parameter'");
            cfg.sweep.parameters.push_back(s.at("parameter").get<std::string>());
            cfg.sweep.values.push_back(value_list(s.at("values"), "sweep.values"));
        } else if (s.contains("parameters")) {
            if (s.contains("values"))
                throw ConfigError("sweep.values", "not allowed with 'parameters'");
            const json& ps = s.at("parameters");
            if (!ps.is_object() || ps.empty())
                throw ConfigError("sweep.parameters", "expected a non-empty object");
            for (auto it = ps.begin(); it != ps.end(); ++it) {
                cfg.sweep.parameters.push_back(it.key());
                cfg.sweep.values.push_back(value_list(it.value(), "sweep.parameters." + it.key()));
                if (cfg.sweep.values.back().size() != cfg.sweep.values.front().size())
                    throw ConfigError("sweep.parameters." + it.key(), "length differs from the other value lists");
            }
        } else {
            throw ConfigError("sweep", "needs 'parameter' and 'values', or 'parameters'");
        }
    }
    // surface every schema error before any work starts
    for (const PointConfig& p : cfg.points())
        build_problem(p);
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("<file>", "cannot open '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("<file>", std::string("malformed JSON: ") + e.what());
    }
    return parse_config(j);
}

std::vector<PointConfig> ExperimentConfig::points() const {
    std::vector<PointConfig> out;
    const std::size_t count = sweep.size();
    for (std::size_t j = 0; j < count; ++j) {
        json point = base;
        for (std::size_t p = 0; p < sweep.parameters.size(); ++p)
            set_path(point, sweep.parameters[p], sweep.values[p][j]);
        try {
            out.push_back(parse_point(point));
        } catch (const ConfigError& e) {
            if (sweep.parameters.empty())
                throw;
            throw ConfigError(e.path(), std::string(e.what()).substr(e.path().size() + 2) + " (sweep point " +
                                            std::to_string(j) + ")");
        }
    }
    return out;
}

bool converged(const ResultRow& r) { return r.status == "ok"; }

ResultRow run_point(const PointConfig& c, std::size_t sweep_index, bool record_wall_time) {
    ResultRow row;
    row.sweep_index = sweep_index;
    row.config = c;
    const auto start = std::chrono::steady_clock::now();
    try {
        const Problem problem = build_problem(c);
        row.report = full_report(problem, c.solver, c.resolved_epsilon(), c.h_samples);
        const EfficiencyReport& r = row.report;
        row.status = r.mfg_converged && r.system_converged && r.descent_converged ? "ok" : "not converged";
    } catch (const std::exception& e) {
        row.status = std::string("failed: ") + e.what();
    }
    if (record_wall_time)
        row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    else
        row.wall_time = std::nan("");
    return row;
}

std::vector<std::string> result_columns() {
    std::vector<std::string> cols = {"sweep_index", "status"};
    const json canon = to_json(PointConfig{});
    for (const auto& [k, v] : flat(canon))
        cols.push_back(k);
    for (const std::string& k : report_columns())
        cols.push_back(k);
    cols.push_back("wall_time");
    return cols;
}

std::vector<std::string> row_values(const ResultRow& r) {
    std::vector<std::string> vals = {std::to_string(r.sweep_index), r.status};
    const json canon = to_json(r.config);
    for (const auto& [k, v] : flat(canon))
        vals.push_back(scalar_text(*v));
    if (r.status.rfind("failed", 0) == 0) {
        vals.insert(vals.end(), report_columns().size(), "");
    } else {
        for (std::string& s : report_values(r.report))
            vals.push_back(std::move(s));
    }
    vals.push_back(std::isnan(r.wall_time) ? "" : fmt(r.wall_time));
    return vals;
}

ResultWriter::ResultWriter(std::ostream& out) : out_(out) {
    std::string header = "# schema=" + std::to_string(kSchemaVersion) + "\n";
    const auto cols = result_columns();
    for (std::size_t i = 0; i < cols.size(); ++i)
        header += (i ? "," : "") + cols[i];
    out_ << header << '\n';
    out_.flush();
}

void ResultWriter::write(const ResultRow& r) {
    std::string line;
    const auto vals = row_values(r);
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (i)
            line += ',';
        line += csv_field(vals[i]);
    }
    line += '\n';
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.flush();
}

std::size_t ResultTable::index(const std::string& column) const {
    auto it = std::find(columns.begin(), columns.end(), column);
    if (it == columns.end())
        throw Error("results: no column '" + column + "'");
    return static_cast<std::size_t>(it - columns.begin());
}

std::vector<double> ResultTable::numbers(const std::string& column) const {
    const std::size_t c = index(column);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows)
        out.push_back(parse_number(r[c]));
    return out;
}

const std::string& ResultTable::at(std::size_t row, const std::string& column) const {
    return rows.at(row)[index(column)];
}

ResultTable read_results(std::istream& in) {
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::string> lines;
    std::size_t pos = 0;
    for (;;) {
        const std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos)
            break; // anything after the last newline is an unfinished row
        lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    const std::string tag = "# schema=" + std::to_string(kSchemaVersion);
    if (lines.empty() || lines[0] != tag)
        throw Error("results: missing or unsupported schema line (expected '" + tag + "')");
    ResultTable t;
    if (lines.size() < 2)
        throw Error("results: missing header line");
    t.columns = split_csv(lines[1]);
    for (std::size_t i = 2; i < lines.size(); ++i) {
        if (lines[i].empty())
            continue;
        auto fields = split_csv(lines[i]);
        if (fields.size() != t.columns.size())
            throw Error("results: line " + std::to_string(i + 1) + " has " + std::to_string(fields.size()) +
                        " fields, header has " + std::to_string(t.columns.size()));
        t.rows.push_back(std::move(fields));
    }
    return t;
}

ResultTable read_results(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("results: cannot open '" + path.string() + "'");
    return read_results(in);
}

PointConfig point_from_row(const ResultTable& t, std::size_t row) {
    const json canon = to_json(PointConfig{});
    json j = json::object();
    for (const auto& [k, v] : flat(canon)) {
        const std::string& s = t.at(row, k);
        json value;
        if (v->is_string())
            value = s;
        else if (v->is_number_unsigned())
            value = std::stoull(s);
        else if (v->is_number_integer())
            value = std::stoll(s);
        else
            value = parse_number(s);
        set_path(j, k, value);
    }
    return parse_point(j);
}

RunSummary run(const ExperimentConfig& config, std::ostream& out) {
    const std::vector<PointConfig> points = config.points();
    RunSummary summary;
    ResultWriter writer(out);
    std::mutex lock;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t j = next.fetch_add(1);
            if (j >= points.size())
                return;
            ResultRow row = run_point(points[j], j, config.record_wall_time);
            std::lock_guard<std::mutex> g(lock);
            writer.write(row);
            summary.rows.push_back(std::move(row));
        }
    };
    const int nthreads = std::max(1, std::min<int>(config.workers, static_cast<int>(points.size())));
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < nthreads; ++i)
            pool.emplace_back(worker);
        for (auto& th : pool)
            th.join();
    }
    std::sort(summary.rows.begin(), summary.rows.end(),
              [](const ResultRow& a, const ResultRow& b) { return a.sweep_index < b.sweep_index; });
    for (const ResultRow& r : summary.rows)
        summary.all_converged = summary.all_converged && converged(r);
    return summary;
}

RunSummary run(const ExperimentConfig& config) {
    if (config.output.empty())
        throw ConfigError("output", "no output path given");
    std::ofstream out(config.output, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot open '" + config.output + "' for writing");
    return run(config, out);
}

FitResult fit_scaling(const std::vector<double>& x, const std::vector<double>& y, double tolerance) {
    if (x.size() != y.size())
        throw ShapeError("fit_scaling: column lengths differ");
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (std::isfinite(x[i]) && std::isfinite(y[i]) && x[i] > 0.0 && y[i] > 10.0 * tolerance && y[i] > 0.0) {
            lx.push_back(std::log(x[i]));
            ly.push_back(std::log(y[i]));
        }
    }
    FitResult f;
    f.used = lx.size();
    if (f.used < 2) {
        f.degenerate = true;
        return f;
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < f.used; ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= f.used;
    my /= f.used;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < f.used; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        f.degenerate = true;
        return f;
    }
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = sxy * sxy / (sxx * syy);
    return f;
}

FitResult fit_scaling(const ResultTable& t, const std::string& x_column, const std::string& y_column,
                      double tolerance) {
    return fit_scaling(t.numbers(x_column), t.numbers(y_column), tolerance);
}

std::vector<std::filesystem::path> emit_plotdata(const ResultTable& t, const std::vector<Series>& series,
                                                 const std::filesystem::path& directory) {
    std::filesystem::create_directories(directory);
    std::vector<std::filesystem::path> files;
    for (const Series& s : series) {
        if (s.name.empty() || s.name.find_first_of("/\\") != std::string::npos)
            throw Error("emit_plotdata: bad series name '" + s.name + "'");
        const std::vector<double> x = t.numbers(s.x);
        const std::vector<double> y = t.numbers(s.y);
        const std::filesystem::path file = directory / (s.name + ".dat");
        std::ofstream out(file, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error("emit_plotdata: cannot write '" + file.string() + "'");
        out << "# " << s.x << ' ' << s.y << '\n';
        for (std::size_t i = 0; i < x.size(); ++i)
            out << fmt(x[i]) << ' ' << fmt(y[i]) << '\n';
        files.push_back(file);
    }
    return files;
}

PlotData read_plotdata(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in)
        throw Error("read_plotdata: cannot open '" + file.string() + "'");
    PlotData p;
    std::string line;
    if (!std::getline(in, line) || line.rfind("# ", 0) != 0)
        throw Error("read_plotdata: missing header in '" + file.string() + "'");
    std::istringstream hs(line.substr(2));
    for (std::string c; hs >> c;)
        p.columns.push_back(c);
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::istringstream ls(line);
        std::vector<double> row;
        for (std::string tok; ls >> tok;)
            row.push_back(parse_number(tok));
        if (row.size() != p.columns.size())
            throw Error("read_plotdata: ragged row in '" + file.string() + "'");
        p.values.push_back(std::move(row));
    }
    return p;
}

} // namespace mfg
