#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfg/efficiency.hpp"

namespace mfg {

inline constexpr int kSchemaVersion = 1;

// Schema violation; path() is the dotted location of the offending field.
class ConfigError : public Error {
  public:
    ConfigError(const std::string& path, const std::string& what)
        : Error(path + ": " + what), path_(path) {}
    const std::string& path() const { return path_; }

  private:
    std::string path_;
};

struct KernelSpec {
    std::string label = "cos_diff"; // cos_diff | cos_product | x_only
    double frequency = 1.0;
    double phase = 0.0;
};

struct WeightSpec {
    std::string label = "cos"; // cos | constant
    double frequency = 1.0;
    double value = 1.0;
};

// label: zero | fixed | convolution | efficient | potential | xfree
struct CouplingSpec {
    std::string label = "zero";
    double lambda = 1.0;
    KernelSpec kernel;
    std::string profile = "square"; // xfree: square | linear
    WeightSpec weight;              // xfree
    double amplitude = 1.0;         // fixed: amplitude cos(2 pi frequency x)
    double frequency = 1.0;
};

struct DensitySpec {
    std::string type = "cosine"; // uniform | cosine | file
    double amplitude = 0.5;
    double frequency = 1.0;
    std::string path; // whitespace-separated values, one per cell
};

// One fully resolved sweep point.
struct PointConfig {
    int d = 1;
    int n = 128;
    int nt = 256;
    double t0 = 0.0;
    double T = 0.5;
    std::string hamiltonian = "quadratic";
    CouplingSpec coupling;
    CouplingSpec terminal;
    DensitySpec m0;
    SolverParams solver;
    std::optional<double> epsilon; // default_epsilon(grid) when absent
    int h_samples = 32;
    std::uint64_t seed = 0;

    Grid grid() const;
    double resolved_epsilon() const;
};

struct SweepSpec {
    // zipped: point j sets parameters[i] to values[i][j]
    std::vector<std::string> parameters;
    std::vector<std::vector<nlohmann::json>> values;
    std::size_t size() const { return parameters.empty() ? 1 : values.front().size(); }
};

struct ExperimentConfig {
    nlohmann::json base; // point fields as given, before sweep overrides
    SweepSpec sweep;
    std::string output;
    int workers = 1;
    bool record_wall_time = true;

    std::vector<PointConfig> points() const;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
PointConfig parse_point(const nlohmann::json& j);

// Canonical form: every field present, epsilon resolved.
nlohmann::json to_json(const PointConfig& c);

Coupling build_coupling(const CouplingSpec& s, const std::string& where);
Field build_density(const DensitySpec& s, const Grid& g);
Problem build_problem(const PointConfig& c);

struct ResultRow {
    std::size_t sweep_index = 0;
    PointConfig config;
    EfficiencyReport report;
    // "ok", "not converged" or "failed: <message>"
    std::string status = "ok";
    double wall_time = 0.0;
};

bool converged(const ResultRow& r);
ResultRow run_point(const PointConfig& c, std::size_t sweep_index, bool record_wall_time = true);

// Column names in output order: sweep_index, status, the flattened canonical
// config, the report scalars, wall_time.
std::vector<std::string> result_columns();
std::vector<std::string> row_values(const ResultRow& r);

// Serializes rows to a CSV file: "# schema=1", a header line, then one line
// per row written and flushed as a whole.
class ResultWriter {
  public:
    explicit ResultWriter(std::ostream& out);
    void write(const ResultRow& r);

  private:
    std::ostream& out_;
};

struct ResultTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::size_t index(const std::string& column) const;
    std::vector<double> numbers(const std::string& column) const;
    const std::string& at(std::size_t row, const std::string& column) const;
};

// Ignores a trailing line without a newline (an interrupted write).
ResultTable read_results(std::istream& in);
ResultTable read_results(const std::filesystem::path& path);

// Rebuilds the config echoed in row `row`.
PointConfig point_from_row(const ResultTable& t, std::size_t row);

struct RunSummary {
    std::vector<ResultRow> rows; // sorted by sweep_index
    bool all_converged = true;
};

// Executes every sweep point with up to config.workers threads and streams
// rows to `out` in completion order.
RunSummary run(const ExperimentConfig& config, std::ostream& out);
RunSummary run(const ExperimentConfig& config);

struct FitResult {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    std::size_t used = 0;
    // fewer than two usable rows or no spread in x or y
    bool degenerate = false;
};

// Least squares of log y against log x over rows with x > 0 and
// y > 10 tolerance.
FitResult fit_scaling(const ResultTable& t, const std::string& x_column, const std::string& y_column,
                      double tolerance);
FitResult fit_scaling(const std::vector<double>& x, const std::vector<double>& y, double tolerance);

struct Series {
    std::string name;
    std::string x;
    std::string y;
};

// One whitespace-separated file per series, named <name>.dat, with a
// "# <x> <y>" header line.
std::vector<std::filesystem::path> emit_plotdata(const ResultTable& t, const std::vector<Series>& series,
                                                 const std::filesystem::path& directory);

struct PlotData {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> values;
};
PlotData read_plotdata(const std::filesystem::path& file);

} // namespace mfg
