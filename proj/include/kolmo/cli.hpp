#pragma once

#include "kolmo/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace kolmo {

struct Budgets {
    long paths = 20000;
    int steps = 128;
    long samples = 2000;
    int grid_points = 3;
    int gl_order = 8;
    int gh_order = 20;
    int time_levels = 24;
    int neumann_depth = 2;
};

struct ExperimentConfig {
    /// Catalog name, or the descriptor name when `descriptor` is set.
    std::string model = "kolmogorov";
    std::optional<ModelDescriptor> descriptor;
    double diffusion_modulation = 0.0;
    double horizon = 1.0;
    Budgets budgets;
    std::uint64_t seed = 1;
    std::vector<std::string> checks;
    std::string output = ".";
    /// Record wall times; off by default so that reports are byte-identical across runs.
    bool timing = false;

    ChainSpec build_spec() const;
};

std::vector<std::string> suite_names();

/// Parses and validates a JSON document; `origin` names it in error messages. Throws ConfigError
/// with line and column on malformed JSON, and naming the field on schema violations.
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::string& path);

struct ReportRow {
    std::string suite;
    std::string check;
    std::string statistic;
    double value = 0.0;
    double bound = 0.0;
    bool pass = false;
    long sample_size = 0;
    std::uint64_t seed = 0;
    double wall_time = 0.0;
};

/// A row that passes iff value <= bound (NaN fails).
ReportRow make_row(std::string suite, std::string check, std::string statistic, double value, double bound,
                   long sample_size, std::uint64_t seed);

/// Header: suite,check,statistic,value,bound,pass,sample_size,seed,wall_time.
void write_report_csv(std::ostream& os, const std::vector<ReportRow>& rows);
void write_summary(std::ostream& os, const std::vector<ReportRow>& rows);

/// Runs one suite; failures inside the suite become failed rows.
std::vector<ReportRow> run_suite(const ExperimentConfig& cfg, const std::string& suite);

/// Runs the configured suites in order and writes report.csv and summary.txt into cfg.output.
/// Returns 0 iff every row passes.
int run_experiment(const ExperimentConfig& cfg, std::ostream& log);

/// `run <config.json> [--out DIR] [--seed N] [--suite NAME]* [--timing]`
int cli_main(int argc, char** argv);

}  // namespace kolmo
