#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kslab/measures.hpp"

namespace kslab {

/// Experiment configuration, parsed from an INI-style file with sections
/// [domain], [coefficients], [terminal], [metric], [solver], [run].
/// Defaults reproduce the standard desk scale.
struct ExperimentConfig {
    // [domain]
    double lower = 0.0;
    double upper = 1.0;
    int n = 128;
    BoundaryMode boundary = BoundaryMode::torus;

    // [coefficients]
    std::string preset = "torus-ou";
    std::map<std::string, double> params;

    // [terminal]
    std::string phi = "first-moment";
    double phi_value = 1.0;   // constant preset
    double phi_center = 0.5;  // abs-moment preset

    // [metric]
    int family_size = 16;

    // [solver]
    double dt = 1e-3;
    double t0 = 0.0;
    double T = 0.5;
    int paths = 1000;
    int particles = 2000;
    double ess_threshold = 0.5;
    std::string initial = "cos-bump"; // uniform | dirichlet | cos-bump
    double bump_center = 0.35;
    double bump_amp = 0.5;

    // [run]
    std::uint64_t seed = 20260811;
    std::string out_dir = "out";
    int workers = 1;
    bool override_stability = false;
    int replicas = 200; // cross-solver comparison batches
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);
/// Stable canonical serialization; parse(canonical_text(c)) round-trips
/// to the identical canonical text.
std::string canonical_text(const ExperimentConfig& cfg);
/// Canonical text minus the execution-only fields (output directory, worker
/// count): everything that determines the numeric outputs. Reports embed and
/// hash this form, so runs differing only in workers or output location
/// produce byte-identical report bodies.
std::string numeric_identity_text(const ExperimentConfig& cfg);
/// Structural validation; throws ConfigError naming the offending field.
void validate_config(const ExperimentConfig& cfg);

std::uint64_t fnv1a(const std::string& text);
std::string config_hash(const ExperimentConfig& cfg);

// --- run reports ----------------------------------------------------------

struct CheckResult {
    std::string id;
    bool pass = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string details;
};

struct RunReport {
    std::string schema = "report/v1";
    std::string command;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string config_text;
    std::vector<CheckResult> checks;
    std::vector<std::string> artifacts;
    double wall_ms = 0.0; // excluded from the content hash

    bool all_pass() const;
    std::string to_json() const;
    /// Hash of the report body with the timing field removed.
    std::string content_hash() const;
};

// --- direct SVG emission ---------------------------------------------------

struct SvgSeries {
    std::string label;
    std::vector<double> x, y;
    std::string color = "#1f77b4";
};

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<SvgSeries>& series, bool log_y = false);

/// rows[i][j] is the cell value at time index i and space index j.
void write_heat_strip(const std::string& path, const std::string& title,
                      const std::vector<std::vector<double>>& rows);

} // namespace kslab
