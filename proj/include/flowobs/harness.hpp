#pragma once

// Experiment configuration and the command implementations behind the
// flowobs CLI (synthesize, twin, observe, verify, sweep).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flowobs/battery_model.hpp"
#include "flowobs/crossover.hpp"
#include "flowobs/observer.hpp"
#include "flowobs/synthesis.hpp"

namespace flowobs {

enum class TruthKind { none, linear, parametric };

std::string to_string(TruthKind k);

struct CrossoverTruth {
    TruthKind kind = TruthKind::linear;
    double k_mt = 5.6142e-8;      // L/min, linear law k_mt * c0 * SOC_cell
    std::vector<double> omega0;   // parametric law psi(SOC_cell) * theta(t), theta from the chain
};

struct ExperimentSettings {
    double horizon = 1440.0;       // min
    double sim_dt = 0.01;          // min
    double sample_period = 0.1;    // min, a multiple of sim_dt
    double noise_mv = 0.0;         // uniform +-noise_mv on v_out
    std::uint64_t seed = 1;
    BatteryState z0{1.0, 1.0};
    double current = 0.0;          // A
    double flow_rate = 0.009;      // L/min
    int verify_samples = 11;
};

struct ExperimentConfig {
    BatteryParams battery{};
    CrossoverTruth truth{};
    CrossoverModelConfig observer_model{};
    std::vector<double> x_hat0{0.87, 0.85, 0.0, 0.0, 0.0};
    double observer_dt = 0.01;
    SynthesisConfig synthesis{};   // cfg and params are filled from the sections above
    ExperimentSettings experiment{};
    BoundSet bounds = BoundSet::defaults_for(1e-4);
    EuubOptions euub{};

    void validate() const;
    SynthesisConfig synthesis_config() const;
    ObserverConfig observer_config(const Vector& gain_factor) const;
};

// Strict parsing: unknown keys and wrong types are ConfigErrors naming the
// offending field; syntax errors name the line. Missing keys keep defaults.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string dump_config(const ExperimentConfig& config);

struct FluxSummary {
    double window_begin = 0.0;      // min, start of the final quarter
    double mean_true = 0.0;         // mol/min
    double mean_estimate = 0.0;     // mol/min
    double relative_error = 0.0;    // |mean_estimate - mean_true| / |mean_true|, or NaN when mean_true == 0
    double sup_abs_estimate = 0.0;  // sup ||z_hat||_inf over the run
};

struct TwinRun {
    Trajectory truth;
    std::vector<MeasurementSample> measurements;
    ObserverTrace trace;
    ErrorMetrics metrics;
    FluxSummary flux;
};

// Simulates the plant, samples noisy voltages and runs the observer with the
// given gain factor. Truth is recorded at the sample instants.
TwinRun run_twin(const ExperimentConfig& config, const Vector& gain_factor);

std::vector<MeasurementSample> sample_measurements(const Trajectory& truth, const ExperimentConfig& config);

FluxSummary summarize_flux(const Trajectory& truth, const ObserverTrace& trace);

struct RunArtifacts {
    std::filesystem::path truth_csv;
    std::filesystem::path measurements_csv;
    std::filesystem::path trace_csv;
    std::filesystem::path gain_file;
    std::filesystem::path certificates;
    std::filesystem::path report;
    std::vector<std::filesystem::path> plots;
};

struct CommandOptions {
    std::filesystem::path config;
    std::optional<std::filesystem::path> gain;
    std::optional<std::filesystem::path> measurements;
    std::filesystem::path out_dir = "out";
    std::optional<std::uint64_t> seed;
    bool plots = true;
};

// Exit codes: 0 success with all certificates passing, 1 input or runtime
// error, 2 infeasible synthesis or failed certificate.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitCertificate = 2;

int cmd_synthesize(const CommandOptions& opts, RunArtifacts* artifacts = nullptr);
int cmd_twin(const CommandOptions& opts, RunArtifacts* artifacts = nullptr);
int cmd_observe(const CommandOptions& opts, RunArtifacts* artifacts = nullptr);
int cmd_verify(const CommandOptions& opts);
// Runs cmd_twin for each config in parallel, each into out_dir/<config stem>.
int cmd_sweep(const std::vector<std::filesystem::path>& configs, const CommandOptions& opts);

// Reads FLOWOBS_LOG (trace, debug, info, warn, error, off) and routes logs to stderr.
void init_logging();

}  // namespace flowobs
