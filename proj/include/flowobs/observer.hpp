#pragma once

// Augmented-state observer driven by voltage/current/flow measurements:
//
//   d xhat/dt = A_e(psi(zhat_2), Q) xhat + B_e I + H_t (y - C_e xhat),
//   H_t = T^{-1}(psi(zhat_2)) P^{-1} Z,   y = inverse Nernst of the measured voltage.

#include <optional>
#include <string>
#include <vector>

#include "flowobs/battery_model.hpp"
#include "flowobs/crossover.hpp"
#include "flowobs/linalg.hpp"

namespace flowobs {

struct FlowRange {
    double q_min = 0.0;
    double q_max = 0.0;
};

struct ObserverConfig {
    BatteryParams params{};
    CrossoverModelConfig cfg{};
    Vector gain_factor;   // P^{-1} Z
    AugmentedState x_hat0;
    double dt = 0.01;     // max RK4 substep, min
    std::optional<FlowRange> flow_range;   // samples outside are flagged

    void validate() const;
};

struct MeasurementSample {
    double time = 0.0;        // min
    double v_out = 0.0;       // V
    double current = 0.0;     // A
    double flow_rate = 0.0;   // L/min
};

struct ObserverState {
    double time = 0.0;
    Vector x_hat;
};

struct TraceRecord {
    double time = 0.0;
    Vector x_hat;
    double y_hat = 0.0;
    double innovation = 0.0;   // y - y_hat
    Vector gain;               // H_t
    double crossover = 0.0;    // psi(zhat_2) * theta_hat, mol/min
};

struct ObserverTrace {
    std::vector<TraceRecord> records;
    std::vector<std::string> warnings;
    // max |d psi/dt / psi| seen along the run (backward differences).
    double gamma_t_estimate = 0.0;
};

Vector observer_derivative(const Vector& x_hat, double y_meas, const PlantInputs& u,
                           const ObserverConfig& oc);

// Integrates from sample.time to next_sample.time holding the measurement
// of `sample` constant. A zero-length gap returns the state unchanged.
ObserverState step(const ObserverState& state, const MeasurementSample& sample,
                   const MeasurementSample& next_sample, const ObserverConfig& oc);

// Throws IngestError for fewer than 2 samples or non-increasing times.
ObserverTrace run(const ObserverConfig& oc, const std::vector<MeasurementSample>& stream);

struct ErrorMetrics {
    std::vector<double> times;
    std::vector<double> soc_error;        // SOC - SOC_hat
    std::vector<double> soc_cell_error;   // SOC_cell - SOC_cell_hat
    std::vector<double> norm_error;       // ||z_tilde||
    double sup_norm = 0.0;
    double terminal_norm = 0.0;
    double fitted_rate = 0.0;             // 1/min, from ln||z_tilde|| regression
    std::optional<double> reference_rate; // e.g. the EUUB decay rate
};

// Least-squares slope of -ln(values) over [t_begin, t_end]; non-positive
// values are skipped.
double fit_exponential_rate(const std::vector<double>& times, const std::vector<double>& values,
                            double t_begin, double t_end);

// Truth is interpolated linearly onto the trace times inside the overlap.
ErrorMetrics error_metrics(const Trajectory& truth, const ObserverTrace& trace,
                           std::optional<double> fit_window_end = std::nullopt,
                           std::optional<double> reference_rate = std::nullopt);

// theta(t) = first entry of exp(Lambda t) omega0 (finite sum, Lambda nilpotent).
double integrator_chain_theta(const CrossoverModelConfig& cfg, const std::vector<double>& omega0, double t);

}  // namespace flowobs
