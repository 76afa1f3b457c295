#pragma once

// Isothermal lumped-parameter model of one half-cell plus reservoir of a
// disproportionation redox flow battery.
//
// Units throughout: time in minutes, volumes in liters, flow in L/min,
// amounts in mol, crossover flux in mol/min, current in A (positive = discharge).

#include <functional>
#include <vector>

namespace flowobs {

struct PhysicalConstants {
    double faraday = 96485.33212;        // C/mol
    double gas_constant = 8.314462618;   // J/(mol K)
    double temperature = 275.0;          // K

    void validate() const;
    // 2RT/F, the slope of the Nernst log term.
    double nernst_slope() const { return 2.0 * gas_constant * temperature / faraday; }
};

struct BatteryParams {
    double v_res = 0.0176;       // L
    double v_cell = 0.0006985;   // L
    double c0 = 0.1;             // mol/L
    double epsilon = 0.87;       // electrode porosity
    double e0_cell = 2.2;        // V
    double r_ohm = 0.0;          // ohm, V_R = r_ohm * I
    PhysicalConstants constants{};

    void validate() const;

    // Mixing rate Q/(eps*V_cell) in 1/min.
    double mixing_rate(double flow_rate) const { return flow_rate / (epsilon * v_cell); }
};

struct BatteryState {
    double soc = 0.0;
    double soc_cell = 0.0;
};

struct PlantInputs {
    double current = 0.0;     // A
    double flow_rate = 0.0;   // L/min
};

struct TrajectorySample {
    double time = 0.0;             // min
    BatteryState state{};
    double crossover_flux = 0.0;   // mol/min
    double v_out = 0.0;            // V
    bool v_out_clamped = false;
};

struct Trajectory {
    std::vector<TrajectorySample> samples;
};

// Clamp band keeping the Nernst log term finite.
inline constexpr double kNernstClamp = 1e-6;

struct NernstResult {
    double volts = 0.0;
    bool clamped = false;
};

// d/dt [SOC, SOC_cell] for crossover flux qx (mol/min).
BatteryState state_derivative(const BatteryState& z, const PlantInputs& u, double qx,
                              const BatteryParams& p);

// k_mt * c0 * SOC_cell, k_mt in L/min.
double linear_crossover_flux(double soc_cell, double k_mt, double c0);

NernstResult nernst_voltage(double soc_cell, double current, const BatteryParams& p);

// Inverse Nernst map, saturating at [kNernstClamp, 1 - kNernstClamp].
double invert_nernst(double v_out, double current, const BatteryParams& p);

using InputSchedule = std::function<PlantInputs(double time)>;
// Ground-truth crossover flux as a function of the current state and time.
using CrossoverLaw = std::function<double(const BatteryState& z, double time)>;

struct SimulationOptions {
    double horizon = 60.0;   // min
    double dt = 0.01;        // min
    int record_stride = 1;   // keep every n-th step (first and last always kept)
};

// Fixed-step classical RK4. States are clamped to [0,1] after each step.
// Throws IntegrationError when a step goes non-finite.
Trajectory simulate(const BatteryParams& p, const BatteryState& z0, const InputSchedule& inputs,
                    const CrossoverLaw& crossover, const SimulationOptions& opts);

}  // namespace flowobs
