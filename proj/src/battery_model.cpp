#include "flowobs/battery_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flowobs/error.hpp"

namespace flowobs {

namespace {

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw DomainError(std::string("non-finite ") + what);
}

BatteryState axpy(const BatteryState& z, double h, const BatteryState& k) {
    return {z.soc + h * k.soc, z.soc_cell + h * k.soc_cell};
}

}  // namespace

void PhysicalConstants::validate() const {
    if (!(faraday > 0.0) || !(gas_constant > 0.0) || !(temperature > 0.0) ||
        !std::isfinite(faraday) || !std::isfinite(gas_constant) || !std::isfinite(temperature)) {
        throw ConfigError("physical constants must be finite and strictly positive");
    }
}

void BatteryParams::validate() const {
    constants.validate();
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!positive(v_res)) throw ConfigError("battery.v_res must be > 0");
    if (!positive(v_cell)) throw ConfigError("battery.v_cell must be > 0");
    if (!positive(c0)) throw ConfigError("battery.c0 must be > 0");
    if (!(std::isfinite(epsilon) && epsilon > 0.0 && epsilon <= 1.0))
        throw ConfigError("battery.epsilon must lie in (0, 1]");
    if (!std::isfinite(e0_cell)) throw ConfigError("battery.e0_cell must be finite");
    if (!(std::isfinite(r_ohm) && r_ohm >= 0.0)) throw ConfigError("battery.r_ohm must be >= 0");
}

BatteryState state_derivative(const BatteryState& z, const PlantInputs& u, double qx,
                              const BatteryParams& p) {
    require_finite(z.soc, "SOC");
    require_finite(z.soc_cell, "SOC_cell");
    require_finite(u.current, "current");
    require_finite(u.flow_rate, "flow rate");
    require_finite(qx, "crossover flux");

    const double n_res = p.c0 * p.v_res;
    const double n_cell = p.epsilon * p.c0 * p.v_cell;
    const double f = p.constants.faraday;
    BatteryState d;
    d.soc = -qx / n_res - u.current / (n_res * f);
    d.soc_cell = p.mixing_rate(u.flow_rate) * (z.soc - z.soc_cell) - qx / n_cell -
                 u.current / (n_cell * f);
    return d;
}

double linear_crossover_flux(double soc_cell, double k_mt, double c0) {
    return k_mt * c0 * soc_cell;
}

NernstResult nernst_voltage(double soc_cell, double current, const BatteryParams& p) {
    require_finite(soc_cell, "SOC_cell");
    require_finite(current, "current");
    NernstResult r;
    double s = soc_cell;
    if (s < kNernstClamp || s > 1.0 - kNernstClamp) {
        s = std::clamp(s, kNernstClamp, 1.0 - kNernstClamp);
        r.clamped = true;
    }
    r.volts = p.e0_cell + p.constants.nernst_slope() * std::log(s / (1.0 - s)) + p.r_ohm * current;
    return r;
}

double invert_nernst(double v_out, double current, const BatteryParams& p) {
    require_finite(v_out, "voltage");
    require_finite(current, "current");
    const double x = (v_out - p.e0_cell - p.r_ohm * current) / p.constants.nernst_slope();
    // Logistic written to stay accurate on both tails.
    double s;
    if (x >= 0.0) {
        s = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        s = e / (1.0 + e);
    }
    return std::clamp(s, kNernstClamp, 1.0 - kNernstClamp);
}

Trajectory simulate(const BatteryParams& p, const BatteryState& z0, const InputSchedule& inputs,
                    const CrossoverLaw& crossover, const SimulationOptions& opts) {
    p.validate();
    if (!(opts.dt > 0.0)) throw ConfigError("simulation dt must be > 0");
    if (!(opts.horizon >= opts.dt)) throw ConfigError("simulation horizon must be >= dt");
    if (opts.record_stride < 1) throw ConfigError("record_stride must be >= 1");
    for (double v : {z0.soc, z0.soc_cell}) {
        if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("initial SOC values must lie in [0, 1]");
    }

    auto rhs = [&](const BatteryState& z, double t) {
        return state_derivative(z, inputs(t), crossover(z, t), p);
    };
    auto record = [&](Trajectory& traj, const BatteryState& z, double t) {
        TrajectorySample s;
        s.time = t;
        s.state = z;
        s.crossover_flux = crossover(z, t);
        const auto v = nernst_voltage(z.soc_cell, inputs(t).current, p);
        s.v_out = v.volts;
        s.v_out_clamped = v.clamped;
        traj.samples.push_back(s);
    };

    const auto n_steps = static_cast<long>(std::ceil(opts.horizon / opts.dt - 1e-9));
    Trajectory traj;
    traj.samples.reserve(static_cast<std::size_t>(n_steps / opts.record_stride + 2));

    BatteryState z = z0;
    record(traj, z, 0.0);
    for (long k = 0; k < n_steps; ++k) {
        const double t = static_cast<double>(k) * opts.dt;
        const double t_next = (k + 1 == n_steps) ? opts.horizon : static_cast<double>(k + 1) * opts.dt;
        const double h = t_next - t;
        BatteryState k1, k2, k3, k4;
        try {
            k1 = rhs(z, t);
            k2 = rhs(axpy(z, 0.5 * h, k1), t + 0.5 * h);
            k3 = rhs(axpy(z, 0.5 * h, k2), t + 0.5 * h);
            k4 = rhs(axpy(z, h, k3), t + h);
        } catch (const DomainError& e) {
            throw IntegrationError(e.what(), t);
        }
        z.soc += h / 6.0 * (k1.soc + 2.0 * k2.soc + 2.0 * k3.soc + k4.soc);
        z.soc_cell += h / 6.0 * (k1.soc_cell + 2.0 * k2.soc_cell + 2.0 * k3.soc_cell + k4.soc_cell);
        if (!std::isfinite(z.soc) || !std::isfinite(z.soc_cell))
            throw IntegrationError("non-finite battery state", t_next);
        z.soc = std::clamp(z.soc, 0.0, 1.0);
        z.soc_cell = std::clamp(z.soc_cell, 0.0, 1.0);
        if ((k + 1) % opts.record_stride == 0 || k + 1 == n_steps) record(traj, z, t_next);
    }
    return traj;
}

}  // namespace flowobs
