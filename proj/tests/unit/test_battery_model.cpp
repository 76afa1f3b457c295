#include <cmath>
#include <limits>

#include "doctest.h"
#include "flowobs/battery_model.hpp"
#include "flowobs/error.hpp"

using namespace flowobs;

// High-precision reference values were computed with mpmath at 40 digits
// using the CODATA constants in PhysicalConstants.

TEST_CASE("state derivative vanishes at equilibrium") {
    const BatteryParams p;
    for (double s : {0.0, 0.3, 0.77, 1.0}) {
        const auto d = state_derivative({s, s}, {0.0, 0.009}, 0.0, p);
        CHECK(d.soc == 0.0);
        CHECK(d.soc_cell == 0.0);
    }
}

TEST_CASE("mixing rate for the nominal flow") {
    const BatteryParams p;
    CHECK(p.mixing_rate(0.009) == doctest::Approx(14.810060968084319).epsilon(1e-14));
}

TEST_CASE("state derivative under linear crossover") {
    const BatteryParams p;
    const double qx = linear_crossover_flux(1.0, 5.6142e-8, p.c0);
    CHECK(qx == doctest::Approx(5.6142e-9).epsilon(1e-15));
    const auto d = state_derivative({1.0, 1.0}, {0.0, 0.009}, qx, p);
    CHECK(d.soc == doctest::Approx(-3.1898863636363636e-6).epsilon(1e-13));
    CHECK(d.soc_cell == doctest::Approx(-9.238516031890998e-5).epsilon(1e-13));
}

TEST_CASE("state derivative with current and mixing") {
    const BatteryParams p;
    const auto d = state_derivative({0.8, 0.6}, {1.5, 0.009}, 1e-8, p);
    CHECK(d.soc == doctest::Approx(-0.0088388661846173832).epsilon(1e-13));
    CHECK(d.soc_cell == doctest::Approx(2.7060218615435935).epsilon(1e-13));
}

TEST_CASE("state derivative rejects non-finite input") {
    const BatteryParams p;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(state_derivative({nan, 0.5}, {0.0, 0.009}, 0.0, p), DomainError);
    CHECK_THROWS_AS(state_derivative({0.5, 0.5}, {0.0, 0.009}, INFINITY, p), DomainError);
}

TEST_CASE("parameter validation") {
    BatteryParams p;
    p.epsilon = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = BatteryParams{};
    p.v_cell = -1.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = BatteryParams{};
    p.r_ohm = -0.1;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = BatteryParams{};
    p.constants.temperature = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    CHECK_NOTHROW(BatteryParams{}.validate());
}

TEST_CASE("Nernst voltage reference values") {
    const BatteryParams p;
    CHECK(p.constants.nernst_slope() == doctest::Approx(0.047395332942550895).epsilon(1e-15));
    CHECK(nernst_voltage(0.5, 0.0, p).volts == doctest::Approx(2.2).epsilon(1e-15));
    CHECK(nernst_voltage(0.1, 0.0, p).volts == doctest::Approx(2.0958618096075942).epsilon(1e-14));
    CHECK(nernst_voltage(0.25, 0.0, p).volts == doctest::Approx(2.1479309048037971).epsilon(1e-14));
    CHECK(nernst_voltage(0.9, 0.0, p).volts == doctest::Approx(2.3041381903924058).epsilon(1e-14));
    CHECK(nernst_voltage(0.999, 0.0, p).volts == doctest::Approx(2.5273479422866026).epsilon(1e-14));
    CHECK_FALSE(nernst_voltage(0.9, 0.0, p).clamped);
}

TEST_CASE("Nernst clamp and ohmic term") {
    BatteryParams p;
    const auto hi = nernst_voltage(1.0, 0.0, p);
    CHECK(hi.clamped);
    CHECK(hi.volts == doctest::Approx(2.8547906752706872).epsilon(1e-11));
    CHECK(std::isfinite(nernst_voltage(0.0, 0.0, p).volts));
    p.r_ohm = 0.05;
    CHECK(nernst_voltage(0.7, 2.0, p).volts == doctest::Approx(2.3401579641945625).epsilon(1e-14));
    CHECK(invert_nernst(2.3401579641945625, 2.0, p) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("inverse Nernst round trip and saturation") {
    const BatteryParams p;
    double worst = 0.0;
    for (int k = 1; k <= 99; ++k) {
        const double s = k / 100.0;
        worst = std::max(worst, std::abs(invert_nernst(nernst_voltage(s, 0.0, p).volts, 0.0, p) - s));
    }
    CHECK(worst < 1e-12);
    CHECK(invert_nernst(10.0, 0.0, p) == doctest::Approx(1.0 - kNernstClamp));
    CHECK(invert_nernst(-10.0, 0.0, p) == doctest::Approx(kNernstClamp));
}

TEST_CASE("simulate holds equilibrium and records the horizon") {
    const BatteryParams p;
    SimulationOptions so;
    so.horizon = 1.0;
    so.dt = 0.3;
    const auto tr = simulate(p, {0.4, 0.4}, [](double) { return PlantInputs{0.0, 0.009}; },
                             [](const BatteryState&, double) { return 0.0; }, so);
    REQUIRE(tr.samples.size() == 5);
    CHECK(tr.samples.back().time == 1.0);
    for (const auto& s : tr.samples) {
        CHECK(s.state.soc == 0.4);
        CHECK(s.state.soc_cell == 0.4);
    }
}

TEST_CASE("simulate matches the closed-form mixing transient") {
    // With no crossover and no current, SOC is constant and SOC_cell relaxes
    // exponentially toward it.
    const BatteryParams p;
    SimulationOptions so;
    so.horizon = 0.5;
    so.dt = 0.001;
    const auto tr = simulate(p, {0.8, 0.2}, [](double) { return PlantInputs{0.0, 0.009}; },
                             [](const BatteryState&, double) { return 0.0; }, so);
    const double k = p.mixing_rate(0.009);
    for (const auto& s : tr.samples) {
        CHECK(s.state.soc == doctest::Approx(0.8).epsilon(1e-15));
        CHECK(s.state.soc_cell == doctest::Approx(0.8 - 0.6 * std::exp(-k * s.time)).epsilon(1e-8));
    }
}

TEST_CASE("simulate converges at fourth order") {
    const BatteryParams p;
    auto end_state = [&](double dt) {
        SimulationOptions so;
        so.horizon = 2.0;
        so.dt = dt;
        const auto tr = simulate(p, {0.9, 0.3}, [](double t) { return PlantInputs{0.5 * std::sin(t), 0.009}; },
                                 [](const BatteryState& z, double) { return 1e-3 * z.soc_cell; }, so);
        return tr.samples.back().state;
    };
    const auto a = end_state(0.02), b = end_state(0.01), c = end_state(0.005);
    const double order = std::log2(std::abs(a.soc_cell - b.soc_cell) / std::abs(b.soc_cell - c.soc_cell));
    CHECK(order > 3.7);
    CHECK(order < 4.4);
}

TEST_CASE("simulate clamps states and rejects bad options") {
    const BatteryParams p;
    SimulationOptions so;
    so.horizon = 5.0;
    so.dt = 0.01;
    const auto tr = simulate(p, {0.01, 0.01}, [](double) { return PlantInputs{5.0, 0.009}; },
                             [](const BatteryState&, double) { return 0.0; }, so);
    for (const auto& s : tr.samples) {
        CHECK(s.state.soc >= 0.0);
        CHECK(s.state.soc_cell >= 0.0);
    }
    CHECK(tr.samples.back().v_out_clamped);

    so.dt = 0.0;
    CHECK_THROWS_AS(simulate(p, {0.5, 0.5}, [](double) { return PlantInputs{0.0, 0.009}; },
                             [](const BatteryState&, double) { return 0.0; }, so),
                    ConfigError);
    so.dt = 0.01;
    CHECK_THROWS_AS(simulate(p, {1.5, 0.5}, [](double) { return PlantInputs{0.0, 0.009}; },
                             [](const BatteryState&, double) { return 0.0; }, so),
                    ConfigError);
}

TEST_CASE("simulate reports the failure time of a non-finite law") {
    const BatteryParams p;
    SimulationOptions so;
    so.horizon = 1.0;
    so.dt = 0.1;
    try {
        simulate(p, {0.5, 0.5}, [](double) { return PlantInputs{0.0, 0.009}; },
                 [](const BatteryState&, double t) { return t > 0.45 ? std::nan("") : 0.0; }, so);
        FAIL("expected IntegrationError");
    } catch (const IntegrationError& e) {
        CHECK(e.time() == doctest::Approx(0.4));
    }
}
