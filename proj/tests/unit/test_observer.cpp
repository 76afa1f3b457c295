#include <cmath>

#include "doctest.h"
#include "flowobs/error.hpp"
#include "flowobs/observer.hpp"
#include "flowobs/synthesis.hpp"

using namespace flowobs;

namespace {

const Vector& nominal_gain() {
    static const Vector g = synthesize(SynthesisConfig{}).gain_factor;
    return g;
}

ObserverConfig make_config(const Vector& gain, const Vector& x0) {
    ObserverConfig oc;
    oc.gain_factor = gain;
    oc.x_hat0 = AugmentedState(x0);
    return oc;
}

Vector vec(std::initializer_list<double> v) {
    Vector x(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double e : v) x(i++) = e;
    return x;
}

}  // namespace

TEST_CASE("zero innovation leaves only the mixing term") {
    const auto oc = make_config(nominal_gain(), vec({0.9, 0.6, 0, 0, 0}));
    const Vector x = oc.x_hat0.vector();
    const Vector d = observer_derivative(x, x(1), {0.0, 0.009}, oc);
    CHECK(d(0) == 0.0);
    CHECK(d(1) == doctest::Approx(oc.params.mixing_rate(0.009) * 0.3).epsilon(1e-14));
    CHECK(d.tail(3).norm() == 0.0);
}

TEST_CASE("zero gain gives the open-loop augmented model") {
    const Vector x = vec({0.9, 0.6, 2e-9, 1e-11, 3e-13});
    const auto oc = make_config(Vector::Zero(5), x);
    const Vector d = observer_derivative(x, 0.123, {0.7, 0.004}, oc);
    const auto m = build_augmented(psi(x(1)), 0.004, oc.params, oc.cfg);
    const Vector expected = m.a_e * x + m.b_e * 0.7;
    CHECK((d - expected).norm() <= 1e-12 * expected.norm());
}

TEST_CASE("gain term uses the inverse transform at the current estimate") {
    const Vector x = vec({0.9, 0.6, 0, 0, 0});
    const auto oc = make_config(nominal_gain(), x);
    const double innov = 1e-3;
    const Vector d1 = observer_derivative(x, x(1) + innov, {0.0, 0.009}, oc);
    const Vector d0 = observer_derivative(x, x(1), {0.0, 0.009}, oc);
    const Vector h = oc.gain_factor.cwiseQuotient(build_transform(psi(x(1)), oc.cfg).diag);
    CHECK(((d1 - d0) / innov - h).norm() <= 1e-9 * h.norm());
}

TEST_CASE("with the true state and parametric truth the derivative equals the plant") {
    const Vector x = vec({0.95, 0.93, 5e-9, -1e-12, 0.0});
    const auto oc = make_config(nominal_gain(), x);
    const PlantInputs u{0.2, 0.009};
    const Vector d = observer_derivative(x, x(1), u, oc);
    const double qx = psi(x(1)) * x(2);
    const auto plant = state_derivative({x(0), x(1)}, u, qx, oc.params);
    CHECK(d(0) == doctest::Approx(plant.soc).epsilon(1e-13));
    CHECK(d(1) == doctest::Approx(plant.soc_cell).epsilon(1e-13));
    CHECK(d(2) == doctest::Approx(0.5 * x(3)));
}

TEST_CASE("step holds an equilibrium and treats an empty gap as identity") {
    const Vector x = vec({0.5, 0.5, 0, 0, 0});
    const auto oc = make_config(nominal_gain(), x);
    const double v = nernst_voltage(0.5, 0.0, oc.params).volts;
    const MeasurementSample a{0.0, v, 0.0, 0.009}, b{1.0, v, 0.0, 0.009};
    const auto s = step({0.0, x}, a, b, oc);
    CHECK((s.x_hat - x).norm() < 1e-12);
    CHECK(s.time == 1.0);
    const auto same = step({0.0, x}, a, a, oc);
    CHECK(same.x_hat == x);
    CHECK_THROWS_AS(step({1.0, x}, b, a, oc), IngestError);
}

TEST_CASE("step converges at fourth order in the substep") {
    const Vector x = vec({0.87, 0.85, 0, 0, 0});
    auto oc = make_config(nominal_gain(), x);
    const double v = nernst_voltage(0.99, 0.0, oc.params).volts;
    const MeasurementSample a{0.0, v, 0.0, 0.009}, b{0.8, v, 0.0, 0.009};
    auto run_dt = [&](double dt) {
        oc.dt = dt;
        return step({0.0, x}, a, b, oc).x_hat;
    };
    const Vector r1 = run_dt(0.04), r2 = run_dt(0.02), r3 = run_dt(0.01);
    const double order = std::log2((r1 - r2).norm() / (r2 - r3).norm());
    CHECK(order > 3.5);
    CHECK(order < 4.5);
}

TEST_CASE("run validates the stream") {
    const auto oc = make_config(nominal_gain(), vec({0.87, 0.85, 0, 0, 0}));
    std::vector<MeasurementSample> s{{0.0, 2.3, 0.0, 0.009}};
    CHECK_THROWS_AS(run(oc, s), IngestError);
    s = {{0.0, 2.3, 0.0, 0.009}, {1.0, 2.3, 0.0, 0.009}, {1.0, 2.3, 0.0, 0.009}};
    try {
        run(oc, s);
        FAIL("expected IngestError");
    } catch (const IngestError& e) {
        CHECK(std::string(e.what()).find("index 2") != std::string::npos);
    }
    s = {{0.0, 2.3, 0.0, 0.009}, {1.0, NAN, 0.0, 0.009}};
    CHECK_THROWS_AS(run(oc, s), IngestError);
    auto bad = oc;
    bad.gain_factor = Vector::Zero(4);
    CHECK_THROWS_AS(run(bad, {{0.0, 2.3, 0.0, 0.009}, {1.0, 2.3, 0.0, 0.009}}), ConfigError);
}

TEST_CASE("run flags flow rates outside the synthesis range") {
    auto oc = make_config(nominal_gain(), vec({0.87, 0.85, 0, 0, 0}));
    oc.flow_range = FlowRange{0.00225, 0.018};
    std::vector<MeasurementSample> s;
    for (int k = 0; k < 5; ++k) s.push_back({static_cast<double>(k), 2.3, 0.0, k == 3 ? 0.05 : 0.009});
    const auto t = run(oc, s);
    CHECK(t.records.size() == 5);
    REQUIRE(t.warnings.size() == 1);
    CHECK(t.warnings[0].find("index 3") != std::string::npos);
}

TEST_CASE("self-consistent stream keeps the innovation near zero") {
    // Measurements come from the observer's own open-loop model started at the
    // observer's initial state, so the only innovation source is the
    // zero-order hold, which shrinks with the sample period.
    const Vector x0 = vec({0.9, 0.9, 5e-9, -1e-12, 0});
    const auto oc = make_config(nominal_gain(), x0);
    const auto open = make_config(Vector::Zero(5), x0);
    auto worst_innovation = [&](double period) {
        std::vector<MeasurementSample> stream;
        ObserverState st{0.0, x0};
        const int n = static_cast<int>(std::lround(5.0 / period));
        for (int k = 0; k <= n; ++k) {
            const double t = period * k;
            if (k > 0) {
                const MeasurementSample prev{t - period, 2.3, 0.0, 0.009}, next{t, 2.3, 0.0, 0.009};
                st = step(st, prev, next, open);
            }
            stream.push_back({t, nernst_voltage(st.x_hat(1), 0.0, oc.params).volts, 0.0, 0.009});
        }
        const auto trace = run(oc, stream);
        double worst = 0.0;
        for (const auto& r : trace.records) worst = std::max(worst, std::abs(r.innovation));
        return worst;
    };
    const double coarse = worst_innovation(0.1);
    const double fine = worst_innovation(0.01);
    CHECK(coarse < 1e-5);
    CHECK(fine < 0.2 * coarse);
}

TEST_CASE("fitted decay rate of a constructed 2^-t error") {
    std::vector<double> t, v;
    for (int k = 0; k <= 100; ++k) {
        t.push_back(0.1 * k);
        v.push_back(0.3 * std::pow(2.0, -t.back()));
    }
    CHECK(fit_exponential_rate(t, v, 0.0, 10.0) == doctest::Approx(std::log(2.0)).epsilon(0.02));
    CHECK_THROWS_AS(fit_exponential_rate(t, v, 20.0, 30.0), DomainError);
}

TEST_CASE("error metrics") {
    Trajectory truth;
    ObserverTrace trace;
    for (int k = 0; k <= 40; ++k) {
        const double t = 0.25 * k;
        const double e = 0.3 * std::pow(2.0, -t);
        TrajectorySample s;
        s.time = t;
        s.state = {0.9, 0.8};
        truth.samples.push_back(s);
        TraceRecord r;
        r.time = t;
        r.x_hat = vec({0.9 - 0.6 * e, 0.8 - 0.8 * e, 0, 0, 0});
        trace.records.push_back(r);
    }
    const auto m = error_metrics(truth, trace, std::nullopt, 0.5);
    CHECK(m.times.size() == 41);
    CHECK(m.norm_error.front() == doctest::Approx(0.3));
    CHECK(m.sup_norm == doctest::Approx(0.3));
    CHECK(m.terminal_norm == doctest::Approx(0.3 * std::pow(2.0, -10.0)));
    CHECK(m.fitted_rate == doctest::Approx(std::log(2.0)).epsilon(0.02));
    CHECK(*m.reference_rate == 0.5);

    SUBCASE("identical truth gives zero metrics") {
        for (auto& r : trace.records) r.x_hat.head(2) = vec({0.9, 0.8});
        const auto z = error_metrics(truth, trace);
        CHECK(z.sup_norm == 0.0);
        CHECK(z.terminal_norm == 0.0);
        CHECK(z.fitted_rate == 0.0);
    }
    SUBCASE("truth is interpolated onto trace times") {
        Trajectory coarse;
        for (int k = 0; k <= 2; ++k) {
            TrajectorySample s;
            s.time = 5.0 * k;
            s.state = {0.1 * k, 0.2 * k};
            coarse.samples.push_back(s);
        }
        ObserverTrace one;
        TraceRecord r;
        r.time = 2.5;
        r.x_hat = Vector::Zero(5);
        one.records.push_back(r);
        const auto q = error_metrics(coarse, one);
        CHECK(q.soc_error[0] == doctest::Approx(0.05));
        CHECK(q.soc_cell_error[0] == doctest::Approx(0.1));
    }
    SUBCASE("disjoint ranges are rejected") {
        for (auto& r : trace.records) r.time += 100.0;
        CHECK_THROWS_AS(error_metrics(truth, trace), IngestError);
    }
}

TEST_CASE("integrator chain theta is a polynomial in time") {
    const CrossoverModelConfig cfg;
    const std::vector<double> w{1.0, 2.0, 3.0};
    // theta = w1 + l1 w2 t + l1 l2 w3 t^2 / 2
    for (double t : {0.0, 1.0, 7.5}) {
        CHECK(integrator_chain_theta(cfg, w, t) == doctest::Approx(1.0 + 0.5 * 2.0 * t + 0.5 * 0.025 * 3.0 * t * t / 2.0));
    }
    CHECK_THROWS_AS(integrator_chain_theta(cfg, {1.0}, 1.0), ConfigError);
}
