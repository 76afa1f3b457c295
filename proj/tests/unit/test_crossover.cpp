#include <cmath>

#include "doctest.h"
#include "flowobs/crossover.hpp"
#include "flowobs/error.hpp"

using namespace flowobs;

TEST_CASE("lambda matrix is nilpotent of order l") {
    for (int l : {1, 2, 3, 5}) {
        CrossoverModelConfig cfg;
        cfg.order_l = l;
        cfg.lambda.assign(static_cast<std::size_t>(l - 1), 0.7);
        const Matrix lam = build_lambda_matrix(cfg);
        Matrix power = Matrix::Identity(l, l);
        for (int k = 0; k < l - 1; ++k) power = power * lam;
        if (l > 1) CHECK(power.norm() > 0.0);
        CHECK((power * lam).norm() == 0.0);
    }
}

TEST_CASE("crossover model validation") {
    CrossoverModelConfig cfg;
    cfg.lambda = {0.5};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = CrossoverModelConfig{};
    cfg.varrho = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = CrossoverModelConfig{};
    cfg.order_l = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("psi is clamped to [0.5, 1]") {
    CHECK(psi(0.0) == 0.5);
    CHECK(psi(1.0) == 1.0);
    CHECK(psi(0.4) == doctest::Approx(0.7));
    CHECK(psi(-3.0) == 0.5);
    CHECK(psi(7.0) == 1.0);
    CHECK(psi_slope(0.3) == 0.5);
    CHECK(psi_slope(1.5) == 0.0);
}

TEST_CASE("augmented matrices have the documented structure") {
    const BatteryParams p;
    const CrossoverModelConfig cfg;
    const auto m = build_augmented(0.8, 0.009, p, cfg);
    REQUIRE(m.a_e.rows() == 5);
    const double k = p.mixing_rate(0.009);
    CHECK(m.a_e(1, 0) == doctest::Approx(k));
    CHECK(m.a_e(1, 1) == doctest::Approx(-k));
    CHECK(m.a_e(0, 0) == 0.0);
    CHECK(m.a_e(0, 2) == doctest::Approx(0.8 * -568.18181818181818).epsilon(1e-13));
    CHECK(m.a_e(1, 2) == doctest::Approx(0.8 * -16455.623297871465).epsilon(1e-13));
    CHECK(m.a_e(2, 3) == 0.5);
    CHECK(m.a_e(3, 4) == 0.025);
    CHECK(m.a_e.row(4).norm() == 0.0);
    CHECK(m.b_e(0) == doctest::Approx(-568.18181818181818 / p.constants.faraday).epsilon(1e-13));
    CHECK(m.c_e(1) == 1.0);
    CHECK(m.c_e.sum() == 1.0);
    CHECK(m.e_e(1) == doctest::Approx(-16455.623297871465).epsilon(1e-13));
}

TEST_CASE("similarity transform removes the psi dependence") {
    const BatteryParams p;
    const CrossoverModelConfig cfg;
    for (double s : {0.0, 0.2, 0.5, 0.9, 1.0}) {
        for (double q : {0.00225, 0.009, 0.018}) {
            const double ps = psi(s);
            const auto m = build_augmented(ps, q, p, cfg);
            const auto t = build_transform(ps, cfg);
            const Matrix lhs = t.matrix() * m.a_e * t.inverse();
            const Matrix rhs = transformed_system_matrix(q, p, cfg);
            CHECK((lhs - rhs).norm() <= 1e-10 * rhs.norm());
        }
    }
}

TEST_CASE("transform diagonal and inverse") {
    const CrossoverModelConfig cfg;
    const auto t = build_transform(0.75, cfg);
    CHECK(t.diag(0) == 1.0);
    CHECK(t.diag(1) == 1.0);
    CHECK(t.diag(2) == doctest::Approx(7500.0));
    CHECK((t.matrix() * t.inverse() - Matrix::Identity(5, 5)).norm() < 1e-15);
    CHECK_THROWS_AS(build_transform(0.0, cfg), DomainError);
}

TEST_CASE("flow-dependent matrix is a convex combination of the vertices") {
    const BatteryParams p;
    const CrossoverModelConfig cfg;
    const double q_min = 0.00225, q_max = 0.018;
    const auto v = polytope_vertices(q_min, q_max, p, cfg);
    for (int k = 0; k <= 20; ++k) {
        const double q = q_min + (q_max - q_min) * k / 20.0;
        const double w = polytope_weight(q, q_min, q_max);
        CHECK(w >= -1e-15);
        CHECK(w <= 1.0 + 1e-15);
        const Matrix a = transformed_system_matrix(q, p, cfg);
        const Matrix mix = w * v.at_q_min + (1.0 - w) * v.at_q_max;
        CHECK((a - mix).norm() <= 1e-12 * a.norm());
    }
    CHECK_THROWS_AS(polytope_vertices(q_max, q_min, p, cfg), ConfigError);
}

TEST_CASE("augmented state accessors") {
    const AugmentedState x({0.9, 0.8}, {1e-9, 2e-12, 3e-15});
    CHECK(x.vector().size() == 5);
    CHECK(x.order_l() == 3);
    CHECK(x.battery().soc == 0.9);
    CHECK(x.theta() == 1e-9);
    CHECK(x.omega(2) == 3e-15);
    CHECK(AugmentedState::zero(2).vector().norm() == 0.0);
}

TEST_CASE("delta bar vanishes with full compensation and no model error") {
    BoundSet b = BoundSet::defaults_for(1e-4);
    CHECK(b.tau_m == 1.0);
    CHECK(b.tau_m_upper == doctest::Approx(1e4));
    CHECK(delta_bar(b, 1.0, 16465.0) == 0.0);
    // gamma_psi_tilde * gamma_s_tilde * gamma_z^2 * (1 - sigma) = 0.5 * 1 * 2 * 0.5
    CHECK(delta_bar(b, 0.5, 2.0) == doctest::Approx(1e4 * 2.0 * 0.5));
    b.eps_bar = 1e-3;
    CHECK(delta_bar(b, 1.0, 2.0) == doctest::Approx(1e4 * 2.0 * 1e-3));
    CHECK_THROWS_AS(delta_bar(b, 1.5, 2.0), DomainError);
}
