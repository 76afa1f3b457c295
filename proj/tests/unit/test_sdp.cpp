#include <cmath>
#include <sstream>

#include "doctest.h"
#include "flowobs/error.hpp"
#include "flowobs/sdp.hpp"
#include "sdp_catalog.hpp"

using namespace flowobs;
using namespace flowobs::testing;

// Optima of the catalog were cross-checked against an external conic solver
// (CLARABEL through cvxpy): 4.0, -sqrt(5), -0.25, (5 + sqrt 5)/2, 3 sqrt(3)/2.

TEST_CASE("catalog problems reach their closed-form optima") {
    for (const auto& cp : sdp_catalog()) {
        CAPTURE(cp.name);
        const auto sol = sdp::solve(cp.problem);
        REQUIRE(sol.status == sdp::Status::optimal);
        CHECK(sol.objective_value == doctest::Approx(cp.expected).epsilon(1e-4));
        CHECK(std::abs(sol.objective_value - cp.expected) < 1e-4);
        CHECK(problem_min_eig(cp.problem, sol.y) >= -1e-7);
        CHECK(sol.duality_gap_estimate <= 1e-6);
        for (Eigen::Index k = 0; k < sol.min_eig_per_block.size(); ++k) CHECK(sol.min_eig_per_block(k) >= -1e-7);
    }
}

TEST_CASE("grid oracle agrees on two catalog problems") {
    const auto cat = sdp_catalog();
    for (const char* name : {"unit_disc", "parabola"}) {
        const auto it = std::find_if(cat.begin(), cat.end(), [&](const auto& c) { return c.name == name; });
        REQUIRE(it != cat.end());
        const auto grid = grid_search(*it);
        CHECK(std::abs(grid.value - it->expected) < 5e-3);
    }
}

TEST_CASE("contradictory constraints are reported infeasible") {
    // y >= 1 and y <= 0
    const auto p = make_problem({1.0}, {{scalar(-1.0), {scalar(1.0)}}, {scalar(0.0), {scalar(-1.0)}}});
    const auto sol = sdp::solve(p);
    CHECK(sol.status == sdp::Status::infeasible);
    CHECK(sol.phase1_margin < 0.0);
    CHECK(sol.phase1_margin == doctest::Approx(-0.5).epsilon(1e-3));
}

TEST_CASE("infeasible start triggers phase one and still finds the optimum") {
    // diag(y - 2, 5 - y) is infeasible at y = 0
    const auto p = make_problem({-1.0}, {{mat2(-2, 0, 0, 5), {mat2(1, 0, 0, -1)}}});
    const auto sol = sdp::solve(p);
    REQUIRE(sol.status == sdp::Status::optimal);
    CHECK(sol.y(0) == doctest::Approx(5.0).epsilon(1e-5));
    CHECK(sol.stage_objectives.size() >= 2);
}

TEST_CASE("iteration budget is enforced") {
    sdp::Options o;
    o.max_iter = 3;
    const auto sol = sdp::solve(sdp_catalog()[7].problem, o);
    CHECK(sol.status == sdp::Status::max_iter);
    CHECK(sol.iterations <= 3);
}

TEST_CASE("problem validation") {
    auto p = make_problem({1.0}, {{mat2(0, 1, 0, 0), {mat2(1, 0, 0, 1)}}});
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = make_problem({1.0, 1.0}, {{mat2(0, 1, 1, 0), {mat2(1, 0, 0, 1)}}});
    CHECK_THROWS_AS(p.validate(), ConfigError);
    // variable 1 appears in no block: objective unbounded
    p = make_problem({1.0, 1.0}, {{mat2(0, 1, 1, 0), {mat2(1, 0, 0, 1), Matrix::Zero(2, 2)}}});
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("problem text format round trip is exact") {
    for (const auto& cp : sdp_catalog()) {
        std::stringstream ss;
        sdp::write_problem(ss, cp.problem);
        const auto back = sdp::read_problem(ss);
        REQUIRE(back.num_vars == cp.problem.num_vars);
        CHECK(back.objective == cp.problem.objective);
        REQUIRE(back.blocks.size() == cp.problem.blocks.size());
        for (std::size_t k = 0; k < back.blocks.size(); ++k) {
            CHECK(back.blocks[k].f0 == cp.problem.blocks[k].f0);
            for (std::size_t i = 0; i < back.blocks[k].coeffs.size(); ++i)
                CHECK(back.blocks[k].coeffs[i] == cp.problem.blocks[k].coeffs[i]);
        }
    }
    std::stringstream bad("flowobs-sdp 1\nnum_vars x\n");
    CHECK_THROWS(sdp::read_problem(bad));
}

TEST_CASE("status strings") {
    CHECK(sdp::to_string(sdp::Status::optimal) == "optimal");
    CHECK(sdp::to_string(sdp::Status::infeasible) == "infeasible");
}
