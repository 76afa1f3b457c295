#pragma once

// Dense solver for small semidefinite programs in LMI form:
//
//   minimize  c^T y
//   s.t.      F0^k + sum_i y_i Fi^k  >= 0   for every block k.
//
// Two-phase log-barrier path following with damped Newton steps. Intended
// for problems with a few dozen variables and blocks up to ~12 x 12.

#include <iosfwd>
#include <string>
#include <vector>

#include "flowobs/linalg.hpp"

namespace flowobs::sdp {

struct Block {
    Matrix f0;
    std::vector<Matrix> coeffs;   // one per decision variable

    Eigen::Index dim() const { return f0.rows(); }
};

struct Problem {
    int num_vars = 0;
    Vector objective;
    std::vector<Block> blocks;

    // Checks sizes and symmetry (1e-12). Throws ConfigError.
    void validate() const;
    Matrix evaluate(std::size_t block, const Vector& y) const;
    int total_dim() const;
};

enum class Status { optimal, infeasible, max_iter, numerical };

std::string to_string(Status s);

struct Options {
    double feas_tol = 1e-7;
    double gap_tol = 1e-6;
    int max_iter = 200;          // Newton steps across both phases
    double mu_initial = 1.0;
    double mu_factor = 10.0;
    double centering_tol = 1e-9;   // lambda^2 / 2 threshold per barrier stage
    double phase1_box = 1e6;       // |y_i| bound while searching for a feasible start
    double armijo = 0.01;
    double backtrack = 0.5;
};

struct Solution {
    Vector y;
    Status status = Status::numerical;
    double objective_value = 0.0;
    Vector min_eig_per_block;
    int iterations = 0;
    double duality_gap_estimate = 0.0;
    // Best margin found by the feasibility phase (max t with F(y) - tI >= 0).
    double phase1_margin = 0.0;
    // c^T y after each completed barrier stage.
    std::vector<double> stage_objectives;
    std::string message;
};

Solution solve(const Problem& problem, const Options& options = {});

// Plain-text dump: header with sizes, then every matrix row-major.
void write_problem(std::ostream& out, const Problem& problem);
Problem read_problem(std::istream& in);

}  // namespace flowobs::sdp
