#pragma once

// Polytopic LMI synthesis of the observer gain factor P^{-1} Z.
//
//   minimize   alpha_bar + kappa_z * gamma_z
//   subject to, at both flow-rate vertices A_i,
//     [ -A_i^T P - P A_i + C^T Z^T + Z C - beta*Ibar - W    P              ]
//     [  P                                                  alpha_bar * I  ]  >= 0
//     [ gamma_z I   Z       ]
//     [ Z^T         gamma_z ]  >= 0,   P >= eps I,  W >= eps I,  alpha_bar > 0.
//
// Ibar selects the two battery states.

#include <iosfwd>
#include <string>
#include <vector>

#include "flowobs/battery_model.hpp"
#include "flowobs/crossover.hpp"
#include "flowobs/error.hpp"
#include "flowobs/linalg.hpp"
#include "flowobs/sdp.hpp"

namespace flowobs {

struct SynthesisConfig {
    double beta = 1e-4;
    double kappa_z = 0.01;
    double q_min = 0.25 * 0.009;   // L/min
    double q_max = 2.0 * 0.009;    // L/min
    double feas_margin = 0.0;      // extra eigenvalue slack demanded by verification
    double definiteness_floor = 1e-9;
    double gamma_z_cap = 1e6;      // only emitted when kappa_z == 0
    CrossoverModelConfig cfg{};
    BatteryParams params{};
    sdp::Options solver{};

    void validate() const;
    int state_dim() const { return cfg.state_dim(); }
};

struct SynthesisResult {
    Matrix p_mat;
    Vector z_vec;
    Matrix w_mat;
    double alpha_bar = 0.0;
    double gamma_z_norm = 0.0;
    Vector gain_factor;          // P^{-1} Z
    Vector vertex_margins;       // min eigenvalue of each vertex block
    double objective = 0.0;
    int iterations = 0;
    std::string solver_status = "optimal";

    int state_dim() const { return static_cast<int>(p_mat.rows()); }
};

// Solver reported infeasibility; carries the best feasibility margin found.
class SynthesisInfeasible : public Error {
public:
    SynthesisInfeasible(const std::string& what, double margin) : Error(what), margin_(margin) {}
    double phase1_margin() const noexcept { return margin_; }

private:
    double margin_;
};

// Solver stalled or ran out of iterations.
class SynthesisNumericalError : public Error {
public:
    SynthesisNumericalError(const std::string& what, std::vector<double> trace)
        : Error(what), trace_(std::move(trace)) {}
    const std::vector<double>& stage_objectives() const noexcept { return trace_; }

private:
    std::vector<double> trace_;
};

// Index map from (P, Z, W, alpha_bar, gamma_z) to scalar SDP variables.
// Symmetric matrices use the upper-triangular basis; off-diagonal basis
// matrices carry both symmetric entries.
struct VariableLayout {
    int n = 0;

    explicit VariableLayout(int state_dim) : n(state_dim) {}
    int sym_count() const { return n * (n + 1) / 2; }
    int p_offset() const { return 0; }
    int z_offset() const { return sym_count(); }
    int w_offset() const { return sym_count() + n; }
    int alpha_index() const { return 2 * sym_count() + n; }
    int gamma_index() const { return alpha_index() + 1; }
    int count() const { return gamma_index() + 1; }

    Matrix sym_basis(int k) const;                       // k in [0, sym_count)
    Matrix unpack_sym(const Vector& y, int offset) const;
    Vector pack(const Matrix& p, const Vector& z, const Matrix& w, double alpha_bar, double gamma_z) const;
};

// Ibar = diag(1, 1, 0, ..., 0).
Matrix battery_selector(int state_dim);

// Affine coefficients of the 2n x 2n vertex block in the scalar variables.
sdp::Block assemble_vertex_block(const Matrix& script_a, const RowVector& c_e, double beta,
                                 const VariableLayout& layout);

// The same block evaluated at concrete values, used for verification.
Matrix evaluate_vertex_block(const Matrix& script_a, const RowVector& c_e, const Matrix& p,
                             const Vector& z, const Matrix& w, double beta, double alpha_bar);

sdp::Problem build_synthesis_problem(const SynthesisConfig& config);

// Throws ConfigError, SynthesisInfeasible or SynthesisNumericalError.
SynthesisResult synthesize(const SynthesisConfig& config);

struct FlowSampleCheck {
    double q = 0.0;
    double block_margin = 0.0;        // min eigenvalue of the LMI block at A(q)
    double spectral_abscissa = 0.0;   // max real part of eig(A(q) - P^{-1} Z C)
    double riccati_margin = 0.0;      // min eig of the Schur-reduced inequality
};

struct CertificateReport {
    std::vector<FlowSampleCheck> samples;
    double min_eig_p = 0.0;
    double min_eig_w = 0.0;
    bool passed = false;
    std::vector<std::string> failures;
};

inline constexpr double kBlockTolerance = 1e-6;

// Re-checks the certificates on n_samples flow rates spanning [q_min, q_max].
CertificateReport verify_solution(const SynthesisResult& result, const SynthesisConfig& config,
                                  int n_samples);

// H_t = T^{-1} P^{-1} Z.
Vector gain_at(const SynthesisResult& result, const TransformT& t_transform);

struct EuubOptions {
    double rho = 0.5;
    double mu = 0.5;
    double r = 1.0;
    double sigma = 0.5;
};

struct EuubReport {
    double c_m = 0.0;
    double c_big_m = 0.0;   // c_M
    double c_w = 0.0;
    double c_bar = 0.0;
    double rho = 0.0;
    double mu = 0.0;
    double gamma_e = 0.0;
    double delta_bar = 0.0;
    double delta_cap = 0.0;   // Delta
    double r_delta = 0.0;
    double r_xtilde = 0.0;
    double decay_rate = 0.0;  // 1/min
    double gamma = 0.0;       // sigma * gamma_E * gamma_theta * gamma_psi_tilde * gamma_s_tilde
    bool alpha_beta_admissible = false;   // beta / alpha_bar >= gamma^2
    bool valid = false;
    std::string note;
};

EuubReport euub_report(const SynthesisResult& result, const SynthesisConfig& config,
                       const BoundSet& bounds, const EuubOptions& options);

void write_synthesis_result(std::ostream& out, const SynthesisResult& result);
SynthesisResult read_synthesis_result(std::istream& in);

}  // namespace flowobs
