#pragma once

// Parametric crossover model and the augmented state-space representation
// used by the observer: the battery states are extended with the crossover
// parameter theta and an l-th order pure integrator chain that drives it.

#include <vector>

#include "flowobs/battery_model.hpp"
#include "flowobs/linalg.hpp"

namespace flowobs {

struct CrossoverModelConfig {
    int order_l = 3;
    std::vector<double> lambda{0.5, 0.025};   // l-1 integrator gains
    double varrho = 1e-4;                     // transformation scale

    void validate() const;
    int state_dim() const { return order_l + 2; }
};

// x = [SOC, SOC_cell, theta, omega_2, ..., omega_l]
class AugmentedState {
public:
    AugmentedState() = default;
    AugmentedState(const BatteryState& z, const std::vector<double>& omega);
    explicit AugmentedState(Vector x);

    static AugmentedState zero(int order_l);

    const Vector& vector() const { return x_; }
    Vector& vector() { return x_; }
    int order_l() const { return static_cast<int>(x_.size()) - 2; }

    BatteryState battery() const { return {x_(0), x_(1)}; }
    double theta() const { return x_(2); }
    double omega(int i) const { return x_(2 + i); }   // omega(0) == theta

private:
    Vector x_;
};

struct AugmentedMatrices {
    Matrix a_e;
    Vector b_e;
    RowVector c_e;
    Vector e_e;
};

// Diagonal similarity transform [1, 1, psi/varrho, ..., psi/varrho].
struct TransformT {
    double psi_val = 1.0;
    double varrho = 1.0;
    Vector diag;

    Vector inverse_diag() const { return diag.cwiseInverse(); }
    Matrix matrix() const { return diag.asDiagonal(); }
    Matrix inverse() const { return inverse_diag().asDiagonal(); }
};

// Bounds of the analysis. Defaults follow from psi and the SOC range;
// the remaining ones are user-supplied diagnostics.
struct BoundSet {
    double gamma_z = 1.4142135623730951;   // sqrt(2): both SOCs in [0,1]
    double gamma_theta = 0.0;
    double gamma_omega = 0.0;
    double eps_bar = 0.0;
    double gamma_psi = 1.0;
    double gamma_psi_tilde = 0.5;          // Lipschitz constant of psi
    double gamma_s_tilde = 1.0;            // s = SOC_cell
    double gamma_t = 0.0;
    double tau_m = 1.0;
    double tau_m_upper = 1.0;              // tau_M

    void validate() const;
    // tau_m = min(1, 0.5/varrho), tau_M = max(1, 1/varrho) for psi in [0.5, 1].
    static BoundSet defaults_for(double varrho);
};

// l x l matrix with lambda on the superdiagonal.
Matrix build_lambda_matrix(const CrossoverModelConfig& cfg);

// 0.5 * (1 + clamp(s, 0, 1)); always within [0.5, 1].
double psi(double s_hat);

// |d psi / ds| on the clamped domain (0 outside [0,1]).
double psi_slope(double s_hat);

// Matrices of the augmented model for a given psi value and flow rate.
AugmentedMatrices build_augmented(double psi_val, double q, const BatteryParams& p,
                                  const CrossoverModelConfig& cfg);

TransformT build_transform(double psi_val, const CrossoverModelConfig& cfg);

// The psi-independent system matrix T A_e T^{-1}, affine in the flow rate.
Matrix transformed_system_matrix(double q, const BatteryParams& p, const CrossoverModelConfig& cfg);

struct PolytopeVertices {
    Matrix at_q_min;
    Matrix at_q_max;
};

PolytopeVertices polytope_vertices(double q_min, double q_max, const BatteryParams& p,
                                   const CrossoverModelConfig& cfg);

// Weight of the q_min vertex for a flow rate inside [q_min, q_max].
double polytope_weight(double q, double q_min, double q_max);

inline double crossover_estimate(double psi_val, double theta) { return psi_val * theta; }

// Column E of the battery model multiplying the crossover flux.
Vector crossover_input_vector(const BatteryParams& p);

// Upper bound of the uncompensated disturbance for compensation split sigma.
double delta_bar(const BoundSet& bounds, double sigma, double gamma_e);

}  // namespace flowobs
