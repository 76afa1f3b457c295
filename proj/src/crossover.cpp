#include "flowobs/crossover.hpp"

#include <algorithm>
#include <cmath>

#include "flowobs/error.hpp"

namespace flowobs {

void CrossoverModelConfig::validate() const {
    if (order_l < 1) throw ConfigError("crossover.order_l must be >= 1");
    if (static_cast<int>(lambda.size()) != order_l - 1)
        throw ConfigError("crossover.lambda must hold order_l - 1 gains");
    for (double v : lambda) {
        if (!(std::isfinite(v) && v > 0.0)) throw ConfigError("crossover.lambda entries must be > 0");
    }
    if (!(std::isfinite(varrho) && varrho > 0.0)) throw ConfigError("crossover.varrho must be > 0");
}

AugmentedState::AugmentedState(const BatteryState& z, const std::vector<double>& omega)
    : x_(static_cast<Eigen::Index>(omega.size()) + 2) {
    if (omega.empty()) throw ConfigError("augmented state needs at least theta");
    x_(0) = z.soc;
    x_(1) = z.soc_cell;
    for (std::size_t i = 0; i < omega.size(); ++i) x_(static_cast<Eigen::Index>(i) + 2) = omega[i];
}

AugmentedState::AugmentedState(Vector x) : x_(std::move(x)) {
    if (x_.size() < 3) throw ConfigError("augmented state needs dimension >= 3");
}

AugmentedState AugmentedState::zero(int order_l) {
    return AugmentedState(Vector::Zero(order_l + 2));
}

void BoundSet::validate() const {
    const double all[] = {gamma_z,         gamma_theta,   gamma_omega, eps_bar, gamma_psi,
                          gamma_psi_tilde, gamma_s_tilde, gamma_t,     tau_m,   tau_m_upper};
    for (double v : all) {
        if (!(std::isfinite(v) && v >= 0.0)) throw ConfigError("bounds must be finite and >= 0");
    }
    if (tau_m > tau_m_upper) throw ConfigError("bounds.tau_m must not exceed bounds.tau_M");
}

BoundSet BoundSet::defaults_for(double varrho) {
    BoundSet b;
    b.tau_m = std::min(1.0, 0.5 / varrho);
    b.tau_m_upper = std::max(1.0, 1.0 / varrho);
    return b;
}

Matrix build_lambda_matrix(const CrossoverModelConfig& cfg) {
    cfg.validate();
    const int l = cfg.order_l;
    Matrix m = Matrix::Zero(l, l);
    for (int i = 0; i + 1 < l; ++i) m(i, i + 1) = cfg.lambda[static_cast<std::size_t>(i)];
    return m;
}

double psi(double s_hat) {
    if (std::isnan(s_hat)) throw DomainError("psi of NaN");
    return 0.5 * (1.0 + std::clamp(s_hat, 0.0, 1.0));
}

double psi_slope(double s_hat) {
    return (s_hat >= 0.0 && s_hat <= 1.0) ? 0.5 : 0.0;
}

Vector crossover_input_vector(const BatteryParams& p) {
    Vector e(2);
    e << -1.0 / (p.c0 * p.v_res), -1.0 / (p.epsilon * p.c0 * p.v_cell);
    return e;
}

namespace {

// Shared layout of A_e and its transformed counterpart: only the coupling
// between theta and the battery states differs.
Matrix assemble_system(double q, const Vector& coupling, const BatteryParams& p,
                       const CrossoverModelConfig& cfg) {
    const int l = cfg.order_l;
    const int n = l + 2;
    Matrix a = Matrix::Zero(n, n);
    const double mix = p.mixing_rate(q);
    a(1, 0) = mix;
    a(1, 1) = -mix;
    a(0, 2) = coupling(0);
    a(1, 2) = coupling(1);
    a.block(2, 2, l, l) = build_lambda_matrix(cfg);
    return a;
}

void check_flow(double q) {
    if (!(std::isfinite(q) && q > 0.0)) throw DomainError("flow rate must be finite and > 0");
}

}  // namespace

AugmentedMatrices build_augmented(double psi_val, double q, const BatteryParams& p,
                                  const CrossoverModelConfig& cfg) {
    p.validate();
    cfg.validate();
    check_flow(q);
    if (!(std::isfinite(psi_val) && psi_val > 0.0)) throw DomainError("psi value must be > 0");

    const int n = cfg.state_dim();
    const Vector e = crossover_input_vector(p);
    AugmentedMatrices m;
    m.a_e = assemble_system(q, e * psi_val, p, cfg);
    m.b_e = Vector::Zero(n);
    m.b_e(0) = e(0) / p.constants.faraday;
    m.b_e(1) = e(1) / p.constants.faraday;
    m.c_e = RowVector::Zero(n);
    m.c_e(1) = 1.0;
    m.e_e = Vector::Zero(n);
    m.e_e.head(2) = e;
    return m;
}

TransformT build_transform(double psi_val, const CrossoverModelConfig& cfg) {
    cfg.validate();
    if (!std::isfinite(psi_val) || psi_val == 0.0) throw DomainError("singular transform: psi value is 0");
    TransformT t;
    t.psi_val = psi_val;
    t.varrho = cfg.varrho;
    t.diag = Vector::Constant(cfg.state_dim(), psi_val / cfg.varrho);
    t.diag(0) = 1.0;
    t.diag(1) = 1.0;
    return t;
}

Matrix transformed_system_matrix(double q, const BatteryParams& p, const CrossoverModelConfig& cfg) {
    p.validate();
    cfg.validate();
    check_flow(q);
    return assemble_system(q, crossover_input_vector(p) * cfg.varrho, p, cfg);
}

PolytopeVertices polytope_vertices(double q_min, double q_max, const BatteryParams& p,
                                   const CrossoverModelConfig& cfg) {
    if (!(q_min > 0.0 && q_min < q_max)) throw ConfigError("flow range requires 0 < q_min < q_max");
    return {transformed_system_matrix(q_min, p, cfg), transformed_system_matrix(q_max, p, cfg)};
}

double polytope_weight(double q, double q_min, double q_max) {
    return (q_max - q) / (q_max - q_min);
}

double delta_bar(const BoundSet& bounds, double sigma, double gamma_e) {
    bounds.validate();
    if (!(sigma >= 0.0 && sigma <= 1.0)) throw DomainError("sigma must lie in [0, 1]");
    const double compensable = bounds.gamma_psi_tilde * bounds.gamma_s_tilde * bounds.gamma_z *
                               std::max(bounds.gamma_z, bounds.gamma_omega) * (1.0 - sigma);
    return bounds.tau_m_upper * gamma_e * (compensable + bounds.eps_bar);
}

}  // namespace flowobs
