#include "flowobs/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <istream>
#include <ostream>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "flowobs/io.hpp"
#include "flowobs/symmetric_eigen.hpp"

namespace flowobs {

void SynthesisConfig::validate() const {
    params.validate();
    cfg.validate();
    if (!(std::isfinite(beta) && beta > 0.0)) throw ConfigError("synthesis.beta must be > 0");
    if (!(std::isfinite(kappa_z) && kappa_z >= 0.0)) throw ConfigError("synthesis.kappa_z must be >= 0");
    if (!(std::isfinite(q_min) && q_min > 0.0)) throw ConfigError("synthesis.q_min must be > 0");
    if (!(std::isfinite(q_max) && q_min < q_max)) throw ConfigError("synthesis.q_min must be < synthesis.q_max");
    if (!(std::isfinite(feas_margin) && feas_margin >= 0.0))
        throw ConfigError("synthesis.feas_margin must be >= 0");
    if (!(definiteness_floor > 0.0)) throw ConfigError("synthesis.definiteness_floor must be > 0");
    if (!(gamma_z_cap > 0.0)) throw ConfigError("synthesis.gamma_z_cap must be > 0");
}

Matrix VariableLayout::sym_basis(int k) const {
    int idx = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j, ++idx) {
            if (idx == k) {
                Matrix b = Matrix::Zero(n, n);
                b(i, j) = 1.0;
                b(j, i) = 1.0;
                return b;
            }
        }
    }
    throw ConfigError("symmetric basis index out of range");
}

Matrix VariableLayout::unpack_sym(const Vector& y, int offset) const {
    Matrix m(n, n);
    int idx = offset;
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j, ++idx) {
            m(i, j) = y(idx);
            m(j, i) = y(idx);
        }
    }
    return m;
}

Vector VariableLayout::pack(const Matrix& p, const Vector& z, const Matrix& w, double alpha_bar,
                            double gamma_z) const {
    Vector y(count());
    int idx = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) y(p_offset() + idx++) = p(i, j);
    y.segment(z_offset(), n) = z;
    idx = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) y(w_offset() + idx++) = w(i, j);
    y(alpha_index()) = alpha_bar;
    y(gamma_index()) = gamma_z;
    return y;
}

Matrix battery_selector(int state_dim) {
    Matrix s = Matrix::Zero(state_dim, state_dim);
    s(0, 0) = 1.0;
    s(1, 1) = 1.0;
    return s;
}

sdp::Block assemble_vertex_block(const Matrix& script_a, const RowVector& c_e, double beta,
                                 const VariableLayout& layout) {
    const int n = layout.n;
    if (script_a.rows() != n || script_a.cols() != n || c_e.size() != n)
        throw ConfigError("vertex block: dimension mismatch between system matrix, output row and layout");

    sdp::Block b;
    b.f0 = Matrix::Zero(2 * n, 2 * n);
    b.f0.topLeftCorner(n, n) = -beta * battery_selector(n);
    b.coeffs.assign(static_cast<std::size_t>(layout.count()), Matrix::Zero(2 * n, 2 * n));

    for (int k = 0; k < layout.sym_count(); ++k) {
        const Matrix e = layout.sym_basis(k);
        Matrix& cp = b.coeffs[static_cast<std::size_t>(layout.p_offset() + k)];
        cp.topLeftCorner(n, n) = -script_a.transpose() * e - e * script_a;
        cp.topRightCorner(n, n) = e;
        cp.bottomLeftCorner(n, n) = e;
        b.coeffs[static_cast<std::size_t>(layout.w_offset() + k)].topLeftCorner(n, n) = -e;
    }
    for (int j = 0; j < n; ++j) {
        Vector ej = Vector::Unit(n, j);
        Matrix& cz = b.coeffs[static_cast<std::size_t>(layout.z_offset() + j)];
        cz.topLeftCorner(n, n) = c_e.transpose() * ej.transpose() + ej * c_e;
    }
    b.coeffs[static_cast<std::size_t>(layout.alpha_index())].bottomRightCorner(n, n) = Matrix::Identity(n, n);
    return b;
}

Matrix evaluate_vertex_block(const Matrix& script_a, const RowVector& c_e, const Matrix& p,
                             const Vector& z, const Matrix& w, double beta, double alpha_bar) {
    const auto n = script_a.rows();
    Matrix m(2 * n, 2 * n);
    m.topLeftCorner(n, n) = -script_a.transpose() * p - p * script_a + c_e.transpose() * z.transpose() +
                            z * c_e - beta * battery_selector(static_cast<int>(n)) - w;
    m.topRightCorner(n, n) = p;
    m.bottomLeftCorner(n, n) = p;
    m.bottomRightCorner(n, n) = alpha_bar * Matrix::Identity(n, n);
    return m;
}

namespace {

RowVector output_row(int n) {
    RowVector c = RowVector::Zero(n);
    c(1) = 1.0;
    return c;
}

sdp::Block scalar_block(const VariableLayout& layout, int var, double f0, double coeff) {
    sdp::Block b;
    b.f0 = Matrix::Constant(1, 1, f0);
    b.coeffs.assign(static_cast<std::size_t>(layout.count()), Matrix::Zero(1, 1));
    b.coeffs[static_cast<std::size_t>(var)](0, 0) = coeff;
    return b;
}

// X - floor * I >= 0 for a symmetric matrix variable stored at `offset`.
sdp::Block floor_block(const VariableLayout& layout, int offset, double floor) {
    const int n = layout.n;
    sdp::Block b;
    b.f0 = -floor * Matrix::Identity(n, n);
    b.coeffs.assign(static_cast<std::size_t>(layout.count()), Matrix::Zero(n, n));
    for (int k = 0; k < layout.sym_count(); ++k)
        b.coeffs[static_cast<std::size_t>(offset + k)] = layout.sym_basis(k);
    return b;
}

}  // namespace

sdp::Problem build_synthesis_problem(const SynthesisConfig& config) {
    config.validate();
    const int n = config.state_dim();
    const VariableLayout layout(n);
    const RowVector c_e = output_row(n);
    const auto vertices = polytope_vertices(config.q_min, config.q_max, config.params, config.cfg);

    sdp::Problem prob;
    prob.num_vars = layout.count();
    prob.objective = Vector::Zero(layout.count());
    prob.objective(layout.alpha_index()) = 1.0;
    prob.objective(layout.gamma_index()) = config.kappa_z;

    prob.blocks.push_back(assemble_vertex_block(vertices.at_q_min, c_e, config.beta, layout));
    prob.blocks.push_back(assemble_vertex_block(vertices.at_q_max, c_e, config.beta, layout));

    // [gamma_z I, Z; Z^T, gamma_z] >= 0
    sdp::Block zb;
    zb.f0 = Matrix::Zero(n + 1, n + 1);
    zb.coeffs.assign(static_cast<std::size_t>(layout.count()), Matrix::Zero(n + 1, n + 1));
    zb.coeffs[static_cast<std::size_t>(layout.gamma_index())] = Matrix::Identity(n + 1, n + 1);
    for (int j = 0; j < n; ++j) {
        Matrix& c = zb.coeffs[static_cast<std::size_t>(layout.z_offset() + j)];
        c(j, n) = 1.0;
        c(n, j) = 1.0;
    }
    prob.blocks.push_back(std::move(zb));

    prob.blocks.push_back(floor_block(layout, layout.p_offset(), config.definiteness_floor));
    prob.blocks.push_back(floor_block(layout, layout.w_offset(), config.definiteness_floor));
    prob.blocks.push_back(scalar_block(layout, layout.alpha_index(), 0.0, 1.0));
    prob.blocks.push_back(scalar_block(layout, layout.gamma_index(), 0.0, 1.0));
    if (config.kappa_z == 0.0) {
        // gamma_z has no cost; bound it so the barrier stays bounded below.
        prob.blocks.push_back(scalar_block(layout, layout.gamma_index(), config.gamma_z_cap, -1.0));
    }
    return prob;
}

SynthesisResult synthesize(const SynthesisConfig& config) {
    const sdp::Problem prob = build_synthesis_problem(config);
    const auto sol = sdp::solve(prob, config.solver);
    if (sol.status == sdp::Status::infeasible) {
        throw SynthesisInfeasible("polytopic LMI is infeasible: " + sol.message, sol.phase1_margin);
    }
    if (sol.status != sdp::Status::optimal) {
        throw SynthesisNumericalError("SDP solver ended with status " + sdp::to_string(sol.status) + ": " +
                                          sol.message + " after " + std::to_string(sol.iterations) +
                                          " Newton steps",
                                      sol.stage_objectives);
    }

    const int n = config.state_dim();
    const VariableLayout layout(n);
    SynthesisResult r;
    r.p_mat = layout.unpack_sym(sol.y, layout.p_offset());
    r.z_vec = sol.y.segment(layout.z_offset(), n);
    r.w_mat = layout.unpack_sym(sol.y, layout.w_offset());
    r.alpha_bar = sol.y(layout.alpha_index());
    r.gamma_z_norm = sol.y(layout.gamma_index());
    r.gain_factor = r.p_mat.llt().solve(r.z_vec);
    r.vertex_margins = sol.min_eig_per_block.head(2);
    r.objective = sol.objective_value;
    r.iterations = sol.iterations;
    r.solver_status = sdp::to_string(sol.status);
    return r;
}

CertificateReport verify_solution(const SynthesisResult& result, const SynthesisConfig& config,
                                  int n_samples) {
    config.validate();
    const int n = config.state_dim();
    if (result.state_dim() != n || result.z_vec.size() != n || result.w_mat.rows() != n ||
        result.gain_factor.size() != n) {
        throw ConfigError("synthesis result dimension " + std::to_string(result.state_dim()) +
                          " does not match configured state dimension " + std::to_string(n));
    }
    if (n_samples < 2) throw ConfigError("verification needs at least 2 flow samples");

    CertificateReport rep;
    const RowVector c_e = output_row(n);
    const double threshold = config.feas_margin - kBlockTolerance;
    rep.min_eig_p = min_eig(result.p_mat);
    rep.min_eig_w = min_eig(result.w_mat);
    if (!(rep.min_eig_p > 0.0)) rep.failures.push_back("P is not positive definite");
    if (!(rep.min_eig_w > 0.0)) rep.failures.push_back("W is not positive definite");

    const Vector gain = result.p_mat.fullPivLu().solve(result.z_vec);
    for (int s = 0; s < n_samples; ++s) {
        const double q = (s + 1 == n_samples)
                             ? config.q_max
                             : config.q_min + (config.q_max - config.q_min) * s / (n_samples - 1);
        const Matrix a = transformed_system_matrix(q, config.params, config.cfg);
        FlowSampleCheck chk;
        chk.q = q;
        chk.block_margin = min_eig(evaluate_vertex_block(a, c_e, result.p_mat, result.z_vec, result.w_mat,
                                                         config.beta, result.alpha_bar));
        const Matrix riccati = -a.transpose() * result.p_mat - result.p_mat * a +
                               c_e.transpose() * result.z_vec.transpose() + result.z_vec * c_e -
                               config.beta * battery_selector(n) - result.w_mat -
                               result.p_mat * result.p_mat / result.alpha_bar;
        chk.riccati_margin = min_eig(riccati);
        const Matrix closed = a - gain * c_e;
        Eigen::EigenSolver<Matrix> es(closed, false);
        chk.spectral_abscissa = es.eigenvalues().real().maxCoeff();

        std::ostringstream where;
        where << "Q=" << format_double(q) << " L/min";
        if (chk.block_margin < threshold)
            rep.failures.push_back("LMI block margin " + format_double(chk.block_margin) + " at " + where.str());
        if (!(chk.spectral_abscissa < 0.0))
            rep.failures.push_back("closed loop not Hurwitz (abscissa " + format_double(chk.spectral_abscissa) +
                                   ") at " + where.str());
        rep.samples.push_back(chk);
    }
    rep.passed = rep.failures.empty();
    return rep;
}

Vector gain_at(const SynthesisResult& result, const TransformT& t_transform) {
    if (t_transform.diag.size() != result.gain_factor.size())
        throw ConfigError("transform dimension does not match gain dimension");
    return result.gain_factor.cwiseQuotient(t_transform.diag);
}

EuubReport euub_report(const SynthesisResult& result, const SynthesisConfig& config,
                       const BoundSet& bounds, const EuubOptions& options) {
    bounds.validate();
    auto in_unit = [](double v) { return v > 0.0 && v <= 1.0; };
    if (!in_unit(options.rho) || !in_unit(options.mu)) throw DomainError("rho and mu must lie in (0, 1]");
    if (!(options.r >= 0.0)) throw DomainError("r must be >= 0");

    EuubReport rep;
    const auto pe = sym_eig(result.p_mat);
    rep.c_m = pe.values(0);
    rep.c_big_m = pe.values(pe.values.size() - 1);
    rep.c_w = min_eig(result.w_mat);
    rep.rho = options.rho;
    rep.mu = options.mu;
    rep.gamma_e = crossover_input_vector(config.params).norm();
    rep.delta_bar = delta_bar(bounds, options.sigma, rep.gamma_e);
    rep.c_bar = rep.c_w - 2.0 * options.rho * bounds.gamma_t * rep.c_big_m;
    rep.delta_cap = rep.delta_bar + (1.0 - options.rho) * bounds.gamma_t * options.r;
    rep.gamma = options.sigma * rep.gamma_e * bounds.gamma_theta * bounds.gamma_psi_tilde * bounds.gamma_s_tilde;
    rep.alpha_beta_admissible = config.beta / result.alpha_bar >= rep.gamma * rep.gamma;

    if (!(rep.c_bar > 0.0) || !(rep.c_m > 0.0)) {
        rep.valid = false;
        rep.note = "c_bar <= 0: gamma_T exceeds c_W / (2 rho c_M)";
        return rep;
    }
    const double kappa_p = rep.c_big_m / rep.c_m;
    rep.r_delta = 2.0 * rep.c_big_m * rep.delta_cap / (options.mu * rep.c_bar);
    rep.r_xtilde = std::sqrt(kappa_p) * (rep.c_big_m / bounds.tau_m) * (2.0 / (options.mu * rep.c_bar)) * rep.delta_cap;
    rep.decay_rate = (1.0 - options.mu) * rep.c_bar / (2.0 * rep.c_big_m);
    rep.valid = true;
    return rep;
}

namespace {

void write_matrix(std::ostream& out, const std::string& name, const Matrix& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << format_double(m(i, j));
        out << '\n';
    }
}

void write_vector(std::ostream& out, const std::string& name, const Vector& v) {
    out << name << ' ' << v.size() << '\n';
    for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? " " : "") << format_double(v(i));
    out << '\n';
}

class TokenReader {
public:
    explicit TokenReader(std::istream& in) : in_(in) {}

    std::string word() {
        std::string tok;
        if (!(in_ >> tok)) throw IngestError("gain file: unexpected end of file");
        return tok;
    }
    void expect(const std::string& w) {
        const auto tok = word();
        if (tok != w) throw IngestError("gain file: expected '" + w + "' but found '" + tok + "'");
    }
    double number(const std::string& field) { return parse_double(word(), "gain file field " + field); }
    Eigen::Index size(const std::string& field) {
        const double v = number(field);
        if (v < 0 || v != std::floor(v) || v > 1e6) throw IngestError("gain file: bad size for " + field);
        return static_cast<Eigen::Index>(v);
    }
    Matrix matrix(const std::string& name) {
        expect(name);
        const auto r = size(name);
        const auto c = size(name);
        Matrix m(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) m(i, j) = number(name);
        return m;
    }
    Vector vector(const std::string& name) {
        expect(name);
        const auto r = size(name);
        Vector v(r);
        for (Eigen::Index i = 0; i < r; ++i) v(i) = number(name);
        return v;
    }

private:
    std::istream& in_;
};

}  // namespace

void write_synthesis_result(std::ostream& out, const SynthesisResult& r) {
    out << "flowobs-gain 1\n";
    out << "dim " << r.state_dim() << '\n';
    out << "status " << r.solver_status << '\n';
    out << "alpha_bar " << format_double(r.alpha_bar) << '\n';
    out << "gamma_z_norm " << format_double(r.gamma_z_norm) << '\n';
    out << "objective " << format_double(r.objective) << '\n';
    out << "iterations " << r.iterations << '\n';
    write_matrix(out, "p_mat", r.p_mat);
    write_vector(out, "z_vec", r.z_vec);
    write_matrix(out, "w_mat", r.w_mat);
    write_vector(out, "gain_factor", r.gain_factor);
    write_vector(out, "vertex_margins", r.vertex_margins);
}

SynthesisResult read_synthesis_result(std::istream& in) {
    TokenReader tr(in);
    tr.expect("flowobs-gain");
    if (tr.number("version") != 1.0) throw IngestError("gain file: unsupported version");
    SynthesisResult r;
    tr.expect("dim");
    const auto n = tr.size("dim");
    if (n < 3) throw IngestError("gain file: dim must be >= 3");
    tr.expect("status");
    r.solver_status = tr.word();
    tr.expect("alpha_bar");
    r.alpha_bar = tr.number("alpha_bar");
    tr.expect("gamma_z_norm");
    r.gamma_z_norm = tr.number("gamma_z_norm");
    tr.expect("objective");
    r.objective = tr.number("objective");
    tr.expect("iterations");
    r.iterations = static_cast<int>(tr.size("iterations"));
    r.p_mat = tr.matrix("p_mat");
    r.z_vec = tr.vector("z_vec");
    r.w_mat = tr.matrix("w_mat");
    r.gain_factor = tr.vector("gain_factor");
    r.vertex_margins = tr.vector("vertex_margins");
    auto square = [n](const Matrix& m) { return m.rows() == n && m.cols() == n; };
    if (!square(r.p_mat) || !square(r.w_mat) || r.z_vec.size() != n || r.gain_factor.size() != n)
        throw IngestError("gain file: matrix sizes disagree with dim " + std::to_string(n));
    return r;
}

}  // namespace flowobs
