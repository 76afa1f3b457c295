#include "flowobs/sdp.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "flowobs/error.hpp"
#include "flowobs/symmetric_eigen.hpp"

namespace flowobs::sdp {

std::string to_string(Status s) {
    switch (s) {
        case Status::optimal: return "optimal";
        case Status::infeasible: return "infeasible";
        case Status::max_iter: return "max_iter";
        case Status::numerical: return "numerical";
    }
    return "unknown";
}

void Problem::validate() const {
    if (num_vars < 1) throw ConfigError("SDP needs at least one variable");
    if (objective.size() != num_vars) throw ConfigError("SDP objective length != num_vars");
    if (!objective.allFinite()) throw ConfigError("SDP objective has non-finite entries");
    if (blocks.empty()) throw ConfigError("SDP needs at least one block");
    std::vector<bool> used(static_cast<std::size_t>(num_vars), false);
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        const auto& b = blocks[k];
        const auto d = b.f0.rows();
        auto check_sym = [&](const Matrix& m, const std::string& what) {
            if (m.rows() != d || m.cols() != d)
                throw ConfigError("SDP block " + std::to_string(k) + ": " + what + " has wrong size");
            if (!m.allFinite())
                throw ConfigError("SDP block " + std::to_string(k) + ": " + what + " is non-finite");
            if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12)
                throw ConfigError("SDP block " + std::to_string(k) + ": " + what + " is not symmetric");
        };
        if (d < 1) throw ConfigError("SDP block " + std::to_string(k) + " is empty");
        check_sym(b.f0, "F0");
        if (static_cast<int>(b.coeffs.size()) != num_vars)
            throw ConfigError("SDP block " + std::to_string(k) + " needs one coefficient per variable");
        for (int i = 0; i < num_vars; ++i) {
            const auto& fi = b.coeffs[static_cast<std::size_t>(i)];
            check_sym(fi, "F" + std::to_string(i + 1));
            if (fi.cwiseAbs().maxCoeff() > 0.0) used[static_cast<std::size_t>(i)] = true;
        }
    }
    for (int i = 0; i < num_vars; ++i) {
        if (!used[static_cast<std::size_t>(i)])
            throw ConfigError("SDP variable " + std::to_string(i) + " appears in no block");
    }
}

Matrix Problem::evaluate(std::size_t block, const Vector& y) const {
    const auto& b = blocks.at(block);
    Matrix s = b.f0;
    for (int i = 0; i < num_vars; ++i) {
        if (y(i) != 0.0) s += y(i) * b.coeffs[static_cast<std::size_t>(i)];
    }
    return s;
}

int Problem::total_dim() const {
    int m = 0;
    for (const auto& b : blocks) m += static_cast<int>(b.dim());
    return m;
}

namespace {

// Barrier  mu * c^T y - sum_k log det F_k(y)  and its damped Newton minimizer.
class Barrier {
public:
    Barrier(const Problem& p, const Options& o) : p_(p), opt_(o) {
        nonzero_.resize(p.blocks.size());
        for (std::size_t k = 0; k < p.blocks.size(); ++k) {
            for (int i = 0; i < p.num_vars; ++i) {
                if (p.blocks[k].coeffs[static_cast<std::size_t>(i)].cwiseAbs().maxCoeff() > 0.0)
                    nonzero_[k].push_back(i);
            }
        }
    }

    enum class Outcome { centered, early_stop, budget, stalled };

    // Returns +inf when y is not strictly feasible.
    double value(const Vector& y, double mu) const {
        double v = mu * p_.objective.dot(y);
        for (std::size_t k = 0; k < p_.blocks.size(); ++k) {
            Eigen::LLT<Matrix> llt(p_.evaluate(k, y));
            if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
            const Vector diag = llt.matrixLLT().diagonal();
            for (Eigen::Index i = 0; i < diag.size(); ++i) {
                if (!(diag(i) > 0.0)) return std::numeric_limits<double>::infinity();
                v -= 2.0 * std::log(diag(i));
            }
        }
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    }

    void derivatives(const Vector& y, double mu, Vector& grad, Matrix& hess) const {
        const int n = p_.num_vars;
        grad = mu * p_.objective;
        hess = Matrix::Zero(n, n);
        std::vector<Matrix> g(static_cast<std::size_t>(n));
        for (std::size_t k = 0; k < p_.blocks.size(); ++k) {
            Eigen::LLT<Matrix> llt(p_.evaluate(k, y));
            const Matrix l = llt.matrixL();
            const auto& idx = nonzero_[k];
            for (int i : idx) {
                const Matrix x = l.triangularView<Eigen::Lower>().solve(p_.blocks[k].coeffs[static_cast<std::size_t>(i)]);
                g[static_cast<std::size_t>(i)] =
                    l.triangularView<Eigen::Lower>().solve(x.transpose()).transpose();
                grad(i) -= g[static_cast<std::size_t>(i)].trace();
            }
            for (std::size_t a = 0; a < idx.size(); ++a) {
                for (std::size_t b = a; b < idx.size(); ++b) {
                    const double h = g[static_cast<std::size_t>(idx[a])].cwiseProduct(g[static_cast<std::size_t>(idx[b])]).sum();
                    hess(idx[a], idx[b]) += h;
                    if (a != b) hess(idx[b], idx[a]) += h;
                }
            }
        }
    }

    // Damped Newton centering at fixed mu. `stop` is polled after every accepted step.
    Outcome center(Vector& y, double mu, int& iterations, const std::function<bool(const Vector&)>& stop,
                   double* last_decrement) const {
        Vector grad;
        Matrix hess;
        double f = value(y, mu);
        while (true) {
            derivatives(y, mu, grad, hess);
            // Diagonal scaling keeps the Newton system well conditioned when
            // variables live on very different scales.
            Vector d = hess.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
            const Matrix hs = d.asDiagonal() * hess * d.asDiagonal();
            Eigen::LDLT<Matrix> ldlt(hs);
            Vector step = -(d.asDiagonal() * ldlt.solve(d.asDiagonal() * grad));
            if (!step.allFinite()) return Outcome::stalled;
            const double dec2 = -grad.dot(step);
            if (last_decrement) *last_decrement = 0.5 * dec2;
            if (0.5 * dec2 <= opt_.centering_tol) return Outcome::centered;
            if (iterations >= opt_.max_iter) return Outcome::budget;

            double alpha = 1.0;
            double f_new = value(y + alpha * step, mu);
            while (!(f_new <= f - opt_.armijo * alpha * dec2)) {
                alpha *= opt_.backtrack;
                if (alpha < 1e-14) break;
                f_new = value(y + alpha * step, mu);
            }
            if (alpha < 1e-14) {
                // No decrease is representable any more; accept as centered
                // when the decrement is already small.
                return 0.5 * dec2 <= 1e-5 ? Outcome::centered : Outcome::stalled;
            }
            y += alpha * step;
            f = f_new;
            ++iterations;
            if (stop && stop(y)) return Outcome::early_stop;
        }
    }

private:
    const Problem& p_;
    const Options& opt_;
    std::vector<std::vector<int>> nonzero_;
};

double block_min_eig(const Problem& p, std::size_t k, const Vector& y) {
    return min_eig(p.evaluate(k, y));
}

// Feasibility problem in (y, t): maximize t s.t. F_k(y) - tI >= 0,
// |y_i| <= box, t <= 1.
Problem phase_one_problem(const Problem& p, double box) {
    const int n = p.num_vars;
    Problem q;
    q.num_vars = n + 1;
    q.objective = Vector::Zero(n + 1);
    q.objective(n) = -1.0;
    for (const auto& b : p.blocks) {
        Block nb;
        nb.f0 = b.f0;
        nb.coeffs = b.coeffs;
        nb.coeffs.push_back(-Matrix::Identity(b.dim(), b.dim()));
        q.blocks.push_back(std::move(nb));
    }
    Block boxb;
    boxb.f0 = box * Matrix::Identity(2 * n, 2 * n);
    for (int i = 0; i < n; ++i) {
        Matrix c = Matrix::Zero(2 * n, 2 * n);
        c(2 * i, 2 * i) = 1.0;
        c(2 * i + 1, 2 * i + 1) = -1.0;
        boxb.coeffs.push_back(c);
    }
    boxb.coeffs.push_back(Matrix::Zero(2 * n, 2 * n));
    q.blocks.push_back(std::move(boxb));
    Block cap;
    cap.f0 = Matrix::Constant(1, 1, 1.0);
    cap.coeffs.assign(static_cast<std::size_t>(n), Matrix::Zero(1, 1));
    cap.coeffs.push_back(Matrix::Constant(1, 1, -1.0));
    q.blocks.push_back(std::move(cap));
    return q;
}

}  // namespace

Solution solve(const Problem& problem, const Options& options) {
    problem.validate();
    const int n = problem.num_vars;
    const int m = problem.total_dim();
    Solution sol;
    sol.y = Vector::Zero(n);

    // Phase 1: strictly feasible start.
    const Problem p1 = phase_one_problem(problem, options.phase1_box);
    const Barrier b1(p1, options);
    Vector z(n + 1);
    z.head(n).setZero();
    double t0 = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < problem.blocks.size(); ++k) t0 = std::min(t0, block_min_eig(problem, k, z.head(n)));
    z(n) = std::min(t0, 0.0) - 1.0;

    auto feasible_enough = [&](const Vector& v) { return v(n) >= options.feas_tol; };
    double mu = options.mu_initial;
    const int m1 = p1.total_dim();
    bool found = t0 >= options.feas_tol;
    while (!found) {
        const auto out = b1.center(z, mu, sol.iterations, feasible_enough, nullptr);
        sol.phase1_margin = z(n);
        if (out == Barrier::Outcome::early_stop) {
            found = true;
            break;
        }
        if (out == Barrier::Outcome::budget) {
            sol.status = Status::max_iter;
            sol.message = "iteration budget exhausted while searching for a feasible point";
            sol.y = z.head(n);
            return sol;
        }
        if (out == Barrier::Outcome::stalled) {
            sol.status = Status::numerical;
            sol.message = "feasibility phase stalled";
            sol.y = z.head(n);
            return sol;
        }
        if (static_cast<double>(m1) / mu <= options.gap_tol) {
            sol.status = Status::infeasible;
            sol.message = "no strictly feasible point: best margin " + std::to_string(z(n));
            sol.y = z.head(n);
            sol.duality_gap_estimate = static_cast<double>(m1) / mu;
            sol.min_eig_per_block.resize(static_cast<Eigen::Index>(problem.blocks.size()));
            for (std::size_t k = 0; k < problem.blocks.size(); ++k)
                sol.min_eig_per_block(static_cast<Eigen::Index>(k)) = block_min_eig(problem, k, sol.y);
            return sol;
        }
        mu *= options.mu_factor;
    }
    sol.phase1_margin = z(n);

    // Phase 2: follow the central path of the original problem.
    Vector y = z.head(n);
    const Barrier b2(problem, options);
    mu = options.mu_initial;
    while (true) {
        double dec = 0.0;
        const auto out = b2.center(y, mu, sol.iterations, {}, &dec);
        if (out == Barrier::Outcome::budget) {
            sol.status = Status::max_iter;
            sol.message = "iteration budget exhausted in optimization phase";
            break;
        }
        if (out == Barrier::Outcome::stalled) {
            sol.status = Status::numerical;
            sol.message = "Newton decrement stagnated at mu=" + std::to_string(mu) +
                          " (lambda^2/2=" + std::to_string(dec) + ")";
            break;
        }
        sol.stage_objectives.push_back(problem.objective.dot(y));
        sol.duality_gap_estimate = static_cast<double>(m) / mu;
        if (sol.duality_gap_estimate <= options.gap_tol) {
            sol.status = Status::optimal;
            break;
        }
        mu *= options.mu_factor;
    }

    sol.y = y;
    sol.objective_value = problem.objective.dot(y);
    sol.min_eig_per_block.resize(static_cast<Eigen::Index>(problem.blocks.size()));
    for (std::size_t k = 0; k < problem.blocks.size(); ++k)
        sol.min_eig_per_block(static_cast<Eigen::Index>(k)) = block_min_eig(problem, k, y);
    if (sol.status == Status::optimal && sol.min_eig_per_block.minCoeff() < -options.feas_tol) {
        sol.status = Status::numerical;
        sol.message = "final iterate violates a block beyond feas_tol";
    }
    return sol;
}

namespace {

void write_number(std::ostream& out, double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, r.ptr - buf);
}

void write_matrix(std::ostream& out, const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << ' ';
            write_number(out, m(i, j));
        }
        out << '\n';
    }
}

double read_number(std::istream& in) {
    std::string tok;
    if (!(in >> tok)) throw IngestError("SDP dump: unexpected end of input");
    double v = 0.0;
    const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (r.ec != std::errc() || r.ptr != tok.data() + tok.size())
        throw IngestError("SDP dump: bad number '" + tok + "'");
    return v;
}

void expect(std::istream& in, const std::string& word) {
    std::string tok;
    if (!(in >> tok) || tok != word) throw IngestError("SDP dump: expected '" + word + "', got '" + tok + "'");
}

Matrix read_matrix(std::istream& in, Eigen::Index d) {
    Matrix m(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = read_number(in);
    return m;
}

}  // namespace

void write_problem(std::ostream& out, const Problem& problem) {
    out << "flowobs-sdp 1\n";
    out << "num_vars " << problem.num_vars << '\n';
    out << "objective";
    for (Eigen::Index i = 0; i < problem.objective.size(); ++i) {
        out << ' ';
        write_number(out, problem.objective(i));
    }
    out << "\nblocks " << problem.blocks.size() << '\n';
    for (std::size_t k = 0; k < problem.blocks.size(); ++k) {
        const auto& b = problem.blocks[k];
        out << "block " << k << " dim " << b.dim() << '\n';
        out << "F 0\n";
        write_matrix(out, b.f0);
        for (std::size_t i = 0; i < b.coeffs.size(); ++i) {
            out << "F " << i + 1 << '\n';
            write_matrix(out, b.coeffs[i]);
        }
    }
}

Problem read_problem(std::istream& in) {
    Problem p;
    expect(in, "flowobs-sdp");
    if (read_number(in) != 1.0) throw IngestError("SDP dump: unsupported version");
    expect(in, "num_vars");
    p.num_vars = static_cast<int>(read_number(in));
    if (p.num_vars < 1) throw IngestError("SDP dump: num_vars must be >= 1");
    expect(in, "objective");
    p.objective.resize(p.num_vars);
    for (int i = 0; i < p.num_vars; ++i) p.objective(i) = read_number(in);
    expect(in, "blocks");
    const auto nb = static_cast<std::size_t>(read_number(in));
    for (std::size_t k = 0; k < nb; ++k) {
        expect(in, "block");
        if (static_cast<std::size_t>(read_number(in)) != k) throw IngestError("SDP dump: block index out of order");
        expect(in, "dim");
        const auto d = static_cast<Eigen::Index>(read_number(in));
        if (d < 1) throw IngestError("SDP dump: block dimension must be >= 1");
        Block b;
        for (int i = 0; i <= p.num_vars; ++i) {
            expect(in, "F");
            if (static_cast<int>(read_number(in)) != i) throw IngestError("SDP dump: coefficient index out of order");
            Matrix mtx = read_matrix(in, d);
            if (i == 0) b.f0 = std::move(mtx);
            else b.coeffs.push_back(std::move(mtx));
        }
        p.blocks.push_back(std::move(b));
    }
    p.validate();
    return p;
}

}  // namespace flowobs::sdp
