#include "flowobs/symmetric_eigen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "flowobs/error.hpp"

namespace flowobs {

namespace {

constexpr int kMaxSweeps = 100;
constexpr double kRelativeOffTolerance = 1e-14;

double off_diagonal_norm(const Matrix& a) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

}  // namespace

SymmetricEigen sym_eig(const Matrix& m) {
    if (m.rows() != m.cols()) throw DomainError("sym_eig needs a square matrix");
    if (!m.allFinite()) throw DomainError("sym_eig: non-finite matrix entry");

    const Eigen::Index n = m.rows();
    Matrix a = 0.5 * (m + m.transpose());
    Matrix v = Matrix::Identity(n, n);
    const double scale = a.norm();
    const double target = kRelativeOffTolerance * scale;

    int sweep = 0;
    while (sweep < kMaxSweeps && off_diagonal_norm(a) > target) {
        ++sweep;
        for (Eigen::Index p = 0; p < n - 1; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                // Rotation angle from the stable tangent formula.
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index i, Eigen::Index j) { return a(i, i) < a(j, j); });

    SymmetricEigen out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    out.sweeps = sweep;
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto src = order[static_cast<std::size_t>(k)];
        out.values(k) = a(src, src);
        out.vectors.col(k) = v.col(src);
    }
    return out;
}

double min_eig(const Matrix& m) {
    if (m.size() == 0) throw DomainError("min_eig of an empty matrix");
    return sym_eig(m).values(0);
}

}  // namespace flowobs
