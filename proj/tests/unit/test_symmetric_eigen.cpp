#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "flowobs/error.hpp"
#include "flowobs/symmetric_eigen.hpp"

using namespace flowobs;

namespace {

Matrix random_symmetric(int n, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = d(rng);
    return 0.5 * (a + a.transpose());
}

}  // namespace

TEST_CASE("known 2x2 spectrum") {
    Matrix a(2, 2);
    a << 2, 1, 1, 3;
    const auto e = sym_eig(a);
    CHECK(e.values(0) == doctest::Approx((5.0 - std::sqrt(5.0)) / 2.0).epsilon(1e-15));
    CHECK(e.values(1) == doctest::Approx((5.0 + std::sqrt(5.0)) / 2.0).epsilon(1e-15));
}

TEST_CASE("diagonal input needs no sweeps beyond the check") {
    Matrix a = Vector::LinSpaced(4, 3.0, -3.0).asDiagonal();
    const auto e = sym_eig(a);
    CHECK(e.values(0) == -3.0);
    CHECK(e.values(3) == 3.0);
    CHECK(e.sweeps <= 1);
}

TEST_CASE("residuals and orthogonality on random matrices") {
    std::mt19937_64 rng(7);
    for (int n : {1, 3, 6, 10, 14}) {
        for (int rep = 0; rep < 5; ++rep) {
            const Matrix a = random_symmetric(n, rng, rep == 4 ? 1e6 : 1.0);
            const auto e = sym_eig(a);
            const double scale = std::max(1.0, a.norm());
            CHECK((a * e.vectors - e.vectors * e.values.asDiagonal()).norm() <= 1e-12 * scale);
            CHECK((e.vectors.transpose() * e.vectors - Matrix::Identity(n, n)).norm() <= 1e-12);
            for (int i = 1; i < n; ++i) CHECK(e.values(i - 1) <= e.values(i));
            Eigen::SelfAdjointEigenSolver<Matrix> ref(a, Eigen::EigenvaluesOnly);
            CHECK((ref.eigenvalues() - e.values).norm() <= 1e-12 * scale);
        }
    }
}

TEST_CASE("repeated eigenvalues") {
    Matrix a = Matrix::Constant(4, 4, 1.0);   // spectrum {0, 0, 0, 4}
    const auto e = sym_eig(a);
    CHECK(std::abs(e.values(0)) < 1e-14);
    CHECK(std::abs(e.values(2)) < 1e-14);
    CHECK(e.values(3) == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(min_eig(Matrix::Identity(3, 3) * 2.5) == 2.5);
}

TEST_CASE("input is symmetrized and non-finite input rejected") {
    Matrix a(2, 2);
    a << 1, 2, 0, 1;   // symmetric part [[1,1],[1,1]]
    const auto e = sym_eig(a);
    CHECK(std::abs(e.values(0)) < 1e-15);
    CHECK(e.values(1) == doctest::Approx(2.0));
    a(0, 1) = NAN;
    CHECK_THROWS_AS(sym_eig(a), DomainError);
}
