#pragma once

#include "flowobs/linalg.hpp"

namespace flowobs {

struct SymmetricEigen {
    Vector values;    // ascending
    Matrix vectors;   // orthonormal columns, vectors.col(i) pairs with values(i)
    int sweeps = 0;
};

// Cyclic Jacobi eigendecomposition. The input is symmetrized as (M + M^T)/2;
// rotations stop once off(M) <= 1e-14 * ||M||_F.
SymmetricEigen sym_eig(const Matrix& m);

double min_eig(const Matrix& m);

}  // namespace flowobs
