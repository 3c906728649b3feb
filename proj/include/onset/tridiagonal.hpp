#pragma once

#include <cstddef>
#include <vector>

#include "onset/units.hpp"

namespace onset {

/// Real symmetric tridiagonal matrix stored as its diagonal and first
/// off-diagonal (off_diagonal.size() == diagonal.size() - 1).
struct TridiagonalMatrix {
    std::vector<double> diagonal;
    std::vector<double> off_diagonal;

    std::size_t size() const { return diagonal.size(); }
};

class EigenSolveError : public Error {
public:
    EigenSolveError(const std::string& what, std::size_t index) : Error(what), index_(index) {}
    std::size_t index() const { return index_; }

private:
    std::size_t index_;
};

/// Eigen-decomposition of a symmetric tridiagonal matrix.
/// Eigenvalues ascending; eigenvector j is the column vectors[i * n + j], n being
/// the number of eigenpairs returned.
struct TridiagonalEigen {
    std::vector<double> values;
    std::vector<double> vectors;  // row-major n x n, empty when values only
    std::size_t n = 0;

    double vector(std::size_t row, std::size_t j) const { return vectors[row * n + j]; }
};

/// Implicit-shift QL iteration (tql2 family). Throws EigenSolveError with the
/// offending eigenvalue index when an eigenvalue fails to converge within
/// max_iterations sweeps.
TridiagonalEigen solve_tridiagonal(const TridiagonalMatrix& m, bool want_vectors,
                                   int max_iterations = 60);

/// Lowest `count` eigenpairs: all eigenvalues by QL, eigenvectors of the
/// lowest `count` by inverse iteration with Gram-Schmidt against the previously
/// found vectors. Much cheaper than the full vector solve when count << n.
TridiagonalEigen solve_tridiagonal_lowest(const TridiagonalMatrix& m, std::size_t count,
                                          int max_iterations = 60);

}  // namespace onset
