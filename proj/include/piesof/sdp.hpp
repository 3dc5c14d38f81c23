// Finite-dimensional semidefinite program in primal standard form:
//
//   minimize    sum_i <C_i, X_i> + c_f . f
//   subject to  sum_i <A_ij, X_i> + B_j . f = b_j    (j = 1..p)
//               X_i symmetric PSD,  f free
//
// produced by compiling operator inequalities (coefficient matching of
// polynomial kernels) and consumed by the embedded interior-point solver
// or exported to sparse SDPA format.
#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace piesof {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// One entry of a symmetric data matrix: value at (r, c) and mirrored at
// (c, r); stored with r <= c.
struct SdpEntry {
    int block = 0;
    int r = 0;
    int c = 0;
    double value = 0.0;
};

struct SdpProblem {
    std::vector<int> psd_sizes;  // side lengths of the PSD blocks
    int n_free = 0;

    // Equality constraints, one row per entry of `b`.
    std::vector<std::vector<SdpEntry>> rows;                       // PSD parts
    std::vector<std::vector<std::pair<int, double>>> free_rows;    // free parts
    VectorXd b;

    // Objective (empty = pure feasibility).
    std::vector<SdpEntry> cost;  // PSD part
    VectorXd cost_free;          // size n_free or 0

    int num_constraints() const { return static_cast<int>(b.size()); }
    void validate() const;  // throws std::invalid_argument on inconsistency

    // <A_j, X> + B_j . f for a candidate solution.
    double eval_row(int j, const std::vector<MatrixXd>& X, const VectorXd& f) const;
};

// Sparse SDPA ".dat-s" export. Free variables are split into a difference of
// two nonnegative halves carried in one extra diagonal block (negative size
// in the block-structure line, per the format). Objective entries are written
// as matrix 0; constraint j as matrix j (1-indexed, upper triangle only).
void export_sdp(const SdpProblem& sdp, const std::string& path);

}  // namespace piesof
