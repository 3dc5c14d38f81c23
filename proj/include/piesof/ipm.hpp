// Embedded primal-dual interior-point solver for the SdpProblem standard
// form (Mehrotra predictor-corrector with the HKM search direction, dense
// Schur complement, free variables eliminated through a regularized
// augmented system with iterative refinement).
#pragma once

#include <string>
#include <vector>

#include "piesof/sdp.hpp"

namespace piesof {

enum class SdpStatus {
    Optimal,          // all residuals below tolerance
    Inaccurate,       // returned best iterate above tolerance (stalled/limit)
    Infeasible,       // primal infeasibility certificate found
    NumericalError,   // factorization breakdown, no usable iterate
};

std::string to_string(SdpStatus s);

struct SdpSettings {
    double tol = 1e-8;   // relative primal/dual residual and gap target
    int max_iter = 120;
    bool verbose = false;
};

struct SdpSolution {
    SdpStatus status = SdpStatus::NumericalError;
    std::vector<MatrixXd> X;  // PSD blocks (primal)
    VectorXd f;               // free variables (primal)
    VectorXd y;               // equality multipliers (dual)
    double primal_obj = 0.0;
    double dual_obj = 0.0;
    double primal_res = 0.0;  // relative ||b - A(X) - Af f||
    double dual_res = 0.0;    // relative dual residual (PSD and free parts)
    double gap = 0.0;         // relative duality gap
    int iterations = 0;
    std::string message;
};

SdpSolution solve_sdp(const SdpProblem& sdp, const SdpSettings& settings = {});

}  // namespace piesof
