// Conversion of a multi-delay DDE into its Partial Integral Equation (PIE)
// representation, plus open- and closed-loop operator assembly.
//
// The DDE
//   xdot(t) = A x(t) + sum_i A_i x(t - tau_i) + B u(t),
//   y(t)    = C x(t) + sum_i C_i x(t - tau_i)
// is equivalent (for differentiable histories) to the PIE
//   d/dt (T xi)(t) = A_op xi(t) + B_op u(t),   y = C_op xi(t)
// on RL2^{m, mK}[-1,0], with the PIE state
//   xi(t) = ( x(t), d/ds x(t + s tau_1), ..., d/ds x(t + s tau_K) ).
// All delay intervals are rescaled onto s in [-1,0]; the chain-rule factors
// tau_i appear inside the A operator's multiplier I_tau = diag(I_m / tau_i).
#pragma once

#include <vector>

#include "piesof/piop.hpp"

namespace piesof {

struct DdeSystem {
    MatrixXd A;                   // m x m
    std::vector<MatrixXd> A_list; // K delayed state matrices, m x m
    MatrixXd B;                   // m x n_u
    MatrixXd C;                   // n_y x m
    std::vector<MatrixXd> C_list; // K delayed output matrices, n_y x m
    std::vector<double> taus;     // strictly increasing positive delays

    int m() const { return static_cast<int>(A.rows()); }
    int K() const { return static_cast<int>(taus.size()); }
    int n_u() const { return static_cast<int>(B.cols()); }
    int n_y() const { return static_cast<int>(C.rows()); }
    void validate() const;  // throws std::invalid_argument on bad data
};

struct PieSystem {
    FourPiOp T, A, B, C;
    int m = 0, K = 0, n_u = 0, n_y = 0;
};

struct SofGain {
    MatrixXd L;  // n_u x n_y
};

// Polynomial history segment x0(t) on [-tau_K, 0], one row per state.
struct HistoryPoly {
    MatrixXd coeffs;  // m x (deg+1); x0(t) = sum_k coeffs.col(k) t^k

    static HistoryPoly constant(const VectorXd& c);
    VectorXd value(double t) const;
    VectorXd derivative(double t) const;
    int deg() const { return static_cast<int>(coeffs.cols()) - 1; }
};

// Exact PIE operators for the DDE (all parameters read off directly).
PieSystem dde_to_pie(const DdeSystem& sys);

// A_op + B_op L C_op as a single operator.
FourPiOp closed_loop(const PieSystem& pie, const SofGain& L);

// PIE initial state for a differentiable history:
// ( x0(0), d/ds x0(s tau_1), ..., d/ds x0(s tau_K) ).
RL2Vec state_to_pie_state(const DdeSystem& sys, const HistoryPoly& x0);

// Closed-loop DDE matrices (A + B L C, A_i + B L C_i) for simulation and
// spectral checks.
void closed_loop_dde(const DdeSystem& sys, const SofGain& L, MatrixXd& A0c,
                     std::vector<MatrixXd>& Aic);

}  // namespace piesof
