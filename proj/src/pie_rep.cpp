#include "piesof/pie_rep.hpp"

#include <cmath>
#include <stdexcept>

namespace piesof {

void DdeSystem::validate() const {
    const int mm = m();
    if (A.rows() != mm || A.cols() != mm)
        throw std::invalid_argument("DdeSystem: A must be square");
    if (A_list.size() != taus.size() || C_list.size() != taus.size())
        throw std::invalid_argument("DdeSystem: A_list/C_list length must match taus");
    for (const auto& Ai : A_list)
        if (Ai.rows() != mm || Ai.cols() != mm)
            throw std::invalid_argument("DdeSystem: A_i dimension mismatch");
    if (B.rows() != mm) throw std::invalid_argument("DdeSystem: B row dim");
    if (C.cols() != mm) throw std::invalid_argument("DdeSystem: C col dim");
    for (const auto& Ci : C_list)
        if (Ci.rows() != C.rows() || Ci.cols() != mm)
            throw std::invalid_argument("DdeSystem: C_i dimension mismatch");
    double prev = 0.0;
    for (double t : taus) {
        if (!(t > prev))
            throw std::invalid_argument("DdeSystem: delays must be positive and strictly increasing");
        prev = t;
    }
}

HistoryPoly HistoryPoly::constant(const VectorXd& c) {
    HistoryPoly h;
    h.coeffs = c;
    return h;
}

VectorXd HistoryPoly::value(double t) const {
    VectorXd out = VectorXd::Zero(coeffs.rows());
    for (int k = deg(); k >= 0; --k) out = out * t + coeffs.col(k);
    return out;
}

VectorXd HistoryPoly::derivative(double t) const {
    VectorXd out = VectorXd::Zero(coeffs.rows());
    for (int k = deg(); k >= 1; --k) out = out * t + k * coeffs.col(k);
    return out;
}

PieSystem dde_to_pie(const DdeSystem& sys) {
    sys.validate();
    const int m = sys.m(), K = sys.K(), n = m * K;
    PieSystem pie;
    pie.m = m;
    pie.K = K;
    pie.n_u = sys.n_u();
    pie.n_y = sys.n_y();

    // T = Pi[ I_m, 0 ; col(I_m,...,I_m), {0, 0, -I_n} ]
    FourPiOp T(m, n, m, n);
    T.P = MatrixXd::Identity(m, m);
    {
        MatrixXd stack = MatrixXd::Zero(n, m);
        for (int i = 0; i < K; ++i) stack.block(m * i, 0, m, m) = MatrixXd::Identity(m, m);
        T.Q2 = pm1_constant(stack);
        T.R2 = pm2_monomial(-MatrixXd::Identity(n, n), 0, 0);
    }
    pie.T = T;

    // A = Pi[ A0 + sum A_i, -[A_1 ... A_K] ; 0, {I_tau, 0, 0} ]
    FourPiOp Aop(m, n, m, n);
    {
        MatrixXd Asum = sys.A;
        for (const auto& Ai : sys.A_list) Asum += Ai;
        Aop.P = Asum;
        MatrixXd Q1 = MatrixXd::Zero(m, n);
        for (int i = 0; i < K; ++i) Q1.block(0, m * i, m, m) = -sys.A_list[i];
        Aop.Q1 = pm1_constant(Q1);
        MatrixXd Itau = MatrixXd::Zero(n, n);
        for (int i = 0; i < K; ++i)
            Itau.block(m * i, m * i, m, m) =
                MatrixXd::Identity(m, m) / sys.taus[i];
        Aop.R0 = pm1_constant(Itau);
    }
    pie.A = Aop;

    // B = Pi[ B, - ; -, - ] : R^{n_u} -> RL2^{m,n}
    FourPiOp Bop(sys.n_u(), 0, m, n);
    Bop.P = sys.B;
    pie.B = Bop;

    // C = Pi[ C0 + sum C_i, -[C_1 ... C_K] ; -, - ] : RL2^{m,n} -> R^{n_y}
    FourPiOp Cop(m, n, sys.n_y(), 0);
    {
        MatrixXd Csum = sys.C;
        for (const auto& Ci : sys.C_list) Csum += Ci;
        Cop.P = Csum;
        MatrixXd Q1 = MatrixXd::Zero(sys.n_y(), n);
        for (int i = 0; i < K; ++i) Q1.block(0, m * i, sys.n_y(), m) = -sys.C_list[i];
        Cop.Q1 = pm1_constant(Q1);
    }
    pie.C = Cop;
    return pie;
}

FourPiOp closed_loop(const PieSystem& pie, const SofGain& gain) {
    if (gain.L.rows() != pie.n_u || gain.L.cols() != pie.n_y)
        throw std::invalid_argument("closed_loop: gain dimension mismatch");
    FourPiOp Lop = FourPiOp::from_matrix(gain.L);
    return add(pie.A, compose(pie.B, compose(Lop, pie.C)));
}

RL2Vec state_to_pie_state(const DdeSystem& sys, const HistoryPoly& x0) {
    const int m = sys.m(), K = sys.K();
    if (x0.coeffs.rows() != m)
        throw std::invalid_argument("state_to_pie_state: history dimension mismatch");
    RL2Vec v;
    v.finite = x0.value(0.0);
    // component i: d/ds x0(s tau_i) = sum_k k c_k tau_i^k s^{k-1}
    const int d = x0.deg();
    PolyMat1 fun(m * K, 1, std::max(0, d - 1));
    for (int i = 0; i < K; ++i) {
        double tp = sys.taus[i];
        double powk = tp;  // tau_i^k for k = 1...
        for (int k = 1; k <= d; ++k) {
            fun.c[k - 1].block(m * i, 0, m, 1) += k * powk * x0.coeffs.col(k);
            powk *= tp;
        }
    }
    v.fun = trim(fun);
    return v;
}

void closed_loop_dde(const DdeSystem& sys, const SofGain& gain, MatrixXd& A0c,
                     std::vector<MatrixXd>& Aic) {
    A0c = sys.A + sys.B * gain.L * sys.C;
    Aic.clear();
    for (size_t i = 0; i < sys.A_list.size(); ++i)
        Aic.push_back(sys.A_list[i] + sys.B * gain.L * sys.C_list[i]);
}

}  // namespace piesof
