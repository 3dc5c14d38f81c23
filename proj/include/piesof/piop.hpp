// The 4-PI operator class with its full algebra.
//
// A 4-PI operator maps RL2^{m,n}[-1,0] = R^m x L2^n[-1,0] into RL2^{p,q} by
//
//   (x, f)  |->  ( P x + int_{-1}^0 Q1(t) f(t) dt,
//                  Q2(s) x + R0(s) f(s) + int_{-1}^s R1(s,t) f(t) dt
//                                       + int_s^0  R2(s,t) f(t) dt ).
//
// The class is closed under addition, composition, adjoint, and block
// concatenation; any dimension may be zero (matrix-only and function-only
// operators are degenerate cases of the same type). Composition and adjoint
// parameter formulas are validated against the quadrature discretization
// oracle and the exact polynomial application.
#pragma once

#include <vector>

#include "piesof/polymat.hpp"

namespace piesof {

// Element of RL2^{m,n}: finite part in R^m, function part an n x 1
// polynomial column in s (lossless for everything arising here).
struct RL2Vec {
    VectorXd finite;
    PolyMat1 fun;  // n x 1

    RL2Vec() = default;
    RL2Vec(VectorXd f, PolyMat1 g) : finite(std::move(f)), fun(std::move(g)) {}
};

double inner_product(const RL2Vec& u, const RL2Vec& v);
double norm(const RL2Vec& u);

struct FourPiOp {
    int m = 0, n = 0;  // input dims  (R^m x L2^n)
    int p = 0, q = 0;  // output dims (R^p x L2^q)
    MatrixXd P;        // p x m
    PolyMat1 Q1;       // p x n, polynomial in theta
    PolyMat1 Q2;       // q x m, polynomial in s
    PolyMat1 R0;       // q x n, polynomial in s
    PolyMat2 R1, R2;   // q x n, polynomials in (s, theta)

    FourPiOp() = default;
    FourPiOp(int m_, int n_, int p_, int q_);

    static FourPiOp identity(int m, int n);
    // Lift a plain matrix to a finite-part-only operator R^m -> R^p.
    static FourPiOp from_matrix(const MatrixXd& M);

    bool is_zero(double tol = 0.0) const;
    double max_abs_param() const;
};

RL2Vec apply(const FourPiOp& op, const RL2Vec& v);
FourPiOp compose(const FourPiOp& a, const FourPiOp& b);  // a after b
FourPiOp adjoint(const FourPiOp& op);
FourPiOp add(const FourPiOp& a, const FourPiOp& b);
FourPiOp scale(const FourPiOp& a, double c);

// Block operator from a grid of compatible blocks: row blocks share output
// dims, column blocks share input dims; finite and function parts are
// concatenated separately. Handles block-diagonal, row, and column layouts.
FourPiOp concat_blocks(const std::vector<std::vector<FourPiOp>>& grid);

// Matrix of op on the basis {finite part} u {function values at N
// Gauss-Legendre nodes, sqrt-weighted}: size (p+qN) x (m+nN). Inner products
// and operator action converge to the exact ones as N grows; exact for
// polynomial kernels once N exceeds their degree.
MatrixXd discretize(const FourPiOp& op, int N);
// The same weighted coordinates for an RL2Vec (for action cross-checks).
VectorXd discretize_vec(const RL2Vec& v, int N, int m, int n);

// True iff R o S vanishes on a polynomial test basis and S is coercive:
// smallest eigenvalue of discretize(S* o S, N) >= tol. (The annihilator
// itself must satisfy S*S >= eps I so that congruence with S preserves
// definiteness; R*R cannot be coercive when R has a nontrivial annihilator.)
bool is_right_annihilator(const FourPiOp& R, const FourPiOp& S, double tol,
                          int N = 40);

// Gauss-Legendre nodes/weights on [a,b] (ascending nodes).
void gauss_legendre(int N, double a, double b, VectorXd& nodes, VectorXd& weights);

}  // namespace piesof
