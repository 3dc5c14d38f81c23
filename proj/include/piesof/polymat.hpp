// Matrix-valued polynomials in one variable s in [-1,0] and two variables
// (s,theta) in [-1,0]^2: the parameter space of every 4-PI operator.
//
// Storage is dense in the monomial basis; degrees stay small (<= ~8) in this
// application. Coefficients below 1e-14 are trimmed after arithmetic to stop
// degree inflation through repeated composition.
#pragma once

#include <Eigen/Dense>
#include <vector>

namespace piesof {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kTrimTol = 1e-14;

// Univariate matrix polynomial: sum_k c[k] * s^k.
struct PolyMat1 {
    int rows = 0, cols = 0;
    std::vector<MatrixXd> c;  // one matrix per degree; never empty

    PolyMat1() : c{MatrixXd::Zero(0, 0)} {}
    PolyMat1(int r, int cl, int deg = 0)
        : rows(r), cols(cl), c(static_cast<size_t>(deg) + 1, MatrixXd::Zero(r, cl)) {}
    explicit PolyMat1(const MatrixXd& constant)
        : rows(static_cast<int>(constant.rows())),
          cols(static_cast<int>(constant.cols())),
          c{constant} {}

    int max_degree() const { return static_cast<int>(c.size()) - 1; }
    bool is_zero(double tol = 0.0) const;
};

// Bivariate matrix polynomial: sum_{a,b} c(a,b) * s^a * theta^b.
struct PolyMat2 {
    int rows = 0, cols = 0;
    int ds = 0, dt = 0;       // max degrees in s and theta
    std::vector<MatrixXd> c;  // index (a,b) -> a*(dt+1)+b

    PolyMat2() : c{MatrixXd::Zero(0, 0)} {}
    PolyMat2(int r, int cl, int degs = 0, int degt = 0)
        : rows(r), cols(cl), ds(degs), dt(degt),
          c(static_cast<size_t>(degs + 1) * (degt + 1), MatrixXd::Zero(r, cl)) {}

    MatrixXd& at(int a, int b) { return c[static_cast<size_t>(a) * (dt + 1) + b]; }
    const MatrixXd& at(int a, int b) const {
        return c[static_cast<size_t>(a) * (dt + 1) + b];
    }
    int max_degree_s() const { return ds; }
    int max_degree_theta() const { return dt; }
    bool is_zero(double tol = 0.0) const;
};

// Integration bound: a constant in [-1,0] or the symbol of the surviving
// variable ("s" when integrating a kernel over theta, and vice versa).
struct Bound {
    enum Kind { Constant, Symbol } kind = Constant;
    double value = 0.0;

    static Bound at(double v) { return Bound{Constant, v}; }
    static Bound symbol() { return Bound{Symbol, 0.0}; }
};

enum class Var { S, Theta };

// ---- construction helpers ----
PolyMat1 pm1_constant(const MatrixXd& M);
PolyMat1 pm1_monomial(const MatrixXd& M, int degree);          // M * s^degree
PolyMat2 pm2_monomial(const MatrixXd& M, int ds, int dt);      // M * s^ds * theta^dt
PolyMat1 pm1_identity(int n);

// ---- arithmetic ----
PolyMat1 add(const PolyMat1& a, const PolyMat1& b);
PolyMat2 add(const PolyMat2& a, const PolyMat2& b);
PolyMat1 scale(const PolyMat1& a, double k);
PolyMat2 scale(const PolyMat2& a, double k);

// Product of two polynomials in the same variable.
PolyMat1 mul(const PolyMat1& a, const PolyMat1& b);
// Mixed-arity products (PolyMat1 promoted to PolyMat2). `a_var` / `b_var`
// names the variable the univariate factor lives in.
PolyMat2 mul(const PolyMat1& a, Var a_var, const PolyMat1& b, Var b_var);
PolyMat2 mul(const PolyMat1& a, Var a_var, const PolyMat2& b);
PolyMat2 mul(const PolyMat2& a, const PolyMat1& b, Var b_var);

PolyMat1 mul(const MatrixXd& M, const PolyMat1& p);
PolyMat1 mul(const PolyMat1& p, const MatrixXd& M);
PolyMat2 mul(const MatrixXd& M, const PolyMat2& p);
PolyMat2 mul(const PolyMat2& p, const MatrixXd& M);

// ---- calculus ----
// Definite integral of a univariate polynomial over its own variable.
// A symbolic bound yields a polynomial in that symbol; two constant bounds
// yield a constant (degree-0) polynomial.
PolyMat1 integrate_definite(const PolyMat1& p, Bound lo, Bound hi);
// Definite integral of a bivariate polynomial over `which`; a symbolic bound
// refers to the surviving variable. Result is univariate in the survivor.
PolyMat1 integrate_definite(const PolyMat2& p, Var which, Bound lo, Bound hi);

// ---- evaluation ----
MatrixXd evaluate(const PolyMat1& p, double s);
MatrixXd evaluate(const PolyMat2& p, double s, double theta);

// ---- structure ----
PolyMat2 swap_vars(const PolyMat2& p);            // q(s,theta) = p(theta,s)
PolyMat1 transpose(const PolyMat1& p);
PolyMat2 transpose(const PolyMat2& p);
PolyMat1 trim(const PolyMat1& p, double tol = kTrimTol);
PolyMat2 trim(const PolyMat2& p, double tol = kTrimTol);

double max_abs_coeff(const PolyMat1& p);
double max_abs_coeff(const PolyMat2& p);

}  // namespace piesof
