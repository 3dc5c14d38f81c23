#include "piesof/polymat.hpp"

#include <cmath>
#include <stdexcept>

namespace piesof {

namespace {

void check_domain(double x, const char* what) {
    if (x < -1.0 - 1e-9 || x > 1e-9)
        throw std::domain_error(std::string(what) + " outside [-1,0]");
}

void check_bound(const Bound& b) {
    if (b.kind == Bound::Constant) check_domain(b.value, "integration bound");
}

}  // namespace

bool PolyMat1::is_zero(double tol) const {
    for (const auto& M : c)
        if (M.size() && M.cwiseAbs().maxCoeff() > tol) return false;
    return true;
}

bool PolyMat2::is_zero(double tol) const {
    for (const auto& M : c)
        if (M.size() && M.cwiseAbs().maxCoeff() > tol) return false;
    return true;
}

PolyMat1 pm1_constant(const MatrixXd& M) { return PolyMat1(M); }

PolyMat1 pm1_monomial(const MatrixXd& M, int degree) {
    PolyMat1 p(static_cast<int>(M.rows()), static_cast<int>(M.cols()), degree);
    p.c[degree] = M;
    return p;
}

PolyMat2 pm2_monomial(const MatrixXd& M, int ds, int dt) {
    PolyMat2 p(static_cast<int>(M.rows()), static_cast<int>(M.cols()), ds, dt);
    p.at(ds, dt) = M;
    return p;
}

PolyMat1 pm1_identity(int n) { return pm1_constant(MatrixXd::Identity(n, n)); }

PolyMat1 trim(const PolyMat1& p, double tol) {
    int d = p.max_degree();
    while (d > 0 && (p.c[d].size() == 0 || p.c[d].cwiseAbs().maxCoeff() < tol)) --d;
    PolyMat1 out(p.rows, p.cols, d);
    for (int k = 0; k <= d; ++k) out.c[k] = p.c[k];
    return out;
}

PolyMat2 trim(const PolyMat2& p, double tol) {
    auto slice_max_s = [&](int a) {
        double m = 0.0;
        for (int b = 0; b <= p.dt; ++b)
            if (p.at(a, b).size()) m = std::max(m, p.at(a, b).cwiseAbs().maxCoeff());
        return m;
    };
    int ds = p.ds;
    while (ds > 0 && slice_max_s(ds) < tol) --ds;
    auto slice_max_t = [&](int b) {
        double m = 0.0;
        for (int a = 0; a <= ds; ++a)
            if (p.at(a, b).size()) m = std::max(m, p.at(a, b).cwiseAbs().maxCoeff());
        return m;
    };
    int dt = p.dt;
    while (dt > 0 && slice_max_t(dt) < tol) --dt;
    PolyMat2 out(p.rows, p.cols, ds, dt);
    for (int a = 0; a <= ds; ++a)
        for (int b = 0; b <= dt; ++b) out.at(a, b) = p.at(a, b);
    return out;
}

PolyMat1 add(const PolyMat1& a, const PolyMat1& b) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw std::invalid_argument("PolyMat1 add: dimension mismatch");
    int d = std::max(a.max_degree(), b.max_degree());
    PolyMat1 out(a.rows, a.cols, d);
    for (int k = 0; k <= a.max_degree(); ++k) out.c[k] += a.c[k];
    for (int k = 0; k <= b.max_degree(); ++k) out.c[k] += b.c[k];
    return trim(out);
}

PolyMat2 add(const PolyMat2& a, const PolyMat2& b) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw std::invalid_argument("PolyMat2 add: dimension mismatch");
    PolyMat2 out(a.rows, a.cols, std::max(a.ds, b.ds), std::max(a.dt, b.dt));
    for (int x = 0; x <= a.ds; ++x)
        for (int y = 0; y <= a.dt; ++y) out.at(x, y) += a.at(x, y);
    for (int x = 0; x <= b.ds; ++x)
        for (int y = 0; y <= b.dt; ++y) out.at(x, y) += b.at(x, y);
    return trim(out);
}

PolyMat1 scale(const PolyMat1& a, double k) {
    PolyMat1 out = a;
    for (auto& M : out.c) M *= k;
    return out;
}

PolyMat2 scale(const PolyMat2& a, double k) {
    PolyMat2 out = a;
    for (auto& M : out.c) M *= k;
    return out;
}

PolyMat1 mul(const PolyMat1& a, const PolyMat1& b) {
    if (a.cols != b.rows) throw std::invalid_argument("PolyMat1 mul: dimension mismatch");
    PolyMat1 out(a.rows, b.cols, a.max_degree() + b.max_degree());
    for (int i = 0; i <= a.max_degree(); ++i)
        for (int j = 0; j <= b.max_degree(); ++j) out.c[i + j] += a.c[i] * b.c[j];
    return trim(out);
}

PolyMat2 mul(const PolyMat1& a, Var a_var, const PolyMat1& b, Var b_var) {
    if (a.cols != b.rows) throw std::invalid_argument("PolyMat mul: dimension mismatch");
    int da = a.max_degree(), db = b.max_degree();
    int ds = (a_var == Var::S ? da : 0) + (b_var == Var::S ? db : 0);
    int dt = (a_var == Var::Theta ? da : 0) + (b_var == Var::Theta ? db : 0);
    PolyMat2 out(a.rows, b.cols, ds, dt);
    for (int i = 0; i <= da; ++i)
        for (int j = 0; j <= db; ++j) {
            int xs = (a_var == Var::S ? i : 0) + (b_var == Var::S ? j : 0);
            int xt = (a_var == Var::Theta ? i : 0) + (b_var == Var::Theta ? j : 0);
            out.at(xs, xt) += a.c[i] * b.c[j];
        }
    return trim(out);
}

PolyMat2 mul(const PolyMat1& a, Var a_var, const PolyMat2& b) {
    if (a.cols != b.rows) throw std::invalid_argument("PolyMat mul: dimension mismatch");
    int da = a.max_degree();
    int ds = b.ds + (a_var == Var::S ? da : 0);
    int dt = b.dt + (a_var == Var::Theta ? da : 0);
    PolyMat2 out(a.rows, b.cols, ds, dt);
    for (int i = 0; i <= da; ++i)
        for (int x = 0; x <= b.ds; ++x)
            for (int y = 0; y <= b.dt; ++y) {
                int xs = x + (a_var == Var::S ? i : 0);
                int xt = y + (a_var == Var::Theta ? i : 0);
                out.at(xs, xt) += a.c[i] * b.at(x, y);
            }
    return trim(out);
}

PolyMat2 mul(const PolyMat2& a, const PolyMat1& b, Var b_var) {
    if (a.cols != b.rows) throw std::invalid_argument("PolyMat mul: dimension mismatch");
    int db = b.max_degree();
    int ds = a.ds + (b_var == Var::S ? db : 0);
    int dt = a.dt + (b_var == Var::Theta ? db : 0);
    PolyMat2 out(a.rows, b.cols, ds, dt);
    for (int x = 0; x <= a.ds; ++x)
        for (int y = 0; y <= a.dt; ++y)
            for (int j = 0; j <= db; ++j) {
                int xs = x + (b_var == Var::S ? j : 0);
                int xt = y + (b_var == Var::Theta ? j : 0);
                out.at(xs, xt) += a.at(x, y) * b.c[j];
            }
    return trim(out);
}

PolyMat1 mul(const MatrixXd& M, const PolyMat1& p) {
    if (M.cols() != p.rows) throw std::invalid_argument("mul: dimension mismatch");
    PolyMat1 out(static_cast<int>(M.rows()), p.cols, p.max_degree());
    for (int k = 0; k <= p.max_degree(); ++k) out.c[k] = M * p.c[k];
    return trim(out);
}

PolyMat1 mul(const PolyMat1& p, const MatrixXd& M) {
    if (p.cols != M.rows()) throw std::invalid_argument("mul: dimension mismatch");
    PolyMat1 out(p.rows, static_cast<int>(M.cols()), p.max_degree());
    for (int k = 0; k <= p.max_degree(); ++k) out.c[k] = p.c[k] * M;
    return trim(out);
}

PolyMat2 mul(const MatrixXd& M, const PolyMat2& p) {
    if (M.cols() != p.rows) throw std::invalid_argument("mul: dimension mismatch");
    PolyMat2 out(static_cast<int>(M.rows()), p.cols, p.ds, p.dt);
    for (size_t k = 0; k < p.c.size(); ++k) out.c[k] = M * p.c[k];
    return trim(out);
}

PolyMat2 mul(const PolyMat2& p, const MatrixXd& M) {
    if (p.cols != M.rows()) throw std::invalid_argument("mul: dimension mismatch");
    PolyMat2 out(p.rows, static_cast<int>(M.cols()), p.ds, p.dt);
    for (size_t k = 0; k < p.c.size(); ++k) out.c[k] = p.c[k] * M;
    return trim(out);
}

PolyMat1 integrate_definite(const PolyMat1& p, Bound lo, Bound hi) {
    check_bound(lo);
    check_bound(hi);
    // antiderivative F(x) = sum_k c[k] x^{k+1}/(k+1); result F(hi) - F(lo)
    int d = p.max_degree();
    int out_deg = (lo.kind == Bound::Symbol || hi.kind == Bound::Symbol) ? d + 1 : 0;
    PolyMat1 out(p.rows, p.cols, out_deg);
    auto accumulate = [&](const Bound& b, double sign) {
        for (int k = 0; k <= d; ++k) {
            MatrixXd term = p.c[k] / (k + 1);
            if (b.kind == Bound::Symbol)
                out.c[k + 1] += sign * term;
            else
                out.c[0] += sign * std::pow(b.value, k + 1) * term;
        }
    };
    accumulate(hi, +1.0);
    accumulate(lo, -1.0);
    return trim(out);
}

PolyMat1 integrate_definite(const PolyMat2& p, Var which, Bound lo, Bound hi) {
    check_bound(lo);
    check_bound(hi);
    // Integrate over `which`; the surviving variable may appear in bounds.
    const bool over_theta = (which == Var::Theta);
    int d_int = over_theta ? p.dt : p.ds;    // degree in the integrated var
    int d_sur = over_theta ? p.ds : p.dt;    // degree in the survivor
    int extra = (lo.kind == Bound::Symbol || hi.kind == Bound::Symbol) ? d_int + 1 : 0;
    PolyMat1 out(p.rows, p.cols, d_sur + extra);
    auto accumulate = [&](const Bound& b, double sign) {
        for (int a = 0; a <= d_sur; ++a)
            for (int k = 0; k <= d_int; ++k) {
                const MatrixXd& C = over_theta ? p.at(a, k) : p.at(k, a);
                if (b.kind == Bound::Symbol)
                    out.c[a + k + 1] += (sign / (k + 1)) * C;
                else
                    out.c[a] += (sign * std::pow(b.value, k + 1) / (k + 1)) * C;
            }
    };
    accumulate(hi, +1.0);
    accumulate(lo, -1.0);
    return trim(out);
}

MatrixXd evaluate(const PolyMat1& p, double s) {
    check_domain(s, "evaluation point");
    MatrixXd out = MatrixXd::Zero(p.rows, p.cols);
    for (int k = p.max_degree(); k >= 0; --k) out = out * s + p.c[k];
    return out;
}

MatrixXd evaluate(const PolyMat2& p, double s, double theta) {
    check_domain(s, "evaluation point");
    check_domain(theta, "evaluation point");
    MatrixXd out = MatrixXd::Zero(p.rows, p.cols);
    for (int a = p.ds; a >= 0; --a) {
        MatrixXd inner = MatrixXd::Zero(p.rows, p.cols);
        for (int b = p.dt; b >= 0; --b) inner = inner * theta + p.at(a, b);
        out = out * s + inner;
    }
    return out;
}

PolyMat2 swap_vars(const PolyMat2& p) {
    PolyMat2 out(p.rows, p.cols, p.dt, p.ds);
    for (int a = 0; a <= p.ds; ++a)
        for (int b = 0; b <= p.dt; ++b) out.at(b, a) = p.at(a, b);
    return out;
}

PolyMat1 transpose(const PolyMat1& p) {
    PolyMat1 out(p.cols, p.rows, p.max_degree());
    for (int k = 0; k <= p.max_degree(); ++k) out.c[k] = p.c[k].transpose();
    return out;
}

PolyMat2 transpose(const PolyMat2& p) {
    PolyMat2 out(p.cols, p.rows, p.ds, p.dt);
    for (size_t k = 0; k < p.c.size(); ++k) out.c[k] = p.c[k].transpose();
    return out;
}

double max_abs_coeff(const PolyMat1& p) {
    double m = 0.0;
    for (const auto& M : p.c)
        if (M.size()) m = std::max(m, M.cwiseAbs().maxCoeff());
    return m;
}

double max_abs_coeff(const PolyMat2& p) {
    double m = 0.0;
    for (const auto& M : p.c)
        if (M.size()) m = std::max(m, M.cwiseAbs().maxCoeff());
    return m;
}

}  // namespace piesof
