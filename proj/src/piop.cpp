#include "piesof/piop.hpp"

#include <cmath>
#include <stdexcept>

namespace piesof {

namespace {

// Integration limits for kernel-composition integrals. The integration
// variable is theta; limits may be -1, 0, or one of the surviving symbols
// (s from the left factor, nu from the right factor).
enum class BTag { Neg1, Zero, SVar, NuVar };

// H(s,nu) = int_lo^hi F(s,theta) G(theta,nu) dtheta for PolyMat2 operands
// F in (s,theta) and G in (theta,nu). Exact power-rule integration; symbolic
// limits shift the resulting theta-power onto the s or nu axis.
PolyMat2 integ_theta(const PolyMat2& F, const PolyMat2& G, BTag lo, BTag hi) {
    if (F.cols != G.rows) throw std::invalid_argument("integ_theta: dims");
    const int dFs = F.ds + 1, dFt = F.dt + 1;
    const int dGt = G.ds + 1, dGn = G.dt + 1;  // G: (theta, nu) on (ds, dt) axes
    const int maxpow = dFt + dGt - 1;
    const int ds_extra = (lo == BTag::SVar || hi == BTag::SVar) ? maxpow : 0;
    const int dn_extra = (lo == BTag::NuVar || hi == BTag::NuVar) ? maxpow : 0;
    PolyMat2 out(F.rows, G.cols, dFs - 1 + ds_extra, dGn - 1 + dn_extra);

    auto bound_accum = [&](double sign, BTag tag, int i, int nn,
                           const MatrixXd& coef, int tp) {
        switch (tag) {
            case BTag::Neg1:
                out.at(i, nn) += sign * ((tp % 2) ? -1.0 : 1.0) * coef;
                break;
            case BTag::Zero:
                break;  // 0^tp = 0 for tp >= 1
            case BTag::SVar:
                out.at(i + tp, nn) += sign * coef;
                break;
            case BTag::NuVar:
                out.at(i, nn + tp) += sign * coef;
                break;
        }
    };

    for (int i = 0; i < dFs; ++i)
        for (int j = 0; j < dFt; ++j) {
            const MatrixXd& Fij = F.at(i, j);
            if (Fij.size() == 0 || Fij.isZero(0.0)) continue;
            for (int l = 0; l < dGt; ++l)
                for (int nn = 0; nn < dGn; ++nn) {
                    const MatrixXd& Gln = G.at(l, nn);
                    if (Gln.size() == 0 || Gln.isZero(0.0)) continue;
                    const int tp = j + l + 1;
                    MatrixXd coef = (Fij * Gln) / tp;
                    bound_accum(+1.0, hi, i, nn, coef, tp);
                    bound_accum(-1.0, lo, i, nn, coef, tp);
                }
        }
    return trim(out);
}

// Layout lifts between PolyMat1 and the (s,theta) / (theta,nu) operand axes.
PolyMat2 lift_theta(const PolyMat1& p) {  // theta-poly as F-operand: s-degree 0
    PolyMat2 out(p.rows, p.cols, 0, p.max_degree());
    for (int k = 0; k <= p.max_degree(); ++k) out.at(0, k) = p.c[k];
    return out;
}

PolyMat2 lift_g(const PolyMat1& p) {  // theta-poly as G-operand: nu-degree 0
    PolyMat2 out(p.rows, p.cols, p.max_degree(), 0);
    for (int k = 0; k <= p.max_degree(); ++k) out.at(k, 0) = p.c[k];
    return out;
}

PolyMat1 demote_s(const PolyMat2& p) {  // theta-degree must be 0
    if (p.dt != 0) throw std::logic_error("demote_s: nonzero theta degree");
    PolyMat1 out(p.rows, p.cols, p.ds);
    for (int k = 0; k <= p.ds; ++k) out.c[k] = p.at(k, 0);
    return out;
}

PolyMat1 demote_t(const PolyMat2& p) {  // s-degree must be 0
    if (p.ds != 0) throw std::logic_error("demote_t: nonzero s degree");
    PolyMat1 out(p.rows, p.cols, p.dt);
    for (int k = 0; k <= p.dt; ++k) out.c[k] = p.at(0, k);
    return out;
}

// a(s) (r x k) times b(s,theta) (k x c), pointwise in s.
PolyMat2 mul_s2(const PolyMat1& a, const PolyMat2& b) {
    return mul(a, Var::S, b);
}

// a(s,theta) (r x k) times b(theta) (k x c), pointwise in theta.
PolyMat2 mul_2t(const PolyMat2& a, const PolyMat1& b) {
    return mul(a, b, Var::Theta);
}

// outer product a(s) (r x k) * b(theta) (k x c) -> PolyMat2
PolyMat2 outer_st(const PolyMat1& a, const PolyMat1& b) {
    return mul(a, Var::S, b, Var::Theta);
}

}  // namespace

FourPiOp::FourPiOp(int m_, int n_, int p_, int q_)
    : m(m_), n(n_), p(p_), q(q_),
      P(MatrixXd::Zero(p_, m_)),
      Q1(p_, n_), Q2(q_, m_), R0(q_, n_), R1(q_, n_), R2(q_, n_) {}

FourPiOp FourPiOp::identity(int m, int n) {
    FourPiOp op(m, n, m, n);
    op.P = MatrixXd::Identity(m, m);
    op.R0 = pm1_identity(n);
    return op;
}

FourPiOp FourPiOp::from_matrix(const MatrixXd& M) {
    FourPiOp op(static_cast<int>(M.cols()), 0, static_cast<int>(M.rows()), 0);
    op.P = M;
    return op;
}

bool FourPiOp::is_zero(double tol) const {
    return (P.size() == 0 || P.cwiseAbs().maxCoeff() <= tol) && Q1.is_zero(tol) &&
           Q2.is_zero(tol) && R0.is_zero(tol) && R1.is_zero(tol) && R2.is_zero(tol);
}

double FourPiOp::max_abs_param() const {
    double v = P.size() ? P.cwiseAbs().maxCoeff() : 0.0;
    v = std::max(v, max_abs_coeff(Q1));
    v = std::max(v, max_abs_coeff(Q2));
    v = std::max(v, max_abs_coeff(R0));
    v = std::max(v, max_abs_coeff(R1));
    v = std::max(v, max_abs_coeff(R2));
    return v;
}

double inner_product(const RL2Vec& u, const RL2Vec& v) {
    double val = (u.finite.size() && v.finite.size()) ? u.finite.dot(v.finite) : 0.0;
    if (u.fun.rows && v.fun.rows) {
        PolyMat1 prod = mul(transpose(u.fun), v.fun);  // 1x1 polynomial in s
        PolyMat1 integ = integrate_definite(prod, Bound::at(-1.0), Bound::at(0.0));
        val += integ.c[0](0, 0);
    }
    return val;
}

double norm(const RL2Vec& u) { return std::sqrt(std::max(0.0, inner_product(u, u))); }

RL2Vec apply(const FourPiOp& op, const RL2Vec& v) {
    if (v.finite.size() != op.m || v.fun.rows != op.n)
        throw std::invalid_argument("apply: dimension mismatch");
    RL2Vec out;
    out.finite = VectorXd::Zero(op.p);
    if (op.p) {
        if (op.m) out.finite = op.P * v.finite;
        if (op.n) {
            PolyMat1 prod = mul(op.Q1, v.fun);  // p x 1 in theta
            PolyMat1 integ = integrate_definite(prod, Bound::at(-1.0), Bound::at(0.0));
            out.finite += integ.c[0].col(0);
        }
    }
    out.fun = PolyMat1(op.q, 1);
    if (op.q) {
        if (op.m) out.fun = add(out.fun, mul(op.Q2, MatrixXd(v.finite)));
        if (op.n) {
            out.fun = add(out.fun, mul(op.R0, v.fun));
            // int_{-1}^s R1(s,t) f(t) dt and int_s^0 R2(s,t) f(t) dt
            PolyMat2 h1 = integ_theta(op.R1, lift_g(v.fun), BTag::Neg1, BTag::SVar);
            out.fun = add(out.fun, demote_s(h1));
            PolyMat2 h2 = integ_theta(op.R2, lift_g(v.fun), BTag::SVar, BTag::Zero);
            out.fun = add(out.fun, demote_s(h2));
        }
    }
    return out;
}

FourPiOp compose(const FourPiOp& a, const FourPiOp& b) {
    if (a.m != b.p || a.n != b.q) throw std::invalid_argument("compose: dims");
    FourPiOp c(b.m, b.n, a.p, a.q);
    // P_c = P_a P_b + int_{-1}^0 Q1_a(t) Q2_b(t) dt
    c.P = a.P * b.P;
    if (a.n) {
        PolyMat2 h = integ_theta(lift_theta(a.Q1), lift_g(b.Q2), BTag::Neg1, BTag::Zero);
        if (h.ds != 0 || h.dt != 0) throw std::logic_error("compose: P block degree");
        c.P += h.at(0, 0);
    }
    // Q1_c(nu) = P_a Q1_b(nu) + Q1_a(nu) R0_b(nu)
    //            + int_nu^0 Q1_a(t) R1_b(t,nu) dt + int_{-1}^nu Q1_a(t) R2_b(t,nu) dt
    if (a.p && b.n) {
        c.Q1 = mul(a.P, b.Q1);
        if (a.n) {
            c.Q1 = add(c.Q1, mul(a.Q1, b.R0));
            PolyMat2 h = integ_theta(lift_theta(a.Q1), b.R1, BTag::NuVar, BTag::Zero);
            c.Q1 = add(c.Q1, demote_t(h));
            h = integ_theta(lift_theta(a.Q1), b.R2, BTag::Neg1, BTag::NuVar);
            c.Q1 = add(c.Q1, demote_t(h));
        }
    }
    // Q2_c(s) = Q2_a(s) P_b + R0_a(s) Q2_b(s)
    //           + int_{-1}^s R1_a(s,t) Q2_b(t) dt + int_s^0 R2_a(s,t) Q2_b(t) dt
    if (a.q && b.m) {
        c.Q2 = mul(a.Q2, b.P);
        if (b.q) {
            c.Q2 = add(c.Q2, mul(a.R0, b.Q2));
            PolyMat2 h = integ_theta(a.R1, lift_g(b.Q2), BTag::Neg1, BTag::SVar);
            c.Q2 = add(c.Q2, demote_s(h));
            h = integ_theta(a.R2, lift_g(b.Q2), BTag::SVar, BTag::Zero);
            c.Q2 = add(c.Q2, demote_s(h));
        }
    }
    if (a.q && b.n) {
        // R0_c = R0_a R0_b (pointwise multiplier product)
        if (a.n) c.R0 = mul(a.R0, b.R0);
        // kernel blocks: the outer product Q2_a(s) Q1_b(nu) feeds both R1 and R2
        if (a.m) {
            PolyMat2 ou = outer_st(a.Q2, b.Q1);
            c.R1 = add(c.R1, ou);
            c.R2 = add(c.R2, ou);
        }
        if (a.n) {
            c.R1 = add(c.R1, mul_s2(a.R0, b.R1));
            c.R2 = add(c.R2, mul_s2(a.R0, b.R2));
            c.R1 = add(c.R1, mul_2t(a.R1, b.R0));
            c.R2 = add(c.R2, mul_2t(a.R2, b.R0));
            // split-interval kernel integrals (exchange of integration order)
            c.R1 = add(c.R1, integ_theta(a.R1, b.R1, BTag::NuVar, BTag::SVar));
            c.R1 = add(c.R1, integ_theta(a.R1, b.R2, BTag::Neg1, BTag::NuVar));
            c.R1 = add(c.R1, integ_theta(a.R2, b.R1, BTag::SVar, BTag::Zero));
            c.R2 = add(c.R2, integ_theta(a.R1, b.R2, BTag::Neg1, BTag::SVar));
            c.R2 = add(c.R2, integ_theta(a.R2, b.R1, BTag::NuVar, BTag::Zero));
            c.R2 = add(c.R2, integ_theta(a.R2, b.R2, BTag::SVar, BTag::NuVar));
        }
    }
    return c;
}

FourPiOp adjoint(const FourPiOp& op) {
    FourPiOp out(op.p, op.q, op.m, op.n);
    out.P = op.P.transpose();
    out.Q1 = transpose(op.Q2);
    out.Q2 = transpose(op.Q1);
    out.R0 = transpose(op.R0);
    out.R1 = transpose(swap_vars(op.R2));
    out.R2 = transpose(swap_vars(op.R1));
    return out;
}

FourPiOp add(const FourPiOp& a, const FourPiOp& b) {
    if (a.m != b.m || a.n != b.n || a.p != b.p || a.q != b.q)
        throw std::invalid_argument("FourPiOp add: dimension mismatch");
    FourPiOp c(a.m, a.n, a.p, a.q);
    c.P = a.P + b.P;
    c.Q1 = add(a.Q1, b.Q1);
    c.Q2 = add(a.Q2, b.Q2);
    c.R0 = add(a.R0, b.R0);
    c.R1 = add(a.R1, b.R1);
    c.R2 = add(a.R2, b.R2);
    return c;
}

FourPiOp scale(const FourPiOp& a, double k) {
    FourPiOp c(a.m, a.n, a.p, a.q);
    c.P = k * a.P;
    c.Q1 = scale(a.Q1, k);
    c.Q2 = scale(a.Q2, k);
    c.R0 = scale(a.R0, k);
    c.R1 = scale(a.R1, k);
    c.R2 = scale(a.R2, k);
    return c;
}

FourPiOp concat_blocks(const std::vector<std::vector<FourPiOp>>& grid) {
    if (grid.empty() || grid[0].empty())
        throw std::invalid_argument("concat_blocks: empty grid");
    const size_t nr = grid.size(), nc = grid[0].size();
    for (const auto& row : grid)
        if (row.size() != nc) throw std::invalid_argument("concat_blocks: ragged grid");
    std::vector<int> ms(nc), ns(nc), ps(nr), qs(nr);
    for (size_t j = 0; j < nc; ++j) {
        ms[j] = grid[0][j].m;
        ns[j] = grid[0][j].n;
    }
    for (size_t i = 0; i < nr; ++i) {
        ps[i] = grid[i][0].p;
        qs[i] = grid[i][0].q;
        for (size_t j = 0; j < nc; ++j) {
            const FourPiOp& g = grid[i][j];
            if (g.m != ms[j] || g.n != ns[j] || g.p != ps[i] || g.q != qs[i])
                throw std::invalid_argument("concat_blocks: inconsistent blocks");
        }
    }
    int M = 0, N = 0, Pd = 0, Qd = 0;
    std::vector<int> mo(nc), no(nc), po(nr), qo(nr);
    for (size_t j = 0; j < nc; ++j) { mo[j] = M; M += ms[j]; no[j] = N; N += ns[j]; }
    for (size_t i = 0; i < nr; ++i) { po[i] = Pd; Pd += ps[i]; qo[i] = Qd; Qd += qs[i]; }

    int dQ1 = 0, dQ2 = 0, dR0 = 0, dR1s = 0, dR1t = 0, dR2s = 0, dR2t = 0;
    for (const auto& row : grid)
        for (const auto& g : row) {
            dQ1 = std::max(dQ1, g.Q1.max_degree());
            dQ2 = std::max(dQ2, g.Q2.max_degree());
            dR0 = std::max(dR0, g.R0.max_degree());
            dR1s = std::max(dR1s, g.R1.ds); dR1t = std::max(dR1t, g.R1.dt);
            dR2s = std::max(dR2s, g.R2.ds); dR2t = std::max(dR2t, g.R2.dt);
        }
    FourPiOp out(M, N, Pd, Qd);
    out.Q1 = PolyMat1(Pd, N, dQ1);
    out.Q2 = PolyMat1(Qd, M, dQ2);
    out.R0 = PolyMat1(Qd, N, dR0);
    out.R1 = PolyMat2(Qd, N, dR1s, dR1t);
    out.R2 = PolyMat2(Qd, N, dR2s, dR2t);
    for (size_t i = 0; i < nr; ++i)
        for (size_t j = 0; j < nc; ++j) {
            const FourPiOp& g = grid[i][j];
            if (g.p && g.m) out.P.block(po[i], mo[j], g.p, g.m) = g.P;
            for (int k = 0; k <= g.Q1.max_degree(); ++k)
                if (g.p && g.n) out.Q1.c[k].block(po[i], no[j], g.p, g.n) = g.Q1.c[k];
            for (int k = 0; k <= g.Q2.max_degree(); ++k)
                if (g.q && g.m) out.Q2.c[k].block(qo[i], mo[j], g.q, g.m) = g.Q2.c[k];
            for (int k = 0; k <= g.R0.max_degree(); ++k)
                if (g.q && g.n) out.R0.c[k].block(qo[i], no[j], g.q, g.n) = g.R0.c[k];
            for (int a = 0; a <= g.R1.ds; ++a)
                for (int b = 0; b <= g.R1.dt; ++b)
                    if (g.q && g.n)
                        out.R1.at(a, b).block(qo[i], no[j], g.q, g.n) = g.R1.at(a, b);
            for (int a = 0; a <= g.R2.ds; ++a)
                for (int b = 0; b <= g.R2.dt; ++b)
                    if (g.q && g.n)
                        out.R2.at(a, b).block(qo[i], no[j], g.q, g.n) = g.R2.at(a, b);
        }
    out.Q1 = trim(out.Q1);
    out.Q2 = trim(out.Q2);
    out.R0 = trim(out.R0);
    out.R1 = trim(out.R1);
    out.R2 = trim(out.R2);
    return out;
}

void gauss_legendre(int N, double a, double b, VectorXd& nodes, VectorXd& weights) {
    // Newton iteration on Legendre P_N over [-1,1], then affine map to [a,b].
    nodes.resize(N);
    weights.resize(N);
    for (int i = 0; i < N; ++i) {
        // Chebyshev-like initial guess (descending), refined by Newton.
        double x = std::cos(M_PI * (i + 0.75) / (N + 0.5));
        for (int it = 0; it < 100; ++it) {
            // evaluate P_N(x) and P'_N(x) by recurrence
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= N; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            double dp = N * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= N; ++k) {
            double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        double dp = N * (x * p1 - p0) / (x * x - 1.0);
        // store ascending
        nodes[N - 1 - i] = 0.5 * (b - a) * x + 0.5 * (a + b);
        weights[N - 1 - i] = (b - a) / ((1.0 - x * x) * dp * dp);
    }
}

MatrixXd discretize(const FourPiOp& op, int N) {
    if (N < 4) throw std::invalid_argument("discretize: N >= 4 required");
    VectorXd s, w;
    gauss_legendre(N, -1.0, 0.0, s, w);
    VectorXd sw = w.cwiseSqrt();
    const int m = op.m, n = op.n, p = op.p, q = op.q;
    MatrixXd M = MatrixXd::Zero(p + q * N, m + n * N);
    if (p) {
        if (m) M.topLeftCorner(p, m) = op.P;
        for (int j = 0; j < N && n; ++j)
            M.block(0, m + n * j, p, n) = evaluate(op.Q1, s[j]) * sw[j];
    }
    if (!q) return M;

    // barycentric weights of the GL nodes (for Lagrange basis integrals)
    VectorXd lam = VectorXd::Ones(N);
    for (int j = 0; j < N; ++j) {
        double prod = 1.0;
        for (int k = 0; k < N; ++k)
            if (k != j) prod *= (s[j] - s[k]);
        lam[j] = 1.0 / prod;
    }
    auto lagrange = [&](int j, double t) {
        double prod = 1.0;
        for (int k = 0; k < N; ++k)
            if (k != j) prod *= (t - s[k]);
        return lam[j] * prod;
    };

    const int maxdeg = std::max(op.R1.dt, op.R2.dt) + N;
    const int nq = (maxdeg + 2) / 2 + 2;  // quadrature order for split integrals
    for (int i = 0; i < N; ++i) {
        if (n) {
            VectorXd t1, w1, t2, w2;
            gauss_legendre(nq, -1.0, s[i], t1, w1);
            gauss_legendre(nq, s[i], 0.0, t2, w2);
            for (int j = 0; j < N; ++j) {
                MatrixXd B = MatrixXd::Zero(q, n);
                for (int k = 0; k < nq; ++k) {
                    B += w1[k] * lagrange(j, t1[k]) * evaluate(op.R1, s[i], t1[k]);
                    B += w2[k] * lagrange(j, t2[k]) * evaluate(op.R2, s[i], t2[k]);
                }
                if (j == i) B += evaluate(op.R0, s[i]);
                M.block(p + q * i, m + n * j, q, n) = (sw[i] / sw[j]) * B;
            }
        }
        if (m) M.block(p + q * i, 0, q, m) = sw[i] * evaluate(op.Q2, s[i]);
    }
    return M;
}

VectorXd discretize_vec(const RL2Vec& v, int N, int m, int n) {
    VectorXd s, w;
    gauss_legendre(N, -1.0, 0.0, s, w);
    VectorXd sw = w.cwiseSqrt();
    VectorXd out = VectorXd::Zero(m + n * N);
    out.head(m) = v.finite;
    for (int j = 0; j < N && n; ++j)
        out.segment(m + n * j, n) = sw[j] * evaluate(v.fun, s[j]).col(0);
    return out;
}

bool is_right_annihilator(const FourPiOp& R, const FourPiOp& S, double tol, int N) {
    if (R.m != S.p || R.n != S.q) throw std::invalid_argument("annihilator: dims");
    // R o S must vanish: test on a polynomial basis up to degree 3.
    FourPiOp RS = compose(R, S);
    const double scl = std::max(1.0, R.max_abs_param() * S.max_abs_param());
    for (int i = 0; i < S.m; ++i) {
        RL2Vec v{VectorXd::Unit(S.m, i), PolyMat1(S.n, 1)};
        RL2Vec y = apply(RS, v);
        if (norm(y) > 1e-8 * scl) return false;
    }
    for (int i = 0; i < S.n; ++i)
        for (int d = 0; d <= 3; ++d) {
            PolyMat1 f(S.n, 1, d);
            f.c[d](i, 0) = 1.0;
            RL2Vec v{VectorXd::Zero(S.m), f};
            RL2Vec y = apply(RS, v);
            if (norm(y) > 1e-8 * scl) return false;
        }
    // Coercivity of the annihilator: smallest eigenvalue of S* o S.
    MatrixXd G = discretize(compose(adjoint(S), S), N);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (G + G.transpose()));
    return es.eigenvalues().minCoeff() >= tol;
}

}  // namespace piesof
