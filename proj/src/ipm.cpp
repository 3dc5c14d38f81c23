#include "piesof/ipm.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace piesof {

std::string to_string(SdpStatus s) {
    switch (s) {
        case SdpStatus::Optimal: return "optimal";
        case SdpStatus::Inaccurate: return "inaccurate";
        case SdpStatus::Infeasible: return "infeasible";
        case SdpStatus::NumericalError: return "numerical_error";
    }
    return "unknown";
}

namespace {

// Constraint entries grouped per PSD block.
struct BlockCons {
    std::vector<int> cons;                        // constraint indices
    std::vector<std::vector<SdpEntry>> entries;   // aligned with cons
};

// <A, G> where A is the symmetric sparse matrix given by entries (r <= c,
// mirrored) and G an arbitrary square matrix (its symmetric part is used).
double sym_inner(const std::vector<SdpEntry>& es, const MatrixXd& G) {
    double acc = 0.0;
    for (const auto& e : es)
        acc += (e.r == e.c) ? e.value * G(e.r, e.r) : e.value * (G(e.r, e.c) + G(e.c, e.r));
    return acc;
}

void add_scaled(const std::vector<SdpEntry>& es, double coef, MatrixXd& M) {
    for (const auto& e : es) {
        M(e.r, e.c) += coef * e.value;
        if (e.r != e.c) M(e.c, e.r) += coef * e.value;
    }
}

// Largest t with S + t*dS PSD, via eigmin of L^{-1} dS L^{-T} for S = L L^T.
double max_step(const Eigen::LLT<MatrixXd>& llt, const MatrixXd& dS) {
    const auto& L = llt.matrixL();
    MatrixXd W = L.solve(dS);
    W = L.solve(W.transpose()).eval();
    const double lmin =
        Eigen::SelfAdjointEigenSolver<MatrixXd>(W, Eigen::EigenvaluesOnly).eigenvalues()(0);
    if (lmin >= -1e-14) return std::numeric_limits<double>::infinity();
    return -1.0 / lmin;
}

struct Kkt {
    // Factorization of the regularized augmented system
    //   [M + eps I   Af] [dy]   [h ]
    //   [Af^T     -eps I] [df] = [rf]
    // solved by block elimination with iterative refinement against the
    // unregularized system.
    Eigen::LLT<MatrixXd> mfac;
    Eigen::LLT<MatrixXd> sfac;  // Af^T (M+eps)^{-1} Af + eps I
    MatrixXd W;                 // (M+eps)^{-1} Af
    const MatrixXd* M = nullptr;
    const MatrixXd* Af = nullptr;
    bool ok = false;

    bool factor(const MatrixXd& Mmat, const MatrixXd& Afmat) {
        M = &Mmat;
        Af = &Afmat;
        const int p = static_cast<int>(Mmat.rows());
        double scale = 1.0;
        for (int i = 0; i < p; ++i) scale = std::max(scale, Mmat(i, i));
        double eps = 1e-13 * scale;
        for (int attempt = 0; attempt < 6; ++attempt, eps *= 100.0) {
            MatrixXd Mr = Mmat;
            Mr.diagonal().array() += eps;
            mfac.compute(Mr);
            if (mfac.info() != Eigen::Success) continue;
            if (Afmat.cols() > 0) {
                W = mfac.solve(Afmat);
                MatrixXd S = Afmat.transpose() * W;
                S.diagonal().array() += eps;
                sfac.compute(S);
                if (sfac.info() != Eigen::Success) continue;
            }
            ok = true;
            return true;
        }
        return false;
    }

    void solve_once(const VectorXd& h, const VectorXd& rf, VectorXd& dy, VectorXd& df) const {
        VectorXd t = mfac.solve(h);
        if (Af->cols() > 0) {
            df = sfac.solve(Af->transpose() * t - rf);
            dy = t - W * df;
        } else {
            df.resize(0);
            dy = t;
        }
    }

    void solve(const VectorXd& h, const VectorXd& rf, VectorXd& dy, VectorXd& df) const {
        solve_once(h, rf, dy, df);
        for (int it = 0; it < 2; ++it) {  // refinement vs. the true system
            VectorXd r1 = h - (*M) * dy;
            VectorXd r2;
            if (Af->cols() > 0) {
                r1 -= (*Af) * df;
                r2 = rf - Af->transpose() * dy;
            } else {
                r2.resize(0);
            }
            VectorXd cy, cf;
            solve_once(r1, r2, cy, cf);
            dy += cy;
            if (Af->cols() > 0) df += cf;
        }
    }
};

}  // namespace

SdpSolution solve_sdp(const SdpProblem& sdp, const SdpSettings& settings) {
    sdp.validate();
    const int p = sdp.num_constraints();
    const int nb = static_cast<int>(sdp.psd_sizes.size());
    const int nf = sdp.n_free;
    const double tol = settings.tol;

    SdpSolution sol;
    sol.X.resize(nb);
    for (int i = 0; i < nb; ++i) sol.X[i] = MatrixXd::Zero(sdp.psd_sizes[i], sdp.psd_sizes[i]);
    sol.f = VectorXd::Zero(nf);
    sol.y = VectorXd::Zero(p);

    if (p == 0) {
        sol.status = SdpStatus::Optimal;
        sol.message = "no constraints";
        return sol;
    }

    // Group constraint entries per block; assemble the dense free-part matrix.
    std::vector<BlockCons> bc(nb);
    for (int j = 0; j < p; ++j) {
        std::vector<std::vector<SdpEntry>> per(nb);
        for (const auto& e : sdp.rows[j]) per[e.block].push_back(e);
        for (int i = 0; i < nb; ++i) {
            if (per[i].empty()) continue;
            bc[i].cons.push_back(j);
            bc[i].entries.push_back(std::move(per[i]));
        }
    }
    MatrixXd Af = MatrixXd::Zero(p, nf);
    for (int j = 0; j < p; ++j)
        for (const auto& [idx, v] : sdp.free_rows[j]) Af(j, idx) += v;

    // Objective per block (dense) and norms for scaling/termination.
    std::vector<MatrixXd> C(nb);
    for (int i = 0; i < nb; ++i) C[i] = MatrixXd::Zero(sdp.psd_sizes[i], sdp.psd_sizes[i]);
    for (const auto& e : sdp.cost) {
        C[e.block](e.r, e.c) += e.value;
        if (e.r != e.c) C[e.block](e.c, e.r) += e.value;
    }
    VectorXd cf = sdp.cost_free.size() ? sdp.cost_free : VectorXd::Zero(nf);

    VectorXd anorm(p);
    for (int j = 0; j < p; ++j) {
        double s = 0.0;
        for (const auto& e : sdp.rows[j]) s += (e.r == e.c ? 1.0 : 2.0) * e.value * e.value;
        for (const auto& [idx, v] : sdp.free_rows[j]) {
            (void)idx;
            s += v * v;
        }
        anorm[j] = std::sqrt(s);
    }
    const double max_anorm = anorm.maxCoeff();
    double normC = cf.squaredNorm();
    for (int i = 0; i < nb; ++i) normC += C[i].squaredNorm();
    normC = std::sqrt(normC);
    const double normb = sdp.b.norm();

    int ntot = 0;
    for (int s : sdp.psd_sizes) ntot += s;
    if (ntot == 0) {
        // Pure linear system on the free variables.
        VectorXd fhat = Af.colPivHouseholderQr().solve(sdp.b);
        const double res = (Af * fhat - sdp.b).norm() / (1.0 + normb);
        sol.f = fhat;
        sol.primal_res = res;
        sol.status = res <= tol ? SdpStatus::Optimal : SdpStatus::Infeasible;
        sol.message = "no PSD blocks: dense least-squares path";
        return sol;
    }

    // Initial interior point.
    const double bmax = sdp.b.cwiseAbs().maxCoeff();
    auto clampd = [](double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); };
    const double xi_p =
        clampd(std::max({10.0, std::sqrt(double(ntot)), double(ntot) * bmax / (1.0 + max_anorm)}),
               10.0, 1e7);
    const double xi_d = clampd(std::max({10.0, std::sqrt(double(ntot)), max_anorm, normC}), 10.0, 1e7);
    std::vector<MatrixXd> X(nb), Z(nb);
    for (int i = 0; i < nb; ++i) {
        X[i] = xi_p * MatrixXd::Identity(sdp.psd_sizes[i], sdp.psd_sizes[i]);
        Z[i] = xi_d * MatrixXd::Identity(sdp.psd_sizes[i], sdp.psd_sizes[i]);
    }
    VectorXd f = VectorXd::Zero(nf), y = VectorXd::Zero(p);

    auto eval_primal = [&](const std::vector<MatrixXd>& Xc, const VectorXd& fc) {
        VectorXd ax(p);
        for (int j = 0; j < p; ++j) ax[j] = sdp.eval_row(j, Xc, fc);
        return ax;
    };

    double best_measure = std::numeric_limits<double>::infinity();
    SdpSolution best = sol;
    best.message = "no iterate accepted";
    int slow_count = 0;
    int plateau_count = 0;

    for (int iter = 0; iter < settings.max_iter; ++iter) {
        // Residuals and convergence measures.
        VectorXd rp = sdp.b - eval_primal(X, f);
        std::vector<MatrixXd> Rd(nb);
        for (int i = 0; i < nb; ++i) {
            MatrixXd Ay = MatrixXd::Zero(sdp.psd_sizes[i], sdp.psd_sizes[i]);
            for (size_t t = 0; t < bc[i].cons.size(); ++t)
                add_scaled(bc[i].entries[t], y[bc[i].cons[t]], Ay);
            Rd[i] = C[i] - Ay - Z[i];
        }
        VectorXd rf = cf - Af.transpose() * y;

        double pobj = cf.dot(f), gapXZ = 0.0, dual_sq = rf.squaredNorm();
        for (int i = 0; i < nb; ++i) {
            pobj += C[i].cwiseProduct(X[i]).sum();
            gapXZ += X[i].cwiseProduct(Z[i]).sum();
            dual_sq += Rd[i].squaredNorm();
        }
        const double dobj = sdp.b.dot(y);
        const double mu = gapXZ / ntot;
        const double prim_rel = rp.norm() / (1.0 + normb);
        const double dual_rel = std::sqrt(dual_sq) / (1.0 + normC);
        const double gap_rel = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
        const double measure = std::max({prim_rel, dual_rel, gap_rel});

        if (settings.verbose)
            std::printf("ipm %3d  mu %9.2e  prim %9.2e  dual %9.2e  gap %9.2e  obj %+.6e\n", iter,
                        mu, prim_rel, dual_rel, gap_rel, pobj);

        plateau_count = measure < 0.99 * best_measure ? 0 : plateau_count + 1;
        if (measure < best_measure) {
            best_measure = measure;
            best.X = X;
            best.f = f;
            best.y = y;
            best.primal_obj = pobj;
            best.dual_obj = dobj;
            best.primal_res = prim_rel;
            best.dual_res = dual_rel;
            best.gap = gap_rel;
            best.iterations = iter;
        }
        if (measure <= tol) {
            best.status = SdpStatus::Optimal;
            best.message = "converged";
            return best;
        }
        // Once complementarity is exhausted, further iterations cannot move
        // the residuals; return the best iterate instead of grinding on.
        // Problems without a strictly feasible point end here routinely.
        if (plateau_count >= 8 && mu <= 1e-9) {
            best.status = best_measure < 1e-4 ? SdpStatus::Inaccurate : SdpStatus::NumericalError;
            best.message = "stalled (complementarity exhausted)";
            return best;
        }

        // Primal infeasibility certificate: y with b'y = 1, -A*(y) PSD, Af'y = 0.
        if (dobj > std::max(1.0, 10.0 * std::abs(pobj))) {
            VectorXd yh = y / dobj;
            const double scale = 1.0 + yh.lpNorm<Eigen::Infinity>() * max_anorm;
            double lam_min = 0.0;
            for (int i = 0; i < nb; ++i) {
                MatrixXd Zc = MatrixXd::Zero(sdp.psd_sizes[i], sdp.psd_sizes[i]);
                for (size_t t = 0; t < bc[i].cons.size(); ++t)
                    add_scaled(bc[i].entries[t], -yh[bc[i].cons[t]], Zc);
                lam_min = std::min(
                    lam_min, Eigen::SelfAdjointEigenSolver<MatrixXd>(Zc, Eigen::EigenvaluesOnly)
                                 .eigenvalues()(0));
            }
            const double free_viol =
                nf > 0 ? (Af.transpose() * yh).lpNorm<Eigen::Infinity>() : 0.0;
            if (lam_min >= -1e-8 * scale && free_viol <= 1e-8 * scale) {
                best.status = SdpStatus::Infeasible;
                best.y = yh;
                best.message = "primal infeasibility certificate (b'y = 1, -A*(y) PSD)";
                return best;
            }
        }

        // Factor X, Z and form Zinv.
        std::vector<Eigen::LLT<MatrixXd>> xf(nb), zf(nb);
        std::vector<MatrixXd> Zinv(nb);
        bool fact_ok = true;
        for (int i = 0; i < nb && fact_ok; ++i) {
            xf[i].compute(X[i]);
            zf[i].compute(Z[i]);
            if (xf[i].info() != Eigen::Success || zf[i].info() != Eigen::Success) fact_ok = false;
            else Zinv[i] = zf[i].solve(MatrixXd::Identity(sdp.psd_sizes[i], sdp.psd_sizes[i]));
        }
        if (!fact_ok) {
            best.status = best_measure < 1e-4 ? SdpStatus::Inaccurate : SdpStatus::NumericalError;
            best.message = "iterate lost positive definiteness";
            return best;
        }

        // Schur complement M_jk = <A_j, X A_k Zinv> accumulated per block.
        MatrixXd M = MatrixXd::Zero(p, p);
        for (int i = 0; i < nb; ++i) {
            const int s = sdp.psd_sizes[i];
            const auto& cons = bc[i].cons;
            MatrixXd U(s, s);
            for (size_t tk = 0; tk < cons.size(); ++tk) {
                U.setZero();
                for (const auto& e : bc[i].entries[tk]) {
                    U.noalias() += e.value * (X[i].col(e.r) * Zinv[i].row(e.c));
                    if (e.r != e.c) U.noalias() += e.value * (X[i].col(e.c) * Zinv[i].row(e.r));
                }
                const int k = cons[tk];
                for (size_t tj = 0; tj <= tk; ++tj) {
                    const double v = sym_inner(bc[i].entries[tj], U);
                    M(cons[tj], k) += v;
                    if (cons[tj] != k) M(k, cons[tj]) += v;
                }
            }
        }

        Kkt kkt;
        if (!kkt.factor(M, Af)) {
            best.status = best_measure < 1e-4 ? SdpStatus::Inaccurate : SdpStatus::NumericalError;
            best.message = "Schur factorization failed";
            return best;
        }

        // h(sigma, Xi) = b - Af f + A(X Rd Zinv) + A(Xi Zinv) - sigma*mu*A(Zinv)
        std::vector<MatrixXd> XRdZ(nb);
        for (int i = 0; i < nb; ++i) XRdZ[i] = X[i] * Rd[i] * Zinv[i];
        auto schur_rhs = [&](double sigmu, const std::vector<MatrixXd>* Xi) {
            VectorXd h = sdp.b - Af * f;
            for (int i = 0; i < nb; ++i) {
                MatrixXd G = XRdZ[i];
                if (Xi) G += (*Xi)[i] * Zinv[i];
                if (sigmu != 0.0) G -= sigmu * Zinv[i];
                for (size_t t = 0; t < bc[i].cons.size(); ++t)
                    h[bc[i].cons[t]] += sym_inner(bc[i].entries[t], G);
            }
            return h;
        };
        auto recover = [&](const VectorXd& dy, double sigmu, const std::vector<MatrixXd>* Xi,
                           std::vector<MatrixXd>& dX, std::vector<MatrixXd>& dZ) {
            dX.resize(nb);
            dZ.resize(nb);
            for (int i = 0; i < nb; ++i) {
                MatrixXd Ady = MatrixXd::Zero(sdp.psd_sizes[i], sdp.psd_sizes[i]);
                for (size_t t = 0; t < bc[i].cons.size(); ++t)
                    add_scaled(bc[i].entries[t], dy[bc[i].cons[t]], Ady);
                dZ[i] = Rd[i] - Ady;
                MatrixXd T = -X[i] * dZ[i] * Zinv[i] - X[i];
                if (sigmu != 0.0) T += sigmu * Zinv[i];
                if (Xi) T -= (*Xi)[i] * Zinv[i];
                dX[i] = 0.5 * (T + T.transpose());
            }
        };

        // Predictor (affine scaling).
        VectorXd dy_a, df_a;
        kkt.solve(schur_rhs(0.0, nullptr), rf, dy_a, df_a);
        std::vector<MatrixXd> dX_a, dZ_a;
        recover(dy_a, 0.0, nullptr, dX_a, dZ_a);

        double ap = 1.0, ad = 1.0;
        for (int i = 0; i < nb; ++i) {
            ap = std::min(ap, max_step(xf[i], dX_a[i]));
            ad = std::min(ad, max_step(zf[i], dZ_a[i]));
        }
        double gap_aff = 0.0;
        for (int i = 0; i < nb; ++i)
            gap_aff += (X[i] + ap * dX_a[i]).cwiseProduct(Z[i] + ad * dZ_a[i]).sum();
        const double mu_aff = gap_aff / ntot;
        double sigma = std::pow(std::max(mu_aff, 0.0) / mu, 3.0);
        sigma = clampd(sigma, 1e-12, 1.0);

        // Corrector with Mehrotra second-order term Xi = dX_a dZ_a.
        std::vector<MatrixXd> Xi(nb);
        for (int i = 0; i < nb; ++i) Xi[i] = dX_a[i] * dZ_a[i];
        VectorXd dy, df;
        kkt.solve(schur_rhs(sigma * mu, &Xi), rf, dy, df);
        std::vector<MatrixXd> dX, dZ;
        recover(dy, sigma * mu, &Xi, dX, dZ);

        const double gamma = best_measure < 100.0 * tol ? 0.99 : 0.98;
        double sp = 1.0, sd = 1.0;
        for (int i = 0; i < nb; ++i) {
            sp = std::min(sp, gamma * max_step(xf[i], dX[i]));
            sd = std::min(sd, gamma * max_step(zf[i], dZ[i]));
        }
        sp = std::min(sp, 1.0);
        sd = std::min(sd, 1.0);

        for (int i = 0; i < nb; ++i) {
            X[i] += sp * dX[i];
            Z[i] += sd * dZ[i];
            X[i] = 0.5 * (X[i] + X[i].transpose()).eval();
            Z[i] = 0.5 * (Z[i] + Z[i].transpose()).eval();
        }
        f += sp * df;
        y += sd * dy;

        slow_count = (sp < 1e-6 && sd < 1e-6) ? slow_count + 1 : 0;
        if (slow_count >= 4) {
            best.status = SdpStatus::Inaccurate;
            best.message = "stalled (vanishing step lengths)";
            return best;
        }
    }

    best.status = SdpStatus::Inaccurate;
    best.message = "iteration limit reached";
    return best;
}

}  // namespace piesof
