#include "piesof/sim.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace piesof {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kBlowUp = 1e10;

// Chebyshev extreme points on [a, b] (descending: pts[0] = b, pts[N] = a)
// and the corresponding differentiation matrix.
void cheb_pts_diff(int N, double a, double b, VectorXd& pts, MatrixXd& D) {
    if (N < 1) throw std::invalid_argument("cheb_pts_diff: N must be >= 1");
    VectorXd x(N + 1), c(N + 1);
    for (int k = 0; k <= N; ++k) {
        x[k] = std::cos(kPi * k / N);
        c[k] = ((k == 0 || k == N) ? 2.0 : 1.0) * ((k % 2 == 0) ? 1.0 : -1.0);
    }
    D.resize(N + 1, N + 1);
    for (int i = 0; i <= N; ++i) {
        for (int j = 0; j <= N; ++j) {
            D(i, j) = (i == j) ? 0.0 : (c[i] / c[j]) / (x[i] - x[j]);
        }
    }
    for (int i = 0; i <= N; ++i) D(i, i) = -D.row(i).sum();
    pts.resize(N + 1);
    for (int k = 0; k <= N; ++k) pts[k] = a + (x[k] + 1.0) * (b - a) / 2.0;
    D *= 2.0 / (b - a);
}

// Barycentric interpolation weights for evaluating a polynomial known at the
// Chebyshev extreme points pts at abscissa t (row vector of coefficients).
VectorXd bary_interp_row(double t, const VectorXd& pts) {
    const int n = static_cast<int>(pts.size());
    VectorXd row = VectorXd::Zero(n);
    VectorXd q(n);
    double qsum = 0.0;
    for (int j = 0; j < n; ++j) {
        double w = (j % 2 == 0) ? 1.0 : -1.0;
        if (j == 0 || j == n - 1) w *= 0.5;
        const double d = t - pts[j];
        if (std::abs(d) < 1e-13) {
            row[j] = 1.0;
            return row;
        }
        q[j] = w / d;
        qsum += q[j];
    }
    return q / qsum;
}

// Eigenvalues of the pseudospectral approximation of the DDE generator
// x'(s) = dx/ds on [-tau_K, 0] with the dynamics enforced at s = 0.
std::vector<std::complex<double>> collocation_roots(const MatrixXd& A0c,
                                                    const std::vector<MatrixXd>& Aic,
                                                    const std::vector<double>& taus, int N) {
    const int m = static_cast<int>(A0c.rows());
    VectorXd pts;
    MatrixXd D;
    cheb_pts_diff(N, -taus.back(), 0.0, pts, D);
    MatrixXd M = MatrixXd::Zero((N + 1) * m, (N + 1) * m);
    for (int i = 0; i <= N; ++i) {
        for (int j = 0; j <= N; ++j) {
            M.block(i * m, j * m, m, m) = D(i, j) * MatrixXd::Identity(m, m);
        }
    }
    // First block row: the delay-differential dynamics at s = 0 (pts[0] = 0).
    VectorXd r0 = bary_interp_row(0.0, pts);
    MatrixXd top = MatrixXd::Zero(m, (N + 1) * m);
    for (int j = 0; j <= N; ++j) top.block(0, j * m, m, m) = r0[j] * A0c;
    for (size_t i = 0; i < taus.size(); ++i) {
        VectorXd ri = bary_interp_row(-taus[i], pts);
        for (int j = 0; j <= N; ++j) top.block(0, j * m, m, m) += ri[j] * Aic[i];
    }
    M.topRows(m) = top;

    Eigen::EigenSolver<MatrixXd> es(M, /*computeEigenvectors=*/false);
    std::vector<std::complex<double>> vals;
    vals.reserve(M.rows());
    for (int i = 0; i < M.rows(); ++i) {
        std::complex<double> v = es.eigenvalues()[i];
        if (std::isfinite(v.real()) && std::isfinite(v.imag())) vals.push_back(v);
    }
    std::sort(vals.begin(), vals.end(), [](const auto& a, const auto& b) {
        if (a.real() != b.real()) return a.real() > b.real();
        return a.imag() > b.imag();
    });
    return vals;
}

}  // namespace

Trajectory simulate(const DdeSystem& sys, const SofGain& L, const HistoryPoly& history,
                    double t_end, double dt) {
    sys.validate();
    const int m = sys.m();
    if (L.L.rows() != sys.n_u() || L.L.cols() != sys.n_y())
        throw std::invalid_argument("simulate: gain dimensions do not match the system");
    if (history.coeffs.rows() != m)
        throw std::invalid_argument("simulate: history dimension does not match the system");
    if (!(dt > 0.0) || !(t_end > 0.0))
        throw std::invalid_argument("simulate: dt and t_end must be positive");
    if (dt > sys.taus.front() + 1e-12)
        throw std::invalid_argument("simulate: dt must not exceed the smallest delay");

    MatrixXd A0c;
    std::vector<MatrixXd> Aic;
    closed_loop_dde(sys, L, A0c, Aic);

    const int nsteps = static_cast<int>(std::ceil(t_end / dt - 1e-12));
    std::vector<VectorXd> xs(nsteps + 1, VectorXd::Zero(m));
    std::vector<VectorXd> fs(nsteps + 1, VectorXd::Zero(m));

    // Delayed state lookup: exact polynomial history for t <= 0, cubic
    // Hermite interpolation of the stored trajectory afterwards.
    auto hist = [&](double t) -> VectorXd {
        if (t <= 0.0) return history.value(t);
        const double pos = t / dt;
        int k = std::min(static_cast<int>(pos), nsteps - 1);
        const double u = pos - k;
        const double omu = 1.0 - u;
        const double h00 = (1.0 + 2.0 * u) * omu * omu;
        const double h10 = u * omu * omu;
        const double h01 = u * u * (3.0 - 2.0 * u);
        const double h11 = u * u * (u - 1.0);
        return h00 * xs[k] + (h10 * dt) * fs[k] + h01 * xs[k + 1] + (h11 * dt) * fs[k + 1];
    };

    auto rhs = [&](double t, const VectorXd& x) -> VectorXd {
        VectorXd dx = A0c * x;
        for (size_t i = 0; i < sys.taus.size(); ++i) dx += Aic[i] * hist(t - sys.taus[i]);
        return dx;
    };

    auto output = [&](double t, const VectorXd& x) -> VectorXd {
        VectorXd y = sys.C * x;
        for (size_t i = 0; i < sys.taus.size(); ++i) y += sys.C_list[i] * hist(t - sys.taus[i]);
        return L.L * y;
    };

    Trajectory traj;
    traj.dt = dt;
    xs[0] = history.value(0.0);
    fs[0] = rhs(0.0, xs[0]);
    traj.times.push_back(0.0);
    traj.states.push_back(xs[0]);
    traj.inputs.push_back(output(0.0, xs[0]));

    for (int k = 0; k < nsteps; ++k) {
        const double t = k * dt;
        const VectorXd& x = xs[k];
        VectorXd k1 = fs[k];
        VectorXd k2 = rhs(t + 0.5 * dt, x + 0.5 * dt * k1);
        VectorXd k3 = rhs(t + 0.5 * dt, x + 0.5 * dt * k2);
        VectorXd k4 = rhs(t + dt, x + dt * k3);
        VectorXd xn = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        const double tn = (k + 1) * dt;
        if (!xn.allFinite() || xn.norm() > kBlowUp) {
            traj.diverged = true;
            traj.blow_up_time = tn;
            break;
        }
        xs[k + 1] = xn;
        fs[k + 1] = rhs(tn, xn);
        traj.times.push_back(tn);
        traj.states.push_back(xn);
        traj.inputs.push_back(output(tn, xn));
    }
    return traj;
}

SpectrumEstimate rightmost_root(const DdeSystem& sys, const SofGain& L, int N) {
    sys.validate();
    if (L.L.rows() != sys.n_u() || L.L.cols() != sys.n_y())
        throw std::invalid_argument("rightmost_root: gain dimensions do not match the system");
    if (N < 4) throw std::invalid_argument("rightmost_root: N must be >= 4");

    MatrixXd A0c;
    std::vector<MatrixXd> Aic;
    closed_loop_dde(sys, L, A0c, Aic);

    auto coarse = collocation_roots(A0c, Aic, sys.taus, N);
    auto fine = collocation_roots(A0c, Aic, sys.taus, 2 * N);
    if (coarse.empty() || fine.empty())
        throw std::runtime_error("rightmost_root: eigenvalue computation returned no roots");

    SpectrumEstimate est;
    est.order = 2 * N;
    est.rightmost_real = fine.front().real();
    est.drift = std::abs(fine.front().real() - coarse.front().real());
    est.converged = est.drift <= 1e-4;
    const size_t keep = std::min<size_t>(fine.size(), 20);
    est.leading_roots.assign(fine.begin(), fine.begin() + keep);
    return est;
}

double decay_fit(const Trajectory& traj, double t_start) {
    // Least squares on log||x(t)||: slope b of  log||x|| ~ a + b t,
    // reported as the decay rate alpha = -b.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (size_t k = 0; k < traj.times.size(); ++k) {
        if (traj.times[k] < t_start) continue;
        const double nrm = traj.states[k].norm();
        if (nrm <= 1e-300) continue;
        const double t = traj.times[k], y = std::log(nrm);
        sx += t;
        sy += y;
        sxx += t * t;
        sxy += t * y;
        ++n;
    }
    if (n < 2) throw std::invalid_argument("decay_fit: not enough samples past t_start");
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-300) throw std::runtime_error("decay_fit: degenerate time grid");
    const double slope = (n * sxy - sx * sy) / denom;
    return -slope;
}

void write_csv(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv: cannot open " + path);
    const int m = traj.states.empty() ? 0 : static_cast<int>(traj.states.front().size());
    const int nu = traj.inputs.empty() ? 0 : static_cast<int>(traj.inputs.front().size());
    out << "t";
    for (int i = 1; i <= m; ++i) out << ",x" << i;
    for (int i = 1; i <= nu; ++i) out << ",u" << i;
    out << "\n";
    out << std::setprecision(16);
    for (size_t k = 0; k < traj.times.size(); ++k) {
        out << traj.times[k];
        for (int i = 0; i < m; ++i) out << "," << traj.states[k][i];
        for (int i = 0; i < nu; ++i) out << "," << traj.inputs[k][i];
        out << "\n";
    }
    if (!out.good()) throw std::runtime_error("write_csv: write failed for " + path);
}

}  // namespace piesof
