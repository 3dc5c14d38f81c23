// Validation of synthesized gains: time-domain simulation of the closed-loop
// DDE (method of steps) and rightmost characteristic-root estimation
// (Chebyshev pseudospectral collocation of the DDE generator).
#pragma once

#include <complex>
#include <string>
#include <vector>

#include "piesof/pie_rep.hpp"

namespace piesof {

struct Trajectory {
    double dt = 0.0;
    std::vector<double> times;
    std::vector<VectorXd> states;  // x(t_k)
    std::vector<VectorXd> inputs;  // u(t_k) = L y(t_k)
    bool diverged = false;
    double blow_up_time = 0.0;  // meaningful when diverged
};

struct SpectrumEstimate {
    double rightmost_real = 0.0;
    std::vector<std::complex<double>> leading_roots;  // descending real part
    int order = 0;      // collocation order N of the refined run
    bool converged = false;
    double drift = 0.0;  // |rightmost(N) - rightmost(2N)|
};

// Method-of-steps integration of the closed-loop DDE with classical RK4;
// delayed values by cubic Hermite interpolation of the stored trajectory.
// Requires dt <= min tau_i. Divergence (non-finite or astronomically large
// state) stops integration and is flagged with the blow-up time.
Trajectory simulate(const DdeSystem& sys, const SofGain& L, const HistoryPoly& history,
                    double t_end, double dt = 0.01);

// Rightmost characteristic roots of the closed-loop DDE from eigenvalues of
// the pseudospectral generator discretization on [-tau_K, 0]; convergence is
// certified by comparing orders N and 2N (|drift| <= 1e-4).
SpectrumEstimate rightmost_root(const DdeSystem& sys, const SofGain& L, int N = 32);

// Least-squares slope of log||x(t)|| over [t_start, end]: empirical decay
// rate alpha (positive for decaying trajectories).
double decay_fit(const Trajectory& traj, double t_start);

// CSV with header t,x1..xm,u1..u_nu, one row per step, full precision.
void write_csv(const Trajectory& traj, const std::string& path);

}  // namespace piesof
