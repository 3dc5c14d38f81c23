// Two-step static output-feedback synthesis on the integral-equation form of
// a delay system, plus independent certificate verification.
//
// Stage 1 solves the state-feedback design inequality for (P, Z) and forms
// the state-feedback operator K with K o P = Z (least-squares polynomial
// right division). Stage 2 fixes K and solves the gain-recovery inequality
// for (P, F, Z); the output-feedback gain is L = F^{-1} Z, and the same P
// certifies the closed loop u = L y at the designed decay rate. A bisection
// driver maximizes the certified rate alpha.
#pragma once

#include <string>

#include "piesof/lpi_core.hpp"
#include "piesof/pie_rep.hpp"

namespace piesof {

struct SynthOptions {
    int degree = 1;       // basis degree of the stage-1 certificate
    int max_degree = 3;   // degree is raised up to this bound on infeasibility
    double delta = 1e-6;  // strength of P >= delta*I
    double eps = 1e-4;    // strictness of the stage-2 F block
    double alpha_lo = 0.0;
    double alpha_hi = 10.0;   // bisection upper bound (also caps the
                              // design-rate search of the stage-2 retry)
    double alpha_tol = 1e-3;  // bisection width tolerance
    int max_trials = 30;      // bisection trial cap
    double backoff = 0.5;     // when stage 2 fails at the trial rate, the
                              // state feedback is redesigned part-way up the
                              // spare rate interval; this is the fraction
                              // stepped back from the strongest design
    int division_degree = -1;  // kernel degree of K (default 2*degree + 1)
    double norm_bound = 100.0;  // Gram trace cap on every P variable; pins the
                                // free scaling of the inequalities and keeps P
                                // away from its delta*I floor
    LpiSettings solver;
    bool verbose = false;
};

struct StageDiagnostics {
    bool feasible = false;
    SdpStatus status = SdpStatus::NumericalError;
    double eq_residual = 0.0;
    double op_residual = 0.0;
    double margin = 0.0;  // maximized strictness margin; > 0 iff feasible
    int iterations = 0;
    int degree = 0;
    double alpha = 0.0;  // rate this stage was solved at
};

// Numeric margins of a closed-loop certificate (see verify_certificate).
struct CertificateCheck {
    bool valid = false;
    bool lhs_ok = false;
    bool p_ok = false;
    double lhs_max_eig = 0.0;  // largest eigenvalue of the discretized
                               // sym(T* P (A_cl + alpha T)); must be <= 1e-6
    double p_min_eig = 0.0;    // smallest eigenvalue of discretize(P);
                               // must be >= delta - 1e-6
};

struct SynthesisResult {
    bool success = false;
    MatrixXd L;           // static output-feedback gain (n_u x n_y)
    FourPiOp K;           // stage-1 state-feedback operator
    FourPiOp P_stage1;    // stage-1 certificate
    FourPiOp Z_stage1;    // stage-1 row operator (K o P_stage1 = Z_stage1)
    FourPiOp P_stage2;    // stage-2 certificate; also certifies u = L y
    MatrixXd F, Z_matrix; // stage-2 matrices; L solves F L = Z_matrix
    double alpha = 0.0;   // certified decay rate
    double division_residual = 0.0;  // max kernel coeff of K o P - Z
    double gain_residual = 0.0;      // max entry of F L - Z_matrix
    StageDiagnostics stage1, stage2;
    CertificateCheck certificate;    // margins of P_stage2 on the final loop
    int trials = 0;                  // bisection trials consumed
    std::string message;
};

// Approximate inverse of a self-adjoint operator within the polynomial 4-PI
// class. The finite block and the multiplier are inverted pointwise (the
// multiplier inverse, generally rational, is fitted by a polynomial of
// degree fit_degree via least squares at Chebyshev nodes; default 2x the
// kernel degree of P). The integral kernels are folded in through their
// separable (finite-rank) form, which reduces the update to one linear solve
// of the moment system; any remaining mismatch (kernels differing across the
// diagonal) is driven down by Newton refinement with refitting. Throws when
// the multiplier is singular at a node or the achieved residual
// ||P o Pinv - I|| (largest singular value at N = 40) exceeds tol; the error
// reports the residual and suggests raising the fit degree.
FourPiOp invert_pi(const FourPiOp& P, double tol = 1e-6, int fit_degree = -1,
                   double* residual_out = nullptr);

// Least-squares solve of K o P = Z over row operators K : RL2^{m,n} -> R^p
// with kernel degree <= degree. residual_out receives the max kernel
// coefficient of K o P - Z.
FourPiOp right_divide(const FourPiOp& Z, const FourPiOp& P, int degree,
                      double* residual_out = nullptr);

struct Stage1Result {
    bool feasible = false;
    FourPiOp K, P, Z;
    double division_residual = 0.0;
    StageDiagnostics diag;
};
// One stage-1 solve at a fixed rate and degree.
Stage1Result run_stage1(const PieSystem& pie, double alpha, int degree,
                        const SynthOptions& opt);

struct Stage2Result {
    bool feasible = false;
    MatrixXd L, F, Z;
    FourPiOp P;
    double gain_residual = 0.0;
    StageDiagnostics diag;
};
// One stage-2 solve for a fixed K at a fixed rate and degree.
Stage2Result run_stage2(const PieSystem& pie, const FourPiOp& K, double alpha,
                        int degree, const SynthOptions& opt);

// Full pipeline at one rate: stage 1 designed at the trial rate, stage 2 at
// the same degree, and — when the recovery fails — a redesign of the state
// feedback at stronger rates found by bisecting stage-1 feasibility up to
// alpha_hi (the recovery inequality demands strictly more decay than the
// trial rate, which a design run exactly at that rate cannot spare). The
// degree ladder opt.degree..opt.max_degree runs unless degree_ladder is
// false. The returned certificate margins are computed with P_stage2.
SynthesisResult synthesize_at(const PieSystem& pie, double alpha,
                              const SynthOptions& opt = {},
                              bool degree_ladder = true);

// Largest certified rate in [alpha_lo, alpha_hi], in two phases: bisect the
// largest stage-1-certifiable design rate, fix the state feedback designed
// there, then bisect the recovery rate under that fixed design. Falls back
// to softer designs (backoff fractions of the spare interval) and higher
// degrees when the recovery fails even at alpha_lo.
SynthesisResult bisect_alpha(const PieSystem& pie, const SynthOptions& opt = {});

// Pure numeric check that P certifies decay rate alpha for the closed loop
// u = L y: discretizes sym(T* P (A_cl + alpha T)) and P at N nodes and
// checks the eigenvalue margins recorded in CertificateCheck.
CertificateCheck verify_certificate(const PieSystem& pie, const MatrixXd& L,
                                    const FourPiOp& P, double alpha,
                                    double delta = 1e-6, int N = 40);

struct AnalysisResult {
    bool certified = false;
    double alpha = 0.0;
    FourPiOp P;
    StageDiagnostics diag;
    CertificateCheck check;
    std::string message;
};
// Decay certificate for a fixed gain L (L = 0 analyzes the open loop):
// solves the closed-loop inequality for P at the given rate, raising the
// degree up to opt.max_degree, and verifies the margins numerically.
AnalysisResult analyze_gain(const PieSystem& pie, const MatrixXd& L,
                            double alpha, const SynthOptions& opt = {});

}  // namespace piesof
