// Linear operator inequalities over 4-PI operator variables, compiled into
// finite-dimensional semidefinite programs by polynomial coefficient
// matching.
//
// A problem declares operator variables and posts constraints of the form
//
//     sym( Phi0 + sum_t  c_t * L_t o V_t o R_t )  <=  0,     sym(W) = W + W*,
//
// where L_t / R_t are fixed 4-PI operators, Phi0 is a fixed offset, and each
// V_t is one of
//   * Positive:        P = delta*I + B_d* M B_d with M PSD and B_d the
//                      stacked monomial basis rows up to degree d, so that
//                      P >= delta*I holds by construction;
//   * FreeRow:         Z : RL2^{m,n} -> R^p, matrix part and polynomial
//                      kernel coefficients all free;
//   * FreeSelfAdjoint: self-adjoint operator with free polynomial kernels;
//   * Matrix:          a plain real matrix.
//
// "<= 0" is enforced by adding a slack S = B_dc* N B_dc (N PSD) on the
// constraint space and matching every polynomial kernel coefficient of
// sym(Phi) + S to zero. Because the matched expression is self-adjoint by
// construction, only the P (upper triangle), Q1, R0 (upper triangle per
// degree) and R1 kernels are matched; Q2 and R2 are their mirrors.
//
// A constraint may carry a margin: a fixed self-adjoint weight W so that the
// compiled equality becomes sym(Phi) + t*sym(W) + S = 0 with one shared
// scalar t that the solver maximizes. The weight is chosen to vanish exactly
// where the quadratic form of sym(Phi) vanishes for every choice of the
// variables (e.g. T o T* when every term carries T* on the right), so t > 0
// if and only if the inequality holds with a genuine margin; asking for
// negativity against the identity instead would be infeasible outright.
// Positive variables can additionally be capped with tr(M) <= bound, which
// pins the scaling ray (c*P, c*Z, c*t) and keeps the maximization bounded.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "piesof/pie_rep.hpp"
#include "piesof/piop.hpp"
#include "piesof/ipm.hpp"
#include "piesof/sdp.hpp"

namespace piesof {

enum class PiVarKind { Positive, FreeRow, FreeSelfAdjoint, Matrix };

struct PiVarSpec {
    PiVarKind kind = PiVarKind::Positive;
    int m = 0, n = 0;    // operator domain RL2^{m,n}; Matrix: m = cols, n = 0
    int p = 0;           // FreeRow / Matrix: finite output dimension (rows)
    int degree = 0;      // kernel degree (basis degree for Positive)
    double delta = 0.0;  // Positive only: enforced lower bound P >= delta*I
    std::string name;
};

// One summand  scale * left o V(var) o right  of a constraint.
struct LpiTerm {
    FourPiOp left;   // variable codomain -> constraint space
    int var = 0;
    FourPiOp right;  // constraint space -> variable domain
    double scale = 1.0;
};

struct LpiConstraint {
    std::vector<LpiTerm> terms;
    FourPiOp constant;  // Phi0 on the constraint space (zero op if none)
    int slack_degree = 0;
    bool has_margin = false;
    FourPiOp margin_weight;  // self-adjoint weight multiplying the shared t
    std::string name;
};

struct LpiProblem {
    std::vector<PiVarSpec> vars;
    std::vector<LpiConstraint> constraints;
    // tr(M) <= pos_trace_bound for the Gram block of every Positive variable
    // (0 disables). Harmless for feasibility questions: any feasible point
    // scales down to satisfy the cap, margins scale with it.
    double pos_trace_bound = 0.0;
    // margin_floor >= 0 freezes the margin: instead of a maximized variable,
    // every margin weight enters its constraint as the constant shift
    // margin_floor * sym(W). Used to re-solve a feasible problem strictly
    // inside its margin while a different objective shapes the solution.
    double margin_floor = -1.0;
    // Id of a square Matrix variable whose trace is minimized when no margin
    // variable is active (-1 disables). Selects a bounded representative of
    // the recovered gain out of the optimizer's null directions.
    int trace_objective = -1;

    // All declarations return the variable id used in LpiTerm::var.
    int declare_pos_pi_var(int m, int n, int degree, double delta,
                           std::string name = {});
    int declare_free_row_var(int p, int m, int n, int degree,
                             std::string name = {});
    int declare_free_selfadjoint_var(int m, int n, int degree,
                                     std::string name = {});
    int declare_matrix_var(int rows, int cols, std::string name = {});

    // Posts sym(constant + sum_t terms) <= 0; returns the constraint id.
    // Dimensions of every factor are validated here (throws
    // std::invalid_argument on mismatch).
    int add_neg_constraint(std::vector<LpiTerm> terms, FourPiOp constant,
                           int slack_degree, std::string name = {});

    // Attaches the margin weight W (self-adjoint, on the constraint space) to
    // an existing constraint; the compiled program then maximizes the shared
    // scalar t in sym(Phi) + t*sym(W) <= 0. Throws std::invalid_argument on a
    // bad id, dimension mismatch, or a weight that is not self-adjoint.
    void set_margin(int constraint, FourPiOp weight);
};

// Monomial basis rows B_d of RL2^{m,n} -> RL2^{0,1} used by the PSD
// parametrizations: one row e_i^T per finite coordinate, then rows
// s^k e_j^T in the multiplier kernel (k <= d) and s^a theta^b e_j^T
// (a + b <= d) in each of the two integral kernels. Cached per (m, n, d).
struct GramBasis {
    int m = 0, n = 0, degree = 0;
    std::vector<FourPiOp> rows;
    int size() const { return static_cast<int>(rows.size()); }
};
const GramBasis& gram_basis(int m, int n, int degree);

// Layout of one variable inside the compiled SDP.
struct VarLayout {
    PiVarKind kind = PiVarKind::Positive;
    int m = 0, n = 0, p = 0, degree = 0;
    double delta = 0.0;
    int block = -1;      // PSD block index (Positive)
    int free_base = -1;  // first free-variable index (other kinds)
    int free_count = 0;
};

struct ConstraintLayout {
    int slack_block = -1;
    int cs_m = 0, cs_n = 0;  // constraint space RL2^{cs_m, cs_n}
    int slack_degree = 0;
};

struct LpiMapping {
    std::vector<VarLayout> vars;
    std::vector<ConstraintLayout> cons;
    int margin_index = -1;  // free-variable index of the shared margin t
    LpiProblem problem;     // retained for reconstruction and residual checks
};

struct CompiledLpi {
    SdpProblem sdp;
    std::shared_ptr<const LpiMapping> map;
};

// Coefficient matching. trace_reg > 0 adds a small trace objective on every
// PSD block, which regularizes the otherwise rank-deficient feasibility
// problem; when any constraint carries a margin the objective is maximizing
// the shared margin scalar instead and trace_reg is ignored. Throws
// std::runtime_error when a kernel coefficient of the fixed part cannot be
// matched by any variable or slack entry (the message names the constraint
// and the minimal slack degree that would cover it).
CompiledLpi compile_lpi(const LpiProblem& prob, double trace_reg = 1e-6);

struct LpiSettings {
    double tol = 1e-8;
    int max_iter = 120;
    bool psd_project = true;  // clip tiny negative eigenvalues after solving
    // Rounds of alternating projection (PSD clip, then least-norm correction
    // back onto the equality rows) that sharpen the interior-point iterate to
    // near machine-precision feasibility. The correction reuses one
    // factorization of the row Gram matrix, so rounds are cheap. Inequalities
    // whose feasible set has an empty interior (every admissible slack Gram is
    // singular) leave the solver short of full accuracy by design, and the
    // final verdict rests on the residuals of the polished point, so keep
    // enough rounds for the projection to settle.
    int polish_rounds = 20;
    bool verbose = false;
};

struct LpiSolveResult {
    SdpStatus status = SdpStatus::NumericalError;
    bool feasible = false;      // residual gates passed (and margin > 0 when
                                // the problem carries one)
    double eq_residual = 0.0;   // max violation of the (equilibrated) SDP rows
    double op_residual = 0.0;   // max kernel coefficient of sym(Phi) + S after
                                // reconstructing all operators
    double psd_violation = 0.0; // most negative eigenvalue over the returned
                                // PSD blocks (0 when all blocks are PSD)
    double margin = 0.0;        // value of the shared margin t (0 if none)
    int iterations = 0;
    std::string message;
    std::vector<FourPiOp> values;  // one reconstructed operator per variable
};

// Row-equilibrates, solves with the embedded interior-point method, projects
// the PSD blocks, and reconstructs every variable as a 4-PI operator
// (Matrix variables come back as purely finite operators; use .P).
LpiSolveResult solve_lpi(const CompiledLpi& c, const LpiSettings& settings = {});

// delta*I + B_d* M B_d for a positive variable's block value M.
FourPiOp reconstruct_positive(const VarLayout& v, const MatrixXd& M);

// ---- standard synthesis inequalities ----
//
// All three assemblies post their inequality with a margin (weight chosen to
// vanish exactly where the inequality's quadratic form must vanish) and cap
// the Gram trace of P at trace_bound, so the compiled program maximizes the
// margin and the verdict is its sign. The cap also steers the maximizer away
// from the delta*I floor, which keeps P well conditioned for the later
// operator divisions.
//
// Stage 1 (state-feedback design, variables P > 0 and row operator Z):
//   sym( A o P o T* + B o Z o T* + alpha * T o P o T* ) <= -t * T o T*.
// Any feasible pair yields a state-feedback operator K with Z = K o P whose
// closed loop T* certifies decay rate alpha.
struct Stage1Lpi {
    LpiProblem prob;
    int var_P = 0, var_Z = 1;
};
Stage1Lpi assemble_stage1(const PieSystem& pie, double alpha, double delta,
                          int degree, double trace_bound = 100.0);

// Stage 2 (output-feedback recovery for a fixed K, variables P > 0 and
// matrices F, Z): on the two-block space R^{n_u} x RL2^{m,n},
//   sym( [ -F + (eps/2) I   B* o P o T + Z C - F K ]
//        [       0              T* o P o (A + B K + alpha T) ] )
//     <= -t * blkdiag(I, T* o T).
// Feasibility gives the static output-feedback gain L = F^{-1} Z.
struct Stage2Lpi {
    LpiProblem prob;
    int var_P = 0, var_F = 1, var_Z = 2;
};
Stage2Lpi assemble_stage2(const PieSystem& pie, const FourPiOp& K, double alpha,
                          double delta, double eps, int degree,
                          double trace_bound = 100.0);

// Closed-loop decay certificate for a fixed loop A_cl (variable P > 0):
//   sym( T* o P o (A_cl + alpha * T) ) <= -t * T* o T
// (T* o T is positive definite because T is injective, so here t > 0 gives
// strict negativity outright).
struct AnalysisLpi {
    LpiProblem prob;
    int var_P = 0;
};
AnalysisLpi assemble_analysis(const FourPiOp& T, const FourPiOp& A_cl,
                              double alpha, double delta, int degree,
                              double trace_bound = 100.0);

}  // namespace piesof
