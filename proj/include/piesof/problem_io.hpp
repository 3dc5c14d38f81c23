// Problem files and machine-readable run reports.
//
// A problem file is JSON carrying the delay-system data and options:
//   A, B, C       dense matrices as arrays of rows
//   A_list        per-delay state matrices (array of matrices, one per delay)
//   C_list        per-delay output matrices (optional; defaults to zeros)
//   taus          strictly increasing positive delays
//   history       optional m x (deg+1) polynomial history coefficients
//   L             optional fixed output-feedback gain
//   options       optional synthesis/solver overrides (degree, max_degree,
//                 delta, eps, alpha_lo, alpha_hi, alpha_tol, max_trials,
//                 backoff, division_degree, solver_tol, max_iter,
//                 polish_rounds, verbose)
// Unknown fields are rejected so typos cannot silently change a run.
#pragma once

#include <string>

#include "piesof/pie_rep.hpp"
#include "piesof/sim.hpp"
#include "piesof/synth.hpp"

namespace piesof {

struct ProblemInput {
    std::string name;     // the file's "name" field, else the path stem
    DdeSystem sys;
    HistoryPoly history;  // constant-1 history when the file carries none
    bool has_history = false;
    MatrixXd gain;        // the file's fixed gain "L" when present
    bool has_gain = false;
    SynthOptions options;
};

// Parses and validates a problem file; throws std::runtime_error naming the
// offending field on schema errors and propagates dimension errors.
ProblemInput load_problem(const std::string& path);

// One run's summary. Serialized with stable field names so reports diff
// cleanly; `elapsed_s` is the only run-dependent field.
struct RunReport {
    std::string mode;  // synthesize | analyze | simulate | export-sdp
    std::string problem;
    bool success = false;
    std::string message;
    double alpha = 0.0;
    bool has_gain = false;
    MatrixXd L;
    bool has_K = false;
    FourPiOp K;
    bool has_certificate = false;
    CertificateCheck certificate;
    bool has_root = false;
    SpectrumEstimate root;
    bool has_stage1 = false, has_stage2 = false;
    StageDiagnostics stage1, stage2;
    double division_residual = 0.0;
    double gain_residual = 0.0;
    int trials = 0;
    bool has_sim = false;
    double sim_t_end = 0.0;
    double sim_final_norm = 0.0;
    double sim_decay = 0.0;
    bool sim_diverged = false;
    std::string trajectory_path;
    std::string export_path;
    double elapsed_s = 0.0;
};

// Pretty-printed JSON text of the report.
std::string to_json(const RunReport& rep);

// Writes text to a file, throwing std::runtime_error on I/O failure.
void write_text(const std::string& path, const std::string& text);

}  // namespace piesof
