#include "piesof/problem_io.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace piesof {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& msg) {
    throw std::runtime_error("problem file: " + msg);
}

MatrixXd parse_matrix(const json& j, const std::string& name) {
    if (!j.is_array() || j.empty() || !j.front().is_array() || j.front().empty())
        fail("'" + name + "' must be a non-empty array of non-empty rows");
    const size_t rows = j.size();
    const size_t cols = j.front().size();
    MatrixXd M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (size_t i = 0; i < rows; ++i) {
        const auto& row = j[i];
        if (!row.is_array() || row.size() != cols)
            fail("'" + name + "' rows must all have " + std::to_string(cols) +
                 " entries");
        for (size_t k = 0; k < cols; ++k) {
            if (!row[k].is_number())
                fail("'" + name + "' entries must be numbers");
            M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                row[k].get<double>();
        }
    }
    return M;
}

std::vector<MatrixXd> parse_matrix_list(const json& j, const std::string& name) {
    if (!j.is_array()) fail("'" + name + "' must be an array of matrices");
    std::vector<MatrixXd> out;
    out.reserve(j.size());
    for (size_t i = 0; i < j.size(); ++i)
        out.push_back(parse_matrix(j[i], name + "[" + std::to_string(i) + "]"));
    return out;
}

void parse_options(const json& j, SynthOptions& o) {
    if (!j.is_object()) fail("'options' must be an object");
    for (const auto& [key, val] : j.items()) {
        if (key == "degree") o.degree = val.get<int>();
        else if (key == "max_degree") o.max_degree = val.get<int>();
        else if (key == "delta") o.delta = val.get<double>();
        else if (key == "eps") o.eps = val.get<double>();
        else if (key == "alpha_lo") o.alpha_lo = val.get<double>();
        else if (key == "alpha_hi") o.alpha_hi = val.get<double>();
        else if (key == "alpha_tol") o.alpha_tol = val.get<double>();
        else if (key == "max_trials") o.max_trials = val.get<int>();
        else if (key == "backoff") o.backoff = val.get<double>();
        else if (key == "division_degree") o.division_degree = val.get<int>();
        else if (key == "norm_bound") o.norm_bound = val.get<double>();
        else if (key == "solver_tol") o.solver.tol = val.get<double>();
        else if (key == "max_iter") o.solver.max_iter = val.get<int>();
        else if (key == "polish_rounds") o.solver.polish_rounds = val.get<int>();
        else if (key == "verbose") {
            o.verbose = val.get<bool>();
            o.solver.verbose = o.verbose;
        } else {
            fail("unknown option '" + key + "'");
        }
    }
}

ojson matrix_json(const MatrixXd& M) {
    ojson rows = ojson::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        ojson row = ojson::array();
        for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
        rows.push_back(row);
    }
    return rows;
}

ojson poly1_json(const PolyMat1& p) {
    ojson arr = ojson::array();  // coefficient of s^k at index k
    for (const auto& ck : p.c) arr.push_back(matrix_json(ck));
    return arr;
}

ojson poly2_json(const PolyMat2& p) {
    ojson o;
    o["ds"] = p.ds;
    o["dt"] = p.dt;
    ojson arr = ojson::array();  // (a, b) coefficient at index a*(dt+1)+b
    for (const auto& cab : p.c) arr.push_back(matrix_json(cab));
    o["c"] = arr;
    return o;
}

ojson op_json(const FourPiOp& K) {
    ojson o;
    o["m"] = K.m;
    o["n"] = K.n;
    o["p"] = K.p;
    o["q"] = K.q;
    if (K.p > 0 && K.m > 0) o["P"] = matrix_json(K.P);
    if (K.p > 0 && K.n > 0) o["Q1"] = poly1_json(K.Q1);
    if (K.q > 0 && K.m > 0) o["Q2"] = poly1_json(K.Q2);
    if (K.q > 0 && K.n > 0) {
        o["R0"] = poly1_json(K.R0);
        o["R1"] = poly2_json(K.R1);
        o["R2"] = poly2_json(K.R2);
    }
    return o;
}

ojson diag_json(const StageDiagnostics& d) {
    ojson o;
    o["feasible"] = d.feasible;
    o["status"] = to_string(d.status);
    o["iterations"] = d.iterations;
    o["eq_residual"] = d.eq_residual;
    o["op_residual"] = d.op_residual;
    o["margin"] = d.margin;
    o["degree"] = d.degree;
    o["alpha"] = d.alpha;
    return o;
}

}  // namespace

ProblemInput load_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open problem file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        fail(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) fail("top level must be an object");

    static const char* const known[] = {"name", "description", "A", "A_list",
                                        "B",    "C",           "C_list", "taus",
                                        "history", "L",        "options"};
    for (const auto& [key, val] : j.items()) {
        (void)val;
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) fail("unknown field '" + key + "'");
    }
    for (const char* req : {"A", "B", "C", "taus"})
        if (!j.contains(req)) fail(std::string("missing field '") + req + "'");

    ProblemInput out;
    try {
        out.name = j.contains("name")
                       ? j["name"].get<std::string>()
                       : std::filesystem::path(path).stem().string();
        out.sys.A = parse_matrix(j["A"], "A");
        out.sys.B = parse_matrix(j["B"], "B");
        out.sys.C = parse_matrix(j["C"], "C");
        if (!j["taus"].is_array()) fail("'taus' must be an array of numbers");
        for (const auto& t : j["taus"]) {
            if (!t.is_number()) fail("'taus' entries must be numbers");
            out.sys.taus.push_back(t.get<double>());
        }
        if (j.contains("A_list"))
            out.sys.A_list = parse_matrix_list(j["A_list"], "A_list");
        if (out.sys.A_list.size() != out.sys.taus.size())
            fail("'A_list' must carry one matrix per delay");
        if (j.contains("C_list")) {
            out.sys.C_list = parse_matrix_list(j["C_list"], "C_list");
        } else {
            out.sys.C_list.assign(out.sys.taus.size(),
                                  MatrixXd::Zero(out.sys.C.rows(), out.sys.A.cols()));
        }
        if (out.sys.C_list.size() != out.sys.taus.size())
            fail("'C_list' must carry one matrix per delay");

        if (j.contains("history")) {
            out.history.coeffs = parse_matrix(j["history"], "history");
            out.has_history = true;
            if (out.history.coeffs.rows() != out.sys.A.rows())
                fail("'history' must have one row per state");
        } else {
            out.history = HistoryPoly::constant(VectorXd::Ones(out.sys.A.rows()));
        }
        if (j.contains("L")) {
            out.gain = parse_matrix(j["L"], "L");
            out.has_gain = true;
            if (out.gain.rows() != out.sys.B.cols() ||
                out.gain.cols() != out.sys.C.rows())
                fail("'L' must be n_u x n_y");
        }
        if (j.contains("options")) parse_options(j["options"], out.options);
    } catch (const json::exception& e) {
        fail(e.what());
    }

    out.sys.validate();
    return out;
}

std::string to_json(const RunReport& rep) {
    ojson o;
    o["mode"] = rep.mode;
    o["problem"] = rep.problem;
    o["success"] = rep.success;
    o["message"] = rep.message;
    o["alpha"] = rep.alpha;
    if (rep.has_gain) o["gain_L"] = matrix_json(rep.L);
    if (rep.has_K) o["gain_K"] = op_json(rep.K);
    if (rep.has_certificate) {
        ojson c;
        c["valid"] = rep.certificate.valid;
        c["lhs_max_eig"] = rep.certificate.lhs_max_eig;
        c["p_min_eig"] = rep.certificate.p_min_eig;
        c["lhs_ok"] = rep.certificate.lhs_ok;
        c["p_ok"] = rep.certificate.p_ok;
        o["certificate"] = c;
    }
    if (rep.has_root) {
        ojson r;
        r["real"] = rep.root.rightmost_real;
        r["imag"] = rep.root.leading_roots.empty()
                        ? 0.0
                        : rep.root.leading_roots.front().imag();
        r["converged"] = rep.root.converged;
        r["order"] = rep.root.order;
        r["drift"] = rep.root.drift;
        ojson lead = ojson::array();
        for (size_t i = 0; i < rep.root.leading_roots.size() && i < 5; ++i)
            lead.push_back({rep.root.leading_roots[i].real(),
                            rep.root.leading_roots[i].imag()});
        r["leading_roots"] = lead;
        o["rightmost_root"] = r;
    }
    if (rep.has_stage1) o["stage1"] = diag_json(rep.stage1);
    if (rep.has_stage2) {
        o["stage2"] = diag_json(rep.stage2);
        o["division_residual"] = rep.division_residual;
        o["gain_residual"] = rep.gain_residual;
    }
    if (rep.trials > 0) o["trials"] = rep.trials;
    if (rep.has_sim) {
        ojson s;
        s["t_end"] = rep.sim_t_end;
        s["final_norm"] = rep.sim_final_norm;
        s["decay_rate"] = rep.sim_decay;
        s["diverged"] = rep.sim_diverged;
        o["simulation"] = s;
    }
    if (!rep.trajectory_path.empty()) o["trajectory"] = rep.trajectory_path;
    if (!rep.export_path.empty()) o["sdp_export"] = rep.export_path;
    o["elapsed_s"] = rep.elapsed_s;
    return o.dump(2) + "\n";
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    out << text;
    if (!out.good()) throw std::runtime_error("failed writing: " + path);
}

}  // namespace piesof
