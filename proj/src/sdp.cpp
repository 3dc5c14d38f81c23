#include "piesof/sdp.hpp"

#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace piesof {

void SdpProblem::validate() const {
    for (int s : psd_sizes)
        if (s <= 0) throw std::invalid_argument("SdpProblem: PSD block sizes must be positive");
    if (n_free < 0) throw std::invalid_argument("SdpProblem: negative free-variable count");
    const int p = num_constraints();
    if (static_cast<int>(rows.size()) != p || static_cast<int>(free_rows.size()) != p)
        throw std::invalid_argument("SdpProblem: row count does not match b");
    auto check_entries = [&](const std::vector<SdpEntry>& es) {
        for (const auto& e : es) {
            if (e.block < 0 || e.block >= static_cast<int>(psd_sizes.size()))
                throw std::invalid_argument("SdpProblem: entry block out of range");
            const int s = psd_sizes[e.block];
            if (e.r < 0 || e.c < 0 || e.r >= s || e.c >= s || e.r > e.c)
                throw std::invalid_argument("SdpProblem: entry indices invalid (need r <= c)");
        }
    };
    for (const auto& es : rows) check_entries(es);
    check_entries(cost);
    for (const auto& fr : free_rows)
        for (const auto& [idx, v] : fr) {
            (void)v;
            if (idx < 0 || idx >= n_free)
                throw std::invalid_argument("SdpProblem: free index out of range");
        }
    if (cost_free.size() != 0 && cost_free.size() != n_free)
        throw std::invalid_argument("SdpProblem: cost_free size mismatch");
}

double SdpProblem::eval_row(int j, const std::vector<MatrixXd>& X, const VectorXd& f) const {
    double acc = 0.0;
    for (const auto& e : rows[j]) {
        const double x = X[e.block](e.r, e.c);
        acc += (e.r == e.c) ? e.value * x : 2.0 * e.value * x;
    }
    for (const auto& [idx, v] : free_rows[j]) acc += v * f[idx];
    return acc;
}

void export_sdp(const SdpProblem& sdp, const std::string& path) {
    sdp.validate();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_sdp: cannot open " + path);
    out << std::setprecision(17);

    const int p = sdp.num_constraints();
    const int npsd = static_cast<int>(sdp.psd_sizes.size());
    const bool has_free = sdp.n_free > 0;
    const int nblocks = npsd + (has_free ? 1 : 0);

    out << p << "\n";
    out << nblocks << "\n";
    for (int i = 0; i < npsd; ++i) out << (i ? " " : "") << sdp.psd_sizes[i];
    if (has_free) out << (npsd ? " " : "") << -(2 * sdp.n_free);
    if (nblocks == 0) out << 0;  // degenerate: keep the line present
    out << "\n";
    for (int j = 0; j < p; ++j) out << (j ? " " : "") << sdp.b[j];
    out << "\n";

    // matno 0 carries the objective; matno j >= 1 carries constraint j.
    auto emit_psd = [&](int matno, const std::vector<SdpEntry>& es) {
        for (const auto& e : es) {
            if (e.value == 0.0) continue;
            out << matno << " " << (e.block + 1) << " " << (e.r + 1) << " " << (e.c + 1) << " "
                << e.value << "\n";
        }
    };
    // Free variable k becomes diag entries (2k+1, 2k+2) of the extra block
    // with opposite signs: f_k = g_{2k+1} - g_{2k+2}, g >= 0.
    auto emit_free = [&](int matno, const std::vector<std::pair<int, double>>& fr) {
        for (const auto& [idx, v] : fr) {
            if (v == 0.0) continue;
            const int d1 = 2 * idx + 1, d2 = 2 * idx + 2;
            out << matno << " " << nblocks << " " << d1 << " " << d1 << " " << v << "\n";
            out << matno << " " << nblocks << " " << d2 << " " << d2 << " " << -v << "\n";
        }
    };

    emit_psd(0, sdp.cost);
    if (has_free && sdp.cost_free.size() == sdp.n_free) {
        std::vector<std::pair<int, double>> cf;
        for (int k = 0; k < sdp.n_free; ++k)
            if (sdp.cost_free[k] != 0.0) cf.emplace_back(k, sdp.cost_free[k]);
        emit_free(0, cf);
    }
    for (int j = 0; j < p; ++j) {
        emit_psd(j + 1, sdp.rows[j]);
        emit_free(j + 1, sdp.free_rows[j]);
    }
    if (!out.good()) throw std::runtime_error("export_sdp: write failed for " + path);
}

}  // namespace piesof
