#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sthawkes/bin_counts.hpp"
#include "sthawkes/data_pipeline.hpp"
#include "sthawkes/errors.hpp"
#include "sthawkes/estimator.hpp"
#include "sthawkes/hawkes_model.hpp"
#include "sthawkes/simulator.hpp"
#include "sthawkes/tensor3.hpp"
#include "sthawkes/theory.hpp"

// File formats: JSON for parameters, configs, checkpoints and bound reports;
// CSV for fit traces and metrics; the plain-text tensor/bincounts formats.

namespace sthawkes::io {

using json = nlohmann::json;

// ---------- files ----------

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes to `path.tmp` and renames over `path`.
inline void write_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write '" + tmp + "'");
        out << content;
        if (!out) throw InputError("write failed for '" + tmp + "'");
    }
    fs::rename(tmp, target);
}

inline json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(what + ": " + e.what());
    }
}

inline json read_json(const std::string& path) { return parse_json(read_file(path), path); }

/// %.17g, so values round-trip.
inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------- json field helpers ----------

namespace detail {

inline void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw InputError(section + ": expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
        if (!ok.count(k)) throw InputError(section + "." + k + ": unknown field");
}

template <class T>
void get_to(const json& j, const char* key, const std::string& section, T& dst) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw InputError(section + "." + key + ": wrong type");
    }
}

}  // namespace detail

// ---------- tensors and parameters ----------

inline json tensor_to_json(const Tensor3& t) { return json(std::vector<double>(t.values().begin(), t.values().end())); }

/// Parameters: {"n1", "n2", "p", "mu": row-major list, "G": list in tensor storage order}.
inline json params_to_json(const HawkesParams& th) {
    std::vector<double> mu;
    for (Index i = 0; i < th.n1(); ++i)
        for (Index j = 0; j < th.n2(); ++j) mu.push_back(th.mu(i, j));
    return json{{"n1", th.n1()}, {"n2", th.n2()}, {"p", th.p()}, {"mu", mu}, {"G", tensor_to_json(th.G)}};
}

inline HawkesParams params_from_json(const json& j) {
    try {
        const Index n1 = j.at("n1").get<Index>(), n2 = j.at("n2").get<Index>(), p = j.at("p").get<Index>();
        if (n1 < 1 || n2 < 1 || p < 1) throw InputError("params: n1, n2, p must be >= 1");
        const auto mu = j.at("mu").get<std::vector<double>>();
        auto g = j.at("G").get<std::vector<double>>();
        if (static_cast<Index>(mu.size()) != n1 * n2) throw InputError("params: mu must have n1*n2 entries");
        Eigen::MatrixXd m(n1, n2);
        for (Index i = 0; i < n1; ++i)
            for (Index jj = 0; jj < n2; ++jj) m(i, jj) = mu[static_cast<std::size_t>(i * n2 + jj)];
        const Dims3 gd{2 * n1 - 1, 2 * n2 - 1, p};
        if (static_cast<Index>(g.size()) != gd[0] * gd[1] * gd[2]) throw InputError("params: G has the wrong number of entries");
        return HawkesParams(std::move(m), Tensor3(gd, std::move(g)));
    } catch (const json::exception& e) {
        throw InputError(std::string("params: ") + e.what());
    }
}

inline void write_params(const std::string& path, const HawkesParams& th) { write_atomic(path, params_to_json(th).dump(2) + "\n"); }

inline HawkesParams read_params(const std::string& path) { return params_from_json(read_json(path)); }

inline void write_bincounts_file(const std::string& path, const BinCounts& z) {
    std::ostringstream ss;
    write_bincounts(ss, z);
    write_atomic(path, ss.str());
}

inline BinCounts read_bincounts_file(const std::string& path) {
    std::istringstream ss(read_file(path));
    return read_bincounts(ss);
}

// ---------- configs ----------

inline json to_json(const SimConfig& c) {
    return json{{"n1", c.n1},       {"n2", c.n2},
                {"p", c.p},         {"K", c.K},
                {"delta", c.delta}, {"alpha", c.alpha},
                {"stability_target", c.stability_target},
                {"mean_bin_rate", c.mean_bin_rate},
                {"seed", c.seed}};
}

inline SimConfig sim_config_from_json(const json& j, SimConfig c = {}) {
    const std::string s = "sim";
    detail::check_keys(j, s, {"n1", "n2", "p", "K", "delta", "alpha", "stability_target", "mean_bin_rate", "seed"});
    detail::get_to(j, "n1", s, c.n1);
    detail::get_to(j, "n2", s, c.n2);
    detail::get_to(j, "p", s, c.p);
    detail::get_to(j, "K", s, c.K);
    detail::get_to(j, "delta", s, c.delta);
    detail::get_to(j, "alpha", s, c.alpha);
    detail::get_to(j, "stability_target", s, c.stability_target);
    detail::get_to(j, "mean_bin_rate", s, c.mean_bin_rate);
    detail::get_to(j, "seed", s, c.seed);
    c.validate();
    return c;
}

inline json to_json(const FeasibleSet& f) {
    return json{{"a1", f.a1}, {"b1", f.b1}, {"a2", f.a2}, {"b2", f.b2}, {"gamma", f.gamma}};
}

inline FeasibleSet feasible_set_from_json(const json& j, FeasibleSet f = {}) {
    const std::string s = "admm.fs";
    detail::check_keys(j, s, {"a1", "b1", "a2", "b2", "gamma"});
    detail::get_to(j, "a1", s, f.a1);
    detail::get_to(j, "b1", s, f.b1);
    detail::get_to(j, "a2", s, f.a2);
    detail::get_to(j, "b2", s, f.b2);
    detail::get_to(j, "gamma", s, f.gamma);
    f.validate();
    return f;
}

inline json to_json(const AdmmConfig& c) {
    return json{{"rho", c.rho},
                {"tau", c.tau},
                {"fs", to_json(c.fs)},
                {"max_outer", c.max_outer},
                {"max_inner_mm", c.max_inner_mm},
                {"inner_rel_tol", c.inner_rel_tol},
                {"tol_primal", c.tol_primal},
                {"tol_dual", c.tol_dual},
                {"mode", to_string(c.mode)},
                {"dual_step", c.dual_step}};
}

/// Reads the fields of an admm section; `fs` is parsed only when present.
inline AdmmConfig admm_config_from_json(const json& j, AdmmConfig c = {}) {
    const std::string s = "admm";
    detail::check_keys(j, s, {"rho", "rho_mle", "tau", "fs", "max_outer", "max_inner_mm", "inner_rel_tol", "tol_primal",
                              "tol_dual", "mode", "dual_step", "preset"});
    detail::get_to(j, "rho", s, c.rho);
    detail::get_to(j, "tau", s, c.tau);
    detail::get_to(j, "max_outer", s, c.max_outer);
    detail::get_to(j, "max_inner_mm", s, c.max_inner_mm);
    detail::get_to(j, "inner_rel_tol", s, c.inner_rel_tol);
    detail::get_to(j, "tol_primal", s, c.tol_primal);
    detail::get_to(j, "tol_dual", s, c.tol_dual);
    detail::get_to(j, "dual_step", s, c.dual_step);
    if (j.contains("mode")) {
        std::string m;
        detail::get_to(j, "mode", s, m);
        c.mode = parse_fit_mode(m);
    }
    if (j.contains("fs")) c.fs = feasible_set_from_json(j.at("fs"), c.fs);
    return c;
}

inline json to_json(const DiscretizationSpec& d) {
    return json{{"x0", d.x0}, {"y0", d.y0}, {"t0", d.t0}, {"dx", d.dx}, {"dy", d.dy},
                {"dt", d.dt}, {"n1", d.n1}, {"n2", d.n2}, {"K", d.K},   {"p", d.p}};
}

inline DiscretizationSpec discretization_from_json(const json& j, DiscretizationSpec d = {}) {
    const std::string s = "discretization";
    detail::check_keys(j, s, {"x0", "y0", "t0", "dx", "dy", "dt", "n1", "n2", "K", "p"});
    detail::get_to(j, "x0", s, d.x0);
    detail::get_to(j, "y0", s, d.y0);
    detail::get_to(j, "t0", s, d.t0);
    detail::get_to(j, "dx", s, d.dx);
    detail::get_to(j, "dy", s, d.dy);
    detail::get_to(j, "dt", s, d.dt);
    detail::get_to(j, "n1", s, d.n1);
    detail::get_to(j, "n2", s, d.n2);
    detail::get_to(j, "K", s, d.K);
    detail::get_to(j, "p", s, d.p);
    d.validate();
    return d;
}

// ---------- checkpoints ----------

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
    const Index r = j.at("rows").get<Index>(), c = j.at("cols").get<Index>();
    const auto d = j.at("data").get<std::vector<double>>();
    if (r < 0 || c < 0 || static_cast<Index>(d.size()) != r * c) throw InputError("checkpoint: matrix size mismatch");
    return Eigen::Map<const Eigen::MatrixXd>(d.data(), r, c);
}

inline json tensor_block_to_json(const Tensor3& t) {
    return json{{"dims", {t.dim(0), t.dim(1), t.dim(2)}}, {"data", tensor_to_json(t)}};
}

inline Tensor3 tensor_block_from_json(const json& j) {
    const auto d = j.at("dims").get<std::vector<Index>>();
    if (d.size() != 3) throw InputError("checkpoint: tensor dims must have 3 entries");
    return Tensor3(Dims3{d[0], d[1], d[2]}, j.at("data").get<std::vector<double>>());
}

/// State and config, enough to resume with fit_from_state.
inline json checkpoint_to_json(const AdmmState& s, const AdmmConfig& cfg) {
    return json{{"config", to_json(cfg)},
                {"iter", s.iter},
                {"mu", matrix_to_json(s.mu)},
                {"m", matrix_to_json(s.m)},
                {"Y3", matrix_to_json(s.Y3)},
                {"G", tensor_block_to_json(s.G)},
                {"R", tensor_block_to_json(s.R)},
                {"Gaux", tensor_block_to_json(s.Gaux)},
                {"Y1", tensor_block_to_json(s.Y1)},
                {"Y2", tensor_block_to_json(s.Y2)}};
}

struct Checkpoint {
    AdmmState state;
    AdmmConfig config;
};

inline Checkpoint checkpoint_from_json(const json& j) {
    try {
        Checkpoint c;
        c.config = admm_config_from_json(j.at("config"));
        c.state.iter = j.at("iter").get<int>();
        c.state.mu = matrix_from_json(j.at("mu"));
        c.state.m = matrix_from_json(j.at("m"));
        c.state.Y3 = matrix_from_json(j.at("Y3"));
        c.state.G = tensor_block_from_json(j.at("G"));
        c.state.R = tensor_block_from_json(j.at("R"));
        c.state.Gaux = tensor_block_from_json(j.at("Gaux"));
        c.state.Y1 = tensor_block_from_json(j.at("Y1"));
        c.state.Y2 = tensor_block_from_json(j.at("Y2"));
        return c;
    } catch (const json::exception& e) {
        throw InputError(std::string("checkpoint: ") + e.what());
    }
}

// ---------- reports ----------

inline std::string fit_report_csv(const FitReport& r) {
    std::ostringstream ss;
    ss << "iter,objective,primal_res,dual_res\n";
    for (std::size_t i = 0; i < r.objective_trace.size(); ++i) {
        ss << (i + 1) << ',' << fmt(r.objective_trace[i]) << ',' << fmt(r.primal_residual_trace[i]) << ','
           << fmt(r.dual_residual_trace[i]) << '\n';
    }
    return ss.str();
}

inline json bound_report_to_json(const BoundReport& b) {
    return json{{"J_lower", b.J_lower},       {"J_upper", b.J_upper},
                {"T", b.T},                   {"delta2", b.delta2},
                {"bound_value", b.bound_value}, {"confidence", b.confidence},
                {"max_window_spec", b.max_window_spec},
                {"min_window_l1", b.min_window_l1},
                {"kl_bound", b.kl_bound}};
}

struct MetricsRow {
    std::string method;
    std::optional<double> merr, gerr, frq1, frq_avg, nlr;
};

inline constexpr const char* kMetricsHeader = "method,Merr,Gerr,FRQ1,FRQ_avg,NLR";

/// Unavailable metrics are left empty.
inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    auto cell = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
    std::ostringstream ss;
    ss << kMetricsHeader << '\n';
    for (const auto& r : rows) {
        ss << r.method << ',' << cell(r.merr) << ',' << cell(r.gerr) << ',' << cell(r.frq1) << ',' << cell(r.frq_avg)
           << ',' << cell(r.nlr) << '\n';
    }
    return ss.str();
}

}  // namespace sthawkes::io
