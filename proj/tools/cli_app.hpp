#pragma once

// Command-line front end: simulate, fit, eval, bound, tune, reproduce.
// Kept in a header so tests can drive run() in-process.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sthawkes/sthawkes.hpp"

namespace sthawkes::cli {

using io::json;

enum ExitCode : int { kOk = 0, kUsage = 2, kNumerical = 3 };

struct EvalOptions {
    int nsim = 60;
    double train_fraction = 0.8;
};

struct RunConfig {
    SimConfig sim;
    AdmmConfig admm;
    bool fs_given = false;
    double rho_mle = 0.001;
    DiscretizationSpec disc;
    bool disc_given = false;
    EvalOptions eval;
    std::string out = "out";
    std::vector<std::uint64_t> seeds;
    int threads = 1;
};

/// Hyperparameter presets: synthetic (rho 0.0065, tau 0.5) and real-data
/// (rho 0.003, tau 1.5). MLE always uses rho_mle.
inline void apply_preset(RunConfig& rc, const std::string& name) {
    if (name == "synthetic") {
        rc.admm.rho = 0.0065;
        rc.admm.tau = 0.5;
    } else if (name == "real") {
        rc.admm.rho = 0.003;
        rc.admm.tau = 1.5;
    } else {
        throw InputError("admm.preset: unknown preset '" + name + "' (expected synthetic or real)");
    }
}

inline RunConfig parse_run_config(const json& j) {
    RunConfig rc;
    io::detail::check_keys(j, "config", {"sim", "admm", "discretization", "eval", "out", "seeds", "threads"});
    if (j.contains("sim")) rc.sim = io::sim_config_from_json(j.at("sim"));
    if (j.contains("admm")) {
        const auto& a = j.at("admm");
        if (a.is_object() && a.contains("preset")) {
            std::string preset;
            io::detail::get_to(a, "preset", "admm", preset);
            apply_preset(rc, preset);
        }
        rc.admm = io::admm_config_from_json(a, rc.admm);
        rc.fs_given = a.contains("fs");
        io::detail::get_to(a, "rho_mle", "admm", rc.rho_mle);
        if (!(rc.rho_mle > 0.0)) throw InputError("admm.rho_mle must be > 0");
    }
    if (j.contains("discretization")) {
        rc.disc = io::discretization_from_json(j.at("discretization"));
        rc.disc_given = true;
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        io::detail::check_keys(e, "eval", {"nsim", "train_fraction"});
        io::detail::get_to(e, "nsim", "eval", rc.eval.nsim);
        io::detail::get_to(e, "train_fraction", "eval", rc.eval.train_fraction);
        if (rc.eval.nsim < 1) throw InputError("eval.nsim must be >= 1");
        if (!(rc.eval.train_fraction > 0.0 && rc.eval.train_fraction < 1.0)) {
            throw InputError("eval.train_fraction must lie in (0, 1)");
        }
    }
    io::detail::get_to(j, "out", "config", rc.out);
    io::detail::get_to(j, "seeds", "config", rc.seeds);
    io::detail::get_to(j, "threads", "config", rc.threads);
    if (j.contains("seeds") && rc.seeds.empty()) throw InputError("config.seeds must be nonempty");
    if (rc.threads < 1) throw InputError("config.threads must be >= 1");
    return rc;
}

inline std::string path_in(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

/// Parses "a,b,c" into integers.
inline std::vector<Index> parse_index_list(const std::string& s, const std::string& what) {
    std::vector<Index> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            out.push_back(static_cast<Index>(v));
        } catch (const std::exception&) {
            throw InputError(what + ": cannot parse '" + tok + "' as an integer");
        }
    }
    return out;
}

// ---------- reproduce ----------

struct CaseSpec {
    Index n1, n2, p;
    std::string label() const {
        return std::to_string(n1) + "x" + std::to_string(n2) + "x" + std::to_string(p);
    }
};

struct CellResult {
    bool ok = false;
    std::string reason;
    double gerr_tnn = 0.0, merr_tnn = 0.0, gerr_mle = 0.0, merr_mle = 0.0;
};

/// One simulate -> fit(TNN) -> fit(MLE) -> eval run.
inline CellResult run_cell(const RunConfig& rc, const CaseSpec& cs, Index K, std::uint64_t seed) {
    CellResult r;
    try {
        SimConfig sc = rc.sim;
        sc.n1 = cs.n1;
        sc.n2 = cs.n2;
        sc.p = cs.p;
        sc.K = K;
        sc.seed = seed;
        const auto truth = generate_truth(sc);
        const auto z = simulate(truth.params, sc);
        AdmmConfig ac = rc.admm;
        if (!rc.fs_given) ac.fs = feasible_set_for(truth.params);
        ac.mode = FitMode::TNN;
        const auto tnn_fit = fit(z, ac);
        AdmmConfig mc = ac;
        mc.mode = FitMode::MLE;
        mc.rho = rc.rho_mle;
        const auto mle_fit = fit(z, mc);
        r.gerr_tnn = gerr(truth.params.G, tnn_fit.estimate.G);
        r.merr_tnn = merr(truth.params.mu, tnn_fit.estimate.mu);
        r.gerr_mle = gerr(truth.params.G, mle_fit.estimate.G);
        r.merr_mle = merr(truth.params.mu, mle_fit.estimate.mu);
        r.ok = true;
    } catch (const std::exception& e) {
        r.reason = e.what();
    }
    return r;
}

inline json cell_to_json(const CellResult& c) {
    json j{{"ok", c.ok}};
    if (c.ok) {
        j["tnn"] = {{"Gerr", c.gerr_tnn}, {"Merr", c.merr_tnn}};
        j["mle"] = {{"Gerr", c.gerr_mle}, {"Merr", c.merr_mle}};
    } else {
        j["reason"] = c.reason;
    }
    return j;
}

/// Columns: case, method, K, runs, Gerr, Merr (means over successful runs).
inline std::string reproduce_table(const std::vector<CaseSpec>& cases, const std::vector<Index>& ks, int runs,
                                   const std::vector<CellResult>& cells) {
    std::ostringstream ss;
    ss << "case,method,K,runs,Gerr,Merr\n";
    std::size_t idx = 0;
    for (const auto& cs : cases)
        for (Index K : ks) {
            double gt = 0, mt = 0, gm = 0, mm = 0;
            int ok = 0;
            for (int r = 0; r < runs; ++r, ++idx) {
                const auto& c = cells[idx];
                if (!c.ok) continue;
                ++ok;
                gt += c.gerr_tnn;
                mt += c.merr_tnn;
                gm += c.gerr_mle;
                mm += c.merr_mle;
            }
            auto row = [&](const char* method, double g, double m) {
                ss << cs.label() << ',' << method << ',' << K << ',' << ok << ',';
                if (ok > 0) ss << io::fmt(g / ok) << ',' << io::fmt(m / ok);
                else ss << ',';
                ss << '\n';
            };
            row("TNN", gt, mt);
            row("MLE", gm, mm);
        }
    return ss.str();
}

// ---------- app ----------

class App {
 public:
    App(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

    int run(int argc, const char* const* argv) {
        CLI::App app{"Discrete spatio-temporal Hawkes models with a low-rank tensor kernel", "sthawkes"};
        app.require_subcommand(1);
        app.add_option("--config", config_path_, "JSON config with sections sim, admm, discretization");
        app.add_option("--seed", seed_, "Seed override");
        app.add_option("--out", out_dir_, "Output directory");
        app.add_option("--threads", threads_, "Worker threads")->check(CLI::PositiveNumber);

        auto* sim = app.add_subcommand("simulate", "Generate a synthetic truth and bin counts");

        auto* fitc = app.add_subcommand("fit", "Fit a model by ADMM");
        fitc->add_option("--data", data_path_, "Bin counts file");
        fitc->add_option("--events", events_path_, "Events CSV (x,y,t), discretized with the config");
        fitc->add_option("--mode", mode_, "tnn or mle")->check(CLI::IsMember({"tnn", "mle"}));
        fitc->add_option("--truth", truth_path_, "True parameters, used only to set the box bounds");
        fitc->add_option("--resume", resume_path_, "Checkpoint to continue from");
        fitc->add_option("--max-outer", max_outer_, "Override admm.max_outer");

        auto* evalc = app.add_subcommand("eval", "Metrics of a fitted model");
        evalc->add_option("--model", model_path_, "Fitted parameters")->required();
        evalc->add_option("--truth", truth_path_, "True parameters (Merr, Gerr)");
        evalc->add_option("--test", test_path_, "Held-out bin counts (FRQ, NLR)");
        evalc->add_option("--method", method_, "Row label");
        evalc->add_option("--nsim", nsim_, "Forward simulations for FRQ")->check(CLI::PositiveNumber);

        auto* boundc = app.add_subcommand("bound", "Data-driven error bounds");
        boundc->add_option("--data", data_path_, "Bin counts file")->required();
        boundc->add_option("--truth", truth_path_, "True parameters, used only to set the box bounds");
        boundc->add_option("--alpha1", alpha1_, "Confidence split, first part");
        boundc->add_option("--alpha2", alpha2_, "Confidence split, second part");
        boundc->add_option("--variant", variant_, "theorem3, corollary1 or remark2")
            ->check(CLI::IsMember({"theorem3", "corollary1", "remark2"}));
        boundc->add_option("--c1", c1_, "Remark-2 constant bounding J_upper");
        boundc->add_option("--c2", c2_, "Remark-2 constant bounding delta2 from below");
        boundc->add_option("--window-norm", window_norm_, "raw or embedded")->check(CLI::IsMember({"raw", "embedded"}));

        auto* tunec = app.add_subcommand("tune", "Pick tau by held-out likelihood");
        tunec->add_option("--data", data_path_, "Bin counts file")->required();
        tunec->add_option("--grid", grid_, "Comma-separated tau values")->delimiter(',')->required();
        tunec->add_option("--holdout", holdout_, "Held-out fraction of the bins");
        tunec->add_option("--truth", truth_path_, "True parameters, used only to set the box bounds");

        auto* rep = app.add_subcommand("reproduce", "Error table over cases, sample sizes and seeds");
        rep->add_option("--case", case_strs_, "n1,n2,p (repeatable)");
        rep->add_option("--K-list", k_list_, "Comma-separated K values")->delimiter(',');
        rep->add_option("--runs", runs_, "Seeds per cell")->check(CLI::PositiveNumber);

        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp& e) {
            out_ << app.help();
            return kOk;
        } catch (const CLI::ParseError& e) {
            return fail(kUsage, "usage", e.what());
        }

        try {
            load_config();
            if (sim->parsed()) return cmd_simulate();
            if (fitc->parsed()) return cmd_fit();
            if (evalc->parsed()) return cmd_eval();
            if (boundc->parsed()) return cmd_bound();
            if (tunec->parsed()) return cmd_tune();
            if (rep->parsed()) return cmd_reproduce();
            return fail(kUsage, "usage", "no subcommand");
        } catch (const NumericalError& e) {
            return fail(kNumerical, "numerical", e.what());
        } catch (const std::invalid_argument& e) {
            return fail(kUsage, "input", e.what());
        } catch (const std::filesystem::filesystem_error& e) {
            return fail(kUsage, "io", e.what());
        } catch (const std::exception& e) {
            return fail(kNumerical, "runtime", e.what());
        }
    }

 private:
    int fail(int code, const std::string& kind, const std::string& msg) {
        err_ << json{{"error", kind}, {"code", code}, {"message", msg}}.dump() << std::endl;
        return code;
    }

    void log(const std::string& msg) { err_ << msg << '\n'; }

    void load_config() {
        if (!config_path_.empty()) rc_ = parse_run_config(io::read_json(config_path_));
        if (seed_) rc_.sim.seed = *seed_;
        if (out_dir_) rc_.out = *out_dir_;
        if (threads_) rc_.threads = *threads_;
    }

    std::string out_file(const std::string& name) const { return path_in(rc_.out, name); }

    BinCounts load_counts() {
        if (!data_path_.empty() && !events_path_.empty()) throw InputError("give either --data or --events");
        if (!data_path_.empty()) return io::read_bincounts_file(data_path_);
        if (events_path_.empty()) throw InputError("missing --data or --events");
        if (!rc_.disc_given) throw InputError("--events needs a discretization section in the config");
        const auto loaded = load_events(events_path_);
        if (loaded.malformed_rows > 0) log("skipped " + std::to_string(loaded.malformed_rows) + " malformed rows");
        auto d = discretize(loaded.events, rc_.disc);
        log("discretized " + std::to_string(d.kept) + " events, dropped " + std::to_string(d.dropped));
        return std::move(d.counts);
    }

    FeasibleSet resolve_fs(const BinCounts& z) {
        if (rc_.fs_given) return rc_.admm.fs;
        if (!truth_path_.empty()) return feasible_set_for(io::read_params(truth_path_));
        return default_feasible_set(z);
    }

    int cmd_simulate() {
        const SimConfig& sc = rc_.sim;
        sc.validate();
        const auto truth = generate_truth(sc);
        const auto z = simulate(truth.params, sc);
        io::write_params(out_file("params_true.json"), truth.params);
        io::write_bincounts_file(out_file("counts.txt"), z);
        const json prov{{"seed", sc.seed},
                        {"mu_scale", truth.mu_scale},
                        {"g_scale", truth.g_scale},
                        {"gamma", multi_rank(truth.params.G).gamma},
                        {"sim", io::to_json(sc)}};
        io::write_atomic(out_file("provenance.json"), prov.dump(2) + "\n");
        out_ << "wrote " << out_file("params_true.json") << ", " << out_file("counts.txt") << '\n';
        return kOk;
    }

    int cmd_fit() {
        const BinCounts z = load_counts();
        AdmmConfig ac = rc_.admm;
        ac.mode = parse_fit_mode(mode_);
        if (ac.mode == FitMode::MLE) {
            ac.rho = rc_.rho_mle;
            log("notice: mle mode ignores tau");
        }
        if (max_outer_) ac.max_outer = *max_outer_;
        ac.fs = resolve_fs(z);
        FitResult res;
        if (!resume_path_.empty()) {
            auto ck = io::checkpoint_from_json(io::read_json(resume_path_));
            res = fit_from_state(z, ac, std::move(ck.state));
        } else {
            res = fit(z, ac);
        }
        const std::string tag = to_string(ac.mode);
        io::write_params(out_file("model_" + tag + ".json"), res.estimate);
        io::write_atomic(out_file("fit_report_" + tag + ".csv"), io::fit_report_csv(res.report));
        io::write_atomic(out_file("checkpoint_" + tag + ".json"), io::checkpoint_to_json(res.state, ac).dump() + "\n");
        out_ << tag << ": " << res.report.iterations << " iterations, converged=" << (res.report.converged ? 1 : 0)
             << ", wall " << res.report.wall_time << " s\n";
        return kOk;
    }

    int cmd_eval() {
        const HawkesParams model = io::read_params(model_path_);
        if (truth_path_.empty() && test_path_.empty()) throw InputError("eval needs --truth and/or --test");
        io::MetricsRow row;
        row.method = method_.empty() ? std::filesystem::path(model_path_).stem().string() : method_;
        if (!truth_path_.empty()) {
            const HawkesParams truth = io::read_params(truth_path_);
            row.merr = merr(truth.mu, model.mu);
            row.gerr = gerr(truth.G, model.G);
        }
        if (!test_path_.empty()) {
            const BinCounts test = io::read_bincounts_file(test_path_);
            const int nsim = nsim_.value_or(rc_.eval.nsim);
            const auto sims = simulate_predictions(model, test.history(), test.K(), test.delta(), nsim, rc_.sim.seed,
                                                   rc_.threads);
            const Tensor3 actual = test.main_slab();
            double acc = 0.0;
            for (const auto& s : sims) acc += frq(s, actual);
            row.frq1 = frq(sims.front(), actual);
            row.frq_avg = acc / static_cast<double>(sims.size());
            row.nlr = nlr(model, test);
        }
        const std::string csv = io::metrics_csv({row});
        io::write_atomic(out_file("metrics.csv"), csv);
        out_ << csv;
        return kOk;
    }

    int cmd_bound() {
        const BinCounts z = io::read_bincounts_file(data_path_);
        BoundInputs inp{resolve_fs(z), z, alpha1_, alpha2_,
                        window_norm_ == "embedded" ? WindowNorm::Embedded : WindowNorm::Raw};
        json j{{"variant", variant_}, {"alpha1", alpha1_}, {"alpha2", alpha2_}, {"fs", io::to_json(inp.fs)}};
        if (variant_ == "theorem3") {
            j["report"] = io::bound_report_to_json(bound_theorem3(inp));
        } else if (variant_ == "corollary1") {
            j["bound_value"] = bound_corollary1(inp);
        } else {
            if (!c1_ || !c2_) throw InputError("remark2 needs --c1 and --c2");
            j["c1"] = *c1_;
            j["c2"] = *c2_;
            j["bound_value"] = bound_remark2(*c1_, *c2_, inp);
        }
        io::write_atomic(out_file("bound_" + variant_ + ".json"), j.dump(2) + "\n");
        out_ << j.dump(2) << '\n';
        return kOk;
    }

    int cmd_tune() {
        const BinCounts z = io::read_bincounts_file(data_path_);
        AdmmConfig ac = rc_.admm;
        ac.fs = resolve_fs(z);
        const auto res = tune_tau(z, ac, grid_, holdout_);
        const json j{{"grid", grid_}, {"holdout", holdout_}, {"scores", res.scores}, {"best_tau", res.best_tau}};
        io::write_atomic(out_file("tune.json"), j.dump(2) + "\n");
        out_ << "best tau " << io::fmt(res.best_tau) << '\n';
        return kOk;
    }

    int cmd_reproduce() {
        std::vector<CaseSpec> cases;
        if (case_strs_.empty()) case_strs_ = {"4,4,5"};
        for (const auto& s : case_strs_) {
            const auto v = parse_index_list(s, "--case");
            if (v.size() != 3 || v[0] < 1 || v[1] < 1 || v[2] < 1) throw InputError("--case expects n1,n2,p, got '" + s + "'");
            cases.push_back({v[0], v[1], v[2]});
        }
        if (k_list_.empty()) k_list_ = {1000, 3000, 10000};
        for (Index K : k_list_)
            if (K < 1) throw InputError("--K-list values must be >= 1");
        std::vector<std::uint64_t> seeds = rc_.seeds;
        if (seeds.empty() || runs_) {
            seeds.clear();
            for (int r = 0; r < runs_.value_or(5); ++r) seeds.push_back(rc_.sim.seed + static_cast<std::uint64_t>(r));
        }
        const int runs = static_cast<int>(seeds.size());

        struct Job {
            CaseSpec cs;
            Index K;
            std::uint64_t seed;
        };
        std::vector<Job> jobs;
        for (const auto& cs : cases)
            for (Index K : k_list_)
                for (auto s : seeds) jobs.push_back({cs, K, s});

        std::vector<CellResult> cells(jobs.size());
        parallel_for(static_cast<std::ptrdiff_t>(jobs.size()), rc_.threads, [&](std::ptrdiff_t i) {
            const auto& jb = jobs[static_cast<std::size_t>(i)];
            cells[static_cast<std::size_t>(i)] = run_cell(rc_, jb.cs, jb.K, jb.seed);
            const std::string name =
                "cells/" + jb.cs.label() + "_K" + std::to_string(jb.K) + "_seed" + std::to_string(jb.seed) + ".json";
            io::write_atomic(out_file(name), cell_to_json(cells[static_cast<std::size_t>(i)]).dump(2) + "\n");
        });
        for (std::size_t i = 0; i < jobs.size(); ++i)
            if (!cells[i].ok) {
                log("cell " + jobs[i].cs.label() + " K=" + std::to_string(jobs[i].K) + " seed=" +
                    std::to_string(jobs[i].seed) + " failed: " + cells[i].reason);
            }
        const std::string table = reproduce_table(cases, k_list_, runs, cells);
        io::write_atomic(out_file("reproduce.csv"), table);
        out_ << table;
        return kOk;
    }

    std::ostream& out_;
    std::ostream& err_;
    RunConfig rc_;

    std::string config_path_;
    std::optional<std::uint64_t> seed_;
    std::optional<std::string> out_dir_;
    std::optional<int> threads_;
    std::string data_path_, events_path_, truth_path_, resume_path_, model_path_, test_path_, method_;
    std::string mode_ = "tnn";
    std::optional<int> max_outer_, nsim_;
    double alpha1_ = 0.05, alpha2_ = 0.05;
    std::string variant_ = "theorem3", window_norm_ = "raw";
    std::optional<double> c1_, c2_;
    std::vector<double> grid_;
    double holdout_ = 0.2;
    std::vector<std::string> case_strs_;
    std::vector<Index> k_list_;
    std::optional<int> runs_;
};

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    App app(out, err);
    return app.run(argc, argv);
}

}  // namespace sthawkes::cli
