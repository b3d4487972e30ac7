// Command-line front end: Monte Carlo scenario runs, the theoretical
// standard-error grid, one-shot estimation from user CSVs, and the built-in
// verification sweep. Exit codes: 0 success, 1 verification/runtime failure,
// 2 usage error.

#include "quasirand/quasirand.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace quasirand;

namespace {

std::uint64_t effective_seed(std::uint64_t cli_seed) {
    if (const char* env = std::getenv("QUASIRAND_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw CLI::ValidationError("QUASIRAND_SEED", "not a valid integer seed");
        }
    }
    return cli_seed;
}

std::vector<double> parse_fraction_list(const std::string& text, const char* flag) {
    std::vector<double> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        values.push_back(csv::parse_double(item, flag));
        if (!(values.back() > 0.0 && values.back() <= 1.0))
            throw CLI::ValidationError(flag, "fractions must lie in (0,1]");
    }
    if (values.empty()) throw CLI::ValidationError(flag, "empty fraction list");
    return values;
}

int cmd_simulate(const std::string& scenario, const std::string& overlap, int reps,
                 std::uint64_t seed, const std::string& out_dir, int threads, bool with_alp) {
    const OverlapKind kind = overlap == "low" ? OverlapKind::low : OverlapKind::high;
    ScenarioConfig cfg = scenario_config(scenario, kind, reps, seed);
    fs::create_directories(out_dir);

    std::cerr << "simulate " << scenario << " overlap=" << cfg.overlap << " reps=" << reps
              << " seed=" << seed << "\n";
    const MCSummary summary = run_monte_carlo(cfg, threads, with_alp);
    write_summary_csv((fs::path(out_dir) / "summary.csv").string(), summary);
    write_replicates_csv((fs::path(out_dir) / "replicates.csv").string(), summary);

    // Overlap histogram from the first replicate's draws.
    const FinitePopulation pop = build_scenario_population(cfg);
    const auto rep_seed = replicate_seed(cfg.master_seed, cfg.id + "/" + cfg.overlap, 0);
    RngStream base(rep_seed);
    RngStream rng_c = base.substream(1);
    RngStream rng_r = base.substream(2);
    const IndexSet s_c = poisson_sample(pop.pi_c_true, rng_c);
    IndexSet s_r;
    if (cfg.reference_is_population) {
        s_r.resize(static_cast<std::size_t>(pop.size()));
        std::iota(s_r.begin(), s_r.end(), Eigen::Index{0});
    } else {
        s_r = pps_systematic_sample(pop.pi_r_true, rng_r);
    }
    write_overlap_hist_csv((fs::path(out_dir) / "overlap_hist.csv").string(),
                           overlap_histogram(pop, s_c, s_r, 30));

    if (with_alp) {
        // Population predictions from the first replicate's fits, for the
        // one-step vs two-step bias comparison.
        const ObservedData data = ObservedData::from_population(pop, s_c, s_r);
        std::vector<std::pair<MethodKind, Vector>> predictions;
        for (MethodKind m : {MethodKind::CLW, MethodKind::ILR, MethodKind::PILR}) {
            const PropensityFit f = fit(m, data);
            predictions.emplace_back(m, predict_pi_c(m, f.beta_hat, pop.x));
        }
        const PropensityFit alp = alp_two_step(data);
        predictions.emplace_back(MethodKind::ALP, predict_pi_c(MethodKind::ALP, alp.beta_hat, pop.x));
        write_predictions_csv((fs::path(out_dir) / "pred_vs_true.csv").string(), cfg.id,
                              cfg.overlap, pop, predictions);
    }

    for (const auto& cell : summary.cells) {
        if (cell.n_nonconverged * 2 > reps)
            std::cerr << "warning: " << cell.method << " failed to converge in "
                      << cell.n_nonconverged << "/" << reps << " replicates\n";
    }
    std::cerr << "wrote " << out_dir << "/summary.csv\n";
    return 0;
}

int cmd_numstudy(const std::string& out_path, Eigen::Index n_pop, std::uint64_t seed,
                 const std::string& fc_spec, const std::string& fr_spec,
                 const std::string& overlap) {
    const std::vector<double> f_c = parse_fraction_list(fc_spec, "--fc");
    const std::vector<double> f_r = parse_fraction_list(fr_spec, "--fr");
    std::vector<GridPoint> grid;
    const std::vector<std::string> overlaps =
        overlap == "both" ? std::vector<std::string>{"high", "low"}
                          : std::vector<std::string>{overlap};
    for (const auto& label : overlaps) {
        RngStream rng(hash_combine(seed, "numstudy/" + label));
        const FinitePopulation pop =
            generate_population(n_pop, -1.0, 1.0, label == "high" ? 1.0 : -1.0, rng);
        std::cerr << "numstudy overlap=" << label << " N=" << n_pop << "\n";
        auto part = se_ratio_grid(pop, f_c, f_r, label);
        grid.insert(grid.end(), part.begin(), part.end());
    }
    if (const fs::path parent = fs::path(out_path).parent_path(); !parent.empty())
        fs::create_directories(parent);
    write_grid_csv(out_path, grid);
    std::cerr << "wrote " << out_path << "\n";
    return 0;
}

json fit_to_json(MethodKind method, const ObservedData& data, double level) {
    json entry;
    entry["method"] = method_name(method);
    if (method == MethodKind::ALP) {
        const PropensityFit f = alp_two_step(data);
        const HajekEstimate hajek = hajek_mean(data.conv_y, f.pi_c_hat_conv);
        entry["converged"] = f.converged;
        entry["iterations"] = f.iterations;
        entry["score_norm"] = f.score_norm;
        entry["beta_hat"] = std::vector<double>(f.beta_hat.begin(), f.beta_hat.end());
        entry["mu_hat"] = hajek.mu_hat;
        entry["n_hat"] = hajek.n_hat;
        entry["flags"] = {{"pi_above_one", f.n_pi_above_one},
                          {"pi_delta_at_clamp", f.n_flagged_rows}};
        return entry;
    }
    const PropensityFit f = fit(method, data);
    const InferenceResult inf = infer(method, data, f, level);
    entry["converged"] = f.converged;
    entry["iterations"] = f.iterations;
    entry["score_norm"] = f.score_norm;
    entry["beta_hat"] = std::vector<double>(f.beta_hat.begin(), f.beta_hat.end());
    entry["mu_hat"] = inf.mu_hat;
    entry["n_hat"] = inf.n_hat;
    entry["var_mu"] = inf.var_mu;
    entry["se_mu"] = inf.se_mu;
    entry["ci"] = {inf.ci.first, inf.ci.second};
    std::vector<std::vector<double>> vb;
    for (Eigen::Index r = 0; r < inf.var_beta.rows(); ++r)
        vb.emplace_back(inf.var_beta.row(r).begin(), inf.var_beta.row(r).end());
    entry["var_beta"] = vb;
    entry["flags"] = {{"var_inf", inf.var_inf}, {"var_clamped", inf.var_clamped}};
    return entry;
}

int cmd_estimate(const std::string& conv_path, const std::string& ref_path,
                 const std::string& methods_spec, const std::string& out_path, double level) {
    std::vector<MethodKind> methods;
    std::stringstream ss(methods_spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) methods.push_back(parse_method(item));
    }
    if (methods.empty()) throw std::invalid_argument("empty method list");

    const ObservedData data = read_observed_data(conv_path, ref_path);
    for (MethodKind m : methods) {
        if (m == MethodKind::ILR && !data.conv_pi_r)
            throw std::invalid_argument(
                "method ILR requires conv_pi_r: add a pi_r column to the convenience file");
    }

    json result;
    result["schema"] = 1;
    result["level"] = level;
    result["n_c"] = data.n_conv();
    result["n_r"] = data.n_ref();
    result["methods"] = json::array();
    for (MethodKind m : methods) result["methods"].push_back(fit_to_json(m, data, level));

    const std::string text = result.dump(2);
    if (out_path.empty()) {
        std::cout << text << "\n";
    } else {
        if (const fs::path parent = fs::path(out_path).parent_path(); !parent.empty())
            fs::create_directories(parent);
        std::ofstream out(out_path);
        if (!out) throw std::runtime_error("cannot write " + out_path);
        out << text << "\n";
        std::cerr << "wrote " << out_path << "\n";
    }
    return 0;
}

int cmd_verify(Eigen::Index n_max, int instances, bool perturb) {
    int failures = 0;
    auto report = [&](const std::string& name, bool ok, const std::string& detail = "") {
        std::cout << (ok ? "ok   " : "FAIL ") << name;
        if (!ok && !detail.empty()) std::cout << "  [" << detail << "]";
        std::cout << "\n";
        if (!ok) ++failures;
    };
    const double perturbation = perturb ? 1e-6 : 0.0;

    // Exhaustive enumeration against the closed-form covariance.
    RngStream rng(20240601);
    bool cov_ok = true;
    std::string cov_detail;
    for (Eigen::Index n = 2; n <= n_max && cov_ok; ++n) {
        for (int trial = 0; trial < 8 && cov_ok; ++trial) {
            Vector pc(n), pr(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                pc[i] = 0.1 + 0.8 * rng.uniform();
                pr[i] = 0.1 + 0.8 * rng.uniform();
            }
            const Matrix bf = cov_Iz_bruteforce(pc, pr);
            for (Eigen::Index i = 0; i < n && cov_ok; ++i) {
                for (Eigen::Index j = 0; j < n; ++j) {
                    if (i == j) continue;
                    const double exact =
                        cov_Iz_exact(pc[i] / (pc[i] + pr[i]), pc[j] / (pc[j] + pr[j]), n) +
                        perturbation;
                    if (std::abs(bf(i, j) - exact) > 1e-12) {
                        cov_ok = false;
                        cov_detail = "N=" + std::to_string(n) + " pair (" + std::to_string(i) +
                                     "," + std::to_string(j) + ")";
                        break;
                    }
                }
            }
        }
    }
    report("cov_Iz exact vs brute force (N <= " + std::to_string(n_max) + ")", cov_ok, cov_detail);

    bool census_ok = true;
    for (Eigen::Index n : {2, 5, 10}) {
        const double corr = cov_Iz_exact(0.5, 0.5, n) / 0.25 + perturbation;
        if (std::abs(corr + 1.0 / (2.0 * static_cast<double>(n) - 1.0)) > 1e-12) census_ok = false;
    }
    report("census correlation -1/(2N-1)", census_ok);

    // Analytic scores against central finite differences.
    for (MethodKind m : {MethodKind::CLW, MethodKind::ILR, MethodKind::PILR}) {
        bool grad_ok = true;
        std::string grad_detail;
        for (int inst = 0; inst < instances && grad_ok; ++inst) {
            const Eigen::Index n_c = 8 + inst % 7, n_r = 6 + inst % 5;
            ObservedData data;
            data.conv_x.resize(n_c, 2);
            data.conv_y.resize(n_c);
            Vector cpr(n_c);
            for (Eigen::Index i = 0; i < n_c; ++i) {
                data.conv_x(i, 0) = rng.normal();
                data.conv_x(i, 1) = rng.normal();
                data.conv_y[i] = rng.normal();
                cpr[i] = 0.1 + 0.8 * rng.uniform();
            }
            data.conv_pi_r = cpr;
            data.ref_x.resize(n_r, 2);
            data.ref_pi_r.resize(n_r);
            data.ref_w.resize(n_r);
            for (Eigen::Index i = 0; i < n_r; ++i) {
                data.ref_x(i, 0) = rng.normal();
                data.ref_x(i, 1) = rng.normal();
                data.ref_pi_r[i] = 0.1 + 0.8 * rng.uniform();
                data.ref_w[i] = 1.0 / data.ref_pi_r[i];
            }
            Vector beta(3);
            for (int j = 0; j < 3; ++j) beta[j] = -1.0 + 2.0 * rng.uniform();
            const Vector analytic = score(m, data, beta);
            Vector numeric(3);
            for (Eigen::Index j = 0; j < 3; ++j) {
                Vector up = beta, down = beta;
                up[j] += 1e-6;
                down[j] -= 1e-6;
                numeric[j] = (loglik(m, data, up) - loglik(m, data, down)) / 2e-6;
            }
            const double scale = std::max(1.0, numeric.cwiseAbs().maxCoeff());
            if ((analytic - numeric).cwiseAbs().maxCoeff() / scale + perturbation > 1e-4) {
                grad_ok = false;
                grad_detail = "instance " + std::to_string(inst);
            }
        }
        report(std::string("score vs finite differences (") + method_name(m) + ")", grad_ok,
               grad_detail);
    }

    // Hajek estimating-equation residual.
    bool hajek_ok = true;
    for (int inst = 0; inst < 20; ++inst) {
        const int n = 30;
        Vector y(n), pi(n);
        for (int i = 0; i < n; ++i) {
            y[i] = rng.normal();
            pi[i] = 0.05 + 0.9 * rng.uniform();
        }
        const auto est = hajek_mean(y, pi);
        double residual = perturbation, scale = 0.0;
        for (int i = 0; i < n; ++i) {
            residual += (y[i] - est.mu_hat) / pi[i];
            scale += std::abs(y[i]) / pi[i];
        }
        if (std::abs(residual) / scale > 1e-9) hajek_ok = false;
    }
    report("hajek estimating-equation residual <= 1e-9", hajek_ok);

    std::cout << (failures == 0 ? "verify: all checks passed" : "verify: FAILURES") << "\n";
    return failures == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Participation-probability estimation for non-probability samples"};
    app.require_subcommand(1);

    // simulate
    auto* simulate = app.add_subcommand("simulate", "run a Monte Carlo scenario");
    std::string scenario, overlap = "high", out_dir = "out";
    int reps = 1000, threads = 0;
    std::uint64_t seed = 1;
    bool with_alp = false;
    simulate->add_option("--scenario", scenario, "scenario id S1..S7")->required();
    simulate->add_option("--overlap", overlap, "high or low")
        ->check(CLI::IsMember({"high", "low"}));
    simulate->add_option("--reps", reps, "Monte Carlo replicates")->check(CLI::PositiveNumber);
    simulate->add_option("--seed", seed, "master seed");
    simulate->add_option("--out", out_dir, "output directory")->required();
    simulate->add_option("--threads", threads, "worker threads (default: hardware)");
    simulate->add_flag("--alp", with_alp, "also run ALP and write pred_vs_true.csv");

    // numstudy
    auto* numstudy = app.add_subcommand("numstudy", "theoretical SE grid over sampling fractions");
    std::string grid_out = "grid.csv";
    std::string fc_spec = "0.05,0.19,0.51,0.85";
    std::string fr_spec = "0.02,0.03,0.05,0.08,0.12,0.2,0.3,0.45,0.65,0.85,1.0";
    std::string grid_overlap = "both";
    Eigen::Index grid_n = 100000;
    std::uint64_t grid_seed = 1;
    numstudy->add_option("--out", grid_out, "output CSV path")->required();
    numstudy->add_option("--fc", fc_spec, "comma-separated convenience fractions");
    numstudy->add_option("--fr", fr_spec, "comma-separated reference fractions");
    numstudy->add_option("--overlap", grid_overlap, "high, low, or both")
        ->check(CLI::IsMember({"high", "low", "both"}));
    numstudy->add_option("--n", grid_n, "population size")->check(CLI::PositiveNumber);
    numstudy->add_option("--seed", grid_seed, "population seed");

    // estimate
    auto* estimate = app.add_subcommand("estimate", "estimate from convenience + reference CSVs");
    std::string conv_path, ref_path, methods_spec = "ILR,PILR,CLW", json_out;
    double level = 0.95;
    estimate->add_option("--conv", conv_path, "convenience CSV (y,x1..xp[,pi_r])")->required();
    estimate->add_option("--ref", ref_path, "reference CSV (x1..xp,pi_r)")->required();
    estimate->add_option("--methods", methods_spec, "comma-separated methods");
    estimate->add_option("--out", json_out, "JSON output path (default: stdout)");
    estimate->add_option("--level", level, "confidence level")->check(CLI::Range(0.5, 0.999));

    // verify
    auto* verify = app.add_subcommand("verify", "run the built-in oracle checks");
    Eigen::Index n_max = 4;
    int instances = 100;
    bool perturb = false;
    verify->add_option("--n-max", n_max, "largest brute-force population size")
        ->check(CLI::Range(2, 6));
    verify->add_option("--instances", instances, "gradient-check instances per method")
        ->check(CLI::PositiveNumber);
    verify->add_flag("--self-test-perturb", perturb,
                     "inject a formula perturbation; verification must then fail");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (simulate->parsed())
            return cmd_simulate(scenario, overlap, reps, effective_seed(seed), out_dir, threads,
                                with_alp);
        if (numstudy->parsed())
            return cmd_numstudy(grid_out, grid_n, effective_seed(grid_seed), fc_spec, fr_spec,
                                grid_overlap);
        if (estimate->parsed())
            return cmd_estimate(conv_path, ref_path, methods_spec, json_out, level);
        if (verify->parsed()) return cmd_verify(n_max, instances, perturb);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
