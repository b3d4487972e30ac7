#pragma once

// Monte Carlo engine: population generation, the S1-S7 scenario table,
// replicate execution across methods, and summary statistics. One population
// is generated per scenario and resampled for every replicate; replicates
// are seeded independently of scheduling, so results do not depend on the
// worker count.

#include "quasirand/designs.hpp"
#include "quasirand/inference.hpp"
#include "quasirand/model.hpp"
#include "quasirand/propensity.hpp"
#include "quasirand/rng.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace quasirand {

enum class OverlapKind { high, low };

inline const char* overlap_label(OverlapKind k) { return k == OverlapKind::high ? "high" : "low"; }

struct ScenarioConfig {
    std::string id;
    Eigen::Index N = 0;
    double beta_c0 = 0.0;
    double beta_c1 = 1.0;
    double beta_r = 1.0;  // +1 high overlap, -1 low overlap
    std::string overlap = "high";
    double f_r_target = 1.0;
    int reps = 1000;
    std::uint64_t master_seed = 0;
    bool reference_is_population = false;

    void validate() const {
        if (reps < 1) throw std::invalid_argument("ScenarioConfig: reps must be >= 1");
        if (N < 10) throw std::invalid_argument("ScenarioConfig: N must be >= 10");
        if (!(f_r_target > 0.0 && f_r_target <= 1.0))
            throw std::invalid_argument("ScenarioConfig: f_r_target outside (0,1]");
    }
};

// Scenario table: population sizes follow n_c/f_c, the intercepts put the
// convenience sampling fraction at about 0.10 (-2.5), 0.01 (-5.0) or
// 0.50 (0.0).
inline ScenarioConfig scenario_config(const std::string& id, OverlapKind overlap, int reps,
                                      std::uint64_t master_seed) {
    ScenarioConfig cfg;
    cfg.id = id;
    cfg.reps = reps;
    cfg.master_seed = master_seed;
    cfg.beta_r = overlap == OverlapKind::high ? 1.0 : -1.0;
    cfg.overlap = overlap_label(overlap);
    if (id == "S1") {
        cfg.N = 60000; cfg.beta_c0 = -5.0; cfg.f_r_target = 0.01;
    } else if (id == "S2") {
        cfg.N = 10000; cfg.beta_c0 = -5.0; cfg.f_r_target = 0.01;
    } else if (id == "S3") {
        cfg.N = 6000; cfg.beta_c0 = -2.5; cfg.f_r_target = 0.10;
    } else if (id == "S4") {
        cfg.N = 1000; cfg.beta_c0 = -2.5; cfg.f_r_target = 0.10;
    } else if (id == "S5") {
        cfg.N = 10000; cfg.beta_c0 = -5.0; cfg.f_r_target = 0.10;
    } else if (id == "S6") {
        cfg.N = 10000; cfg.beta_c0 = -2.5; cfg.f_r_target = 0.01;
    } else if (id == "S7") {
        cfg.N = 1000; cfg.beta_c0 = 0.0; cfg.f_r_target = 1.0;
        cfg.reference_is_population = true;
    } else {
        throw std::invalid_argument("unknown scenario id: " + id);
    }
    return cfg;
}

// x ~ N(0,1) iid, y ~ N(1 + x, 1.5^2), logit pi_c = b0 + b1 x, and the PPS
// size measure expit(1 + beta_r x). pi_r_true is left at 1 until the caller
// calibrates it to the reference design.
inline FinitePopulation generate_population(Eigen::Index N, double beta_c0, double beta_c1,
                                            double beta_r, RngStream& rng) {
    if (N < 10) throw std::invalid_argument("generate_population: N must be >= 10");
    FinitePopulation pop;
    pop.x.resize(N, 1);
    pop.y.resize(N);
    pop.pi_c_true.resize(N);
    pop.size_r.resize(N);
    pop.pi_r_true = Vector::Ones(N);
    for (Eigen::Index i = 0; i < N; ++i) {
        const double x = rng.normal();
        pop.x(i, 0) = x;
        pop.y[i] = 1.0 + x + 1.5 * rng.normal();
        pop.pi_c_true[i] = clamp_prob(expit(beta_c0 + beta_c1 * x));
        pop.size_r[i] = expit(1.0 + beta_r * x);
    }
    return pop;
}

// Builds the scenario's single population, including the calibrated
// reference inclusion probabilities.
inline FinitePopulation build_scenario_population(const ScenarioConfig& cfg) {
    cfg.validate();
    const std::uint64_t seed =
        hash_combine(hash_combine(cfg.master_seed, cfg.id + "/" + cfg.overlap), 0x706f70ULL);
    RngStream rng(seed);
    FinitePopulation pop = generate_population(cfg.N, cfg.beta_c0, cfg.beta_c1, cfg.beta_r, rng);
    if (!cfg.reference_is_population) {
        const auto n_r = static_cast<Eigen::Index>(
            std::lround(cfg.f_r_target * static_cast<double>(cfg.N)));
        pop.pi_r_true = calibrate_inclusion_probs(pop.size_r, std::max<Eigen::Index>(n_r, 1));
    }
    return pop;
}

struct MethodRecord {
    MethodKind method = MethodKind::ILR;
    double beta1 = std::numeric_limits<double>::quiet_NaN();
    double mu = std::numeric_limits<double>::quiet_NaN();
    double var_beta1 = std::numeric_limits<double>::quiet_NaN();
    double var_mu = std::numeric_limits<double>::quiet_NaN();
    bool ci_hit_beta = false;
    bool ci_hit_mu = false;
    bool converged = false;
    bool var_inf = false;
    bool var_clamped = false;
    int n_pi_above_one = 0;
};

struct ReplicateRecord {
    int rep = 0;
    Eigen::Index n_c = 0;
    Eigen::Index n_r = 0;
    std::vector<MethodRecord> methods;
};

inline std::vector<MethodKind> default_methods(bool include_alp) {
    std::vector<MethodKind> m{MethodKind::CLW, MethodKind::ILR, MethodKind::PILR};
    if (include_alp) m.push_back(MethodKind::ALP);
    return m;
}

// Draws one replicate's samples and runs every requested method. The
// replicate seed depends only on (master_seed, scenario, overlap, rep_index).
inline ReplicateRecord run_replicate(const FinitePopulation& pop, const ScenarioConfig& cfg,
                                     int rep_index, const std::vector<MethodKind>& methods) {
    ReplicateRecord record;
    record.rep = rep_index;
    const std::uint64_t seed = replicate_seed(cfg.master_seed, cfg.id + "/" + cfg.overlap,
                                              static_cast<std::uint64_t>(rep_index));
    RngStream base(seed);
    RngStream rng_conv = base.substream(1);
    RngStream rng_ref = base.substream(2);

    const IndexSet s_c = poisson_sample(pop.pi_c_true, rng_conv);
    IndexSet s_r;
    if (cfg.reference_is_population) {
        s_r.resize(static_cast<std::size_t>(pop.size()));
        std::iota(s_r.begin(), s_r.end(), Eigen::Index{0});
    } else {
        s_r = pps_systematic_sample(pop.pi_r_true, rng_ref);
    }
    record.n_c = static_cast<Eigen::Index>(s_c.size());
    record.n_r = static_cast<Eigen::Index>(s_r.size());
    for (MethodKind m : methods) {
        MethodRecord mr;
        mr.method = m;
        record.methods.push_back(mr);
    }
    if (record.n_c < 2 || record.n_r < 1) return record;  // degenerate draw, recorded as missing

    const ObservedData data = ObservedData::from_population(pop, s_c, s_r);
    const double mu_true = pop.mean_y();

    for (std::size_t k = 0; k < methods.size(); ++k) {
        MethodRecord& mr = record.methods[k];
        try {
            if (methods[k] == MethodKind::ALP) {
                const PropensityFit fit_res = alp_two_step(data);
                const HajekEstimate hajek = hajek_mean(data.conv_y, fit_res.pi_c_hat_conv);
                mr.beta1 = fit_res.beta_hat[1];
                mr.mu = hajek.mu_hat;
                mr.converged = fit_res.converged;
                mr.n_pi_above_one = fit_res.n_pi_above_one;
                continue;
            }
            const PropensityFit fit_res = fit(methods[k], data);
            const InferenceResult inf = infer(methods[k], data, fit_res);
            mr.beta1 = fit_res.beta_hat[1];
            mr.mu = inf.mu_hat;
            mr.var_mu = inf.var_mu;
            mr.var_beta1 = inf.var_beta.size() > 0
                               ? inf.var_beta(1, 1)
                               : std::numeric_limits<double>::quiet_NaN();
            mr.converged = fit_res.converged;
            mr.var_inf = inf.var_inf;
            mr.var_clamped = inf.var_clamped;
            const auto ci_mu = confidence_interval(inf.mu_hat, inf.var_mu);
            const auto ci_beta = confidence_interval(mr.beta1, mr.var_beta1);
            // An infinite-variance interval covers everything.
            mr.ci_hit_mu = std::isfinite(inf.var_mu)
                               ? (ci_mu.first <= mu_true && mu_true <= ci_mu.second)
                               : true;
            mr.ci_hit_beta = std::isfinite(mr.var_beta1)
                                 ? (ci_beta.first <= cfg.beta_c1 && cfg.beta_c1 <= ci_beta.second)
                                 : true;
            if (!std::isfinite(mr.var_beta1)) mr.var_inf = true;
        } catch (const std::exception&) {
            // diverged beyond recovery: recorded as missing entries
        }
    }
    return record;
}

// Sum in a fixed pairwise order, independent of how replicates were produced.
inline double pairwise_sum(std::span<const double> values) {
    if (values.size() <= 8) {
        double total = 0.0;
        for (double v : values) total += v;
        return total;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.subspan(0, half)) + pairwise_sum(values.subspan(half));
}

struct SummaryCell {
    std::string method;
    std::string parameter;  // beta_c1 or mu
    double mean = std::numeric_limits<double>::quiet_NaN();
    double se = std::numeric_limits<double>::quiet_NaN();
    double mean_se_hat = std::numeric_limits<double>::quiet_NaN();
    double coverage = std::numeric_limits<double>::quiet_NaN();
    double rmse = std::numeric_limits<double>::quiet_NaN();
    int n_used = 0;
    int n_nonconverged = 0;
    int n_inf_variance = 0;
    int n_clamped = 0;
};

struct MCSummary {
    ScenarioConfig config;
    double mu_true = 0.0;
    double beta_true = 1.0;
    std::vector<SummaryCell> cells;
    std::vector<ReplicateRecord> replicates;

    const SummaryCell& cell(MethodKind m, const std::string& parameter) const {
        for (const auto& c : cells)
            if (c.method == method_name(m) && c.parameter == parameter) return c;
        throw std::out_of_range("MCSummary: no such cell");
    }
};

namespace detail {

inline SummaryCell summarize_cell(MethodKind method, const std::string& parameter,
                                  const std::vector<ReplicateRecord>& reps, std::size_t slot,
                                  double truth) {
    SummaryCell cell;
    cell.method = method_name(method);
    cell.parameter = parameter;
    const bool is_beta = parameter == "beta_c1";
    std::vector<double> estimates, variances, hits;
    estimates.reserve(reps.size());
    for (const auto& rec : reps) {
        const MethodRecord& mr = rec.methods[slot];
        if (!mr.converged) ++cell.n_nonconverged;
        const double est = is_beta ? mr.beta1 : mr.mu;
        if (!std::isfinite(est)) continue;
        estimates.push_back(est);
        if (method != MethodKind::ALP) {
            const double v = is_beta ? mr.var_beta1 : mr.var_mu;
            variances.push_back(v);
            if (!std::isfinite(v)) ++cell.n_inf_variance;
            if (mr.var_clamped) ++cell.n_clamped;
            hits.push_back((is_beta ? mr.ci_hit_beta : mr.ci_hit_mu) ? 1.0 : 0.0);
        }
    }
    cell.n_used = static_cast<int>(estimates.size());
    if (estimates.empty()) return cell;
    const double n_est = static_cast<double>(estimates.size());
    cell.mean = pairwise_sum(estimates) / n_est;
    std::vector<double> sq(estimates.size()), err(estimates.size());
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        sq[i] = (estimates[i] - cell.mean) * (estimates[i] - cell.mean);
        err[i] = (estimates[i] - truth) * (estimates[i] - truth);
    }
    cell.se = estimates.size() > 1 ? std::sqrt(pairwise_sum(sq) / (n_est - 1.0))
                                   : std::numeric_limits<double>::quiet_NaN();
    cell.rmse = std::sqrt(pairwise_sum(err) / n_est);
    if (!variances.empty()) {
        cell.mean_se_hat = std::sqrt(pairwise_sum(variances) / static_cast<double>(variances.size()));
        cell.coverage = pairwise_sum(hits) / static_cast<double>(hits.size());
    }
    return cell;
}

} // namespace detail

// Runs the full replicate loop and aggregates. Output is invariant to the
// thread count: replicates are seeded by index and reduced in index order.
inline MCSummary run_monte_carlo(const ScenarioConfig& cfg, int n_threads = 0,
                                 bool include_alp = false) {
    cfg.validate();
    const FinitePopulation pop = build_scenario_population(cfg);
    const std::vector<MethodKind> methods = default_methods(include_alp);

    std::vector<ReplicateRecord> records(static_cast<std::size_t>(cfg.reps));
    if (n_threads <= 0) {
        n_threads = static_cast<int>(std::thread::hardware_concurrency());
        if (n_threads < 1) n_threads = 1;
    }
    std::atomic<int> next{0};
    auto worker = [&]() {
        while (true) {
            const int rep = next.fetch_add(1);
            if (rep >= cfg.reps) break;
            records[static_cast<std::size_t>(rep)] = run_replicate(pop, cfg, rep, methods);
        }
    };
    if (n_threads == 1 || cfg.reps == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    MCSummary summary;
    summary.config = cfg;
    summary.mu_true = pop.mean_y();
    summary.beta_true = cfg.beta_c1;
    for (std::size_t k = 0; k < methods.size(); ++k) {
        summary.cells.push_back(
            detail::summarize_cell(methods[k], "beta_c1", records, k, summary.beta_true));
        summary.cells.push_back(detail::summarize_cell(methods[k], "mu", records, k, summary.mu_true));
    }
    summary.replicates = std::move(records);
    return summary;
}

struct HistogramResult {
    Vector edges;                  // bins + 1 edges over the population x range
    std::vector<long> conv_counts;
    std::vector<long> ref_counts;
};

// Per-bin counts of convenience and reference sample units over the first
// covariate.
inline HistogramResult overlap_histogram(const FinitePopulation& pop, const IndexSet& s_c,
                                         const IndexSet& s_r, int bins) {
    if (bins < 2) throw std::invalid_argument("overlap_histogram: need at least 2 bins");
    const double lo = pop.x.col(0).minCoeff();
    const double hi = pop.x.col(0).maxCoeff();
    const double width = (hi - lo) / static_cast<double>(bins);
    HistogramResult hist;
    hist.edges.resize(bins + 1);
    for (int b = 0; b <= bins; ++b) hist.edges[b] = lo + width * static_cast<double>(b);
    hist.conv_counts.assign(static_cast<std::size_t>(bins), 0);
    hist.ref_counts.assign(static_cast<std::size_t>(bins), 0);
    auto bin_of = [&](double x) {
        if (width <= 0.0) return 0;
        auto b = static_cast<int>((x - lo) / width);
        return std::clamp(b, 0, bins - 1);
    };
    for (Eigen::Index i : s_c) ++hist.conv_counts[static_cast<std::size_t>(bin_of(pop.x(i, 0)))];
    for (Eigen::Index i : s_r) ++hist.ref_counts[static_cast<std::size_t>(bin_of(pop.x(i, 0)))];
    return hist;
}

} // namespace quasirand
