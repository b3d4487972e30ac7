#pragma once

// Population-level (oracle) evaluation of the asymptotic variances for the
// numerical study, and the exact covariance of stacked-sample membership
// indicators together with its exhaustive brute-force verification.

#include "quasirand/designs.hpp"
#include "quasirand/links.hpp"
#include "quasirand/model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace quasirand {

struct TheoreticalVariances {
    double var_mu = 0.0;
    Matrix var_beta;
    bool singular = false;
};

// Exact population sums of the variance formulas at the true probabilities.
// The reference-design contribution uses the Poisson-design formula, which
// matches the independence structure of the asymptotic theory.
inline TheoreticalVariances theoretical_variances(const FinitePopulation& pop, MethodKind method) {
    if (method == MethodKind::ALP)
        throw std::invalid_argument("theoretical_variances: no variance theory for ALP");
    const Eigen::Index N = pop.size();
    const Eigen::Index p1 = pop.x.cols() + 1;
    const double mu = pop.mean_y();

    Matrix H = Matrix::Zero(p1, p1);
    Matrix a_correction = Matrix::Zero(p1, p1);
    Vector C = Vector::Zero(p1);
    Vector c_b = Vector::Zero(p1);
    double var_U = 0.0;
    Matrix d_summands(N, p1);

    Vector xt(p1);
    for (Eigen::Index i = 0; i < N; ++i) {
        xt[0] = 1.0;
        xt.tail(p1 - 1) = pop.x.row(i);
        const double pc = pop.pi_c_true[i];
        const double pr = pop.pi_r_true[i];
        const double resid = pop.y[i] - mu;
        var_U += (1.0 - pc) / pc * resid * resid;
        c_b.noalias() += (1.0 - pc) * resid * xt;
        switch (method) {
            case MethodKind::CLW:
                H.noalias() += pc * (1.0 - pc) * (xt * xt.transpose());
                C.noalias() += (1.0 - pc) * resid * xt;
                d_summands.row(i) = pc * xt.transpose();
                break;
            case MethodKind::ILR: {
                const double pz = pc / (pc + pr);
                const double core = pz * (1.0 - pz) * (1.0 - pc) * (1.0 - pc);
                H.noalias() += (pc + pr) * core * (xt * xt.transpose());
                a_correction.noalias() += (pr + 1.0) * pc * core * (xt * xt.transpose());
                C.noalias() += resid * (1.0 - pz) * (1.0 - pc) * (1.0 - pc) * xt;
                d_summands.row(i) = pr * pz * (1.0 - pc) * xt.transpose();
                break;
            }
            case MethodKind::PILR: {
                const double pd = pc / (pc + 1.0);
                const double core = pd * (1.0 - pd) * (1.0 - pc) * (1.0 - pc);
                H.noalias() += (pc + 1.0) * core * (xt * xt.transpose());
                a_correction.noalias() += 2.0 * pc * core * (xt * xt.transpose());
                C.noalias() += resid * (1.0 - pd) * (1.0 - pc) * (1.0 - pc) * xt;
                d_summands.row(i) = pd * (1.0 - pc) * xt.transpose();
                break;
            }
            case MethodKind::ALP:
                break;
        }
    }
    const Matrix A = H - a_correction;
    const Matrix D = design_variance_poisson_theoretical(d_summands, pop.pi_r_true).matrix;

    TheoreticalVariances out;
    Eigen::JacobiSVD<Matrix> svd(H);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (!(smin > 0.0) || smax / smin > 1e12) {
        out.singular = true;
        out.var_mu = std::numeric_limits<double>::infinity();
        out.var_beta = Matrix::Constant(p1, p1, std::numeric_limits<double>::quiet_NaN());
        return out;
    }
    const Vector b = H.ldlt().solve(c_b);
    const double n_real = static_cast<double>(N);
    out.var_mu = (var_U - 2.0 * b.dot(C) + b.dot((A + D) * b)) / (n_real * n_real);
    const Matrix h_inv_ad = H.ldlt().solve(A + D);
    out.var_beta = H.ldlt().solve(h_inv_ad.transpose()).transpose();
    out.var_beta = 0.5 * (out.var_beta + out.var_beta.transpose()).eval();
    return out;
}

// Finds the intercept making the population mean of expit(b0 + slope.x) equal
// to the target fraction, by bisection over [-20, 20] to 1e-6 on the mean.
inline double calibrate_intercept_to_fraction(const Matrix& x, const Vector& slope,
                                              double target_fraction) {
    if (!(target_fraction > 0.0 && target_fraction < 1.0))
        throw std::invalid_argument("calibrate_intercept_to_fraction: fraction outside (0,1)");
    Vector eta0 = x * slope;
    auto mean_pi = [&](double b0) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < eta0.size(); ++i) total += expit(b0 + eta0[i]);
        return total / static_cast<double>(eta0.size());
    };
    double lo = -20.0, hi = 20.0;
    double f_lo = mean_pi(lo), f_hi = mean_pi(hi);
    if (f_lo > target_fraction || f_hi < target_fraction)
        throw std::runtime_error("intercept bisection failed: target " +
                                 std::to_string(target_fraction) + " outside bracket [" +
                                 std::to_string(f_lo) + ", " + std::to_string(f_hi) + "]");
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double f_mid = mean_pi(mid);
        if (std::abs(f_mid - target_fraction) <= 1e-6) return mid;
        if (f_mid < target_fraction)
            lo = mid;
        else
            hi = mid;
    }
    throw std::runtime_error("intercept bisection failed to reach tolerance in bracket [" +
                             std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

// One point of the sampling-fraction grid; SEs indexed by method.
struct GridPoint {
    double f_c = 0.0;
    double f_r = 0.0;
    std::string overlap;
    std::array<double, 3> se_beta{};  // CLW, ILR, PILR
    std::array<double, 3> se_mu{};

    static constexpr std::array<MethodKind, 3> kMethods{MethodKind::CLW, MethodKind::ILR,
                                                        MethodKind::PILR};
    double beta_se(MethodKind m) const { return se_beta[index(m)]; }
    double mu_se(MethodKind m) const { return se_mu[index(m)]; }
    static std::size_t index(MethodKind m) {
        switch (m) {
            case MethodKind::CLW: return 0;
            case MethodKind::ILR: return 1;
            case MethodKind::PILR: return 2;
            default: throw std::invalid_argument("GridPoint: no ALP column");
        }
    }
};

// Evaluates the theoretical SEs of the slope and of the mean on the grid of
// sampling fractions. The population's intercept is recalibrated per f_c and
// the reference inclusion probabilities per f_r; x, y and the size measures
// stay fixed.
inline std::vector<GridPoint> se_ratio_grid(const FinitePopulation& base,
                                            const std::vector<double>& f_c_list,
                                            const std::vector<double>& f_r_list,
                                            const std::string& overlap_label) {
    if (f_c_list.empty() || f_r_list.empty())
        throw std::invalid_argument("se_ratio_grid: empty fraction list");
    const Eigen::Index N = base.size();
    Vector slope = Vector::Ones(base.x.cols());
    std::vector<GridPoint> grid;
    grid.reserve(f_c_list.size() * f_r_list.size());
    for (const double f_c : f_c_list) {
        FinitePopulation pop = base;
        const double b0 = calibrate_intercept_to_fraction(base.x, slope, f_c);
        Vector eta = base.x * slope;
        for (Eigen::Index i = 0; i < N; ++i) pop.pi_c_true[i] = clamp_prob(expit(b0 + eta[i]));
        for (const double f_r : f_r_list) {
            if (!(f_r > 0.0 && f_r <= 1.0))
                throw std::invalid_argument("se_ratio_grid: f_r outside (0,1]");
            const auto n_r = static_cast<Eigen::Index>(std::lround(f_r * static_cast<double>(N)));
            if (n_r < 1) throw std::invalid_argument("se_ratio_grid: f_r too small for N");
            pop.pi_r_true = n_r == N ? Vector::Ones(N).eval()
                                     : calibrate_inclusion_probs(base.size_r, n_r);
            GridPoint point;
            point.f_c = f_c;
            point.f_r = f_r;
            point.overlap = overlap_label;
            for (MethodKind m : GridPoint::kMethods) {
                const TheoreticalVariances tv = theoretical_variances(pop, m);
                point.se_beta[GridPoint::index(m)] = std::sqrt(tv.var_beta(1, 1));
                point.se_mu[GridPoint::index(m)] = std::sqrt(tv.var_mu);
            }
            grid.push_back(std::move(point));
        }
    }
    return grid;
}

// Exact covariance of the stacked-sample membership indicators of two units,
// as a function of their membership probabilities and the population size:
//   Cov = pi_zi pi_zj F (1 - F G).
inline double cov_Iz_exact(double pi_zi, double pi_zj, Eigen::Index population_size) {
    if (!(pi_zi > 0.0 && pi_zi < 1.0 && pi_zj > 0.0 && pi_zj < 1.0))
        throw std::invalid_argument("cov_Iz_exact: probabilities outside (0,1)");
    if (population_size < 2) throw std::invalid_argument("cov_Iz_exact: need N >= 2");
    const double nm1 = static_cast<double>(population_size - 1);
    const double f = 1.0 / (1.0 + ((1.0 - pi_zi) * pi_zj + pi_zi * (1.0 - pi_zj)) / nm1);
    const double g = (1.0 + (1.0 - pi_zj) / nm1) * (1.0 + (1.0 - pi_zi) / nm1);
    return pi_zi * pi_zj * f * (1.0 - f * g);
}

// Exhaustive oracle for cov_Iz_exact. Enumerates every joint Poisson outcome
// of the 2N inclusion indicators over the doubled population, weights the
// four slot-pattern assignments of an observed pair by the stacked-population
// combinatorics, conditions on both units being in the pooled sample, and
// sums. Refused above N = 6.
inline Matrix cov_Iz_bruteforce(const Vector& pi_c, const Vector& pi_r) {
    const Eigen::Index N = pi_c.size();
    if (N < 2 || pi_r.size() != N) throw std::invalid_argument("cov_Iz_bruteforce: need N >= 2");
    if (N > 6) throw std::invalid_argument("cov_Iz_bruteforce: refused for N > 6");
    for (Eigen::Index i = 0; i < N; ++i) {
        if (!(pi_c[i] > 0.0 && pi_c[i] <= 1.0) || !(pi_r[i] > 0.0 && pi_r[i] <= 1.0))
            throw std::invalid_argument("cov_Iz_bruteforce: probabilities must lie in (0,1]");
    }

    // Joint selection probabilities of every ordered slot pair, summed over
    // all 2^(2N) outcomes. Slot s < N is the convenience copy of unit s, slot
    // s >= N the reference copy of unit s - N.
    const Eigen::Index n_slots = 2 * N;
    auto slot_prob = [&](Eigen::Index slot) {
        return slot < N ? pi_c[slot] : pi_r[slot - N];
    };
    Matrix joint = Matrix::Zero(n_slots, n_slots);
    const std::uint64_t n_outcomes = std::uint64_t{1} << n_slots;
    for (std::uint64_t outcome = 0; outcome < n_outcomes; ++outcome) {
        double prob = 1.0;
        for (Eigen::Index s = 0; s < n_slots; ++s) {
            const bool in = (outcome >> s) & 1ULL;
            prob *= in ? slot_prob(s) : 1.0 - slot_prob(s);
        }
        if (prob == 0.0) continue;
        for (Eigen::Index s1 = 0; s1 < n_slots; ++s1) {
            if (!((outcome >> s1) & 1ULL)) continue;
            for (Eigen::Index s2 = 0; s2 < n_slots; ++s2)
                if ((outcome >> s2) & 1ULL) joint(s1, s2) += prob;
        }
    }

    // Pattern weights from drawing an ordered pair of distinct slots
    // uniformly out of the doubled population: same-part pairs carry
    // (N-1)/(2(2N-1)), cross-part pairs N/(2(2N-1)).
    const double w_same = static_cast<double>(N - 1) / (2.0 * static_cast<double>(2 * N - 1));
    const double w_cross = static_cast<double>(N) / (2.0 * static_cast<double>(2 * N - 1));

    Matrix cov(N, N);
    for (Eigen::Index i = 0; i < N; ++i) {
        const double pz_i = pi_c[i] / (pi_c[i] + pi_r[i]);
        cov(i, i) = pz_i * (1.0 - pz_i);
        for (Eigen::Index j = 0; j < N; ++j) {
            if (i == j) continue;
            const double p_cc = w_same * joint(i, j);
            const double p_cr = w_cross * joint(i, N + j);
            const double p_rc = w_cross * joint(N + i, j);
            const double p_rr = w_same * joint(N + i, N + j);
            const double p_in_s = p_cc + p_cr + p_rc + p_rr;
            if (!(p_in_s > 0.0))
                throw std::runtime_error("cov_Iz_bruteforce: conditioning event has probability 0");
            const double e_both = p_cc / p_in_s;
            const double e_i = (p_cc + p_cr) / p_in_s;
            const double e_j = (p_cc + p_rc) / p_in_s;
            cov(i, j) = e_both - e_i * e_j;
        }
    }
    return cov;
}

} // namespace quasirand
