#include <catch2/catch_amalgamated.hpp>

#include "quasirand/rng.hpp"
#include "quasirand/simlab.hpp"
#include "quasirand/theory.hpp"

#include <cmath>

using namespace quasirand;
using Catch::Approx;

TEST_CASE("exact stacked-indicator covariance: hand-evaluated cases", "[theory]") {
    // N = 2, symmetric memberships: F = 2/3, G = 2.25, Cov = -1/12.
    CHECK(cov_Iz_exact(0.5, 0.5, 2) == Approx(-1.0 / 12.0).epsilon(1e-12));

    // Census in both samples: correlation Cov/Var = -1/(2N-1).
    for (Eigen::Index n : {2, 5, 10}) {
        const double cov = cov_Iz_exact(0.5, 0.5, n);
        const double corr = cov / 0.25;
        CHECK(corr == Approx(-1.0 / (2.0 * static_cast<double>(n) - 1.0)).epsilon(1e-12));
    }
}

TEST_CASE("exact covariance is O(1/N): bounded and converging", "[theory]") {
    for (double pi : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        for (double pj : {0.1, 0.3, 0.5, 0.7, 0.9}) {
            for (Eigen::Index n : {10, 100, 1000}) {
                const double cov = cov_Iz_exact(pi, pj, n);
                CHECK(std::abs(cov) * static_cast<double>(n) < 2.0);
                CHECK(cov <= 0.0);
            }
        }
    }
    // N * Cov settles to a limit along a doubling sequence.
    double previous = cov_Iz_exact(0.4, 0.6, 1000) * 1000.0;
    for (Eigen::Index n : {2000, 4000, 8000, 16000}) {
        const double scaled = cov_Iz_exact(0.4, 0.6, n) * static_cast<double>(n);
        CHECK(std::abs(scaled - previous) < std::abs(previous) * 0.01);
        previous = scaled;
    }
}

TEST_CASE("brute force agrees with the exact covariance", "[theory][oracle]") {
    // Symmetric N=2 configuration.
    Vector pc2 = Vector::Constant(2, 0.7);
    Vector pr2 = Vector::Constant(2, 0.7);
    const Matrix cov2 = cov_Iz_bruteforce(pc2, pr2);
    CHECK(cov2(0, 1) == Approx(cov_Iz_exact(0.5, 0.5, 2)).margin(1e-12));
    CHECK(cov2(1, 0) == Approx(cov2(0, 1)).margin(1e-14));

    // Heterogeneous configurations up to N = 4, every pair.
    RngStream rng(61);
    for (Eigen::Index n : {2, 3, 4}) {
        for (int trial = 0; trial < 6; ++trial) {
            Vector pc(n), pr(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                pc[i] = 0.1 + 0.8 * rng.uniform();
                pr[i] = 0.1 + 0.8 * rng.uniform();
            }
            const Matrix cov = cov_Iz_bruteforce(pc, pr);
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index j = 0; j < n; ++j) {
                    if (i == j) continue;
                    const double pz_i = pc[i] / (pc[i] + pr[i]);
                    const double pz_j = pc[j] / (pc[j] + pr[j]);
                    CHECK(cov(i, j) == Approx(cov_Iz_exact(pz_i, pz_j, n)).margin(1e-12));
                    CHECK(cov(i, j) <= 1e-15);
                }
            }
        }
    }
}

TEST_CASE("brute force guards its domain", "[theory]") {
    Vector pc = Vector::Constant(7, 0.5);
    CHECK_THROWS_AS(cov_Iz_bruteforce(pc, pc), std::invalid_argument);
    Vector small_pc = Vector::Constant(3, 0.5);
    Vector zero_pr = Vector::Zero(3);
    CHECK_THROWS_AS(cov_Iz_bruteforce(small_pc, zero_pr), std::invalid_argument);
}

namespace {

FinitePopulation theory_population(Eigen::Index n, OverlapKind overlap, std::uint64_t seed) {
    RngStream rng(seed);
    FinitePopulation pop =
        generate_population(n, -1.0, 1.0, overlap == OverlapKind::high ? 1.0 : -1.0, rng);
    return pop;
}

} // namespace

TEST_CASE("theoretical variances: census reference degeneracies", "[theory]") {
    FinitePopulation pop = theory_population(3000, OverlapKind::high, 404);
    pop.pi_r_true = Vector::Ones(pop.size());

    // CLW with the census reference reproduces the population MLE variance
    // H_CLW^{-1} exactly.
    Matrix h_clw = Matrix::Zero(2, 2);
    Vector xt(2);
    for (Eigen::Index i = 0; i < pop.size(); ++i) {
        xt << 1.0, pop.x(i, 0);
        h_clw.noalias() +=
            pop.pi_c_true[i] * (1.0 - pop.pi_c_true[i]) * (xt * xt.transpose());
    }
    const TheoreticalVariances clw = theoretical_variances(pop, MethodKind::CLW);
    CHECK(clw.var_beta.isApprox(h_clw.inverse(), 1e-9));

    // ILR and PILR coincide when pi_r is identically 1.
    const TheoreticalVariances ilr = theoretical_variances(pop, MethodKind::ILR);
    const TheoreticalVariances pilr = theoretical_variances(pop, MethodKind::PILR);
    CHECK(ilr.var_mu == Approx(pilr.var_mu).epsilon(1e-10));
    CHECK(ilr.var_beta.isApprox(pilr.var_beta, 1e-10));

    // CLW is the efficient method for the slope at a census reference.
    CHECK(std::sqrt(ilr.var_beta(1, 1)) >= std::sqrt(clw.var_beta(1, 1)));
}

TEST_CASE("intercept bisection hits the target fraction", "[theory]") {
    FinitePopulation pop = theory_population(20000, OverlapKind::high, 17);
    Vector slope = Vector::Ones(1);
    for (double f_c : {0.05, 0.19, 0.51, 0.85}) {
        const double b0 = calibrate_intercept_to_fraction(pop.x, slope, f_c);
        double mean = 0.0;
        for (Eigen::Index i = 0; i < pop.size(); ++i) mean += expit(b0 + pop.x(i, 0));
        mean /= static_cast<double>(pop.size());
        CHECK(mean == Approx(f_c).margin(1e-6));
    }
}

TEST_CASE("grid: low-overlap small-f_r corner favors ILR over CLW", "[theory][slow]") {
    FinitePopulation pop = theory_population(20000, OverlapKind::low, 99);
    const auto grid = se_ratio_grid(pop, {0.51}, {0.02, 1.0}, "low");
    REQUIRE(grid.size() == 2);
    const GridPoint& corner = grid[0];
    CHECK(corner.f_r == Approx(0.02));
    CHECK(corner.beta_se(MethodKind::CLW) / corner.beta_se(MethodKind::ILR) > 1.0);

    const GridPoint& census = grid[1];
    CHECK(census.beta_se(MethodKind::ILR) / census.beta_se(MethodKind::CLW) >= 1.0);
    CHECK(census.beta_se(MethodKind::ILR) ==
          Approx(census.beta_se(MethodKind::PILR)).epsilon(1e-10));
    for (const auto& point : grid) {
        for (MethodKind m : GridPoint::kMethods) {
            CHECK(point.beta_se(m) > 0.0);
            CHECK(std::isfinite(point.beta_se(m)));
            CHECK(point.mu_se(m) > 0.0);
        }
    }
}

TEST_CASE("grid is deterministic given the population", "[theory]") {
    FinitePopulation pop = theory_population(5000, OverlapKind::high, 7);
    const auto a = se_ratio_grid(pop, {0.19}, {0.1, 0.5}, "high");
    const auto b = se_ratio_grid(pop, {0.19}, {0.1, 0.5}, "high");
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].se_beta == b[i].se_beta);
        CHECK(a[i].se_mu == b[i].se_mu);
    }
    CHECK_THROWS_AS(se_ratio_grid(pop, {}, {0.1}, "high"), std::invalid_argument);
}
