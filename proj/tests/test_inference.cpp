#include <catch2/catch_amalgamated.hpp>

#include "quasirand/inference.hpp"
#include "quasirand/rng.hpp"
#include "quasirand/simlab.hpp"

#include <cmath>

using namespace quasirand;
using Catch::Approx;

namespace {

ObservedData scenario_draw(const FinitePopulation& pop, const ScenarioConfig& cfg, int rep) {
    const auto seed = replicate_seed(cfg.master_seed, cfg.id + "/" + cfg.overlap,
                                     static_cast<std::uint64_t>(rep));
    RngStream base(seed);
    RngStream rng_c = base.substream(1);
    RngStream rng_r = base.substream(2);
    const IndexSet s_c = poisson_sample(pop.pi_c_true, rng_c);
    const IndexSet s_r = pps_systematic_sample(pop.pi_r_true, rng_r);
    return ObservedData::from_population(pop, s_c, s_r);
}

} // namespace

TEST_CASE("hajek mean formula cases", "[inference]") {
    Vector y(3);
    y << 2.0, 4.0, 9.0;
    const auto equal = hajek_mean(y, Vector::Constant(3, 0.3));
    CHECK(equal.mu_hat == Approx(5.0).epsilon(1e-12));
    CHECK(equal.n_hat == Approx(10.0).epsilon(1e-12));

    Vector pis(3);
    pis << 0.2, 0.5, 0.9;
    const auto constant = hajek_mean(Vector::Constant(3, 3.5), pis);
    CHECK(constant.mu_hat == Approx(3.5).epsilon(1e-12));

    Vector y2(2), pi2(2);
    y2 << 1.0, 3.0;
    pi2 << 0.5, 0.25;
    CHECK(hajek_mean(y2, pi2).mu_hat == Approx(14.0 / 6.0).epsilon(1e-12));

    CHECK_THROWS_AS(hajek_mean(Vector{}, Vector{}), std::invalid_argument);
    Vector bad(1);
    bad << 0.0;
    CHECK_THROWS_AS(hajek_mean(Vector::Ones(1), bad), std::invalid_argument);
}

TEST_CASE("hajek mean is scale-invariant in the weights and solves the estimating equation",
          "[inference]") {
    RngStream rng(14);
    const int n = 50;
    Vector y(n), pi(n);
    for (int i = 0; i < n; ++i) {
        y[i] = rng.normal();
        pi[i] = 0.05 + 0.9 * rng.uniform();
    }
    const auto base = hajek_mean(y, pi);
    const auto scaled = hajek_mean(y, (2.5 * pi).eval());
    CHECK(base.mu_hat == Approx(scaled.mu_hat).epsilon(1e-12));

    double residual = 0.0, scale = 0.0;
    for (int i = 0; i < n; ++i) {
        residual += (y[i] - base.mu_hat) / pi[i];
        scale += std::abs(y[i]) / pi[i];
    }
    CHECK(std::abs(residual) / scale <= 1e-9);
}

TEST_CASE("confidence interval matches the normal quantile", "[inference]") {
    const auto degenerate = confidence_interval(2.0, 0.0);
    CHECK(degenerate.first == Approx(2.0));
    CHECK(degenerate.second == Approx(2.0));

    const auto ci = confidence_interval(1.0, 0.01);
    CHECK(ci.first == Approx(0.804).margin(5e-4));
    CHECK(ci.second == Approx(1.196).margin(5e-4));

    CHECK(normal_quantile(0.975) == Approx(1.959964).margin(1e-5));
    const auto undefined = confidence_interval(1.0, std::numeric_limits<double>::infinity());
    CHECK(std::isnan(undefined.first));
}

TEST_CASE("variance components: census reference gives a zero D matrix", "[inference]") {
    RngStream rng(23);
    ScenarioConfig cfg = scenario_config("S7", OverlapKind::high, 1, 5);
    cfg.N = 400;
    FinitePopulation pop = build_scenario_population(cfg);
    IndexSet s_r(static_cast<std::size_t>(pop.size()));
    std::iota(s_r.begin(), s_r.end(), Eigen::Index{0});
    RngStream draw(77);
    const IndexSet s_c = poisson_sample(pop.pi_c_true, draw);
    const ObservedData data = ObservedData::from_population(pop, s_c, s_r);

    const PropensityFit f = fit(MethodKind::ILR, data);
    REQUIRE(f.converged);
    const auto hajek = hajek_mean(data.conv_y, f.pi_c_hat_conv);
    const auto comp = variance_components(MethodKind::ILR, data, f, hajek.mu_hat);
    CHECK(comp.D.cwiseAbs().maxCoeff() == Approx(0.0).margin(1e-14));
}

TEST_CASE("variance components: centered outcome zeroes C and Var[U(mu)]", "[inference]") {
    RngStream rng(29);
    ObservedData data;
    const int n_c = 20, n_r = 15;
    data.conv_x.resize(n_c, 1);
    data.conv_y = Vector::Constant(n_c, 4.2);
    Vector cpr(n_c);
    for (int i = 0; i < n_c; ++i) {
        data.conv_x(i, 0) = rng.normal();
        cpr[i] = 0.3 + 0.5 * rng.uniform();
    }
    data.conv_pi_r = cpr;
    data.ref_x.resize(n_r, 1);
    data.ref_pi_r.resize(n_r);
    data.ref_w.resize(n_r);
    for (int i = 0; i < n_r; ++i) {
        data.ref_x(i, 0) = rng.normal();
        data.ref_pi_r[i] = 0.3 + 0.5 * rng.uniform();
        data.ref_w[i] = 1.0 / data.ref_pi_r[i];
    }
    const PropensityFit f = fit(MethodKind::ILR, data);
    // y is constant, so mu_hat equals it and every residual vanishes.
    const auto hajek = hajek_mean(data.conv_y, f.pi_c_hat_conv);
    CHECK(hajek.mu_hat == Approx(4.2).epsilon(1e-12));
    const auto comp = variance_components(MethodKind::ILR, data, f, hajek.mu_hat);
    CHECK(comp.C_vec.cwiseAbs().maxCoeff() == Approx(0.0).margin(1e-10));
    CHECK(comp.var_U_mu == Approx(0.0).margin(1e-10));
    bool clamped = false;
    const double vm = var_mu(comp, &clamped);
    CHECK(vm >= 0.0);
}

TEST_CASE("var_mu and var_beta closed-form degenerate cases", "[inference]") {
    VarianceComponents comp;
    comp.H = Matrix::Identity(2, 2) * 4.0;
    comp.A = comp.H;
    comp.D = Matrix::Zero(2, 2);
    comp.C_vec = Vector::Zero(2);
    comp.b = Vector::Zero(2);
    comp.var_U_mu = 3.0;
    comp.n_hat = 10.0;
    comp.h_condition = 1.0;

    // C = 0, b = 0: var_mu = Var[U(mu)]/N_hat^2.
    CHECK(var_mu(comp) == Approx(0.03).epsilon(1e-12));
    // A = H, D = 0: var_beta = H^{-1}.
    CHECK(var_beta(comp).isApprox(Matrix::Identity(2, 2) * 0.25, 1e-12));

    comp.h_singular = true;
    CHECK(std::isinf(var_mu(comp)));
    CHECK(std::isnan(var_beta(comp)(0, 0)));
}

TEST_CASE("negative plug-in variance is clamped with a flag", "[inference]") {
    VarianceComponents comp;
    comp.H = Matrix::Identity(1, 1);
    comp.A = Matrix::Identity(1, 1) * 1e-6;
    comp.D = Matrix::Zero(1, 1);
    comp.C_vec = Vector::Constant(1, 5.0);
    comp.b = Vector::Constant(1, 1.0);
    comp.var_U_mu = 1.0;
    comp.n_hat = 4.0;
    bool clamped = false;
    CHECK(var_mu(comp, &clamped) == 0.0);
    CHECK(clamped);
}

TEST_CASE("var_beta is symmetric PSD and grows with D in the PSD order", "[inference]") {
    RngStream rng(31);
    ScenarioConfig cfg = scenario_config("S4", OverlapKind::high, 1, 17);
    const FinitePopulation pop = build_scenario_population(cfg);
    int checked = 0;
    for (int rep = 0; rep < 120 && checked < 100; ++rep) {
        const ObservedData data = scenario_draw(pop, cfg, rep);
        const PropensityFit f = fit(MethodKind::ILR, data);
        if (!f.converged) continue;
        const auto hajek = hajek_mean(data.conv_y, f.pi_c_hat_conv);
        auto comp = variance_components(MethodKind::ILR, data, f, hajek.mu_hat);
        if (comp.h_singular) continue;
        const Matrix vb = var_beta(comp);
        CHECK(vb.isApprox(vb.transpose(), 1e-10));
        Eigen::SelfAdjointEigenSolver<Matrix> eigen(vb);
        CHECK(eigen.eigenvalues().minCoeff() > -1e-10 * vb.trace());

        VarianceComponents no_d = comp;
        no_d.D = Matrix::Zero(comp.D.rows(), comp.D.cols());
        const Matrix shrink = vb - var_beta(no_d);
        Eigen::SelfAdjointEigenSolver<Matrix> eigen2(shrink);
        CHECK(eigen2.eigenvalues().minCoeff() > -1e-8 * vb.trace());
        ++checked;
    }
    CHECK(checked >= 100);
}

TEST_CASE("population H_ILR and its plug-in agree on average", "[inference][slow]") {
    // N = 2000 population with known truths; the 1/pi_c-weighted plug-in of
    // H_ILR at the fitted coefficients tracks the population sum within 5%
    // Frobenius on average over replicates.
    ScenarioConfig cfg;
    cfg.id = "plugin";
    cfg.N = 2000;
    cfg.beta_c0 = -1.2;
    cfg.beta_c1 = 1.0;
    cfg.beta_r = 1.0;
    cfg.overlap = "high";
    cfg.f_r_target = 0.3;
    cfg.reps = 500;
    cfg.master_seed = 4242;
    const FinitePopulation pop = build_scenario_population(cfg);

    Matrix h_pop = Matrix::Zero(2, 2);
    Vector xt(2);
    for (Eigen::Index i = 0; i < pop.size(); ++i) {
        xt << 1.0, pop.x(i, 0);
        const double pc = pop.pi_c_true[i];
        const double pr = pop.pi_r_true[i];
        const double pz = pc / (pc + pr);
        h_pop.noalias() +=
            (pc + pr) * pz * (1.0 - pz) * (1.0 - pc) * (1.0 - pc) * (xt * xt.transpose());
    }

    Matrix h_mean = Matrix::Zero(2, 2);
    int used = 0;
    for (int rep = 0; rep < cfg.reps; ++rep) {
        const ObservedData data = scenario_draw(pop, cfg, rep);
        const PropensityFit f = fit(MethodKind::ILR, data);
        if (!f.converged) continue;
        const auto hajek = hajek_mean(data.conv_y, f.pi_c_hat_conv);
        h_mean += variance_components(MethodKind::ILR, data, f, hajek.mu_hat).H;
        ++used;
    }
    REQUIRE(used > 450);
    h_mean /= static_cast<double>(used);
    CHECK((h_mean - h_pop).norm() / h_pop.norm() < 0.05);
}

TEST_CASE("inference rejects ALP", "[inference]") {
    RngStream rng(3);
    ScenarioConfig cfg = scenario_config("S4", OverlapKind::high, 1, 3);
    const FinitePopulation pop = build_scenario_population(cfg);
    const ObservedData data = scenario_draw(pop, cfg, 0);
    const PropensityFit f = alp_two_step(data);
    CHECK_THROWS_AS(variance_components(MethodKind::ALP, data, f, 1.0), std::invalid_argument);
}
