#include <catch2/catch_amalgamated.hpp>

#include "quasirand/model.hpp"
#include "quasirand/rng.hpp"
#include "quasirand/simlab.hpp"

using namespace quasirand;

TEST_CASE("design_row prepends the intercept", "[model]") {
    CHECK(design_row(Vector{}).isApprox(Vector::Ones(1)));

    Vector one(1);
    one << 2.0;
    Vector expected1(2);
    expected1 << 1.0, 2.0;
    CHECK(design_row(one) == expected1);

    Vector two(2);
    two << -1.5, 3.0;
    Vector expected2(3);
    expected2 << 1.0, -1.5, 3.0;
    CHECK(design_row(two) == expected2);

    Vector bad(1);
    bad << std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(design_row(bad), std::invalid_argument);
}

TEST_CASE("ObservedData round-trips population values exactly", "[model]") {
    RngStream rng(11);
    FinitePopulation pop = generate_population(200, -1.0, 1.0, 1.0, rng);
    pop.pi_r_true = calibrate_inclusion_probs(pop.size_r, 60);
    pop.validate();

    const IndexSet s_c{3, 17, 42, 199};
    const IndexSet s_r{0, 5, 42};
    const ObservedData data = ObservedData::from_population(pop, s_c, s_r);
    data.validate();

    REQUIRE(data.n_conv() == 4);
    REQUIRE(data.n_ref() == 3);
    for (std::size_t k = 0; k < s_c.size(); ++k) {
        CHECK(data.conv_x(static_cast<Eigen::Index>(k), 0) == pop.x(s_c[k], 0));
        CHECK(data.conv_y[static_cast<Eigen::Index>(k)] == pop.y[s_c[k]]);
        CHECK((*data.conv_pi_r)[static_cast<Eigen::Index>(k)] == pop.pi_r_true[s_c[k]]);
    }
    for (std::size_t k = 0; k < s_r.size(); ++k) {
        CHECK(data.ref_x(static_cast<Eigen::Index>(k), 0) == pop.x(s_r[k], 0));
        CHECK(data.ref_pi_r[static_cast<Eigen::Index>(k)] == pop.pi_r_true[s_r[k]]);
        CHECK(data.ref_w[static_cast<Eigen::Index>(k)] == 1.0 / pop.pi_r_true[s_r[k]]);
    }
}

TEST_CASE("ObservedData validation rejects malformed input", "[model]") {
    ObservedData data;
    data.conv_x = Matrix::Zero(2, 1);
    data.conv_y = Vector::Zero(2);
    data.ref_x = Matrix::Zero(2, 1);
    data.ref_pi_r = Vector::Constant(2, 0.5);
    data.ref_w = Vector::Constant(2, 2.0);
    CHECK_NOTHROW(data.validate());

    ObservedData bad = data;
    bad.ref_pi_r[0] = 1.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = data;
    bad.ref_w[0] = 0.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = data;
    bad.conv_pi_r = Vector::Constant(2, 0.0);
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = data;
    bad.ref_x = Matrix::Zero(0, 1);
    bad.ref_pi_r = Vector{};
    bad.ref_w = Vector{};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("method names round-trip", "[model]") {
    for (MethodKind m : {MethodKind::CLW, MethodKind::ILR, MethodKind::PILR, MethodKind::ALP})
        CHECK(parse_method(method_name(m)) == m);
    CHECK_THROWS_AS(parse_method("XYZ"), std::invalid_argument);
}
