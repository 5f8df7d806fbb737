#include "oracles.hpp"
#include "test_support.hpp"

#include <localdeform/errors.hpp>
#include <localdeform/regularizers.hpp>

#include <doctest.h>

#include <random>

using namespace localdeform;

namespace {

SmallVec along(double r, int d = 2)
{
    SmallVec x = SmallVec::Zero(d);
    x[0] = r * 0.6;
    x[1] = r * 0.8;
    return x;
}

ErrorCode code_of(auto&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::InvalidArgument;
}

} // namespace

TEST_CASE("scl1 value examples")
{
    CHECK(scl1_value(SmallVec::Zero(3), 1.0) == 0.0);
    CHECK(scl1_value(along(1.0), 1.0) == doctest::Approx(0.5));
    CHECK(scl1_value(along(0.5), 1.0) == doctest::Approx(0.375));
    CHECK(scl1_value(along(3.0), 1.0) == doctest::Approx(0.5));
    CHECK(code_of([] { scl1_value(along(1.0), 0.0); }) == ErrorCode::NonpositiveThreshold);
    CHECK(code_of([] { scl1_value(along(1.0), -1.0); }) == ErrorCode::NonpositiveThreshold);
}

TEST_CASE("scl1 value is monotone, bounded and C1 at the clamp")
{
    const double s = 0.7;
    double previous = -1.0;
    for (int k = 0; k <= 1000; ++k) {
        const double v = scl1_value(along(3.0 * s * k / 1000.0), s);
        CHECK(v >= previous);
        CHECK(v <= 0.5 * s + 1e-15);
        previous = v;
    }
    const double h = 1e-7;
    const double left = (scl1_value(along(s), s) - scl1_value(along(s - h), s)) / h;
    const double right = (scl1_value(along(s + h), s) - scl1_value(along(s), s)) / h;
    CHECK(std::abs(left) <= 1e-6);
    CHECK(std::abs(right) <= 1e-6);
}

TEST_CASE("scl1 prox examples")
{
    CHECK(scl1_prox(along(0.4), 1.0, 2.0, 1.0).norm() == 0.0);
    const SmallVec x = along(0.9);
    CHECK((scl1_prox(x, 1.0, 2.0, 1.0) - (0.8 / 0.9) * x).norm() <= 1e-14);
    const SmallVec y = along(1.5);
    CHECK((scl1_prox(y, 1.0, 2.0, 1.0) - y).norm() == 0.0);
    CHECK(scl1_prox(SmallVec::Zero(2), 1.0, 2.0, 1.0).norm() == 0.0);
    CHECK((scl1_prox(y, 0.0, 2.0, 1.0) - y).norm() == 0.0);
    CHECK(code_of([] { scl1_prox(along(1.0), 1.0, 1.0, 1.0); }) == ErrorCode::SafeguardViolated);
    CHECK(code_of([] { scl1_prox(along(1.0), 1.0, 0.5, 1.0); }) == ErrorCode::SafeguardViolated);
}

TEST_CASE("scl1 prox examples agree with the scan oracle")
{
    auto loss = [](double t) { return oracles::scl1_scalar(t, 1.0); };
    for (double r : {0.4, 0.9, 1.5}) {
        const SmallVec z = scl1_prox(along(r), 1.0, 2.0, 1.0);
        const double f = oracles::radial_objective(loss, z.norm(), r, 1.0, 2.0);
        CHECK(f <= oracles::scan_minimum(loss, r, 1.0, 2.0) + 1e-9);
    }
}

TEST_CASE("l21 examples")
{
    CHECK(l21_value(along(0.4)) == doctest::Approx(0.4));
    CHECK(l21_prox(along(0.4), 1.0, 2.0).norm() == 0.0);
    const SmallVec x = along(1.0);
    CHECK((l21_prox(x, 1.0, 2.0) - 0.5 * x).norm() <= 1e-15);
    CHECK(l21_prox(SmallVec::Zero(3), 1.0, 2.0).norm() == 0.0);
}

TEST_CASE("random prox suite against the 2001-point scan")
{
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const int d = 1 + trial % 3;
        const double s = 0.05 + 2.0 * u(rng);
        const double lambda = 3.0 * u(rng);
        const double rho = lambda / s * (1.0 + 1e-3 + 3.0 * u(rng)) + 1e-6;
        SmallVec x(d);
        for (int k = 0; k < d; ++k) x[k] = (u(rng) - 0.5) * 4.0 * s;
        const double r = x.norm();

        const SmallVec z = scl1_prox(x, lambda, rho, s);
        auto scl1 = [&](double t) { return oracles::scl1_scalar(t, s); };
        CHECK(oracles::radial_objective(scl1, z.norm(), r, lambda, rho) <= oracles::scan_minimum(scl1, r, lambda, rho) + 1e-9);
        if (r > 0.0) CHECK((z - z.dot(x) / (r * r) * x).norm() <= 1e-12 * r);

        const SmallVec g = l21_prox(x, lambda, rho);
        auto l1 = [](double t) { return t; };
        CHECK(oracles::radial_objective(l1, g.norm(), r, lambda, rho) <= oracles::scan_minimum(l1, r, lambda, rho) + 1e-9);
    }
}

TEST_CASE("scl1 prox is radially monotone and continuous")
{
    const double lambda = 1.0, rho = 2.5, s = 1.0;
    double previous = 0.0;
    SmallVec last = scl1_prox(along(0.0), lambda, rho, s);
    for (int k = 1; k <= 3000; ++k) {
        const SmallVec z = scl1_prox(along(3.0 * k / 3000.0), lambda, rho, s);
        CHECK(z.norm() >= previous - 1e-15);
        CHECK((z - last).norm() <= 0.01);
        previous = z.norm();
        last = z;
    }
}

TEST_CASE("scl1 prox tends to the l21 prox as s grows")
{
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
        SmallVec x(3);
        x << u(rng), u(rng), u(rng);
        CHECK((scl1_prox(x, 1.0, 2.0, 1e6) - l21_prox(x, 1.0, 2.0)).norm() <= 1e-4);
    }
}

TEST_CASE("dispatch by kind")
{
    const SmallVec x = along(0.9);
    CHECK(regularizer_value(Regularizer::none, x, 1.0) == 0.0);
    CHECK((regularizer_prox(Regularizer::none, x, 1.0, 2.0, 1.0) - x).norm() == 0.0);
    CHECK(regularizer_value(Regularizer::l21, x, 1.0) == doctest::Approx(0.9));
    CHECK(regularizer_value(Regularizer::scl1, x, 1.0) == doctest::Approx(scl1_value(x, 1.0)));
}

TEST_CASE("per-vertex lambda is w times the vertex area")
{
    const auto mesh = test_support::make_mesh(shapes::disk(1.0, 4));
    LocalityParams p;
    p.w = 3.5;
    p.s = 0.1;
    const Eigen::VectorXd lambda = p.per_vertex_lambda(*mesh);
    for (Eigen::Index i = 0; i < mesh->num_vertices(); ++i) CHECK(lambda[i] == 3.5 * mesh->vertex_areas()[i]);
}
