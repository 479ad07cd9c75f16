#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Cholesky>

#include "core/models.hpp"
#include "support.hpp"

using namespace xdhom;
using xdhom::testing::error_kind;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

/// Uniform points of the open simplex {u_i > 0, u1 + u2 < 1}.
std::vector<Vector> uniform_simplex(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> e(1.0);
  std::vector<Vector> out;
  while (out.size() < count) {
    const double a = e(rng), b = e(rng), c = e(rng);
    out.push_back(vec({a / (a + b + c), b / (a + b + c)}));
  }
  return out;
}

}  // namespace

TEST_CASE("biofilm entropy matrix at (1/4,1/4)") {
  const auto m = biofilm_model(1, 1);
  Matrix expected(2, 2);
  expected << 4, 0, 0, 4;
  CHECK(max_abs(m.entropy_matrix(vec({0.25, 0.25})) - expected) < 1e-14);
}

TEST_CASE("biofilm entropy matrix is diag(D/u) at random states") {
  const auto m = biofilm_model(2.0, 0.7);
  for (const auto& u : uniform_simplex(100, 3)) {
    const Matrix M = m.entropy_matrix(u);
    const double scale = std::max(2.0 / u[0], 0.7 / u[1]);
    CHECK(std::abs(M(0, 0) - 2.0 / u[0]) <= 1e-12 * scale);
    CHECK(std::abs(M(1, 1) - 0.7 / u[1]) <= 1e-12 * scale);
    CHECK(std::abs(M(0, 1)) <= 1e-12 * scale);
    CHECK(std::abs(M(1, 0)) <= 1e-12 * scale);
  }
}

TEST_CASE("tumor entropy matrix at (1/2,1/4)") {
  const auto m = tumor_model(1, 1);
  Matrix expected(2, 2);
  expected << 2, 0, 0.25, 3;
  CHECK(max_abs(m.entropy_matrix(vec({0.5, 0.25})) - expected) < 1e-14);
}

TEST_CASE("tumor entropy matrix formula at general parameters") {
  const double beta = 2.0, theta = 1.5;
  const auto m = tumor_model(beta, theta);
  for (const auto& u : uniform_simplex(20, 5)) {
    Matrix expected(2, 2);
    expected << 2, 0, beta * theta * u[1], 2 * beta * (1 + theta * u[0]);
    CHECK(max_abs(m.entropy_matrix(u) - expected) < 1e-10 * (1 + 1 / (1 - u.sum())));
  }
}

TEST_CASE("ion transport diffusion matrix") {
  const auto m = ion_transport_model({1, 1});
  Matrix expected(2, 2);
  expected << 2.0 / 3, 1.0 / 3, 1.0 / 3, 2.0 / 3;
  CHECK(max_abs(m.A(vec({1.0 / 3, 1.0 / 3})) - expected) < 1e-15);
  CHECK(m.kind == ModelKind::NonlocalDegenerate);
}

TEST_CASE("ion transport diffusion matrix with distinct D") {
  const auto m = ion_transport_model({1.0, 2.0, 3.0});
  const Vector u = vec({0.1, 0.2, 0.3});
  const double solvent = 0.4;
  const Matrix A = m.A(u);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(A(i, j) == doctest::Approx(m.D[i] * ((i == j ? solvent : 0) + u[i])));
}

TEST_CASE("tumor admissibility") {
  CHECK(error_kind([] { tumor_model(1, 4); }) == ErrorKind::Parameter);
  CHECK(error_kind([] { tumor_model(1, 5); }) == ErrorKind::Parameter);
  CHECK_FALSE(error_kind([] { tumor_model(1, 3.99); }).has_value());
  CHECK(error_kind([] { biofilm_model(0, 1); }) == ErrorKind::Parameter);
  CHECK(error_kind([] { ion_transport_model({1, -1}); }) == ErrorKind::Parameter);
}

TEST_CASE("builtin model dispatch") {
  CHECK(builtin_model("biofilm", {{"D1", 1}, {"D2", 2}}).n == 2);
  CHECK(builtin_model("ion_transport", {{"D", {1, 2, 3}}}).n == 3);
  CHECK(builtin_model("scalar", {{"a0", 1}, {"a1", 1}}).n == 1);
  CHECK(error_kind([] { builtin_model("nope", nlohmann::json::object()); }) == ErrorKind::Configuration);
  CHECK(error_kind([] { builtin_model("biofilm", {{"D1", 1}, {"D2", 1}, {"D3", 1}}); }) ==
        ErrorKind::Configuration);
}

TEST_CASE("entropy gradient inverse closed forms") {
  const auto m = biofilm_model(1, 1);
  const Vector u0 = entropy_gradient_inverse(m, vec({0, 0}));
  CHECK(u0[0] == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(u0[1] == doctest::Approx(1.0 / 3).epsilon(1e-15));
  const Vector u1 = entropy_gradient_inverse(m, vec({std::log(2.0), 0}));
  CHECK(u1[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(u1[1] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("entropy gradient roundtrip on [-20,20]^n") {
  for (int n : {1, 2, 3}) {
    const auto e = Entropy::simplex(n, 0.0);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> uni(-20, 20);
    for (int s = 0; s < 100; ++s) {
      Vector w(n);
      for (int i = 0; i < n; ++i) w[i] = uni(rng);
      double c = 0;
      const Vector u = e.gradient_inverse(w, &c);
      CHECK(e.contains(u));
      CHECK((e.gradient(u, c) - w).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("entropy roundtrip from the state side") {
  const auto e = Entropy::simplex(2, 1.0);
  for (const auto& u : uniform_simplex(100, 9)) {
    CHECK((e.gradient_inverse(e.gradient(u)) - u).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("non-finite entropy variables are rejected") {
  const auto m = biofilm_model(1, 1);
  CHECK(error_kind([&] { entropy_gradient_inverse(m, vec({std::nan(""), 0})); }) == ErrorKind::Input);
  CHECK(error_kind([&] {
          entropy_gradient_inverse(m, vec({std::numeric_limits<double>::infinity(), 0}));
        }) == ErrorKind::Input);
}

TEST_CASE("entropy hessian is symmetric positive definite inside G") {
  const auto e = Entropy::simplex(2, 0.0);
  for (const auto& u : uniform_simplex(50, 1)) {
    const Matrix H = e.hessian(u);
    CHECK(max_abs(H - H.transpose()) == 0.0);
    CHECK(Eigen::LLT<Matrix>(H).info() == Eigen::Success);
    CHECK(max_abs(H * e.hessian_inverse(u) - Matrix::Identity(2, 2)) < 1e-10);
  }
}

TEST_CASE("entropy is continuous as the solvent fraction vanishes") {
  const auto e = Entropy::simplex(2, 1.0);
  const double boundary = e.value(vec({0.5, 0.5}));
  double previous = std::abs(e.value(vec({0.5, 0.5 - 1e-2})) - boundary);
  for (double c : {1e-4, 1e-6, 1e-8}) {
    const double gap = std::abs(e.value(vec({0.5, 0.5 - c})) - boundary);
    CHECK(gap < previous);
    previous = gap;
  }
  CHECK(std::isfinite(boundary));
  CHECK(previous < 1e-6);
}

TEST_CASE("biofilm assumption check") {
  const auto report = check_assumptions(biofilm_model(1, 1), 1000, 0);
  CHECK(report.violation_count == 0);
  CHECK(report.alpha_estimate >= 1 - 1e-9);
  CHECK(report.alpha_estimate <= 1 + 1e-6);
}

TEST_CASE("tumor coercivity constant") {
  // 2 - e = 2(1 - 1/(8e)) at e = 1/2.
  CHECK(tumor_kappa(1, 1) == doctest::Approx(1.5).epsilon(1e-12));
  const auto report = check_assumptions(tumor_model(1, 1), 1000, 0);
  CHECK(report.violation_count == 0);
  CHECK(std::abs(report.alpha_estimate - 1.5) < 1e-6);
  CHECK(report.alpha_estimate >= 1.5 - 1e-9);
}

TEST_CASE("antisymmetric diffusion violates degenerate coercivity") {
  DiffusionModel m;
  m.name = "antisymmetric";
  m.id = "antisymmetric";
  m.n = 2;
  m.s = {0, 0};
  m.entropy = Entropy::quadratic(2);
  m.diffusion = [](const Vector&) {
    Matrix A(2, 2);
    A << 0, 1, -1, 0;
    return A;
  };
  const auto report = check_assumptions(m, 50, 0);
  CHECK(report.violation_count > 0);
  REQUIRE_FALSE(report.violations.empty());
  CHECK(report.violations.front().assumption == "A2");
}

TEST_CASE("ion transport nonlocal lower bound") {
  const auto report = check_assumptions(ion_transport_model({1, 2}), 500, 0);
  CHECK(report.violation_count == 0);
  CHECK(report.alpha_estimate >= 1 - 1e-9);
}

TEST_CASE("assumption check is deterministic") {
  const auto m = tumor_model(1, 1);
  CHECK(to_json(check_assumptions(m, 200, 7)).dump() == to_json(check_assumptions(m, 200, 7)).dump());
  CHECK(error_kind([&] { check_assumptions(m, 0, 0); }) == ErrorKind::Parameter);
}

TEST_CASE("logistic reaction growth bound is reported") {
  const auto m = biofilm_model(1, 1, ReactionSpec{0.5});
  const auto report = check_assumptions(m, 200, 0);
  CHECK(report.cf_estimate >= 0.0);
  CHECK(std::isfinite(report.cf_estimate));
  CHECK(m.f(vec({0.25, 0.25}))[0] == doctest::Approx(0.5 * 0.5 * 0.25));
}

TEST_CASE("entropy production density") {
  const auto bio = biofilm_model(1, 1);
  CHECK(entropy_production_density(bio, vec({0.25, 0.25}), Matrix::Zero(2, 1)).value == 0.0);
  Matrix g(2, 1);
  g << 1, 0;
  CHECK(entropy_production_density(bio, vec({0.25, 0.25}), g).value == doctest::Approx(4.0).epsilon(1e-14));
  const auto tumor = tumor_model(1, 1);
  g << 1, 1;
  CHECK(entropy_production_density(tumor, vec({0.5, 0.25}), g).value == doctest::Approx(5.25).epsilon(1e-14));
}

TEST_CASE("entropy production density at the boundary is clamped and nonnegative") {
  const auto bio = biofilm_model(1, 1);
  Matrix g(2, 2);
  g << 1, -2, 0.5, 3;
  const auto p = entropy_production_density(bio, vec({0.0, 1.0}), g);
  CHECK(p.clamped);
  CHECK(std::isfinite(p.value));
  CHECK(p.value >= -1e-12);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  for (const auto& model : {bio, tumor_model(1, 1), ion_transport_model({1, 3})}) {
    for (const auto& u : uniform_simplex(50, 4)) {
      Matrix grad(2, 2);
      for (int i = 0; i < 4; ++i) grad(i % 2, i / 2) = normal(rng);
      const auto q = entropy_production_density(model, u, grad);
      CHECK_FALSE(q.clamped);
      CHECK(q.value >= -1e-12);
    }
  }
}
