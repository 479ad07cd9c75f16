#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace xdhom {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ModelKind { LocalDegenerate, NonlocalDegenerate };

const char* to_string(ModelKind kind);

/// Entropy density h with its derivatives and the inverse of h'.
///
/// Simplex entropies are h(u) = sum_{i=1}^{n+1} (u_i log u_i - u_i + c) with
/// u_{n+1} = 1 - sum u_i, defined on G = {u_i > 0, u_{n+1} > 0}. The
/// constant c is 0 for the plain Boltzmann form and 1 for the shifted form
/// that makes h nonnegative. 0 log 0 is taken as 0.
class Entropy {
 public:
  enum class Kind { Simplex, Quadratic };

  static Entropy simplex(int n, double shift);
  /// h(u) = |u|^2 / 2 on (0,1)^n. Used for synthetic test models.
  static Entropy quadratic(int n);

  Kind kind() const { return kind_; }
  int species() const { return n_; }

  double value(const Vector& u) const;
  /// h'(u). `complement` overrides 1 - sum(u) for simplex entropies when
  /// the caller holds an accurate value.
  Vector gradient(const Vector& u, std::optional<double> complement = std::nullopt) const;
  Matrix hessian(const Vector& u) const;
  Matrix hessian_inverse(const Vector& u) const;
  /// (h')^{-1}(w). Writes the accurate complement 1 - sum(u) if requested.
  Vector gradient_inverse(const Vector& w, double* complement = nullptr) const;

  /// Maps an unconstrained vector into the interior of G.
  Vector interior_point(const Vector& w) const;

  bool contains(const Vector& u) const;
  bool contains_closure(const Vector& u, double tol = 1e-12) const;

 private:
  Entropy(Kind kind, int n, double shift) : kind_(kind), n_(n), shift_(shift) {}

  Kind kind_;
  int n_;
  double shift_;
};

struct DiffusionModel {
  std::string name;
  std::string id;  // name plus parameters, stable across runs
  ModelKind kind = ModelKind::LocalDegenerate;
  int n = 1;
  std::vector<double> s;  // degeneracy exponents (local kind)
  std::vector<double> D;  // diffusivities (nonlocal kind)
  Entropy entropy = Entropy::simplex(1, 0.0);
  std::function<Matrix(const Vector&)> diffusion;
  std::function<Vector(const Vector&)> reaction;  // empty means f = 0

  Matrix A(const Vector& u) const { return diffusion(u); }
  Vector f(const Vector& u) const;
  bool has_reaction() const { return static_cast<bool>(reaction); }
  /// h''(u) A(u).
  Matrix entropy_matrix(const Vector& u) const;
};

struct ReactionSpec {
  double logistic_rate = 0.0;  // f_i = r u_i (1 - sum u)
};

DiffusionModel biofilm_model(double D1, double D2, ReactionSpec reaction = {});
/// Requires theta < 4 sqrt(beta).
DiffusionModel tumor_model(double beta, double theta, ReactionSpec reaction = {});
DiffusionModel ion_transport_model(std::vector<double> D, ReactionSpec reaction = {});
/// n = 1, a(u) = a0 + a1 u, s = 0, logistic-type entropy on (0,1).
DiffusionModel scalar_model(double a0, double a1, ReactionSpec reaction = {});

/// Dispatch by name: biofilm {D1,D2}, tumor {beta,theta}, ion_transport {D},
/// scalar {a0,a1}. Any model accepts an optional
/// "reaction": {"type": "logistic", "rate": r}.
DiffusionModel builtin_model(std::string_view name, const nlohmann::json& params);

/// Coercivity constant of the tumor model, max over e in (0,2) of
/// min{2 - e, 2 beta (1 - beta theta^2 / (8 e))}.
double tumor_kappa(double beta, double theta);

Vector entropy_gradient_inverse(const DiffusionModel& model, const Vector& w);

struct AssumptionViolation {
  std::string assumption;  // "A2", "A4", "A6", "nonlocal"
  std::vector<double> u;
  std::vector<double> z;
  double value = 0.0;
};

struct AssumptionReport {
  std::string model_id;
  ModelKind kind = ModelKind::LocalDegenerate;
  double alpha_estimate = 0.0;
  double ca_estimate = 0.0;
  bool ca_vacuous = true;  // no exponent s_j > 0
  double a6_constant = 0.0;
  double cf_estimate = 0.0;
  std::size_t samples = 0;
  std::size_t evaluations = 0;
  std::vector<AssumptionViolation> violations;
  std::size_t violation_count = 0;  // may exceed the stored witnesses
};

nlohmann::json to_json(const AssumptionReport& report);

/// Samples u in G through the entropy variables (box corners first, then
/// uniform w in [-15,15]^n) and checks the degenerate coercivity (A2), the
/// growth bound (A3), the reaction bound (A4) and the entrywise bound (A6).
/// Nonlocal models are checked against the lower bound
/// p0 u_{n+1} sum z_i^2/u_i + p0/2 (sum z_i)^2 / u_{n+1}.
AssumptionReport check_assumptions(const DiffusionModel& model, std::size_t sample_count,
                                   std::uint64_t seed);

/// Deterministic unit-sphere design: +-e_i followed by Fibonacci points.
std::vector<Vector> sphere_design(int n, std::size_t fibonacci_points);

/// States used by check_assumptions, in order.
std::vector<Vector> sample_states(const DiffusionModel& model, std::size_t count, std::uint64_t seed);

struct ProductionDensity {
  double value = 0.0;
  bool clamped = false;
};

/// grad_u : h''(u) A(u) grad_u for grad_u of shape n x d. States outside G
/// are replaced by (u + delta/(n+1))/(1 + delta) and flagged.
ProductionDensity entropy_production_density(const DiffusionModel& model, const Vector& u,
                                             const Matrix& grad_u, double delta = 1e-6);

}  // namespace xdhom
