#include "core/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <fmt/format.h>

#include "core/error.hpp"

namespace xdhom {

const char* to_string(ModelKind kind) {
  return kind == ModelKind::LocalDegenerate ? "local_degenerate" : "nonlocal_degenerate";
}

namespace {

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

// 1 - sum(u) with compensated summation, largest entries first.
double complement_of(const Vector& u) {
  std::vector<double> parts(u.data(), u.data() + u.size());
  std::sort(parts.begin(), parts.end(), [](double a, double b) { return std::abs(a) > std::abs(b); });
  double sum = 1.0;
  double carry = 0.0;
  for (double p : parts) {
    const double t = sum - p;
    carry += std::abs(sum) >= std::abs(p) ? (sum - t) - p : (-p - t) + sum;
    sum = t;
  }
  return sum + carry;
}

}  // namespace

Entropy Entropy::simplex(int n, double shift) { return Entropy(Kind::Simplex, n, shift); }

Entropy Entropy::quadratic(int n) { return Entropy(Kind::Quadratic, n, 0.0); }

double Entropy::value(const Vector& u) const {
  if (kind_ == Kind::Quadratic) return 0.5 * u.squaredNorm();
  double h = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) h += xlogx(u[i]) - u[i] + shift_;
  const double c = complement_of(u);
  return h + xlogx(c) - c + shift_;
}

Vector Entropy::gradient(const Vector& u, std::optional<double> complement) const {
  if (kind_ == Kind::Quadratic) return u;
  const double lc = std::log(complement.value_or(complement_of(u)));
  Vector w(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) w[i] = std::log(u[i]) - lc;
  return w;
}

Matrix Entropy::hessian(const Vector& u) const {
  const auto n = u.size();
  if (kind_ == Kind::Quadratic) return Matrix::Identity(n, n);
  Matrix H = Matrix::Constant(n, n, 1.0 / complement_of(u));
  for (Eigen::Index i = 0; i < n; ++i) H(i, i) += 1.0 / u[i];
  return H;
}

Matrix Entropy::hessian_inverse(const Vector& u) const {
  const auto n = u.size();
  if (kind_ == Kind::Quadratic) return Matrix::Identity(n, n);
  // Sherman-Morrison: (diag(1/u) + 11^T/u_{n+1})^{-1} = diag(u) - u u^T.
  Matrix Hi = -u * u.transpose();
  for (Eigen::Index i = 0; i < n; ++i) Hi(i, i) += u[i];
  return Hi;
}

Vector Entropy::gradient_inverse(const Vector& w, double* complement) const {
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w[i])) fail(ErrorKind::Input, "entropy variable is not finite");
  }
  if (kind_ == Kind::Quadratic) {
    if (complement) *complement = 1.0 - w.sum();
    return w;
  }
  const double m = std::max(0.0, w.maxCoeff());
  double z = std::exp(-m);
  Vector e(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    e[i] = std::exp(w[i] - m);
    z += e[i];
  }
  if (complement) *complement = std::exp(-m) / z;
  return e / z;
}

Vector Entropy::interior_point(const Vector& w) const {
  if (kind_ == Kind::Simplex) return gradient_inverse(w);
  Vector u(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) u[i] = 1.0 / (1.0 + std::exp(-w[i]));
  return u;
}

bool Entropy::contains(const Vector& u) const {
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    if (!(u[i] > 0.0)) return false;
    if (kind_ == Kind::Quadratic && !(u[i] < 1.0)) return false;
  }
  return kind_ == Kind::Quadratic || complement_of(u) > 0.0;
}

bool Entropy::contains_closure(const Vector& u, double tol) const {
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    if (!(u[i] >= -tol)) return false;
    if (kind_ == Kind::Quadratic && !(u[i] <= 1.0 + tol)) return false;
  }
  return kind_ == Kind::Quadratic || complement_of(u) >= -tol;
}

Vector DiffusionModel::f(const Vector& u) const {
  if (!reaction) return Vector::Zero(u.size());
  return reaction(u);
}

Matrix DiffusionModel::entropy_matrix(const Vector& u) const {
  const Matrix a = A(u);
  if (entropy.kind() != Entropy::Kind::Simplex) return entropy.hessian(u) * a;
  // diag(1/u) A + 1 (1^T A) / u_{n+1}; the column sums are formed before
  // dividing so the 1/u_{n+1} terms do not cancel.
  const auto n = u.size();
  Matrix M = u.cwiseInverse().asDiagonal() * a;
  const double c = complement_of(u);
  for (Eigen::Index j = 0; j < n; ++j) {
    double sum = 0.0;
    double carry = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = sum + a(i, j);
      carry += std::abs(sum) >= std::abs(a(i, j)) ? (sum - t) + a(i, j) : (a(i, j) - t) + sum;
      sum = t;
    }
    M.col(j).array() += (sum + carry) / c;
  }
  return M;
}

namespace {

void attach_reaction(DiffusionModel& m, const ReactionSpec& r) {
  if (r.logistic_rate == 0.0) return;
  const double rate = r.logistic_rate;
  m.reaction = [rate](const Vector& u) -> Vector { return rate * (1.0 - u.sum()) * u; };
  m.id += fmt::format(";logistic={:.17g}", rate);
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorKind::Parameter, fmt::format("{} must be positive, got {}", what, v));
}

}  // namespace

DiffusionModel biofilm_model(double D1, double D2, ReactionSpec reaction) {
  require_positive(D1, "biofilm D1");
  require_positive(D2, "biofilm D2");
  DiffusionModel m;
  m.name = "biofilm";
  m.id = fmt::format("biofilm(D1={:.17g},D2={:.17g})", D1, D2);
  m.kind = ModelKind::LocalDegenerate;
  m.n = 2;
  m.s = {-0.5, -0.5};
  m.D = {D1, D2};
  m.entropy = Entropy::simplex(2, 0.0);
  m.diffusion = [D1, D2](const Vector& u) {
    Matrix A(2, 2);
    A << D1 * (1.0 - u[0]), -D2 * u[0],
         -D1 * u[1], D2 * (1.0 - u[1]);
    return A;
  };
  attach_reaction(m, reaction);
  return m;
}

DiffusionModel tumor_model(double beta, double theta, ReactionSpec reaction) {
  require_positive(beta, "tumor beta");
  require_positive(theta, "tumor theta");
  if (!(theta < 4.0 * std::sqrt(beta)))
    fail(ErrorKind::Parameter,
         fmt::format("tumor model requires theta < 4 sqrt(beta) (theta={}, beta={})", theta, beta));
  DiffusionModel m;
  m.name = "tumor";
  m.id = fmt::format("tumor(beta={:.17g},theta={:.17g})", beta, theta);
  m.kind = ModelKind::LocalDegenerate;
  m.n = 2;
  m.s = {0.0, 0.0};
  m.entropy = Entropy::simplex(2, 0.0);
  m.diffusion = [beta, theta](const Vector& u) {
    const double u1 = u[0], u2 = u[1];
    Matrix A(2, 2);
    A << 2.0 * u1 * (1.0 - u1) - beta * theta * u1 * u2 * u2,
         -2.0 * beta * u1 * u2 * (1.0 + theta * u1),
         -2.0 * u1 * u2 + beta * theta * (1.0 - u2) * u2 * u2,
         2.0 * beta * u2 * (1.0 - u2) * (1.0 + theta * u1);
    return A;
  };
  attach_reaction(m, reaction);
  return m;
}

DiffusionModel ion_transport_model(std::vector<double> D, ReactionSpec reaction) {
  if (D.empty()) fail(ErrorKind::Parameter, "ion_transport needs at least one diffusivity");
  for (double d : D) require_positive(d, "ion_transport D_i");
  DiffusionModel m;
  m.name = "ion_transport";
  m.id = "ion_transport(D=";
  for (std::size_t i = 0; i < D.size(); ++i) m.id += fmt::format("{}{:.17g}", i ? "," : "", D[i]);
  m.id += ")";
  m.kind = ModelKind::NonlocalDegenerate;
  m.n = static_cast<int>(D.size());
  m.D = D;
  m.entropy = Entropy::simplex(m.n, 1.0);
  m.diffusion = [D](const Vector& u) {
    const auto n = u.size();
    const double solvent = complement_of(u);
    Matrix A(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        A(i, j) = D[static_cast<std::size_t>(i)] * ((i == j ? solvent : 0.0) + u[i]);
      }
    }
    return A;
  };
  attach_reaction(m, reaction);
  return m;
}

DiffusionModel scalar_model(double a0, double a1, ReactionSpec reaction) {
  require_positive(a0, "scalar a0");
  if (!(a0 + a1 > 0.0)) fail(ErrorKind::Parameter, "scalar model needs a(u) = a0 + a1 u > 0 on [0,1]");
  DiffusionModel m;
  m.name = "scalar";
  m.id = fmt::format("scalar(a0={:.17g},a1={:.17g})", a0, a1);
  m.kind = ModelKind::LocalDegenerate;
  m.n = 1;
  m.s = {0.0};
  m.entropy = Entropy::simplex(1, 0.0);
  m.diffusion = [a0, a1](const Vector& u) { return Matrix::Constant(1, 1, a0 + a1 * u[0]); };
  attach_reaction(m, reaction);
  return m;
}

namespace {

double number(const nlohmann::json& params, const char* key) {
  if (!params.contains(key)) fail(ErrorKind::Configuration, fmt::format("missing model parameter '{}'", key));
  const auto& v = params.at(key);
  if (!v.is_number()) fail(ErrorKind::Configuration, fmt::format("model parameter '{}' must be a number", key));
  return v.get<double>();
}

void reject_unknown(const nlohmann::json& params, std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : params.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      fail(ErrorKind::Configuration, fmt::format("unknown model parameter '{}'", key));
  }
}

ReactionSpec parse_reaction(const nlohmann::json& params) {
  ReactionSpec r;
  if (!params.contains("reaction")) return r;
  const auto& j = params.at("reaction");
  if (!j.is_object()) fail(ErrorKind::Configuration, "'reaction' must be an object");
  reject_unknown(j, {"type", "rate"});
  const std::string type = j.value("type", "");
  if (type == "none") return r;
  if (type != "logistic") fail(ErrorKind::Configuration, fmt::format("unknown reaction type '{}'", type));
  r.logistic_rate = number(j, "rate");
  return r;
}

}  // namespace

DiffusionModel builtin_model(std::string_view name, const nlohmann::json& params_in) {
  const nlohmann::json params = params_in.is_null() ? nlohmann::json::object() : params_in;
  if (!params.is_object()) fail(ErrorKind::Configuration, "model parameters must be a JSON object");
  const ReactionSpec reaction = parse_reaction(params);
  if (name == "biofilm") {
    reject_unknown(params, {"D1", "D2", "reaction"});
    return biofilm_model(number(params, "D1"), number(params, "D2"), reaction);
  }
  if (name == "tumor") {
    reject_unknown(params, {"beta", "theta", "reaction"});
    return tumor_model(number(params, "beta"), number(params, "theta"), reaction);
  }
  if (name == "ion_transport") {
    reject_unknown(params, {"D", "reaction"});
    if (!params.contains("D") || !params.at("D").is_array())
      fail(ErrorKind::Configuration, "ion_transport needs an array parameter 'D'");
    std::vector<double> D;
    for (const auto& v : params.at("D")) {
      if (!v.is_number()) fail(ErrorKind::Configuration, "ion_transport 'D' entries must be numbers");
      D.push_back(v.get<double>());
    }
    return ion_transport_model(std::move(D), reaction);
  }
  if (name == "scalar") {
    reject_unknown(params, {"a0", "a1", "reaction"});
    return scalar_model(number(params, "a0"), params.contains("a1") ? number(params, "a1") : 0.0, reaction);
  }
  fail(ErrorKind::Configuration, fmt::format("unknown model '{}'", name));
}

double tumor_kappa(double beta, double theta) {
  // min{2 - e, g(e)} with g increasing in e: the maximum sits where they
  // cross, or at the right end of (0,2) when g stays below.
  const auto g = [&](double e) { return 2.0 * beta * (1.0 - beta * theta * theta / (8.0 * e)); };
  double lo = 1e-300, hi = 2.0;
  if (g(hi) <= 0.0) return g(hi);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (2.0 - mid > g(mid)) lo = mid; else hi = mid;
  }
  const double e = 0.5 * (lo + hi);
  return std::min(2.0 - e, g(e));
}

Vector entropy_gradient_inverse(const DiffusionModel& model, const Vector& w) {
  if (w.size() != model.n) fail(ErrorKind::Input, fmt::format("expected {} entropy variables, got {}", model.n, w.size()));
  return model.entropy.gradient_inverse(w);
}

std::vector<Vector> sphere_design(int n, std::size_t fibonacci_points) {
  std::vector<Vector> out;
  for (int i = 0; i < n; ++i) {
    for (double sign : {1.0, -1.0}) {
      Vector z = Vector::Zero(n);
      z[i] = sign;
      out.push_back(z);
    }
  }
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t k = 0; k < fibonacci_points; ++k) {
    Vector z(n);
    if (n == 1) break;
    if (n == 2) {
      const double t = golden * static_cast<double>(k);
      z << std::cos(t), std::sin(t);
    } else if (n == 3) {
      const double y = 1.0 - 2.0 * (static_cast<double>(k) + 0.5) / static_cast<double>(fibonacci_points);
      const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
      const double t = golden * static_cast<double>(k);
      z << r * std::cos(t), y, r * std::sin(t);
    } else {
      break;
    }
    out.push_back(z);
  }
  return out;
}

std::vector<Vector> sample_states(const DiffusionModel& model, std::size_t count, std::uint64_t seed) {
  constexpr double box = 15.0;
  const int n = model.n;
  std::vector<Vector> out;
  out.reserve(count);
  const std::size_t corners = std::size_t{1} << static_cast<unsigned>(n);
  for (std::size_t c = 0; c < corners && out.size() < count; ++c) {
    Vector w(n);
    for (int i = 0; i < n; ++i) w[i] = (c >> static_cast<unsigned>(i)) & 1U ? box : -box;
    out.push_back(model.entropy.interior_point(w));
  }
  if (out.size() < count) out.push_back(model.entropy.interior_point(Vector::Zero(n)));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-box, box);
  while (out.size() < count) {
    Vector w(n);
    for (int i = 0; i < n; ++i) w[i] = uniform(rng);
    out.push_back(model.entropy.interior_point(w));
  }
  for (const auto& u : out) {
    if (!model.entropy.contains(u)) fail(ErrorKind::Internal, "state sampler left the admissible region");
  }
  return out;
}

namespace {

constexpr std::size_t kMaxWitnesses = 20;

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

void record(AssumptionReport& r, const char* id, const Vector& u, const Vector& z, double value) {
  ++r.violation_count;
  if (r.violations.size() < kMaxWitnesses) r.violations.push_back({id, to_std(u), to_std(z), value});
}

}  // namespace

AssumptionReport check_assumptions(const DiffusionModel& model, std::size_t sample_count, std::uint64_t seed) {
  if (sample_count == 0) fail(ErrorKind::Parameter, "sample count must be positive");
  AssumptionReport r;
  r.model_id = model.id;
  r.kind = model.kind;
  const int n = model.n;
  const auto states = sample_states(model, sample_count, seed);
  const auto design = sphere_design(n, 64);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal;
  constexpr int kRandomDirections = 8;

  r.samples = states.size();
  r.alpha_estimate = std::numeric_limits<double>::infinity();
  r.a6_constant = -std::numeric_limits<double>::infinity();
  r.ca_vacuous = std::none_of(model.s.begin(), model.s.end(), [](double s) { return s > 0.0; });

  for (const auto& u : states) {
    const Matrix M = model.entropy_matrix(u);
    std::vector<Vector> directions = design;
    for (int k = 0; k < kRandomDirections; ++k) {
      Vector z(n);
      for (int i = 0; i < n; ++i) z[i] = normal(rng);
      directions.push_back(z / z.norm());
    }

    if (model.kind == ModelKind::LocalDegenerate) {
      Vector weight(n);  // u_i^{s_i}
      for (int i = 0; i < n; ++i) weight[i] = std::pow(u[i], model.s[static_cast<std::size_t>(i)]);

      // Exact minimum over z of z^T M z / sum u_i^{2 s_i} z_i^2.
      const Matrix S = 0.5 * (M + M.transpose());
      const Matrix scaled = weight.cwiseInverse().asDiagonal() * S * weight.cwiseInverse().asDiagonal();
      Eigen::SelfAdjointEigenSolver<Matrix> eig(scaled);
      const double alpha_u = eig.eigenvalues()[0];
      r.alpha_estimate = std::min(r.alpha_estimate, alpha_u);

      for (const auto& z : directions) {
        ++r.evaluations;
        const double q = z.dot(M * z);
        const double wz = weight.cwiseProduct(z).squaredNorm();
        if (!(q > 1e-12 * wz)) record(r, "A2", u, z, q);
      }
      if (alpha_u <= 0.0) {
        const Vector z = weight.cwiseInverse().asDiagonal() * eig.eigenvectors().col(0);
        record(r, "A2", u, z / z.norm(), z.dot(M * z) / z.squaredNorm());
      }

      const Matrix A = model.A(u);
      for (int j = 0; j < n; ++j) {
        if (model.s[static_cast<std::size_t>(j)] <= 0.0) continue;
        for (int i = 0; i < n; ++i) r.ca_estimate = std::max(r.ca_estimate, std::abs(A(i, j)) / weight[j]);
      }
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          const double ratio = M(i, j) / (weight[i] * weight[j]);
          if (!std::isfinite(ratio)) {
            record(r, "A6", u, Vector::Unit(n, i), ratio);
            continue;
          }
          r.a6_constant = std::max(r.a6_constant, ratio);
        }
      }
    } else {
      const double p0 = *std::min_element(model.D.begin(), model.D.end());
      const double solvent = complement_of(u);
      for (const auto& z : directions) {
        ++r.evaluations;
        const double q = z.dot(M * z);
        const double bound = p0 * solvent * z.cwiseProduct(z).cwiseQuotient(u).sum() +
                             0.5 * p0 * z.sum() * z.sum() / solvent;
        if (q < bound * (1.0 - 1e-10)) record(r, "nonlocal", u, z, q - bound);
        if (bound > 0.0) r.alpha_estimate = std::min(r.alpha_estimate, q / bound);
      }
    }

    // Reaction growth: f(u).h'(u) <= C_f (1 + h(u)).
    const Vector fu = model.f(u);
    const double fw = fu.dot(model.entropy.gradient(u));
    const double denom = 1.0 + model.entropy.value(u);
    if (denom > 0.0) {
      r.cf_estimate = std::max(r.cf_estimate, fw / denom);
    } else if (fw > 0.0) {
      record(r, "A4", u, fu, fw);
    }
  }
  if (!std::isfinite(r.a6_constant)) r.a6_constant = 0.0;
  if (!std::isfinite(r.alpha_estimate)) r.alpha_estimate = 0.0;
  return r;
}

nlohmann::json to_json(const AssumptionReport& r) {
  nlohmann::json j;
  j["model"] = r.model_id;
  j["kind"] = to_string(r.kind);
  j["samples"] = r.samples;
  j["evaluations"] = r.evaluations;
  j["alpha_estimate"] = r.alpha_estimate;
  j["CA_estimate"] = r.ca_estimate;
  j["CA_vacuous"] = r.ca_vacuous;
  j["A6_constant"] = r.a6_constant;
  j["Cf_estimate"] = r.cf_estimate;
  j["violation_count"] = r.violation_count;
  auto& list = j["violations"] = nlohmann::json::array();
  for (const auto& v : r.violations) {
    list.push_back({{"assumption", v.assumption}, {"u", v.u}, {"z", v.z}, {"value", v.value}});
  }
  return j;
}

ProductionDensity entropy_production_density(const DiffusionModel& model, const Vector& u,
                                             const Matrix& grad_u, double delta) {
  if (grad_u.rows() != model.n) fail(ErrorKind::Input, "gradient must have one row per species");
  ProductionDensity out;
  Vector state = u;
  if (!model.entropy.contains(u)) {
    state = (u.array() + delta / (model.n + 1)) / (1.0 + delta);
    out.clamped = true;
  }
  const Matrix M = model.entropy_matrix(state);
  for (Eigen::Index k = 0; k < grad_u.cols(); ++k) out.value += grad_u.col(k).dot(M * grad_u.col(k));
  return out;
}

}  // namespace xdhom
