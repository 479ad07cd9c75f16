// Acceptance checks. Prints one PASS/FAIL line per criterion.
#include <CLI11.hpp>
#include <fmt/core.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "core/cellproblem.hpp"
#include "core/effective.hpp"
#include "core/harness.hpp"
#include "core/models.hpp"
#include "support.hpp"

using namespace xdhom;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string configs(const char* name) { return std::string(XDHOM_CONFIGS) + "/" + name; }

/// Uniform samples from the open simplex in R^n via sorted spacings.
std::vector<Vector> uniform_simplex(std::size_t count, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<Vector> out;
  while (out.size() < count) {
    std::vector<double> cuts(static_cast<std::size_t>(n));
    for (auto& c : cuts) c = U(rng);
    std::sort(cuts.begin(), cuts.end());
    Vector u(n);
    double prev = 0.0;
    for (int i = 0; i < n; ++i) {
      u[i] = cuts[static_cast<std::size_t>(i)] - prev;
      prev = cuts[static_cast<std::size_t>(i)];
    }
    if (u.minCoeff() > 0.0 && 1.0 - prev > 0.0) out.push_back(u);
  }
  return out;
}

Verdict harmonic_mean_exactness() {
  const double oracle = testing::harmonic_mean({1.0, 4.0});
  const auto at = [](int N) {
    CellGrid g(CellGeometry::unit(1), N);
    return dhom(sample_coefficient(testing::two_phase(), g), g)(0, 0);
  };
  const double rel = std::abs(at(512) - oracle) / oracle;
  std::vector<double> ns, errs;
  std::string list;
  for (int N : {32, 64, 128, 256}) {
    ns.push_back(N);
    errs.push_back(std::abs(at(N) - oracle));
    list += fmt::format("{}{:.3g}", list.empty() ? "" : ",", errs.back());
  }
  const double order = testing::fitted_order(ns, errs);
  return {rel <= 1e-6 && order >= 1.9,
          fmt::format("rel_err(512)={:.3g} errors(32..256)=[{}] fitted_order={:.4g}", rel, list, order)};
}

Verdict constant_coefficient() {
  CellGrid g(CellGeometry::unit(2), 16);
  const std::vector<double> pbar{2.0, 0.5};
  const auto P = sample_coefficient(ConstantCoefficient{pbar}, g);
  const double delta = 1e-12;
  std::mt19937_64 rng(7);
  double corrector = 0.0, tensor = 0.0;
  for (const auto& model : {biofilm_model(1.0, 0.5), tumor_model(1.0, 1.0)}) {
    for (const auto& u : uniform_simplex(10, 2, rng)) {
      corrector = std::max(corrector, solve_coupled_cell(ahat(model, u, delta), &P, g, delta).max_norm());
      const auto B = effective_tensor_local(model, u, P, g, delta);
      const Matrix A = model.A(u);
      for (int i = 0; i < 2; ++i)
        for (int l = 0; l < 2; ++l)
          for (int m = 0; m < 2; ++m)
            for (int k = 0; k < 2; ++k) {
              const double expected = k == m ? A(i, l) * pbar[static_cast<std::size_t>(m)] : 0.0;
              tensor = std::max(tensor, std::abs(B(i, l, m, k) - expected));
            }
    }
  }
  return {corrector <= 1e-10 && tensor <= 1e-10,
          fmt::format("max_corrector={:.3g} max_tensor_err={:.3g} (delta={:g})", corrector, tensor, delta)};
}

Verdict entropy_matrix_identities() {
  std::mt19937_64 rng(11);
  const double D1 = 1.0, D2 = 0.5;
  const auto biofilm = biofilm_model(D1, D2);
  double identity = 0.0;
  for (const auto& u : uniform_simplex(100, 2, rng)) {
    Matrix expected = Matrix::Zero(2, 2);
    expected(0, 0) = D1 / u[0];
    expected(1, 1) = D2 / u[1];
    identity = std::max(identity, (biofilm.entropy_matrix(u) - expected).cwiseAbs().maxCoeff());
  }
  // kappa(1,1): the bounds 2 - e and 2(1 - 1/(8e)) meet at e = 1/2.
  const double kappa = 1.5;
  const auto tumor = tumor_model(1.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& u : uniform_simplex(10000, 2, rng)) {
    const double t = angle(rng);
    Vector z(2);
    z << std::cos(t), std::sin(t);
    worst = std::min(worst, z.dot(tumor.entropy_matrix(u) * z) - kappa * z.squaredNorm());
  }
  return {identity <= 1e-12 && worst >= -1e-9,
          fmt::format("biofilm max|h''A - diag(D/u)|={:.3g} tumor min(z.h''Az - kappa|z|^2)={:.3g}", identity, worst)};
}

Verdict decoupling() {
  CellGrid g(CellGeometry::unit(2), 32);
  const auto P = sample_coefficient(InclusionCoefficient{{0.1, 0.2}, {0.5, 0.9}, {6.0, 2.0}, {1.0, 1.0}}, g);
  const auto scalar = solve_scalar_cell(P, g);
  Matrix A = Matrix::Zero(3, 3);
  A.diagonal() << 2.0, 0.5, 7.0;
  const auto coupled = solve_coupled_cell(A, &P, g, 1e-6);
  double diag = 0.0, off = 0.0;
  for (int k = 0; k < 2; ++k)
    for (int l = 0; l < 3; ++l)
      for (int j = 0; j < 3; ++j) {
        const Vector c = coupled.component(k, l, j);
        if (j == l)
          diag = std::max(diag, (c - scalar.scalar(k)).cwiseAbs().maxCoeff());
        else
          off = std::max(off, c.cwiseAbs().maxCoeff());
      }
  return {diag <= 1e-10 && off <= 1e-10, fmt::format("diagonal_err={:.3g} off_diagonal={:.3g}", diag, off)};
}

Verdict delta_continuation_gaps() {
  CellGrid g(CellGeometry::unit(1), 256);
  const auto P = sample_coefficient(testing::two_phase(), g);
  const auto model = biofilm_model(1.0, 1.0);
  Vector u(2);
  u << 0.25, 0.25;
  const auto dc = delta_continuation([&](double d) { return ahat(model, u, d); }, &P, g, {1e-2, 1e-3, 1e-4, 1e-5});
  std::string list;
  for (double gap : dc.gaps) list += fmt::format("{}{:.3g}", list.empty() ? "" : ",", gap);
  return {dc.strictly_decreasing, fmt::format("L2 gaps=[{}]", list)};
}

struct RunSummary {
  std::string name;
  TrajectoryLog log;
  std::string error;
};

std::vector<RunSummary>& macro_runs() {
  static std::vector<RunSummary> runs = [] {
    std::vector<RunSummary> out;
    for (const char* name : {"acceptance_ion.json", "acceptance_biofilm.json"}) {
      auto run = run_macro(load_config(configs(name)));
      out.push_back({name, run.result.log, run.result.error});
    }
    return out;
  }();
  return runs;
}

std::vector<RunSummary>& sweep_runs() {
  static std::vector<RunSummary> runs = [] {
    std::vector<RunSummary> out;
    const auto config = load_config(configs("sweep.json"));
    auto reference = run_macro(config, config.sweep->macro_cells);
    out.push_back({"sweep reference", reference.result.log, reference.result.error});
    for (double eps : config.sweep->eps) {
      auto micro = run_micro(config, eps);
      out.push_back({fmt::format("micro eps={:g}", eps), micro.log, micro.error});
    }
    return out;
  }();
  return runs;
}

Verdict entropy_dissipation() {
  bool pass = true;
  std::string detail;
  for (const auto& run : macro_runs()) {
    const auto steps = run.log.size() - 1;
    const double rise = run.log.max_entropy_increase();
    const double production = run.log.min_production();
    pass = pass && run.error.empty() && steps == 100 && rise <= 1e-8 && production >= -1e-10;
    detail += fmt::format("{}{}: steps={} max_dH={:.3g} min_production={:.3g}{}", detail.empty() ? "" : "; ",
                          run.name, steps, rise, production, run.error.empty() ? "" : " error=" + run.error);
  }
  return {pass, detail};
}

Verdict conservation() {
  bool pass = true;
  double drift = 0.0;
  std::size_t runs = 0, outside = 0;
  std::vector<RunSummary> all = macro_runs();
  for (const auto& r : sweep_runs()) all.push_back(r);
  for (const auto& run : all) {
    ++runs;
    drift = std::max(drift, run.log.max_relative_mass_drift());
    for (bool inside : run.log.interior) outside += inside ? 0 : 1;
    pass = pass && run.error.empty();
  }
  pass = pass && drift <= 1e-9 && outside == 0;
  return {pass, fmt::format("runs={} max_relative_mass_drift={:.3g} states_outside={}", runs, drift, outside)};
}

Verdict eps_convergence() {
  const auto report = eps_sweep(load_config(configs("sweep.json")));
  bool ok = report.rows.size() == 4;
  std::string list;
  for (const auto& row : report.rows) {
    ok = ok && row.failure.empty();
    list += fmt::format("{}{:g}:{:.3g}", list.empty() ? "" : ",", row.eps, row.l2);
  }
  const double rate = report.rate.value_or(std::nan(""));
  return {ok && report.monotone && rate >= 0.8,
          fmt::format("L2=[{}] monotone={} rate={:.4g} reference_converged={}", list, report.monotone, rate,
                      report.reference_converged)};
}

Verdict perforated_symmetry() {
  HoleSpec hole;
  hole.shape = HoleShape::Box;
  hole.center = {0.5, 0.5};
  hole.size = {0.5, 0.5};
  CellGrid g(CellGeometry::unit(2, hole), 64);
  const auto D = dhom_perforated(g);
  Matrix M(2, 2);
  M << D(0, 0), D(0, 1), D(1, 0), D(1, 1);
  Eigen::EigenSolver<Matrix> es(M);
  const auto ev = es.eigenvalues();
  bool spectrum = true;
  for (int i = 0; i < 2; ++i)
    spectrum = spectrum && std::abs(ev[i].imag()) == 0.0 && ev[i].real() > 0.0 && ev[i].real() <= 1.0 + 1e-8;
  const double diag = std::abs(M(0, 0) - M(1, 1));
  const double off = std::max(std::abs(M(0, 1)), std::abs(M(1, 0)));
  return {diag <= 1e-8 && off <= 1e-8 && spectrum,
          fmt::format("hole_fraction={:.4g} |D11-D22|={:.3g} |D12|={:.3g} eigenvalues=({:.6g},{:.6g})",
                      1.0 - g.porosity(), diag, off, ev[0].real(), ev[1].real())};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict reproducibility() {
  const fs::path root = fs::current_path() / "acceptance_repro";
  fs::remove_all(root);
  const std::string cli = XDHOM_CLI;
  const std::vector<std::pair<std::string, std::vector<std::string>>> commands{
      {"cell --config " + configs("cell.json"), {"dhom.csv", "correctors.csv"}},
      {"macro --config " + configs("macro.json"), {"trajectory.csv", "final_state.csv"}},
      {"micro --config " + configs("micro.json") + " --eps 0.125", {"trajectory.csv", "final_state.csv"}},
      {"sweep --config " + configs("sweep.json"), {"sweep.csv"}},
  };
  std::size_t compared = 0, differing = 0;
  for (std::size_t c = 0; c < commands.size(); ++c) {
    for (const char* rep : {"a", "b"}) {
      const auto out = root / rep / std::to_string(c);
      const std::string line = cli + " " + commands[c].first + " --out " + out.string() + " > /dev/null 2>&1";
      if (std::system(line.c_str()) != 0) return {false, "command failed: " + line};
    }
    for (const auto& file : commands[c].second) {
      ++compared;
      const auto a = slurp(root / "a" / std::to_string(c) / file);
      const auto b = slurp(root / "b" / std::to_string(c) / file);
      if (a.empty() || a != b) ++differing;
    }
  }
  return {differing == 0, fmt::format("csv_files_compared={} differing={}", compared, differing)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  int only = 0;
  app.add_option("--only", only, "run a single criterion (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"harmonic-mean exactness", harmonic_mean_exactness},
      {"constant-coefficient degeneration", constant_coefficient},
      {"entropy-matrix identities", entropy_matrix_identities},
      {"decoupling", decoupling},
      {"delta continuation", delta_continuation_gaps},
      {"entropy dissipation", entropy_dissipation},
      {"conservation and invariance", conservation},
      {"eps convergence", eps_convergence},
      {"perforated symmetry and bounds", perforated_symmetry},
      {"reproducibility", reproducibility},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (only != 0 && only != number) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += v.pass ? 0 : 1;
    fmt::print("criterion {:2d} {:<34} {}  {}\n", number, criteria[i].first, v.pass ? "PASS" : "FAIL", v.detail);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
