#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <json.hpp>
#include <string>

#include "xdhom/xdhom.h"

namespace {

const char* kCell = R"({
  "model": {"name": "biofilm", "params": {"D1": 1.0, "D2": 0.5}},
  "cell": {"dim": 1, "resolution": 256,
           "coefficient": {"type": "layers", "axis": 0, "breaks": [0.5], "values": [[1.0], [4.0]]}}
})";

struct Config {
  xdhom_config* ptr = nullptr;
  ~Config() { xdhom_config_free(ptr); }
};

struct Tensor {
  xdhom_tensor* ptr = nullptr;
  ~Tensor() { xdhom_tensor_free(ptr); }
};

}  // namespace

TEST_CASE("version and empty error") {
  CHECK(std::strlen(xdhom_version()) > 0);
  Config c;
  REQUIRE(xdhom_config_parse(kCell, &c.ptr) == XDHOM_OK);
  CHECK(std::string(xdhom_last_error()).empty());
}

TEST_CASE("configuration errors map to the config status") {
  Config c;
  CHECK(xdhom_config_parse("{\"bogus\": 1}", &c.ptr) == XDHOM_ERROR_CONFIG);
  CHECK(c.ptr == nullptr);
  CHECK(std::string(xdhom_last_error()).find("bogus") != std::string::npos);
  CHECK(xdhom_config_parse("{", &c.ptr) == XDHOM_ERROR_CONFIG);
  CHECK(xdhom_config_load("/nonexistent/xdhom.json", &c.ptr) == XDHOM_ERROR_IO);
  CHECK(xdhom_config_parse(nullptr, &c.ptr) == XDHOM_ERROR_INVALID_ARGUMENT);
}

TEST_CASE("model handle") {
  xdhom_model* m = nullptr;
  REQUIRE(xdhom_model_create("tumor", "{\"beta\": 1.0, \"theta\": 1.0}", &m) == XDHOM_OK);
  CHECK(xdhom_model_species(m) == 2);
  const double u[2] = {0.2, 0.3};
  double a[4];
  REQUIRE(xdhom_model_diffusion_matrix(m, u, a) == XDHOM_OK);
  // Tumor first row with beta = theta = 1.
  const double u1 = 0.2, u2 = 0.3;
  CHECK(a[0] == doctest::Approx(2 * u1 * (1 - u1) - u1 * u2 * u2));
  CHECK(a[1] == doctest::Approx(-2 * u1 * u2 * (1 + u1)));
  const double w[2] = {0.0, 0.0};
  double back[2];
  REQUIRE(xdhom_model_entropy_gradient_inverse(m, w, back) == XDHOM_OK);
  CHECK(back[0] == doctest::Approx(1.0 / 3.0));
  char* report = nullptr;
  REQUIRE(xdhom_model_check(m, 200, 0, &report) == XDHOM_OK);
  const auto j = nlohmann::json::parse(report);
  xdhom_string_free(report);
  CHECK(j["violation_count"] == 0);
  CHECK(j["samples"] == 200);
  xdhom_model_free(m);

  CHECK(xdhom_model_create("tumor", "{\"beta\": 1.0, \"theta\": 5.0}", &m) == XDHOM_ERROR_CONFIG);
  CHECK(xdhom_model_create("nope", "", &m) == XDHOM_ERROR_CONFIG);
  CHECK(xdhom_model_diffusion_matrix(nullptr, u, a) == XDHOM_ERROR_INVALID_ARGUMENT);
}

TEST_CASE("tensors through handles") {
  Config c;
  REQUIRE(xdhom_config_parse(kCell, &c.ptr) == XDHOM_OK);
  Tensor d;
  REQUIRE(xdhom_dhom(c.ptr, &d.ptr) == XDHOM_OK);
  int rank = 0, species = 0, dim = 0;
  REQUIRE(xdhom_tensor_shape(d.ptr, &rank, &species, &dim) == XDHOM_OK);
  CHECK(rank == 2);
  CHECK(dim == 1);
  const int kl[2] = {0, 0};
  double value = 0;
  REQUIRE(xdhom_tensor_get(d.ptr, kl, &value) == XDHOM_OK);
  CHECK(std::abs(value - 1.6) <= 1e-6);
  const int out_of_range[2] = {1, 0};
  CHECK(xdhom_tensor_get(d.ptr, out_of_range, &value) == XDHOM_ERROR_INVALID_ARGUMENT);

  Tensor b;
  const double u[2] = {0.25, 0.25};
  REQUIRE(xdhom_tensor_at_state(c.ptr, u, 2, &b.ptr) == XDHOM_OK);
  REQUIRE(xdhom_tensor_shape(b.ptr, &rank, &species, &dim) == XDHOM_OK);
  CHECK(rank == 4);
  CHECK(species == 2);
  const int ilmk[4] = {0, 0, 0, 0};
  REQUIRE(xdhom_tensor_get(b.ptr, ilmk, &value) == XDHOM_OK);
  // Biofilm at (1/4, 1/4): A11 = D1 (1 - u1) = 0.75, times D_hom.
  CHECK(value == doctest::Approx(0.75 * 1.6).epsilon(1e-5));
  char* text = nullptr;
  REQUIRE(xdhom_tensor_to_json(b.ptr, &text) == XDHOM_OK);
  const auto j = nlohmann::json::parse(text);
  xdhom_string_free(text);
  CHECK(j["index_order"] == nlohmann::json({"i", "l", "m", "k"}));

  Tensor bad;
  const double outside[2] = {0.7, 0.6};
  CHECK(xdhom_tensor_at_state(c.ptr, outside, 2, &bad.ptr) == XDHOM_ERROR_CONFIG);
  CHECK(xdhom_tensor_at_state(c.ptr, u, 3, &bad.ptr) == XDHOM_ERROR_CONFIG);
}

TEST_CASE("command drivers") {
  Config c;
  REQUIRE(xdhom_config_parse(kCell, &c.ptr) == XDHOM_OK);
  const auto dir = std::filesystem::current_path() / "capi_scratch";
  std::filesystem::remove_all(dir);
  REQUIRE(xdhom_run_cell(c.ptr, (dir / "cell").c_str()) == XDHOM_OK);
  CHECK(std::filesystem::exists(dir / "cell" / "dhom.csv"));
  CHECK(xdhom_run_macro(c.ptr, (dir / "macro").c_str()) == XDHOM_ERROR_CONFIG);
  CHECK(xdhom_run_effective(c.ptr, "/nonexistent/state.json", (dir / "eff").c_str()) == XDHOM_ERROR_IO);
}
