#include <doctest.h>

#include <array>
#include <cmath>
#include <limits>

#include "patchmil/optim.hpp"

using namespace patchmil;

namespace {

// (param, velocity) after each of 10 steps from p=0, v=0 with a constant
// gradient of 1; mu=0.9, lr=0.1. Evaluated with exact rational arithmetic.
constexpr std::array<std::array<double, 2>, 10> kConstantGradient{{
    {-0.19, -0.1},
    {-0.461, -0.19},
    {-0.8049, -0.271},
    {-1.21441, -0.3439},
    {-1.682969, -0.40951},
    {-2.2046721, -0.468559},
    {-2.77420489, -0.5217031},
    {-3.386784401, -0.56953279},
    {-4.0381059609, -0.612579511},
    {-4.72429536481, -0.6513215599},
}};

// Same, from p=1 on f(p) = p^2 / 2 (gradient = p).
constexpr std::array<std::array<double, 2>, 10> kQuadratic{{
    {0.81, -0.1},
    {0.5751, -0.171},
    {0.327321, -0.21141},
    {0.09388791, -0.2230011},
    {-0.1045816839, -0.210089781},
    {-0.254883886569, -0.17862263451},
    {-0.35114028207399, -0.1352719824021},
    {-0.3939939342256329, -0.086630755954491},
    {-0.38930599904590035, -0.03856828693647861},
    {-0.34657817164572696, 0.0042191416617592872},
}};

const SgdHyperparams kHp{0.1, 0.9, true, 0.0};

}  // namespace

TEST_CASE("single scalar step") {
  std::array<double, 1> p{2.0}, v{0.0};
  const std::array<double, 1> g{1.0};
  sgd_nesterov_step<double>(p, g, v, kHp);
  CHECK(v[0] == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK(p[0] == doctest::Approx(2.0 - 0.19).epsilon(1e-15));
}

TEST_CASE("ten-step sequences match exact evaluation") {
  std::array<double, 1> p{0.0}, v{0.0};
  for (const auto& [pe, ve] : kConstantGradient) {
    const std::array<double, 1> g{1.0};
    sgd_nesterov_step<double>(p, g, v, kHp);
    CHECK(std::abs(p[0] - pe) <= 1e-12);
    CHECK(std::abs(v[0] - ve) <= 1e-12);
  }

  p = {1.0};
  v = {0.0};
  for (const auto& [pe, ve] : kQuadratic) {
    const std::array<double, 1> g{p[0]};
    sgd_nesterov_step<double>(p, g, v, kHp);
    CHECK(std::abs(p[0] - pe) <= 1e-12);
    CHECK(std::abs(v[0] - ve) <= 1e-12);
  }
}

TEST_CASE("agrees with the look-ahead formulation") {
  // theta' = theta + v', v' = mu v - lr grad(theta + mu v); the stored
  // parameter of the step under test is theta + mu v.
  const double mu = 0.9, lr = 0.1;
  long double theta = 1.0L, vs = 0.0L;
  std::array<double, 1> p{1.0}, v{0.0};
  for (int k = 0; k < 10; ++k) {
    const long double look = theta + mu * vs;
    vs = mu * vs - lr * look;  // grad of p^2/2 is p
    theta += vs;
    const std::array<double, 1> g{p[0]};
    sgd_nesterov_step<double>(p, g, v, kHp);
    CHECK(std::abs(p[0] - static_cast<double>(theta + mu * vs)) <= 1e-12);
  }
}

TEST_CASE("momentum off, fixed point, weight decay") {
  std::array<double, 3> p{1.0, -2.0, 0.5}, v{0, 0, 0};
  const std::array<double, 3> g{0.3, 0.1, -1.0};
  sgd_nesterov_step<double>(p, g, v, {0.5, 0.0, true, 0.0});
  CHECK(p[0] == doctest::Approx(1.0 - 0.15));
  CHECK(p[1] == doctest::Approx(-2.0 - 0.05));
  CHECK(p[2] == doctest::Approx(0.5 + 0.5));

  std::array<double, 2> q{3.0, -4.0}, w{0.0, 0.0};
  const std::array<double, 2> zero{0.0, 0.0};
  sgd_nesterov_step<double>(q, zero, w, kHp);
  CHECK(q == std::array<double, 2>{3.0, -4.0});
  CHECK(w == std::array<double, 2>{0.0, 0.0});

  // Weight decay acts as an extra gradient term wd * p.
  std::array<double, 1> a{2.0}, va{0.0}, b{2.0}, vb{0.0};
  sgd_nesterov_step<double>(a, std::array<double, 1>{0.5}, va, {0.1, 0.9, true, 0.25});
  sgd_nesterov_step<double>(b, std::array<double, 1>{0.5 + 0.25 * 2.0}, vb, kHp);
  CHECK(a[0] == b[0]);
  CHECK(va[0] == vb[0]);
}

TEST_CASE("rejects mismatched and non-finite input") {
  std::array<double, 2> p{1, 2}, v{0, 0};
  const std::array<double, 1> short_g{1};
  CHECK_THROWS_AS(sgd_nesterov_step<double>(p, short_g, v, kHp), InvalidArgument);
  const std::array<double, 2> bad{1, std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(sgd_nesterov_step<double>(p, bad, v, kHp), InvalidArgument);
  CHECK(p == std::array<double, 2>{1, 2});
  const std::array<double, 2> inf{std::numeric_limits<double>::infinity(), 0};
  CHECK_THROWS_AS(sgd_nesterov_step<double>(p, inf, v, kHp), InvalidArgument);
}

TEST_CASE("learning-rate decay") {
  CHECK(decayed_learning_rate(1e-3, 0.0, 1000) == 1e-3);
  CHECK(decayed_learning_rate(1e-5, 1e-6, 0) == 1e-5);
  CHECK(decayed_learning_rate(1e-5, 1e-6, 1000000) == doctest::Approx(0.5e-5));
}

TEST_CASE("SgdOptimizer applies the step to every parameter and clears grads") {
  nn::Parameter a(3), b(2);
  a.value = {1.0f, 2.0f, 3.0f};
  b.value = {-1.0f, 0.5f};
  SgdOptimizer opt({&a, &b}, {0.1, 0.9, true, 0.0}, 0.5);

  std::array<float, 3> pa{1.0f, 2.0f, 3.0f}, va{};
  std::array<float, 2> pb{-1.0f, 0.5f}, vb{};
  for (int k = 0; k < 4; ++k) {
    a.grad = {0.5f, -1.0f, 0.25f};
    b.grad = {1.0f, 2.0f};
    const SgdHyperparams hp{decayed_learning_rate(0.1, 0.5, k), 0.9, true, 0.0};
    const std::array<float, 3> ga{0.5f, -1.0f, 0.25f};
    const std::array<float, 2> gb{1.0f, 2.0f};
    sgd_nesterov_step<float>(pa, ga, va, hp);
    sgd_nesterov_step<float>(pb, gb, vb, hp);
    opt.step();
    for (int i = 0; i < 3; ++i) CHECK(a.value[i] == pa[i]);
    for (int i = 0; i < 2; ++i) CHECK(b.value[i] == pb[i]);
    CHECK(a.grad[0] == 0.0f);
  }
  CHECK(opt.steps() == 4);
  CHECK(opt.current_learning_rate() == doctest::Approx(0.1 / 3.0));
}
