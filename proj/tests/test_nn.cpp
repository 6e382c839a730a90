#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "mesr/nn.hpp"

using namespace mesr::nn;

namespace {

struct CheckResult {
  double max_rel = 0.0;
  std::size_t compared = 0;
};

double rel_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale < 1e-7 ? std::abs(a - b) / 1e-7 : std::abs(a - b) / scale;
}

// Loss = sum(weights .* output); compares analytic and central-difference gradients.
CheckResult gradient_check(Mlp& net, const Matrix& x, const Matrix& weights, double h = 1e-5) {
  Tape tape;
  net.forward(x, tape);
  const Gradients g = net.backward(tape, weights);
  auto loss = [&] { return (net.forward(x).array() * weights.array()).sum(); };
  CheckResult r;
  Vector& p = net.parameters();
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + h;
    const double up = loss();
    p[i] = saved - h;
    const double down = loss();
    p[i] = saved;
    r.max_rel = std::max(r.max_rel, rel_error(g.params[i], (up - down) / (2 * h)));
    ++r.compared;
  }
  return r;
}

}  // namespace

TEST_CASE("forward basics") {
  SUBCASE("zero network outputs zero") {
    Mlp net({3, 5, 2}, OutputActivation::identity);
    CHECK(net.forward(std::vector<double>{1.0, -2.0, 3.0}).isZero(0.0));
  }
  SUBCASE("ReLU on an identity layer") {
    Mlp net({2, 2, 2}, OutputActivation::identity);
    auto& p = net.parameters();
    // Layer 0: identity weights; layer 1: identity weights.
    p.setZero();
    p[0] = 1.0;
    p[3] = 1.0;
    p[6] = 1.0;
    p[9] = 1.0;
    const Vector y = net.forward(std::vector<double>{-1.0, 2.0});
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 2.0);
  }
  SUBCASE("dimension mismatch") {
    Mlp net({3, 4, 1}, OutputActivation::identity);
    CHECK_THROWS_AS(net.forward(std::vector<double>{1.0}), std::invalid_argument);
  }
  SUBCASE("forward is pure") {
    std::mt19937_64 rng(5);
    Mlp net({4, 16, 16, 2}, OutputActivation::tanh, rng);
    const Matrix x = Matrix::Random(4, 7);
    CHECK(net.forward(x) == net.forward(x));
  }
}

TEST_CASE("seeded network matches its golden output") {
  std::mt19937_64 rng(2024);
  Mlp net({4, 8, 8, 3}, OutputActivation::tanh, rng);
  const Vector y = net.forward(std::vector<double>{0.1, -0.4, 0.7, 1.3});
  std::ifstream in(std::string(MESR_TEST_DATA_DIR) + "/mlp_golden.txt");
  REQUIRE(in);
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    std::string hex;
    REQUIRE(static_cast<bool>(in >> hex));
    CHECK(y[i] == std::strtod(hex.c_str(), nullptr));
  }
}

TEST_CASE("initialization stays inside the fan-in bound") {
  std::mt19937_64 rng(1);
  Mlp net({9, 32, 1}, OutputActivation::identity, rng);
  const double bound_first = 1.0 / 3.0;
  CHECK(net.parameters().head(9 * 32 + 32).cwiseAbs().maxCoeff() <= bound_first);
}

TEST_CASE("backward") {
  std::mt19937_64 rng(3);
  SUBCASE("without a recorded pass") {
    Mlp net({2, 3, 1}, OutputActivation::identity, rng);
    Tape empty;
    CHECK_THROWS_AS(net.backward(empty, Matrix::Ones(1, 1)), std::logic_error);
  }
  SUBCASE("constant loss gives zero gradients") {
    Mlp net({2, 3, 1}, OutputActivation::identity, rng);
    Tape tape;
    net.forward(Matrix::Random(2, 4), tape);
    CHECK(net.backward(tape, Matrix::Zero(1, 4)).params.isZero(0.0));
  }
  SUBCASE("finite differences on a two-layer net") {
    Mlp net({3, 6, 2}, OutputActivation::identity, rng);
    const auto r = gradient_check(net, Matrix::Random(3, 5), Matrix::Random(2, 5));
    CHECK(r.max_rel < 1e-4);
  }
  SUBCASE("finite differences over random architectures") {
    std::uniform_int_distribution<int> width(1, 12);
    std::uniform_int_distribution<int> depth(1, 3);
    for (int trial = 0; trial < 8; ++trial) {
      std::vector<int> sizes{width(rng)};
      for (int l = 0, d = depth(rng); l < d; ++l) {
        sizes.push_back(width(rng));
      }
      sizes.push_back(width(rng));
      const auto act = trial % 2 ? OutputActivation::tanh : OutputActivation::identity;
      Mlp net(sizes, act, rng);
      const auto r = gradient_check(net, Matrix::Random(sizes.front(), 4),
                                    Matrix::Random(sizes.back(), 4));
      CHECK(r.max_rel < 1e-4);
    }
  }
  SUBCASE("input gradient") {
    Mlp net({3, 5, 1}, OutputActivation::tanh, rng);
    Matrix x = Matrix::Random(3, 1);
    Tape tape;
    net.forward(x, tape);
    const Matrix gx = net.backward(tape, Matrix::Ones(1, 1)).input;
    for (int i = 0; i < 3; ++i) {
      Matrix up = x, down = x;
      up(i, 0) += 1e-6;
      down(i, 0) -= 1e-6;
      const double fd = (net.forward(up)(0, 0) - net.forward(down)(0, 0)) / 2e-6;
      CHECK(gx(i, 0) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
  SUBCASE("saturated tanh blocks the gradient") {
    Mlp net({1, 1}, OutputActivation::tanh);
    net.parameters() << 1.0, 0.0;
    Tape tape;
    net.forward(Matrix::Constant(1, 1, 40.0), tape);
    CHECK(net.backward(tape, Matrix::Ones(1, 1)).params.cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("single-precision passes track double precision") {
  std::mt19937_64 rng(77);
  Mlp net({6, 32, 32, 3}, OutputActivation::tanh, rng);
  Mlp single = net;
  single.set_precision(Precision::float32);
  const Matrix x = Matrix::Random(6, 16);
  const Matrix w = Matrix::Random(3, 16);
  Tape t64, t32;
  const Matrix y64 = net.forward(x, t64);
  const Matrix y32 = single.forward(x, t32);
  CHECK(t32.inputs.empty());
  CHECK((y64 - y32).cwiseAbs().maxCoeff() < 1e-5);
  const Gradients g64 = net.backward(t64, w);
  const Gradients g32 = single.backward(t32, w);
  CHECK((g64.params - g32.params).cwiseAbs().maxCoeff() < 1e-4 * g64.params.cwiseAbs().maxCoeff());
  CHECK((g64.input - g32.input).cwiseAbs().maxCoeff() < 1e-4 * g64.input.cwiseAbs().maxCoeff());
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Vector p = Vector::Constant(3, 2.0);
    AdamState s(3, 0.1);
    adam_step(p, Vector::Zero(3), s);
    CHECK(p == Vector::Constant(3, 2.0));
    CHECK(s.step == 1);
  }
  SUBCASE("first step moves by the learning rate") {
    Vector p = Vector::Zero(1);
    AdamState s(1, 0.1);
    adam_step(p, Vector::Ones(1), s);
    CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-6));
  }
  SUBCASE("minimizes a quadratic") {
    Vector w = Vector::Constant(1, 5.0);
    AdamState s(1, 0.1);
    for (int i = 0; i < 1000; ++i) {
      adam_step(w, 2.0 * w, s);
    }
    CHECK(std::abs(w[0]) < 0.1);
  }
  SUBCASE("rejects NaN and mismatched shapes") {
    Vector p = Vector::Zero(2);
    AdamState s(2, 0.1);
    Vector g(2);
    g << 1.0, std::nan("");
    CHECK_THROWS_AS(adam_step(p, g, s), std::domain_error);
    CHECK_THROWS_AS(adam_step(p, Vector::Zero(3), s), std::invalid_argument);
  }
}

TEST_CASE("polyak_update") {
  Vector online = Vector::Ones(4);
  SUBCASE("tau = 1 copies") {
    Vector target = Vector::Random(4);
    polyak_update(target, online, 1.0);
    CHECK(target == online);
  }
  SUBCASE("tau = 0 keeps") {
    Vector target = Vector::Random(4);
    const Vector before = target;
    polyak_update(target, online, 0.0);
    CHECK(target == before);
  }
  SUBCASE("element-wise average") {
    Vector target = Vector::Zero(4);
    polyak_update(target, online, 0.005);
    for (Eigen::Index i = 0; i < 4; ++i) {
      CHECK(target[i] == 0.005);
    }
  }
  SUBCASE("contraction toward the online parameters") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 1.0);
    Vector a(50), b(50);
    for (Eigen::Index i = 0; i < 50; ++i) {
      a[i] = n(rng);
      b[i] = n(rng);
    }
    const double before = (a - b).norm();
    polyak_update(a, b, 0.25);
    CHECK((a - b).norm() == doctest::Approx(0.75 * before).epsilon(1e-12));
  }
  SUBCASE("invalid arguments") {
    Vector target = Vector::Zero(3);
    CHECK_THROWS_AS(polyak_update(target, online, 0.5), std::invalid_argument);
    Vector t4 = Vector::Zero(4);
    CHECK_THROWS_AS(polyak_update(t4, online, 1.5), std::invalid_argument);
  }
}
