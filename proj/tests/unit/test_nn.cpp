#include <doctest.h>

#include <cmath>

#include "../support/oracles.hpp"
#include "mpgnn/errors.hpp"
#include "mpgnn/nn.hpp"

using namespace mpgnn;


TEST_CASE("mlp forward: zero parameters give zero output") {
  ParamSet ps;
  Mlp mlp(ps, "m", {4, 5, 3}, Activation::None);
  Rng rng(1);
  const Matrix x = oracle::random_stochastic(rng, 6, 4);
  CHECK(mlp.forward(ps, x).isZero(0.0));
}

TEST_CASE("mlp forward: identity single layer passes input through") {
  ParamSet ps;
  Mlp mlp(ps, "m", {3, 3}, Activation::None);
  ps[mlp.weight_index(0)].value = Matrix::Identity(3, 3);
  Matrix x(2, 3);
  x << 1, -2, 3, 0.5, 0, -1;
  CHECK(mlp.forward(ps, x) == x);
}

TEST_CASE("mlp forward matches straight-line recomputation") {
  for (auto act : {Activation::None, Activation::Softmax, Activation::Sigmoid}) {
    ParamSet ps;
    Mlp mlp(ps, "m", {5, 7, 4}, act);
    ps.init(3);
    for (auto& p : ps) p.value.array() += 0.1;  // nonzero biases too
    Rng rng(2);
    Matrix x = Matrix::Random(9, 5);
    const Matrix got = mlp.forward(ps, x);
    const Matrix want = oracle::reference_mlp(ps, mlp, x);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("mlp rejects width mismatch and backward without forward") {
  ParamSet ps;
  Mlp mlp(ps, "m", {3, 2}, Activation::None);
  CHECK_THROWS_AS(mlp.forward(ps, Matrix::Zero(2, 4)), ContractViolation);
  MlpCache empty;
  CHECK_THROWS_AS(mlp.backward(ps, empty, Matrix::Zero(2, 2)), StateError);
}

TEST_CASE("backward: sum of outputs of a linear layer on ones gives all-ones gradient") {
  ParamSet ps;
  Mlp mlp(ps, "m", {3, 2}, Activation::None);
  ps.init(5);
  MlpCache cache;
  const Matrix y = mlp.forward(ps, Matrix::Ones(1, 3), cache);
  mlp.backward(ps, cache, Matrix::Ones(y.rows(), y.cols()));
  CHECK(ps[mlp.weight_index(0)].grad == Matrix::Ones(3, 2));
  CHECK(ps[mlp.bias_index(0)].grad == Matrix::Ones(1, 2));
}

TEST_CASE("backward: half squared norm gives the weights back") {
  ParamSet ps;
  Mlp mlp(ps, "m", {4, 4}, Activation::None);
  ps.init(6);
  MlpCache cache;
  const Matrix y = mlp.forward(ps, Matrix::Identity(4, 4), cache);  // y = W
  mlp.backward(ps, cache, y);                                       // dL/dy = y
  CHECK((ps[mlp.weight_index(0)].grad - ps[mlp.weight_index(0)].value).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("mlp gradients match central differences") {
  for (auto act : {Activation::None, Activation::Softmax, Activation::Sigmoid}) {
    ParamSet ps;
    Mlp mlp(ps, "m", {3, 6, 5, 2}, act);
    ps.init(11);
    for (auto& p : ps) p.value.array() += 0.05;
    Rng rng(4);
    const Matrix x = Matrix::Random(4, 3);
    const Matrix target = Matrix::Random(4, 2);
    auto loss_of = [&](const Matrix& out) { return 0.5 * (out - target).squaredNorm(); };

    MlpCache cache;
    ps.zero_grad();
    const Matrix out = mlp.forward(ps, x, cache);
    const Matrix dx = mlp.backward(ps, cache, out - target);

    for (std::size_t i = 0; i < ps.size(); ++i) {
      const Matrix num = oracle::numeric_gradient(
          [&](const Matrix& w) {
            ParamSet copy = ps;
            copy[i].value = w;
            return loss_of(mlp.forward(copy, x));
          },
          ps[i].value);
      for (Eigen::Index j = 0; j < num.size(); ++j)
        CHECK(oracle::rel_error(ps[i].grad.data()[j], num.data()[j], 1e-6) < 1e-4);
    }
    const Matrix num_x =
        oracle::numeric_gradient([&](const Matrix& xx) { return loss_of(mlp.forward(ps, xx)); }, x);
    for (Eigen::Index j = 0; j < num_x.size(); ++j)
      CHECK(oracle::rel_error(dx.data()[j], num_x.data()[j], 1e-6) < 1e-4);
  }
}

TEST_CASE("softmax rows are stochastic") {
  Matrix z = Matrix::Random(20, 5) * 50.0;
  softmax_rows(z);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    CHECK(std::abs(z.row(r).sum() - 1.0) < 1e-6);
    CHECK(z.row(r).minCoeff() >= 0.0);
  }
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  ParamSet ps;
  Mlp mlp(ps, "m", {3, 4}, Activation::None);
  ps.init(1);
  const ParamSet before = ps;
  Adam opt(ps, {});
  for (int i = 0; i < 5; ++i) opt.step(ps);
  CHECK(ps == before);
}

TEST_CASE("adam: constant gradient moves against its sign and zeroes gradients") {
  ParamSet ps;
  ps.add("w.W", 1, 2);
  Adam opt(ps, {});
  for (int i = 0; i < 10; ++i) {
    ps[0].grad << 2.0, -3.0;
    opt.step(ps);
    CHECK(ps[0].grad.isZero(0.0));
  }
  CHECK(ps[0].value(0, 0) < 0.0);
  CHECK(ps[0].value(0, 1) > 0.0);
  CHECK(opt.step_count() == 10);
}

TEST_CASE("adam: quadratic bowl decreases monotonically for 100 steps") {
  ParamSet ps;
  Mlp mlp(ps, "m", {3, 3}, Activation::None);
  ps.init(2);
  const Matrix target = Matrix::Constant(3, 3, 0.7);
  Adam opt(ps, AdamConfig{1e-2});
  double last = 1e300;
  for (int step = 0; step < 100; ++step) {
    MlpCache cache;
    const Matrix y = mlp.forward(ps, Matrix::Identity(3, 3), cache);
    const double loss = 0.5 * (y - target).squaredNorm();
    CHECK(loss < last);
    last = loss;
    mlp.backward(ps, cache, y - target);
    opt.step(ps);
  }
}

TEST_CASE("init is deterministic, seed dependent and fan-in bounded") {
  auto make = [](std::uint64_t seed) {
    ParamSet ps;
    Mlp a(ps, "a", {6, 32, 1}, Activation::Sigmoid);
    Mlp b(ps, "b", {44, 64, 32}, Activation::None);
    ps.init(seed);
    return ps;
  };
  CHECK(make(1) == make(1));
  CHECK_FALSE(make(1) == make(2));
  for (const auto& p : make(3)) {
    if (p.name.ends_with(".W")) {
      CHECK(p.value.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / p.value.rows()));
      CHECK(p.value.cwiseAbs().maxCoeff() > 0.0);
    } else {
      CHECK(p.value.isZero(0.0));
    }
    CHECK(p.grad.rows() == p.value.rows());
    CHECK(p.grad.cols() == p.value.cols());
  }
}

TEST_CASE("parameter and optimizer json round trip") {
  ParamSet ps;
  Mlp mlp(ps, "m", {3, 4, 2}, Activation::Softmax);
  ps.init(9);
  ParamSet other;
  Mlp mlp2(other, "m", {3, 4, 2}, Activation::Softmax);
  params_from_json(params_to_json(ps), other);
  CHECK(other == ps);

  Adam opt(ps, {});
  for (auto& p : ps) p.grad.setOnes();
  opt.step(ps);
  const Adam back = Adam::from_json(opt.to_json(), ps);
  CHECK(back.to_json() == opt.to_json());

  ParamSet wrong;
  Mlp mlp3(wrong, "m", {3, 5, 2}, Activation::Softmax);
  CHECK_THROWS_AS(params_from_json(params_to_json(ps), wrong), ContractViolation);
  CHECK_THROWS_AS(Adam::from_json(opt.to_json(), wrong), ContractViolation);
}
