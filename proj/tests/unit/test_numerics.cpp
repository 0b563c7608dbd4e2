#include <doctest.h>

#include <cmath>
#include <string>

#include "nbt/graph.hpp"
#include "nbt/rng.hpp"

using namespace nbt::num;

namespace {

Parameter make_param(std::string name, std::vector<std::size_t> shape, std::uint64_t seed,
                     std::size_t id) {
  Parameter p{std::move(name), Tensor(std::move(shape)), id};
  nbt::Rng rng(seed);
  for (double& v : p.value.data()) v = rng.uniform(-1.0, 1.0);
  return p;
}

}  // namespace

TEST_CASE("primitive forward values") {
  Graph g;
  const auto sm = g.value(g.softmax(g.constant(Tensor::vector({0.0, 0.0}))));
  CHECK(sm[0] == 0.5);
  CHECK(sm[1] == 0.5);
  CHECK(g.scalar(g.sum(g.sigmoid(g.constant(Tensor::vector({0.0}))))) == 0.5);
  CHECK(g.scalar(g.sum(g.tanh(g.constant(Tensor::vector({0.0}))))) == 0.0);
  const auto eye = g.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  const auto x = g.constant(Tensor::vector({3.0, -4.0}));
  const auto y = g.value(g.matmul(eye, x));
  CHECK(y.values() == std::vector<double>{3.0, -4.0});
  CHECK(g.scalar(g.log(g.constant(Tensor::vector({0.0})))) == doctest::Approx(std::log(1e-12)));
}

TEST_CASE("softmax is stable for large logits") {
  Graph g;
  const auto sm = g.value(g.softmax(g.constant(Tensor::vector({1000.0, 1000.0, -1000.0}))));
  CHECK(sm[0] == doctest::Approx(0.5));
  CHECK(sm[2] == doctest::Approx(0.0));
  CHECK(sm.all_finite());
}

TEST_CASE("analytic gradients of simple roots") {
  Parameter w{"w", Tensor::vector({1.0, 2.0, 3.0}), 0};
  Parameter unused{"unused", Tensor::vector({5.0}), 1};
  const std::vector<Parameter> params{w, unused};
  Gradients grads(params);

  SUBCASE("sum gives ones") {
    Graph g;
    g.backward(g.sum(g.param(params[0])), grads);
    CHECK(grads[0].values() == std::vector<double>{1.0, 1.0, 1.0});
    CHECK(grads[1].values() == std::vector<double>{0.0});
  }
  SUBCASE("cross-entropy gives p minus onehot") {
    Graph g;
    const auto p = g.softmax(g.param(params[0]));
    const auto onehot = g.constant(Tensor::vector({0.0, 1.0, 0.0}));
    const auto loss = g.scale(g.log(g.dot(p, onehot)), -1.0);
    g.backward(loss, grads);
    const auto& probs = g.value(p);
    CHECK(grads[0][0] == doctest::Approx(probs[0]).epsilon(1e-12));
    CHECK(grads[0][1] == doctest::Approx(probs[1] - 1.0).epsilon(1e-12));
    CHECK(grads[0][2] == doctest::Approx(probs[2]).epsilon(1e-12));
  }
  SUBCASE("non-scalar root throws") {
    Graph g;
    CHECK_THROWS(g.backward(g.param(params[0]), grads));
  }
}

TEST_CASE("shape errors name the operation") {
  Graph g;
  const auto a = g.constant(Tensor::vector({1.0, 2.0}));
  const auto b = g.constant(Tensor::vector({1.0, 2.0, 3.0}));
  try {
    g.add(a, b);
    FAIL("expected a shape error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("add") != std::string::npos);
  }
  CHECK_THROWS(g.matmul(g.constant(Tensor::matrix(2, 3, std::vector<double>(6, 1.0))), a));
  CHECK_THROWS(g.slice(a, 1, 2));
}

TEST_CASE("grad check on a quadratic") {
  std::vector<Parameter> params{make_param("x", {4}, 1, 0)};
  auto loss = [&](Graph& g) {
    const auto x = g.param(params[0]);
    return g.dot(x, x);
  };
  const auto report = grad_check(loss, params, 1e-5);
  CHECK(report.max_relative_error < 1e-6);
  CHECK(report.checked == 4);
}

TEST_CASE("grad check on a constant loss reports zero error") {
  std::vector<Parameter> params{make_param("x", {3}, 2, 0)};
  auto loss = [&](Graph& g) {
    g.param(params[0]);
    return g.sum(g.constant(Tensor::vector({2.0})));
  };
  CHECK(grad_check(loss, params).max_relative_error == 0.0);
}

TEST_CASE("grad check of every primitive") {
  std::vector<Parameter> params{make_param("a", {3, 4}, 3, 0), make_param("b", {4}, 4, 1),
                                make_param("c", {3}, 5, 2), make_param("table", {5, 3}, 6, 3)};
  const std::vector<std::pair<std::string, std::function<Var(Graph&)>>> cases{
      {"matmul+tanh", [&](Graph& g) { return g.sum(g.tanh(g.matmul(g.param(params[0]), g.param(params[1])))); }},
      {"sigmoid*mul", [&](Graph& g) {
         const auto c = g.param(params[2]);
         return g.sum(g.mul(g.sigmoid(c), c));
       }},
      {"relu", [&](Graph& g) { return g.sum(g.relu(g.scale(g.param(params[1]), 1.7))); }},
      {"softmax+log", [&](Graph& g) {
         const auto p = g.softmax(g.matmul(g.param(params[0]), g.param(params[1])));
         return g.log(g.dot(p, g.param(params[2])));
       }},
      {"concat+slice", [&](Graph& g) {
         const std::array<Var, 2> parts{g.param(params[1]), g.param(params[2])};
         const auto s = g.slice(g.concat(parts), 2, 4);
         return g.dot(s, g.tanh(s));
       }},
      {"lookup+weighted_sum", [&](Graph& g) {
         const std::array<Var, 3> rows{g.lookup(params[3], 0), g.lookup(params[3], 2),
                                       g.lookup(params[3], 4)};
         const auto w = g.softmax(g.param(params[2]));
         return g.sum(g.tanh(g.weighted_sum(w, rows)));
       }},
      {"matrix product", [&](Graph& g) {
         const auto m = g.matmul(g.param(params[3]), g.param(params[0]));
         return g.sum(g.tanh(m));
       }},
  };
  for (const auto& [name, fn] : cases) {
    CAPTURE(name);
    const auto report = grad_check(fn, params, 1e-6);
    CHECK(report.max_relative_error < 1e-6);
  }
}

TEST_CASE("grad check leaves parameters unchanged") {
  std::vector<Parameter> params{make_param("x", {5}, 9, 0)};
  const auto before = params[0].value.values();
  grad_check([&](Graph& g) { return g.sum(g.tanh(g.param(params[0]))); }, params);
  CHECK(params[0].value.values() == before);
}

TEST_CASE("gradients buffer arithmetic") {
  std::vector<Parameter> params{Parameter{"a", Tensor::vector({0.0, 0.0}), 0}};
  Gradients a(params), b(params);
  a[0][0] = 3.0;
  b[0][1] = 4.0;
  a.add(b);
  CHECK(a.l2_norm() == doctest::Approx(5.0));
  a.scale(2.0);
  CHECK(a[0][1] == 8.0);
  a.zero();
  CHECK(a.l2_norm() == 0.0);
}
