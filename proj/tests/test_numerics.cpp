#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <sstream>
#include <vector>

#include "hetgpt/adam.hpp"
#include "hetgpt/grad_check.hpp"
#include "hetgpt/tape.hpp"
#include "helpers.hpp"

using namespace hetgpt;
using hetgpt::testing::rand_tensor;

namespace {

// Builds loss = sum(R .* f(inputs)) so the check exercises the full Jacobian
// of the primitive under test, not just its row sums.
double weighted_loss(Tape& tape, Tape::Val out, const Tensor& weights) {
  Tape::Val w = tape.leaf(weights);
  Tape::Val loss = tape.reduce_sum(tape.elementwise_mul(out, w));
  return tape.value(loss)(0, 0);
}

using Builder = std::function<Tape::Val(Tape&, std::vector<Tape::Val>&)>;

// Runs finite_diff_check over a primitive expressed as a tape builder.
double primitive_max_rel_err(const Builder& build, std::vector<Param>& params,
                             const Tensor& weights) {
  std::vector<Param*> ptrs;
  for (auto& p : params) ptrs.push_back(&p);
  auto loss_fn = [&](bool with_grad) {
    Tape tape;
    std::vector<Tape::Val> ins;
    for (auto& p : params) ins.push_back(tape.param(p));
    Tape::Val out = build(tape, ins);
    Tape::Val w = tape.leaf(weights);
    Tape::Val loss = tape.reduce_sum(tape.elementwise_mul(out, w));
    if (with_grad) tape.backward(loss);
    return tape.value(loss)(0, 0);
  };
  return finite_diff_check(loss_fn, ptrs).max_rel_err();
}

}  // namespace

TEST_CASE("row_softmax of equal scores is uniform") {
  Tape tape;
  Tensor x(1, 2);
  x << 0.0, 0.0;
  Tape::Val y = tape.row_softmax(tape.leaf(x));
  CHECK(tape.value(y)(0, 0) == Catch::Approx(0.5));
  CHECK(tape.value(y)(0, 1) == Catch::Approx(0.5));
}

TEST_CASE("row_softmax rows sum to one and are strictly positive") {
  Rng rng(11);
  Tensor x = rand_tensor(7, 5, rng, 3.0);
  Tape tape;
  Tensor y = tape.value(tape.row_softmax(tape.leaf(x)));
  for (int r = 0; r < y.rows(); ++r) {
    CHECK(std::abs(y.row(r).sum() - 1.0) < 1e-12);
    for (int c = 0; c < y.cols(); ++c) CHECK(y(r, c) > 0.0);
  }
}

TEST_CASE("matmul by identity is identity") {
  Rng rng(5);
  Tensor x = rand_tensor(3, 4, rng);
  Tape tape;
  Tensor y = tape.value(tape.matmul(tape.leaf(Tensor::Identity(3, 3)), tape.leaf(x)));
  CHECK((y - x).norm() == 0.0);
}

TEST_CASE("leaky_relu value and gradient on the negative branch") {
  Param x(Tensor::Constant(1, 1, -1.0), "x");
  Tape tape;
  Tape::Val y = tape.leaky_relu(tape.param(x), 0.01);
  CHECK(tape.value(y)(0, 0) == Catch::Approx(-0.01));
  tape.backward(tape.reduce_sum(y));
  CHECK(x.grad(0, 0) == Catch::Approx(0.01));
}

TEST_CASE("l2_normalize_rows unit norms, zero row flagged") {
  Rng rng(3);
  Tensor x = rand_tensor(4, 6, rng);
  x.row(2).setZero();
  Tape tape;
  Tape::Val y = tape.l2_normalize_rows(tape.leaf(x));
  const Tensor& v = tape.value(y);
  CHECK(tape.had_zero_row(y));
  CHECK(v.row(2).norm() == 0.0);
  for (int r : {0, 1, 3}) CHECK(std::abs(v.row(r).norm() - 1.0) < 1e-12);
}

TEST_CASE("backward of sum(W x) broadcasts x") {
  Rng rng(7);
  Param w(rand_tensor(3, 4, rng), "w");
  Tensor x = rand_tensor(4, 1, rng);
  Tape tape;
  Tape::Val out = tape.reduce_sum(tape.matmul(tape.param(w), tape.leaf(x)));
  tape.backward(out);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) CHECK(w.grad(r, c) == Catch::Approx(x(c, 0)));
}

TEST_CASE("gradient of frobenius_norm_sq is 2Q") {
  Rng rng(9);
  Param q(rand_tensor(3, 5, rng), "q");
  Tape tape;
  tape.backward(tape.frobenius_norm_sq(tape.param(q)));
  CHECK((q.grad - 2.0 * q.value).norm() < 1e-14);
}

TEST_CASE("backward rejects non-scalar outputs") {
  Tape tape;
  Tape::Val x = tape.leaf(Tensor::Zero(2, 2));
  CHECK_THROWS_AS(tape.backward(x), DimensionError);
}

TEST_CASE("shape mismatch reports both shapes") {
  Tape tape;
  Tape::Val a = tape.leaf(Tensor::Zero(2, 3));
  Tape::Val b = tape.leaf(Tensor::Zero(4, 5));
  CHECK_THROWS_WITH(tape.matmul(a, b), Catch::Matchers::ContainsSubstring("2x3") &&
                                           Catch::Matchers::ContainsSubstring("4x5"));
}

TEST_CASE("non-finite results are rejected at op boundaries") {
  Tape tape;
  Tensor x(1, 1);
  x << 1e308;
  Tape::Val v = tape.leaf(x);
  CHECK_THROWS_AS(tape.elementwise_mul(v, v), NumericError);
}

TEST_CASE("every primitive's backward matches central differences") {
  Rng rng(42);
  const double tol = 1e-6;

  auto check = [&](const char* name, int out_rows, int out_cols, const Builder& build,
                   std::vector<Tensor> inits) {
    std::vector<Param> params;
    for (std::size_t i = 0; i < inits.size(); ++i)
      params.emplace_back(inits[i], std::string(name) + "_in" + std::to_string(i));
    Tensor weights = rand_tensor(out_rows, out_cols, rng);
    INFO(name);
    CHECK(primitive_max_rel_err(build, params, weights) < tol);
  };

  Tensor a35 = rand_tensor(3, 5, rng);
  Tensor b35 = rand_tensor(3, 5, rng);
  Tensor b54 = rand_tensor(5, 4, rng);

  check("matmul", 3, 4,
        [](Tape& t, std::vector<Tape::Val>& in) { return t.matmul(in[0], in[1]); },
        {a35, b54});
  check("transpose", 5, 3,
        [](Tape& t, std::vector<Tape::Val>& in) { return t.transpose(in[0]); }, {a35});
  check("add", 3, 5,
        [](Tape& t, std::vector<Tape::Val>& in) { return t.add(in[0], in[1]); },
        {a35, b35});
  check("scale", 3, 5,
        [](Tape& t, std::vector<Tape::Val>& in) { return t.scale(in[0], -2.5); }, {a35});
  check("add_row_broadcast", 3, 5,
        [](Tape& t, std::vector<Tape::Val>& in) { return t.add_row_broadcast(in[0], in[1]); },
        {a35, rand_tensor(1, 5, rng)});
  check("concat_cols", 3, 9,
        [](Tape& t, std::vector<Tape::Val>& in) { return t.concat_cols(in[0], in[1]); },
        {a35, rand_tensor(3, 4, rng)});
  check("concat_rows", 5, 5,
        [](Tape& t, std::vector<Tape::Val>& in) { return t.concat_rows(in[0], in[1]); },
        {a35, rand_tensor(2, 5, rng)});
  check("slice_rows", 2, 5,
        [](Tape& t, std::vector<Tape::Val>& in) { return t.slice_rows(in[0], 1, 2); },
        {a35});
  check("slice_cols", 3, 2,
        [](Tape& t, std::vector<Tape::Val>& in) { return t.slice_cols(in[0], 2, 2); },
        {a35});
  check("row_softmax", 3, 5,
        [](Tape& t, std::vector<Tape::Val>& in) { return t.row_softmax(in[0]); }, {a35});
  check("row_log_softmax", 3, 5,
        [](Tape& t, std::vector<Tape::Val>& in) { return t.row_log_softmax(in[0]); },
        {a35});
  check("leaky_relu", 3, 5,
        [](Tape& t, std::vector<Tape::Val>& in) { return t.leaky_relu(in[0], 0.01); },
        {a35});
  check("tanh", 3, 5,
        [](Tape& t, std::vector<Tape::Val>& in) { return t.tanh(in[0]); }, {a35});
  check("elementwise_mul", 3, 5,
        [](Tape& t, std::vector<Tape::Val>& in) { return t.elementwise_mul(in[0], in[1]); },
        {a35, b35});
  check("mul_scalar", 3, 5,
        [](Tape& t, std::vector<Tape::Val>& in) { return t.mul_scalar(in[0], in[1]); },
        {a35, rand_tensor(1, 1, rng)});
  check("scale_rows", 3, 5,
        [](Tape& t, std::vector<Tape::Val>& in) { return t.scale_rows(in[0], in[1]); },
        {a35, rand_tensor(3, 1, rng)});
  check("reduce_mean_rows", 1, 5,
        [](Tape& t, std::vector<Tape::Val>& in) { return t.reduce_mean_rows(in[0]); },
        {a35});
  check("reduce_sum", 1, 1,
        [](Tape& t, std::vector<Tape::Val>& in) { return t.reduce_sum(in[0]); }, {a35});
  check("l2_normalize_rows", 3, 5,
        [](Tape& t, std::vector<Tape::Val>& in) { return t.l2_normalize_rows(in[0]); },
        {a35});
  check("frobenius_norm_sq", 1, 1,
        [](Tape& t, std::vector<Tape::Val>& in) { return t.frobenius_norm_sq(in[0]); },
        {a35});
  check("gather_rows", 6, 5,
        [](Tape& t, std::vector<Tape::Val>& in) {
          return t.gather_rows(in[0], {0, 2, 1, 2, 0, 2});
        },
        {a35});
  check("select_cols", 3, 1,
        [](Tape& t, std::vector<Tape::Val>& in) {
          return t.select_cols(in[0], {4, 0, 2});
        },
        {a35});

  auto seg = std::make_shared<Segments>(Segments{{0, 3, 3, 7}});
  check("segment_softmax", 7, 1,
        [&](Tape& t, std::vector<Tape::Val>& in) { return t.segment_softmax(in[0], seg); },
        {rand_tensor(7, 1, rng)});
  check("segment_sum", 3, 5,
        [&](Tape& t, std::vector<Tape::Val>& in) { return t.segment_sum(in[0], seg); },
        {rand_tensor(7, 5, rng)});
}

TEST_CASE("composed graphs of primitives match central differences") {
  Rng rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    Param w1(rand_tensor(3, 3, rng), "w1");
    Param w2(rand_tensor(3, 3, rng), "w2");
    std::vector<Param*> params{&w1, &w2};
    auto loss_fn = [&](bool with_grad) {
      Tape tape;
      Tape::Val a = tape.param(w1);
      Tape::Val b = tape.param(w2);
      Tape::Val h = tape.leaky_relu(tape.matmul(a, b), 0.01);
      Tape::Val s = tape.row_softmax(tape.tanh(h));
      Tape::Val loss = tape.frobenius_norm_sq(s);
      if (with_grad) tape.backward(loss);
      return tape.value(loss)(0, 0);
    };
    CHECK(finite_diff_check(loss_fn, params).max_rel_err() < 1e-6);
  }
}

TEST_CASE("tape replay is deterministic") {
  Rng rng(77);
  Tensor x = rand_tensor(4, 4, rng);
  auto run = [&]() {
    Tape tape;
    Tape::Val v = tape.row_softmax(tape.matmul(tape.leaf(x), tape.leaf(x)));
    return Tensor(tape.value(v));
  };
  Tensor first = run();
  Tensor second = run();
  REQUIRE(first.rows() == second.rows());
  CHECK(std::memcmp(first.data(), second.data(),
                    sizeof(double) * static_cast<std::size_t>(first.size())) == 0);
}

TEST_CASE("finite_diff_check on a quadratic loss is near-exact") {
  Rng rng(8);
  Param w(rand_tensor(3, 3, rng), "w");
  std::vector<Param*> params{&w};
  auto loss_fn = [&](bool with_grad) {
    Tape tape;
    Tape::Val loss = tape.scale(tape.frobenius_norm_sq(tape.param(w)), 0.5);
    if (with_grad) tape.backward(loss);
    return tape.value(loss)(0, 0);
  };
  CHECK(finite_diff_check(loss_fn, params).max_rel_err() < 1e-9);
}

TEST_CASE("constant loss yields zero analytic gradients") {
  Rng rng(15);
  Param w(rand_tensor(2, 2, rng), "w");
  std::vector<Param*> params{&w};
  auto loss_fn = [&](bool with_grad) {
    Tape tape;
    tape.param(w);
    Tape::Val loss = tape.leaf(Tensor::Constant(1, 1, 3.0));
    if (with_grad) tape.backward(loss);
    return tape.value(loss)(0, 0);
  };
  loss_fn(true);
  CHECK(w.grad.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("adam first step moves by about -lr * sign(g)") {
  Rng rng(21);
  Param w(rand_tensor(2, 3, rng), "w");
  Tensor before = w.value;
  w.grad = rand_tensor(2, 3, rng);
  std::vector<Param*> params{&w};
  AdamState state;
  state.init(params);
  const double lr = 0.05;
  adam_step(params, state, lr);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) {
      double moved = w.value(r, c) - before(r, c);
      double expect = -lr * (w.grad(r, c) > 0 ? 1.0 : -1.0);
      CHECK(moved == Catch::Approx(expect).margin(1e-6));
    }
}

TEST_CASE("adam with zero gradient leaves params unchanged") {
  Param w(Tensor::Constant(2, 2, 1.5), "w");
  std::vector<Param*> params{&w};
  AdamState state;
  state.init(params);
  adam_step(params, state, 0.1);
  CHECK((w.value.array() == 1.5).all());
}

TEST_CASE("adam on f(w) = w^2 matches a scalar simulation and converges") {
  // Independent scalar Adam, written directly from the update equations.
  double w = 1.0, m = 0.0, v = 0.0;
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 100; ++t) {
    double g = 2.0 * w;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    double mh = m / (1 - std::pow(b1, t));
    double vh = v / (1 - std::pow(b2, t));
    w -= lr * mh / (std::sqrt(vh) + eps);
  }
  REQUIRE(std::abs(w) < 0.1);

  Param p(Tensor::Constant(1, 1, 1.0), "w");
  std::vector<Param*> params{&p};
  AdamState state;
  state.init(params);
  for (int t = 0; t < 100; ++t) {
    p.zero_grad();
    Tape tape;
    Tape::Val x = tape.param(p);
    tape.backward(tape.frobenius_norm_sq(x));
    adam_step(params, state, lr);
  }
  CHECK(p.value(0, 0) == Catch::Approx(w).margin(1e-12));
  CHECK(std::abs(p.value(0, 0)) < 0.1);
}

TEST_CASE("adam aborts on non-finite gradients") {
  Param w(Tensor::Constant(1, 1, 1.0), "w");
  w.grad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  std::vector<Param*> params{&w};
  AdamState state;
  state.init(params);
  CHECK_THROWS_AS(adam_step(params, state, 0.1), NumericError);
}

TEST_CASE("frozen params receive no gradient but pass values through") {
  Rng rng(33);
  Param frozen(rand_tensor(2, 2, rng), "frozen", false);
  Param live(rand_tensor(2, 2, rng), "live");
  Tape tape;
  Tape::Val f = tape.param(frozen);
  Tape::Val l = tape.param(live);
  tape.backward(tape.frobenius_norm_sq(tape.matmul(f, l)));
  CHECK(frozen.grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK(live.grad.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("tape dump lists recorded operations") {
  Tape tape;
  Param w(Tensor::Identity(2, 2), "weights");
  tape.matmul(tape.param(w), tape.leaf(Tensor::Identity(2, 2)));
  std::ostringstream os;
  tape.dump(os);
  CHECK(os.str().find("matmul") != std::string::npos);
  CHECK(os.str().find("weights") != std::string::npos);
}
