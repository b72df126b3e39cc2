#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "poselift/adadelta.hpp"
#include "poselift/gradcheck.hpp"
#include "poselift/ops.hpp"
#include "poselift/tensor.hpp"

using namespace poselift;
using namespace poselift::gradcore;

namespace {

Tensor rand_var(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  return Tensor::variable(shape, oracles::random_vector(rng, numel(shape), lo, hi));
}

}  // namespace

TEST_SUITE_BEGIN("gradcore");

TEST_CASE("relu forward sign cases") {
  Tensor x = Tensor::constant({3}, {-1, 0, 2});
  Tensor y = relu(x);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 2.0);
}

TEST_CASE("relu analytic gradient of sum") {
  Tensor x = Tensor::variable({2}, {2, -3});
  GradientMap g = backward(sum(relu(x)));
  const auto& gx = g.at(x);
  CHECK(gx[0] == 1.0);
  CHECK(gx[1] == 0.0);
}

TEST_CASE("relu gradient matches central differences") {
  Rng rng(7);
  // Keep values away from the kink so the finite difference is clean.
  std::vector<double> vals = oracles::random_vector(rng, 16, 0.1, 1.0);
  for (std::size_t i = 0; i < vals.size(); i += 2) vals[i] = -vals[i];
  Tensor x = Tensor::constant({4, 4}, vals);
  auto report = grad_check(
      [](const std::vector<Tensor>& in) { return sum(relu(in[0])); }, {x});
  CHECK(report.max_rel_err() < 1e-4);
}

TEST_CASE("linear identity input") {
  Tensor x = Tensor::constant({2, 2}, {1, 0, 0, 1});
  Tensor w = Tensor::constant({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::constant({2}, {0, 0});
  Tensor y = linear(x, w, b);
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 2.0);
  CHECK(y[2] == 3.0);
  CHECK(y[3] == 4.0);
}

TEST_CASE("linear bias only") {
  Tensor x = Tensor::zeros({3, 2});
  Tensor w = Tensor::constant({2, 2}, {5, 6, 7, 8});
  Tensor b = Tensor::constant({2}, {-1, 2});
  Tensor y = linear(x, w, b);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(y[r * 2 + 0] == -1.0);
    CHECK(y[r * 2 + 1] == 2.0);
  }
}

TEST_CASE("linear matches triple-loop oracle") {
  Rng rng(11);
  auto xv = oracles::random_vector(rng, 15);
  auto wv = oracles::random_vector(rng, 10);
  auto bv = oracles::random_vector(rng, 2);
  Tensor y = linear(Tensor::constant({3, 5}, xv), Tensor::constant({5, 2}, wv),
                    Tensor::constant({2}, bv));
  auto ref = oracles::matmul_bias(xv, wv, bv, 3, 5, 2);
  for (std::size_t i = 0; i < ref.size(); ++i)
    CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("linear rejects mismatched inner extents") {
  Tensor x = Tensor::zeros({2, 3});
  Tensor w = Tensor::zeros({4, 2});
  Tensor b = Tensor::zeros({2});
  CHECK_THROWS_AS(linear(x, w, b), ShapeMismatch);
}

TEST_CASE("linear gradients match finite differences") {
  Rng rng(13);
  Tensor x = rand_var(rng, {3, 5});
  Tensor w = rand_var(rng, {5, 2});
  Tensor b = rand_var(rng, {2});
  Tensor t = Tensor::constant({3, 2}, oracles::random_vector(rng, 6));
  auto report = grad_check(
      [&](const std::vector<Tensor>& in) {
        return mse(linear(in[0], in[1], in[2]), t);
      },
      {x, w, b}, 1e-5, {"x", "w", "b"});
  CHECK(report.max_rel_err() < 1e-4);
}

TEST_CASE("conv2d identity kernel") {
  Rng rng(17);
  auto xv = oracles::random_vector(rng, 9);
  Tensor x = Tensor::constant({1, 1, 3, 3}, xv);
  Tensor k = Tensor::constant({1, 1, 1, 1}, {1.0});
  Tensor y = conv2d(x, k, 1, 0);
  REQUIRE(y.shape() == Shape{1, 1, 3, 3});
  for (std::size_t i = 0; i < 9; ++i) CHECK(y[i] == xv[i]);
}

TEST_CASE("conv2d counting case") {
  Tensor x = Tensor::full({1, 1, 4, 4}, 1.0);
  Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor y = conv2d(x, k, 1, 0);
  REQUIRE(y.shape() == Shape{1, 1, 2, 2});
  for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == 9.0);
}

TEST_CASE("conv2d matches direct summation and finite differences") {
  Rng rng(19);
  auto xv = oracles::random_vector(rng, 2 * 3 * 8 * 8);
  auto kv = oracles::random_vector(rng, 4 * 3 * 3 * 3);
  Tensor x = Tensor::constant({2, 3, 8, 8}, xv);
  Tensor k = Tensor::constant({4, 3, 3, 3}, kv);
  Tensor y = conv2d(x, k, 2, 1);
  auto ref = oracles::conv2d_direct(xv, kv, 2, 3, 8, 8, 4, 3, 3, 2, 1);
  REQUIRE(y.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i)
    CHECK(std::fabs(y[i] - ref[i]) < 1e-12);

  // Gradient on a smaller instance to keep the sweep quick.
  Tensor xs = rand_var(rng, {1, 2, 5, 5});
  Tensor ks = rand_var(rng, {2, 2, 3, 3});
  auto report = grad_check(
      [](const std::vector<Tensor>& in) {
        return sum(conv2d(in[0], in[1], 2, 1));
      },
      {xs, ks}, 1e-5, {"x", "k"});
  CHECK(report.max_rel_err() < 1e-4);
}

TEST_CASE("conv2d agrees with the direct reference on shapes up to 2x4x9x9") {
  Rng rng(23);
  const std::size_t cases[][7] = {
      // B, C, H, W, F, k, stride
      {1, 1, 3, 3, 1, 1, 1}, {1, 2, 5, 4, 3, 3, 1}, {2, 4, 9, 9, 2, 3, 2},
      {2, 3, 7, 9, 4, 3, 2}, {1, 4, 9, 6, 3, 1, 1},
  };
  for (const auto& c : cases) {
    for (std::size_t pad = 0; pad <= 1; ++pad) {
      auto xv = oracles::random_vector(rng, c[0] * c[1] * c[2] * c[3]);
      auto kv = oracles::random_vector(rng, c[4] * c[1] * c[5] * c[5]);
      Tensor y = conv2d(Tensor::constant({c[0], c[1], c[2], c[3]}, xv),
                        Tensor::constant({c[4], c[1], c[5], c[5]}, kv), c[6], pad);
      auto ref = oracles::conv2d_direct(xv, kv, c[0], c[1], c[2], c[3], c[4],
                                        c[5], c[5], c[6], pad);
      REQUIRE(y.size() == ref.size());
      for (std::size_t i = 0; i < ref.size(); ++i)
        CHECK(std::fabs(y[i] - ref[i]) < 1e-12);
    }
  }
}

TEST_CASE("conv2d rejects channel disagreement") {
  CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 3, 4, 4}), Tensor::zeros({2, 2, 3, 3}), 1, 1),
                  ShapeMismatch);
}

TEST_CASE("mse trivial cases") {
  Rng rng(29);
  Tensor x = Tensor::constant({5}, oracles::random_vector(rng, 5));
  CHECK(mse(x, x).scalar() == 0.0);
  Tensor a = Tensor::constant({2}, {1, 3});
  Tensor b = Tensor::constant({2}, {1, 1});
  CHECK(mse(a, b).scalar() == 2.0);
  CHECK_THROWS_AS(mse(Tensor::zeros({2}), Tensor::zeros({3})), ShapeMismatch);
}

TEST_CASE("mse matches loop oracle and finite differences") {
  Rng rng(31);
  auto av = oracles::random_vector(rng, 12);
  auto bv = oracles::random_vector(rng, 12);
  Tensor a = Tensor::variable({3, 4}, av);
  Tensor b = Tensor::variable({3, 4}, bv);
  CHECK(mse(a, b).scalar() == doctest::Approx(oracles::mse_loop(av, bv)).epsilon(1e-12));
  auto report = grad_check(
      [](const std::vector<Tensor>& in) { return mse(in[0], in[1]); },
      {a, b}, 1e-5, {"a", "b"});
  CHECK(report.max_rel_err() < 1e-6);
}

TEST_CASE("backward of sum gives ones") {
  Tensor x = Tensor::variable({3}, {4, 5, 6});
  GradientMap g = backward(sum(x));
  const auto& gx = g.at(x);
  for (double v : gx) CHECK(v == 1.0);
}

TEST_CASE("backward accumulates duplicated operands") {
  Tensor x = Tensor::variable({3}, {1, 2, 3});
  GradientMap g = backward(sum(add(x, x)));
  for (double v : g.at(x)) CHECK(v == 2.0);
}

TEST_CASE("backward requires a scalar root") {
  Tensor x = Tensor::variable({3}, {1, 2, 3});
  CHECK_THROWS_AS(backward(relu(x)), NotScalar);
}

TEST_CASE("backward through linear+mse matches finite differences") {
  Rng rng(37);
  Tensor x = rand_var(rng, {2, 3});
  Tensor w = rand_var(rng, {3, 2});
  Tensor b = rand_var(rng, {2});
  Tensor y = Tensor::constant({2, 2}, oracles::random_vector(rng, 4));
  auto report = grad_check(
      [&](const std::vector<Tensor>& in) {
        return mse(linear(in[0], in[1], in[2]), y);
      },
      {x, w, b});
  CHECK(report.max_rel_err() < 1e-4);
}

TEST_CASE("backward is linear over independent subgraph sums") {
  Rng rng(41);
  auto xv = oracles::random_vector(rng, 6);
  auto build = [&](bool first, bool second) {
    Tensor x = Tensor::variable({6}, xv);
    Tensor t1 = mse(relu(x), Tensor::zeros({6}));
    Tensor t2 = sum(mul(x, x));
    Tensor root;
    if (first && second) root = add(t1, t2);
    else if (first) root = t1;
    else root = t2;
    GradientMap g = backward(root);
    return g.at(x);
  };
  auto g_both = build(true, true);
  auto g1 = build(true, false);
  auto g2 = build(false, true);
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(g_both[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-14));
}

TEST_CASE("forward+backward is bit deterministic") {
  Rng rng(43);
  auto xv = oracles::random_vector(rng, 2 * 3 * 6 * 6);
  auto kv = oracles::random_vector(rng, 4 * 3 * 3 * 3);
  auto run = [&]() {
    Tensor x = Tensor::variable({2, 3, 6, 6}, xv);
    Tensor k = Tensor::variable({4, 3, 3, 3}, kv);
    Tensor y = mse(relu(conv2d(x, k, 2, 1)), Tensor::zeros({2, 4, 3, 3}));
    GradientMap g = backward(y);
    std::pair<std::vector<double>, double> out{g.at(x), y.scalar()};
    return out;
  };
  auto a = run();
  auto b = run();
  CHECK(a.second == b.second);
  REQUIRE(a.first.size() == b.first.size());
  for (std::size_t i = 0; i < a.first.size(); ++i) CHECK(a.first[i] == b.first[i]);
}

TEST_CASE("constants never receive gradient entries") {
  Tensor x = Tensor::variable({2}, {1, 2});
  Tensor c = Tensor::constant({2}, {3, 4});
  GradientMap g = backward(mse(x, c));
  CHECK(g.contains(x));
  CHECK_FALSE(c.requires_grad());
  CHECK(g.entry_count() == 1);
}

TEST_CASE("adadelta zero gradient leaves parameters, decays accumulators") {
  AdadeltaState st;
  st.rho = 0.9;
  st.eps = 1e-6;
  st.accum_grad["p"] = {4.0};
  st.accum_update["p"] = {2.0};
  std::vector<double> value{1.5};
  std::vector<ParamRef> refs{{"p", &value, nullptr, 1.0}};
  adadelta_step(refs, st, 0.1);
  CHECK(value[0] == 1.5);
  CHECK(st.accum_grad["p"][0] == doctest::Approx(3.6).epsilon(1e-15));
  CHECK(st.accum_update["p"][0] == doctest::Approx(1.8).epsilon(1e-15));
}

TEST_CASE("adadelta single step matches hand recurrence") {
  const double rho = 0.9, eps = 1e-6, lr = 0.5;
  double eg = 0.0, eu = 0.0;
  const double expected = oracles::adadelta_scalar_step(2.0, 1.0, eg, eu, rho, eps, lr);

  AdadeltaState st;
  st.rho = rho;
  st.eps = eps;
  std::vector<double> value{2.0};
  std::vector<double> grad{1.0};
  std::vector<ParamRef> refs{{"p", &value, &grad, 1.0}};
  adadelta_step(refs, st, lr);
  CHECK(value[0] == doctest::Approx(expected).epsilon(1e-15));
  CHECK(st.accum_grad["p"][0] == doctest::Approx(eg).epsilon(1e-15));
  CHECK(st.accum_update["p"][0] == doctest::Approx(eu).epsilon(1e-15));

  // The first update from a fresh state is -lr*sqrt(eps/(0.1+eps)).
  const double first = -lr * std::sqrt(eps / (0.1 + eps));
  CHECK(value[0] == doctest::Approx(2.0 + first).epsilon(1e-12));
}

TEST_CASE("adadelta two successive identical steps follow the oracle") {
  const double rho = 0.9, eps = 1e-6, lr = 1.0;
  double eg = 0, eu = 0, p = 0;
  p = oracles::adadelta_scalar_step(p, 2.0, eg, eu, rho, eps, lr);
  const double step1 = p;
  p = oracles::adadelta_scalar_step(p, 2.0, eg, eu, rho, eps, lr);
  const double step2 = p - step1;
  CHECK(step1 != step2);

  AdadeltaState st;
  st.rho = rho;
  st.eps = eps;
  std::vector<double> value{0.0};
  std::vector<double> grad{2.0};
  std::vector<ParamRef> refs{{"p", &value, &grad, 1.0}};
  adadelta_step(refs, st, lr);
  CHECK(value[0] == doctest::Approx(step1).epsilon(1e-15));
  adadelta_step(refs, st, lr);
  CHECK(value[0] == doctest::Approx(step1 + step2).epsilon(1e-15));
}

TEST_CASE("adadelta lr_scale moves parameters in exact ratio") {
  AdadeltaState st;
  std::vector<double> a{0.0}, b{0.0};
  std::vector<double> grad{3.0};
  std::vector<ParamRef> refs{{"a", &a, &grad, 1.0}, {"b", &b, &grad, 0.01}};
  adadelta_step(refs, st, 0.7);
  CHECK(a[0] != 0.0);
  CHECK(b[0] == doctest::Approx(a[0] / 100.0).epsilon(1e-15));
}

TEST_CASE("adadelta rejects mismatched shapes") {
  AdadeltaState st;
  st.accum_grad["p"] = {0.0, 0.0};
  st.accum_update["p"] = {0.0, 0.0};
  std::vector<double> value{1.0};
  std::vector<ParamRef> refs{{"p", &value, nullptr, 1.0}};
  CHECK_THROWS_AS(adadelta_step(refs, st, 0.1), ShapeMismatch);
}

TEST_CASE("grad_check passes mse self-check tightly") {
  Rng rng(47);
  Tensor a = rand_var(rng, {2, 3});
  Tensor b = rand_var(rng, {2, 3});
  auto report = grad_check(
      [](const std::vector<Tensor>& in) { return mse(in[0], in[1]); }, {a, b});
  CHECK(report.max_rel_err() < 1e-6);
}

TEST_CASE("grad_check composite conv->relu->linear->mse") {
  Rng rng(53);
  Tensor x = rand_var(rng, {1, 2, 6, 6});
  Tensor k = rand_var(rng, {3, 2, 3, 3});
  Tensor w = rand_var(rng, {3 * 3 * 3, 4});
  Tensor b = rand_var(rng, {4});
  Tensor target = Tensor::constant({1, 4}, oracles::random_vector(rng, 4));
  auto report = grad_check(
      [&](const std::vector<Tensor>& in) {
        Tensor h = relu(conv2d(in[0], in[1], 2, 1));
        Tensor flat = reshape(h, {1, 3 * 3 * 3});
        return mse(linear(flat, in[2], in[3]), target);
      },
      {x, k, w, b}, 1e-5, {"x", "k", "w", "b"});
  CHECK(report.max_rel_err() < 1e-4);
}

TEST_CASE("grad_check constant input reports near-zero error via the floor") {
  Tensor used = Tensor::constant({2}, {0.3, -0.4});
  Tensor unused = Tensor::constant({2}, {5.0, 5.0});
  auto report = grad_check(
      [](const std::vector<Tensor>& in) {
        return mse(in[0], Tensor::zeros({2}));
      },
      {used, unused}, 1e-5, {"used", "unused"});
  REQUIRE(report.inputs.size() == 2);
  CHECK(report.inputs[1].max_rel_err < 1e-6);
}

TEST_CASE("grad_check flags non-finite functions") {
  Tensor x = Tensor::constant({1}, {1.0});
  CHECK_THROWS_AS(grad_check(
                      [](const std::vector<Tensor>& in) {
                        return scale(in[0], std::numeric_limits<double>::quiet_NaN());
                      },
                      {x}),
                  NonFinite);
}

TEST_CASE("slice and concat restore the latent exactly") {
  Rng rng(59);
  auto v = oracles::random_vector(rng, 2 * 6 * 3 * 3);
  Tensor x = Tensor::variable({2, 6, 3, 3}, v);
  Tensor a = slice_channels(x, 0, 2);
  Tensor b = slice_channels(x, 2, 6);
  Tensor back = concat_channels(a, b);
  REQUIRE(back.size() == x.size());
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] == x[i]);

  GradientMap g = backward(sum(mul(back, back)));
  const auto& gx = g.at(x);
  for (std::size_t i = 0; i < gx.size(); ++i)
    CHECK(gx[i] == doctest::Approx(2.0 * v[i]).epsilon(1e-14));
}

TEST_CASE("slice_rows gradient scatters into the right rows") {
  Tensor x = Tensor::variable({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  GradientMap g = backward(sum(slice_rows(x, 1, 3)));
  const auto& gx = g.at(x);
  const double expect[8] = {0, 0, 1, 1, 1, 1, 0, 0};
  for (std::size_t i = 0; i < 8; ++i) CHECK(gx[i] == expect[i]);
}

TEST_CASE("project_points and bone ops pass finite differences") {
  Rng rng(61);
  Tensor p = rand_var(rng, {2, 9}, -100.0, 100.0);
  Tensor cam = rand_var(rng, {2, 4}, 0.5, 2.0);
  std::vector<std::size_t> parents{0, 0, 1};
  auto report = grad_check(
      [&](const std::vector<Tensor>& in) {
        Tensor proj = project_points(in[0], in[1]);
        Tensor bd = bone_deltas(in[0], parents, 0);
        Tensor bl = norms3(bd);
        Tensor t2 = Tensor::zeros({2, 6});
        Tensor t1 = Tensor::full({2, 2}, 50.0);
        return add(mse(proj, t2), mse(bl, t1));
      },
      {p, cam}, 1e-5, {"p3d", "cam"});
  CHECK(report.max_rel_err() < 1e-4);
}

TEST_SUITE_END();
