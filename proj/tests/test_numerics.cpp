#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "capsule_nlu/grad_check.hpp"
#include "capsule_nlu/tape.hpp"
#include "test_util.hpp"

using namespace capsnlu;

TEST_CASE("matmul hand values") {
  Tape<float> tape;
  auto identity = Tensor<float>::from_data({2, 2}, {1, 0, 0, 1});
  auto m = Tensor<float>::from_data({2, 2}, {1, 2, 3, 4});
  auto r = tape.matmul(identity, m);
  CHECK(r.value()[0] == 1);
  CHECK(r.value()[1] == 2);
  CHECK(r.value()[2] == 3);
  CHECK(r.value()[3] == 4);

  auto v = Tensor<float>::from_data({2, 1}, {5, 6});
  auto mv = tape.matmul(m, v);
  CHECK(mv.value()[0] == doctest::Approx(17));
  CHECK(mv.value()[1] == doctest::Approx(39));

  auto zero = Tensor<float>::zeros({3, 2});
  auto z = tape.matmul(zero, m);
  for (float x : z.value()) CHECK(x == 0.0f);
}

TEST_CASE("matmul dimension error names both shapes") {
  Tape<float> tape;
  auto a = Tensor<float>::zeros({2, 3});
  auto b = Tensor<float>::zeros({4, 5});
  try {
    tape.matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x5]") != std::string::npos);
  }
}

TEST_CASE("matmul transpose flags against explicit transposes") {
  Rng rng(11);
  Tape<double> tape;
  auto a = testutil::rand_tensor<double>(rng, {3, 4});
  auto b = testutil::rand_tensor<double>(rng, {3, 5});
  auto direct = tape.matmul(a, b, true, false);
  auto via = tape.matmul(tape.transpose(a), b);
  for (size_t i = 0; i < direct.value().size(); ++i) {
    CHECK(direct.value()[i] == doctest::Approx(via.value()[i]).epsilon(1e-12));
  }
  auto c = testutil::rand_tensor<double>(rng, {5, 4});
  auto d2 = tape.matmul(a, c, true, true);
  auto v2 = tape.matmul(tape.transpose(a), tape.transpose(c));
  for (size_t i = 0; i < d2.value().size(); ++i) {
    CHECK(d2.value()[i] == doctest::Approx(v2.value()[i]).epsilon(1e-12));
  }
}

TEST_CASE("softmax examples") {
  Tape<float> tape;
  auto uniform_in = Tensor<float>::from_data({3}, {0, 0, 0});
  auto u = tape.softmax(uniform_in, 0);
  for (float x : u.value()) CHECK(x == 1.0f / 3.0f);  // exact on equal logits

  auto x = Tensor<float>::from_data({3}, {1, 2, 3});
  auto y = tape.softmax(x, 0);
  // three-line oracle: exp then normalize
  double e1 = std::exp(1.0), e2 = std::exp(2.0), e3 = std::exp(3.0);
  const double z = e1 + e2 + e3;
  CHECK(y.value()[0] == doctest::Approx(e1 / z).epsilon(1e-6));
  CHECK(y.value()[1] == doctest::Approx(e2 / z).epsilon(1e-6));
  CHECK(y.value()[2] == doctest::Approx(e3 / z).epsilon(1e-6));

  // shift invariance is bitwise thanks to max subtraction
  auto big = tape.softmax(Tensor<float>::from_data({2}, {100, 101}), 0);
  auto small = tape.softmax(Tensor<float>::from_data({2}, {0, 1}), 0);
  CHECK(big.value()[0] == small.value()[0]);
  CHECK(big.value()[1] == small.value()[1]);
}

TEST_CASE("softmax normalization and shift invariance on random tensors") {
  Rng rng(42);
  for (int rep = 0; rep < 300; ++rep) {
    const int r = 1 + static_cast<int>(rng.uniform_int(5));
    const int c = 1 + static_cast<int>(rng.uniform_int(5));
    const int axis = static_cast<int>(rng.uniform_int(2));
    Tape<float> tape;
    auto x = testutil::rand_tensor<float>(rng, {r, c}, -5.0, 5.0);
    auto y = tape.softmax(x, axis);

    const int n = axis == 0 ? r : c, other = axis == 0 ? c : r;
    for (int o = 0; o < other; ++o) {
      float sum = 0.0f;
      for (int j = 0; j < n; ++j) sum += axis == 0 ? y.at(j, o) : y.at(o, j);
      CHECK(std::abs(sum - 1.0f) < 1e-6f);
    }

    const float shift = static_cast<float>(rng.uniform(-3.0, 3.0));
    auto shifted = Tensor<float>::zeros({r, c});
    for (int i = 0; i < r * c; ++i) shifted.value()[static_cast<size_t>(i)] = x.value()[static_cast<size_t>(i)] + shift;
    auto y2 = tape.softmax(shifted, axis);
    for (int i = 0; i < r * c; ++i) {
      CHECK(std::abs(y.value()[static_cast<size_t>(i)] - y2.value()[static_cast<size_t>(i)]) < 1e-6f);
    }
  }
}

TEST_CASE("check_gradients on a linear function") {
  Rng rng(3);
  auto x = testutil::rand_tensor<double>(rng, {4, 1}, -1, 1, true);
  NamedParams<double> params{{"x", x}};
  auto rep = check_gradients<double>(
      [&](Tape<double>& t) { return t.sum_all(x); }, params, {.step = 1e-5, .tol = 1e-7});
  CHECK(rep.ok());
  CHECK(rep.max_rel_err < 1e-7);
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("check_gradients matches the closed-form tanh derivative") {
  auto x = Tensor<double>::from_data({2, 1}, {0.5, -0.3}, true);
  NamedParams<double> params{{"x", x}};
  auto rep = check_gradients<double>(
      [&](Tape<double>& t) { return t.sum_all(t.tanh(x)); }, params, {.step = 1e-4, .tol = 1e-5});
  CHECK(rep.ok());
  const double t1 = std::tanh(0.5), t2 = std::tanh(-0.3);
  CHECK(x.grad()[0] == doctest::Approx(1 - t1 * t1).epsilon(1e-12));
  CHECK(x.grad()[1] == doctest::Approx(1 - t2 * t2).epsilon(1e-12));
}

TEST_CASE("check_gradients propagates a non-finite loss") {
  auto x = Tensor<double>::from_data({1}, {2.0}, true);
  NamedParams<double> params{{"x", x}};
  CHECK_THROWS_AS(check_gradients<double>(
                      [&](Tape<double>& t) {
                        auto y = t.scale_add(x, 1e308, 0.0);
                        return t.mul(y, y);  // overflows to inf
                      },
                      params, {}),
                  NumericError);
}

namespace {

// Random composition of the primitive set reduced to a scalar. Builds the
// same graph for float and double given the same seed.
template <typename S>
Tensor<S> random_composition(Tape<S>& tape, std::vector<Tensor<S>>& params, Rng& rng) {
  const int rows = 2 + static_cast<int>(rng.uniform_int(3));
  const int cols = 2 + static_cast<int>(rng.uniform_int(3));
  params.push_back(testutil::rand_tensor<S>(rng, {rows, cols}, -0.8, 0.8, true));
  Tensor<S> cur = params.back();

  const int steps = 2 + static_cast<int>(rng.uniform_int(4));
  for (int i = 0; i < steps; ++i) {
    switch (rng.uniform_int(10)) {
      case 0: {
        params.push_back(testutil::rand_tensor<S>(rng, {cur.dim(1), 2 + static_cast<int>(rng.uniform_int(3))},
                                                  -0.8, 0.8, true));
        cur = tape.matmul(cur, params.back());
        break;
      }
      case 1: {
        params.push_back(testutil::rand_tensor<S>(rng, cur.shape(), -0.8, 0.8, true));
        cur = tape.add(cur, params.back());
        break;
      }
      case 2: {
        params.push_back(testutil::rand_tensor<S>(rng, cur.shape(), -0.8, 0.8, true));
        cur = tape.mul(cur, params.back());
        break;
      }
      case 3:
        cur = tape.tanh(cur);
        break;
      case 4:
        cur = tape.sigmoid(cur);
        break;
      case 5:
        cur = tape.scale_add(cur, static_cast<S>(rng.uniform(-1.2, 1.2)), static_cast<S>(rng.uniform(-0.4, 0.4)));
        break;
      case 6:
        cur = tape.transpose(cur);
        break;
      case 7:
        cur = tape.softmax(cur, static_cast<int>(rng.uniform_int(2)));
        break;
      case 8:
        // log over a clamped distribution stays well-conditioned
        cur = tape.log(tape.clamp_min(tape.softmax(cur, 0), S(0.05)));
        break;
      case 9: {
        params.push_back(testutil::rand_tensor<S>(rng, {cur.dim(0), 1}, -0.8, 0.8, true));
        cur = tape.add_col_broadcast(cur, params.back());
        break;
      }
    }
  }
  Tensor<S> parts[] = {tape.sum_all(cur), tape.l2_norm(tape.squash(cur))};
  return tape.add(parts[0], parts[1]);
}

template <typename S>
double composition_max_rel_err(uint64_t seed, double h, double tol, double floor) {
  std::vector<Tensor<S>> raw;
  {  // materialize parameters deterministically from the seed
    Rng build(seed);
    Tape<S> t;
    random_composition(t, raw, build);
  }
  NamedParams<S> named;
  for (size_t i = 0; i < raw.size(); ++i) named.emplace_back("p" + std::to_string(i), raw[i]);
  Rng reuse(seed);
  auto rep = check_gradients<S>(
      [&](Tape<S>& t) {
        // rebuild the same graph over the same (mutated) parameter tensors
        Rng r2(seed);
        std::vector<Tensor<S>> tmp;
        return rebuild_composition(t, named, r2);
      },
      named, {.step = h, .tol = tol, .denom_floor = floor});
  (void)reuse;
  return rep.ok() ? rep.max_rel_err : 1e9;
}

}  // namespace

// The generator draws shapes and op choices from the rng; to re-evaluate
// the loss at perturbed parameters the graph must be rebuilt over the same
// parameter tensors, so the builder is replayed with the parameters
// injected instead of freshly drawn.
template <typename S>
static Tensor<S> rebuild_composition(Tape<S>&, NamedParams<S>&, Rng&);

TEST_CASE("composition gradients match finite differences (1000 random cases)") {
  // Graph shape bookkeeping makes the generic replay brittle; instead the
  // property uses self-contained per-case builders below.
  Rng seeds(2024);
  int cases = 0;
  double worst64 = 0.0, worst32 = 0.0;
  while (cases < 1000) {
    const uint64_t seed = seeds.next_u64();

    // Build closures that reconstruct the identical graph each evaluation.
    auto make_loss = [seed](auto& params_vec) {
      return [seed, &params_vec](auto& tape) {
        using Sc = typename std::decay_t<decltype(params_vec[0])>::value_type;
        Rng rng(seed);
        size_t next = 0;
        auto take = [&](Shape shape) -> Tensor<Sc>& {
          if (next == params_vec.size()) {
            params_vec.push_back(testutil::rand_tensor<Sc>(rng, shape, -0.8, 0.8, true));
          }
          return params_vec[next++];
        };
        const int rows = 2 + static_cast<int>(rng.uniform_int(3));
        const int cols = 2 + static_cast<int>(rng.uniform_int(3));
        Tensor<Sc> cur = take({rows, cols});
        const int steps = 2 + static_cast<int>(rng.uniform_int(4));
        for (int i = 0; i < steps; ++i) {
          switch (rng.uniform_int(10)) {
            case 0:
              cur = tape.matmul(cur, take({cur.dim(1), 2 + static_cast<int>(rng.uniform_int(3))}));
              break;
            case 1:
              cur = tape.add(cur, take(cur.shape()));
              break;
            case 2:
              cur = tape.mul(cur, take(cur.shape()));
              break;
            case 3:
              cur = tape.tanh(cur);
              break;
            case 4:
              cur = tape.sigmoid(cur);
              break;
            case 5:
              cur = tape.scale_add(cur, static_cast<Sc>(rng.uniform(-1.2, 1.2)),
                                   static_cast<Sc>(rng.uniform(-0.4, 0.4)));
              break;
            case 6:
              cur = tape.transpose(cur);
              break;
            case 7:
              cur = tape.softmax(cur, static_cast<int>(rng.uniform_int(2)));
              break;
            case 8:
              cur = tape.log(tape.clamp_min(tape.softmax(cur, 0), Sc(0.05)));
              break;
            case 9:
              cur = tape.add_col_broadcast(cur, take({cur.dim(0), 1}));
              break;
          }
        }
        Tensor<Sc> a = tape.sum_all(cur);
        Tensor<Sc> b = tape.l2_norm(tape.squash(cur));
        return tape.add(a, b);
      };
    };

    // 64-bit check mode: rel tol 1e-5
    {
      struct VecWrap : std::vector<Tensor<double>> { using value_type = Tensor<double>; };
      VecWrap params_vec;
      auto loss = make_loss(params_vec);
      {  // materialize parameters
        Tape<double> t;
        loss(t);
      }
      NamedParams<double> named;
      for (size_t i = 0; i < params_vec.size(); ++i) named.emplace_back("p" + std::to_string(i), params_vec[i]);
      auto rep = check_gradients<double>([&](Tape<double>& t) { return loss(t); }, named,
                                         {.step = 1e-6, .tol = 1e-5, .denom_floor = 1e-4,
                                          .max_coords_per_param = 4, .seed = seed});
      if (!rep.ok()) {
        CAPTURE(seed);
        CHECK(rep.ok());
      }
      worst64 = std::max(worst64, rep.max_rel_err);
    }
    // 32-bit production mode: rel tol 1e-3 (denominator floored to absorb
    // float-precision finite-difference noise on near-zero gradients)
    {
      struct VecWrap : std::vector<Tensor<float>> { using value_type = Tensor<float>; };
      VecWrap params_vec;
      auto loss = make_loss(params_vec);
      {
        Tape<float> t;
        loss(t);
      }
      NamedParams<float> named;
      for (size_t i = 0; i < params_vec.size(); ++i) named.emplace_back("p" + std::to_string(i), params_vec[i]);
      auto rep = check_gradients<float>([&](Tape<float>& t) { return loss(t); }, named,
                                        {.step = 1e-2, .tol = 1e-3, .denom_floor = 1.0,
                                         .max_coords_per_param = 4, .seed = seed});
      if (!rep.ok()) {
        CAPTURE(seed);
        CHECK(rep.ok());
      }
      worst32 = std::max(worst32, rep.max_rel_err);
    }
    ++cases;
  }
  MESSAGE("worst rel err: 64-bit ", worst64, ", 32-bit ", worst32);
  CHECK(cases == 1000);
}

TEST_CASE("tape replay is deterministic given the seed") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    Tape<float> tape;
    auto a = testutil::rand_tensor<float>(rng, {4, 3}, -1, 1, true);
    auto b = testutil::rand_tensor<float>(rng, {3, 2}, -1, 1, true);
    auto loss = tape.sum_all(tape.tanh(tape.matmul(a, b)));
    tape.backward(loss);
    std::vector<float> out(loss.value().begin(), loss.value().end());
    out.insert(out.end(), a.grad().begin(), a.grad().end());
    out.insert(out.end(), b.grad().begin(), b.grad().end());
    return out;
  };
  auto r1 = run(99), r2 = run(99);
  CHECK(r1.size() == r2.size());
  CHECK(std::memcmp(r1.data(), r2.data(), r1.size() * sizeof(float)) == 0);
}

TEST_CASE("gradients accumulate over all uses of a parameter") {
  auto x = Tensor<double>::from_data({2, 1}, {0.4, -0.2}, true);
  Tape<double> tape;
  // x used three times: loss = sum(x*x) + 2*sum(x)
  auto loss = tape.add(tape.sum_all(tape.mul(x, x)), tape.scale_add(tape.sum_all(x), 2.0, 0.0));
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(2 * 0.4 + 2).epsilon(1e-12));
  CHECK(x.grad()[1] == doctest::Approx(2 * -0.2 + 2).epsilon(1e-12));
}

TEST_CASE("non-finite tensor construction is a hard error") {
  const float inf = std::numeric_limits<float>::infinity();
  const float nan = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(Tensor<float>::from_data({2}, {1.0f, inf}), NumericError);
  CHECK_THROWS_AS(Tensor<float>::from_data({2}, {nan, 0.0f}), NumericError);
  CHECK_THROWS_AS(Tensor<float>::from_data({3}, {1.0f, 2.0f}), DimensionError);
}

TEST_CASE("log rejects non-positive input") {
  Tape<float> tape;
  auto x = Tensor<float>::from_data({2}, {0.5f, -0.1f});
  CHECK_THROWS_AS(tape.log(x), NumericError);
}

TEST_CASE("l2_norm gradient at zero is zero") {
  auto x = Tensor<double>::zeros({3, 1}, true);
  Tape<double> tape;
  auto n = tape.l2_norm(x);
  tape.backward(n);
  for (double g : x.grad()) CHECK(g == 0.0);
}

TEST_CASE("select_rows routes gradient only to looked-up rows") {
  auto table = Tensor<double>::from_data({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  Tape<double> tape;
  const int ids[] = {1, 1, 2};
  auto picked = tape.select_rows(table, ids);
  auto loss = tape.sum_all(picked);
  tape.backward(loss);
  // row 0 unused, row 1 used twice, row 2 once
  CHECK(table.grad()[0] == 0.0);
  CHECK(table.grad()[1] == 0.0);
  CHECK(table.grad()[2] == 2.0);
  CHECK(table.grad()[3] == 2.0);
  CHECK(table.grad()[4] == 1.0);
  CHECK(table.grad()[5] == 1.0);
}
