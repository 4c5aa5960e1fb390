#include <doctest.h>

#include <cmath>
#include <random>

#include "ibowimg/error.hpp"
#include "ibowimg/model.hpp"
#include "oracles.hpp"

using namespace ibowimg;

namespace {

// V=2, d_e=2, d_v=1, A=2 with hand-picked weights.
BasicModelParams<double> toy() {
  BasicModelParams<double> p;
  p.embedding = Matrix<double>(2, 2);
  p.embedding(0, 0) = 1; p.embedding(0, 1) = 2;
  p.embedding(1, 0) = 3; p.embedding(1, 1) = -1;
  p.word_softmax = Matrix<double>(2, 2);
  p.word_softmax(0, 0) = 0.5; p.word_softmax(0, 1) = 1;
  p.word_softmax(1, 0) = -1;  p.word_softmax(1, 1) = 2;
  p.image_softmax = Matrix<double>(2, 1);
  p.image_softmax(0, 0) = 2; p.image_softmax(1, 0) = -3;
  return p;
}

struct Instance {
  BasicModelParams<double> params;
  std::vector<std::vector<float>> images;
  std::vector<Example> batch;
};

Instance random_instance(std::uint64_t seed, ModelDims dims, std::size_t batch,
                         bool bias = false) {
  std::mt19937_64 rng(seed);
  Instance inst;
  inst.params = init_params<double>(dims, seed, bias);
  // Spread weights beyond the init range so logits are not all near zero.
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : inst.params.embedding.values()) v = u(rng);
  for (auto& v : inst.params.word_softmax.values()) v = u(rng);
  for (auto& v : inst.params.image_softmax.values()) v = u(rng);
  for (auto& v : inst.params.bias) v = u(rng);
  inst.images.reserve(batch);
  std::uniform_int_distribution<std::uint32_t> label(0, static_cast<std::uint32_t>(dims.answers - 1));
  for (std::size_t i = 0; i < batch; ++i) {
    inst.images.push_back(oracle::random_image(rng, dims.image));
    inst.batch.push_back({oracle::random_bow(rng, dims.vocab, 6), inst.images.back(), label(rng)});
  }
  return inst;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("init_params") {
  const ModelDims dims{5, 3, 4, 2};
  CHECK(init_params<float>(dims, 9) == init_params<float>(dims, 9));
  CHECK_FALSE(init_params<float>(dims, 9) == init_params<float>(dims, 10));

  const auto tiny = init_params<float>({1, 1, 1, 1}, 3);
  for (float v : {tiny.embedding(0, 0), tiny.word_softmax(0, 0), tiny.image_softmax(0, 0)}) {
    CHECK(v >= -0.08f);
    CHECK(v <= 0.08f);
  }
  CHECK_THROWS_AS(init_params<float>({0, 1, 1, 1}, 3), Error);

  // 10^4 draws: uniform(-0.08, 0.08) has sd 0.08/sqrt(3).
  const auto big = init_params<double>({100, 100, 1, 1}, 21);
  double mean = 0.0;
  for (double v : big.embedding.values()) mean += v;
  mean /= 10000.0;
  const double standard_error = 0.08 / std::sqrt(3.0) / 100.0;
  CHECK(std::abs(mean) < 3.0 * standard_error);
}

TEST_CASE("forward on the toy model") {
  const auto p = toy();
  BowVector bow{{{0, 2}, {1, 1}}};
  const std::vector<float> image{0.5f};
  // x_w = 2*[1,2] + [3,-1] = [5,3]; r_w = [5.5, 1]; r_v = [1, -1.5].
  const auto d = decompose(p, bow, image);
  CHECK(d.word == std::vector<double>{5.5, 1.0});
  CHECK(d.image == std::vector<double>{1.0, -1.5});
  CHECK(d.total == std::vector<double>{6.5, -0.5});

  const std::vector<float> zero{0.0f};
  CHECK(forward(p, bow, zero) == std::vector<double>{5.5, 1.0});
  CHECK(forward(p, BowVector{}, image) == std::vector<double>{1.0, -1.5});

  CHECK_THROWS_AS(forward(p, bow, std::vector<float>{1.0f, 2.0f}), Error);
  CHECK_THROWS_AS(forward(p, BowVector{{{5, 1}}}, image), Error);
}

TEST_CASE("forward matches a differently ordered summation") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const ModelDims dims{12, 7, 5, 6};
    const auto p = init_params<float>(dims, rng());
    const auto bow = oracle::random_bow(rng, dims.vocab, 10);
    const auto img = oracle::random_image(rng, dims.image);
    const auto r = forward(p, bow, img);
    const auto expected = oracle::logits(p, bow, img);
    for (std::size_t a = 0; a < dims.answers; ++a) {
      CHECK(std::abs(r[a] - static_cast<double>(expected[a])) <= 1e-6);
    }
  }
}

TEST_CASE("softmax") {
  const auto u = softmax(std::vector<double>{2.0, 2.0, 2.0, 2.0});
  for (double v : u) CHECK(v == doctest::Approx(0.25));

  const auto big = softmax(std::vector<double>{1000.0, 0.0});
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] < 1e-300);

  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> r(5);
    for (auto& v : r) v = n(rng);
    const auto p = softmax(r);
    std::vector<long double> rl(r.begin(), r.end());
    const auto expected = oracle::softmax(rl);
    double sum = 0.0;
    for (int i = 0; i < 5; ++i) {
      CHECK(std::abs(p[i] - static_cast<double>(expected[i])) <= 1e-12);
      sum += p[i];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);

    auto shifted = r;
    for (auto& v : shifted) v += 37.5;
    const auto ps = softmax(shifted);
    for (int i = 0; i < 5; ++i) CHECK(std::abs(ps[i] - p[i]) <= 1e-9);
  }
}

TEST_CASE("loss_and_grads edge cases") {
  SUBCASE("symmetric two-class model gives ln 2") {
    BasicModelParams<double> p;
    p.embedding = Matrix<double>(1, 1, 0.0);
    p.word_softmax = Matrix<double>(2, 1, 0.3);
    p.image_softmax = Matrix<double>(2, 1, -0.2);
    const std::vector<float> img{1.0f};
    std::vector<Example> batch{{BowVector{{{0, 1}}}, img, 1}};
    CHECK(loss_and_grads(p, batch).loss == doctest::Approx(std::log(2.0)));
  }
  SUBCASE("confident correct prediction has vanishing loss and gradient") {
    BasicModelParams<double> p;
    p.embedding = Matrix<double>(1, 1, 1.0);
    p.word_softmax = Matrix<double>(2, 1);
    p.word_softmax(0, 0) = 40.0;
    p.word_softmax(1, 0) = -40.0;
    p.image_softmax = Matrix<double>(2, 1, 0.0);
    const std::vector<float> img{0.0f};
    std::vector<Example> batch{{BowVector{{{0, 1}}}, img, 0}};
    const auto out = loss_and_grads(p, batch);
    CHECK(out.loss < 1e-30);
    for (double g : out.grads.word_softmax.values()) CHECK(std::abs(g) < 1e-30);
    CHECK(std::abs(out.grads.embedding(0, 0)) < 1e-30);
  }
  SUBCASE("label out of range") {
    const auto p = toy();
    const std::vector<float> img{0.0f};
    std::vector<Example> batch{{BowVector{}, img, 2}};
    try {
      loss_and_grads(p, batch);
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kLabel);
    }
  }
}

TEST_CASE("analytic gradients match central differences") {
  const double h = 1e-5;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (bool bias : {false, true}) {
      auto inst = random_instance(seed, {20, 8, 6, 5}, 4, bias);
      const auto g = loss_and_grads(inst.params, inst.batch).grads;
      const auto& p = inst.params;
      for (std::uint32_t w = 0; w < 20; ++w) {
        for (std::size_t j = 0; j < 8; ++j) {
          const double fd = oracle::central_difference(
              p, inst.batch, [&](auto& q) -> double& { return q.embedding(w, j); }, h);
          CHECK(rel_err(g.embedding(w, j), fd) <= 1e-4);
        }
      }
      for (std::size_t a = 0; a < 5; ++a) {
        for (std::size_t j = 0; j < 8; ++j) {
          const double fd = oracle::central_difference(
              p, inst.batch, [&](auto& q) -> double& { return q.word_softmax(a, j); }, h);
          CHECK(rel_err(g.word_softmax(a, j), fd) <= 1e-4);
        }
        for (std::size_t k = 0; k < 6; ++k) {
          const double fd = oracle::central_difference(
              p, inst.batch, [&](auto& q) -> double& { return q.image_softmax(a, k); }, h);
          CHECK(rel_err(g.image_softmax(a, k), fd) <= 1e-4);
        }
        if (bias) {
          const double fd = oracle::central_difference(
              p, inst.batch, [&](auto& q) -> double& { return q.bias[a]; }, h);
          CHECK(rel_err(g.bias[a], fd) <= 1e-4);
        }
      }
    }
  }
}

TEST_CASE("weight_clip") {
  Matrix<double> small(2, 2, 0.1);
  auto copy = small;
  weight_clip(copy, 1.0);
  CHECK(copy == small);

  Matrix<double> m(1, 2);
  m(0, 0) = 3;
  m(0, 1) = 4;
  weight_clip(m, 1.0);
  CHECK(m(0, 0) == doctest::Approx(0.6));
  CHECK(m(0, 1) == doctest::Approx(0.8));

  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 5.0);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix<double> r(8, 5);
    for (auto& v : r.values()) v = n(rng);
    const auto original = r;
    weight_clip(r, 3.0);
    for (std::size_t i = 0; i < 8; ++i) {
      double sq = 0, sq0 = 0;
      for (std::size_t j = 0; j < 5; ++j) {
        sq += r(i, j) * r(i, j);
        sq0 += original(i, j) * original(i, j);
      }
      CHECK(std::sqrt(sq) <= 3.0 + 1e-9);
      if (std::sqrt(sq0) <= 3.0) {
        for (std::size_t j = 0; j < 5; ++j) CHECK(r(i, j) == original(i, j));
      }
    }
    auto twice = r;
    weight_clip(twice, 3.0);
    for (std::size_t i = 0; i < r.size(); ++i) {
      CHECK(twice.values()[i] == doctest::Approx(r.values()[i]).epsilon(1e-15));
    }
  }
}

TEST_CASE("sgd_step") {
  auto inst = random_instance(3, {20, 8, 6, 5}, 4);
  const auto g = loss_and_grads(inst.params, inst.batch).grads;

  Hyperparams frozen;
  frozen.lr_embedding = 0;
  frozen.lr_softmax = 0;
  auto p0 = inst.params;
  sgd_step(p0, g, frozen);
  CHECK(p0 == inst.params);

  Hyperparams embed_only;
  embed_only.lr_embedding = 0.1;
  embed_only.lr_softmax = 0;
  auto p1 = inst.params;
  sgd_step(p1, g, embed_only);
  CHECK_FALSE(p1.embedding == inst.params.embedding);
  CHECK(p1.word_softmax == inst.params.word_softmax);
  CHECK(p1.image_softmax == inst.params.image_softmax);

  Hyperparams small;
  small.lr_embedding = 1e-3;
  small.lr_softmax = 1e-3;
  auto p2 = inst.params;
  const double before = mean_loss(p2, inst.batch);
  sgd_step(p2, g, small);
  CHECK(mean_loss(p2, inst.batch) < before);
}

TEST_CASE("reparameterization invariances") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    const ModelDims dims{10, 6, 4, 5};
    auto p = init_params<double>(dims, rng());
    const auto bow = oracle::random_bow(rng, dims.vocab, 8);
    const auto img = oracle::random_image(rng, dims.image);
    const auto r = forward(p, bow, img);

    auto scaled = p;
    const double s = 0.5 + (rng() % 100) / 25.0;
    for (auto& v : scaled.embedding.values()) v *= s;
    for (auto& v : scaled.word_softmax.values()) v /= s;
    const auto rs = forward(scaled, bow, img);
    for (std::size_t a = 0; a < dims.answers; ++a) CHECK(std::abs(rs[a] - r[a]) <= 1e-6);

    auto shifted = r;
    for (auto& v : shifted) v += 3.25;
    CHECK(std::max_element(shifted.begin(), shifted.end()) - shifted.begin() ==
          std::max_element(r.begin(), r.end()) - r.begin());
  }
}

TEST_CASE("hyperparameter validation") {
  Hyperparams h;
  CHECK(validate(h).empty());
  h.lr_embedding = 0.001;
  CHECK(validate(h).size() == 1);
  h.clip_softmax = 0;
  CHECK_THROWS_AS(validate(h), Error);
}

}  // TEST_SUITE
