#include <doctest.h>

#include <nlohmann/json.hpp>

#include "ibowimg/error.hpp"
#include "ibowimg/eval.hpp"
#include "ibowimg/synth.hpp"
#include "ibowimg/train.hpp"

using namespace ibowimg;

namespace {

const synth::SyntheticTask& separable() {
  static const auto task = synth::make_separable_task({});
  return task;
}

const VectorStore& separable_store() {
  static const auto store = separable().vector_store();
  return store;
}

const TrainResult& separable_default() {
  static const auto result =
      train(separable().train, separable().val, separable_store(), TrainConfig{});
  return result;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("separable task is learned at default hyperparameters") {
  const auto& r = separable_default();
  CHECK(top1_accuracy(r.model, separable().train, separable_store()) >= 0.99);
  CHECK(r.report.best_accuracy >= 0.99);
  CHECK(r.report.epoch_loss.size() == 50);
  CHECK(r.report.used_pairs == 1000);
  CHECK(r.report.skipped_pairs == 0);
  CHECK_FALSE(r.report.validated_on_train);
  CHECK(r.model.answers.size() == 16);
}

TEST_CASE("loss is non-increasing after the second epoch") {
  const auto& loss = separable_default().report.epoch_loss;
  for (std::size_t e = 2; e < loss.size(); ++e) {
    CHECK(loss[e] <= loss[e - 1]);
  }
}

TEST_CASE("returned checkpoint is the best validation point") {
  const auto& r = separable_default();
  double best = 0.0;
  for (const auto& p : r.report.evaluations) best = std::max(best, p.val_accuracy);
  CHECK(r.report.best_accuracy >= best);
  CHECK(top1_accuracy(r.model, separable().val, separable_store()) ==
        doctest::Approx(r.report.best_accuracy));
  CHECK(r.report.best_accuracy >= r.report.evaluations.back().val_accuracy);
}

TEST_CASE("training is deterministic") {
  TrainConfig c;
  c.hyper.epochs = 3;
  c.hyper.seed = 5;
  c.shuffle_seed = 9;
  const auto a = train(separable().train, separable().val, separable_store(), c);
  const auto b = train(separable().train, separable().val, separable_store(), c);
  CHECK(a.model == b.model);
  CHECK(a.report.epoch_loss == b.report.epoch_loss);
  CHECK(a.report.best_epoch == b.report.best_epoch);

  c.shuffle_seed = 10;
  const auto d = train(separable().train, separable().val, separable_store(), c);
  CHECK_FALSE(d.model == a.model);
}

TEST_CASE("zero learning rates leave the initial model") {
  TrainConfig c;
  c.hyper.epochs = 2;
  c.hyper.lr_embedding = 0;
  c.hyper.lr_softmax = 0;
  const auto r = train(separable().train, separable().val, separable_store(), c);
  const auto init = init_params<float>(r.model.params.dims(), c.hyper.seed);
  CHECK(r.model.params == init);
  CHECK(r.report.best_epoch == 0);
  for (const auto& p : r.report.evaluations) {
    CHECK(p.val_accuracy == doctest::Approx(r.report.best_accuracy));
  }
}

TEST_CASE("evaluation cadence and progress callback") {
  TrainConfig c;
  c.hyper.epochs = 2;
  c.evals_per_epoch = 3;
  std::vector<EvalPoint> seen;
  const auto r = train(separable().train, {}, separable_store(), c,
                       [&](const EvalPoint& p) { seen.push_back(p); });
  CHECK(r.report.validated_on_train);
  REQUIRE(seen.size() == 6);
  CHECK(seen[0].epoch == 1);
  CHECK(seen[2].eval == 3);
  CHECK(seen[5].epoch == 2);

  const auto json = nlohmann::json::parse(train_report_json(r.report));
  CHECK(json["epoch_loss"].size() == 2);
  CHECK(json["evaluations"].size() == 6);
}

TEST_CASE("answers below the class threshold are skipped") {
  auto pairs = separable().train;
  pairs[0].answer = "one-off answer";
  TrainConfig c;
  c.hyper.epochs = 1;
  c.answer_min_count = 2;
  const auto r = train(pairs, {}, separable_store(), c);
  CHECK(r.report.skipped_pairs == 1);
  CHECK(r.report.used_pairs == pairs.size() - 1);
  CHECK_FALSE(r.model.answers.contains("one-off answer"));
}

TEST_CASE("training input errors") {
  auto pairs = separable().train;
  pairs[3].image_id = 424242;
  TrainConfig c;
  c.hyper.epochs = 1;
  try {
    train(pairs, {}, separable_store(), c);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNotFound);
    CHECK(std::string(e.what()).find("424242") != std::string::npos);
  }
  c.hyper.lr_softmax = -1;
  CHECK_THROWS_AS(train(separable().train, {}, separable_store(), c), Error);
}

TEST_CASE("divergence is reported") {
  TrainConfig c;
  c.hyper.epochs = 2;
  c.hyper.lr_embedding = 1e30;
  c.hyper.lr_softmax = 1e30;
  c.hyper.clip_embedding = 1e30;
  c.hyper.clip_softmax = 1e30;
  try {
    train(separable().train, {}, separable_store(), c);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDivergence);
  }
}

TEST_CASE("grid search") {
  TrainConfig base;
  base.hyper.epochs = 10;
  const auto& t = separable();

  const std::vector<double> one = {0.01};
  const auto single = grid_search("lr_softmax", one, base, t.train, t.val, separable_store());
  REQUIRE(single.size() == 1);
  CHECK(single[0].value == 0.01);

  const std::vector<double> two = {0.0, 0.01};
  const auto rows = grid_search("lr_softmax", two, base, t.train, t.val, separable_store());
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].value == 0.01);
  CHECK(rows[0].val_accuracy > rows[1].val_accuracy);

  const std::vector<double> dup = {0.01, 0.01};
  const auto same = grid_search("lr_softmax", dup, base, t.train, t.val, separable_store());
  CHECK(same[0].val_accuracy == same[1].val_accuracy);

  CHECK_THROWS_AS(grid_search("lr_softmax", {}, base, t.train, t.val, separable_store()), Error);
  CHECK_THROWS_AS(grid_search("momentum", one, base, t.train, t.val, separable_store()), Error);

  const auto json = nlohmann::json::parse(grid_json("lr_softmax", rows));
  CHECK(json["param"] == "lr_softmax");
  CHECK(json["results"][0]["value"] == 0.01);
}

}  // TEST_SUITE
