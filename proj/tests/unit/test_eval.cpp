#include <doctest.h>

#include <algorithm>
#include <random>

#include <nlohmann/json.hpp>

#include "ibowimg/error.hpp"
#include "ibowimg/eval.hpp"
#include "oracles.hpp"

using namespace ibowimg;

namespace {

std::vector<std::string> answers_with(std::size_t matches, const std::string& hit,
                                      const std::string& miss = "other") {
  std::vector<std::string> a(kHumanAnswers, miss);
  std::fill_n(a.begin(), matches, hit);
  return a;
}

// Words {color, count}; "color" votes red, "count" votes 2, image unused.
Model toy_model() {
  Model m;
  m.words = WordDict({"color", "count"}, 1);
  m.answers = AnswerDict({"red", "2", "yes"}, 1);
  m.hyper.embed_dim = 2;
  m.params.embedding = Matrix<float>(2, 2);
  m.params.embedding(0, 0) = 1;
  m.params.embedding(1, 1) = 1;
  m.params.word_softmax = Matrix<float>(3, 2);
  m.params.word_softmax(0, 0) = 4;
  m.params.word_softmax(1, 1) = 4;
  m.params.image_softmax = Matrix<float>(3, 1);
  m.params.image_softmax(2, 0) = 1;
  return m;
}

QAPair pair(QuestionId id, std::vector<std::string> tokens, AnswerType type,
            std::vector<std::string> humans, std::vector<std::string> choices = {}) {
  QAPair p;
  p.question_id = id;
  p.image_id = 1;
  p.tokens = std::move(tokens);
  p.answer = humans.front();
  p.answer_type = type;
  p.human_answers = std::move(humans);
  p.choices = std::move(choices);
  return p;
}

VectorStore one_image_store() {
  const std::vector<ImageFeature> features = {{1, {0.0f}}};
  return VectorStore::from_features(1, features);
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("accuracy examples") {
  CHECK(vqa_accuracy("red", answers_with(3, "red")) == doctest::Approx(0.9));
  CHECK(vqa_accuracy("red", answers_with(0, "red")) == 0.0);
  CHECK(vqa_accuracy("red", answers_with(10, "red")) == 1.0);
  CHECK(vqa_accuracy("red", answers_with(4, "red")) == 1.0);
  CHECK(vqa_accuracy("red", answers_with(3, "red"), Metric::kSimple) == 1.0);
  CHECK(vqa_accuracy("red", answers_with(2, "red"), Metric::kSimple) == doctest::Approx(2.0 / 3));
}

TEST_CASE("accuracy matches subset enumeration for every match count") {
  for (std::size_t m = 0; m <= kHumanAnswers; ++m) {
    const auto a = answers_with(m, "yes", "no");
    const double expected = static_cast<double>(oracle::vqa_accuracy("yes", a));
    CHECK(std::abs(vqa_accuracy("yes", a) - expected) <= 1e-12);
  }
}

TEST_CASE("accuracy is invariant to answer order") {
  std::mt19937_64 rng(8);
  const std::vector<std::string> pool = {"a", "b", "c"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> a(kHumanAnswers);
    for (auto& s : a) s = pool[rng() % pool.size()];
    const double base = vqa_accuracy("a", a);
    CHECK(std::abs(base - static_cast<double>(oracle::vqa_accuracy("a", a))) <= 1e-12);
    std::shuffle(a.begin(), a.end(), rng);
    CHECK(vqa_accuracy("a", a) == base);
  }
}

TEST_CASE("track and metric names") {
  CHECK(parse_track("oe") == Track::kOpenEnded);
  CHECK(parse_track("mc") == Track::kMultipleChoice);
  CHECK(parse_metric("simple") == Metric::kSimple);
  CHECK_THROWS_AS(parse_track("xx"), Error);
}

TEST_CASE("evaluate a toy corpus") {
  const auto model = toy_model();
  const auto store = one_image_store();
  const std::vector<QAPair> pairs = {
      pair(1, {"what", "color"}, AnswerType::kOther, answers_with(10, "red")),
      pair(2, {"count", "them"}, AnswerType::kNumber, answers_with(2, "2", "3")),
      pair(3, {"is", "it", "color"}, AnswerType::kYesNo, answers_with(10, "yes")),
  };
  const auto report = evaluate(model, pairs, store, Track::kOpenEnded);
  CHECK(report.predictions ==
        std::vector<ResultEntry>{{1, "red"}, {2, "2"}, {3, "red"}});
  CHECK(report.result.other.accuracy == doctest::Approx(1.0));
  CHECK(report.result.number.accuracy == doctest::Approx(0.6));
  CHECK(report.result.yes_no.accuracy == doctest::Approx(0.0));
  CHECK(report.result.overall.accuracy == doctest::Approx(1.6 / 3));
  CHECK(report.result.overall.count == 3);
  CHECK(report.result.unknown.count == 0);

  const auto json = nlohmann::json::parse(eval_result_json(report.result));
  const double overall = json["overall"];
  CHECK(overall == doctest::Approx(53.33));
  CHECK(json["counts"]["number"] == 1);

  CHECK(top1_accuracy(model, pairs, store) == doctest::Approx(2.0 / 3));
}

TEST_CASE("evaluate the multiple-choice track") {
  const auto model = toy_model();
  const auto store = one_image_store();
  const std::vector<QAPair> pairs = {
      pair(1, {"color"}, AnswerType::kOther, answers_with(10, "blue"), {"blue", "2"}),
      pair(2, {"color"}, AnswerType::kOther, answers_with(10, "yes"), {"purple", "yes"}),
  };
  const auto report = evaluate(model, pairs, store, Track::kMultipleChoice);
  // Red is not offered, so the best offered class wins; unknown choices score 0.
  CHECK(report.predictions == std::vector<ResultEntry>{{1, "2"}, {2, "yes"}});
  CHECK(report.result.overall.accuracy == doctest::Approx(0.5));

  auto missing = pairs;
  missing[0].choices.clear();
  CHECK_THROWS_AS(evaluate(model, missing, store, Track::kMultipleChoice), Error);
}

TEST_CASE("evaluate checks its inputs") {
  const auto model = toy_model();
  const auto store = one_image_store();
  auto p = pair(1, {"color"}, AnswerType::kOther, answers_with(10, "red"));
  p.human_answers.pop_back();
  try {
    evaluate(model, std::vector<QAPair>{p}, store, Track::kOpenEnded);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kSchema);
  }
  auto q = pair(1, {"color"}, AnswerType::kOther, answers_with(10, "red"));
  q.image_id = 99;
  try {
    evaluate(model, std::vector<QAPair>{q}, store, Track::kOpenEnded);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNotFound);
  }
}

TEST_CASE("result export") {
  CHECK(results_to_json({}) == "[]");
  const std::vector<ResultEntry> entries = {{7, "no"}, {3, "two words"}};
  const auto text = results_to_json(entries);
  CHECK(text == R"([{"answer":"two words","question_id":3},{"answer":"no","question_id":7}])");
  auto back = results_from_json(text);
  CHECK(back == std::vector<ResultEntry>{{3, "two words"}, {7, "no"}});

  const std::vector<ResultEntry> dup = {{1, "a"}, {1, "b"}};
  try {
    results_to_json(dup);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIntegrity);
  }
}

}  // TEST_SUITE
