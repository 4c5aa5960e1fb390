#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "ibowimg/corpus.hpp"
#include "ibowimg/error.hpp"
#include "ibowimg/synth.hpp"
#include "ibowimg/text.hpp"
#include "temp_dir.hpp"

using namespace ibowimg;

namespace {

std::vector<std::string> answers(std::initializer_list<std::pair<const char*, int>> spec) {
  std::vector<std::string> out;
  for (auto [a, n] : spec) out.insert(out.end(), static_cast<std::size_t>(n), a);
  return out;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an ibowimg::Error");
  return ErrorKind::kIo;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("normalize_answer") {
  CHECK(normalize_answer("  Yes. ") == "yes");
  CHECK(normalize_answer("Playing   Baseball!!") == "playing baseball");
  CHECK(normalize_answer("yes .") == "yes");
  CHECK(normalize_answer("?") == "");
  CHECK(normalize_answer("u.s.a.") == "u.s.a");
}

TEST_CASE("parse_questions") {
  const auto qs = parse_questions_json(R"({"questions": [
      {"question_id": 1, "image_id": 10, "question": "What is the color of sofa?"},
      {"question_id": 2, "image_id": 10, "question": "Which brand is the laptop?"},
      {"question_id": 3, "image_id": 11, "question": "What are they doing?"}]})");
  REQUIRE(qs.size() == 3);
  CHECK(qs[0].question_id == 1);
  CHECK(qs[1].question_id == 2);
  CHECK(qs[2].image_id == 11);

  CHECK(parse_questions_json(R"({"questions": []})").empty());

  SUBCASE("missing field names record and field") {
    try {
      parse_questions_json(R"({"questions": [{"question_id": 1, "question": "x"}]})");
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kSchema);
      CHECK(std::string(e.what()).find("record 0") != std::string::npos);
      CHECK(std::string(e.what()).find("image_id") != std::string::npos);
    }
  }
  SUBCASE("malformed JSON reports a byte offset") {
    try {
      parse_questions_json(R"({"questions": [ {"question_id": 1,, }]})");
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kParse);
      CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
  }
  SUBCASE("multiple choice file") {
    const auto mc = parse_questions_json(R"({"questions": [
        {"question_id": 4, "image_id": 1, "question": "Is it red?",
         "multiple_choices": ["yes", "no", "2"]}]})");
    CHECK(mc[0].choices == std::vector<std::string>{"yes", "no", "2"});
  }
}

TEST_CASE("parse_annotations normalizes and checks arity") {
  const auto recs = parse_annotations_json(R"({"annotations": [
      {"question_id": 1, "image_id": 10, "answer_type": "yes/no",
       "answers": [{"answer": "Yes"}, {"answer": "yes."}, {"answer": "yes"},
                   {"answer": "no"}, {"answer": "yes"}, {"answer": "yes"},
                   {"answer": "No"}, {"answer": "yes"}, {"answer": "no"},
                   {"answer": "no"}]}]})");
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].answer_type == AnswerType::kYesNo);
  CHECK(std::count(recs[0].human_answers.begin(), recs[0].human_answers.end(), "yes") == 6);

  CHECK(kind_of([] {
          parse_annotations_json(R"({"annotations": [{"question_id": 1,
              "image_id": 1, "answers": [{"answer": "a"}]}]})");
        }) == ErrorKind::kArity);
  const auto unknown = parse_annotations_json(R"({"annotations": [{"question_id": 1,
      "image_id": 1, "answers": [{"answer": "a"},{"answer": "a"},{"answer": "a"},
      {"answer": "a"},{"answer": "a"},{"answer": "a"},{"answer": "a"},{"answer": "a"},
      {"answer": "a"},{"answer": "a"}]}]})");
  CHECK(unknown[0].answer_type == AnswerType::kUnknown);
}

TEST_CASE("majority_vote") {
  CHECK(majority_vote(answers({{"yes", 6}, {"no", 4}})) == "yes");
  CHECK(majority_vote(answers({{"red", 10}})) == "red");
  // 5/5 tie without global counts: brute-force count gives {2:5, two:5};
  // the lexicographic rule picks "2".
  CHECK(majority_vote(answers({{"2", 5}, {"two", 5}})) == "2");

  AnswerFrequency freq{{"two", 100}, {"2", 3}};
  CHECK(majority_vote(answers({{"2", 5}, {"two", 5}}), &freq) == "two");

  CHECK(kind_of([] { majority_vote(answers({{"yes", 9}})); }) == ErrorKind::kArity);
  CHECK(kind_of([] { majority_vote(answers({{"yes", 11}})); }) == ErrorKind::kArity);
}

TEST_CASE("majority_vote is permutation invariant") {
  std::mt19937_64 rng(7);
  const std::vector<std::string> pool = {"a", "b", "c", "d"};
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  AnswerFrequency freq{{"a", 2}, {"b", 5}, {"c", 5}, {"d", 1}};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> v;
    for (int i = 0; i < 10; ++i) v.push_back(pool[pick(rng)]);
    const auto expected = majority_vote(v, &freq);
    for (int shuffle = 0; shuffle < 5; ++shuffle) {
      std::shuffle(v.begin(), v.end(), rng);
      CHECK(majority_vote(v, &freq) == expected);
    }
  }
}

TEST_CASE("build_pairs") {
  std::vector<Question> qs = {{1, 10, "Is this a sofa?", {}}};
  std::vector<AnnotationRecord> as = {
      {1, 10, answers({{"yes", 6}, {"no", 4}}), AnswerType::kYesNo}};
  const auto pairs = build_pairs(qs, as);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].answer == "yes");
  CHECK(pairs[0].tokens == std::vector<std::string>{"is", "this", "a", "sofa"});
  CHECK(pairs[0].image_id == 10);

  as.push_back({99, 10, answers({{"no", 10}}), AnswerType::kYesNo});
  try {
    build_pairs(qs, as);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kJoin);
    CHECK(std::string(e.what()).find("99") != std::string::npos);
  }
}

TEST_CASE("split_by_image") {
  std::vector<QAPair> pairs;
  for (ImageId img = 0; img < 10; ++img) {
    for (int q = 0; q < 3; ++q) {
      pairs.push_back({img * 10 + static_cast<QuestionId>(q), img, {"w"}, "a",
                       AnswerType::kOther, {}, {}});
    }
  }
  const auto s = split_by_image(pairs, 0.7, 42);
  CHECK(s.a.size() == 21);
  CHECK(s.b.size() == 9);
  std::set<ImageId> a_ids, b_ids;
  for (const auto& p : s.a) a_ids.insert(p.image_id);
  for (const auto& p : s.b) b_ids.insert(p.image_id);
  CHECK(a_ids.size() == 7);
  CHECK(b_ids.size() == 3);
  for (auto id : a_ids) CHECK_FALSE(b_ids.contains(id));

  const auto again = split_by_image(pairs, 0.7, 42);
  CHECK(again.spec.assignment == s.spec.assignment);
  CHECK(again.a == s.a);

  const auto other_seed = split_by_image(pairs, 0.7, 43);
  CHECK(other_seed.a.size() == 21);

  const auto empty = split_by_image(std::vector<QAPair>{}, 0.7, 1);
  CHECK(empty.a.empty());
  CHECK(empty.b.empty());
  CHECK(kind_of([&] { split_by_image(pairs, 1.0, 1); }) == ErrorKind::kArgument);
}

TEST_CASE("split is a partition for random corpora and fractions") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto raw = synth::make_vqa_corpus(1 + rng() % 60, 1 + rng() % 4, rng());
    const auto pairs = build_pairs(raw.questions, raw.annotations);
    const double fraction = 0.05 + 0.9 * std::uniform_real_distribution<double>(0, 1)(rng);
    const auto s = split_by_image(pairs, fraction, rng());
    CHECK(s.a.size() + s.b.size() == pairs.size());
    std::set<ImageId> a_ids, b_ids, all;
    for (const auto& p : s.a) a_ids.insert(p.image_id);
    for (const auto& p : s.b) b_ids.insert(p.image_id);
    for (const auto& p : pairs) all.insert(p.image_id);
    for (auto id : a_ids) CHECK_FALSE(b_ids.contains(id));
    const double target = fraction * static_cast<double>(all.size());
    CHECK(std::abs(static_cast<double>(a_ids.size()) - target) <= 1.0);
  }
}

TEST_CASE("pairs JSON-lines round trip") {
  testing_support::TempDir dir;
  const auto raw = synth::make_vqa_corpus(5, 3, 11);
  const auto pairs = build_pairs(raw.questions, raw.annotations);
  write_pairs(dir / "pairs.jsonl", pairs);
  CHECK(read_pairs(dir / "pairs.jsonl") == pairs);
}

TEST_CASE("VQA JSON writers parse back") {
  const auto raw = synth::make_vqa_corpus(4, 3, 5);
  const auto qs = parse_questions_json(questions_to_json(raw.questions));
  REQUIRE(qs.size() == raw.questions.size());
  CHECK(qs[3].text == raw.questions[3].text);
  const auto as = parse_annotations_json(annotations_to_json(raw.annotations));
  REQUIRE(as.size() == raw.annotations.size());
  for (std::size_t i = 0; i < as.size(); ++i) {
    for (std::size_t k = 0; k < kHumanAnswers; ++k) {
      CHECK(as[i].human_answers[k] == normalize_answer(raw.annotations[i].human_answers[k]));
    }
  }
}

}  // TEST_SUITE
