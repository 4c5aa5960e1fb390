#include "ibowimg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "ibowimg/error.hpp"
#include "ibowimg/inference.hpp"
#include "ibowimg/text.hpp"
#include "io.hpp"

namespace ibowimg {

Track parse_track(std::string_view text) {
  if (text == "oe" || text == "open-ended") return Track::kOpenEnded;
  if (text == "mc" || text == "multiple-choice") return Track::kMultipleChoice;
  fail(ErrorKind::kArgument, "unknown track \"" + std::string(text) + "\"");
}

Metric parse_metric(std::string_view text) {
  if (text == "loo" || text == "leave-one-out") return Metric::kLeaveOneOut;
  if (text == "simple") return Metric::kSimple;
  fail(ErrorKind::kArgument, "unknown metric \"" + std::string(text) + "\"");
}

double vqa_accuracy(std::string_view predicted,
                    std::span<const std::string> human_answers, Metric metric) {
  if (human_answers.size() != kHumanAnswers) {
    fail(ErrorKind::kArity, "accuracy needs 10 human answers, got " +
                                std::to_string(human_answers.size()));
  }
  const auto matches = static_cast<int>(
      std::count(human_answers.begin(), human_answers.end(), predicted));
  if (metric == Metric::kSimple) return std::min(matches, 3) / 3.0;

  // Leaving out a matching answer drops the count by one; there are `matches`
  // such subsets and 10 - matches subsets that keep every match.
  const double keep = std::min(matches, 3) / 3.0;
  const double drop = std::min(std::max(matches - 1, 0), 3) / 3.0;
  return ((10 - matches) * keep + matches * drop) / 10.0;
}

EvalReport evaluate(const Model& model, std::span<const QAPair> pairs,
                    const VectorStore& store, Track track, Metric metric) {
  const auto mode = model.hyper.inputs;
  const std::vector<float> zeros(model.params.dims().image, 0.0f);

  EvalReport report;
  double sums[5] = {};
  std::size_t counts[5] = {};
  for (const auto& pair : pairs) {
    if (pair.human_answers.size() != kHumanAnswers) {
      fail(ErrorKind::kSchema, "question " + std::to_string(pair.question_id) +
                                   " has no human answers to score against");
    }
    std::span<const float> image = zeros;
    if (mode != InputMode::kWordsOnly) image = store.view(pair.image_id);

    // The model consumes tokens; rejoin them so the shared tokenizer yields
    // the same bag-of-words.
    std::string text;
    if (mode != InputMode::kImageOnly) {
      for (const auto& t : pair.tokens) {
        if (!text.empty()) text += ' ';
        text += t;
      }
    }
    std::string answer;
    if (track == Track::kMultipleChoice) {
      if (pair.choices.empty()) {
        fail(ErrorKind::kSchema, "question " +
                                     std::to_string(pair.question_id) +
                                     " has no multiple choices");
      }
      answer = normalize_answer(
          predict_multiple_choice(model, text, image, pair.choices).chosen);
    } else {
      answer = predict_topk(model, text, image, 1).answers.front().answer;
    }
    const double acc = vqa_accuracy(answer, pair.human_answers, metric);
    const auto bucket = static_cast<int>(pair.answer_type);
    sums[bucket] += acc;
    ++counts[bucket];
    report.predictions.push_back({pair.question_id, std::move(answer)});
  }

  auto bucket = [&](int i) {
    return Bucket{counts[i] ? sums[i] / static_cast<double>(counts[i]) : 0.0,
                  counts[i]};
  };
  auto& r = report.result;
  r.yes_no = bucket(static_cast<int>(AnswerType::kYesNo));
  r.number = bucket(static_cast<int>(AnswerType::kNumber));
  r.other = bucket(static_cast<int>(AnswerType::kOther));
  r.unknown = bucket(static_cast<int>(AnswerType::kUnknown));
  double total = 0.0;
  for (double s : sums) total += s;
  r.overall = {pairs.empty() ? 0.0 : total / static_cast<double>(pairs.size()),
               pairs.size()};
  return report;
}

double top1_accuracy(const Model& model, std::span<const QAPair> pairs,
                     const VectorStore& store) {
  if (pairs.empty()) return 0.0;
  const auto mode = model.hyper.inputs;
  const std::vector<float> zeros(model.params.dims().image, 0.0f);
  std::size_t correct = 0;
  for (const auto& pair : pairs) {
    BowVector bow;
    if (mode != InputMode::kImageOnly) bow = encode_bow(pair.tokens, model.words);
    std::span<const float> image = zeros;
    if (mode != InputMode::kWordsOnly) image = store.view(pair.image_id);
    const auto r = forward(model.params, bow, image);
    const auto best = rank_top(r, 1).front();
    if (model.answers.at(best) == pair.answer) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

namespace {
double percent(double accuracy) {
  return std::round(accuracy * 10000.0) / 100.0;
}
}  // namespace

std::string eval_result_json(const EvalResult& r) {
  nlohmann::json j{{"overall", percent(r.overall.accuracy)},
                   {"yes_no", percent(r.yes_no.accuracy)},
                   {"number", percent(r.number.accuracy)},
                   {"other", percent(r.other.accuracy)},
                   {"counts",
                    {{"overall", r.overall.count},
                     {"yes_no", r.yes_no.count},
                     {"number", r.number.count},
                     {"other", r.other.count},
                     {"unknown", r.unknown.count}}}};
  return j.dump(2);
}

std::string results_to_json(std::span<const ResultEntry> predictions) {
  std::vector<ResultEntry> sorted(predictions.begin(), predictions.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.question_id < b.question_id; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].question_id == sorted[i - 1].question_id) {
      fail(ErrorKind::kIntegrity, "duplicate question_id " +
                                      std::to_string(sorted[i].question_id) +
                                      " in results");
    }
  }
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : sorted) {
    j.push_back({{"question_id", e.question_id}, {"answer", e.answer}});
  }
  return j.dump();
}

std::vector<ResultEntry> results_from_json(std::string_view text) {
  const auto j = detail::parse_json(text, "results");
  if (!j.is_array()) fail(ErrorKind::kSchema, "results: expected an array");
  std::vector<ResultEntry> out;
  try {
    for (const auto& e : j) {
      out.push_back({e.at("question_id").get<QuestionId>(),
                     e.at("answer").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSchema, std::string("results: ") + e.what());
  }
  return out;
}

void export_results(std::span<const ResultEntry> predictions,
                    const std::filesystem::path& file) {
  detail::write_file(file, results_to_json(predictions) + "\n");
}

}  // namespace ibowimg
