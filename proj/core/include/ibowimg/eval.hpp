#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ibowimg/checkpoint.hpp"
#include "ibowimg/corpus.hpp"
#include "ibowimg/features.hpp"

namespace ibowimg {

enum class Track { kOpenEnded, kMultipleChoice };
enum class Metric {
  kLeaveOneOut,  // mean over the ten 9-answer subsets (VQA convention)
  kSimple,       // min(matches / 3, 1)
};

Track parse_track(std::string_view text);
Metric parse_metric(std::string_view text);

double vqa_accuracy(std::string_view predicted,
                    std::span<const std::string> human_answers,
                    Metric metric = Metric::kLeaveOneOut);

struct Bucket {
  double accuracy = 0.0;  // in [0, 1]
  std::size_t count = 0;
};

struct EvalResult {
  Bucket overall;
  Bucket yes_no;
  Bucket number;
  Bucket other;
  Bucket unknown;
};

struct ResultEntry {
  QuestionId question_id = 0;
  std::string answer;

  bool operator==(const ResultEntry&) const = default;
};

struct EvalReport {
  EvalResult result;
  std::vector<ResultEntry> predictions;  // input order
};

// Pairs must carry their ten human answers; multiple-choice pairs also their
// choices. The image input is masked according to model.hyper.inputs.
EvalReport evaluate(const Model& model, std::span<const QAPair> pairs,
                    const VectorStore& store, Track track,
                    Metric metric = Metric::kLeaveOneOut);

// Fraction of pairs whose top-1 answer equals the majority answer.
double top1_accuracy(const Model& model, std::span<const QAPair> pairs,
                     const VectorStore& store);

// {"overall", "yes_no", "number", "other"} as percentages with 2 decimals,
// plus per-bucket counts.
std::string eval_result_json(const EvalResult& result);

// Sorted JSON array of {"question_id", "answer"}; duplicate ids are rejected.
std::string results_to_json(std::span<const ResultEntry> predictions);
std::vector<ResultEntry> results_from_json(std::string_view text);
void export_results(std::span<const ResultEntry> predictions,
                    const std::filesystem::path& file);

}  // namespace ibowimg
