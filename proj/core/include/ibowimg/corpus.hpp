#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace ibowimg {

using ImageId = std::uint64_t;
using QuestionId = std::uint64_t;

inline constexpr std::size_t kHumanAnswers = 10;

enum class AnswerType { kYesNo, kNumber, kOther, kUnknown };

std::string_view to_string(AnswerType type);
// Accepts the VQA spellings ("yes/no", "number", "other"); anything else is
// kUnknown.
AnswerType parse_answer_type(std::string_view text);

struct Question {
  QuestionId question_id = 0;
  ImageId image_id = 0;
  std::string text;
  // Only populated for multiple-choice files.
  std::vector<std::string> choices;
};

struct AnnotationRecord {
  QuestionId question_id = 0;
  ImageId image_id = 0;
  std::vector<std::string> human_answers;  // 10, normalized
  AnswerType answer_type = AnswerType::kUnknown;
};

struct QAPair {
  QuestionId question_id = 0;
  ImageId image_id = 0;
  std::vector<std::string> tokens;
  std::string answer;
  AnswerType answer_type = AnswerType::kUnknown;
  // Carried along so the evaluation harness can score against the raw
  // annotations; empty for pairs that did not come from annotations.
  std::vector<std::string> human_answers;
  std::vector<std::string> choices;

  bool operator==(const QAPair&) const = default;
};

// Reads {"questions": [...]}; "multiple_choices" is picked up when present.
std::vector<Question> parse_questions(const std::filesystem::path& file);
std::vector<Question> parse_questions_json(std::string_view text);

// Reads {"annotations": [...]} and normalizes every answer.
std::vector<AnnotationRecord> parse_annotations(
    const std::filesystem::path& file);
std::vector<AnnotationRecord> parse_annotations_json(std::string_view text);

// Corpus-wide answer counts used to break voting ties.
using AnswerFrequency = std::unordered_map<std::string, std::size_t>;

AnswerFrequency count_answers(std::span<const AnnotationRecord> annotations);

// Modal answer of exactly ten normalized answers. Ties go to the answer with
// the higher global frequency, then to the lexicographically smaller one.
std::string majority_vote(std::span<const std::string> answers,
                          const AnswerFrequency* global_frequency = nullptr);

std::vector<QAPair> build_pairs(std::span<const Question> questions,
                                std::span<const AnnotationRecord> annotations);

enum class Subset { kA, kB };

struct SplitSpec {
  std::uint64_t seed = 0;
  double fraction_a = 0.7;
  std::map<ImageId, Subset> assignment;
};

struct SplitResult {
  std::vector<QAPair> a;
  std::vector<QAPair> b;
  SplitSpec spec;
};

// Images are ranked by a seeded hash of their id and the first
// round(fraction_a * n_images) go to A. Pairs keep their input order.
SplitResult split_by_image(std::span<const QAPair> pairs, double fraction_a,
                           std::uint64_t seed);

// JSON-lines pair files, one QAPair object per line.
void write_pairs(const std::filesystem::path& file,
                 std::span<const QAPair> pairs);
std::vector<QAPair> read_pairs(const std::filesystem::path& file);
std::string pair_to_json_line(const QAPair& pair);
QAPair pair_from_json_line(std::string_view line);

// Inverse of the parsers, producing the VQA JSON layout.
std::string questions_to_json(std::span<const Question> questions);
std::string annotations_to_json(std::span<const AnnotationRecord> annotations);

void write_split(const std::filesystem::path& file, const SplitSpec& spec);

void to_json(nlohmann::json& j, const QAPair& pair);
void from_json(const nlohmann::json& j, QAPair& pair);

}  // namespace ibowimg
