#include "ibowimg/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "ibowimg/error.hpp"
#include "ibowimg/text.hpp"
#include "io.hpp"

namespace ibowimg {

using nlohmann::json;

std::string_view to_string(AnswerType type) {
  switch (type) {
    case AnswerType::kYesNo: return "yes/no";
    case AnswerType::kNumber: return "number";
    case AnswerType::kOther: return "other";
    case AnswerType::kUnknown: return "unknown";
  }
  return "unknown";
}

AnswerType parse_answer_type(std::string_view text) {
  if (text == "yes/no") return AnswerType::kYesNo;
  if (text == "number") return AnswerType::kNumber;
  if (text == "other") return AnswerType::kOther;
  return AnswerType::kUnknown;
}

namespace {

const json& require(const json& record, const char* field, std::size_t index,
                    std::string_view source) {
  auto it = record.find(field);
  if (it == record.end()) {
    fail(ErrorKind::kSchema, std::string(source) + ": record " +
                                 std::to_string(index) + " is missing \"" +
                                 field + "\"");
  }
  return *it;
}

template <typename T>
T require_as(const json& record, const char* field, std::size_t index,
             std::string_view source) {
  const json& value = require(record, field, index, source);
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::kSchema, std::string(source) + ": record " +
                                 std::to_string(index) + " has a bad \"" +
                                 field + "\"");
  }
}

std::uint64_t require_id(const json& record, const char* field,
                         std::size_t index, std::string_view source) {
  const json& value = require(record, field, index, source);
  if (!value.is_number_integer() ||
      (value.is_number_integer() && !value.is_number_unsigned() &&
       value.get<std::int64_t>() < 0)) {
    fail(ErrorKind::kSchema, std::string(source) + ": record " +
                                 std::to_string(index) + " has a bad \"" +
                                 field + "\"");
  }
  return value.get<std::uint64_t>();
}

const json& require_array(const json& root, const char* key,
                          std::string_view source) {
  if (!root.is_object() || !root.contains(key) || !root.at(key).is_array()) {
    fail(ErrorKind::kSchema, std::string(source) + ": expected top-level \"" +
                                 key + "\" array");
  }
  return root.at(key);
}

}  // namespace

std::vector<Question> parse_questions_json(std::string_view text) {
  constexpr std::string_view kSource = "questions";
  const json root = detail::parse_json(text, kSource);
  const json& records = require_array(root, "questions", kSource);

  std::vector<Question> out;
  out.reserve(records.size());
  std::unordered_set<QuestionId> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const json& r = records[i];
    Question q;
    q.question_id = require_id(r, "question_id", i, kSource);
    q.image_id = require_id(r, "image_id", i, kSource);
    q.text = require_as<std::string>(r, "question", i, kSource);
    if (q.text.empty()) {
      fail(ErrorKind::kSchema,
           "questions: record " + std::to_string(i) + " has empty text");
    }
    if (r.contains("multiple_choices")) {
      q.choices =
          require_as<std::vector<std::string>>(r, "multiple_choices", i,
                                               kSource);
    }
    if (!seen.insert(q.question_id).second) {
      fail(ErrorKind::kIntegrity, "questions: duplicate question_id " +
                                      std::to_string(q.question_id));
    }
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<Question> parse_questions(const std::filesystem::path& file) {
  return parse_questions_json(detail::read_file(file));
}

std::vector<AnnotationRecord> parse_annotations_json(std::string_view text) {
  constexpr std::string_view kSource = "annotations";
  const json root = detail::parse_json(text, kSource);
  const json& records = require_array(root, "annotations", kSource);

  std::vector<AnnotationRecord> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const json& r = records[i];
    AnnotationRecord a;
    a.question_id = require_id(r, "question_id", i, kSource);
    a.image_id = require_id(r, "image_id", i, kSource);
    if (auto it = r.find("answer_type"); it != r.end() && it->is_string()) {
      a.answer_type = parse_answer_type(it->get<std::string>());
    }
    const json& answers = require(r, "answers", i, kSource);
    if (!answers.is_array()) {
      fail(ErrorKind::kSchema, "annotations: record " + std::to_string(i) +
                                   " has a bad \"answers\"");
    }
    if (answers.size() != kHumanAnswers) {
      fail(ErrorKind::kArity, "annotations: record " + std::to_string(i) +
                                  " has " + std::to_string(answers.size()) +
                                  " answers, expected 10");
    }
    for (std::size_t k = 0; k < answers.size(); ++k) {
      auto raw = require_as<std::string>(answers[k], "answer", i, kSource);
      auto norm = normalize_answer(raw);
      if (norm.empty()) {
        fail(ErrorKind::kSchema, "annotations: record " + std::to_string(i) +
                                     " answer " + std::to_string(k) +
                                     " is empty after normalization");
      }
      a.human_answers.push_back(std::move(norm));
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<AnnotationRecord> parse_annotations(
    const std::filesystem::path& file) {
  return parse_annotations_json(detail::read_file(file));
}

AnswerFrequency count_answers(std::span<const AnnotationRecord> annotations) {
  AnswerFrequency freq;
  for (const auto& a : annotations) {
    for (const auto& ans : a.human_answers) ++freq[ans];
  }
  return freq;
}

std::string majority_vote(std::span<const std::string> answers,
                          const AnswerFrequency* global_frequency) {
  if (answers.size() != kHumanAnswers) {
    fail(ErrorKind::kArity, "majority vote needs 10 answers, got " +
                                std::to_string(answers.size()));
  }
  std::map<std::string_view, std::size_t> counts;
  for (const auto& a : answers) ++counts[a];

  auto global = [&](std::string_view a) -> std::size_t {
    if (global_frequency == nullptr) return 0;
    auto it = global_frequency->find(std::string(a));
    return it == global_frequency->end() ? 0 : it->second;
  };

  // std::map iterates lexicographically, so a strict ">" keeps the smaller
  // string on a full tie.
  std::string_view best;
  std::size_t best_count = 0;
  std::size_t best_global = 0;
  for (const auto& [answer, count] : counts) {
    const std::size_t g = global(answer);
    if (count > best_count || (count == best_count && g > best_global)) {
      best = answer;
      best_count = count;
      best_global = g;
    }
  }
  return std::string(best);
}

std::vector<QAPair> build_pairs(std::span<const Question> questions,
                                std::span<const AnnotationRecord> annotations) {
  std::unordered_map<QuestionId, const Question*> by_id;
  by_id.reserve(questions.size());
  for (const auto& q : questions) by_id.emplace(q.question_id, &q);

  std::set<QuestionId> missing;
  for (const auto& a : annotations) {
    if (!by_id.contains(a.question_id)) missing.insert(a.question_id);
  }
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "annotations reference unknown question ids:";
    for (auto id : missing) msg << ' ' << id;
    fail(ErrorKind::kJoin, msg.str());
  }

  const AnswerFrequency freq = count_answers(annotations);
  std::vector<QAPair> pairs;
  pairs.reserve(annotations.size());
  for (const auto& a : annotations) {
    const Question& q = *by_id.at(a.question_id);
    QAPair p;
    p.question_id = a.question_id;
    p.image_id = q.image_id;
    p.tokens = tokenize(q.text);
    p.answer = majority_vote(a.human_answers, &freq);
    p.answer_type = a.answer_type;
    p.human_answers = a.human_answers;
    p.choices = q.choices;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

SplitResult split_by_image(std::span<const QAPair> pairs, double fraction_a,
                           std::uint64_t seed) {
  if (!(fraction_a > 0.0 && fraction_a < 1.0)) {
    fail(ErrorKind::kArgument, "split fraction must lie in (0, 1)");
  }
  std::set<ImageId> images;
  for (const auto& p : pairs) images.insert(p.image_id);

  const std::uint64_t salt = detail::splitmix64(seed);
  std::vector<std::pair<std::uint64_t, ImageId>> ranked;
  ranked.reserve(images.size());
  for (ImageId id : images) {
    ranked.emplace_back(detail::splitmix64(id ^ salt), id);
  }
  std::sort(ranked.begin(), ranked.end());

  const auto n_a = static_cast<std::size_t>(
      std::llround(fraction_a * static_cast<double>(ranked.size())));

  SplitResult result;
  result.spec.seed = seed;
  result.spec.fraction_a = fraction_a;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    result.spec.assignment[ranked[i].second] = i < n_a ? Subset::kA : Subset::kB;
  }
  for (const auto& p : pairs) {
    if (result.spec.assignment.at(p.image_id) == Subset::kA) {
      result.a.push_back(p);
    } else {
      result.b.push_back(p);
    }
  }
  return result;
}

void to_json(json& j, const QAPair& p) {
  j = json{{"question_id", p.question_id},
           {"image_id", p.image_id},
           {"tokens", p.tokens},
           {"answer", p.answer},
           {"answer_type", std::string(to_string(p.answer_type))}};
  if (!p.human_answers.empty()) j["answers"] = p.human_answers;
  if (!p.choices.empty()) j["choices"] = p.choices;
}

void from_json(const json& j, QAPair& p) {
  p.question_id = j.at("question_id").get<QuestionId>();
  p.image_id = j.at("image_id").get<ImageId>();
  p.tokens = j.at("tokens").get<std::vector<std::string>>();
  p.answer = j.at("answer").get<std::string>();
  p.answer_type = parse_answer_type(j.value("answer_type", "unknown"));
  p.human_answers = j.value("answers", std::vector<std::string>{});
  p.choices = j.value("choices", std::vector<std::string>{});
}

std::string pair_to_json_line(const QAPair& pair) {
  return json(pair).dump();
}

QAPair pair_from_json_line(std::string_view line) {
  const json j = detail::parse_json(line, "pairs");
  try {
    return j.get<QAPair>();
  } catch (const json::exception& e) {
    fail(ErrorKind::kSchema, std::string("pairs: ") + e.what());
  }
}

void write_pairs(const std::filesystem::path& file,
                 std::span<const QAPair> pairs) {
  std::string out;
  for (const auto& p : pairs) {
    out += pair_to_json_line(p);
    out += '\n';
  }
  detail::write_file(file, out);
}

std::vector<QAPair> read_pairs(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) fail(ErrorKind::kNotFound, "cannot open " + file.string());
  std::vector<QAPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      pairs.push_back(pair_from_json_line(line));
    } catch (const Error& e) {
      fail(e.kind(), file.string() + ":" + std::to_string(line_no) + ": " +
                         e.what());
    }
  }
  return pairs;
}

std::string questions_to_json(std::span<const Question> questions) {
  json records = json::array();
  for (const auto& q : questions) {
    json r{{"question_id", q.question_id},
           {"image_id", q.image_id},
           {"question", q.text}};
    if (!q.choices.empty()) r["multiple_choices"] = q.choices;
    records.push_back(std::move(r));
  }
  return json{{"questions", std::move(records)}}.dump();
}

std::string annotations_to_json(std::span<const AnnotationRecord> annotations) {
  json records = json::array();
  for (const auto& a : annotations) {
    json answers = json::array();
    for (std::size_t i = 0; i < a.human_answers.size(); ++i) {
      answers.push_back({{"answer", a.human_answers[i]}, {"answer_id", i + 1}});
    }
    json r{{"question_id", a.question_id},
           {"image_id", a.image_id},
           {"answers", std::move(answers)}};
    if (a.answer_type != AnswerType::kUnknown) {
      r["answer_type"] = std::string(to_string(a.answer_type));
    }
    records.push_back(std::move(r));
  }
  return json{{"annotations", std::move(records)}}.dump();
}

void write_split(const std::filesystem::path& file, const SplitSpec& spec) {
  json a = json::array();
  json b = json::array();
  for (const auto& [id, subset] : spec.assignment) {
    (subset == Subset::kA ? a : b).push_back(id);
  }
  json j{{"seed", spec.seed},
         {"fraction_a", spec.fraction_a},
         {"a", std::move(a)},
         {"b", std::move(b)}};
  detail::write_file(file, j.dump(2) + "\n");
}

}  // namespace ibowimg
