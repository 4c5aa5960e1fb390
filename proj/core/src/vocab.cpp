#include "ibowimg/vocab.hpp"

#include <algorithm>
#include <map>

#include <nlohmann/json.hpp>

#include "ibowimg/error.hpp"
#include "io.hpp"

namespace ibowimg {

Dictionary::Dictionary(std::vector<std::string> entries, std::size_t min_count)
    : entries_(std::move(entries)), min_count_(min_count) {
  index_.reserve(entries_.size());
  for (std::uint32_t i = 0; i < entries_.size(); ++i) {
    if (!index_.emplace(entries_[i], i).second) {
      fail(ErrorKind::kIntegrity, "duplicate dictionary entry \"" +
                                      entries_[i] + "\"");
    }
  }
}

std::optional<std::uint32_t> Dictionary::find(std::string_view key) const {
  auto it = index_.find(std::string(key));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

namespace {

template <typename Visit>
Dictionary build_thresholded(std::span<const QAPair> pairs,
                             std::size_t min_count, Visit visit) {
  if (min_count < 1) fail(ErrorKind::kArgument, "min_count must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& p : pairs) visit(p, counts);

  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [key, n] : counts) {
    if (n >= min_count) kept.emplace_back(key, n);
  }
  // counts is lexicographic already; stable_sort keeps that order on ties.
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> entries;
  entries.reserve(kept.size());
  for (auto& [key, n] : kept) entries.push_back(std::move(key));
  return Dictionary(std::move(entries), min_count);
}

}  // namespace

WordDict build_word_dict(std::span<const QAPair> pairs, std::size_t min_count) {
  return build_thresholded(pairs, min_count, [](const QAPair& p, auto& counts) {
    for (const auto& t : p.tokens) ++counts[t];
  });
}

AnswerDict build_answer_dict(std::span<const QAPair> pairs,
                             std::size_t min_count) {
  return build_thresholded(pairs, min_count, [](const QAPair& p, auto& counts) {
    ++counts[p.answer];
  });
}

std::size_t BowVector::total() const {
  std::size_t n = 0;
  for (const auto& [index, c] : entries) n += c;
  return n;
}

std::uint32_t BowVector::count(std::uint32_t index) const {
  auto it = std::lower_bound(
      entries.begin(), entries.end(), index,
      [](const auto& e, std::uint32_t i) { return e.first < i; });
  return (it != entries.end() && it->first == index) ? it->second : 0;
}

BowVector encode_bow(std::span<const std::string> tokens, const WordDict& dict) {
  std::map<std::uint32_t, std::uint32_t> counts;
  for (const auto& t : tokens) {
    if (auto idx = dict.find(t)) ++counts[*idx];
  }
  BowVector bow;
  bow.entries.assign(counts.begin(), counts.end());
  return bow;
}

namespace {
const char* dict_key(DictKind kind) {
  return kind == DictKind::kWords ? "words" : "answers";
}
}  // namespace

std::string dict_to_json(const Dictionary& dict, DictKind kind) {
  nlohmann::json j{{dict_key(kind), dict.entries()},
                   {"min_count", dict.min_count()}};
  return j.dump();
}

Dictionary dict_from_json(std::string_view text, DictKind kind) {
  const auto j = detail::parse_json(text, "dictionary");
  try {
    return Dictionary(j.at(dict_key(kind)).get<std::vector<std::string>>(),
                      j.value("min_count", std::size_t{1}));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSchema, std::string("dictionary: ") + e.what());
  }
}

void save_dict(const std::filesystem::path& file, const Dictionary& dict,
               DictKind kind) {
  detail::write_file(file, dict_to_json(dict, kind) + "\n");
}

Dictionary load_dict(const std::filesystem::path& file, DictKind kind) {
  return dict_from_json(detail::read_file(file), kind);
}

}  // namespace ibowimg
