#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ibowimg/corpus.hpp"

namespace ibowimg {

// Dense string -> index dictionary. Entries are ordered by descending training
// frequency, ties broken lexicographically.
class Dictionary {
 public:
  Dictionary() = default;
  Dictionary(std::vector<std::string> entries, std::size_t min_count);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t min_count() const { return min_count_; }

  std::optional<std::uint32_t> find(std::string_view key) const;
  bool contains(std::string_view key) const { return find(key).has_value(); }
  const std::string& at(std::uint32_t index) const { return entries_.at(index); }
  const std::vector<std::string>& entries() const { return entries_; }

  bool operator==(const Dictionary& other) const {
    return entries_ == other.entries_ && min_count_ == other.min_count_;
  }

 private:
  std::vector<std::string> entries_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::size_t min_count_ = 1;
};

using WordDict = Dictionary;
using AnswerDict = Dictionary;

WordDict build_word_dict(std::span<const QAPair> pairs, std::size_t min_count);
AnswerDict build_answer_dict(std::span<const QAPair> pairs,
                             std::size_t min_count);

// Sparse bag-of-words: (word index, count) sorted by index, counts >= 1.
struct BowVector {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> entries;

  bool empty() const { return entries.empty(); }
  std::size_t total() const;
  std::uint32_t count(std::uint32_t index) const;
  bool operator==(const BowVector&) const = default;
};

// Out-of-dictionary tokens are dropped.
BowVector encode_bow(std::span<const std::string> tokens, const WordDict& dict);

// {"words": [...], "min_count": n} or {"answers": [...], "min_count": n}.
enum class DictKind { kWords, kAnswers };

std::string dict_to_json(const Dictionary& dict, DictKind kind);
Dictionary dict_from_json(std::string_view text, DictKind kind);
void save_dict(const std::filesystem::path& file, const Dictionary& dict,
               DictKind kind);
Dictionary load_dict(const std::filesystem::path& file, DictKind kind);

}  // namespace ibowimg
