#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ibowimg/checkpoint.hpp"
#include "ibowimg/features.hpp"

namespace ibowimg {

struct AnswerScore {
  std::uint32_t class_index = 0;
  std::string answer;
  double logit = 0.0;
  double prob = 0.0;
  double word_contrib = 0.0;
  double image_contrib = 0.0;
  double bias_contrib = 0.0;
};

struct Prediction {
  std::vector<AnswerScore> answers;  // by logit descending
  std::vector<std::string> warnings;
};

struct RankedAnswer {
  std::uint32_t class_index = 0;
  std::string answer;
  double score = 0.0;
};

// Indices of the k largest scores, descending; equal scores keep the lower
// index first.
std::vector<std::uint32_t> rank_top(std::span<const double> scores,
                                    std::size_t k);

Decomposition decompose(const Model& model, std::string_view question,
                        std::span<const float> image);

Prediction predict_topk(const Model& model, std::string_view question,
                        std::span<const float> image, std::size_t k);

std::vector<RankedAnswer> words_only_topk(const Model& model,
                                          std::string_view question,
                                          std::size_t k);
std::vector<RankedAnswer> image_only_topk(const Model& model,
                                          std::span<const float> image,
                                          std::size_t k);

struct ChoiceScore {
  std::string choice;
  double prob = 0.0;
  bool in_vocabulary = false;
};

struct MultipleChoiceResult {
  std::string chosen;
  std::size_t chosen_index = 0;
  std::vector<ChoiceScore> choices;
  // True when no choice maps to a known answer class.
  bool unscored = false;
};

// Choices are normalized like annotation answers before lookup; unknown
// choices score zero.
MultipleChoiceResult predict_multiple_choice(
    const Model& model, std::string_view question, std::span<const float> image,
    std::span<const std::string> choices);

struct TokenImportance {
  std::string token;
  std::uint32_t count = 0;
  double value = 0.0;  // count * (M_w E)[class, word]
  std::size_t rank = 0;
  bool out_of_vocabulary = false;
};

struct WordImportance {
  std::uint32_t class_index = 0;
  std::vector<TokenImportance> tokens;  // descending value

  double total() const;
};

WordImportance word_importance(const Model& model, std::string_view question,
                               std::uint32_t class_index);

struct CamGrid {
  std::uint32_t h = 0;
  std::uint32_t w = 0;
  std::vector<double> values;  // row-major, h x w

  double at(std::uint32_t x, std::uint32_t y) const { return values[x * w + y]; }
  double mean() const;
  // Min-max scaled copy in [0, 1]; all zeros when the grid is flat.
  CamGrid normalized() const;
};

CamGrid cam(const ModelParams& params, const ConvFeatureMap& map,
            std::uint32_t class_index);

// Corner-aligned bilinear resampling; output dims must not shrink the grid.
CamGrid upsample_bilinear(const CamGrid& grid, std::uint32_t out_h,
                          std::uint32_t out_w);

// "answer (r = r_v [image] + r_w [word])" with two decimals. The word term is
// printed as the difference of the rounded values so the line always adds up.
std::string format_attribution(const AnswerScore& score);

// Everything the explain command and the HTTP service report for a query.
struct Explanation {
  std::string question;
  ImageId image_id = 0;
  std::vector<std::string> tokens;
  Prediction prediction;
  std::vector<RankedAnswer> words_only;
  std::vector<RankedAnswer> image_only;
  WordImportance importance;  // for the top-1 answer
  std::optional<CamGrid> cam;
  std::vector<std::string> flags;
};

Explanation explain(const Model& model, std::string_view question,
                    ImageId image_id, std::span<const float> image,
                    std::size_t k, std::size_t side_k = 3,
                    const ConvFeatureMap* map = nullptr);

void to_json(nlohmann::json& j, const AnswerScore& s);
void to_json(nlohmann::json& j, const RankedAnswer& r);
void to_json(nlohmann::json& j, const TokenImportance& t);
void to_json(nlohmann::json& j, const CamGrid& g);
void to_json(nlohmann::json& j, const Explanation& e);
void to_json(nlohmann::json& j, const MultipleChoiceResult& r);

// Plain PGM (P2) of the normalized grid scaled to 0..255.
std::string to_pgm(const CamGrid& grid);

}  // namespace ibowimg
