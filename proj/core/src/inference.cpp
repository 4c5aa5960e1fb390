#include "ibowimg/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ibowimg/error.hpp"
#include "ibowimg/text.hpp"

namespace ibowimg {

std::vector<std::uint32_t> rank_top(std::span<const double> scores,
                                    std::size_t k) {
  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  k = std::min(k, order.size());
  auto better = [&](std::uint32_t a, std::uint32_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                    order.end(), better);
  order.resize(k);
  return order;
}

namespace {

BowVector encode_question(const Model& model, std::string_view question) {
  return encode_bow(tokenize(question), model.words);
}

std::vector<RankedAnswer> ranked(const Model& model,
                                 std::span<const double> scores,
                                 std::size_t k) {
  std::vector<RankedAnswer> out;
  for (auto idx : rank_top(scores, k)) {
    out.push_back({idx, model.answers.at(idx), scores[idx]});
  }
  return out;
}

}  // namespace

Decomposition decompose(const Model& model, std::string_view question,
                        std::span<const float> image) {
  return decompose(model.params, encode_question(model, question), image);
}

namespace {

Prediction prediction_from(const Model& model, const Decomposition& d,
                           std::size_t k) {
  if (k == 0) fail(ErrorKind::kArgument, "k must be >= 1");
  Prediction out;
  const std::size_t classes = model.answers.size();
  if (k > classes) {
    out.warnings.push_back("k=" + std::to_string(k) + " exceeds " +
                           std::to_string(classes) +
                           " answer classes; truncated");
    k = classes;
  }
  const auto probs = softmax(d.total);
  for (auto idx : rank_top(d.total, k)) {
    out.answers.push_back({idx, model.answers.at(idx), d.total[idx], probs[idx],
                           d.word[idx], d.image[idx], d.bias[idx]});
  }
  return out;
}

}  // namespace

Prediction predict_topk(const Model& model, std::string_view question,
                        std::span<const float> image, std::size_t k) {
  return prediction_from(model, decompose(model, question, image), k);
}

std::vector<RankedAnswer> words_only_topk(const Model& model,
                                          std::string_view question,
                                          std::size_t k) {
  const auto bow = encode_question(model, question);
  const auto x_w = word_features(model.params, bow);
  std::vector<double> scores(model.answers.size());
  for (std::size_t a = 0; a < scores.size(); ++a) {
    const auto row = model.params.word_softmax.row(a);
    double s = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) s += row[j] * x_w[j];
    scores[a] = s;
  }
  return ranked(model, scores, k);
}

std::vector<RankedAnswer> image_only_topk(const Model& model,
                                          std::span<const float> image,
                                          std::size_t k) {
  const auto d = decompose(model.params, BowVector{}, image);
  return ranked(model, d.image, k);
}

MultipleChoiceResult predict_multiple_choice(
    const Model& model, std::string_view question, std::span<const float> image,
    std::span<const std::string> choices) {
  if (choices.empty()) fail(ErrorKind::kArgument, "no choices given");
  const auto probs = softmax(forward(model.params,
                                     encode_question(model, question), image));
  MultipleChoiceResult out;
  std::optional<std::uint32_t> best_class;
  double best_prob = -1.0;
  for (std::size_t i = 0; i < choices.size(); ++i) {
    ChoiceScore score{choices[i], 0.0, false};
    if (auto cls = model.answers.find(normalize_answer(choices[i]))) {
      score.in_vocabulary = true;
      score.prob = probs[*cls];
      if (score.prob > best_prob ||
          (score.prob == best_prob && *cls < *best_class)) {
        best_prob = score.prob;
        best_class = *cls;
        out.chosen_index = i;
      }
    }
    out.choices.push_back(std::move(score));
  }
  if (!best_class) {
    out.unscored = true;
    out.chosen_index = 0;
  }
  out.chosen = choices[out.chosen_index];
  return out;
}

double WordImportance::total() const {
  double s = 0.0;
  for (const auto& t : tokens) s += t.value;
  return s;
}

WordImportance word_importance(const Model& model, std::string_view question,
                               std::uint32_t class_index) {
  const auto& p = model.params;
  if (class_index >= p.word_softmax.rows()) {
    fail(ErrorKind::kLabel, "class " + std::to_string(class_index) +
                                " outside the answer dictionary");
  }
  WordImportance out;
  out.class_index = class_index;
  const auto weights = p.word_softmax.row(class_index);
  for (const auto& token : tokenize(question)) {
    auto it = std::find_if(out.tokens.begin(), out.tokens.end(),
                           [&](const auto& t) { return t.token == token; });
    if (it != out.tokens.end()) {
      ++it->count;
      continue;
    }
    TokenImportance t{token, 1, 0.0, 0, false};
    t.out_of_vocabulary = !model.words.contains(token);
    out.tokens.push_back(std::move(t));
  }
  for (auto& t : out.tokens) {
    if (t.out_of_vocabulary) continue;
    const auto row = p.embedding.row(*model.words.find(t.token));
    double per_occurrence = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      per_occurrence += static_cast<double>(weights[j]) * row[j];
    }
    t.value = per_occurrence * t.count;
  }
  std::stable_sort(out.tokens.begin(), out.tokens.end(),
                   [](const auto& a, const auto& b) { return a.value > b.value; });
  for (std::size_t i = 0; i < out.tokens.size(); ++i) out.tokens[i].rank = i + 1;
  return out;
}

double CamGrid::mean() const {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

CamGrid CamGrid::normalized() const {
  CamGrid out{h, w, std::vector<double>(values.size(), 0.0)};
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (range == 0.0) return out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.values[i] = (values[i] - *lo) / range;
  }
  return out;
}

CamGrid cam(const ModelParams& params, const ConvFeatureMap& map,
            std::uint32_t class_index) {
  if (map.k != params.image_softmax.cols()) {
    fail(ErrorKind::kDimension, "feature map has " + std::to_string(map.k) +
                                    " channels, model image side has " +
                                    std::to_string(params.image_softmax.cols()));
  }
  if (class_index >= params.image_softmax.rows()) {
    fail(ErrorKind::kLabel, "class " + std::to_string(class_index) +
                                " outside the answer dictionary");
  }
  const auto weights = params.image_softmax.row(class_index);
  CamGrid grid{map.h, map.w, std::vector<double>(std::size_t{map.h} * map.w)};
  for (std::size_t cell = 0; cell < grid.values.size(); ++cell) {
    const float* fiber = map.values.data() + cell * map.k;
    double s = 0.0;
    for (std::uint32_t c = 0; c < map.k; ++c) {
      s += static_cast<double>(weights[c]) * static_cast<double>(fiber[c]);
    }
    grid.values[cell] = s;
  }
  return grid;
}

CamGrid upsample_bilinear(const CamGrid& grid, std::uint32_t out_h,
                          std::uint32_t out_w) {
  if (grid.h == 0 || grid.w == 0 || out_h < grid.h || out_w < grid.w) {
    fail(ErrorKind::kArgument, "upsampling target must be at least the grid size");
  }
  // Source coordinate of output index i under corner alignment.
  auto source = [](std::uint32_t i, std::uint32_t out, std::uint32_t in) {
    return out == 1 ? 0.0
                    : static_cast<double>(i) * (in - 1) / static_cast<double>(out - 1);
  };
  CamGrid out{out_h, out_w, std::vector<double>(std::size_t{out_h} * out_w)};
  for (std::uint32_t i = 0; i < out_h; ++i) {
    const double sx = source(i, out_h, grid.h);
    const auto x0 = static_cast<std::uint32_t>(std::floor(sx));
    const std::uint32_t x1 = std::min(x0 + 1, grid.h - 1);
    const double fx = sx - x0;
    for (std::uint32_t j = 0; j < out_w; ++j) {
      const double sy = source(j, out_w, grid.w);
      const auto y0 = static_cast<std::uint32_t>(std::floor(sy));
      const std::uint32_t y1 = std::min(y0 + 1, grid.w - 1);
      const double fy = sy - y0;
      const double top = grid.at(x0, y0) * (1 - fy) + grid.at(x0, y1) * fy;
      const double bottom = grid.at(x1, y0) * (1 - fy) + grid.at(x1, y1) * fy;
      out.values[std::size_t{i} * out_w + j] = top * (1 - fx) + bottom * fx;
    }
  }
  return out;
}

namespace {

std::string cents(long long v) {
  char buf[32];
  const long long a = v < 0 ? -v : v;
  std::snprintf(buf, sizeof(buf), "%s%lld.%02lld", v < 0 ? "-" : "", a / 100,
                a % 100);
  return buf;
}

}  // namespace

std::string format_attribution(const AnswerScore& s) {
  const long long total = std::llround(s.logit * 100.0);
  const long long image = std::llround(s.image_contrib * 100.0);
  const long long bias = std::llround(s.bias_contrib * 100.0);
  const long long word = total - image - bias;
  std::string line = s.answer + " (" + cents(total) + " = " + cents(image) +
                     " [image] + " + cents(word) + " [word]";
  if (s.bias_contrib != 0.0) line += " + " + cents(bias) + " [bias]";
  return line + ")";
}

Explanation explain(const Model& model, std::string_view question,
                    ImageId image_id, std::span<const float> image,
                    std::size_t k, std::size_t side_k,
                    const ConvFeatureMap* map) {
  Explanation e;
  e.question = std::string(question);
  e.image_id = image_id;
  e.tokens = tokenize(question);
  if (e.tokens.empty()) e.flags.emplace_back("empty_question");
  // One decomposition serves all three rankings: the word and image parts
  // are exactly what the single-modality rankings sort.
  const auto d = decompose(model.params, encode_bow(e.tokens, model.words), image);
  e.prediction = prediction_from(model, d, k);
  e.words_only = ranked(model, d.word, side_k);
  e.image_only = ranked(model, d.image, side_k);
  const auto top = e.prediction.answers.front().class_index;
  e.importance = word_importance(model, question, top);
  if (map != nullptr) e.cam = cam(model.params, *map, top);
  return e;
}

using nlohmann::json;

void to_json(json& j, const AnswerScore& s) {
  j = json{{"answer", s.answer},
           {"class", s.class_index},
           {"logit", s.logit},
           {"prob", s.prob},
           {"word_contrib", s.word_contrib},
           {"image_contrib", s.image_contrib}};
  if (s.bias_contrib != 0.0) j["bias_contrib"] = s.bias_contrib;
}

void to_json(json& j, const RankedAnswer& r) {
  j = json{{"answer", r.answer}, {"class", r.class_index}, {"score", r.score}};
}

void to_json(json& j, const TokenImportance& t) {
  j = json{{"token", t.token},
           {"count", t.count},
           {"importance", t.value},
           {"rank", t.rank}};
  if (t.out_of_vocabulary) j["flag"] = "out-of-vocabulary";
}

void to_json(json& j, const CamGrid& g) {
  j = json{{"h", g.h}, {"w", g.w}, {"values", g.values}};
}

void to_json(json& j, const Explanation& e) {
  j = json{{"question", e.question},
           {"image_id", e.image_id},
           {"tokens", e.tokens},
           {"answers", e.prediction.answers},
           {"words_only", e.words_only},
           {"image_only", e.image_only},
           {"word_importance", e.importance.tokens},
           {"importance_class", e.importance.class_index},
           {"flags", e.flags}};
  if (e.cam) j["cam"] = *e.cam;
  if (!e.prediction.warnings.empty()) j["warnings"] = e.prediction.warnings;
}

void to_json(json& j, const MultipleChoiceResult& r) {
  json choices = json::array();
  for (const auto& c : r.choices) {
    json entry{{"choice", c.choice}, {"prob", c.prob}};
    if (!c.in_vocabulary) entry["flag"] = "unmapped";
    choices.push_back(std::move(entry));
  }
  j = json{{"chosen", r.chosen}, {"chosen_index", r.chosen_index},
           {"choices", std::move(choices)}};
  if (r.unscored) j["flag"] = "unscored";
}

std::string to_pgm(const CamGrid& grid) {
  const auto norm = grid.normalized();
  std::ostringstream out;
  out << "P2\n" << grid.w << ' ' << grid.h << "\n255\n";
  for (std::uint32_t x = 0; x < grid.h; ++x) {
    for (std::uint32_t y = 0; y < grid.w; ++y) {
      if (y) out << ' ';
      out << std::lround(norm.at(x, y) * 255.0);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace ibowimg
