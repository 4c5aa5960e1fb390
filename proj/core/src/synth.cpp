#include "ibowimg/synth.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <random>
#include <string>

#include "ibowimg/error.hpp"

namespace ibowimg::synth {
namespace {

constexpr std::array<const char*, 8> kObjects = {
    "dog", "bus", "pizza", "kite", "horse", "clock", "boat", "laptop"};
constexpr std::array<const char*, 8> kActions = {
    "sitting", "driving", "eating", "flying", "running", "ticking", "sailing",
    "typing"};
constexpr std::array<const char*, 8> kColours = {
    "red", "green", "blue", "yellow", "white", "black", "brown", "orange"};

// Map with a uniform background plus a 2x2 blob on the cluster channel whose
// spatial mean is `signal`.
ConvFeatureMap cluster_map(ImageId id, std::size_t cluster,
                           const TaskOptions& o, std::mt19937_64& rng) {
  if (o.grid < 2 || cluster >= o.dim) {
    fail(ErrorKind::kArgument, "synthetic maps need grid >= 2 and dim > clusters");
  }
  ConvFeatureMap m{id, o.grid, o.grid, o.dim,
                   std::vector<float>(std::size_t{o.grid} * o.grid * o.dim)};
  std::uniform_real_distribution<double> background(0.0, o.noise);
  for (auto& v : m.values) v = static_cast<float>(background(rng));
  std::uniform_int_distribution<std::uint32_t> corner(0, o.grid - 2);
  const std::uint32_t x0 = corner(rng), y0 = corner(rng);
  const double cells = static_cast<double>(o.grid) * o.grid;
  const auto peak = static_cast<float>(o.signal * cells / 4.0);
  for (std::uint32_t dx = 0; dx < 2; ++dx) {
    for (std::uint32_t dy = 0; dy < 2; ++dy) {
      m.values[((x0 + dx) * std::size_t{o.grid} + (y0 + dy)) * o.dim + cluster] += peak;
    }
  }
  return m;
}

struct Draw {
  std::string question;
  std::string answer;
};

// Clusters are dealt evenly over each split's images, and keywords are dealt
// from a reshuffled deck per cluster, so every (keyword, cluster) cell is
// within one pair of uniform.
template <typename MakeQuestion>
SyntheticTask generate(const TaskOptions& o, MakeQuestion make_question) {
  if (o.keywords == 0 || o.keywords > kObjects.size() || o.clusters == 0 ||
      o.clusters > kColours.size() || o.questions_per_image == 0) {
    fail(ErrorKind::kArgument, "synthetic task supports 1..8 keywords and clusters");
  }
  std::mt19937_64 rng(o.seed);
  std::vector<std::vector<std::size_t>> decks(o.clusters);
  auto deal_keyword = [&](std::size_t cluster) {
    auto& deck = decks[cluster];
    if (deck.empty()) {
      for (std::size_t k = 0; k < o.keywords; ++k) deck.push_back(k);
      std::shuffle(deck.begin(), deck.end(), rng);
    }
    const std::size_t k = deck.back();
    deck.pop_back();
    return k;
  };

  SyntheticTask task;
  task.dim = o.dim;
  QuestionId next_question = 1;
  ImageId image = 1000;
  // Validation images never share with training images.
  for (const std::size_t split_pairs : {o.train_pairs, o.val_pairs}) {
    const std::size_t images =
        (split_pairs + o.questions_per_image - 1) / o.questions_per_image;
    std::vector<std::size_t> clusters(images);
    for (std::size_t j = 0; j < images; ++j) clusters[j] = j % o.clusters;
    std::shuffle(clusters.begin(), clusters.end(), rng);
    for (std::size_t i = 0; i < split_pairs; ++i) {
      const std::size_t cluster = clusters[i / o.questions_per_image];
      if (i % o.questions_per_image == 0) {
        task.maps.push_back(cluster_map(image, cluster, o, rng));
        task.features.push_back(gap(task.maps.back()));
      }
      const Draw d = make_question(rng, deal_keyword(cluster), cluster);
      task.questions.push_back({next_question, image, d.question, {}});
      task.annotations.push_back({next_question, image,
                                  std::vector<std::string>(kHumanAnswers, d.answer),
                                  AnswerType::kOther});
      ++next_question;
      if ((i + 1) % o.questions_per_image == 0 || i + 1 == split_pairs) ++image;
    }
  }
  auto pairs = build_pairs(task.questions, task.annotations);
  task.train.assign(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(o.train_pairs));
  task.val.assign(pairs.begin() + static_cast<std::ptrdiff_t>(o.train_pairs), pairs.end());
  return task;
}

}  // namespace

VectorStore SyntheticTask::vector_store() const {
  return VectorStore::from_features(dim, features);
}

MapStore SyntheticTask::map_store() const { return MapStore::from_maps(maps); }

SyntheticTask make_separable_task(const TaskOptions& o) {
  std::uniform_int_distribution<int> pick_template(0, 2);
  return generate(o, [&](std::mt19937_64& rng, std::size_t k, std::size_t cluster) {
    const std::string kw = kObjects[k];
    std::string q;
    switch (pick_template(rng)) {
      case 0: q = "What kind of " + kw + " is this?"; break;
      case 1: q = "Which " + kw + " is shown?"; break;
      default: q = "What is the " + kw + "?"; break;
    }
    return Draw{q, kw + " " + kColours[cluster]};
  });
}

SyntheticTask make_word_biased_task(const TaskOptions& o) {
  std::bernoulli_distribution word_driven(o.word_bias);
  return generate(o, [&](std::mt19937_64& rng, std::size_t k, std::size_t cluster) {
    const std::string kw = kObjects[k];
    if (word_driven(rng)) return Draw{"What is the " + kw + " doing?", kActions[k]};
    return Draw{"What color is the " + kw + "?", kColours[cluster]};
  });
}

RawCorpus make_vqa_corpus(std::size_t images, std::size_t questions_per_image,
                          std::uint64_t seed) {
  static constexpr std::array<const char*, 24> kWords = {
      "what", "is", "the", "color", "of", "sofa", "how", "many", "people",
      "are", "there", "which", "brand", "laptop", "they", "doing", "a", "on",
      "table", "dog", "playing", "this", "man", "wearing"};
  struct Pool {
    const char* answer;
    AnswerType type;
  };
  static constexpr std::array<Pool, 10> kAnswers = {{
      {"yes", AnswerType::kYesNo},   {"no", AnswerType::kYesNo},
      {"2", AnswerType::kNumber},    {"3", AnswerType::kNumber},
      {"two", AnswerType::kNumber},  {"red", AnswerType::kOther},
      {"blue", AnswerType::kOther},  {"dog", AnswerType::kOther},
      {"playing baseball", AnswerType::kOther},
      {"hot dog", AnswerType::kOther},
  }};

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> word(0, kWords.size() - 1);
  std::uniform_int_distribution<std::size_t> length(3, 8);
  std::uniform_int_distribution<std::size_t> answer(0, kAnswers.size() - 1);
  std::uniform_int_distribution<int> style(0, 3);
  std::bernoulli_distribution agrees(0.7);
  std::bernoulli_distribution typed(0.9);

  // Raw annotator spellings; parsing normalizes them.
  auto spell = [&](std::string a) {
    switch (style(rng)) {
      case 0: a[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(a[0]))); break;
      case 1: a += "."; break;
      case 2: a = "  " + a + " "; break;
      default: break;
    }
    return a;
  };

  RawCorpus out;
  QuestionId qid = 1;
  for (std::size_t i = 0; i < images; ++i) {
    const ImageId image = 5000 + 7 * i;
    for (std::size_t j = 0; j < questions_per_image; ++j, ++qid) {
      std::string text;
      for (std::size_t n = length(rng); n > 0; --n) {
        if (!text.empty()) text += ' ';
        text += kWords[word(rng)];
      }
      text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
      text += '?';
      const Pool truth = kAnswers[answer(rng)];
      AnnotationRecord a{qid, image, {}, typed(rng) ? truth.type : AnswerType::kUnknown};
      for (std::size_t k = 0; k < kHumanAnswers; ++k) {
        a.human_answers.push_back(
            spell(agrees(rng) ? truth.answer : kAnswers[answer(rng)].answer));
      }
      out.questions.push_back({qid, image, std::move(text), {}});
      out.annotations.push_back(std::move(a));
    }
  }
  return out;
}

std::vector<ImageFeature> random_features(std::size_t count, std::uint32_t dim,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ImageFeature> out;
  for (std::size_t i = 0; i < count; ++i) {
    ImageFeature f{static_cast<ImageId>(i + 1), std::vector<float>(dim)};
    for (auto& v : f.values) v = static_cast<float>(u(rng));
    out.push_back(std::move(f));
  }
  return out;
}

ConvFeatureMap random_map(ImageId id, std::uint32_t h, std::uint32_t w,
                          std::uint32_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ConvFeatureMap m{id, h, w, k, std::vector<float>(std::size_t{h} * w * k)};
  for (auto& v : m.values) v = static_cast<float>(u(rng));
  return m;
}

}  // namespace ibowimg::synth
