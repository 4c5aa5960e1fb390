#pragma once

#include <cstdint>
#include <vector>

#include "ibowimg/corpus.hpp"
#include "ibowimg/features.hpp"

namespace ibowimg::synth {

// A generated corpus in every form the pipeline consumes: raw question and
// annotation records, the pairs built from them, and gap-consistent feature
// maps with their pooled vectors.
struct SyntheticTask {
  std::vector<Question> questions;
  std::vector<AnnotationRecord> annotations;
  std::vector<QAPair> train;
  std::vector<QAPair> val;
  std::vector<ConvFeatureMap> maps;
  std::vector<ImageFeature> features;  // gap(maps[i])
  std::uint32_t dim = 0;

  VectorStore vector_store() const;
  MapStore map_store() const;
};

struct TaskOptions {
  std::size_t train_pairs = 1000;
  std::size_t val_pairs = 200;
  std::size_t questions_per_image = 2;
  std::size_t keywords = 4;
  std::size_t clusters = 4;
  std::uint32_t dim = 32;
  std::uint32_t grid = 7;
  // Pooled activation of an image's cluster channel.
  double signal = 8.0;
  // Upper bound of the uniform background activation per map cell.
  double noise = 0.5;
  // Fraction of questions whose answer is fixed by the keyword alone (word
  // biased task only).
  double word_bias = 0.8;
  std::uint64_t seed = 0;
};

// Answer "<keyword>_<cluster>": both the question keyword and the image
// cluster are needed, and a linear softmax separates all classes.
SyntheticTask make_separable_task(const TaskOptions& options);

// With probability word_bias the question names an object and the answer is
// fixed by that keyword; otherwise it asks for a colour that only the image
// cluster determines.
SyntheticTask make_word_biased_task(const TaskOptions& options);

// Random VQA-style corpus with noisy annotators and mixed answer types, for
// exercising ingestion, voting and splitting.
struct RawCorpus {
  std::vector<Question> questions;
  std::vector<AnnotationRecord> annotations;
};
RawCorpus make_vqa_corpus(std::size_t images, std::size_t questions_per_image,
                          std::uint64_t seed);

std::vector<ImageFeature> random_features(std::size_t count, std::uint32_t dim,
                                          std::uint64_t seed);
ConvFeatureMap random_map(ImageId id, std::uint32_t h, std::uint32_t w,
                          std::uint32_t k, std::uint64_t seed);

}  // namespace ibowimg::synth
