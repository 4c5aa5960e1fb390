#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ibowimg/checkpoint.hpp"

namespace fixtures {

// Model over explicit dictionaries with weights drawn from [-scale, scale].
inline ibowimg::Model random_model(std::vector<std::string> words,
                                   std::vector<std::string> answers,
                                   std::size_t embed, std::size_t image,
                                   std::uint64_t seed, double scale = 1.0,
                                   bool bias = false) {
  ibowimg::Model m;
  m.words = ibowimg::WordDict(std::move(words), 1);
  m.answers = ibowimg::AnswerDict(std::move(answers), 1);
  m.hyper.embed_dim = embed;
  m.hyper.bias = bias;
  m.params = ibowimg::init_params<float>(
      {m.words.size(), embed, image, m.answers.size()}, seed, bias);
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& v : m.params.embedding.values()) v = static_cast<float>(u(rng));
  for (auto& v : m.params.word_softmax.values()) v = static_cast<float>(u(rng));
  for (auto& v : m.params.image_softmax.values()) v = static_cast<float>(u(rng));
  for (auto& v : m.params.bias) v = static_cast<float>(u(rng));
  return m;
}

inline std::vector<std::string> numbered(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

}  // namespace fixtures
