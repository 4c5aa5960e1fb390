#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "ibowimg/model.hpp"
#include "ibowimg/vocab.hpp"

namespace ibowimg {

// A trained model together with the dictionaries that give its rows meaning.
struct Model {
  ModelParams params;
  WordDict words;
  AnswerDict answers;
  Hyperparams hyper;

  bool operator==(const Model&) const = default;
};

// Writes `manifest` (JSON) and a sibling weights blob named after it with a
// ".bin" extension. Returns the blob path.
std::filesystem::path save_model(const Model& model,
                                 const std::filesystem::path& manifest);

// Throws kCheckpoint on truncation, version or dimension mismatch. When
// `expected` is given the stored dims must match it exactly.
Model load_model(const std::filesystem::path& manifest,
                 const std::optional<ModelDims>& expected = std::nullopt);

// 16 hex digits identifying the manifest fields and weights bytes.
std::string model_fingerprint(const std::filesystem::path& manifest);

}  // namespace ibowimg
