#include "ibowimg/checkpoint.hpp"

#include <cstring>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "ibowimg/error.hpp"
#include "io.hpp"

namespace ibowimg {
namespace {

using nlohmann::json;

constexpr int kManifestVersion = 1;
constexpr std::uint32_t kBlobVersion = 1;
constexpr std::size_t kBlobHeader = 4 + 4 * 6;

json hyper_to_json(const Hyperparams& h) {
  return json{{"embed_dim", h.embed_dim},       {"lr_embedding", h.lr_embedding},
              {"lr_softmax", h.lr_softmax},     {"clip_embedding", h.clip_embedding},
              {"clip_softmax", h.clip_softmax}, {"epochs", h.epochs},
              {"batch_size", h.batch_size},     {"seed", h.seed},
              {"bias", h.bias},                 {"inputs", std::string(to_string(h.inputs))}};
}

Hyperparams hyper_from_json(const json& j) {
  Hyperparams h;
  h.embed_dim = j.at("embed_dim").get<std::size_t>();
  h.lr_embedding = j.at("lr_embedding").get<double>();
  h.lr_softmax = j.at("lr_softmax").get<double>();
  h.clip_embedding = j.at("clip_embedding").get<double>();
  h.clip_softmax = j.at("clip_softmax").get<double>();
  h.epochs = j.at("epochs").get<std::size_t>();
  h.batch_size = j.at("batch_size").get<std::size_t>();
  h.seed = j.at("seed").get<std::uint64_t>();
  h.bias = j.at("bias").get<bool>();
  h.inputs = parse_input_mode(j.value("inputs", "both"));
  return h;
}

template <typename T>
void append(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void append_floats(std::string& out, std::span<const float> values) {
  out.append(reinterpret_cast<const char*>(values.data()),
             values.size() * sizeof(float));
}

std::filesystem::path blob_path(const std::filesystem::path& manifest) {
  auto p = manifest;
  p.replace_extension(".bin");
  return p;
}

}  // namespace

std::filesystem::path save_model(const Model& m,
                                 const std::filesystem::path& manifest) {
  const auto dims = m.params.dims();
  if (dims.vocab != m.words.size() || dims.answers != m.answers.size()) {
    fail(ErrorKind::kCheckpoint,
         "parameters (" + to_string(dims) + ") do not match dictionaries (" +
             std::to_string(m.words.size()) + " words, " +
             std::to_string(m.answers.size()) + " answers)");
  }
  const auto blob = blob_path(manifest);

  std::string bytes = "IBW1";
  append(bytes, kBlobVersion);
  append(bytes, static_cast<std::uint32_t>(dims.vocab));
  append(bytes, static_cast<std::uint32_t>(dims.embed));
  append(bytes, static_cast<std::uint32_t>(dims.image));
  append(bytes, static_cast<std::uint32_t>(dims.answers));
  append(bytes, static_cast<std::uint32_t>(m.params.has_bias() ? 1 : 0));
  append_floats(bytes, m.params.embedding.values());
  append_floats(bytes, m.params.word_softmax.values());
  append_floats(bytes, m.params.image_softmax.values());
  append_floats(bytes, m.params.bias);
  detail::write_file(blob, bytes);

  json j{{"version", kManifestVersion},
         {"V", dims.vocab},
         {"d_e", dims.embed},
         {"d_v", dims.image},
         {"A", dims.answers},
         {"bias", m.params.has_bias()},
         {"hyperparams", hyper_to_json(m.hyper)},
         {"word_dict", {{"words", m.words.entries()}, {"min_count", m.words.min_count()}}},
         {"answer_dict",
          {{"answers", m.answers.entries()}, {"min_count", m.answers.min_count()}}},
         {"weights", blob.filename().string()}};
  detail::write_file(manifest, j.dump(2) + "\n");
  return blob;
}

Model load_model(const std::filesystem::path& manifest,
                 const std::optional<ModelDims>& expected) {
  json j;
  try {
    j = detail::parse_json(detail::read_file(manifest), manifest.string());
  } catch (const Error& e) {
    fail(ErrorKind::kCheckpoint, e.what());
  }

  Model m;
  ModelDims dims;
  bool bias = false;
  std::filesystem::path blob;
  try {
    if (j.at("version").get<int>() != kManifestVersion) {
      fail(ErrorKind::kCheckpoint, "unsupported manifest version " +
                                       j.at("version").dump());
    }
    dims = {j.at("V").get<std::size_t>(), j.at("d_e").get<std::size_t>(),
            j.at("d_v").get<std::size_t>(), j.at("A").get<std::size_t>()};
    bias = j.value("bias", false);
    m.hyper = hyper_from_json(j.at("hyperparams"));
    const auto& wd = j.at("word_dict");
    m.words = WordDict(wd.at("words").get<std::vector<std::string>>(),
                       wd.value("min_count", std::size_t{1}));
    const auto& ad = j.at("answer_dict");
    m.answers = AnswerDict(ad.at("answers").get<std::vector<std::string>>(),
                           ad.value("min_count", std::size_t{1}));
    blob = manifest.parent_path() / j.at("weights").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorKind::kCheckpoint, manifest.string() + ": " + e.what());
  }

  if (m.words.size() != dims.vocab || m.answers.size() != dims.answers) {
    fail(ErrorKind::kCheckpoint, "manifest dictionaries disagree with " +
                                     to_string(dims));
  }
  if (expected && *expected != dims) {
    fail(ErrorKind::kCheckpoint, "checkpoint has " + to_string(dims) +
                                     ", expected " + to_string(*expected));
  }

  std::string bytes;
  try {
    bytes = detail::read_file(blob);
  } catch (const Error& e) {
    fail(ErrorKind::kCheckpoint, e.what());
  }
  if (bytes.size() < kBlobHeader || bytes.compare(0, 4, "IBW1") != 0) {
    fail(ErrorKind::kCheckpoint, blob.string() + ": bad weights header");
  }
  std::uint32_t header[6];
  std::memcpy(header, bytes.data() + 4, sizeof(header));
  if (header[0] != kBlobVersion) {
    fail(ErrorKind::kCheckpoint, blob.string() + ": unsupported weights version");
  }
  const ModelDims blob_dims{header[1], header[2], header[3], header[4]};
  if (blob_dims != dims || (header[5] != 0) != bias) {
    fail(ErrorKind::kCheckpoint, blob.string() + ": weights have " +
                                     to_string(blob_dims) + ", manifest says " +
                                     to_string(dims));
  }
  const std::size_t floats = dims.vocab * dims.embed +
                             dims.answers * (dims.embed + dims.image) +
                             (bias ? dims.answers : 0);
  if (bytes.size() != kBlobHeader + floats * sizeof(float)) {
    fail(ErrorKind::kCheckpoint, blob.string() + ": expected " +
                                     std::to_string(kBlobHeader + floats * 4) +
                                     " bytes, found " +
                                     std::to_string(bytes.size()));
  }

  const char* cursor = bytes.data() + kBlobHeader;
  auto read_into = [&](std::span<float> out) {
    std::memcpy(out.data(), cursor, out.size() * sizeof(float));
    cursor += out.size() * sizeof(float);
  };
  m.params.embedding = Matrix<float>(dims.vocab, dims.embed);
  m.params.word_softmax = Matrix<float>(dims.answers, dims.embed);
  m.params.image_softmax = Matrix<float>(dims.answers, dims.image);
  read_into(m.params.embedding.values());
  read_into(m.params.word_softmax.values());
  read_into(m.params.image_softmax.values());
  if (bias) {
    m.params.bias.resize(dims.answers);
    read_into(m.params.bias);
  }
  return m;
}

std::string model_fingerprint(const std::filesystem::path& manifest) {
  const std::string text = detail::read_file(manifest);
  auto j = detail::parse_json(text, manifest.string());
  const auto blob = manifest.parent_path() / j.at("weights").get<std::string>();
  // Content only: the blob's file name does not take part.
  j.erase("weights");
  const std::uint64_t h = detail::fnv1a64(detail::read_file(blob),
                                          detail::fnv1a64(j.dump()));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ibowimg
