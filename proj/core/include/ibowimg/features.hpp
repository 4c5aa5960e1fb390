#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "ibowimg/corpus.hpp"

namespace ibowimg {

struct ImageFeature {
  ImageId image_id = 0;
  std::vector<float> values;
};

// Spatial activations stored in [x][y][k] order: x in [0, h), y in [0, w).
struct ConvFeatureMap {
  ImageId image_id = 0;
  std::uint32_t h = 0;
  std::uint32_t w = 0;
  std::uint32_t k = 0;
  std::vector<float> values;

  float at(std::uint32_t x, std::uint32_t y, std::uint32_t c) const {
    return values[(static_cast<std::size_t>(x) * w + y) * k + c];
  }
};

// Spatial mean of each channel.
ImageFeature gap(const ConvFeatureMap& map);

namespace detail {
class ByteSource;
}

// Read-only binary store of pooled per-image vectors ("IBF1").
class VectorStore {
 public:
  static VectorStore open(const std::filesystem::path& file);
  // Builds a store over an in-memory copy of the serialized bytes.
  static VectorStore from_features(std::uint32_t dim,
                                   std::span<const ImageFeature> features);

  std::size_t count() const { return ids_.size(); }
  std::uint32_t dim() const { return dim_; }
  bool contains(ImageId id) const { return offsets_.contains(id); }
  // Ids in file order.
  const std::vector<ImageId>& ids() const { return ids_; }

  std::span<const float> view(ImageId id) const;
  ImageFeature get(ImageId id) const;

 private:
  VectorStore() = default;
  void index();

  std::shared_ptr<const detail::ByteSource> bytes_;
  std::uint32_t dim_ = 0;
  std::vector<ImageId> ids_;
  std::unordered_map<ImageId, std::size_t> offsets_;
};

// Read-only binary store of spatial feature maps ("IBM1").
class MapStore {
 public:
  static MapStore open(const std::filesystem::path& file);
  static MapStore from_maps(std::span<const ConvFeatureMap> maps);

  std::size_t count() const { return ids_.size(); }
  std::uint32_t h() const { return h_; }
  std::uint32_t w() const { return w_; }
  std::uint32_t k() const { return k_; }
  bool contains(ImageId id) const { return offsets_.contains(id); }
  const std::vector<ImageId>& ids() const { return ids_; }

  ConvFeatureMap get(ImageId id) const;

 private:
  MapStore() = default;
  void index();

  std::shared_ptr<const detail::ByteSource> bytes_;
  std::uint32_t h_ = 0, w_ = 0, k_ = 0;
  std::vector<ImageId> ids_;
  std::unordered_map<ImageId, std::size_t> offsets_;
};

std::vector<std::byte> serialize_vectors(std::uint32_t dim,
                                         std::span<const ImageFeature> features);
std::vector<std::byte> serialize_maps(std::span<const ConvFeatureMap> maps);

void write_vector_store(const std::filesystem::path& file, std::uint32_t dim,
                        std::span<const ImageFeature> features);
void write_map_store(const std::filesystem::path& file,
                     std::span<const ConvFeatureMap> maps);

}  // namespace ibowimg
