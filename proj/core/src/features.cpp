#include "ibowimg/features.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <string>

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include "ibowimg/error.hpp"
#include "io.hpp"

static_assert(std::endian::native == std::endian::little,
              "feature stores are mapped directly and require a little-endian host");

namespace ibowimg {
namespace detail {

// Either an mmap'd file or an owned buffer.
class ByteSource {
 public:
  explicit ByteSource(std::vector<std::byte> owned)
      : owned_(std::move(owned)), data_(owned_.data()), size_(owned_.size()) {}

  static std::shared_ptr<const ByteSource> map(const std::filesystem::path& file) {
    const int fd = ::open(file.c_str(), O_RDONLY);
    if (fd < 0) fail(ErrorKind::kNotFound, "cannot open " + file.string());
    struct stat st {};
    if (::fstat(fd, &st) != 0) {
      ::close(fd);
      fail(ErrorKind::kIo, "cannot stat " + file.string());
    }
    const auto size = static_cast<std::size_t>(st.st_size);
    if (size == 0) {
      ::close(fd);
      return std::make_shared<ByteSource>(std::vector<std::byte>{});
    }
    void* addr = ::mmap(nullptr, size, PROT_READ, MAP_PRIVATE, fd, 0);
    ::close(fd);
    if (addr == MAP_FAILED) fail(ErrorKind::kIo, "cannot map " + file.string());
    return std::shared_ptr<const ByteSource>(new ByteSource(addr, size));
  }

  ~ByteSource() {
    if (mapped_) ::munmap(const_cast<std::byte*>(data_), size_);
  }
  ByteSource(const ByteSource&) = delete;
  ByteSource& operator=(const ByteSource&) = delete;

  const std::byte* data() const { return data_; }
  std::size_t size() const { return size_; }

 private:
  ByteSource(void* addr, std::size_t size)
      : data_(static_cast<const std::byte*>(addr)), size_(size), mapped_(true) {}

  std::vector<std::byte> owned_;
  const std::byte* data_ = nullptr;
  std::size_t size_ = 0;
  bool mapped_ = false;
};

}  // namespace detail

namespace {

constexpr std::uint32_t kStoreVersion = 1;
constexpr std::size_t kVectorHeader = 16;
constexpr std::size_t kMapHeader = 24;

template <typename T>
T load(const std::byte* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void append(std::vector<std::byte>& out, T v) {
  const auto* p = reinterpret_cast<const std::byte*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

void check_magic(const detail::ByteSource& src, const char* magic,
                 std::size_t header) {
  if (src.size() < 4 || std::memcmp(src.data(), magic, 4) != 0) {
    fail(ErrorKind::kFormat, std::string("bad magic, expected ") + magic);
  }
  if (src.size() < header) {
    fail(ErrorKind::kLength, "feature store header is truncated");
  }
  const auto version = load<std::uint32_t>(src.data() + 4);
  if (version != kStoreVersion) {
    fail(ErrorKind::kFormat,
         "unsupported feature store version " + std::to_string(version));
  }
}

void check_length(const detail::ByteSource& src, std::size_t header,
                  std::size_t count, std::size_t record) {
  const std::size_t expected = header + count * record;
  if (src.size() < expected) {
    fail(ErrorKind::kLength, "feature store is truncated: " +
                                 std::to_string(src.size()) + " bytes, expected " +
                                 std::to_string(expected));
  }
  if (src.size() > expected) {
    fail(ErrorKind::kLength, "feature store has " +
                                 std::to_string(src.size() - expected) +
                                 " trailing bytes");
  }
}

void index_records(const detail::ByteSource& src, std::size_t header,
                   std::size_t count, std::size_t floats,
                   std::vector<ImageId>& ids,
                   std::unordered_map<ImageId, std::size_t>& offsets) {
  const std::size_t record = 8 + floats * 4;
  ids.reserve(count);
  offsets.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t off = header + i * record;
    const auto id = load<std::uint64_t>(src.data() + off);
    if (!offsets.emplace(id, off + 8).second) {
      fail(ErrorKind::kIntegrity,
           "duplicate image_id " + std::to_string(id) + " in feature store");
    }
    const auto* values = reinterpret_cast<const float*>(src.data() + off + 8);
    for (std::size_t k = 0; k < floats; ++k) {
      if (!std::isfinite(values[k])) {
        fail(ErrorKind::kIntegrity, "non-finite feature for image_id " +
                                        std::to_string(id));
      }
    }
    ids.push_back(id);
  }
}

}  // namespace

ImageFeature gap(const ConvFeatureMap& map) {
  const std::size_t cells = static_cast<std::size_t>(map.h) * map.w;
  if (cells == 0) fail(ErrorKind::kDimension, "feature map has no cells");
  std::vector<double> sum(map.k, 0.0);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const float* fiber = map.values.data() + cell * map.k;
    for (std::uint32_t c = 0; c < map.k; ++c) sum[c] += fiber[c];
  }
  ImageFeature out{map.image_id, std::vector<float>(map.k)};
  for (std::uint32_t c = 0; c < map.k; ++c) {
    out.values[c] = static_cast<float>(sum[c] / static_cast<double>(cells));
  }
  return out;
}

VectorStore VectorStore::open(const std::filesystem::path& file) {
  VectorStore store;
  store.bytes_ = detail::ByteSource::map(file);
  store.index();
  return store;
}

VectorStore VectorStore::from_features(std::uint32_t dim,
                                       std::span<const ImageFeature> features) {
  VectorStore store;
  store.bytes_ =
      std::make_shared<detail::ByteSource>(serialize_vectors(dim, features));
  store.index();
  return store;
}

void VectorStore::index() {
  const auto& src = *bytes_;
  check_magic(src, "IBF1", kVectorHeader);
  const auto count = load<std::uint32_t>(src.data() + 8);
  dim_ = load<std::uint32_t>(src.data() + 12);
  check_length(src, kVectorHeader, count, 8 + std::size_t{dim_} * 4);
  index_records(src, kVectorHeader, count, dim_, ids_, offsets_);
}

std::span<const float> VectorStore::view(ImageId id) const {
  auto it = offsets_.find(id);
  if (it == offsets_.end()) {
    fail(ErrorKind::kNotFound, "image_id " + std::to_string(id) +
                                   " not in feature store");
  }
  return {reinterpret_cast<const float*>(bytes_->data() + it->second), dim_};
}

ImageFeature VectorStore::get(ImageId id) const {
  auto v = view(id);
  return {id, std::vector<float>(v.begin(), v.end())};
}

MapStore MapStore::open(const std::filesystem::path& file) {
  MapStore store;
  store.bytes_ = detail::ByteSource::map(file);
  store.index();
  return store;
}

MapStore MapStore::from_maps(std::span<const ConvFeatureMap> maps) {
  MapStore store;
  store.bytes_ = std::make_shared<detail::ByteSource>(serialize_maps(maps));
  store.index();
  return store;
}

void MapStore::index() {
  const auto& src = *bytes_;
  check_magic(src, "IBM1", kMapHeader);
  const auto count = load<std::uint32_t>(src.data() + 8);
  h_ = load<std::uint32_t>(src.data() + 12);
  w_ = load<std::uint32_t>(src.data() + 16);
  k_ = load<std::uint32_t>(src.data() + 20);
  const std::size_t floats = std::size_t{h_} * w_ * k_;
  check_length(src, kMapHeader, count, 8 + floats * 4);
  index_records(src, kMapHeader, count, floats, ids_, offsets_);
}

ConvFeatureMap MapStore::get(ImageId id) const {
  auto it = offsets_.find(id);
  if (it == offsets_.end()) {
    fail(ErrorKind::kNotFound, "image_id " + std::to_string(id) +
                                   " not in feature map store");
  }
  const std::size_t floats = std::size_t{h_} * w_ * k_;
  const auto* p = reinterpret_cast<const float*>(bytes_->data() + it->second);
  return {id, h_, w_, k_, std::vector<float>(p, p + floats)};
}

std::vector<std::byte> serialize_vectors(std::uint32_t dim,
                                         std::span<const ImageFeature> features) {
  std::vector<std::byte> out;
  out.reserve(kVectorHeader + features.size() * (8 + std::size_t{dim} * 4));
  for (char c : std::string_view("IBF1")) append(out, c);
  append(out, kStoreVersion);
  append(out, static_cast<std::uint32_t>(features.size()));
  append(out, dim);
  for (const auto& f : features) {
    if (f.values.size() != dim) {
      fail(ErrorKind::kDimension, "image_id " + std::to_string(f.image_id) +
                                      " has " + std::to_string(f.values.size()) +
                                      " values, store dim is " +
                                      std::to_string(dim));
    }
    append(out, static_cast<std::uint64_t>(f.image_id));
    for (float v : f.values) append(out, v);
  }
  return out;
}

std::vector<std::byte> serialize_maps(std::span<const ConvFeatureMap> maps) {
  std::vector<std::byte> out;
  std::uint32_t h = 0, w = 0, k = 0;
  if (!maps.empty()) {
    h = maps.front().h;
    w = maps.front().w;
    k = maps.front().k;
  }
  for (char c : std::string_view("IBM1")) append(out, c);
  append(out, kStoreVersion);
  append(out, static_cast<std::uint32_t>(maps.size()));
  append(out, h);
  append(out, w);
  append(out, k);
  const std::size_t floats = std::size_t{h} * w * k;
  for (const auto& m : maps) {
    if (m.h != h || m.w != w || m.k != k || m.values.size() != floats) {
      fail(ErrorKind::kDimension, "feature map for image_id " +
                                      std::to_string(m.image_id) +
                                      " does not match the store shape");
    }
    append(out, static_cast<std::uint64_t>(m.image_id));
    for (float v : m.values) append(out, v);
  }
  return out;
}

namespace {
void write_bytes(const std::filesystem::path& file,
                 const std::vector<std::byte>& bytes) {
  detail::write_file(file, std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                            bytes.size()));
}
}  // namespace

void write_vector_store(const std::filesystem::path& file, std::uint32_t dim,
                        std::span<const ImageFeature> features) {
  write_bytes(file, serialize_vectors(dim, features));
}

void write_map_store(const std::filesystem::path& file,
                     std::span<const ConvFeatureMap> maps) {
  write_bytes(file, serialize_maps(maps));
}

}  // namespace ibowimg
