#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ibowimg/vocab.hpp"

namespace ibowimg {

// Dense row-major matrix.
template <typename Real>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, Real fill = Real(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<Real> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

struct ModelDims {
  std::size_t vocab = 0;    // V
  std::size_t embed = 0;    // d_e
  std::size_t image = 0;    // d_v
  std::size_t answers = 0;  // A

  bool operator==(const ModelDims&) const = default;
};

std::string to_string(const ModelDims& dims);

// Word embedding followed by a softmax over [word feature, image feature].
// The embedding is stored as a lookup table, one row per dictionary word, so
// the word feature is sum_w count(w) * embedding.row(w).
template <typename Real>
struct BasicModelParams {
  Matrix<Real> embedding;      // V x d_e
  Matrix<Real> word_softmax;   // A x d_e
  Matrix<Real> image_softmax;  // A x d_v
  std::vector<Real> bias;      // A entries when enabled, empty otherwise

  ModelDims dims() const {
    return {embedding.rows(), embedding.cols(), image_softmax.cols(),
            word_softmax.rows()};
  }
  bool has_bias() const { return !bias.empty(); }
  bool operator==(const BasicModelParams&) const = default;
};

using ModelParams = BasicModelParams<float>;

// Which inputs reach the model. The single-modality modes zero the other
// input, giving the words-only and image-only baselines.
enum class InputMode { kBoth, kWordsOnly, kImageOnly };

std::string_view to_string(InputMode mode);
InputMode parse_input_mode(std::string_view text);

struct Hyperparams {
  std::size_t embed_dim = 256;
  double lr_embedding = 0.1;
  double lr_softmax = 0.01;
  double clip_embedding = 20.0;
  double clip_softmax = 20.0;
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  bool bias = false;
  InputMode inputs = InputMode::kBoth;

  bool operator==(const Hyperparams&) const = default;
};

// Hard violations throw kArgument; soft ones (embedding lr below softmax lr)
// come back as warnings.
std::vector<std::string> validate(const Hyperparams& hyper);

// Entries i.i.d. uniform in [-0.08, 0.08]; the optional bias starts at zero.
template <typename Real>
BasicModelParams<Real> init_params(const ModelDims& dims, std::uint64_t seed,
                                   bool with_bias = false);

// Per-class logits split by source. total = word + image + bias.
struct Decomposition {
  std::vector<double> word;
  std::vector<double> image;
  std::vector<double> bias;  // zeros when the model has no bias
  std::vector<double> total;
};

template <typename Real>
std::vector<double> word_features(const BasicModelParams<Real>& params,
                                  const BowVector& bow);

template <typename Real>
Decomposition decompose(const BasicModelParams<Real>& params,
                        const BowVector& bow, std::span<const float> image);

template <typename Real>
std::vector<double> forward(const BasicModelParams<Real>& params,
                            const BowVector& bow, std::span<const float> image);

// Max-shifted softmax.
std::vector<double> softmax(std::span<const double> logits);

struct Example {
  BowVector bow;
  std::span<const float> image;
  std::uint32_t label = 0;
};

// Gradient of the mean cross-entropy. Only embedding rows touched by the
// batch are stored, sorted by word index.
struct Gradients {
  std::vector<std::pair<std::uint32_t, std::vector<double>>> embedding_rows;
  Matrix<double> word_softmax;
  Matrix<double> image_softmax;
  std::vector<double> bias;

  double embedding(std::uint32_t word, std::size_t col) const;
};

struct LossAndGrads {
  double loss = 0.0;
  Gradients grads;
};

template <typename Real>
double mean_loss(const BasicModelParams<Real>& params,
                 std::span<const Example> batch);

template <typename Real>
LossAndGrads loss_and_grads(const BasicModelParams<Real>& params,
                            std::span<const Example> batch);

// Rescales every row whose L2 norm exceeds max_norm down to max_norm.
template <typename Real>
void weight_clip(Matrix<Real>& matrix, double max_norm);

// Same rule applied to the rows of the full softmax matrix [M_w, M_v].
template <typename Real>
void clip_softmax_rows(Matrix<Real>& word_softmax, Matrix<Real>& image_softmax,
                       double max_norm);

template <typename Real>
void sgd_step(BasicModelParams<Real>& params, const Gradients& grads,
              const Hyperparams& hyper);

template <typename To, typename From>
BasicModelParams<To> convert_params(const BasicModelParams<From>& params);

}  // namespace ibowimg
