#include "ibowimg/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "ibowimg/error.hpp"

namespace ibowimg {

std::string to_string(const ModelDims& d) {
  return "V=" + std::to_string(d.vocab) + " d_e=" + std::to_string(d.embed) +
         " d_v=" + std::to_string(d.image) + " A=" + std::to_string(d.answers);
}

std::string_view to_string(InputMode mode) {
  switch (mode) {
    case InputMode::kBoth: return "both";
    case InputMode::kWordsOnly: return "words";
    case InputMode::kImageOnly: return "image";
  }
  return "both";
}

InputMode parse_input_mode(std::string_view text) {
  if (text == "both") return InputMode::kBoth;
  if (text == "words") return InputMode::kWordsOnly;
  if (text == "image") return InputMode::kImageOnly;
  fail(ErrorKind::kArgument, "unknown input mode \"" + std::string(text) +
                                 "\" (expected both, words or image)");
}

std::vector<std::string> validate(const Hyperparams& h) {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!(std::isfinite(h.lr_embedding) && h.lr_embedding >= 0.0) ||
      !(std::isfinite(h.lr_softmax) && h.lr_softmax >= 0.0)) {
    fail(ErrorKind::kArgument, "learning rates must be finite and >= 0");
  }
  if (!positive(h.clip_embedding) || !positive(h.clip_softmax)) {
    fail(ErrorKind::kArgument, "clip thresholds must be > 0");
  }
  if (h.embed_dim == 0 || h.epochs == 0 || h.batch_size == 0) {
    fail(ErrorKind::kArgument, "embed_dim, epochs and batch_size must be >= 1");
  }
  std::vector<std::string> warnings;
  if (h.lr_embedding < h.lr_softmax) {
    warnings.emplace_back(
        "lr_embedding is below lr_softmax; the embedding usually needs the "
        "larger rate");
  }
  return warnings;
}

template <typename Real>
BasicModelParams<Real> init_params(const ModelDims& dims, std::uint64_t seed,
                                   bool with_bias) {
  if (dims.vocab == 0 || dims.embed == 0 || dims.image == 0 ||
      dims.answers == 0) {
    fail(ErrorKind::kDimension, "all model dimensions must be >= 1, got " +
                                    to_string(dims));
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-0.08, 0.08);
  auto fill = [&](Matrix<Real>& m) {
    for (auto& v : m.values()) v = static_cast<Real>(uniform(rng));
  };

  BasicModelParams<Real> p;
  p.embedding = Matrix<Real>(dims.vocab, dims.embed);
  p.word_softmax = Matrix<Real>(dims.answers, dims.embed);
  p.image_softmax = Matrix<Real>(dims.answers, dims.image);
  fill(p.embedding);
  fill(p.word_softmax);
  fill(p.image_softmax);
  if (with_bias) p.bias.assign(dims.answers, Real(0));
  return p;
}

namespace {

template <typename Real>
void check_inputs(const BasicModelParams<Real>& p, const BowVector& bow,
                  std::span<const float> image) {
  const auto dims = p.dims();
  if (image.size() != dims.image) {
    fail(ErrorKind::kDimension, "image feature has " +
                                    std::to_string(image.size()) +
                                    " values, model expects " +
                                    std::to_string(dims.image));
  }
  if (!bow.entries.empty() && bow.entries.back().first >= dims.vocab) {
    fail(ErrorKind::kDimension, "word index " +
                                    std::to_string(bow.entries.back().first) +
                                    " outside vocabulary of " +
                                    std::to_string(dims.vocab));
  }
}

template <typename A, typename B>
double dot(std::span<const A> a, std::span<const B> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return s;
}

double log_sum_exp(std::span<const double> r) {
  const double m = *std::max_element(r.begin(), r.end());
  double s = 0.0;
  for (double v : r) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

template <typename Real>
std::vector<double> word_features(const BasicModelParams<Real>& p,
                                  const BowVector& bow) {
  std::vector<double> x(p.embedding.cols(), 0.0);
  for (const auto& [word, count] : bow.entries) {
    if (word >= p.embedding.rows()) {
      fail(ErrorKind::kDimension, "word index " + std::to_string(word) +
                                      " outside vocabulary");
    }
    const auto row = p.embedding.row(word);
    for (std::size_t j = 0; j < x.size(); ++j) {
      x[j] += static_cast<double>(count) * static_cast<double>(row[j]);
    }
  }
  return x;
}

template <typename Real>
Decomposition decompose(const BasicModelParams<Real>& p, const BowVector& bow,
                        std::span<const float> image) {
  check_inputs(p, bow, image);
  const std::size_t n = p.word_softmax.rows();
  const auto x_w = word_features(p, bow);
  const std::span<const double> xw(x_w);

  Decomposition d;
  d.word.resize(n);
  d.image.resize(n);
  d.bias.assign(n, 0.0);
  d.total.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    d.word[a] = dot(p.word_softmax.row(a), xw);
    d.image[a] = dot(p.image_softmax.row(a), image);
    if (p.has_bias()) d.bias[a] = static_cast<double>(p.bias[a]);
    d.total[a] = d.word[a] + d.image[a] + d.bias[a];
  }
  return d;
}

template <typename Real>
std::vector<double> forward(const BasicModelParams<Real>& p,
                            const BowVector& bow, std::span<const float> image) {
  return decompose(p, bow, image).total;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    s += out[i];
  }
  for (auto& v : out) v /= s;
  return out;
}

double Gradients::embedding(std::uint32_t word, std::size_t col) const {
  auto it = std::lower_bound(
      embedding_rows.begin(), embedding_rows.end(), word,
      [](const auto& e, std::uint32_t w) { return e.first < w; });
  if (it == embedding_rows.end() || it->first != word) return 0.0;
  return it->second[col];
}

namespace {

template <typename Real>
void check_label(const BasicModelParams<Real>& p, const Example& ex) {
  if (ex.label >= p.word_softmax.rows()) {
    fail(ErrorKind::kLabel, "label " + std::to_string(ex.label) +
                                " outside [0, " +
                                std::to_string(p.word_softmax.rows()) + ")");
  }
}

}  // namespace

template <typename Real>
double mean_loss(const BasicModelParams<Real>& p,
                 std::span<const Example> batch) {
  if (batch.empty()) fail(ErrorKind::kArgument, "empty batch");
  double total = 0.0;
  for (const auto& ex : batch) {
    check_label(p, ex);
    const auto r = forward(p, ex.bow, ex.image);
    total += log_sum_exp(r) - r[ex.label];
  }
  return total / static_cast<double>(batch.size());
}

template <typename Real>
LossAndGrads loss_and_grads(const BasicModelParams<Real>& p,
                            std::span<const Example> batch) {
  if (batch.empty()) fail(ErrorKind::kArgument, "empty batch");
  const auto dims = p.dims();
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  LossAndGrads out;
  auto& g = out.grads;
  g.word_softmax = Matrix<double>(dims.answers, dims.embed);
  g.image_softmax = Matrix<double>(dims.answers, dims.image);
  if (p.has_bias()) g.bias.assign(dims.answers, 0.0);
  std::map<std::uint32_t, std::vector<double>> embedding_rows;

  std::vector<double> grad_xw(dims.embed);
  for (const auto& ex : batch) {
    check_label(p, ex);
    const auto x_w = word_features(p, ex.bow);
    const auto r = forward(p, ex.bow, ex.image);
    const double lse = log_sum_exp(r);
    out.loss += (lse - r[ex.label]) * inv_b;

    std::fill(grad_xw.begin(), grad_xw.end(), 0.0);
    for (std::size_t a = 0; a < dims.answers; ++a) {
      const double dr =
          (std::exp(r[a] - lse) - (a == ex.label ? 1.0 : 0.0)) * inv_b;
      if (dr == 0.0) continue;
      auto gw = g.word_softmax.row(a);
      const auto mw = p.word_softmax.row(a);
      for (std::size_t j = 0; j < dims.embed; ++j) {
        gw[j] += dr * x_w[j];
        grad_xw[j] += dr * static_cast<double>(mw[j]);
      }
      auto gv = g.image_softmax.row(a);
      for (std::size_t k = 0; k < dims.image; ++k) {
        gv[k] += dr * static_cast<double>(ex.image[k]);
      }
      if (p.has_bias()) g.bias[a] += dr;
    }
    for (const auto& [word, count] : ex.bow.entries) {
      auto& row = embedding_rows[word];
      row.resize(dims.embed, 0.0);
      for (std::size_t j = 0; j < dims.embed; ++j) {
        row[j] += static_cast<double>(count) * grad_xw[j];
      }
    }
  }
  g.embedding_rows.assign(std::make_move_iterator(embedding_rows.begin()),
                          std::make_move_iterator(embedding_rows.end()));
  return out;
}

template <typename Real>
void weight_clip(Matrix<Real>& m, double max_norm) {
  if (!(max_norm > 0.0)) fail(ErrorKind::kArgument, "max_norm must be > 0");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    double sq = 0.0;
    for (Real v : row) sq += static_cast<double>(v) * static_cast<double>(v);
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
      const double scale = max_norm / norm;
      for (auto& v : row) v = static_cast<Real>(static_cast<double>(v) * scale);
    }
  }
}

template <typename Real>
void clip_softmax_rows(Matrix<Real>& word_softmax, Matrix<Real>& image_softmax,
                       double max_norm) {
  if (!(max_norm > 0.0)) fail(ErrorKind::kArgument, "max_norm must be > 0");
  for (std::size_t r = 0; r < word_softmax.rows(); ++r) {
    auto w = word_softmax.row(r);
    auto v = image_softmax.row(r);
    double sq = 0.0;
    for (Real x : w) sq += static_cast<double>(x) * static_cast<double>(x);
    for (Real x : v) sq += static_cast<double>(x) * static_cast<double>(x);
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
      const double scale = max_norm / norm;
      for (auto& x : w) x = static_cast<Real>(static_cast<double>(x) * scale);
      for (auto& x : v) x = static_cast<Real>(static_cast<double>(x) * scale);
    }
  }
}

template <typename Real>
void sgd_step(BasicModelParams<Real>& p, const Gradients& g,
              const Hyperparams& h) {
  const auto dims = p.dims();
  if (g.word_softmax.rows() != dims.answers ||
      g.word_softmax.cols() != dims.embed ||
      g.image_softmax.rows() != dims.answers ||
      g.image_softmax.cols() != dims.image ||
      g.bias.size() != p.bias.size()) {
    fail(ErrorKind::kDimension, "gradient shapes do not match the model");
  }
  auto step = [](std::span<Real> w, std::span<const double> grad, double lr) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = static_cast<Real>(static_cast<double>(w[i]) - lr * grad[i]);
    }
  };
  if (h.lr_embedding != 0.0) {
    for (const auto& [word, row] : g.embedding_rows) {
      if (word >= dims.vocab || row.size() != dims.embed) {
        fail(ErrorKind::kDimension, "embedding gradient row out of range");
      }
      step(p.embedding.row(word), row, h.lr_embedding);
    }
  }
  if (h.lr_softmax != 0.0) {
    step(p.word_softmax.values(), g.word_softmax.values(), h.lr_softmax);
    step(p.image_softmax.values(), g.image_softmax.values(), h.lr_softmax);
    if (p.has_bias()) step(p.bias, g.bias, h.lr_softmax);
  }
  weight_clip(p.embedding, h.clip_embedding);
  clip_softmax_rows(p.word_softmax, p.image_softmax, h.clip_softmax);
}

template <typename To, typename From>
BasicModelParams<To> convert_params(const BasicModelParams<From>& p) {
  auto convert = [](const Matrix<From>& m) {
    Matrix<To> out(m.rows(), m.cols());
    std::transform(m.values().begin(), m.values().end(), out.values().begin(),
                   [](From v) { return static_cast<To>(v); });
    return out;
  };
  BasicModelParams<To> out;
  out.embedding = convert(p.embedding);
  out.word_softmax = convert(p.word_softmax);
  out.image_softmax = convert(p.image_softmax);
  out.bias.assign(p.bias.begin(), p.bias.end());
  return out;
}

#define IBOWIMG_INSTANTIATE(Real)                                              \
  template BasicModelParams<Real> init_params<Real>(const ModelDims&,          \
                                                    std::uint64_t, bool);      \
  template std::vector<double> word_features(const BasicModelParams<Real>&,    \
                                             const BowVector&);                \
  template Decomposition decompose(const BasicModelParams<Real>&,              \
                                   const BowVector&, std::span<const float>);  \
  template std::vector<double> forward(const BasicModelParams<Real>&,          \
                                       const BowVector&,                       \
                                       std::span<const float>);                \
  template double mean_loss(const BasicModelParams<Real>&,                     \
                            std::span<const Example>);                         \
  template LossAndGrads loss_and_grads(const BasicModelParams<Real>&,          \
                                       std::span<const Example>);              \
  template void weight_clip(Matrix<Real>&, double);                            \
  template void clip_softmax_rows(Matrix<Real>&, Matrix<Real>&, double);       \
  template void sgd_step(BasicModelParams<Real>&, const Gradients&,            \
                         const Hyperparams&);

IBOWIMG_INSTANTIATE(float)
IBOWIMG_INSTANTIATE(double)
#undef IBOWIMG_INSTANTIATE

template BasicModelParams<double> convert_params(const BasicModelParams<float>&);
template BasicModelParams<float> convert_params(const BasicModelParams<double>&);

}  // namespace ibowimg
