#include "ibowimg/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "ibowimg/error.hpp"
#include "ibowimg/eval.hpp"

namespace ibowimg {
namespace {

void require_features(std::span<const QAPair> pairs, const VectorStore& store) {
  for (const auto& p : pairs) {
    if (!store.contains(p.image_id)) {
      fail(ErrorKind::kNotFound, "image_id " + std::to_string(p.image_id) +
                                     " has no feature vector");
    }
  }
}

}  // namespace

TrainResult train(std::span<const QAPair> train_pairs,
                  std::span<const QAPair> val_pairs, const VectorStore& store,
                  const TrainConfig& config, const ProgressFn& progress) {
  const auto started = std::chrono::steady_clock::now();
  const Hyperparams& hyper = config.hyper;
  TrainReport report;
  report.warnings = validate(hyper);
  if (config.evals_per_epoch == 0) {
    fail(ErrorKind::kArgument, "evals_per_epoch must be >= 1");
  }
  if (hyper.inputs != InputMode::kWordsOnly) {
    require_features(train_pairs, store);
    require_features(val_pairs, store);
  }

  Model model;
  model.hyper = hyper;
  model.words = build_word_dict(train_pairs, config.word_min_count);
  model.answers = build_answer_dict(train_pairs, config.answer_min_count);
  if (model.answers.empty()) {
    fail(ErrorKind::kArgument, "no answer class survives the threshold");
  }
  // A vocabulary of zero words would make the embedding degenerate; keep one
  // unused row so image-only setups still have a well-formed model.
  const ModelDims dims{std::max<std::size_t>(model.words.size(), 1),
                       hyper.embed_dim, store.dim(), model.answers.size()};
  if (model.words.empty()) model.words = WordDict({""}, config.word_min_count);
  model.params = init_params<float>(dims, hyper.seed, hyper.bias);

  const std::vector<float> zeros(dims.image, 0.0f);
  std::vector<Example> examples;
  examples.reserve(train_pairs.size());
  for (const auto& p : train_pairs) {
    auto label = model.answers.find(p.answer);
    if (!label) {
      ++report.skipped_pairs;
      continue;
    }
    Example ex;
    if (hyper.inputs != InputMode::kImageOnly) {
      ex.bow = encode_bow(p.tokens, model.words);
    }
    ex.image = hyper.inputs == InputMode::kWordsOnly
                   ? std::span<const float>(zeros)
                   : store.view(p.image_id);
    ex.label = *label;
    examples.push_back(std::move(ex));
  }
  report.used_pairs = examples.size();

  report.validated_on_train = val_pairs.empty();
  const auto validation = report.validated_on_train ? train_pairs : val_pairs;
  auto accuracy = [&](const Model& m) {
    return top1_accuracy(m, validation, store);
  };

  Model best = model;
  report.best_accuracy = accuracy(model);
  report.best_epoch = 0;

  const std::size_t n = examples.size();
  const std::size_t batches = (n + hyper.batch_size - 1) / hyper.batch_size;
  const std::size_t evals = std::min(config.evals_per_epoch, std::max<std::size_t>(batches, 1));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.shuffle_seed);
  std::vector<Example> batch;
  std::size_t stale_epochs = 0;

  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t next_eval = 1;
    bool improved = false;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * hyper.batch_size;
      const std::size_t end = std::min(begin + hyper.batch_size, n);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(examples[order[i]]);

      auto [loss, grads] = loss_and_grads(model.params, std::span<const Example>(batch));
      if (!std::isfinite(loss)) {
        fail(ErrorKind::kDivergence,
             "non-finite loss in epoch " + std::to_string(epoch));
      }
      loss_sum += loss * static_cast<double>(end - begin);
      sgd_step(model.params, grads, hyper);

      // Evaluation points are spread evenly; the last one closes the epoch.
      if (b + 1 == (next_eval * batches + evals - 1) / evals) {
        EvalPoint point{epoch, next_eval, loss_sum / static_cast<double>(end),
                        accuracy(model)};
        report.evaluations.push_back(point);
        if (progress) progress(point);
        if (point.val_accuracy > report.best_accuracy) {
          report.best_accuracy = point.val_accuracy;
          report.best_epoch = epoch;
          best = model;
          improved = true;
        }
        ++next_eval;
      }
    }
    if (batches == 0) {
      EvalPoint point{epoch, 1, 0.0, accuracy(model)};
      report.evaluations.push_back(point);
      if (progress) progress(point);
    }
    report.epoch_loss.push_back(n ? loss_sum / static_cast<double>(n) : 0.0);

    stale_epochs = improved ? 0 : stale_epochs + 1;
    if (config.patience > 0 && stale_epochs >= config.patience) break;
  }

  report.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - started)
                       .count();
  return {std::move(best), std::move(report)};
}

std::string train_report_json(const TrainReport& r) {
  nlohmann::json evals = nlohmann::json::array();
  for (const auto& e : r.evaluations) {
    evals.push_back({{"epoch", e.epoch},
                     {"eval", e.eval},
                     {"mean_loss", e.mean_loss},
                     {"val_accuracy", e.val_accuracy}});
  }
  nlohmann::json j{{"epoch_loss", r.epoch_loss},
                   {"evaluations", std::move(evals)},
                   {"best_epoch", r.best_epoch},
                   {"best_accuracy", r.best_accuracy},
                   {"used_pairs", r.used_pairs},
                   {"skipped_pairs", r.skipped_pairs},
                   {"validated_on_train", r.validated_on_train},
                   {"warnings", r.warnings}};
  return j.dump(2);
}

void set_tunable(TrainConfig& c, std::string_view name, double value) {
  auto count = [&](const char* what) {
    if (!(value >= 1.0) || value != std::floor(value)) {
      fail(ErrorKind::kArgument, std::string(what) + " must be a positive integer");
    }
    return static_cast<std::size_t>(value);
  };
  if (name == "epochs") {
    c.hyper.epochs = count("epochs");
  } else if (name == "lr_embedding") {
    c.hyper.lr_embedding = value;
  } else if (name == "lr_softmax") {
    c.hyper.lr_softmax = value;
  } else if (name == "clip_embedding") {
    c.hyper.clip_embedding = value;
  } else if (name == "clip_softmax") {
    c.hyper.clip_softmax = value;
  } else if (name == "word_min_count") {
    c.word_min_count = count("word_min_count");
  } else if (name == "answer_min_count") {
    c.answer_min_count = count("answer_min_count");
  } else {
    fail(ErrorKind::kArgument, "unknown tunable parameter \"" +
                                   std::string(name) + "\"");
  }
}

std::vector<GridRow> grid_search(std::string_view param,
                                 std::span<const double> values,
                                 const TrainConfig& base,
                                 std::span<const QAPair> train_pairs,
                                 std::span<const QAPair> val_pairs,
                                 const VectorStore& store) {
  if (values.empty()) fail(ErrorKind::kArgument, "no candidate values");
  std::vector<GridRow> rows;
  for (double v : values) {
    TrainConfig config = base;
    set_tunable(config, param, v);
    const auto result = train(train_pairs, val_pairs, store, config);
    rows.push_back({v, result.report.best_accuracy, result.report.best_epoch});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.val_accuracy > b.val_accuracy;
  });
  return rows;
}

std::string grid_json(std::string_view param, std::span<const GridRow> rows) {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& r : rows) {
    table.push_back({{"value", r.value},
                     {"val_accuracy", r.val_accuracy},
                     {"best_epoch", r.best_epoch}});
  }
  return nlohmann::json{{"param", param}, {"results", std::move(table)}}.dump(2);
}

}  // namespace ibowimg
