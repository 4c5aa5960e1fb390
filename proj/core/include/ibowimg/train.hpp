#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ibowimg/checkpoint.hpp"
#include "ibowimg/corpus.hpp"
#include "ibowimg/features.hpp"

namespace ibowimg {

struct TrainConfig {
  Hyperparams hyper;
  std::size_t word_min_count = 1;
  std::size_t answer_min_count = 1;
  std::size_t evals_per_epoch = 1;
  // Stop after this many epochs without a validation improvement; 0 trains
  // for exactly hyper.epochs.
  std::size_t patience = 0;
  std::uint64_t shuffle_seed = 0;
};

struct EvalPoint {
  std::size_t epoch = 0;     // 1-based
  std::size_t eval = 0;      // 1-based within the epoch
  double mean_loss = 0.0;    // over the batches seen so far this epoch
  double val_accuracy = 0.0;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<EvalPoint> evaluations;
  double seconds = 0.0;
  std::size_t best_epoch = 0;  // 1-based; 0 means the initial model
  double best_accuracy = 0.0;
  std::size_t used_pairs = 0;
  std::size_t skipped_pairs = 0;  // answer below the class threshold
  // True when no validation pairs were given and training accuracy was used.
  bool validated_on_train = false;
  std::vector<std::string> warnings;
};

struct TrainResult {
  Model model;  // best checkpoint
  TrainReport report;
};

using ProgressFn = std::function<void(const EvalPoint&)>;

// Dictionaries are built from `train_pairs` with the configured thresholds.
// Every referenced image must be in `store`.
TrainResult train(std::span<const QAPair> train_pairs,
                  std::span<const QAPair> val_pairs, const VectorStore& store,
                  const TrainConfig& config, const ProgressFn& progress = {});

// Wall-clock time is left out so reports of identical runs are byte-identical.
std::string train_report_json(const TrainReport& report);

struct GridRow {
  double value = 0.0;
  double val_accuracy = 0.0;
  std::size_t best_epoch = 0;
};

// Tunable names: epochs, lr_embedding, lr_softmax, clip_embedding,
// clip_softmax, word_min_count, answer_min_count.
void set_tunable(TrainConfig& config, std::string_view name, double value);

// One train run per candidate; rows sorted by accuracy, best first (stable).
std::vector<GridRow> grid_search(std::string_view param,
                                 std::span<const double> values,
                                 const TrainConfig& base,
                                 std::span<const QAPair> train_pairs,
                                 std::span<const QAPair> val_pairs,
                                 const VectorStore& store);

std::string grid_json(std::string_view param, std::span<const GridRow> rows);

}  // namespace ibowimg
