#include "ibowimg/cli.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <pthread.h>

#include "ibowimg/checkpoint.hpp"
#include "ibowimg/corpus.hpp"
#include "ibowimg/error.hpp"
#include "ibowimg/eval.hpp"
#include "ibowimg/features.hpp"
#include "ibowimg/inference.hpp"
#include "ibowimg/service.hpp"
#include "ibowimg/synth.hpp"
#include "ibowimg/train.hpp"
#include "ibowimg/vocab.hpp"

namespace ibowimg::cli {
namespace {

namespace fs = std::filesystem;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kArgument:
      return kUsage;
    case ErrorKind::kDivergence:
      return kRuntime;
    default:
      return kData;
  }
}

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string with_suffix(const fs::path& file, const std::string& suffix) {
  return (file.parent_path() / file.stem()).string() + suffix;
}

std::optional<MapStore> open_maps(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return MapStore::open(path);
}

// Flags shared by train and grid.
struct TrainFlags {
  std::string train;
  std::string val;
  std::string features;
  std::string inputs = "both";
  std::uint64_t shuffle_seed = 0;
  CLI::Option* shuffle_option = nullptr;
  TrainConfig config;
};

void add_train_flags(CLI::App* sub, TrainFlags& f) {
  auto& h = f.config.hyper;
  sub->add_option("--train", f.train, "Training pairs (JSON lines)")->required();
  sub->add_option("--val", f.val, "Validation pairs (JSON lines)");
  sub->add_option("--features", f.features, "Image feature vector store")->required();
  sub->add_option("--seed", h.seed, "Weight initialization seed")->capture_default_str();
  f.shuffle_option = sub->add_option("--shuffle-seed", f.shuffle_seed,
                                     "Minibatch order seed (defaults to --seed)");
  sub->add_option("--embed-dim", h.embed_dim, "Word embedding width")->capture_default_str();
  sub->add_option("--lr-embedding", h.lr_embedding, "Embedding learning rate")->capture_default_str();
  sub->add_option("--lr-softmax", h.lr_softmax, "Softmax learning rate")->capture_default_str();
  sub->add_option("--clip-embedding", h.clip_embedding, "Embedding row max norm")->capture_default_str();
  sub->add_option("--clip-softmax", h.clip_softmax, "Softmax row max norm")->capture_default_str();
  sub->add_option("--epochs", h.epochs, "Training epochs")->capture_default_str();
  sub->add_option("--batch-size", h.batch_size, "Minibatch size")->capture_default_str();
  sub->add_flag("--bias", h.bias, "Add a softmax bias");
  sub->add_option("--inputs", f.inputs, "Model inputs")
      ->check(CLI::IsMember({"both", "words", "image"}))
      ->capture_default_str();
  sub->add_option("--word-min-count", f.config.word_min_count, "Question word threshold")
      ->capture_default_str();
  sub->add_option("--answer-min-count", f.config.answer_min_count, "Answer class threshold")
      ->capture_default_str();
  sub->add_option("--evals-per-epoch", f.config.evals_per_epoch, "Validation points per epoch")
      ->capture_default_str();
  sub->add_option("--patience", f.config.patience, "Early stop after this many flat epochs (0: off)")
      ->capture_default_str();
}

TrainConfig resolve(const TrainFlags& f) {
  TrainConfig c = f.config;
  c.hyper.inputs = parse_input_mode(f.inputs);
  c.shuffle_seed = f.shuffle_option->count() > 0 ? f.shuffle_seed : c.hyper.seed;
  return c;
}

struct Query {
  std::string checkpoint;
  std::string features;
  std::string question;
  ImageId image_id = 0;
};

void add_query_flags(CLI::App* sub, Query& q) {
  sub->add_option("--checkpoint", q.checkpoint, "Model manifest")->required();
  sub->add_option("--features", q.features, "Image feature vector store")->required();
  sub->add_option("--image-id", q.image_id, "Image to ask about")->required();
  sub->add_option("--question", q.question, "Free-form question")->required();
}

// Prints the attribution report for one query.
void print_explanation(std::ostream& out, const Explanation& e, const Model& model) {
  out << "question: " << e.question << "\n";
  out << "image: " << e.image_id << "\n";
  for (const auto& flag : e.flags) out << "flag: " << flag << "\n";
  for (const auto& w : e.prediction.warnings) out << "warning: " << w << "\n";
  out << "top answers:\n";
  for (const auto& s : e.prediction.answers) {
    out << "  " << format_attribution(s) << "  p=" << fixed(s.prob, 4) << "\n";
  }
  out << "words only:\n";
  for (const auto& r : e.words_only) out << "  " << r.answer << " (" << fixed(r.score) << ")\n";
  out << "image only:\n";
  for (const auto& r : e.image_only) out << "  " << r.answer << " (" << fixed(r.score) << ")\n";
  out << "word importance for \"" << model.answers.at(e.importance.class_index) << "\":\n";
  for (const auto& t : e.importance.tokens) {
    out << "  " << t.rank << ". " << t.token;
    if (t.count > 1) out << " x" << t.count;
    out << " " << fixed(t.value);
    if (t.out_of_vocabulary) out << " [out-of-vocabulary]";
    out << "\n";
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bag-of-words plus image features question answering", "ibowimg"};
  app.set_config("--config", "", "INI or TOML file with flag values; flags override it");
  app.require_subcommand(1);
  std::vector<std::pair<CLI::App*, std::function<void()>>> commands;
  auto command = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->fallthrough();
    return sub;
  };

  // prep
  struct {
    std::string questions, annotations, out;
    std::optional<double> split;
    std::uint64_t seed = 0;
  } prep;
  auto* prep_cmd = command("prep", "Join questions with annotations into QA pairs");
  prep_cmd->add_option("--questions", prep.questions, "VQA questions JSON")->required();
  prep_cmd->add_option("--annotations", prep.annotations, "VQA annotations JSON")->required();
  prep_cmd->add_option("--out", prep.out, "Output pairs file (JSON lines)")->required();
  prep_cmd->add_option("--split", prep.split, "Fraction of images in subset a");
  prep_cmd->add_option("--seed", prep.seed, "Split seed")->capture_default_str();
  commands.emplace_back(prep_cmd, [&] {
    const auto pairs = build_pairs(parse_questions(prep.questions),
                                   parse_annotations(prep.annotations));
    write_pairs(prep.out, pairs);
    out << "pairs: " << pairs.size() << " -> " << prep.out << "\n";
    if (prep.split) {
      const auto split = split_by_image(pairs, *prep.split, prep.seed);
      const fs::path file(prep.out);
      write_pairs(with_suffix(file, ".a.jsonl"), split.a);
      write_pairs(with_suffix(file, ".b.jsonl"), split.b);
      write_split(with_suffix(file, ".split.json"), split.spec);
      out << "subset a: " << split.a.size() << " -> " << with_suffix(file, ".a.jsonl") << "\n";
      out << "subset b: " << split.b.size() << " -> " << with_suffix(file, ".b.jsonl") << "\n";
    }
  });

  // vocab
  struct {
    std::string pairs, out;
    std::size_t word_min = 1, answer_min = 1;
  } vocab;
  auto* vocab_cmd = command("vocab", "Build question word and answer dictionaries");
  vocab_cmd->add_option("--pairs", vocab.pairs, "Training pairs (JSON lines)")->required();
  vocab_cmd->add_option("--out", vocab.out, "Output directory")->required();
  vocab_cmd->add_option("--word-min-count", vocab.word_min, "Question word threshold")
      ->capture_default_str();
  vocab_cmd->add_option("--answer-min-count", vocab.answer_min, "Answer class threshold")
      ->capture_default_str();
  commands.emplace_back(vocab_cmd, [&] {
    const auto pairs = read_pairs(vocab.pairs);
    fs::create_directories(vocab.out);
    const auto words = build_word_dict(pairs, vocab.word_min);
    const auto answers = build_answer_dict(pairs, vocab.answer_min);
    save_dict(fs::path(vocab.out) / "words.json", words, DictKind::kWords);
    save_dict(fs::path(vocab.out) / "answers.json", answers, DictKind::kAnswers);
    out << "words: " << words.size() << "\nanswers: " << answers.size() << "\n";
  });

  // train
  TrainFlags train_flags;
  std::string train_out, train_report;
  auto* train_cmd = command("train", "Train a model and save the best checkpoint");
  add_train_flags(train_cmd, train_flags);
  train_cmd->add_option("--out", train_out, "Checkpoint manifest to write")->required();
  train_cmd->add_option("--report", train_report, "Training report JSON to write");
  commands.emplace_back(train_cmd, [&] {
    const auto config = resolve(train_flags);
    for (const auto& w : validate(config.hyper)) err << "warning: " << w << "\n";
    const auto train_pairs = read_pairs(train_flags.train);
    const auto val_pairs =
        train_flags.val.empty() ? std::vector<QAPair>{} : read_pairs(train_flags.val);
    const auto store = VectorStore::open(train_flags.features);
    const auto result = train(train_pairs, val_pairs, store, config, [&](const EvalPoint& p) {
      out << "epoch " << p.epoch << " eval " << p.eval << " loss " << fixed(p.mean_loss, 6)
          << " val_accuracy " << fixed(p.val_accuracy, 4) << "\n";
      out.flush();
    });
    for (const auto& w : result.report.warnings) err << "warning: " << w << "\n";
    save_model(result.model, train_out);
    if (!train_report.empty()) {
      std::ofstream(train_report) << train_report_json(result.report) << "\n";
    }
    out << "best epoch " << result.report.best_epoch << " val_accuracy "
        << fixed(result.report.best_accuracy, 4) << " -> " << train_out << "\n";
    err << "trained in " << fixed(result.report.seconds) << " s\n";
  });

  // grid
  TrainFlags grid_flags;
  std::string grid_param, grid_out;
  std::vector<double> grid_values;
  auto* grid_cmd = command("grid", "Sweep one hyperparameter and rank by validation accuracy");
  add_train_flags(grid_cmd, grid_flags);
  grid_cmd->add_option("--param", grid_param, "Parameter to sweep")
      ->required()
      ->check(CLI::IsMember({"epochs", "lr_embedding", "lr_softmax", "clip_embedding",
                             "clip_softmax", "word_min_count", "answer_min_count"}));
  grid_cmd->add_option("--values", grid_values, "Candidate values")->required()->delimiter(',');
  grid_cmd->add_option("--out", grid_out, "Result table JSON to write");
  commands.emplace_back(grid_cmd, [&] {
    const auto config = resolve(grid_flags);
    const auto train_pairs = read_pairs(grid_flags.train);
    const auto val_pairs =
        grid_flags.val.empty() ? std::vector<QAPair>{} : read_pairs(grid_flags.val);
    const auto store = VectorStore::open(grid_flags.features);
    const auto rows =
        grid_search(grid_param, grid_values, config, train_pairs, val_pairs, store);
    const auto json = grid_json(grid_param, rows);
    if (!grid_out.empty()) std::ofstream(grid_out) << json << "\n";
    out << json << "\n";
  });

  // eval
  struct {
    std::string checkpoint, pairs, features, out, track = "oe", metric = "loo";
  } ev;
  auto* eval_cmd = command("eval", "Score a model against annotated pairs");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Model manifest")->required();
  eval_cmd->add_option("--pairs", ev.pairs, "Annotated pairs (JSON lines)")->required();
  eval_cmd->add_option("--features", ev.features, "Image feature vector store")->required();
  eval_cmd->add_option("--track", ev.track, "oe (open-ended) or mc (multiple choice)")
      ->check(CLI::IsMember({"oe", "mc"}))
      ->capture_default_str();
  eval_cmd->add_option("--metric", ev.metric, "loo (leave-one-out) or simple")
      ->check(CLI::IsMember({"loo", "simple"}))
      ->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "Results file [{question_id, answer}] to write");
  commands.emplace_back(eval_cmd, [&] {
    const auto model = load_model(ev.checkpoint);
    const auto pairs = read_pairs(ev.pairs);
    const auto store = VectorStore::open(ev.features);
    const auto report =
        evaluate(model, pairs, store, parse_track(ev.track), parse_metric(ev.metric));
    if (!ev.out.empty()) export_results(report.predictions, ev.out);
    out << eval_result_json(report.result) << "\n";
  });

  // predict
  Query predict_query;
  std::size_t predict_k = 3;
  std::string predict_maps, predict_out;
  auto* predict_cmd = command("predict", "Top-k answers with attributions as JSON");
  add_query_flags(predict_cmd, predict_query);
  predict_cmd->add_option("--k", predict_k, "Number of answers")->capture_default_str();
  predict_cmd->add_option("--maps", predict_maps, "Feature map store for the CAM grid");
  predict_cmd->add_option("--out", predict_out, "Write the JSON here instead of stdout");
  commands.emplace_back(predict_cmd, [&] {
    const auto model = load_model(predict_query.checkpoint);
    const auto store = VectorStore::open(predict_query.features);
    const auto maps = open_maps(predict_maps);
    std::optional<ConvFeatureMap> map;
    if (maps) map = maps->get(predict_query.image_id);
    const nlohmann::json j =
        explain(model, predict_query.question, predict_query.image_id,
                store.view(predict_query.image_id), predict_k, 3, map ? &*map : nullptr);
    if (predict_out.empty()) {
      out << j.dump(2) << "\n";
    } else {
      std::ofstream(predict_out) << j.dump(2) << "\n";
    }
  });

  // mc
  Query mc_query;
  std::vector<std::string> mc_choices;
  auto* mc_cmd = command("mc", "Pick the best of the given answer choices");
  add_query_flags(mc_cmd, mc_query);
  mc_cmd->add_option("--choices", mc_choices, "Candidate answers")->required();
  commands.emplace_back(mc_cmd, [&] {
    const auto model = load_model(mc_query.checkpoint);
    const auto store = VectorStore::open(mc_query.features);
    const auto r = predict_multiple_choice(model, mc_query.question,
                                           store.view(mc_query.image_id), mc_choices);
    nlohmann::json j = r;
    j["question"] = mc_query.question;
    j["image_id"] = mc_query.image_id;
    out << j.dump(2) << "\n";
  });

  // explain
  Query explain_query;
  std::size_t explain_k = 3;
  std::uint32_t cam_scale = 1;
  std::string explain_maps, cam_out;
  auto* explain_cmd = command("explain", "Print answers split into image and word terms");
  add_query_flags(explain_cmd, explain_query);
  explain_cmd->add_option("--k", explain_k, "Number of answers")->capture_default_str();
  explain_cmd->add_option("--maps", explain_maps, "Feature map store for the CAM");
  explain_cmd->add_option("--cam", cam_out, "Write the top answer's CAM as a PGM file");
  explain_cmd->add_option("--cam-scale", cam_scale, "Bilinear upsampling factor for --cam")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  commands.emplace_back(explain_cmd, [&] {
    if (!cam_out.empty() && explain_maps.empty()) {
      fail(ErrorKind::kNotFound, "--cam needs a feature map store; pass --maps");
    }
    const auto model = load_model(explain_query.checkpoint);
    const auto store = VectorStore::open(explain_query.features);
    const auto maps = open_maps(explain_maps);
    std::optional<ConvFeatureMap> map;
    if (maps) map = maps->get(explain_query.image_id);
    const auto e = explain(model, explain_query.question, explain_query.image_id,
                           store.view(explain_query.image_id), explain_k, 3,
                           map ? &*map : nullptr);
    print_explanation(out, e, model);
    if (!cam_out.empty()) {
      const auto grid = upsample_bilinear(*e.cam, e.cam->h * cam_scale, e.cam->w * cam_scale);
      std::ofstream file(cam_out);
      if (!(file << to_pgm(grid))) fail(ErrorKind::kIo, "cannot write " + cam_out);
      out << "cam: " << grid.h << "x" << grid.w << " -> " << cam_out << "\n";
    }
  });

  // serve
  ServiceConfig serve;
  std::string serve_checkpoint, serve_features, serve_maps, serve_images, serve_static;
  auto* serve_cmd = command("serve", "Serve the HTTP API");
  serve_cmd->add_option("--checkpoint", serve_checkpoint, "Model manifest")->required();
  serve_cmd->add_option("--features", serve_features, "Image feature vector store")->required();
  serve_cmd->add_option("--maps", serve_maps, "Feature map store (enables CAM)");
  serve_cmd->add_option("--images-dir", serve_images, "Thumbnails named <image_id>.jpg");
  serve_cmd->add_option("--static-dir", serve_static, "Built web UI to serve at /");
  serve_cmd->add_option("--host", serve.host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--port", serve.port, "Port (0: pick one)")->capture_default_str();
  serve_cmd->add_option("--max-question-length", serve.max_question_length, "Bytes")
      ->capture_default_str();
  serve_cmd->add_option("--k", serve.default_k, "Default number of answers")
      ->capture_default_str();
  serve_cmd->add_option("--cors-origin", serve.cors_origin, "Access-Control-Allow-Origin")
      ->capture_default_str();
  commands.emplace_back(serve_cmd, [&] {
    serve.checkpoint = serve_checkpoint;
    serve.vectors = serve_features;
    if (!serve_maps.empty()) serve.maps = serve_maps;
    if (!serve_images.empty()) serve.images_dir = serve_images;
    if (!serve_static.empty()) serve.static_dir = serve_static;
    // Block the stop signals before any server thread exists so only
    // sigwait below sees them.
    sigset_t stop_signals;
    sigemptyset(&stop_signals);
    sigaddset(&stop_signals, SIGINT);
    sigaddset(&stop_signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);
    Service service(serve);
    const int port = service.start();
    out << "listening on http://" << serve.host << ":" << port << "\n";
    out.flush();
    service.load();
    out << "model " << model_fingerprint(serve.checkpoint) << " loaded\n";
    out.flush();
    int signal = 0;
    sigwait(&stop_signals, &signal);
    service.stop();
  });

  // synth
  struct {
    std::string task = "separable", out;
    synth::TaskOptions options;
    std::size_t images = 200;
  } syn;
  auto* synth_cmd = command("synth", "Generate a synthetic corpus with feature stores");
  synth_cmd->add_option("--task", syn.task, "separable, word-biased or vqa")
      ->check(CLI::IsMember({"separable", "word-biased", "vqa"}))
      ->capture_default_str();
  synth_cmd->add_option("--out", syn.out, "Output directory")->required();
  synth_cmd->add_option("--seed", syn.options.seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("--train-pairs", syn.options.train_pairs, "Training pairs")
      ->capture_default_str();
  synth_cmd->add_option("--val-pairs", syn.options.val_pairs, "Validation pairs")
      ->capture_default_str();
  synth_cmd->add_option("--questions-per-image", syn.options.questions_per_image,
                        "Questions per image")
      ->capture_default_str();
  synth_cmd->add_option("--dim", syn.options.dim, "Feature channels")->capture_default_str();
  synth_cmd->add_option("--images", syn.images, "Images (vqa task)")->capture_default_str();
  commands.emplace_back(synth_cmd, [&] {
    const fs::path dir(syn.out);
    fs::create_directories(dir);
    auto write_text = [](const fs::path& file, const std::string& text) {
      std::ofstream f(file);
      if (!(f << text << "\n")) fail(ErrorKind::kIo, "cannot write " + file.string());
    };
    if (syn.task == "vqa") {
      const auto corpus = synth::make_vqa_corpus(syn.images, syn.options.questions_per_image,
                                                 syn.options.seed);
      write_text(dir / "questions.json", questions_to_json(corpus.questions));
      write_text(dir / "annotations.json", annotations_to_json(corpus.annotations));
      std::vector<ImageFeature> features;
      const auto random = synth::random_features(syn.images, syn.options.dim, syn.options.seed);
      for (std::size_t i = 0; i < syn.images; ++i) {
        features.push_back({corpus.questions[i * syn.options.questions_per_image].image_id,
                            random[i].values});
      }
      write_vector_store(dir / "features.ibf", syn.options.dim, features);
      out << "images: " << syn.images << "\nquestions: " << corpus.questions.size() << "\n";
      return;
    }
    const auto task = syn.task == "separable" ? synth::make_separable_task(syn.options)
                                              : synth::make_word_biased_task(syn.options);
    write_text(dir / "questions.json", questions_to_json(task.questions));
    write_text(dir / "annotations.json", annotations_to_json(task.annotations));
    write_pairs(dir / "train.jsonl", task.train);
    write_pairs(dir / "val.jsonl", task.val);
    write_vector_store(dir / "features.ibf", task.dim, task.features);
    write_map_store(dir / "maps.ibm", task.maps);
    out << "train pairs: " << task.train.size() << "\nval pairs: " << task.val.size()
        << "\nimages: " << task.features.size() << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (app.exit(e, out, err) == 0) return kOk;
    err << "\n" << app.help();
    return kUsage;
  }
  try {
    for (auto& [sub, action] : commands) {
      if (!sub->parsed()) continue;
      err << "# resolved config\n[" << sub->get_name() << "]\n"
          << sub->config_to_str(true, false);
      action();
    }
  } catch (const Error& e) {
    err << "ibowimg: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "ibowimg: " << e.what() << "\n";
    return kRuntime;
  }
  return kOk;
}

}  // namespace ibowimg::cli
