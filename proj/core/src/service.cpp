#include "ibowimg/service.hpp"

#include <httplib.h>

#include <nlohmann/json.hpp>

#include "ibowimg/error.hpp"
#include "ibowimg/inference.hpp"

namespace ibowimg {

using nlohmann::json;

struct Service::Server {
  httplib::Server http;
};

namespace {

HttpResponse error_response(int status, std::string_view code,
                            std::string_view detail) {
  return {status, json{{"error", code}, {"detail", detail}}.dump()};
}

// Parsed common fields of /api/ask and /api/mc.
struct Query {
  ImageId image_id = 0;
  std::string question;
  json body;
};

std::optional<HttpResponse> parse_query(std::string_view body, Query& q,
                                        std::size_t max_length) {
  q.body = json::parse(body.begin(), body.end(), nullptr, false);
  if (q.body.is_discarded() || !q.body.is_object()) {
    return error_response(400, "bad_request", "body must be a JSON object");
  }
  const auto id = q.body.find("image_id");
  if (id == q.body.end() || !id->is_number_integer() ||
      (!id->is_number_unsigned() && id->get<std::int64_t>() < 0)) {
    return error_response(400, "bad_request", "\"image_id\" must be a non-negative integer");
  }
  q.image_id = id->get<ImageId>();
  const auto question = q.body.find("question");
  if (question != q.body.end()) {
    if (!question->is_string()) {
      return error_response(400, "bad_request", "\"question\" must be a string");
    }
    q.question = question->get<std::string>();
  }
  if (q.question.size() > max_length) {
    return error_response(400, "question_too_long",
                          "question exceeds " + std::to_string(max_length) +
                              " characters");
  }
  return std::nullopt;
}

}  // namespace

std::shared_ptr<const ServiceState> load_service_state(const ServiceConfig& config) {
  auto state = std::make_shared<ServiceState>(ServiceState{
      load_model(config.checkpoint), VectorStore::open(config.vectors),
      std::nullopt, model_fingerprint(config.checkpoint), {}});
  if (state->vectors.dim() != state->model.params.dims().image) {
    fail(ErrorKind::kDimension, "feature store dim " +
                                    std::to_string(state->vectors.dim()) +
                                    " does not match the model");
  }
  if (config.maps) {
    state->maps = MapStore::open(*config.maps);
    if (state->maps->count() > 0 &&
        state->maps->k() != state->model.params.dims().image) {
      fail(ErrorKind::kDimension, "map store channel count does not match the model");
    }
  }
  if (config.images_dir && std::filesystem::is_directory(*config.images_dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(*config.images_dir)) {
      const auto stem = entry.path().stem().string();
      const auto ext = entry.path().extension().string();
      if (ext != ".jpg" && ext != ".jpeg" && ext != ".png") continue;
      if (stem.empty() || stem.find_first_not_of("0123456789") != std::string::npos) {
        continue;
      }
      const ImageId id = std::stoull(stem);
      if (state->vectors.contains(id)) {
        state->thumbnails[id] = "/images/" + entry.path().filename().string();
      }
    }
  }
  return state;
}

Service::Service(ServiceConfig config) : config_(std::move(config)) {}

Service::~Service() { stop(); }

void Service::load() { set_state(load_service_state(config_)); }

void Service::set_state(std::shared_ptr<const ServiceState> state) {
  std::lock_guard lock(mutex_);
  state_ = std::move(state);
}

std::shared_ptr<const ServiceState> Service::state() const {
  std::lock_guard lock(mutex_);
  return state_;
}

bool Service::ready() const { return state() != nullptr; }

HttpResponse Service::handle(std::string_view method, std::string_view path,
                             std::string_view body) const {
  const auto s = state();
  if (method == "GET" && path == "/api/health") return health(s.get());
  const bool known = (method == "GET" && path == "/api/images") ||
                     (method == "POST" && (path == "/api/ask" || path == "/api/mc"));
  if (!known) return error_response(404, "not_found", std::string(path));
  if (!s) return error_response(503, "model_loading", "model is still loading");
  try {
    if (path == "/api/images") return images(*s);
    if (path == "/api/ask") return ask(*s, body);
    return multiple_choice(*s, body);
  } catch (const Error& e) {
    return error_response(500, to_string(e.kind()), e.what());
  }
}

HttpResponse Service::health(const ServiceState* s) const {
  if (s == nullptr) {
    return {503, json{{"status", "loading"},
                      {"error", "model_loading"},
                      {"detail", "model is still loading"}}
                     .dump()};
  }
  const auto dims = s->model.params.dims();
  return {200, json{{"status", "ok"},
                    {"fingerprint", s->fingerprint},
                    {"A", dims.answers},
                    {"V", dims.vocab},
                    {"d_v", dims.image},
                    {"cam", s->maps.has_value()}}
                   .dump()};
}

HttpResponse Service::images(const ServiceState& s) const {
  json out = json::array();
  for (ImageId id : s.vectors.ids()) {
    json entry{{"image_id", id}};
    if (auto it = s.thumbnails.find(id); it != s.thumbnails.end()) {
      entry["thumbnail_url"] = it->second;
    }
    out.push_back(std::move(entry));
  }
  return {200, out.dump()};
}

HttpResponse Service::ask(const ServiceState& s, std::string_view body) const {
  Query q;
  if (auto err = parse_query(body, q, config_.max_question_length)) return *err;
  std::size_t k = config_.default_k;
  if (auto it = q.body.find("k"); it != q.body.end()) {
    if (!it->is_number_integer() || it->get<std::int64_t>() < 1) {
      return error_response(400, "bad_request", "\"k\" must be a positive integer");
    }
    k = it->get<std::size_t>();
  }
  if (!s.vectors.contains(q.image_id)) {
    return error_response(404, "image_not_found",
                          "image_id " + std::to_string(q.image_id) +
                              " is not in the feature store");
  }
  std::optional<ConvFeatureMap> map;
  bool cam_missing = false;
  if (s.maps) {
    if (s.maps->contains(q.image_id)) {
      map = s.maps->get(q.image_id);
    } else {
      cam_missing = true;
    }
  }
  auto e = explain(s.model, q.question, q.image_id, s.vectors.view(q.image_id), k,
                   3, map ? &*map : nullptr);
  if (cam_missing) e.flags.emplace_back("cam_unavailable");
  json j = e;
  if (s.maps && !e.cam) j["cam"] = nullptr;
  return {200, j.dump()};
}

HttpResponse Service::multiple_choice(const ServiceState& s,
                                      std::string_view body) const {
  Query q;
  if (auto err = parse_query(body, q, config_.max_question_length)) return *err;
  const auto choices = q.body.find("choices");
  if (choices == q.body.end() || !choices->is_array() || choices->empty()) {
    return error_response(400, "bad_request", "\"choices\" must be a non-empty array");
  }
  std::vector<std::string> list;
  for (const auto& c : *choices) {
    if (!c.is_string()) {
      return error_response(400, "bad_request", "every choice must be a string");
    }
    list.push_back(c.get<std::string>());
  }
  if (!s.vectors.contains(q.image_id)) {
    return error_response(404, "image_not_found",
                          "image_id " + std::to_string(q.image_id) +
                              " is not in the feature store");
  }
  const auto result = predict_multiple_choice(s.model, q.question,
                                              s.vectors.view(q.image_id), list);
  json j = result;
  j["question"] = q.question;
  j["image_id"] = q.image_id;
  return {200, j.dump()};
}

int Service::start() {
  if (server_) fail(ErrorKind::kArgument, "service already started");
  server_ = std::make_unique<Server>();
  auto& http = server_->http;
  http.set_default_headers({{"Access-Control-Allow-Origin", config_.cors_origin}});

  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    const auto r = handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  http.Get("/api/health", route);
  http.Get("/api/images", route);
  http.Post("/api/ask", route);
  http.Post("/api/mc", route);
  http.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
  if (config_.images_dir) http.set_mount_point("/images", config_.images_dir->string());
  if (config_.static_dir) http.set_mount_point("/", config_.static_dir->string());

  int port = config_.port;
  if (port == 0) {
    port = http.bind_to_any_port(config_.host);
  } else if (!http.bind_to_port(config_.host, port)) {
    port = -1;
  }
  if (port < 0) {
    server_.reset();
    fail(ErrorKind::kIo, "cannot bind " + config_.host + ":" +
                             std::to_string(config_.port));
  }
  thread_ = std::thread([this] { server_->http.listen_after_bind(); });
  http.wait_until_ready();
  return port;
}

void Service::stop() {
  if (server_) server_->http.stop();
  if (thread_.joinable()) thread_.join();
  server_.reset();
}

void Service::wait() {
  if (thread_.joinable()) thread_.join();
}

}  // namespace ibowimg
