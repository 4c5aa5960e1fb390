#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#include "ibowimg/checkpoint.hpp"
#include "ibowimg/features.hpp"

namespace ibowimg {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks an ephemeral port
  std::filesystem::path checkpoint;
  std::filesystem::path vectors;
  std::optional<std::filesystem::path> maps;
  std::optional<std::filesystem::path> images_dir;  // thumbnails, /images/*
  std::optional<std::filesystem::path> static_dir;  // built web UI, served at /
  std::size_t max_question_length = 512;
  std::size_t default_k = 3;
  std::string cors_origin = "*";
};

// Everything a request reads. Immutable once published.
struct ServiceState {
  Model model;
  VectorStore vectors;
  std::optional<MapStore> maps;
  std::string fingerprint;
  // image_id -> URL path of a thumbnail under /images, when one exists.
  std::map<ImageId, std::string> thumbnails;
};

std::shared_ptr<const ServiceState> load_service_state(const ServiceConfig& config);

struct HttpResponse {
  int status = 200;
  std::string body;  // JSON
};

class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Loads checkpoint and stores from the config. Until this (or set_state)
  // completes, every /api endpoint answers 503.
  void load();
  void set_state(std::shared_ptr<const ServiceState> state);
  bool ready() const;

  // Transport-free request handling; the HTTP layer is a thin shim over this.
  HttpResponse handle(std::string_view method, std::string_view path,
                      std::string_view body) const;

  // Binds and serves on a background thread; returns the bound port.
  int start();
  void stop();
  // Blocks until stop() is called from elsewhere.
  void wait();

  const ServiceConfig& config() const { return config_; }

 private:
  std::shared_ptr<const ServiceState> state() const;

  HttpResponse images(const ServiceState& s) const;
  HttpResponse ask(const ServiceState& s, std::string_view body) const;
  HttpResponse multiple_choice(const ServiceState& s, std::string_view body) const;
  HttpResponse health(const ServiceState* s) const;

  ServiceConfig config_;
  mutable std::mutex mutex_;
  std::shared_ptr<const ServiceState> state_;

  struct Server;
  std::unique_ptr<Server> server_;
  std::thread thread_;
};

}  // namespace ibowimg
