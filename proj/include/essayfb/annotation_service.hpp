#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "essayfb/annotation.hpp"

namespace essayfb::annotation {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks a free port
  // When non-empty, GET /api/export requires `Authorization: Bearer <token>`.
  std::string admin_token;
  // Optional directory served at / (the browser UI build).
  std::filesystem::path static_dir;
};

/// HTTP front end over an AnnotationStore.
///
///   GET  /api/statements
///   GET  /api/annotators/{token}/items
///   GET  /api/annotators/{token}/progress
///   POST /api/annotations            {annotator_id, item_id, s1..s5}
///   GET  /api/export                 line-delimited export rows
class AnnotationServer {
 public:
  AnnotationServer(AnnotationStore& store, ServiceOptions options = {});
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  int port() const { return port_; }
  std::string base_url() const;
  /// Blocks until stop() is called from elsewhere.
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  AnnotationStore& store_;
  ServiceOptions options_;
  int port_ = 0;
};

}  // namespace essayfb::annotation
