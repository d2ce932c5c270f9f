#include "essayfb/annotation_service.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "essayfb/errors.hpp"

namespace essayfb::annotation {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

}  // namespace

struct AnnotationServer::Impl {
  httplib::Server server;
  std::thread thread;
};

AnnotationServer::AnnotationServer(AnnotationStore& store, ServiceOptions options)
    : impl_(std::make_unique<Impl>()), store_(store), options_(std::move(options)) {
  auto& server = impl_->server;
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type, Authorization");
    res.status = 204;
  });

  server.Get("/api/statements", [](const httplib::Request&, httplib::Response& res) {
    json statements = json::array();
    for (int i = 0; i < kNumStatements; ++i) {
      statements.push_back({{"id", "s" + std::to_string(i + 1)}, {"text", kStatements[i]}});
    }
    send_json(res, 200,
              {{"statements", statements},
               {"scale", {{"min", kLikertMin}, {"max", kLikertMax}, {"min_label", kScaleMinLabel},
                          {"max_label", kScaleMaxLabel}}}});
  });

  server.Get(R"(/api/annotators/([^/]+)/items)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string annotator = req.matches[1];
    try {
      json items = json::array();
      for (const auto* item : store_.items_for(annotator)) {
        auto view = annotator_view(*item);
        if (auto current = store_.current(annotator, item->item_id)) {
          for (int i = 0; i < kNumStatements; ++i) view["answers"]["s" + std::to_string(i + 1)] = current->s[i];
        }
        items.push_back(std::move(view));
      }
      send_json(res, 200, {{"annotator_id", annotator}, {"items", items}});
    } catch (const NotFoundError& e) {
      send_error(res, 404, e.what());
    }
  });

  server.Get(R"(/api/annotators/([^/]+)/progress)", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto p = store_.progress(std::string(req.matches[1]));
      send_json(res, 200, {{"completed", p.completed}, {"total", p.total}});
    } catch (const NotFoundError& e) {
      send_error(res, 404, e.what());
    }
  });

  server.Post("/api/annotations", [this](const httplib::Request& req, httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) return send_error(res, 400, "body must be a JSON object");
    try {
      auto record = annotation_from_json(body);
      record.submitted_at.clear();  // the server clock decides
      const auto stored = store_.submit(std::move(record));
      const auto p = store_.progress(stored.annotator_id);
      send_json(res, 201, {{"annotation", to_json(stored)}, {"progress", {{"completed", p.completed}, {"total", p.total}}}});
    } catch (const NotFoundError& e) {
      send_error(res, 404, e.what());
    } catch (const ValidationError& e) {
      send_error(res, 400, e.what());
    } catch (const FormatError& e) {
      send_error(res, 400, e.what());
    } catch (const Error& e) {
      spdlog::error("storing annotation failed: {}", e.what());
      send_error(res, 500, e.what());
    }
  });

  server.Get("/api/export", [this](const httplib::Request& req, httplib::Response& res) {
    if (!options_.admin_token.empty() &&
        req.get_header_value("Authorization") != "Bearer " + options_.admin_token) {
      return send_error(res, 403, "export requires the admin token");
    }
    std::string body;
    for (const auto& row : store_.export_rows()) body += to_json(row).dump() + "\n";
    res.set_content(body, "application/x-ndjson");
  });

  if (!options_.static_dir.empty() && !server.set_mount_point("/", options_.static_dir.string())) {
    throw ValidationError("cannot serve static files from " + options_.static_dir.string());
  }

  if (options_.port == 0) {
    port_ = server.bind_to_any_port(options_.host);
  } else {
    port_ = server.bind_to_port(options_.host, options_.port) ? options_.port : -1;
  }
  if (port_ <= 0) throw Error("annotation service could not bind " + options_.host);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  server.wait_until_ready();
}

AnnotationServer::~AnnotationServer() { stop(); }

std::string AnnotationServer::base_url() const { return "http://" + options_.host + ":" + std::to_string(port_); }

void AnnotationServer::wait() {
  while (impl_->server.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

void AnnotationServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace essayfb::annotation
