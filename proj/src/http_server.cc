#include "linkgate/http_server.h"

#include <httplib.h>

namespace linkgate {

namespace {

constexpr size_t kWorkerThreads = 32;

std::optional<std::string> cookie_value(const httplib::Request& req, std::string_view name) {
  if (!req.has_header("Cookie")) return std::nullopt;
  for (auto& part : split(req.get_header_value("Cookie"), ';')) {
    auto item = trim(part);
    auto eq = item.find('=');
    if (eq != std::string_view::npos && item.substr(0, eq) == name)
      return std::string(item.substr(eq + 1));
  }
  return std::nullopt;
}

// Form fields or a JSON object body.
std::optional<std::string> field(const httplib::Request& req, const std::string& name) {
  if (req.has_param(name)) return req.get_param_value(name);
  if (req.get_header_value("Content-Type").starts_with("application/json")) {
    auto body = Json::parse(req.body, nullptr, false);
    if (body.is_object() && body.contains(name)) {
      const auto& v = body.at(name);
      return v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
  return std::nullopt;
}

void send(httplib::Response& res, const GatewayResponse& r) {
  res.status = r.status;
  if (!r.session_id.empty())
    res.set_header("Set-Cookie", std::string(kSessionCookie) + "=" + r.session_id +
                                     "; Path=/; HttpOnly; SameSite=Lax");
  if (r.status == 302) {
    res.set_header("Location", r.location);
    res.set_header("Cache-Control", "no-store");
    return;
  }
  res.set_content(r.body.dump(), "application/json");
}

}  // namespace

HttpGateway::HttpGateway(Gateway& gateway)
    : gateway_(gateway), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;
  srv.new_task_queue = [] { return new httplib::ThreadPool(kWorkerThreads); };
  srv.set_tcp_nodelay(true);

  srv.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });

  srv.Get("/inspect", [this](const httplib::Request& req, httplib::Response& res) {
    InspectRequest request;
    request.target = req.get_param_value("target");
    request.session_cookie = cookie_value(req, kSessionCookie);
    if (req.has_param("kind")) {
      request.kind = task_kind_from_string(req.get_param_value("kind"));
      if (!request.kind) {
        send(res, {400, {{"error", "bad_kind"}, {"message", "unknown task kind"}}, "", ""});
        return;
      }
    }
    for (const auto* tag : {"participant", "email", "group"})
      if (req.has_param(tag)) request.tags[tag] = req.get_param_value(tag);
    send(res, gateway_.handle_inspect(request));
  });

  srv.Post(R"(/session/([0-9a-f]+)/answer)", [this](const httplib::Request& req, httplib::Response& res) {
    auto answer = field(req, "answer");
    if (!answer) {
      send(res, {400, {{"error", "missing_answer"}, {"message", "answer field is required"}}, "", ""});
      return;
    }
    std::optional<int64_t> elapsed;
    if (auto raw = field(req, "elapsed_ms")) {
      try {
        elapsed = std::stoll(*raw);
      } catch (const std::exception&) {
        send(res, {400, {{"error", "bad_elapsed_ms"}, {"message", "elapsed_ms must be an integer"}}, "", ""});
        return;
      }
    }
    send(res, gateway_.handle_answer(req.matches[1], *answer, elapsed));
  });

  srv.Post(R"(/session/([0-9a-f]+)/report)", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, gateway_.handle_report(req.matches[1]));
  });
  srv.Post(R"(/session/([0-9a-f]+)/back)", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, gateway_.handle_back(req.matches[1]));
  });
  srv.Post(R"(/session/([0-9a-f]+)/confirm)", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, gateway_.handle_confirm(req.matches[1]));
  });
  srv.Get(R"(/session/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, gateway_.session_status(req.matches[1]));
  });

  srv.Get("/proceed", [this](const httplib::Request& req, httplib::Response& res) {
    auto r = gateway_.handle_proceed(req.get_param_value("token"));
    r.session_id.clear();
    send(res, r);
  });
}

HttpGateway::~HttpGateway() { stop(); }

int HttpGateway::bind(const std::string& host, int port) {
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else {
    port_ = server_->bind_to_port(host, port) ? port : -1;
  }
  return port_;
}

bool HttpGateway::listen() { return server_->listen_after_bind(); }

void HttpGateway::start() {
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void HttpGateway::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace linkgate
