#pragma once

#include <memory>
#include <string>
#include <thread>

#include "linkgate/gateway.h"

namespace httplib {
class Server;
}

namespace linkgate {

inline constexpr std::string_view kSessionCookie = "lg_session";

// HTTP front end for a Gateway:
//   GET  /inspect?target=...            task page, or 302 for allowlisted targets
//   POST /session/{id}/answer           answer, elapsed_ms
//   POST /session/{id}/report|back|confirm
//   GET  /session/{id}                  current page, for client retries
//   GET  /proceed?token=...             one-time 302 to the target
//   GET  /healthz
class HttpGateway {
 public:
  explicit HttpGateway(Gateway& gateway);
  ~HttpGateway();
  HttpGateway(const HttpGateway&) = delete;
  HttpGateway& operator=(const HttpGateway&) = delete;

  // Binds host:port (port 0 picks a free one). Returns the bound port or -1.
  int bind(const std::string& host, int port);
  // Serves on the calling thread until stop().
  bool listen();
  // Serves on a background thread.
  void start();
  void stop();
  int port() const { return port_; }

 private:
  Gateway& gateway_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace linkgate
