#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "crowdshape/gateway/session.hpp"

namespace crowdshape::gateway {

struct ServerOptions {
  std::string address = "127.0.0.1";
  /// 0 picks a free port; see Server::port().
  std::uint16_t port = 8080;
  int threads = 2;
};

/// HTTP + WebSocket front end over a SessionManager.
///
///   POST /v1/sessions                      create_session_request -> session_descriptor
///   GET  /v1/sessions/{id}                 -> session_descriptor
///   POST /v1/sessions/{id}/start|pause|stop -> lifecycle_response
///   POST /v1/sessions/{id}/trainers        register_trainer_request -> register_trainer_response
///   POST /v1/sessions/{id}/feedback        feedback_request -> feedback_ack
///   POST /v1/sessions/{id}/step            -> step message (pace 0 sessions)
///   GET  /v1/sessions/{id}/stats           -> stats_response
///   GET  /v1/sessions/{id}/stream          WebSocket upgrade; stream messages
///   GET  /v1/schema                        the frozen schema document
///
/// Errors use error_response with the HTTP status from http_status().
class Server {
 public:
  Server(SessionManager& sessions, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts the worker threads; returns once listening.
  void start();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();
  void stop();

  [[nodiscard]] std::uint16_t port() const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace crowdshape::gateway
