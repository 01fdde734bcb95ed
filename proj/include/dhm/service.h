#pragma once

#include "dhm/errors.h"
#include "dhm/harmonic.h"

#include <json.hpp>

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace dhm {

constexpr int kServiceSchema = 1;

struct ServiceOptions {
  int max_level = 6;
  int full_edges_level = 5;        // deeper snapshots decimate edges unless "full" is set
  std::size_t max_sessions = 64;
  long max_steps_per_message = 1000000;
  std::size_t max_history_points = 2048;
  int instability_window = 5;
};

// JSON request/reply handler. Every request carries "type"; replies carry
// "ok" and either the payload or "error": {"code", "message"} with code one of
// invalid_input, not_found, instability, limit.
class Service {
public:
  explicit Service(ServiceOptions opts = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  nlohmann::json handle(const nlohmann::json& request);
  std::string handle_text(const std::string& request);
  std::size_t session_count() const;
  const ServiceOptions& options() const { return opts_; }

  struct Session;
  struct BaseMesh;

private:
  std::shared_ptr<Session> find(const nlohmann::json& request);
  std::shared_ptr<const BaseMesh> base_mesh(const FenchelNielsen& fn);

  nlohmann::json create(const nlohmann::json& request);
  nlohmann::json step(const nlohmann::json& request);
  nlohmann::json refine(const nlohmann::json& request);
  nlohmann::json state(const nlohmann::json& request);
  nlohmann::json set_params(const nlohmann::json& request);
  nlohmann::json close(const nlohmann::json& request);

  ServiceOptions opts_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, std::shared_ptr<const BaseMesh>> bases_;
  std::uint64_t id_state_;
};

// Frames are a 4-byte big-endian length followed by that many bytes of JSON text.
constexpr std::uint32_t kMaxFrameBytes = 64u << 20;
std::string encode_frame(const std::string& payload);
// Blocking reads and writes on a socket; read_frame returns false on a clean close.
bool read_frame(int fd, std::string& payload, std::uint32_t max_bytes = kMaxFrameBytes);
void write_frame(int fd, const std::string& payload);

// TCP front end: one thread per connection, requests on a connection answered in order.
class TcpServer {
public:
  TcpServer(Service& service, std::string host = "127.0.0.1", int port = 0);
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  void start();
  void stop();
  // Bound port; meaningful after start().
  int port() const { return port_; }
  bool running() const { return running_; }

private:
  void accept_loop();
  void serve(int fd);

  Service& service_;
  std::string host_;
  int port_;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex conn_mutex_;
  std::vector<std::thread> connections_;
  std::vector<int> conn_fds_;
};

// Minimal blocking client for tests and scripts.
class ServiceClient {
public:
  ServiceClient(const std::string& host, int port);
  ~ServiceClient();
  ServiceClient(const ServiceClient&) = delete;
  ServiceClient& operator=(const ServiceClient&) = delete;
  nlohmann::json request(const nlohmann::json& message);

private:
  int fd_ = -1;
};

} // namespace dhm
