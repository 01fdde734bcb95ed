#include "dhm/service.h"

#include "dhm/format.h"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <optional>
#include <random>
#include <unordered_map>

namespace dhm {

using json = nlohmann::json;

struct Service::BaseMesh {
  FuchsianGroup group;
  FundamentalDomain domain;
  Triangulation mesh;
};

struct Service::Session {
  std::mutex mutex;
  std::string id;
  FenchelNielsen fn_domain;
  FenchelNielsen fn_target;
  DeckGroup target_deck;
  std::optional<FlowState> flow;
  std::size_t recorded = 0; // entries of flow->energy_history already copied into the session history
  std::vector<double> energy_history;
  std::vector<double> tension_history;
  long revision = 0;
  long total_iterations = 0;
  double tolerance = 0;
  bool custom_step = false;
  bool diverged = false;
  bool closed = false;
};

namespace {

[[noreturn]] void invalid(const std::string& what) { throw DomainError(what); }

const json& field(const json& j, const char* name) {
  if (!j.contains(name)) invalid(std::string("missing field '") + name + "'");
  return j.at(name);
}

long integer_field(const json& j, const char* name, long fallback, bool required = false) {
  if (!j.contains(name)) {
    if (required) invalid(std::string("missing field '") + name + "'");
    return fallback;
  }
  const json& v = j.at(name);
  if (!v.is_number_integer()) invalid(std::string("field '") + name + "' must be an integer");
  return v.get<long>();
}

double real_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_number()) invalid(std::string("field '") + name + "' must be a number");
  return v.get<double>();
}

bool bool_field(const json& j, const char* name, bool fallback) {
  if (!j.contains(name)) return fallback;
  if (!j.at(name).is_boolean()) invalid(std::string("field '") + name + "' must be a boolean");
  return j.at(name).get<bool>();
}

FenchelNielsen fn_field(const json& j, const char* name) {
  const json& v = field(j, name);
  FenchelNielsen fn;
  if (v.is_string()) {
    fn = FenchelNielsen::parse(v.get<std::string>());
  } else if (v.is_array() && v.size() == 6) {
    for (std::size_t i = 0; i < 6; ++i) {
      if (!v[i].is_number()) invalid(std::string("field '") + name + "' must hold six numbers");
      (i < 3 ? fn.lengths[i] : fn.twists[i - 3]) = v[i].get<double>();
    }
  } else {
    invalid(std::string("field '") + name + "' must be \"l1,l2,l3,t1,t2,t3\" or an array of six numbers");
  }
  fn.validate();
  return fn;
}

json error_reply(const char* code, const std::string& message) {
  return {{"ok", false}, {"error", {{"code", code}, {"message", message}}}};
}

json disk(const Geometry& g, const Point& p) {
  const Vec2 d = g.to_disk(p);
  return json::array({d.x(), d.y()});
}

std::vector<double> sampled(const std::vector<double>& h, std::size_t limit, std::size_t& stride) {
  stride = 1;
  if (h.size() <= limit || limit < 2) return h;
  stride = (h.size() - 1 + limit - 2) / (limit - 1);
  std::vector<double> out;
  for (std::size_t i = 0; i < h.size(); i += stride) out.push_back(h[i]);
  if ((h.size() - 1) % stride != 0) out.push_back(h.back());
  return out;
}

void sync_history(Service::Session& s) {
  const FlowState& f = *s.flow;
  for (std::size_t k = s.recorded; k < f.energy_history.size(); ++k) {
    s.energy_history.push_back(f.energy_history[k]);
    s.tension_history.push_back(f.tension_norm_history[k]);
  }
  s.recorded = f.energy_history.size();
}

json base_reply(const Service::Session& s, const char* type) {
  const FlowState& f = *s.flow;
  return {{"ok", true},
          {"type", type},
          {"session", s.id},
          {"revision", s.revision},
          {"level", f.map.mesh().level()},
          {"iteration", s.total_iterations},
          {"energy", f.energy_history.back()},
          {"tension_norm", f.tension_norm_history.back()},
          {"step_size", f.step_size},
          {"tolerance", s.tolerance},
          {"converged", flow_converged(f, s.tolerance)},
          {"diverged", s.diverged}};
}

json mesh_stats(const Triangulation& m) {
  const MeshStats st = quality_stats(m, false);
  return {{"vertices", st.vertices}, {"edges", st.edges},         {"triangles", st.triangles},
          {"mesh_size", st.mesh_size}, {"min_angle", st.min_angle}, {"max_angle", st.max_angle}};
}

} // namespace

Service::Service(ServiceOptions opts) : opts_(opts) {
  if (opts_.max_level < 0 || opts_.max_level > 8) throw DomainError("service: max_level must lie in [0, 8]");
  std::random_device rd;
  id_state_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

Service::~Service() = default;

std::size_t Service::session_count() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

std::string Service::handle_text(const std::string& request) {
  json req;
  try {
    req = json::parse(request);
  } catch (const json::exception& e) {
    return error_reply("invalid_input", std::string("malformed JSON: ") + e.what()).dump();
  }
  return handle(req).dump();
}

json Service::handle(const json& request) {
  json reply;
  try {
    if (!request.is_object()) invalid("request must be a JSON object");
    if (request.contains("schema") && request.at("schema") != kServiceSchema)
      invalid("unsupported schema version; expected " + std::to_string(kServiceSchema));
    const json& t = field(request, "type");
    if (!t.is_string()) invalid("field 'type' must be a string");
    const std::string type = t.get<std::string>();
    if (type == "create") {
      reply = create(request);
    } else if (type == "step") {
      reply = step(request);
    } else if (type == "refine") {
      reply = refine(request);
    } else if (type == "state") {
      reply = state(request);
    } else if (type == "set_params") {
      reply = set_params(request);
    } else if (type == "close") {
      reply = close(request);
    } else {
      invalid("unknown message type '" + type + "'");
    }
  } catch (const NotFoundError& e) {
    reply = error_reply("not_found", e.what());
  } catch (const LimitError& e) {
    reply = error_reply("limit", e.what());
  } catch (const InstabilityError& e) {
    reply = error_reply("instability", e.what());
  } catch (const std::bad_alloc&) {
    reply = error_reply("limit", "out of memory");
  } catch (const json::exception& e) {
    reply = error_reply("invalid_input", e.what());
  } catch (const std::exception& e) {
    reply = error_reply("invalid_input", e.what());
  }
  reply["schema"] = kServiceSchema;
  if (request.is_object() && request.contains("request_id")) reply["request_id"] = request.at("request_id");
  return reply;
}

std::shared_ptr<Service::Session> Service::find(const json& request) {
  const json& id = field(request, "session");
  if (!id.is_string()) invalid("field 'session' must be a string");
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id.get<std::string>());
  if (it == sessions_.end()) throw NotFoundError("unknown session '" + id.get<std::string>() + "'");
  return it->second;
}

std::shared_ptr<const Service::BaseMesh> Service::base_mesh(const FenchelNielsen& fn) {
  const std::string key = fn.to_string();
  {
    std::lock_guard lock(mutex_);
    const auto it = bases_.find(key);
    if (it != bases_.end()) return it->second;
  }
  auto b = std::make_shared<BaseMesh>();
  try {
    std::tie(b->group, b->domain) = build_group(fn);
    b->mesh = build_genus2_mesh(b->group, b->domain);
  } catch (const NumericError& e) {
    throw DomainError("group construction failed for " + key + ": " + e.what());
  } catch (const ContractViolation& e) {
    throw DomainError("group construction failed for " + key + ": " + e.what());
  }
  std::lock_guard lock(mutex_);
  return bases_.emplace(key, std::move(b)).first->second;
}

json Service::create(const json& request) {
  const FenchelNielsen fn_domain = fn_field(request, "fn_domain");
  const FenchelNielsen fn_target = fn_field(request, "fn_target");
  const long level = integer_field(request, "level", 2);
  if (level < 0) invalid("level must be nonnegative");
  if (level > opts_.max_level)
    throw LimitError("level " + std::to_string(level) + " exceeds the configured maximum " + std::to_string(opts_.max_level));
  {
    std::lock_guard lock(mutex_);
    if (sessions_.size() >= opts_.max_sessions)
      throw LimitError("session limit of " + std::to_string(opts_.max_sessions) + " reached");
  }
  const auto base = base_mesh(fn_domain);
  DeckGroup target_deck;
  try {
    target_deck = build_fuchsian_group(fn_target).deck();
  } catch (const NumericError& e) {
    throw DomainError("group construction failed for " + fn_target.to_string() + ": " + e.what());
  }
  Triangulation mesh = base->mesh;
  for (long k = 0; k < level; ++k) mesh = midpoint_refine(mesh);
  auto b = std::make_shared<const BiweightedMesh>(make_biweighted(mesh));

  auto s = std::make_shared<Session>();
  s->fn_domain = fn_domain;
  s->fn_target = fn_target;
  s->target_deck = target_deck;
  s->flow = start_flow(vertex_position_map(b, target_deck), default_step_size(*b));
  s->tolerance = default_tension_tolerance(*b);
  sync_history(*s);
  {
    std::lock_guard lock(mutex_);
    if (sessions_.size() >= opts_.max_sessions)
      throw LimitError("session limit of " + std::to_string(opts_.max_sessions) + " reached");
    do {
      // splitmix64
      std::uint64_t z = (id_state_ += 0x9e3779b97f4a7c15ULL);
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      z ^= z >> 31;
      char buf[17];
      std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(z));
      s->id = buf;
    } while (sessions_.count(s->id));
    sessions_.emplace(s->id, s);
  }
  json reply = base_reply(*s, "create");
  reply["fn_domain"] = fn_domain.to_string();
  reply["fn_target"] = fn_target.to_string();
  reply["mesh"] = mesh_stats(mesh);
  return reply;
}

json Service::step(const json& request) {
  const auto s = find(request);
  const long count = integer_field(request, "count", 1);
  if (count < 0) invalid("count must be nonnegative");
  if (count > opts_.max_steps_per_message)
    throw LimitError("count exceeds the per-message maximum of " + std::to_string(opts_.max_steps_per_message));
  std::lock_guard lock(s->mutex);
  if (s->closed) throw NotFoundError("session '" + s->id + "' is closed");
  if (s->diverged)
    throw InstabilityError("the flow of session '" + s->id +
                           "' diverged; lower the step size with set_params before stepping again");
  const double e0 = s->flow->energy_history.back();
  const double t0 = s->flow->tension_norm_history.back();
  FlowState work = *s->flow;
  long taken = 0;
  int rising = 0;
  try {
    while (taken < count && !flow_converged(work, s->tolerance)) {
      const long increases = work.energy_increases;
      advance_flow(work, 1);
      ++taken;
      rising = work.energy_increases > increases ? rising + 1 : 0;
      if (rising >= opts_.instability_window)
        throw InstabilityError("energy increased for " + std::to_string(rising) + " consecutive steps at step size " +
                               format_real(work.step_size));
    }
  } catch (const InstabilityError& e) {
    s->diverged = true;
    ++s->revision;
    throw InstabilityError(std::string(e.what()) + "; the session keeps its previous state, lower the step size with set_params");
  }
  *s->flow = std::move(work);
  s->total_iterations += taken;
  ++s->revision;
  sync_history(*s);
  json reply = base_reply(*s, "step");
  reply["steps"] = taken;
  reply["energy_before"] = e0;
  reply["energy_delta"] = s->flow->energy_history.back() - e0;
  reply["tension_before"] = t0;
  reply["tension_delta"] = s->flow->tension_norm_history.back() - t0;
  return reply;
}

json Service::refine(const json& request) {
  const auto s = find(request);
  std::lock_guard lock(s->mutex);
  if (s->closed) throw NotFoundError("session '" + s->id + "' is closed");
  const DiscreteMap& current = s->flow->map;
  const int level = current.mesh().level() + 1;
  if (level > opts_.max_level)
    throw LimitError("level " + std::to_string(level) + " exceeds the configured maximum " + std::to_string(opts_.max_level));
  auto b = std::make_shared<const BiweightedMesh>(make_biweighted(midpoint_refine(current.mesh())));
  const bool reset = s->custom_step;
  FlowState next = start_flow(prolongate(current, b), default_step_size(*b));
  s->flow = std::move(next);
  s->recorded = 0;
  s->tolerance = default_tension_tolerance(*b);
  s->custom_step = false;
  s->diverged = false;
  ++s->revision;
  sync_history(*s);
  json reply = base_reply(*s, "refine");
  reply["mesh"] = mesh_stats(b->mesh);
  reply["step_size_reset"] = reset;
  return reply;
}

json Service::set_params(const json& request) {
  const auto s = find(request);
  std::optional<double> dt, tol;
  if (request.contains("dt")) {
    dt = real_field(request, "dt");
    if (!(*dt > 0) || !std::isfinite(*dt)) invalid("dt must be positive and finite");
  }
  if (request.contains("tolerance")) {
    tol = real_field(request, "tolerance");
    if (!(*tol >= 0) || !std::isfinite(*tol)) invalid("tolerance must be nonnegative and finite");
  }
  std::lock_guard lock(s->mutex);
  if (s->closed) throw NotFoundError("session '" + s->id + "' is closed");
  if (dt) {
    s->flow->step_size = *dt;
    s->custom_step = true;
    s->diverged = false;
  }
  if (tol) s->tolerance = *tol;
  ++s->revision;
  return base_reply(*s, "set_params");
}

json Service::close(const json& request) {
  const auto s = find(request);
  {
    std::lock_guard lock(mutex_);
    sessions_.erase(s->id);
  }
  std::lock_guard lock(s->mutex);
  s->closed = true;
  return {{"ok", true}, {"type", "close"}, {"session", s->id}, {"revision", s->revision}};
}

json Service::state(const json& request) {
  const auto s = find(request);
  const bool full = bool_field(request, "full", false);
  std::lock_guard lock(s->mutex);
  if (s->closed) throw NotFoundError("session '" + s->id + "' is closed");
  const DiscreteMap& f = s->flow->map;
  const Triangulation& mesh = f.mesh();
  const Geometry& tg = f.target();
  const Geometry& dg = mesh.geometry();
  const std::size_t n = mesh.num_vertices();

  json values = json::array();
  json domain_vertices = json::array();
  for (std::size_t x = 0; x < n; ++x) {
    values.push_back(disk(tg, f.values()[x]));
    domain_vertices.push_back(disk(dg, mesh.vertices()[x]));
  }
  json lifts = json::array();
  std::unordered_map<std::size_t, std::size_t> lifted;
  auto index = [&](int v, int element) {
    if (element == 0) return static_cast<std::size_t>(v);
    const std::size_t key = static_cast<std::size_t>(element) * n + static_cast<std::size_t>(v);
    const auto [it, inserted] = lifted.emplace(key, n + lifted.size());
    if (inserted) {
      values.push_back(disk(tg, f.apply_rho(element, f.value(v))));
      lifts.push_back({v, element});
    }
    return it->second;
  };

  json triangles = json::array();
  for (const MeshTriangle& t : mesh.triangles())
    triangles.push_back({index(t.v[0], t.deck[0]), index(t.v[1], t.deck[1]), index(t.v[2], t.deck[2])});
  std::size_t stride = 1;
  if (!full && mesh.level() > opts_.full_edges_level)
    for (int k = opts_.full_edges_level; k < mesh.level(); ++k) stride *= 4;
  json edges = json::array();
  json edge_weights = json::array();
  for (std::size_t e = 0; e < mesh.num_edges(); e += stride) {
    const MeshEdge& me = mesh.edges()[e];
    edges.push_back({index(me.u, 0), index(me.v, me.rel)});
    edge_weights.push_back(f.domain().edge_weights[e]);
  }
  json translates = json::array();
  for (std::size_t i = 0; i < mesh.num_elements(); ++i) {
    const Eigen::Matrix3d m = f.rho(static_cast<int>(i)).matrix_d();
    json row = json::array();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) row.push_back(m(r, c));
    translates.push_back(row);
  }

  json reply = base_reply(*s, "state");
  reply["fn_domain"] = s->fn_domain.to_string();
  reply["fn_target"] = s->fn_target.to_string();
  reply["vertex_count"] = n;
  reply["vertices"] = std::move(values);
  reply["lifts"] = std::move(lifts);
  reply["domain_vertices"] = std::move(domain_vertices);
  reply["edges"] = std::move(edges);
  reply["edge_weights"] = std::move(edge_weights);
  reply["edge_stride"] = stride;
  reply["edge_count"] = mesh.num_edges();
  reply["triangles"] = std::move(triangles);
  reply["translates"] = std::move(translates);
  reply["energy_density"] = energy_density(f);
  std::size_t hs = 1;
  reply["energy_history"] = sampled(s->energy_history, opts_.max_history_points, hs);
  reply["tension_history"] = sampled(s->tension_history, opts_.max_history_points, hs);
  reply["history_stride"] = hs;
  return reply;
}

// === Framing

std::string encode_frame(const std::string& payload) {
  if (payload.size() > 0xffffffffu) throw LimitError("frame too large");
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string out(4, '\0');
  out[0] = static_cast<char>((n >> 24) & 0xff);
  out[1] = static_cast<char>((n >> 16) & 0xff);
  out[2] = static_cast<char>((n >> 8) & 0xff);
  out[3] = static_cast<char>(n & 0xff);
  return out + payload;
}

namespace {

// Returns false on end of stream before any byte was read.
bool read_exact(int fd, char* buf, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, buf + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw NumericError("connection closed inside a frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      throw NumericError(std::string("recv: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

} // namespace

bool read_frame(int fd, std::string& payload, std::uint32_t max_bytes) {
  unsigned char head[4];
  if (!read_exact(fd, reinterpret_cast<char*>(head), 4)) return false;
  const std::uint32_t n = (std::uint32_t{head[0]} << 24) | (std::uint32_t{head[1]} << 16) |
                          (std::uint32_t{head[2]} << 8) | std::uint32_t{head[3]};
  if (n > max_bytes) throw LimitError("frame of " + std::to_string(n) + " bytes exceeds the limit");
  payload.assign(n, '\0');
  if (n > 0 && !read_exact(fd, payload.data(), n)) throw NumericError("connection closed inside a frame");
  return true;
}

void write_frame(int fd, const std::string& payload) {
  const std::string frame = encode_frame(payload);
  std::size_t sent = 0;
  while (sent < frame.size()) {
    const ssize_t w = ::send(fd, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw NumericError(std::string("send: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(w);
  }
}

// === TCP server

TcpServer::TcpServer(Service& service, std::string host, int port) : service_(service), host_(std::move(host)), port_(port) {}

TcpServer::~TcpServer() { stop(); }

void TcpServer::start() {
  if (running_) return;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(port_);
  if (::getaddrinfo(host_.c_str(), port.c_str(), &hints, &res) != 0 || !res)
    throw DomainError("serve: cannot resolve host '" + host_ + "'");
  listen_fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (listen_fd_ < 0) {
    ::freeaddrinfo(res);
    throw NumericError(std::string("socket: ") + std::strerror(errno));
  }
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  const int rc = ::bind(listen_fd_, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0 || ::listen(listen_fd_, 16) != 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw DomainError("serve: cannot listen on " + host_ + ":" + port + ": " + why);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void TcpServer::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(conn_mutex_);
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
    threads.swap(connections_);
  }
  for (std::thread& t : threads) t.join();
}

void TcpServer::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 100) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    std::lock_guard lock(conn_mutex_);
    if (!running_) {
      ::close(fd);
      break;
    }
    conn_fds_.push_back(fd);
    connections_.emplace_back([this, fd] { serve(fd); });
  }
}

void TcpServer::serve(int fd) {
  try {
    std::string req;
    while (running_) {
      try {
        if (!read_frame(fd, req)) break;
      } catch (const LimitError& e) {
        write_frame(fd, error_reply("limit", e.what()).dump());
        break;
      }
      write_frame(fd, service_.handle_text(req));
    }
  } catch (const std::exception&) {
    // Connection errors end this connection only.
  }
  std::lock_guard lock(conn_mutex_);
  conn_fds_.erase(std::remove(conn_fds_.begin(), conn_fds_.end(), fd), conn_fds_.end());
  ::close(fd);
}

// === Client

ServiceClient::ServiceClient(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
    throw DomainError("client: cannot resolve host '" + host + "'");
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const int rc = fd_ < 0 ? -1 : ::connect(fd_, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0) {
    if (fd_ >= 0) ::close(fd_);
    throw NumericError(std::string("client: connect failed: ") + std::strerror(errno));
  }
}

ServiceClient::~ServiceClient() {
  if (fd_ >= 0) ::close(fd_);
}

json ServiceClient::request(const json& message) {
  write_frame(fd_, message.dump());
  std::string reply;
  if (!read_frame(fd_, reply)) throw NumericError("client: connection closed");
  return json::parse(reply);
}

} // namespace dhm
