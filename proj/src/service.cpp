// Copyright 2026 The flowtrace Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "flowtrace/service.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include "flowtrace/error.hpp"
#include "flowtrace/version.hpp"

namespace flowtrace {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;
using Reply = std::function<void(Response)>;

std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> log = [] {
    auto l = spdlog::get("flowtrace");
    if (!l) l = spdlog::stderr_color_mt("flowtrace");
    if (const char* lvl = std::getenv("FLOWTRACE_LOG")) l->set_level(spdlog::level::from_str(lvl));
    return l;
  }();
  return log;
}

http::status status_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::not_found: return http::status::not_found;
    case ErrorCode::conflict:
    case ErrorCode::protocol: return http::status::conflict;
    case ErrorCode::io:
    case ErrorCode::missing_file: return http::status::internal_server_error;
    default: return http::status::bad_request;
  }
}

Json error_body(const std::string& code, const std::string& message) {
  return Json{{"error", Json{{"code", code}, {"message", message}}}};
}

Response make_response(http::status st, std::string body, const char* type, unsigned version,
                       bool keep_alive) {
  Response r{st, version};
  r.set(http::field::server, std::string("flowtrace/") + kVersion);
  r.set(http::field::content_type, type);
  r.keep_alive(keep_alive);
  r.body() = std::move(body);
  r.prepare_payload();
  return r;
}

const char* mime_type(const std::filesystem::path& p) {
  static const std::map<std::string, const char*> types = {
      {".html", "text/html"},       {".htm", "text/html"},        {".js", "text/javascript"},
      {".mjs", "text/javascript"},  {".css", "text/css"},         {".json", "application/json"},
      {".map", "application/json"}, {".svg", "image/svg+xml"},    {".png", "image/png"},
      {".ico", "image/x-icon"},     {".txt", "text/plain"},       {".wasm", "application/wasm"}};
  auto it = types.find(p.extension().string());
  return it == types.end() ? "application/octet-stream" : it->second;
}

std::string random_id() {
  std::random_device rd;
  std::ostringstream os;
  for (int i = 0; i < 4; ++i) {
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", static_cast<unsigned>(rd()));
    os << buf;
  }
  return os.str();
}

std::vector<std::string> split_path(std::string_view target) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < target.size()) {
    while (i < target.size() && target[i] == '/') ++i;
    std::size_t j = i;
    while (j < target.size() && target[j] != '/') ++j;
    if (j > i) out.emplace_back(target.substr(i, j - i));
    i = j;
  }
  return out;
}

double number_field(const Json& msg, const char* key) {
  if (!msg.contains(key) || !msg.at(key).is_number())
    fail(ErrorCode::validation, std::string("message field '") + key + "' must be a number");
  return msg.at(key).get<double>();
}

int response_field(const Json& msg, const char* key) {
  if (!msg.contains(key) || !msg.at(key).is_number())
    fail(ErrorCode::validation, std::string("probe answer '") + key + "' must be an integer 1..7");
  const double v = msg.at(key).get<double>();
  if (v != std::floor(v) || v < 1 || v > 7)
    fail(ErrorCode::validation, std::string("probe answer '") + key + "' must be an integer 1..7");
  return static_cast<int>(v);
}

std::string path_of(const Request& req) {
  std::string t(req.target().data(), req.target().size());
  return t.substr(0, t.find('?'));
}

class WsConn;

}  // namespace

struct Service::Impl {
  struct Slot {
    explicit Slot(LiveSession s) : live(std::move(s)) {}
    LiveSession live;
    std::vector<std::weak_ptr<WsConn>> clients;
    bool refit_running = false;
  };

  explicit Impl(ServiceOptions o);

  std::filesystem::path file_for(const std::string& id) const { return opts.data_dir / (id + ".json"); }
  Slot& find(const std::string& id);
  void persist(Slot& s);
  void flush_all();
  void resume();
  void do_accept();
  void shutdown();

  void handle(Request req, Reply reply);
  void handle_api(const Request& req, const std::vector<std::string>& parts, const Reply& reply);
  Response serve_static(const Request& req);
  void upgrade(beast::tcp_stream stream, Request req, const Reply& reply);

  void attach(const std::shared_ptr<WsConn>& c);
  void detach(const WsConn* c);
  void on_message(WsConn& from, const std::string& text);
  void broadcast(Slot& s, const std::vector<Json>& messages);
  void after_change(Slot& s);
  void maybe_refit(const std::string& id);

  ServiceOptions opts;
  net::io_context ioc{1};
  net::thread_pool pool;
  tcp::acceptor acceptor{ioc};
  net::signal_set signals{ioc};
  std::map<std::string, std::unique_ptr<Slot>> sessions;
  std::size_t resumed = 0;
  bool stopped = false;
};

namespace {

class HttpConn : public std::enable_shared_from_this<HttpConn> {
 public:
  HttpConn(tcp::socket s, Service::Impl& svc) : stream_(std::move(s)), svc_(svc) {}
  void start() { read(); }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buffer_, req_,
                     beast::bind_front_handler(&HttpConn::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec == http::error::end_of_stream) return close();
    if (ec) return;
    auto self = shared_from_this();
    Reply reply = [self](Response r) { self->send(std::move(r)); };
    if (websocket::is_upgrade(req_)) {
      svc_.upgrade(std::move(stream_), std::move(req_), reply);
      return;
    }
    svc_.handle(std::move(req_), reply);
  }

  void send(Response r) {
    auto res = std::make_shared<Response>(std::move(r));
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (!res->keep_alive()) return self->close();
      self->read();
    });
  }

  void close() {
    beast::error_code ec;
    stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  Request req_;
  Service::Impl& svc_;
};

class WsConn : public std::enable_shared_from_this<WsConn> {
 public:
  WsConn(beast::tcp_stream stream, Service::Impl& svc, std::string id)
      : ws_(std::move(stream)), svc_(svc), id_(std::move(id)) {}

  const std::string& id() const { return id_; }

  void accept(Request req) {
    req_ = std::move(req);
    beast::get_lowest_layer(ws_).expires_never();
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.text(true);
    ws_.async_accept(req_, beast::bind_front_handler(&WsConn::on_accept, shared_from_this()));
  }

  void send(std::string text) {
    queue_.push_back(std::move(text));
    if (queue_.size() == 1) write();
  }

  void close() {
    ws_.async_close(websocket::close_code::going_away, [self = shared_from_this()](beast::error_code) {});
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    svc_.attach(shared_from_this());
    read();
  }

  void read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsConn::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      svc_.detach(this);
      return;
    }
    std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    svc_.on_message(*this, text);
    read();
  }

  void write() {
    ws_.async_write(net::buffer(queue_.front()),
                    beast::bind_front_handler(&WsConn::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      svc_.detach(this);
      return;
    }
    queue_.pop_front();
    if (!queue_.empty()) write();
  }

  websocket::stream<beast::tcp_stream> ws_;
  Service::Impl& svc_;
  std::string id_;
  Request req_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
};

}  // namespace

Service::Impl::Impl(ServiceOptions o)
    : opts(std::move(o)), pool(static_cast<std::size_t>(std::max(1, opts.analysis_threads))) {
  opts.session_defaults.validate();
  if (opts.static_dir && !std::filesystem::is_directory(*opts.static_dir))
    fail(ErrorCode::invalid_input, "static directory '" + opts.static_dir->string() + "' does not exist");
  std::error_code fs_ec;
  std::filesystem::create_directories(opts.data_dir, fs_ec);
  if (fs_ec) fail(ErrorCode::io, "cannot create data directory '" + opts.data_dir.string() + "': " + fs_ec.message());
  resume();

  beast::error_code ec;
  const auto address = net::ip::make_address(opts.host, ec);
  if (ec) fail(ErrorCode::invalid_input, "bad listen address '" + opts.host + "'");
  const tcp::endpoint ep{address, opts.port};
  acceptor.open(ep.protocol(), ec);
  if (!ec) acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) acceptor.bind(ep, ec);
  if (!ec) acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec)
    fail(ErrorCode::io, "cannot listen on " + opts.host + ":" + std::to_string(opts.port) + ": " + ec.message());
}

void Service::Impl::resume() {
  for (const auto& entry : std::filesystem::directory_iterator(opts.data_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    const std::string id = entry.path().stem().string();
    try {
      const Json doc = read_json(entry.path());
      if (!doc.contains("live_state")) continue;
      SessionData data = session_from_json(doc, entry.path());
      sessions.emplace(id, std::make_unique<Slot>(LiveSession::restore(id, data, doc.at("live_state"))));
      ++resumed;
      logger()->info("resumed session {} ({} trials, phase {})", id, data.trials.size(),
                     sessions.at(id)->live.phase_name());
    } catch (const Error& e) {
      logger()->warn("skipping {}: {}", entry.path().string(), e.what());
    }
  }
}

Service::Impl::Slot& Service::Impl::find(const std::string& id) {
  auto it = sessions.find(id);
  if (it == sessions.end()) fail(ErrorCode::not_found, "unknown session '" + id + "'");
  return *it->second;
}

void Service::Impl::persist(Slot& s) {
  SessionWriteOptions w;
  w.mode = TraceMode::referenced;
  w.keep_existing_traces = true;
  write_session(s.live.data(), file_for(s.live.id()), w, Json{{"live_state", s.live.live_state()}});
}

void Service::Impl::flush_all() {
  std::size_t n = 0;
  for (auto& [id, slot] : sessions) {
    try {
      persist(*slot);
      ++n;
    } catch (const Error& e) {
      logger()->error("flush of session {} failed: {}", id, e.what());
    }
  }
  logger()->info("flushed {} sessions", n);
}

void Service::Impl::do_accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (!ec) {
      beast::error_code opt_ec;
      socket.set_option(tcp::no_delay(true), opt_ec);
      std::make_shared<HttpConn>(std::move(socket), *this)->start();
    }
    if (acceptor.is_open()) do_accept();
  });
}

void Service::Impl::shutdown() {
  if (stopped) return;
  stopped = true;
  beast::error_code ec;
  acceptor.close(ec);
  signals.cancel(ec);
  flush_all();
  for (auto& [id, slot] : sessions)
    for (auto& w : slot->clients)
      if (auto c = w.lock()) c->close();
  ioc.stop();
}

void Service::Impl::handle(Request req, Reply reply) {
  const unsigned version = req.version();
  const bool keep = req.keep_alive();
  try {
    const std::string target = path_of(req);
    const auto parts = split_path(target);
    if (target == "/healthz") {
      if (req.method() != http::verb::get && req.method() != http::verb::head)
        return reply(make_response(http::status::method_not_allowed,
                                   dump_json(error_body("method", "use GET")), "application/json",
                                   version, keep));
      Json body{{"status", "ok"}, {"version", kVersion}, {"sessions", sessions.size()}};
      return reply(make_response(http::status::ok, dump_json(body), "application/json", version, keep));
    }
    if (parts.size() >= 2 && parts[0] == "api" && parts[1] == "session")
      return handle_api(req, parts, reply);
    if (req.method() == http::verb::get || req.method() == http::verb::head)
      return reply(serve_static(req));
    fail(ErrorCode::not_found, "no route for " + target);
  } catch (const Error& e) {
    reply(make_response(status_for(e.code()), dump_json(error_body(error_code_name(e.code()), e.what())),
                        "application/json", version, keep));
  } catch (const std::exception& e) {
    logger()->error("request failed: {}", e.what());
    reply(make_response(http::status::internal_server_error, dump_json(error_body("internal", e.what())),
                        "application/json", version, keep));
  }
}

void Service::Impl::handle_api(const Request& req, const std::vector<std::string>& parts,
                               const Reply& reply) {
  const unsigned version = req.version();
  const bool keep = req.keep_alive();
  auto ok = [&](http::status st, const Json& body) {
    reply(make_response(st, dump_json(body), "application/json", version, keep));
  };
  const auto method = req.method();

  if (parts.size() == 2) {
    if (method != http::verb::post) fail(ErrorCode::not_found, "use POST /api/session");
    Json overrides = Json::object();
    if (!req.body().empty()) {
      try {
        overrides = Json::parse(req.body());
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::parse, std::string("request body is not JSON: ") + e.what());
      }
    }
    LiveOptions lo = live_options_from_json(overrides, opts.session_defaults);
    if (!overrides.contains("seed")) {
      std::random_device rd;
      lo.seed = (static_cast<std::uint64_t>(rd()) << 31) ^ rd();
    }
    std::string id = random_id();
    while (sessions.count(id)) id = random_id();
    auto& slot = *sessions.emplace(id, std::make_unique<Slot>(LiveSession(id, lo))).first->second;
    persist(slot);
    slot.live.take_dirty();
    logger()->info("created session {}", id);
    Json body{{"id", id}, {"phase", slot.live.phase_name()}, {"band_width", nullptr},
              {"config", live_options_to_json(lo)}};
    return ok(http::status::created, body);
  }

  const std::string& id = parts[2];
  Slot& slot = find(id);
  if (parts.size() == 3 && method == http::verb::get) return ok(http::status::ok, slot.live.summary());
  if (parts.size() == 4 && parts[3] == "finalize" && method == http::verb::post) {
    auto msgs = slot.live.finalize();
    broadcast(slot, msgs);
    persist(slot);
    slot.live.take_dirty();
    logger()->info("finalized session {} after {} trials", id, slot.live.data().trials.size());
    return ok(http::status::ok, slot.live.summary());
  }
  if (parts.size() == 4 && parts[3] == "report" && method == http::verb::get) {
    if (!slot.live.done())
      fail(ErrorCode::conflict, "session '" + id + "' is unfinished; finalize it first");
    persist(slot);
    const auto path = file_for(id);
    net::post(pool, [this, path, reply, version, keep] {
      Response r;
      try {
        const SessionData d = read_session(path);
        const Json report = run_pipeline({&d, 1}, opts.analysis);
        r = make_response(http::status::ok, dump_json(report), "application/json", version, keep);
      } catch (const Error& e) {
        r = make_response(status_for(e.code()), dump_json(error_body(error_code_name(e.code()), e.what())),
                          "application/json", version, keep);
      }
      net::post(ioc, [reply, r = std::move(r)]() mutable { reply(std::move(r)); });
    });
    return;
  }
  fail(ErrorCode::not_found, "no route for " + path_of(req));
}

Response Service::Impl::serve_static(const Request& req) {
  if (!opts.static_dir) fail(ErrorCode::not_found, "no static directory configured");
  const std::string target = path_of(req);
  auto parts = split_path(target);
  std::filesystem::path p = *opts.static_dir;
  for (const auto& s : parts) {
    if (s == ".." || s == ".") fail(ErrorCode::not_found, "bad path");
    p /= s;
  }
  if (std::filesystem::is_directory(p)) p /= "index.html";
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorCode::not_found, "no such file: " + target);
  std::ostringstream ss;
  ss << in.rdbuf();
  Response r = make_response(http::status::ok, ss.str(), mime_type(p), req.version(), req.keep_alive());
  if (req.method() == http::verb::head) r.body().clear();
  return r;
}

void Service::Impl::upgrade(beast::tcp_stream stream, Request req, const Reply& reply) {
  const std::string target = path_of(req);
  const auto parts = split_path(target);
  if (parts.size() == 4 && parts[0] == "api" && parts[1] == "session" && parts[3] == "stream" &&
      sessions.count(parts[2])) {
    std::make_shared<WsConn>(std::move(stream), *this, parts[2])->accept(std::move(req));
    return;
  }
  reply(make_response(http::status::not_found,
                      dump_json(error_body("not_found", "no stream at " + target)),
                      "application/json", req.version(), false));
}

void Service::Impl::attach(const std::shared_ptr<WsConn>& c) {
  auto it = sessions.find(c->id());
  if (it == sessions.end()) return;
  Slot& s = *it->second;
  s.clients.push_back(c);
  Json hello = s.live.summary();
  hello["type"] = "session";
  c->send(dump_json(hello));
}

void Service::Impl::detach(const WsConn* c) {
  auto it = sessions.find(c->id());
  if (it == sessions.end()) return;
  auto& v = it->second->clients;
  std::erase_if(v, [c](const std::weak_ptr<WsConn>& w) {
    auto p = w.lock();
    return !p || p.get() == c;
  });
}

void Service::Impl::broadcast(Slot& s, const std::vector<Json>& messages) {
  if (messages.empty()) return;
  std::erase_if(s.clients, [](const std::weak_ptr<WsConn>& w) { return w.expired(); });
  for (const auto& m : messages) {
    const std::string text = m.dump();
    for (auto& w : s.clients)
      if (auto c = w.lock()) c->send(text);
  }
}

void Service::Impl::after_change(Slot& s) {
  if (s.live.take_dirty()) {
    try {
      persist(s);
    } catch (const Error& e) {
      logger()->error("persisting session {} failed: {}", s.live.id(), e.what());
    }
  }
  maybe_refit(s.live.id());
}

void Service::Impl::on_message(WsConn& from, const std::string& text) {
  auto it = sessions.find(from.id());
  if (it == sessions.end()) return;
  Slot& s = *it->second;
  try {
    Json msg;
    try {
      msg = Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::parse, std::string("message is not JSON: ") + e.what());
    }
    if (!msg.is_object() || !msg.contains("type") || !msg.at("type").is_string())
      fail(ErrorCode::protocol, "message needs a string 'type'");
    const std::string type = msg.at("type").get<std::string>();
    std::vector<Json> out;
    if (type == "sample") {
      out = s.live.ingest_sample(number_field(msg, "t"), number_field(msg, "force"));
    } else if (type == "probe_response") {
      out = s.live.answer_probe(
          {response_field(msg, "r1"), response_field(msg, "r2"), response_field(msg, "r3")});
    } else if (type == "ready") {
      out = s.live.ready();
    } else if (type == "ping") {
      // Replies after everything sent before it has been processed.
      Json pong{{"type", "pong"}};
      if (msg.contains("id")) pong["id"] = msg.at("id");
      from.send(pong.dump());
    } else {
      fail(ErrorCode::protocol, "unknown message type '" + type + "'");
    }
    broadcast(s, out);
    for (const auto& m : out)
      if (m.at("type") == "phase_change")
        logger()->info("session {} entered {}", s.live.id(), m.at("phase").get<std::string>());
  } catch (const Error& e) {
    Json err{{"type", "error"}, {"code", error_code_name(e.code())}, {"message", e.what()}};
    from.send(err.dump());
  }
  after_change(s);
}

void Service::Impl::maybe_refit(const std::string& id) {
  Slot& s = *sessions.at(id);
  if (s.refit_running) return;
  auto job = s.live.take_refit_job();
  if (!job) return;
  s.refit_running = true;
  net::post(pool, [this, id, job = std::move(*job)] {
    std::optional<DecoderModel> model;
    std::string error;
    try {
      model = LiveSession::run_refit(job);
    } catch (const Error& e) {
      error = e.what();
    }
    net::post(ioc, [this, id, gen = job.generation, model = std::move(model), error] {
      Slot& slot = *sessions.at(id);
      slot.refit_running = false;
      if (model) {
        broadcast(slot, slot.live.install_model(gen, *model));
      } else {
        logger()->warn("session {}: decoder refit failed: {}", id, error);
      }
      maybe_refit(id);
    });
  });
}

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() {
  impl_->pool.stop();
  impl_->pool.join();
}

unsigned short Service::port() const { return impl_->acceptor.local_endpoint().port(); }

std::size_t Service::resumed_sessions() const { return impl_->resumed; }

void Service::run() {
  Impl& s = *impl_;
  if (s.opts.handle_signals) {
    s.signals.add(SIGINT);
    s.signals.add(SIGTERM);
    s.signals.async_wait([&s](beast::error_code ec, int sig) {
      if (ec) return;
      logger()->info("signal {}; shutting down", sig);
      s.shutdown();
    });
  }
  logger()->info("listening on {}:{}", s.opts.host, port());
  s.do_accept();
  s.ioc.run();
}

void Service::stop() {
  net::post(impl_->ioc, [this] { impl_->shutdown(); });
}

}  // namespace flowtrace
