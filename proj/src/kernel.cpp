#include "nbgate/kernel.hpp"

#include <chrono>
#include <thread>

#include "nbgate/crypto.hpp"
#include "nbgate/util.hpp"

namespace nbgate {

using nlohmann::json;

namespace {

constexpr char kProtocolVersion[] = "5.3";

MessageHeader header_from_json(const json& section, bool require, const std::string& which) {
  MessageHeader h;
  if (!section.is_object() || section.empty()) {
    if (require) throw MissingHeaderField("msg_id");
    return h;
  }
  auto read = [&](const char* key) -> std::string {
    auto it = section.find(key);
    if (it == section.end() || !it->is_string()) return "";
    return it->get<std::string>();
  };
  h.msg_id = read("msg_id");
  h.session = read("session");
  h.username = read("username");
  h.msg_type = read("msg_type");
  h.version = read("version");
  h.date = read("date");
  if (require) {
    if (h.msg_id.empty()) throw MissingHeaderField("msg_id");
    if (h.msg_type.empty()) throw MissingHeaderField("msg_type");
  }
  (void)which;
  return h;
}

}  // namespace

json MessageHeader::to_json() const {
  if (empty()) return json::object();
  return json{{"msg_id", msg_id},     {"session", session}, {"username", username},
              {"msg_type", msg_type}, {"version", version}, {"date", date}};
}

std::string KernelMessage::serialize() const {
  json out;
  out["header"] = header.to_json();
  out["parent_header"] = parent_header.to_json();
  out["metadata"] = metadata;
  out["content"] = content;
  return out.dump();
}

std::string fresh_msg_id() {
  // UUID4-shaped, random.
  std::string b = crypto::random_bytes(16);
  b[6] = static_cast<char>((b[6] & 0x0f) | 0x40);
  b[8] = static_cast<char>((b[8] & 0x3f) | 0x80);
  std::string hex = hex_encode(b);
  return hex.substr(0, 8) + "-" + hex.substr(8, 4) + "-" + hex.substr(12, 4) + "-" +
         hex.substr(16, 4) + "-" + hex.substr(20, 12);
}

KernelMessage make_execute_request(const std::string& code, const std::string& session) {
  KernelMessage msg;
  msg.header.msg_id = fresh_msg_id();
  msg.header.session = session;
  msg.header.username = "nbgate";
  msg.header.msg_type = "execute_request";
  msg.header.version = kProtocolVersion;
  msg.header.date = iso8601_now();
  msg.content = json{{"code", code},          {"silent", false},       {"store_history", true},
                     {"allow_stdin", false},  {"stop_on_error", true}};
  return msg;
}

KernelMessage parse_message(std::string_view raw) {
  json doc;
  try {
    doc = json::parse(raw);
  } catch (const json::parse_error& e) {
    throw MessageNotJson(std::string("message is not JSON: ") + e.what());
  }
  if (!doc.is_object()) throw MessageNotJson("message must be a JSON object");

  KernelMessage msg;
  msg.header = header_from_json(doc.value("header", json::object()), true, "header");
  msg.parent_header =
      header_from_json(doc.value("parent_header", json::object()), false, "parent_header");
  if (auto it = doc.find("metadata"); it != doc.end() && it->is_object()) msg.metadata = *it;
  if (auto it = doc.find("content"); it != doc.end() && it->is_object()) msg.content = *it;
  return msg;
}

bool correlate(const KernelMessage& reply, const KernelMessage& request) {
  return !reply.parent_header.msg_id.empty() &&
         reply.parent_header.msg_id == request.header.msg_id;
}

std::optional<ExecuteExchange> run_execute(http::WsConnection& ws, const std::string& code,
                                           const std::string& session, std::string* error) {
  ExecuteExchange exchange;
  exchange.request = make_execute_request(code, session);
  if (!ws.send_text(exchange.request.serialize())) {
    if (error) *error = "send failed";
    return std::nullopt;
  }

  bool saw_busy_first = false;
  bool saw_reply = false;
  while (true) {
    http::WsFrame frame;
    auto r = ws.read_message(frame);
    if (r != http::WsConnection::ReadResult::Frame) {
      if (error) *error = "channel closed before status:idle";
      return std::nullopt;
    }
    KernelMessage msg;
    try {
      msg = parse_message(frame.payload);
    } catch (const std::exception& e) {
      if (error) *error = e.what();
      return std::nullopt;
    }
    bool first = exchange.replies.empty();
    exchange.replies.push_back(msg);

    const std::string& type = msg.header.msg_type;
    if (type == "status") {
      std::string state = msg.content.value("execution_state", "");
      if (first && state == "busy") saw_busy_first = true;
      if (state == "idle") {
        exchange.busy_idle_bracket = saw_busy_first;
        break;
      }
    } else if (type == "stream") {
      exchange.result.stream_text += msg.content.value("text", "");
    } else if (type == "execute_reply") {
      saw_reply = true;
      exchange.correlated = correlate(msg, exchange.request);
      exchange.result.status = msg.content.value("status", "");
      exchange.result.execution_count = msg.content.value("execution_count", 0ll);
      exchange.result.error_name = msg.content.value("ename", "");
      exchange.result.error_traceback = msg.content.value("evalue", "");
    }
  }
  if (!saw_reply) {
    if (error) *error = "no execute_reply received";
    return std::nullopt;
  }
  return exchange;
}

MockKernelServer::MockKernelServer(Options options) : options_(options) {
  http::HttpServer::Options server_options;
  server_options.host = options_.host;
  server_options.port = options_.port;
  server_ = std::make_unique<http::HttpServer>(server_options,
                                               [this](http::HttpConn& c) { return handle(c); });
}

MockKernelServer::~MockKernelServer() { stop(); }

void MockKernelServer::start() { server_->start(); }

void MockKernelServer::stop() {
  if (server_) server_->stop();
}

uint16_t MockKernelServer::port() const { return server_->port(); }

std::string MockKernelServer::authority() const {
  return options_.host + ":" + std::to_string(port());
}

std::string MockKernelServer::base_url() const { return "http://" + authority(); }

KernelMessage MockKernelServer::reply_for(const KernelMessage& request) {
  KernelMessage reply;
  reply.header.msg_id = fresh_msg_id();
  reply.header.session = request.header.session;
  reply.header.username = "kernel";
  reply.header.msg_type = "execute_reply";
  reply.header.version = kProtocolVersion;
  reply.header.date = iso8601_now();
  reply.parent_header = request.header;
  return reply;
}

void MockKernelServer::serve_kernel_channel(http::HttpConn& conn) {
  http::Response upgrade = make_ws_upgrade_response(conn.request);
  auto [stream, leftover] = conn.hijack();
  if (!stream->write_all(serialize_response_head(upgrade))) return;
  http::WsConnection ws(std::move(stream), http::WsConnection::Role::Server,
                        std::move(leftover));
  ws.set_read_timeout_ms(0);  // kernel channels idle indefinitely

  while (true) {
    http::WsFrame frame;
    auto r = ws.read_message(frame);
    if (r != http::WsConnection::ReadResult::Frame) break;

    KernelMessage request;
    try {
      request = parse_message(frame.payload);
    } catch (const std::exception& e) {
      KernelMessage err;
      err.header.msg_id = fresh_msg_id();
      err.header.msg_type = "error";
      err.header.username = "kernel";
      err.header.version = kProtocolVersion;
      err.header.date = iso8601_now();
      err.content = json{{"ename", "ParseError"}, {"evalue", e.what()}};
      if (!ws.send_text(err.serialize())) return;
      continue;  // connection stays open
    }

    if (request.header.msg_type != "execute_request") {
      KernelMessage err = reply_for(request);
      err.header.msg_type = "error";
      err.content = json{{"ename", "UnsupportedMessage"},
                         {"evalue", "only execute_request is supported"}};
      if (!ws.send_text(err.serialize())) return;
      continue;
    }

    std::string code = request.content.value("code", "");
    std::optional<long long> value;
    {
      size_t plus = code.find('+');
      if (plus != std::string::npos) {
        auto lhs = parse_int(trim(code.substr(0, plus)));
        auto rhs = parse_int(trim(code.substr(plus + 1)));
        if (lhs && rhs) value = *lhs + *rhs;
      }
    }

    long long count = 0;
    {
      std::lock_guard<std::mutex> lock(mu_);
      count = ++execution_counts_[request.header.session];
    }

    KernelMessage busy = reply_for(request);
    busy.header.msg_type = "status";
    busy.content = json{{"execution_state", "busy"}};
    if (!ws.send_text(busy.serialize())) return;

    KernelMessage reply = reply_for(request);
    if (value) {
      KernelMessage stream_msg = reply_for(request);
      stream_msg.header.msg_type = "stream";
      stream_msg.content = json{{"name", "stdout"}, {"text", std::to_string(*value)}};
      if (!ws.send_text(stream_msg.serialize())) return;
      reply.content = json{{"status", "ok"}, {"execution_count", count},
                           {"payload", json::array()}, {"user_expressions", json::object()}};
    } else {
      reply.content = json{{"status", "error"},
                           {"execution_count", count},
                           {"ename", "EvalError"},
                           {"evalue", "only integer a+b expressions are supported"},
                           {"traceback", json::array()}};
    }
    if (!ws.send_text(reply.serialize())) return;

    KernelMessage idle = reply_for(request);
    idle.header.msg_type = "status";
    idle.content = json{{"execution_state", "idle"}};
    if (!ws.send_text(idle.serialize())) return;
  }
}

void MockKernelServer::serve_ws_echo(http::HttpConn& conn) {
  http::Response upgrade = make_ws_upgrade_response(conn.request);
  auto [stream, leftover] = conn.hijack();
  if (!stream->write_all(serialize_response_head(upgrade))) return;
  http::WsConnection ws(std::move(stream), http::WsConnection::Role::Server,
                        std::move(leftover));
  ws.set_read_timeout_ms(0);
  while (true) {
    http::WsFrame frame;
    auto r = ws.read_frame(frame);
    if (r != http::WsConnection::ReadResult::Frame) break;
    if (frame.opcode == http::WsOpcode::Ping) {
      frame.opcode = http::WsOpcode::Pong;
    }
    if (!ws.send_frame(frame)) break;
  }
}

http::Response MockKernelServer::handle(http::HttpConn& conn) {
  const std::string path = conn.request.path();

  if (http::is_websocket_upgrade(conn.request)) {
    if (path == "/ws-echo") {
      serve_ws_echo(conn);
    } else if (path.rfind("/api/kernels/", 0) == 0 &&
               path.size() > std::string("/channels").size() &&
               path.compare(path.size() - 9, 9, "/channels") == 0) {
      serve_kernel_channel(conn);
    } else {
      return http::Response::make(404, "no such websocket endpoint\n");
    }
    return {};
  }

  if (options_.artificial_latency_ms > 0) {
    std::this_thread::sleep_for(std::chrono::milliseconds(options_.artificial_latency_ms));
  }

  if (path == "/") {
    return http::Response::make(200,
                                "<!DOCTYPE html>\n<html><head><title>Mock Jupyter</title></head>"
                                "<body><h1>Mock Jupyter Server</h1></body></html>\n",
                                "text/html; charset=utf-8");
  }
  if (path == "/api/kernels") {
    json kernels = json::array();
    kernels.push_back(json{{"id", "mock-kernel-0"},
                           {"name", "python3"},
                           {"execution_state", "idle"},
                           {"connections", 1}});
    return http::Response::make(200, kernels.dump(), "application/json");
  }
  if (path == "/redirect") {
    http::Response res = http::Response::make(302, "");
    res.headers.set("Location", base_url() + "/tree");
    return res;
  }

  // Echo fallback: any other path reflects the request; /status/NNN sets the
  // response status so proxies can be checked for status transparency.
  int status = 200;
  if (path.rfind("/status/", 0) == 0) {
    std::string segment = path.substr(8);
    segment = segment.substr(0, segment.find('/'));
    if (auto n = parse_int(segment); n && *n >= 200 && *n <= 599) {
      status = static_cast<int>(*n);
    }
  }
  std::string body;
  auto r = conn.read_body(body);
  if (r == http::IoResult::TooLarge) return http::Response::make(413, "body too large\n");
  if (r != http::IoResult::Ok) return http::Response::make(400, "unreadable body\n");
  if (status == 204 || status == 304) body.clear();  // bodyless statuses
  http::Response res = http::Response::make(status, std::move(body),
                                            conn.request.headers.get("Content-Type",
                                                                     "application/octet-stream"));
  // Hop-by-hop response header: a proxy in front must strip it.
  res.headers.set("Keep-Alive", "timeout=60");
  res.headers.set("X-Echo-Method", conn.request.method);
  res.headers.set("X-Echo-Path", conn.request.target);
  if (const std::string* v = conn.request.headers.find("X-Echo-Back")) {
    res.headers.set("X-Echo-Back", *v);
  }
  // Surfaces what the proxy actually forwarded.
  res.headers.set("X-Echo-Host", conn.request.headers.get("Host"));
  if (const std::string* xff = conn.request.headers.find("X-Forwarded-For")) {
    res.headers.set("X-Echo-Forwarded-For", *xff);
  }
  if (const std::string* proto = conn.request.headers.find("X-Forwarded-Proto")) {
    res.headers.set("X-Echo-Forwarded-Proto", *proto);
  }
  for (const char* hop : {"Connection", "Keep-Alive", "Upgrade", "Transfer-Encoding"}) {
    if (const std::string* v = conn.request.headers.find(hop)) {
      res.headers.set(std::string("X-Echo-") + hop, *v);
    }
  }
  return res;
}

}  // namespace nbgate
