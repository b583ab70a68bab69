#ifndef NBGATE_KERNEL_HPP
#define NBGATE_KERNEL_HPP

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "nbgate/http/server.hpp"
#include "nbgate/http/websocket.hpp"

namespace nbgate {

class MessageNotJson : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingHeaderField : public std::runtime_error {
 public:
  explicit MissingHeaderField(std::string field)
      : std::runtime_error("missing header field: " + field), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct MessageHeader {
  std::string msg_id;
  std::string session;
  std::string username;
  std::string msg_type;
  std::string version;
  std::string date;

  bool empty() const { return msg_id.empty() && msg_type.empty(); }
  nlohmann::json to_json() const;
};

// Four-part Jupyter wire envelope: one JSON document per WebSocket text frame.
struct KernelMessage {
  MessageHeader header;
  MessageHeader parent_header;  // empty when the message has no parent
  nlohmann::json metadata = nlohmann::json::object();
  nlohmann::json content = nlohmann::json::object();

  std::string serialize() const;
};

struct ExecutionResult {
  std::string status;  // ok or error
  long long execution_count = 0;
  std::string stream_text;
  std::string error_name;
  std::string error_traceback;
};

std::string fresh_msg_id();

KernelMessage make_execute_request(const std::string& code, const std::string& session);

// Throws MessageNotJson or MissingHeaderField. Absent sections become empty.
KernelMessage parse_message(std::string_view raw);

bool correlate(const KernelMessage& reply, const KernelMessage& request);

// Collected shell/iopub exchange for one execute_request.
struct ExecuteExchange {
  KernelMessage request;
  std::vector<KernelMessage> replies;  // in arrival order
  ExecutionResult result;
  bool correlated = false;     // execute_reply parented to the request
  bool busy_idle_bracket = false;  // status busy first, status idle last
};

// Sends `code` over an established kernel-channel WebSocket and collects the
// reply sequence through status:idle.
std::optional<ExecuteExchange> run_execute(http::WsConnection& ws, const std::string& code,
                                           const std::string& session,
                                           std::string* error = nullptr);

// Test double for a Jupyter notebook/kernel server: minimal HTTP endpoints, a
// kernel-message WebSocket channel evaluating integer a+b, a frame-echo
// WebSocket endpoint, and an HTTP echo on any unrouted path.
class MockKernelServer {
 public:
  struct Options {
    std::string host = "127.0.0.1";
    uint16_t port = 0;
    long artificial_latency_ms = 0;  // applied to HTTP responses
  };

  explicit MockKernelServer(Options options);
  ~MockKernelServer();

  void start();
  void stop();
  uint16_t port() const;
  std::string authority() const;
  std::string base_url() const;

 private:
  http::Response handle(http::HttpConn& conn);
  void serve_kernel_channel(http::HttpConn& conn);
  void serve_ws_echo(http::HttpConn& conn);
  KernelMessage reply_for(const KernelMessage& request);

  Options options_;
  std::unique_ptr<http::HttpServer> server_;
  std::mutex mu_;
  std::map<std::string, long long> execution_counts_;  // per session
};

}  // namespace nbgate

#endif
