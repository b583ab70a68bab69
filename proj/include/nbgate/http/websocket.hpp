#ifndef NBGATE_HTTP_WEBSOCKET_HPP
#define NBGATE_HTTP_WEBSOCKET_HPP

#include <memory>
#include <optional>
#include <string>

#include "nbgate/http/message.hpp"
#include "nbgate/http/stream.hpp"

namespace nbgate::http {

enum class WsOpcode : uint8_t {
  Continuation = 0x0,
  Text = 0x1,
  Binary = 0x2,
  Close = 0x8,
  Ping = 0x9,
  Pong = 0xA,
};

struct WsFrame {
  bool fin = true;
  WsOpcode opcode = WsOpcode::Text;
  std::string payload;
};

std::string ws_accept_key(std::string_view client_key);
bool is_websocket_upgrade(const Request& req);

// RFC 6455 frame pump over an established connection. Client role masks
// outbound frames, server role does not.
class WsConnection {
 public:
  enum class Role { Client, Server };
  enum class ReadResult { Frame, Closed, Timeout, Error };

  WsConnection(std::unique_ptr<Stream> stream, Role role, std::string initial_buffered = "");

  // Raw frame read; control frames are returned to the caller (relay use).
  ReadResult read_frame(WsFrame& out);

  // Coalesces fragments into one message and answers pings internally.
  ReadResult read_message(WsFrame& out);

  bool send_frame(const WsFrame& frame);
  bool send_text(std::string_view text);
  bool send_close(uint16_t code, std::string_view reason = "");

  // Close code received from the peer (1005 when none arrived).
  uint16_t peer_close_code() const { return peer_close_code_; }
  void set_read_timeout_ms(long ms) { stream_->set_read_timeout_ms(ms); }
  void shutdown() { stream_->shutdown_both(); }
  Stream& stream() { return *stream_; }

 private:
  bool fill(size_t need);
  bool close_sent_ = false;
  std::unique_ptr<Stream> stream_;
  Role role_;
  std::string buf_;
  size_t pos_ = 0;
  uint16_t peer_close_code_ = 1005;
  bool timed_out_ = false;

  static constexpr size_t kMaxPayload = 64ull * 1024 * 1024;
};

// Server side: 101 response completing the upgrade for `req`.
Response make_ws_upgrade_response(const Request& req);

// Client side: sends the upgrade request on an open stream and validates the
// 101 handshake. Extra headers (e.g. Cookie) ride along. Returns nullopt and
// fills `error` on failure; on success the stream is consumed.
std::optional<WsConnection> ws_client_upgrade(std::unique_ptr<Stream> stream,
                                              const std::string& host_header,
                                              const std::string& target, HeaderMap extra_headers,
                                              std::string* error = nullptr);

}  // namespace nbgate::http

#endif
