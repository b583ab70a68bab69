#include "nbgate/http/websocket.hpp"

#include <cstring>

#include "nbgate/crypto.hpp"
#include "nbgate/http/http1.hpp"
#include "nbgate/util.hpp"

namespace nbgate::http {

namespace {
constexpr char kWsGuid[] = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
}

std::string ws_accept_key(std::string_view client_key) {
  return base64_encode(crypto::sha1(std::string(client_key) + kWsGuid));
}

bool is_websocket_upgrade(const Request& req) {
  std::string upgrade = to_lower(req.headers.get("Upgrade"));
  std::string conn = to_lower(req.headers.get("Connection"));
  return upgrade == "websocket" && conn.find("upgrade") != std::string::npos &&
         req.headers.contains("Sec-WebSocket-Key");
}

Response make_ws_upgrade_response(const Request& req) {
  Response res;
  res.status = 101;
  res.reason = "Switching Protocols";
  res.headers.set("Upgrade", "websocket");
  res.headers.set("Connection", "Upgrade");
  res.headers.set("Sec-WebSocket-Accept", ws_accept_key(req.headers.get("Sec-WebSocket-Key")));
  return res;
}

WsConnection::WsConnection(std::unique_ptr<Stream> stream, Role role, std::string initial_buffered)
    : stream_(std::move(stream)), role_(role), buf_(std::move(initial_buffered)) {}

bool WsConnection::fill(size_t need) {
  timed_out_ = false;
  while (buf_.size() - pos_ < need) {
    if (pos_ > 0 && pos_ == buf_.size()) {
      buf_.clear();
      pos_ = 0;
    }
    char tmp[16 * 1024];
    int r = stream_->read_some(tmp, sizeof(tmp));
    if (r <= 0) {
      timed_out_ = stream_->timed_out();
      return false;
    }
    buf_.append(tmp, static_cast<size_t>(r));
  }
  return true;
}

WsConnection::ReadResult WsConnection::read_frame(WsFrame& out) {
  if (!fill(2)) return timed_out_ ? ReadResult::Timeout : ReadResult::Closed;
  uint8_t b0 = static_cast<uint8_t>(buf_[pos_]);
  uint8_t b1 = static_cast<uint8_t>(buf_[pos_ + 1]);
  out.fin = (b0 & 0x80) != 0;
  out.opcode = static_cast<WsOpcode>(b0 & 0x0f);
  bool masked = (b1 & 0x80) != 0;
  uint64_t len = b1 & 0x7f;
  size_t header = 2;
  if (len == 126) {
    if (!fill(4)) return timed_out_ ? ReadResult::Timeout : ReadResult::Closed;
    len = (static_cast<uint8_t>(buf_[pos_ + 2]) << 8) | static_cast<uint8_t>(buf_[pos_ + 3]);
    header = 4;
  } else if (len == 127) {
    if (!fill(10)) return timed_out_ ? ReadResult::Timeout : ReadResult::Closed;
    len = 0;
    for (int i = 0; i < 8; ++i) len = (len << 8) | static_cast<uint8_t>(buf_[pos_ + 2 + i]);
    header = 10;
  }
  if (len > kMaxPayload) return ReadResult::Error;
  uint8_t mask_key[4] = {0, 0, 0, 0};
  if (masked) {
    if (!fill(header + 4)) return timed_out_ ? ReadResult::Timeout : ReadResult::Closed;
    std::memcpy(mask_key, buf_.data() + pos_ + header, 4);
    header += 4;
  }
  if (!fill(header + static_cast<size_t>(len))) {
    return timed_out_ ? ReadResult::Timeout : ReadResult::Closed;
  }
  out.payload.assign(buf_, pos_ + header, static_cast<size_t>(len));
  if (masked) {
    for (size_t i = 0; i < out.payload.size(); ++i) {
      out.payload[i] = static_cast<char>(out.payload[i] ^ mask_key[i % 4]);
    }
  }
  pos_ += header + static_cast<size_t>(len);

  if (out.opcode == WsOpcode::Close) {
    if (out.payload.size() >= 2) {
      peer_close_code_ = static_cast<uint16_t>((static_cast<uint8_t>(out.payload[0]) << 8) |
                                               static_cast<uint8_t>(out.payload[1]));
    } else {
      peer_close_code_ = 1005;
    }
    if (!close_sent_) send_close(peer_close_code_ == 1005 ? 1000 : peer_close_code_);
    return ReadResult::Closed;
  }
  return ReadResult::Frame;
}

WsConnection::ReadResult WsConnection::read_message(WsFrame& out) {
  WsFrame assembled;
  bool have_first = false;
  while (true) {
    WsFrame f;
    ReadResult r = read_frame(f);
    if (r != ReadResult::Frame) return r;
    if (f.opcode == WsOpcode::Ping) {
      WsFrame pong{true, WsOpcode::Pong, f.payload};
      if (!send_frame(pong)) return ReadResult::Error;
      continue;
    }
    if (f.opcode == WsOpcode::Pong) continue;
    if (!have_first) {
      if (f.opcode == WsOpcode::Continuation) return ReadResult::Error;
      assembled = std::move(f);
      have_first = true;
    } else {
      if (f.opcode != WsOpcode::Continuation) return ReadResult::Error;
      assembled.payload += f.payload;
      assembled.fin = f.fin;
    }
    if (assembled.fin) {
      out = std::move(assembled);
      return ReadResult::Frame;
    }
  }
}

bool WsConnection::send_frame(const WsFrame& frame) {
  std::string head;
  head.push_back(static_cast<char>((frame.fin ? 0x80 : 0x00) |
                                   (static_cast<uint8_t>(frame.opcode) & 0x0f)));
  bool mask = role_ == Role::Client;
  size_t n = frame.payload.size();
  uint8_t mask_bit = mask ? 0x80 : 0x00;
  if (n < 126) {
    head.push_back(static_cast<char>(mask_bit | n));
  } else if (n <= 0xffff) {
    head.push_back(static_cast<char>(mask_bit | 126));
    head.push_back(static_cast<char>((n >> 8) & 0xff));
    head.push_back(static_cast<char>(n & 0xff));
  } else {
    head.push_back(static_cast<char>(mask_bit | 127));
    for (int i = 7; i >= 0; --i) head.push_back(static_cast<char>((n >> (i * 8)) & 0xff));
  }
  if (!mask) {
    return stream_->write_all(head) &&
           (frame.payload.empty() || stream_->write_all(frame.payload));
  }
  std::string key = crypto::random_bytes(4);
  head += key;
  std::string masked = frame.payload;
  for (size_t i = 0; i < masked.size(); ++i) {
    masked[i] = static_cast<char>(masked[i] ^ static_cast<uint8_t>(key[i % 4]));
  }
  return stream_->write_all(head) && (masked.empty() || stream_->write_all(masked));
}

bool WsConnection::send_text(std::string_view text) {
  return send_frame(WsFrame{true, WsOpcode::Text, std::string(text)});
}

bool WsConnection::send_close(uint16_t code, std::string_view reason) {
  if (close_sent_) return true;
  close_sent_ = true;
  WsFrame f;
  f.opcode = WsOpcode::Close;
  f.payload.push_back(static_cast<char>((code >> 8) & 0xff));
  f.payload.push_back(static_cast<char>(code & 0xff));
  f.payload += reason;
  return send_frame(f);
}

std::optional<WsConnection> ws_client_upgrade(std::unique_ptr<Stream> stream,
                                              const std::string& host_header,
                                              const std::string& target, HeaderMap extra_headers,
                                              std::string* error) {
  std::string key = base64_encode(crypto::random_bytes(16));
  Request req;
  req.method = "GET";
  req.target = target;
  req.headers.set("Host", host_header);
  req.headers.set("Upgrade", "websocket");
  req.headers.set("Connection", "Upgrade");
  req.headers.set("Sec-WebSocket-Key", key);
  req.headers.set("Sec-WebSocket-Version", "13");
  for (const auto& [n, v] : extra_headers.items()) req.headers.set(n, v);

  if (!stream->write_all(serialize_request_head(req))) {
    if (error) *error = "write failed";
    return std::nullopt;
  }
  Http1Reader reader(*stream);
  Response res;
  if (reader.read_response_head(res) != IoResult::Ok) {
    if (error) *error = "no upgrade response";
    return std::nullopt;
  }
  if (res.status != 101) {
    if (error) *error = "upgrade refused: status " + std::to_string(res.status);
    return std::nullopt;
  }
  if (res.headers.get("Sec-WebSocket-Accept") != ws_accept_key(key)) {
    if (error) *error = "bad Sec-WebSocket-Accept";
    return std::nullopt;
  }
  std::string leftover = reader.take_buffered();
  return WsConnection(std::move(stream), WsConnection::Role::Client, std::move(leftover));
}

}  // namespace nbgate::http
