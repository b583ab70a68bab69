#ifndef NBGATE_HTTP_HTTP1_HPP
#define NBGATE_HTTP_HTTP1_HPP

#include <functional>
#include <string>

#include "nbgate/http/message.hpp"
#include "nbgate/http/stream.hpp"

namespace nbgate::http {

enum class IoResult { Ok, Eof, Timeout, Malformed, TooLarge, Error };

// Chunk consumer for streamed bodies; return false to abort the transfer.
using BodySink = std::function<bool(const char*, size_t)>;

// Buffered HTTP/1.1 message reader over a blocking stream. One reader per
// connection; leftover bytes stay buffered between keep-alive messages.
class Http1Reader {
 public:
  explicit Http1Reader(Stream& stream) : stream_(stream) {}

  IoResult read_request_head(Request& out);
  IoResult read_response_head(Response& out);

  // Body framing from headers: Content-Length, chunked, or (responses) to-EOF.
  // `eof_terminates` is true for responses whose length is delimited by close.
  IoResult read_body_to_string(const HeaderMap& headers, bool request_side, size_t cap,
                               std::string& out);
  IoResult stream_body(const HeaderMap& headers, bool request_side, const BodySink& sink);

  // Whether the peer may send another message on this connection.
  static bool keep_alive(const std::string& version, const HeaderMap& headers);

  // Drains bytes buffered past the last parsed message (WebSocket upgrade handoff).
  std::string take_buffered();

 private:
  IoResult fill_some();
  IoResult read_line(std::string& line);
  IoResult read_exact(size_t n, const BodySink& sink);
  IoResult read_to_eof(const BodySink& sink);
  IoResult read_chunked(const BodySink& sink);
  IoResult read_head_lines(std::string& start_line, HeaderMap& headers);

  Stream& stream_;
  std::string buf_;
  size_t pos_ = 0;

  static constexpr size_t kMaxHeadBytes = 64 * 1024;
};

std::string serialize_request_head(const Request& req);
std::string serialize_response_head(const Response& res);

// Sets Content-Length from the body and writes the whole message.
bool send_request(Stream& stream, Request req);
bool send_response(Stream& stream, Response res, bool close_connection);

bool write_chunk(Stream& stream, const char* data, size_t n);
bool write_last_chunk(Stream& stream);

}  // namespace nbgate::http

#endif
