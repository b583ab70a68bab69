#include "nbgate/http/http1.hpp"

#include <cstdio>

#include "nbgate/util.hpp"

namespace nbgate::http {

namespace {

constexpr size_t kReadChunk = 16 * 1024;

IoResult classify_read_failure(const Stream& s, int r) {
  if (r == 0) return IoResult::Eof;
  return s.timed_out() ? IoResult::Timeout : IoResult::Error;
}

}  // namespace

IoResult Http1Reader::fill_some() {
  if (pos_ > 0 && pos_ == buf_.size()) {
    buf_.clear();
    pos_ = 0;
  }
  char tmp[kReadChunk];
  int r = stream_.read_some(tmp, sizeof(tmp));
  if (r <= 0) return classify_read_failure(stream_, r);
  buf_.append(tmp, static_cast<size_t>(r));
  return IoResult::Ok;
}

IoResult Http1Reader::read_line(std::string& line) {
  while (true) {
    size_t nl = buf_.find('\n', pos_);
    if (nl != std::string::npos) {
      size_t end = nl;
      if (end > pos_ && buf_[end - 1] == '\r') --end;
      line.assign(buf_, pos_, end - pos_);
      pos_ = nl + 1;
      return IoResult::Ok;
    }
    if (buf_.size() - pos_ > kMaxHeadBytes) return IoResult::TooLarge;
    IoResult r = fill_some();
    if (r != IoResult::Ok) return r;
  }
}

IoResult Http1Reader::read_head_lines(std::string& start_line, HeaderMap& headers) {
  IoResult r = read_line(start_line);
  if (r != IoResult::Ok) return r;
  if (start_line.empty()) {
    // Tolerate a stray blank line before the start line.
    r = read_line(start_line);
    if (r != IoResult::Ok) return r;
  }
  size_t total = start_line.size();
  while (true) {
    std::string line;
    r = read_line(line);
    if (r != IoResult::Ok) return r;
    if (line.empty()) return IoResult::Ok;
    total += line.size();
    if (total > kMaxHeadBytes) return IoResult::TooLarge;
    size_t colon = line.find(':');
    if (colon == std::string::npos) return IoResult::Malformed;
    headers.add(trim(line.substr(0, colon)), trim(line.substr(colon + 1)));
  }
}

IoResult Http1Reader::read_request_head(Request& out) {
  out = Request{};
  std::string start;
  IoResult r = read_head_lines(start, out.headers);
  if (r != IoResult::Ok) return r;
  auto parts = split(start, ' ');
  if (parts.size() != 3 || parts[0].empty() || parts[1].empty()) return IoResult::Malformed;
  out.method = parts[0];
  out.target = parts[1];
  out.version = parts[2];
  if (out.version != "HTTP/1.1" && out.version != "HTTP/1.0") return IoResult::Malformed;
  return IoResult::Ok;
}

IoResult Http1Reader::read_response_head(Response& out) {
  out = Response{};
  std::string start;
  IoResult r = read_head_lines(start, out.headers);
  if (r != IoResult::Ok) return r;
  if (start.rfind("HTTP/1.", 0) != 0) return IoResult::Malformed;
  size_t sp1 = start.find(' ');
  if (sp1 == std::string::npos) return IoResult::Malformed;
  size_t sp2 = start.find(' ', sp1 + 1);
  auto code = parse_int(start.substr(sp1 + 1, sp2 == std::string::npos ? std::string::npos
                                                                       : sp2 - sp1 - 1));
  if (!code || *code < 100 || *code > 599) return IoResult::Malformed;
  out.status = static_cast<int>(*code);
  out.reason = sp2 == std::string::npos ? "" : start.substr(sp2 + 1);
  return IoResult::Ok;
}

IoResult Http1Reader::read_exact(size_t n, const BodySink& sink) {
  while (n > 0) {
    if (pos_ < buf_.size()) {
      size_t take = std::min(n, buf_.size() - pos_);
      if (!sink(buf_.data() + pos_, take)) return IoResult::TooLarge;
      pos_ += take;
      n -= take;
      continue;
    }
    IoResult r = fill_some();
    if (r != IoResult::Ok) return r == IoResult::Eof ? IoResult::Malformed : r;
  }
  return IoResult::Ok;
}

IoResult Http1Reader::read_to_eof(const BodySink& sink) {
  while (true) {
    if (pos_ < buf_.size()) {
      if (!sink(buf_.data() + pos_, buf_.size() - pos_)) return IoResult::TooLarge;
      pos_ = buf_.size();
    }
    IoResult r = fill_some();
    if (r == IoResult::Eof) return IoResult::Ok;
    if (r != IoResult::Ok) return r;
  }
}

IoResult Http1Reader::read_chunked(const BodySink& sink) {
  while (true) {
    std::string size_line;
    IoResult r = read_line(size_line);
    if (r != IoResult::Ok) return r == IoResult::Eof ? IoResult::Malformed : r;
    size_t semi = size_line.find(';');
    unsigned long long n = 0;
    if (std::sscanf(size_line.substr(0, semi).c_str(), "%llx", &n) != 1) {
      return IoResult::Malformed;
    }
    if (n == 0) break;
    r = read_exact(static_cast<size_t>(n), sink);
    if (r != IoResult::Ok) return r;
    std::string crlf;
    r = read_line(crlf);
    if (r != IoResult::Ok || !crlf.empty()) return IoResult::Malformed;
  }
  // Trailers (ignored) up to the blank line.
  while (true) {
    std::string line;
    IoResult r = read_line(line);
    if (r != IoResult::Ok) return r == IoResult::Eof ? IoResult::Malformed : r;
    if (line.empty()) return IoResult::Ok;
  }
}

IoResult Http1Reader::stream_body(const HeaderMap& headers, bool request_side,
                                  const BodySink& sink) {
  std::string te = to_lower(headers.get("Transfer-Encoding"));
  if (te.find("chunked") != std::string::npos) return read_chunked(sink);
  if (const std::string* cl = headers.find("Content-Length")) {
    auto n = parse_int(*cl);
    if (!n || *n < 0) return IoResult::Malformed;
    return read_exact(static_cast<size_t>(*n), sink);
  }
  if (request_side) return IoResult::Ok;  // requests without framing carry no body
  return read_to_eof(sink);
}

IoResult Http1Reader::read_body_to_string(const HeaderMap& headers, bool request_side, size_t cap,
                                          std::string& out) {
  out.clear();
  bool over = false;
  IoResult r = stream_body(headers, request_side, [&](const char* data, size_t n) {
    if (out.size() + n > cap) {
      over = true;
      return false;
    }
    out.append(data, n);
    return true;
  });
  if (over) return IoResult::TooLarge;
  return r;
}

bool Http1Reader::keep_alive(const std::string& version, const HeaderMap& headers) {
  std::string conn = to_lower(headers.get("Connection"));
  if (conn.find("close") != std::string::npos) return false;
  if (version == "HTTP/1.0") return conn.find("keep-alive") != std::string::npos;
  return true;
}

std::string Http1Reader::take_buffered() {
  std::string out = buf_.substr(pos_);
  buf_.clear();
  pos_ = 0;
  return out;
}

std::string serialize_request_head(const Request& req) {
  std::string out = req.method + " " + req.target + " " + req.version + "\r\n";
  for (const auto& [n, v] : req.headers.items()) out += n + ": " + v + "\r\n";
  out += "\r\n";
  return out;
}

std::string serialize_response_head(const Response& res) {
  std::string reason = res.reason.empty() ? std::string(status_reason(res.status)) : res.reason;
  std::string out = "HTTP/1.1 " + std::to_string(res.status) + " " + reason + "\r\n";
  for (const auto& [n, v] : res.headers.items()) out += n + ": " + v + "\r\n";
  out += "\r\n";
  return out;
}

bool send_request(Stream& stream, Request req) {
  if (!req.body.empty() || req.method == "POST" || req.method == "PUT" ||
      req.method == "PATCH") {
    req.headers.set("Content-Length", std::to_string(req.body.size()));
  }
  std::string head = serialize_request_head(req);
  return stream.write_all(head) && (req.body.empty() || stream.write_all(req.body));
}

bool send_response(Stream& stream, Response res, bool close_connection) {
  res.headers.set("Content-Length", std::to_string(res.body.size()));
  res.headers.set("Connection", close_connection ? "close" : "keep-alive");
  std::string head = serialize_response_head(res);
  return stream.write_all(head) && (res.body.empty() || stream.write_all(res.body));
}

bool write_chunk(Stream& stream, const char* data, size_t n) {
  if (n == 0) return true;
  char size_line[32];
  int len = std::snprintf(size_line, sizeof(size_line), "%zx\r\n", n);
  return stream.write_all(size_line, static_cast<size_t>(len)) && stream.write_all(data, n) &&
         stream.write_all("\r\n", 2);
}

bool write_last_chunk(Stream& stream) { return stream.write_all("0\r\n\r\n", 5); }

}  // namespace nbgate::http
