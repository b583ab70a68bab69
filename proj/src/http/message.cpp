#include "nbgate/http/message.hpp"

#include <algorithm>

#include "nbgate/util.hpp"

namespace nbgate::http {

void HeaderMap::add(std::string_view name, std::string_view value) {
  items_.emplace_back(std::string(name), std::string(value));
}

void HeaderMap::set(std::string_view name, std::string_view value) {
  remove(name);
  add(name, value);
}

void HeaderMap::remove(std::string_view name) {
  items_.erase(std::remove_if(items_.begin(), items_.end(),
                              [&](const auto& kv) { return iequals(kv.first, name); }),
               items_.end());
}

const std::string* HeaderMap::find(std::string_view name) const {
  for (const auto& [n, v] : items_) {
    if (iequals(n, name)) return &v;
  }
  return nullptr;
}

std::string HeaderMap::get(std::string_view name, std::string_view fallback) const {
  const std::string* v = find(name);
  return v ? *v : std::string(fallback);
}

bool HeaderMap::contains(std::string_view name) const { return find(name) != nullptr; }

size_t HeaderMap::count(std::string_view name) const {
  return static_cast<size_t>(std::count_if(
      items_.begin(), items_.end(), [&](const auto& kv) { return iequals(kv.first, name); }));
}

std::string Request::path() const {
  size_t q = target.find('?');
  return q == std::string::npos ? target : target.substr(0, q);
}

std::string Request::query() const {
  size_t q = target.find('?');
  return q == std::string::npos ? "" : target.substr(q + 1);
}

Response Response::make(int status, std::string body, std::string content_type) {
  Response r;
  r.status = status;
  r.reason = std::string(status_reason(status));
  r.body = std::move(body);
  if (!r.body.empty()) r.headers.set("Content-Type", content_type);
  return r;
}

std::string_view status_reason(int status) {
  switch (status) {
    case 101: return "Switching Protocols";
    case 200: return "OK";
    case 201: return "Created";
    case 204: return "No Content";
    case 301: return "Moved Permanently";
    case 302: return "Found";
    case 303: return "See Other";
    case 304: return "Not Modified";
    case 307: return "Temporary Redirect";
    case 400: return "Bad Request";
    case 401: return "Unauthorized";
    case 403: return "Forbidden";
    case 404: return "Not Found";
    case 405: return "Method Not Allowed";
    case 408: return "Request Timeout";
    case 413: return "Payload Too Large";
    case 426: return "Upgrade Required";
    case 500: return "Internal Server Error";
    case 501: return "Not Implemented";
    case 502: return "Bad Gateway";
    case 503: return "Service Unavailable";
    case 504: return "Gateway Timeout";
    default: return "Unknown";
  }
}

bool is_hop_by_hop(std::string_view name) {
  static const char* kHopByHop[] = {"connection", "keep-alive",        "transfer-encoding",
                                    "upgrade",    "proxy-authenticate", "proxy-authorization",
                                    "te",         "trailer"};
  for (const char* h : kHopByHop) {
    if (iequals(name, h)) return true;
  }
  return false;
}

bool is_text_content_type(std::string_view content_type) {
  std::string ct = to_lower(std::string(content_type.substr(0, content_type.find(';'))));
  if (ct.rfind("text/", 0) == 0) return true;
  static const char* kTextual[] = {"application/json",      "application/javascript",
                                   "application/xml",       "application/xhtml+xml",
                                   "application/x-ipynb+json"};
  for (const char* t : kTextual) {
    if (ct == t) return true;
  }
  return false;
}

}  // namespace nbgate::http
