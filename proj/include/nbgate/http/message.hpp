#ifndef NBGATE_HTTP_MESSAGE_HPP
#define NBGATE_HTTP_MESSAGE_HPP

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nbgate::http {

// Ordered multimap with case-insensitive name lookup, as HTTP headers behave.
class HeaderMap {
 public:
  void add(std::string_view name, std::string_view value);
  void set(std::string_view name, std::string_view value);  // replace all same-named
  void remove(std::string_view name);
  const std::string* find(std::string_view name) const;
  std::string get(std::string_view name, std::string_view fallback = "") const;
  bool contains(std::string_view name) const;
  size_t count(std::string_view name) const;
  const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }

 private:
  std::vector<std::pair<std::string, std::string>> items_;
};

struct Request {
  std::string method;
  std::string target;  // origin-form: path + optional query
  std::string version = "HTTP/1.1";
  HeaderMap headers;
  std::string body;

  std::string path() const;   // target up to '?'
  std::string query() const;  // after '?', empty if none
};

struct Response {
  int status = 200;
  std::string reason;  // filled from status when empty
  HeaderMap headers;
  std::string body;

  static Response make(int status, std::string body = "",
                       std::string content_type = "text/plain; charset=utf-8");
};

std::string_view status_reason(int status);

bool is_hop_by_hop(std::string_view header_name);

// Content types eligible for authority rewriting.
bool is_text_content_type(std::string_view content_type);

}  // namespace nbgate::http

#endif
