#include "nbgate/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "nbgate/util.hpp"

namespace nbgate {

namespace {

using nlohmann::json;

void require_keys(const json& obj, const std::string& prefix, const std::set<std::string>& known) {
  for (const auto& [key, _] : obj.items()) {
    if (!known.count(key)) {
      throw ConfigError(prefix.empty() ? key : prefix + "." + key, "unknown key");
    }
  }
}

std::string key_path(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

const json* get(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

std::string want_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected a string");
  return v.get<std::string>();
}

bool want_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError(path, "expected a boolean");
  return v.get<bool>();
}

std::vector<Cidr> parse_cidr_list(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path, "expected a list of CIDR blocks");
  std::vector<Cidr> out;
  for (size_t i = 0; i < v.size(); ++i) {
    std::string item_path = path + "[" + std::to_string(i) + "]";
    std::string text = want_string(v[i], item_path);
    auto cidr = Cidr::parse(text);
    if (!cidr) throw ConfigError(item_path, "invalid CIDR block '" + text + "'");
    out.push_back(*cidr);
  }
  return out;
}

}  // namespace

GatewayConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("", "config root must be a JSON object");
  require_keys(doc, "",
               {"listen_address", "advertised_authority", "tls", "upstream", "notebook_path",
                "access", "headers", "password", "read_only", "proxy_timeout", "max_body_bytes",
                "auth_ttl_seconds"});

  GatewayConfig cfg;

  const json* listen = get(doc, "listen_address");
  if (!listen) throw ConfigError("listen_address", "required");
  auto authority = http::Authority::parse(want_string(*listen, "listen_address"));
  if (!authority || !authority->port) {
    throw ConfigError("listen_address", "expected host:port");
  }
  cfg.listen_address = *authority;

  if (const json* v = get(doc, "advertised_authority")) {
    std::string text = want_string(*v, "advertised_authority");
    if (!http::Authority::parse(text)) {
      throw ConfigError("advertised_authority", "expected host[:port]");
    }
    cfg.advertised_authority = text;
  }

  const json* upstream = get(doc, "upstream");
  if (!upstream) throw ConfigError("upstream", "required");
  std::string upstream_text = want_string(*upstream, "upstream");
  auto url = http::Url::parse(upstream_text);
  if (!url) throw ConfigError("upstream", "expected an absolute http/https URL");
  cfg.upstream = *url;

  const json* notebook = get(doc, "notebook_path");
  if (!notebook) throw ConfigError("notebook_path", "required");
  cfg.notebook_path = want_string(*notebook, "notebook_path");
  if (cfg.notebook_path.empty()) throw ConfigError("notebook_path", "must not be empty");

  if (const json* v = get(doc, "tls")) {
    if (!v->is_object()) throw ConfigError("tls", "expected an object");
    require_keys(*v, "tls", {"enabled", "certificate_path", "private_key_path"});
    if (const json* e = get(*v, "enabled")) cfg.tls.enabled = want_bool(*e, "tls.enabled");
    if (const json* c = get(*v, "certificate_path")) {
      cfg.tls.certificate_path = want_string(*c, "tls.certificate_path");
    }
    if (const json* k = get(*v, "private_key_path")) {
      cfg.tls.private_key_path = want_string(*k, "tls.private_key_path");
    }
    if (cfg.tls.enabled) {
      if (cfg.tls.certificate_path.empty()) {
        throw ConfigError("tls.certificate_path", "required when tls.enabled");
      }
      if (cfg.tls.private_key_path.empty()) {
        throw ConfigError("tls.private_key_path", "required when tls.enabled");
      }
      for (const auto& [path, key] :
           {std::pair{cfg.tls.certificate_path, "tls.certificate_path"},
            std::pair{cfg.tls.private_key_path, "tls.private_key_path"}}) {
        std::ifstream probe(path);
        if (!probe.good()) throw ConfigError(key, "file not readable: " + path);
      }
    }
  }

  if (const json* v = get(doc, "access")) {
    if (!v->is_object()) throw ConfigError("access", "expected an object");
    require_keys(*v, "access", {"whitelist", "blacklist"});
    if (const json* w = get(*v, "whitelist")) {
      cfg.access.whitelist = parse_cidr_list(*w, "access.whitelist");
    }
    if (const json* b = get(*v, "blacklist")) {
      cfg.access.blacklist = parse_cidr_list(*b, "access.blacklist");
    }
  }

  cfg.headers = default_security_headers();
  if (const json* v = get(doc, "headers")) {
    if (!v->is_object()) throw ConfigError("headers", "expected an object of name: value");
    for (const auto& [name, value] : v->items()) {
      try {
        cfg.headers.set(name, want_string(value, key_path("headers", name)));
      } catch (const HeaderValueError& e) {
        throw ConfigError(key_path("headers", name), e.what());
      }
    }
  }

  if (const json* v = get(doc, "password")) {
    std::string text = want_string(*v, "password");
    auto record = PasswordRecord::parse(text);
    if (!record) {
      throw ConfigError("password",
                        "expected algorithm:salt:digest with hex salt (>= 12 chars) and a digest "
                        "matching the algorithm");
    }
    cfg.password = *record;
  }

  if (const json* v = get(doc, "read_only")) cfg.read_only = want_bool(*v, "read_only");

  if (const json* v = get(doc, "proxy_timeout")) {
    if (!v->is_number()) throw ConfigError("proxy_timeout", "expected seconds as a number");
    cfg.proxy_timeout = v->get<double>();
    if (!(cfg.proxy_timeout > 0)) throw ConfigError("proxy_timeout", "must be > 0");
  }

  if (const json* v = get(doc, "max_body_bytes")) {
    if (!v->is_number_integer() || v->get<long long>() <= 0) {
      throw ConfigError("max_body_bytes", "expected a positive integer");
    }
    cfg.max_body_bytes = static_cast<size_t>(v->get<long long>());
  }

  if (const json* v = get(doc, "auth_ttl_seconds")) {
    if (!v->is_number_integer() || v->get<long long>() <= 0) {
      throw ConfigError("auth_ttl_seconds", "expected a positive integer");
    }
    cfg.auth_ttl_seconds = v->get<long long>();
  }

  return cfg;
}

GatewayConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ConfigNotFound("config file not found: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  json doc;
  try {
    doc = json::parse(buffer.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("not valid JSON: ") + e.what());
  }
  return config_from_json(doc);
}

}  // namespace nbgate
