#include <doctest.h>

#include "nbgate/config.hpp"
#include "support.hpp"

using namespace nbgate;
using nlohmann::json;

namespace {

json minimal_config() {
  return json{{"listen_address", "127.0.0.1:9000"},
              {"upstream", "http://127.0.0.1:8888"},
              {"notebook_path", "demo.ipynb"}};
}

}  // namespace

TEST_CASE("minimal config fills documented defaults") {
  GatewayConfig cfg = config_from_json(minimal_config());
  CHECK(cfg.listen_address.host == "127.0.0.1");
  CHECK(cfg.listen_address.port == uint16_t{9000});
  CHECK(cfg.upstream.authority() == "127.0.0.1:8888");
  CHECK(cfg.headers.size() == 5);  // default security header set
  CHECK(cfg.read_only == false);
  CHECK(cfg.proxy_timeout == doctest::Approx(30.0));
  CHECK(cfg.max_body_bytes == 10ull * 1024 * 1024);
  CHECK(cfg.auth_ttl_seconds == 28800);
  CHECK_FALSE(cfg.password.has_value());
  CHECK_FALSE(cfg.tls.enabled);
  CHECK(cfg.advertised() == "127.0.0.1:9000");
  CHECK(cfg.public_scheme() == "http");
}

TEST_CASE("unknown top-level key is an error naming the key") {
  json doc = minimal_config();
  doc["whitlist"] = json::array();
  try {
    config_from_json(doc);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "whitlist");
  }
}

TEST_CASE("unknown nested key is an error with its path") {
  json doc = minimal_config();
  doc["access"] = json{{"whitelst", json::array()}};
  try {
    config_from_json(doc);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "access.whitelst");
  }
}

TEST_CASE("bad CIDR reports the list index") {
  json doc = minimal_config();
  doc["access"] = json{{"blacklist", json::array({"300.1.1.1/24"})}};
  try {
    config_from_json(doc);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "access.blacklist[0]");
  }
}

TEST_CASE("required keys are enforced") {
  for (const char* missing : {"listen_address", "upstream", "notebook_path"}) {
    json doc = minimal_config();
    doc.erase(missing);
    try {
      config_from_json(doc);
      FAIL("expected ConfigError for ", missing);
    } catch (const ConfigError& e) {
      CHECK(e.key() == missing);
    }
  }
}

TEST_CASE("listen_address must carry a port") {
  json doc = minimal_config();
  doc["listen_address"] = "127.0.0.1";
  CHECK_THROWS_AS(config_from_json(doc), ConfigError);
}

TEST_CASE("upstream must be an absolute http url") {
  json doc = minimal_config();
  doc["upstream"] = "not-a-url";
  CHECK_THROWS_AS(config_from_json(doc), ConfigError);
  doc["upstream"] = "ftp://host/";
  CHECK_THROWS_AS(config_from_json(doc), ConfigError);
}

TEST_CASE("proxy_timeout must be positive") {
  json doc = minimal_config();
  doc["proxy_timeout"] = 0;
  CHECK_THROWS_AS(config_from_json(doc), ConfigError);
  doc["proxy_timeout"] = -1.5;
  CHECK_THROWS_AS(config_from_json(doc), ConfigError);
  doc["proxy_timeout"] = 0.25;
  CHECK(config_from_json(doc).proxy_timeout == doctest::Approx(0.25));
}

TEST_CASE("password must be a valid record") {
  json doc = minimal_config();
  doc["password"] = "sha256:abc:xyz";
  CHECK_THROWS_AS(config_from_json(doc), ConfigError);
  doc["password"] =
      "sha256:abcdef123456:937e8d5fbb48bd4949536cd65b8d35c426b80d2f830c5c308e2cdec422ae2244";
  auto cfg = config_from_json(doc);
  REQUIRE(cfg.password);
  CHECK(cfg.password->salt == "abcdef123456");
}

TEST_CASE("header overrides merge over defaults, injection rejected") {
  json doc = minimal_config();
  doc["headers"] = json{{"X-Frame-Options", "DENY"}, {"X-Custom", "1"}};
  auto cfg = config_from_json(doc);
  CHECK(cfg.headers.size() == 6);
  CHECK(*cfg.headers.find("X-Frame-Options") == "DENY");

  doc["headers"] = json{{"X-Bad", "a\r\nb"}};
  CHECK_THROWS_AS(config_from_json(doc), ConfigError);
}

TEST_CASE("tls requires readable material when enabled") {
  json doc = minimal_config();
  doc["tls"] = json{{"enabled", true},
                    {"certificate_path", "/nonexistent/cert.pem"},
                    {"private_key_path", "/nonexistent/key.pem"}};
  CHECK_THROWS_AS(config_from_json(doc), ConfigError);

  testsupport::TempDir dir;
  auto files = testsupport::make_self_signed_cert(dir);
  doc["tls"] = json{{"enabled", true},
                    {"certificate_path", files.cert_path},
                    {"private_key_path", files.key_path}};
  auto cfg = config_from_json(doc);
  CHECK(cfg.tls.enabled);
  CHECK(cfg.public_scheme() == "https");
}

TEST_CASE("load_config distinguishes missing file from bad content") {
  CHECK_THROWS_AS(load_config("/definitely/not/here.json"), ConfigNotFound);

  testsupport::TempDir dir;
  std::string bad = dir.file("bad.json");
  testsupport::write_text(bad, "{ not json");
  CHECK_THROWS_AS(load_config(bad), ConfigError);

  std::string good = dir.file("good.json");
  testsupport::write_text(good, minimal_config().dump());
  CHECK(load_config(good).notebook_path == "demo.ipynb");
}

TEST_CASE("access lists parse into the policy") {
  json doc = minimal_config();
  doc["access"] = json{{"whitelist", json::array({"10.0.0.0/30", "2001:db8::/32"})},
                       {"blacklist", json::array({"192.168.1.0/24"})}};
  auto cfg = config_from_json(doc);
  CHECK(cfg.access.whitelist.size() == 2);
  CHECK(cfg.access.blacklist.size() == 1);
}
