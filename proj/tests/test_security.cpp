#include <doctest.h>

#include <random>

#include "nbgate/security.hpp"
#include "nbgate/util.hpp"

using namespace nbgate;

namespace {

// Independent membership oracle: walks the prefix bit by bit.
bool oracle_contains(const Cidr& cidr, const IpAddress& ip) {
  if (ip.family != cidr.network.family) return false;
  for (int bit = 0; bit < cidr.prefix_len; ++bit) {
    size_t byte = static_cast<size_t>(bit) / 8;
    int shift = 7 - bit % 8;
    if (((ip.bytes[byte] >> shift) & 1) != ((cidr.network.bytes[byte] >> shift) & 1)) {
      return false;
    }
  }
  return true;
}

bool oracle_allow(const AccessPolicy& policy, const IpAddress& ip) {
  for (const auto& b : policy.blacklist) {
    if (oracle_contains(b, ip)) return false;
  }
  if (policy.whitelist.empty()) return true;
  for (const auto& w : policy.whitelist) {
    if (oracle_contains(w, ip)) return true;
  }
  return false;
}

IpAddress random_ip(std::mt19937& rng, bool v6) {
  IpAddress ip;
  ip.family = v6 ? 10 /*AF_INET6*/ : 2 /*AF_INET*/;
  size_t len = v6 ? 16 : 4;
  std::uniform_int_distribution<int> byte(0, 255);
  for (size_t i = 0; i < len; ++i) ip.bytes[i] = static_cast<uint8_t>(byte(rng));
  return ip;
}

Cidr random_cidr(std::mt19937& rng, bool v6) {
  Cidr c;
  c.network = random_ip(rng, v6);
  std::uniform_int_distribution<int> plen(0, v6 ? 128 : 32);
  c.prefix_len = plen(rng);
  return c;
}

IpAddress must_parse(const char* text) {
  auto ip = IpAddress::parse(text);
  REQUIRE(ip);
  return *ip;
}

}  // namespace

TEST_CASE("CIDR parsing accepts both families and rejects junk") {
  auto v4 = Cidr::parse("192.168.1.0/24");
  REQUIRE(v4);
  CHECK(v4->prefix_len == 24);
  CHECK(v4->to_string() == "192.168.1.0/24");

  auto v6 = Cidr::parse("2001:db8::/32");
  REQUIRE(v6);
  CHECK(v6->prefix_len == 32);

  auto host = Cidr::parse("10.0.0.1");
  REQUIRE(host);
  CHECK(host->prefix_len == 32);

  CHECK_FALSE(Cidr::parse("300.1.1.1/24"));
  CHECK_FALSE(Cidr::parse("10.0.0.0/33"));
  CHECK_FALSE(Cidr::parse("2001:db8::/129"));
  CHECK_FALSE(Cidr::parse("10.0.0.0/-1"));
  CHECK_FALSE(Cidr::parse("banana/8"));
  CHECK_FALSE(Cidr::parse(""));
}

TEST_CASE("evaluate_access default-open with no rules") {
  AccessPolicy policy;
  CHECK(evaluate_access(policy, must_parse("10.0.0.1")).allow);
}

TEST_CASE("evaluate_access blacklist wins over whitelist") {
  AccessPolicy policy;
  policy.blacklist = {*Cidr::parse("192.168.1.0/24")};
  policy.whitelist = {*Cidr::parse("192.168.1.7/32")};
  auto decision = evaluate_access(policy, must_parse("192.168.1.7"));
  CHECK_FALSE(decision.allow);
  CHECK(decision.reason.find("blacklist") != std::string::npos);
}

TEST_CASE("whitelist sweep over a /30 allows exactly four addresses") {
  AccessPolicy policy;
  policy.whitelist = {*Cidr::parse("10.0.0.0/30")};
  std::vector<std::string> allowed;
  for (int last = 0; last < 256; ++last) {
    std::string addr = "10.0.0." + std::to_string(last);
    auto ip = IpAddress::parse(addr);
    REQUIRE(ip);
    bool mine = evaluate_access(policy, *ip).allow;
    bool oracle = oracle_allow(policy, *ip);
    CHECK(mine == oracle);
    if (mine) allowed.push_back(addr);
  }
  CHECK(allowed == std::vector<std::string>{"10.0.0.0", "10.0.0.1", "10.0.0.2", "10.0.0.3"});
}

TEST_CASE("evaluate_access agrees with the bit-prefix oracle on 10k random pairs") {
  std::mt19937 rng(20260809);
  std::uniform_int_distribution<int> count(0, 3);
  std::bernoulli_distribution coin(0.5);
  int disagreements = 0;
  for (int i = 0; i < 10000; ++i) {
    bool v6 = coin(rng);
    AccessPolicy policy;
    int nw = count(rng);
    int nb = count(rng);
    for (int j = 0; j < nw; ++j) policy.whitelist.push_back(random_cidr(rng, coin(rng)));
    for (int j = 0; j < nb; ++j) policy.blacklist.push_back(random_cidr(rng, coin(rng)));
    IpAddress client = random_ip(rng, v6);
    if (evaluate_access(policy, client).allow != oracle_allow(policy, client)) ++disagreements;
  }
  CHECK(disagreements == 0);
}

TEST_CASE("blacklist dominance holds for any policy") {
  std::mt19937 rng(7);
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<int> count(0, 3);
  for (int i = 0; i < 500; ++i) {
    bool v6 = coin(rng);
    AccessPolicy policy;
    for (int j = 0; j < count(rng); ++j) policy.whitelist.push_back(random_cidr(rng, coin(rng)));
    for (int j = 0; j < count(rng); ++j) policy.blacklist.push_back(random_cidr(rng, coin(rng)));
    IpAddress client = random_ip(rng, v6);
    policy.whitelist.push_back(Cidr{client, v6 ? 128 : 32});  // even whitelisted exactly
    policy.blacklist.push_back(Cidr{client, v6 ? 128 : 32});
    CHECK_FALSE(evaluate_access(policy, client).allow);
  }
}

TEST_CASE("default security headers are exactly the baseline five") {
  SecurityHeaderSet set = default_security_headers();
  CHECK(set.size() == 5);
  REQUIRE(set.find("X-Content-Type-Options"));
  CHECK(*set.find("X-Content-Type-Options") == "nosniff");
  REQUIRE(set.find("X-Frame-Options"));
  CHECK(*set.find("X-Frame-Options") == "SAMEORIGIN");
  REQUIRE(set.find("Referrer-Policy"));
  CHECK(*set.find("Referrer-Policy") == "no-referrer");
  CHECK(set.find("Strict-Transport-Security"));
  CHECK(set.find("Content-Security-Policy"));
}

TEST_CASE("header overrides replace defaults and keep the rest") {
  SecurityHeaderSet set = default_security_headers();
  SecurityHeaderSet overrides;
  overrides.set("x-frame-options", "DENY");
  set.merge_overrides(overrides);
  CHECK(set.size() == 5);
  CHECK(*set.find("X-Frame-Options") == "DENY");
  CHECK(*set.find("X-Content-Type-Options") == "nosniff");
}

TEST_CASE("header values reject CR and LF") {
  SecurityHeaderSet set;
  CHECK_THROWS_AS(set.set("X-Bad", "a\r\nInjected: 1"), HeaderValueError);
  CHECK_THROWS_AS(set.set("X-Bad", "a\nb"), HeaderValueError);
  CHECK_THROWS_AS(set.set("Bad\nName", "v"), HeaderValueError);
  CHECK_THROWS_AS(set.set("", "v"), HeaderValueError);
  set.set("X-Fine", "value");
  CHECK(set.size() == 1);
}

TEST_CASE("hash_password pinned known answers") {
  // sha256("test1234") and sha1("test1234"), computed with an independent tool.
  PasswordRecord sha256_rec = hash_password("test", "1234", HashAlgorithm::Sha256);
  CHECK(sha256_rec.digest == "937e8d5fbb48bd4949536cd65b8d35c426b80d2f830c5c308e2cdec422ae2244");
  CHECK(sha256_rec.digest.size() == 64);

  PasswordRecord sha1_rec = hash_password("test", "1234", HashAlgorithm::Sha1);
  CHECK(sha1_rec.digest == "9bc34549d565d9505b287de0cd20ac77be1d3f2c");
  CHECK(sha1_rec.digest.size() == 40);
}

TEST_CASE("password record text form") {
  PasswordRecord rec = hash_password("secret", "abcdef123456", HashAlgorithm::Sha256);
  std::string text = rec.to_string();
  CHECK(text.rfind("sha256:abcdef123456:", 0) == 0);
  auto parsed = PasswordRecord::parse(text);
  REQUIRE(parsed);
  CHECK(parsed->digest == rec.digest);

  CHECK_FALSE(PasswordRecord::parse("md5:abcdef123456:00"));
  CHECK_FALSE(PasswordRecord::parse("sha256:short:" + rec.digest));  // salt < 12 hex
  CHECK_FALSE(PasswordRecord::parse("sha256:abcdef123456:deadbeef"));  // digest length
  CHECK_FALSE(PasswordRecord::parse("sha256:abcdef123456"));
  CHECK_FALSE(PasswordRecord::parse("sha1:abcdef123456:" + rec.digest));  // 64 hex for sha1
}

TEST_CASE("verify_password round trip and rejection") {
  PasswordRecord rec = hash_password("test", "abcdef123456", HashAlgorithm::Sha256);
  CHECK(verify_password(rec, "test"));
  CHECK_FALSE(verify_password(rec, "Test"));
  CHECK_FALSE(verify_password(rec, ""));

  PasswordRecord empty = hash_password("", "abcdef123456", HashAlgorithm::Sha1);
  CHECK(verify_password(empty, ""));
  CHECK_FALSE(verify_password(empty, "x"));
}

TEST_CASE("verify_password equals string equality over a generated corpus") {
  std::mt19937 rng(99);
  std::uniform_int_distribution<int> len(0, 12);
  std::uniform_int_distribution<int> ch('a', 'z');
  auto random_word = [&] {
    std::string w(static_cast<size_t>(len(rng)), ' ');
    for (auto& c : w) c = static_cast<char>(ch(rng));
    return w;
  };
  for (int i = 0; i < 300; ++i) {
    std::string p = random_word();
    std::string q = random_word();
    auto algorithm = i % 2 == 0 ? HashAlgorithm::Sha256 : HashAlgorithm::Sha1;
    PasswordRecord rec = hash_password(p, "00ff00ff00ff", algorithm);
    CHECK(verify_password(rec, q) == (p == q));
    CHECK(verify_password(rec, p));
  }
}

TEST_CASE("spoof_rewrite single substitution") {
  CHECK(spoof_rewrite("go to http://localhost:8888/tree", "localhost:8888",
                      "notebooks.example.org") == "go to http://notebooks.example.org/tree");
}

TEST_CASE("spoof_rewrite is byte-identical without occurrences") {
  std::string body = "nothing to see here \x01\x02 binary-ish";
  CHECK(spoof_rewrite(body, "localhost:8888", "example.org") == body);
}

TEST_CASE("spoof_rewrite replaces every occurrence") {
  std::string body;
  for (int i = 0; i < 3; ++i) {
    body += "link" + std::to_string(i) + " http://127.0.0.1:9000/a ";
  }
  std::string out = spoof_rewrite(body, "127.0.0.1:9000", "example.org:443");
  CHECK(count_occurrences(out, "127.0.0.1:9000") == 0);
  CHECK(count_occurrences(out, "example.org:443") == 3);
}

TEST_CASE("spoof_rewrite idempotence when advertised does not contain internal") {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> pieces(0, 5);
  for (int i = 0; i < 200; ++i) {
    std::string body = "x";
    for (int j = 0; j < pieces(rng); ++j) {
      body += (j % 2 == 0) ? " internal:1234 " : " filler ";
    }
    std::string once = spoof_rewrite(body, "internal:1234", "public:443");
    CHECK(spoof_rewrite(once, "internal:1234", "public:443") == once);
  }
}
