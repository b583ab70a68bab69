#ifndef NBGATE_TESTS_SUPPORT_HPP
#define NBGATE_TESTS_SUPPORT_HPP

#include <openssl/evp.h>
#include <openssl/pem.h>
#include <openssl/x509.h>
#include <openssl/x509v3.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nbgate/http/stream.hpp"

namespace testsupport {

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "nbgate-test-XXXXXX").string();
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    if (!mkdtemp(buf.data())) throw std::runtime_error("mkdtemp failed");
    path_ = buf.data();
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::string& path() const { return path_; }
  std::string file(const std::string& name) const { return path_ + "/" + name; }

 private:
  std::string path_;
};

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out.good()) throw std::runtime_error("cannot write " + path);
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct CertFiles {
  std::string cert_path;
  std::string key_path;
};

// Self-signed cert for 127.0.0.1/localhost, valid for a day.
inline CertFiles make_self_signed_cert(const TempDir& dir) {
  EVP_PKEY* pkey = EVP_PKEY_Q_keygen(nullptr, nullptr, "RSA", static_cast<size_t>(2048));
  if (!pkey) throw std::runtime_error("keygen failed");
  X509* x509 = X509_new();
  ASN1_INTEGER_set(X509_get_serialNumber(x509), 1);
  X509_gmtime_adj(X509_getm_notBefore(x509), -3600);
  X509_gmtime_adj(X509_getm_notAfter(x509), 24 * 3600);
  X509_set_pubkey(x509, pkey);
  X509_NAME* name = X509_get_subject_name(x509);
  X509_NAME_add_entry_by_txt(name, "CN", MBSTRING_ASC,
                             reinterpret_cast<const unsigned char*>("127.0.0.1"), -1, -1, 0);
  X509_set_issuer_name(x509, name);

  X509V3_CTX ctx;
  X509V3_set_ctx_nodb(&ctx);
  X509V3_set_ctx(&ctx, x509, x509, nullptr, nullptr, 0);
  X509_EXTENSION* ext =
      X509V3_EXT_conf_nid(nullptr, &ctx, NID_subject_alt_name, "IP:127.0.0.1,DNS:localhost");
  if (ext) {
    X509_add_ext(x509, ext, -1);
    X509_EXTENSION_free(ext);
  }
  if (X509_sign(x509, pkey, EVP_sha256()) == 0) throw std::runtime_error("X509_sign failed");

  CertFiles files{dir.file("server.crt"), dir.file("server.key")};
  FILE* kf = std::fopen(files.key_path.c_str(), "w");
  PEM_write_PrivateKey(kf, pkey, nullptr, nullptr, 0, nullptr, nullptr);
  std::fclose(kf);
  FILE* cf = std::fopen(files.cert_path.c_str(), "w");
  PEM_write_X509(cf, x509);
  std::fclose(cf);
  X509_free(x509);
  EVP_PKEY_free(pkey);
  return files;
}

inline std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

inline std::string fixture_path(const std::string& name) {
  return env_or("NBGATE_FIXTURES", "tests/fixtures") + "/" + name;
}

inline std::string gate_binary() { return env_or("NBGATE_BIN", "build/tools/notebook-gate"); }

struct CommandResult {
  int exit_code = -1;
  std::string output;  // stdout only
};

inline CommandResult run_command(const std::string& command) {
  CommandResult result;
  FILE* pipe = popen(command.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed");
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) result.output.append(buf, n);
  int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

// Byte-stream test double for wire-format unit tests.
class MemoryStream : public nbgate::http::Stream {
 public:
  explicit MemoryStream(std::string input = "") : input_(std::move(input)) {}

  int read_some(char* buf, size_t n) override {
    if (pos_ >= input_.size()) return 0;
    size_t take = std::min(n, input_.size() - pos_);
    std::memcpy(buf, input_.data() + pos_, take);
    pos_ += take;
    return static_cast<int>(take);
  }
  bool write_all(const char* buf, size_t n) override {
    output_.append(buf, n);
    return true;
  }
  using Stream::write_all;
  void set_read_timeout_ms(long) override {}
  void shutdown_both() override {}
  int fd() const override { return -1; }

  const std::string& output() const { return output_; }

 private:
  std::string input_;
  size_t pos_ = 0;
  std::string output_;
};

}  // namespace testsupport

#endif
