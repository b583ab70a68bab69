// notebook-gate: single-binary gateway for hosting Jupyter notebooks behind an
// in-process web tier, plus a benchmark harness for comparing topologies.

#include <termios.h>
#include <unistd.h>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "nbgate/bench.hpp"
#include "nbgate/config.hpp"
#include "nbgate/crypto.hpp"
#include "nbgate/gateway.hpp"
#include "nbgate/kernel.hpp"
#include "nbgate/util.hpp"

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted.store(true); }

void install_signal_handlers() {
  struct sigaction sa{};
  sa.sa_handler = on_signal;
  sigaction(SIGINT, &sa, nullptr);
  sigaction(SIGTERM, &sa, nullptr);
}

void wait_for_interrupt() {
  while (!g_interrupted.load()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
}

std::string resolve_config_path(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  const char* env = std::getenv("NOTEBOOK_GATE_CONFIG");
  if (env && *env) return env;
  throw nbgate::ConfigError("", "no config path: pass --config or set NOTEBOOK_GATE_CONFIG");
}

std::string read_password_line(const std::string& prompt) {
  bool tty = isatty(STDIN_FILENO) == 1;
  termios saved{};
  if (tty) {
    std::cerr << prompt << std::flush;
    tcgetattr(STDIN_FILENO, &saved);
    termios noecho = saved;
    noecho.c_lflag &= ~static_cast<tcflag_t>(ECHO);
    tcsetattr(STDIN_FILENO, TCSANOW, &noecho);
  }
  std::string line;
  bool got = static_cast<bool>(std::getline(std::cin, line));
  if (tty) {
    tcsetattr(STDIN_FILENO, TCSANOW, &saved);
    std::cerr << "\n";
  }
  if (!got) throw std::runtime_error("no password on input");
  return line;
}

void log_json_line(const nbgate::http::AccessLogEntry& entry) {
  nlohmann::json line{{"ts", entry.timestamp},   {"client_ip", entry.client_ip},
                      {"method", entry.method},  {"path", entry.path},
                      {"status", entry.status},  {"duration_ms", entry.duration_ms}};
  std::cout << line.dump() << "\n" << std::flush;
}

// Writes via a temp file so failures never leave a partial output behind.
void write_file_atomically(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out.good()) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out.good()) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, target);
}

int cmd_serve(const std::string& config_flag) {
  nbgate::GatewayConfig cfg = nbgate::load_config(resolve_config_path(config_flag));
  nbgate::Gateway gateway(std::move(cfg));
  gateway.set_access_log(log_json_line);
  gateway.start();
  std::cerr << "notebook-gate listening on " << gateway.listen_authority() << " (advertised "
            << gateway.config().advertised() << ", upstream "
            << gateway.config().upstream.authority() << ")\n";
  install_signal_handlers();
  wait_for_interrupt();
  std::cerr << "shutting down\n";
  gateway.stop();
  return 0;
}

int cmd_check_config(const std::string& path) {
  nbgate::load_config(path);
  return 0;
}

int cmd_hash_password(const std::string& algorithm_name) {
  auto algorithm = nbgate::algorithm_from_name(algorithm_name);
  if (!algorithm) {
    std::cerr << "unsupported algorithm: " << algorithm_name << " (sha1 or sha256)\n";
    return 1;
  }
  std::string password = read_password_line("Password: ");
  std::string confirm = read_password_line("Confirm: ");
  if (password != confirm) {
    std::cerr << "passwords do not match\n";
    return 1;
  }
  std::string salt = nbgate::crypto::random_hex(6);  // 12 hex chars
  nbgate::PasswordRecord record = nbgate::hash_password(password, salt, *algorithm);
  std::cout << record.to_string() << "\n";
  return 0;
}

int cmd_mock_upstream(const std::string& listen, long latency_ms) {
  auto authority = nbgate::http::Authority::parse(listen);
  if (!authority || !authority->port) {
    std::cerr << "bad --listen, expected host:port\n";
    return 1;
  }
  nbgate::MockKernelServer::Options options;
  options.host = authority->host;
  options.port = *authority->port;
  options.artificial_latency_ms = latency_ms;
  nbgate::MockKernelServer mock(options);
  mock.start();
  std::cerr << "mock upstream listening on " << mock.authority() << " (latency " << latency_ms
            << " ms)\n";
  install_signal_handlers();
  wait_for_interrupt();
  mock.stop();
  return 0;
}

int cmd_bench(const std::string& target, const std::string& connections_csv,
              long long requests, double duration, double warmup, int reps,
              const std::string& out_path, long long sample_pid) {
  std::vector<int> levels;
  for (const auto& part : nbgate::split(connections_csv, ',')) {
    auto n = nbgate::parse_int(nbgate::trim(part));
    if (!n || *n < 1) throw std::runtime_error("bad --connections entry: " + part);
    levels.push_back(static_cast<int>(*n));
  }
  if (levels.empty()) throw std::runtime_error("--connections list is empty");

  std::vector<nbgate::bench::LevelRun> sweep;
  for (int level : levels) {
    nbgate::bench::LoadSpec spec;
    spec.target_url = target;
    spec.connections = level;
    if (requests > 0) spec.total_requests = requests;
    if (duration > 0) spec.duration_s = duration;
    spec.warmup_s = warmup;
    spec.repetitions = reps;

    nbgate::bench::LevelRun run;
    run.connections = level;
    std::vector<nbgate::bench::BenchResult> results;
    for (int rep = 0; rep < reps; ++rep) {
      nbgate::bench::ResourceSampler sampler;
      if (sample_pid > 0) sampler.start(static_cast<pid_t>(sample_pid));
      nbgate::bench::BenchResult result = nbgate::bench::run_load_once(spec);
      auto samples = sampler.stop();
      nbgate::bench::RepetitionMetrics metrics;
      metrics.result = result;
      metrics.mean_cpu_pct = nbgate::bench::mean_cpu_percent(samples);
      metrics.peak_rss_bytes = nbgate::bench::peak_rss_bytes(samples);
      results.push_back(std::move(result));
      run.reps.push_back(std::move(metrics));
      std::cerr << "connections=" << level << " rep=" << (rep + 1) << "/" << reps
                << " completed=" << run.reps.back().result.completed
                << " p50=" << run.reps.back().result.p50_ms << "ms"
                << " rps=" << run.reps.back().result.throughput_rps << "\n";
    }
    run.median_index = nbgate::bench::median_throughput_index(results);
    sweep.push_back(std::move(run));
  }

  std::string csv = nbgate::bench::bench_csv(sweep);
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    write_file_atomically(out_path, csv);
    std::cerr << "wrote " << out_path << "\n";
  }
  return 0;
}

int cmd_report(const std::string& a_path, const std::string& b_path, const std::string& label_a,
               const std::string& label_b, const std::string& out_path) {
  auto read_file = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) throw std::runtime_error("cannot read " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };
  auto side_a = nbgate::bench::parse_bench_csv(read_file(a_path), label_a);
  auto side_b = nbgate::bench::parse_bench_csv(read_file(b_path), label_b);
  auto report = nbgate::bench::compare_report(side_a, side_b);
  std::cout << report.to_table(side_a, side_b);
  if (!out_path.empty()) {
    write_file_atomically(out_path, report.to_csv());
    std::cerr << "wrote " << out_path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"notebook-gate: 3-tier notebook gateway and benchmark harness"};
  app.require_subcommand(1);

  std::string config_path;
  auto* serve = app.add_subcommand("serve", "run the gateway until interrupted");
  serve->add_option("--config", config_path, "config JSON (or NOTEBOOK_GATE_CONFIG)");

  std::string check_path;
  auto* check = app.add_subcommand("check-config", "validate a config file and exit");
  check->add_option("path", check_path, "config JSON path")->required();

  std::string algorithm = "sha256";
  auto* hashpw = app.add_subcommand("hash-password", "hash a password for the config file");
  hashpw->add_option("--algorithm", algorithm, "sha1 or sha256")->capture_default_str();

  std::string bench_target;
  std::string bench_connections = "50,100,250";
  long long bench_requests = 0;
  double bench_duration = 0.0;
  double bench_warmup = 3.0;
  int bench_reps = 3;
  std::string bench_out;
  long long bench_sample_pid = 0;
  auto* bench = app.add_subcommand("bench", "closed-loop load sweep against a target URL");
  bench->add_option("--target", bench_target, "target URL")->required();
  bench->add_option("--connections", bench_connections, "comma list of concurrency levels")
      ->capture_default_str();
  bench->add_option("--requests", bench_requests, "total requests per run");
  bench->add_option("--duration", bench_duration, "seconds per run");
  bench->add_option("--warmup", bench_warmup, "warmup seconds excluded from stats")
      ->capture_default_str();
  bench->add_option("--reps", bench_reps, "repetitions per level (median reported)")
      ->capture_default_str();
  bench->add_option("--out", bench_out, "CSV output path (stdout when omitted)");
  bench->add_option("--sample-pid", bench_sample_pid, "sample CPU/RSS of this pid during runs");

  std::string report_a, report_b, report_label_a = "A", report_label_b = "B", report_out;
  auto* report = app.add_subcommand("report", "compare two bench CSVs");
  report->add_option("--a", report_a, "baseline bench CSV")->required();
  report->add_option("--b", report_b, "comparison bench CSV")->required();
  report->add_option("--label-a", report_label_a, "baseline label")->capture_default_str();
  report->add_option("--label-b", report_label_b, "comparison label")->capture_default_str();
  report->add_option("--out", report_out, "write comparison CSV here");

  std::string mock_listen = "127.0.0.1:8888";
  long mock_latency = 0;
  auto* mock = app.add_subcommand("mock-upstream", "run the mock notebook/kernel server");
  mock->add_option("--listen", mock_listen, "host:port")->capture_default_str();
  mock->add_option("--latency-ms", mock_latency, "artificial per-request latency")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (serve->parsed()) return cmd_serve(config_path);
    if (check->parsed()) return cmd_check_config(check_path);
    if (hashpw->parsed()) return cmd_hash_password(algorithm);
    if (bench->parsed()) {
      if ((bench_requests > 0) == (bench_duration > 0)) {
        std::cerr << "bench: exactly one of --requests or --duration is required\n";
        return 1;
      }
      return cmd_bench(bench_target, bench_connections, bench_requests, bench_duration,
                       bench_warmup, bench_reps, bench_out, bench_sample_pid);
    }
    if (report->parsed()) {
      return cmd_report(report_a, report_b, report_label_a, report_label_b, report_out);
    }
    if (mock->parsed()) return cmd_mock_upstream(mock_listen, mock_latency);
  } catch (const nbgate::ConfigNotFound& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nbgate::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
