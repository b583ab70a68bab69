#include "nbgate/bench.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "nbgate/http/client.hpp"
#include "nbgate/util.hpp"

namespace nbgate::bench {

long long BenchResult::total_failed() const {
  long long n = 0;
  for (const auto& [_, count] : failed) n += count;
  return n;
}

double percentile(std::vector<double> samples, double p) {
  if (samples.empty()) throw EmptySamples("percentile of empty sample set");
  if (p < 0.0 || p > 100.0) throw std::invalid_argument("percentile p out of [0,100]");
  std::sort(samples.begin(), samples.end());
  size_t n = samples.size();
  size_t rank = static_cast<size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
  if (rank < 1) rank = 1;
  if (rank > n) rank = n;
  return samples[rank - 1];
}

namespace {

struct WorkerStats {
  long long completed = 0;
  std::map<std::string, long long> failed;
  std::vector<double> latencies_ms;
  double last_done_t = 0.0;
};

std::string classify_failure(const http::HttpClient::Result& r) {
  if (r.connect_failure) return "connect";
  if (r.io == http::IoResult::Timeout) return "timeout";
  if (r.io == http::IoResult::Eof) return "disconnect";
  return "io";
}

void fill_stats(BenchResult& out) {
  if (!out.latencies_ms.empty()) {
    out.p50_ms = percentile(out.latencies_ms, 50);
    out.p90_ms = percentile(out.latencies_ms, 90);
    out.p99_ms = percentile(out.latencies_ms, 99);
    out.max_ms = percentile(out.latencies_ms, 100);
  }
  out.throughput_rps = out.wall_time_s > 0 ? static_cast<double>(out.completed) / out.wall_time_s
                                           : 0.0;
}

}  // namespace

BenchResult run_load_once(const LoadSpec& spec) {
  if (spec.connections < 1) throw std::invalid_argument("connections must be >= 1");
  if (spec.duration_s.has_value() == spec.total_requests.has_value()) {
    throw std::invalid_argument("exactly one of duration or total_requests must be set");
  }
  auto url = http::Url::parse(spec.target_url);
  if (!url) throw TargetUnreachable("bad target URL: " + spec.target_url);

  http::ClientOptions options;
  options.connect_timeout_ms = 5000;
  options.read_timeout_ms = 30000;

  {  // pre-flight probe: the target must answer before workers start
    http::HttpClient probe(*url, options);
    auto r = probe.send("GET", url->target);
    if (!r.ok()) {
      throw TargetUnreachable("target " + spec.target_url + " unreachable: " + r.error);
    }
  }

  using clock = std::chrono::steady_clock;
  auto now_s = [] {
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
  };

  const double t_start = now_s();
  const double t_measure = t_start + spec.warmup_s;
  const double t_deadline = spec.duration_s ? t_measure + *spec.duration_s : 0.0;

  std::atomic<long long> issued{0};  // counted-phase request slots
  std::vector<WorkerStats> stats(static_cast<size_t>(spec.connections));
  std::vector<std::thread> workers;
  workers.reserve(static_cast<size_t>(spec.connections));

  for (int i = 0; i < spec.connections; ++i) {
    workers.emplace_back([&, i] {
      WorkerStats& local = stats[static_cast<size_t>(i)];
      http::HttpClient client(*url, options);
      while (true) {
        double t0 = now_s();
        bool counted = t0 >= t_measure;
        if (counted) {
          if (spec.total_requests) {
            if (issued.fetch_add(1) >= *spec.total_requests) break;
          } else if (t0 >= t_deadline) {
            break;
          }
        }
        auto r = client.send("GET", url->target);
        double t1 = now_s();
        if (!counted) continue;
        if (r.ok()) {
          local.completed += 1;
          local.latencies_ms.push_back((t1 - t0) * 1000.0);
        } else {
          local.failed[classify_failure(r)] += 1;
          // Connect-refused spins burn CPU without this.
          std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
        local.last_done_t = t1;
      }
    });
  }
  for (auto& w : workers) w.join();

  BenchResult out;
  out.spec = spec;
  double t_last = t_measure;
  for (auto& w : stats) {
    out.completed += w.completed;
    for (const auto& [k, v] : w.failed) out.failed[k] += v;
    out.latencies_ms.insert(out.latencies_ms.end(), w.latencies_ms.begin(),
                            w.latencies_ms.end());
    t_last = std::max(t_last, w.last_done_t);
  }
  out.wall_time_s = std::max(t_last - t_measure, 1e-9);
  fill_stats(out);
  return out;
}

std::vector<BenchResult> run_load_all(const LoadSpec& spec) {
  std::vector<BenchResult> runs;
  int reps = std::max(1, spec.repetitions);
  runs.reserve(static_cast<size_t>(reps));
  for (int i = 0; i < reps; ++i) runs.push_back(run_load_once(spec));
  return runs;
}

size_t median_throughput_index(const std::vector<BenchResult>& runs) {
  if (runs.empty()) throw EmptySamples("no runs");
  std::vector<size_t> order(runs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return runs[a].throughput_rps < runs[b].throughput_rps;
  });
  return order[(order.size() - 1) / 2];
}

BenchResult run_load(const LoadSpec& spec) {
  auto runs = run_load_all(spec);
  return runs[median_throughput_index(runs)];
}

namespace {

struct CpuReading {
  bool ok = false;
  double cpu_seconds = 0.0;
  long long rss_bytes = 0;
};

CpuReading read_proc(pid_t pid) {
  CpuReading out;
  std::ifstream stat("/proc/" + std::to_string(pid) + "/stat");
  if (!stat.good()) return out;
  std::string line;
  std::getline(stat, line);
  size_t close_paren = line.rfind(')');
  if (close_paren == std::string::npos) return out;
  std::istringstream rest(line.substr(close_paren + 2));
  std::string field;
  // Fields after comm: state(1) ... utime is field 12, stime field 13.
  unsigned long long utime = 0, stime = 0;
  for (int i = 1; i <= 13 && rest >> field; ++i) {
    if (i == 1 && (field == "Z" || field == "X" || field == "x")) {
      return out;  // zombies keep a readable /proc entry; treat as vanished
    }
    if (i == 12) utime = std::stoull(field);
    if (i == 13) stime = std::stoull(field);
  }
  long ticks = sysconf(_SC_CLK_TCK);
  if (ticks <= 0) ticks = 100;
  out.cpu_seconds = static_cast<double>(utime + stime) / static_cast<double>(ticks);

  std::ifstream statm("/proc/" + std::to_string(pid) + "/statm");
  if (!statm.good()) return out;
  long long size_pages = 0, resident_pages = 0;
  statm >> size_pages >> resident_pages;
  out.rss_bytes = resident_pages * sysconf(_SC_PAGESIZE);
  out.ok = true;
  return out;
}

}  // namespace

std::vector<ResourceSample> sample_resources(pid_t pid, long interval_ms,
                                             const std::atomic<bool>& stop) {
  if (interval_ms < 10) interval_ms = 10;
  std::vector<ResourceSample> samples;
  CpuReading prev = read_proc(pid);
  if (!prev.ok) return samples;  // ProcessVanished before the first interval

  auto now_s = [] {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
  };
  double prev_t = now_s();

  while (!stop.load(std::memory_order_relaxed)) {
    std::this_thread::sleep_for(std::chrono::milliseconds(interval_ms));
    CpuReading cur = read_proc(pid);
    double t = now_s();
    if (!cur.ok) break;  // process vanished: return partial data
    double dt = t - prev_t;
    ResourceSample s;
    s.t = t;
    s.cpu_percent = dt > 0 ? (cur.cpu_seconds - prev.cpu_seconds) / dt * 100.0 : 0.0;
    s.rss_bytes = cur.rss_bytes;
    samples.push_back(s);
    prev = cur;
    prev_t = t;
  }
  return samples;
}

void ResourceSampler::start(pid_t pid, long interval_ms) {
  stop_.store(false);
  samples_.clear();
  thread_ = std::thread(
      [this, pid, interval_ms] { samples_ = sample_resources(pid, interval_ms, stop_); });
  running_ = true;
}

std::vector<ResourceSample> ResourceSampler::stop() {
  if (!running_) return {};
  stop_.store(true);
  thread_.join();
  running_ = false;
  return samples_;
}

ResourceSampler::~ResourceSampler() {
  if (running_) {
    stop_.store(true);
    thread_.join();
  }
}

double mean_cpu_percent(const std::vector<ResourceSample>& samples) {
  if (samples.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : samples) sum += s.cpu_percent;
  return sum / static_cast<double>(samples.size());
}

long long peak_rss_bytes(const std::vector<ResourceSample>& samples) {
  long long peak = 0;
  for (const auto& s : samples) peak = std::max(peak, s.rss_bytes);
  return peak;
}

namespace {

double safe_ratio(double denominator, double numerator) {
  if (denominator > 0) return numerator / denominator;
  return numerator > 0 ? std::numeric_limits<double>::infinity() : 1.0;
}

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

ComparisonReport compare_report(const LabeledSide& a, const LabeledSide& b) {
  if (a.levels.size() != b.levels.size()) {
    throw MismatchedSweep("sides cover different numbers of connection levels");
  }
  ComparisonReport report;
  report.label_a = a.label;
  report.label_b = b.label;
  for (size_t i = 0; i < a.levels.size(); ++i) {
    const LevelMetrics& la = a.levels[i];
    const LevelMetrics& lb = b.levels[i];
    if (la.connections != lb.connections) {
      throw MismatchedSweep("connection level mismatch: " + std::to_string(la.connections) +
                            " vs " + std::to_string(lb.connections));
    }
    ComparisonRow row;
    row.connections = la.connections;
    row.latency_ratio = safe_ratio(la.result.p50_ms, lb.result.p50_ms);
    row.throughput_ratio = safe_ratio(la.result.throughput_rps, lb.result.throughput_rps);
    row.cpu_delta_pct = lb.mean_cpu_pct - la.mean_cpu_pct;
    row.rss_delta_bytes = lb.peak_rss_bytes - la.peak_rss_bytes;
    report.rows.push_back(row);
  }
  return report;
}

std::string ComparisonReport::to_csv() const {
  std::string out =
      "connections,latency_ratio,throughput_ratio,cpu_delta_pct,rss_delta_bytes\n";
  for (const auto& row : rows) {
    out += std::to_string(row.connections) + "," + fmt(row.latency_ratio) + "," +
           fmt(row.throughput_ratio) + "," + fmt(row.cpu_delta_pct) + "," +
           std::to_string(row.rss_delta_bytes) + "\n";
  }
  return out;
}

std::string ComparisonReport::to_table(const LabeledSide& a, const LabeledSide& b) const {
  std::ostringstream out;
  out << "Comparison: " << label_b << " vs " << label_a << " (ratios are " << label_b << "/"
      << label_a << ")\n\n";
  out << "Conns | p50 " << label_a << " (ms) | p50 " << label_b
      << " (ms) | Latency ratio | Thpt ratio | CPU delta (%) | RSS delta (MB)\n";
  out << "------|---------------|---------------|---------------|------------|---------------|--------------\n";
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    out << row.connections << " | " << fmt(a.levels[i].result.p50_ms) << " | "
        << fmt(b.levels[i].result.p50_ms) << " | " << fmt(row.latency_ratio) << " | "
        << fmt(row.throughput_ratio) << " | " << fmt(row.cpu_delta_pct, 1) << " | "
        << fmt(static_cast<double>(row.rss_delta_bytes) / (1024.0 * 1024.0), 1) << "\n";
  }

  auto peak_mb = [](const LabeledSide& side) {
    long long peak = 0;
    for (const auto& level : side.levels) peak = std::max(peak, level.peak_rss_bytes);
    return static_cast<double>(peak) / (1024.0 * 1024.0);
  };
  out << "\nStack | Size(MB)\n";
  out << "------|---------\n";
  out << label_a << " | " << fmt(peak_mb(a), 1) << "\n";
  out << label_b << " | " << fmt(peak_mb(b), 1) << "\n";
  return out.str();
}

LevelMetrics level_metrics(const LevelRun& run) {
  LevelMetrics out;
  out.connections = run.connections;
  const RepetitionMetrics& median = run.reps.at(run.median_index);
  out.result = median.result;
  out.mean_cpu_pct = median.mean_cpu_pct;
  out.peak_rss_bytes = median.peak_rss_bytes;
  return out;
}

std::string bench_csv(const std::vector<LevelRun>& sweep) {
  std::string out =
      "connections,repetition,completed,failed,p50_ms,p90_ms,p99_ms,max_ms,throughput_rps,"
      "mean_cpu_pct,peak_rss_bytes\n";
  auto row = [&](int connections, const std::string& rep, const RepetitionMetrics& m) {
    out += std::to_string(connections) + "," + rep + "," + std::to_string(m.result.completed) +
           "," + std::to_string(m.result.total_failed()) + "," + fmt(m.result.p50_ms) + "," +
           fmt(m.result.p90_ms) + "," + fmt(m.result.p99_ms) + "," + fmt(m.result.max_ms) + "," +
           fmt(m.result.throughput_rps) + "," + fmt(m.mean_cpu_pct) + "," +
           std::to_string(m.peak_rss_bytes) + "\n";
  };
  for (const auto& level : sweep) {
    for (size_t i = 0; i < level.reps.size(); ++i) {
      row(level.connections, std::to_string(i + 1), level.reps[i]);
    }
    row(level.connections, "median", level.reps.at(level.median_index));
  }
  return out;
}

LabeledSide parse_bench_csv(const std::string& csv_text, const std::string& label) {
  LabeledSide side;
  side.label = label;
  std::istringstream in(csv_text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      continue;
    }
    if (trim(line).empty()) continue;
    auto cols = split(line, ',');
    if (cols.size() != 11) {
      throw std::runtime_error("bench CSV row must have 11 columns: " + line);
    }
    if (cols[1] != "median") continue;
    LevelMetrics level;
    level.connections = static_cast<int>(std::stoll(cols[0]));
    level.result.completed = std::stoll(cols[2]);
    if (long long f = std::stoll(cols[3]); f > 0) level.result.failed["total"] = f;
    level.result.p50_ms = std::stod(cols[4]);
    level.result.p90_ms = std::stod(cols[5]);
    level.result.p99_ms = std::stod(cols[6]);
    level.result.max_ms = std::stod(cols[7]);
    level.result.throughput_rps = std::stod(cols[8]);
    level.mean_cpu_pct = std::stod(cols[9]);
    level.peak_rss_bytes = std::stoll(cols[10]);
    side.levels.push_back(level);
  }
  if (side.levels.empty()) throw std::runtime_error("bench CSV has no median rows");
  return side;
}

}  // namespace nbgate::bench
