#ifndef NBGATE_BENCH_HPP
#define NBGATE_BENCH_HPP

#include <atomic>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <sys/types.h>

namespace nbgate::bench {

class EmptySamples : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TargetUnreachable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MismatchedSweep : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadSpec {
  std::string target_url;
  int connections = 1;
  std::optional<double> duration_s;        // exactly one of duration_s /
  std::optional<long long> total_requests; // total_requests must be set
  double warmup_s = 3.0;
  int repetitions = 3;
};

struct BenchResult {
  LoadSpec spec;
  long long completed = 0;
  std::map<std::string, long long> failed;  // by error class
  double wall_time_s = 0.0;
  std::vector<double> latencies_ms;  // post-warmup, unsorted
  double p50_ms = 0.0;
  double p90_ms = 0.0;
  double p99_ms = 0.0;
  double max_ms = 0.0;
  double throughput_rps = 0.0;

  long long total_failed() const;
};

// Nearest-rank percentile: ascending sample at 1-based index ceil(p/100 * n).
double percentile(std::vector<double> samples, double p);

// One closed-loop run: exactly spec.connections request loops, warmup excluded.
// Throws TargetUnreachable when the target fails a pre-flight probe.
BenchResult run_load_once(const LoadSpec& spec);

// All repetitions, in execution order.
std::vector<BenchResult> run_load_all(const LoadSpec& spec);

// The repetition with median throughput.
BenchResult run_load(const LoadSpec& spec);

struct ResourceSample {
  double t = 0.0;            // seconds, monotonic
  double cpu_percent = 0.0;  // 0..100 x cores
  long long rss_bytes = 0;
};

// Samples /proc/<pid> CPU and RSS every `interval_ms` until `stop` is set or
// the process vanishes (partial data returned).
std::vector<ResourceSample> sample_resources(pid_t pid, long interval_ms,
                                             const std::atomic<bool>& stop);

// Runs sample_resources on a background thread.
class ResourceSampler {
 public:
  void start(pid_t pid, long interval_ms = 100);
  std::vector<ResourceSample> stop();
  ~ResourceSampler();

 private:
  std::atomic<bool> stop_{false};
  std::vector<ResourceSample> samples_;
  std::thread thread_;
  bool running_ = false;
};

double mean_cpu_percent(const std::vector<ResourceSample>& samples);
long long peak_rss_bytes(const std::vector<ResourceSample>& samples);

// One connection level of one labeled side: the median-throughput run plus
// resource readings taken during it.
struct LevelMetrics {
  int connections = 0;
  BenchResult result;
  double mean_cpu_pct = 0.0;
  long long peak_rss_bytes = 0;
};

struct LabeledSide {
  std::string label;
  std::vector<LevelMetrics> levels;
};

struct ComparisonRow {
  int connections = 0;
  double latency_ratio = 0.0;     // b.p50 / a.p50
  double throughput_ratio = 0.0;  // b.throughput / a.throughput
  double cpu_delta_pct = 0.0;     // b.mean_cpu - a.mean_cpu
  long long rss_delta_bytes = 0;  // b.peak_rss - a.peak_rss
};

struct ComparisonReport {
  std::string label_a;
  std::string label_b;
  std::vector<ComparisonRow> rows;

  std::string to_csv() const;
  // Human-readable tables, including a "Stack | Size(MB)" peak-memory table.
  std::string to_table(const LabeledSide& a, const LabeledSide& b) const;
};

// Both sides must cover the same connection sweep; throws MismatchedSweep.
ComparisonReport compare_report(const LabeledSide& a, const LabeledSide& b);

struct RepetitionMetrics {
  BenchResult result;
  double mean_cpu_pct = 0.0;
  long long peak_rss_bytes = 0;
};

struct LevelRun {
  int connections = 0;
  std::vector<RepetitionMetrics> reps;
  size_t median_index = 0;  // repetition with median throughput
};

size_t median_throughput_index(const std::vector<BenchResult>& runs);

LevelMetrics level_metrics(const LevelRun& run);

// Bench CSV: one row per (level, repetition) plus a median summary row per
// level. Columns: connections,repetition,completed,failed,p50_ms,p90_ms,
// p99_ms,max_ms,throughput_rps,mean_cpu_pct,peak_rss_bytes
std::string bench_csv(const std::vector<LevelRun>& sweep);

// Reads the median summary rows back from a bench CSV.
LabeledSide parse_bench_csv(const std::string& csv_text, const std::string& label);

}  // namespace nbgate::bench

#endif
