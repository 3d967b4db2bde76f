#include <sika/cli.hpp>

#include <sika/errors.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace sika::cli {

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

std::vector<BenchRow> run_bench(const BenchOptions &o) {
  if (o.levels.empty() || o.batch < 1 || o.dims < 1 || o.out_dim < 1 || o.samples < 1 ||
      o.warmup < 0 || o.repeats < 1 || o.threads < 1) {
    throw ParameterError("bench: levels must be nonempty and sizes, samples, repeats positive");
  }
  for (int L : o.levels) {
    if (L < 1 || L > kMaxLevel) {
      throw ParameterError("bench: level " + std::to_string(L) + " is out of range");
    }
  }

  Rng rng(o.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<BenchRow> rows;
  for (int L : o.levels) {
    const VariationalLayer layer = init_layer({o.dims, o.out_dim, L, o.theta}, rng);
    const Eigen::MatrixXd X =
        Eigen::MatrixXd::NullaryExpr(o.batch, o.dims, [&] { return unit(rng); });

    for (const std::string path : {"dense", "sparse"}) {
      const bool dense = path == "dense";
      OpCounter counter;
      // S Monte Carlo forward passes with fresh weight noise
      auto run = [&](OpCounter *c) {
        const ForwardOptions options{o.threads, c};
        for (int s = 0; s < o.samples; ++s) {
          if (dense) {
            forward_dense(layer, X, ForwardMode::sample, rng, options);
          } else {
            forward_sparse(layer, X, ForwardMode::sample, rng, nullptr, options);
          }
        }
      };
      for (int w = 0; w < o.warmup; ++w) {
        run(nullptr);
      }
      std::vector<double> times;
      for (int r = 0; r < o.repeats; ++r) {
        const auto start = std::chrono::steady_clock::now();
        run(r == 0 ? &counter : nullptr);
        times.push_back(
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
      }
      rows.push_back({L, path, o.batch, o.dims, o.samples, median(times), counter.multiply_adds});
    }
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow> &rows) {
  std::ostringstream out;
  out << kBenchHeader << '\n';
  char buf[64];
  for (const auto &r : rows) {
    std::snprintf(buf, sizeof buf, "%.4f", r.median_ms);
    out << r.level << ',' << r.path << ',' << r.batch << ',' << r.dims << ',' << r.samples << ','
        << buf << ',' << r.madd_count << '\n';
  }
  return out.str();
}

int cmd_bench(const BenchOptions &options, const std::optional<std::filesystem::path> &out_csv,
              std::ostream &log) {
  const auto start = std::chrono::steady_clock::now();
  const auto rows = run_bench(options);
  const std::string csv = bench_csv(rows);
  if (out_csv) {
    if (out_csv->has_parent_path()) {
      std::filesystem::create_directories(out_csv->parent_path());
    }
    write_file_atomic(*out_csv, csv);
    nlohmann::json config = {{"levels", options.levels},   {"batch", options.batch},
                             {"dims", options.dims},       {"out_dim", options.out_dim},
                             {"samples", options.samples}, {"warmup", options.warmup},
                             {"repeats", options.repeats}, {"threads", options.threads},
                             {"theta", options.theta},     {"seed", options.seed}};
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_run_metadata(out_csv->has_parent_path() ? out_csv->parent_path() : ".", "bench", config,
                       wall);
  }
  log << csv;
  return 0;
}

} // namespace sika::cli
