#pragma once

// Seeded experiment harness: scenario cells x seeds x methods, per-run
// records, summaries and the CSV/SVG writers used by the CLI.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "fedcsa/core.hpp"
#include "fedcsa/data.hpp"
#include "fedcsa/pipeline.hpp"
#include "fedcsa/random.hpp"

namespace fedcsa {

struct RunRecord {
  std::string scenario;
  std::string method;
  std::uint64_t seed = 0;
  double mae = 0.0;
  double theta = 0.0;
  std::int64_t wall_ms = 0;
};

struct SummaryRow {
  std::string scenario;
  std::string method;
  double mean = 0.0;
  double stderr_ = 0.0;  // sample sd / sqrt(runs); 0 for a single run
  double worst = 0.0;
  std::size_t runs = 0;
};

struct Case1Cell {
  Index n_target = 20;
  Index n_1 = 30;
  Index n_2 = 20;

  std::string label() const {
    return "case1_nT" + std::to_string(n_target) + "_n" + std::to_string(n_1) + "_n" + std::to_string(n_2);
  }
};

/// The fifteen (n_T, n_1, n_2) rows of the Case 1 table.
inline std::vector<Case1Cell> case1_table_cells() {
  std::vector<Case1Cell> cells;
  for (Index n_target : {20, 30, 40}) {
    for (Index step = 0; step < 5; ++step) {
      const Index n_1 = n_target + 10 + 10 * step;
      cells.push_back({n_target, n_1, n_1 - 10});
    }
  }
  return cells;
}

inline std::vector<double> case2_default_shifts() {
  std::vector<double> c;
  for (int i = 0; i <= 8; ++i) c.push_back(1.0 + 0.5 * i);
  return c;
}

inline std::string format_number(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw InvalidArgument("cannot format number");
  return std::string(buf, end);
}

inline std::string case2_label(double c) { return "case2_c" + format_number(c); }

struct ExperimentConfig {
  int seeds = 100;
  std::uint64_t master_seed = 2023;
  Index test_rows = kDefaultTestRows;
  int threads = 1;
  // Record per-run wall time. Off by default so that outputs stay byte-identical.
  bool timing = false;
  RunSettings settings;
  std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
};

/// Seed of run `seed` in `scenario`; seeds are numbered from 1.
inline std::uint64_t run_seed(std::uint64_t master_seed, const std::string& scenario, std::uint64_t seed) {
  return derive_seed(derive_seed(master_seed, scenario), seed);
}

/// Orders by (scenario, method, seed).
inline void sort_records(std::vector<RunRecord>& records) {
  std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
    return std::tie(a.scenario, a.method, a.seed) < std::tie(b.scenario, b.method, b.seed);
  });
}

namespace detail {

/// Runs job(i) for i in [0, count) on up to `threads` workers.
inline void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& job) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, count); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

/// One simulation cell: a label and a generator from run seed to scenario.
struct SimulationCell {
  std::string scenario;
  std::function<Scenario(std::uint64_t)> generate;
};

inline std::vector<RunRecord> run_simulation(const std::vector<SimulationCell>& cells, const ExperimentConfig& config) {
  detail::require(config.seeds >= 1, "seeds must be >= 1");
  detail::require(!config.methods.empty(), "at least one method is required");
  struct Job {
    std::size_t cell;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (int s = 1; s <= config.seeds; ++s) jobs.push_back({c, static_cast<std::uint64_t>(s)});
  }
  std::vector<std::vector<RunRecord>> out(jobs.size());
  detail::parallel_for(jobs.size(), config.threads, [&](std::size_t i) {
    const auto& cell = cells[jobs[i].cell];
    const std::uint64_t seed = run_seed(config.master_seed, cell.scenario, jobs[i].seed);
    const Scenario scenario = cell.generate(seed);
    for (Method m : config.methods) {
      const auto start = std::chrono::steady_clock::now();
      const MethodResult r = MethodEvaluator::run(m, scenario.sources, scenario.target, scenario.test,
                                                  config.settings, seed);
      const auto elapsed = std::chrono::steady_clock::now() - start;
      RunRecord rec{cell.scenario, r.method, jobs[i].seed, r.test_mae, r.chosen_theta.value(), 0};
      if (config.timing) rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
      out[i].push_back(std::move(rec));
    }
  });
  std::vector<RunRecord> records;
  for (auto& v : out) records.insert(records.end(), v.begin(), v.end());
  sort_records(records);
  return records;
}

inline std::vector<SimulationCell> case1_cells(const std::vector<Case1Cell>& grid, Index test_rows) {
  std::vector<SimulationCell> cells;
  for (const auto& g : grid) {
    cells.push_back({g.label(), [g, test_rows](std::uint64_t seed) {
                       return gen_case1(g.n_target, g.n_1, g.n_2, seed, test_rows);
                     }});
  }
  return cells;
}

inline std::vector<SimulationCell> case2_cells(const std::vector<double>& shifts, Index test_rows) {
  std::vector<SimulationCell> cells;
  for (double c : shifts) {
    cells.push_back({case2_label(c), [c, test_rows](std::uint64_t seed) { return gen_case2(c, seed, test_rows); }});
  }
  return cells;
}

struct RealDataConfig {
  int target_subject = 1;
  double train_fraction = 0.7;
  std::vector<Learner> learners{Learner::Ridge, Learner::FlattenedWls};
};

inline std::string real_label(int target_subject, Learner learner) {
  return "real_subject" + std::to_string(target_subject) + "_" + std::string(learner_name(learner));
}

/// Target subject vs. every other subject as a source; 7:3 target split per seed.
inline std::vector<RunRecord> run_real(const std::vector<ParkinsonsSubject>& subjects, const RealDataConfig& real,
                                       const ExperimentConfig& config) {
  detail::require(config.seeds >= 1, "seeds must be >= 1");
  const ParkinsonsSubject* target = nullptr;
  std::vector<LabeledDataset> sources;
  for (const auto& s : subjects) {
    if (s.subject_id == real.target_subject) {
      target = &s;
    } else {
      sources.push_back(s.data);
    }
  }
  if (!target) throw InvalidArgument("target subject " + std::to_string(real.target_subject) + " not in data");
  if (sources.empty()) throw InvalidArgument("real-data run needs at least one source subject");

  struct Job {
    Learner learner;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (Learner l : real.learners) {
    for (int s = 1; s <= config.seeds; ++s) jobs.push_back({l, static_cast<std::uint64_t>(s)});
  }
  std::vector<std::vector<RunRecord>> out(jobs.size());
  detail::parallel_for(jobs.size(), config.threads, [&](std::size_t i) {
    const std::string scenario = real_label(real.target_subject, jobs[i].learner);
    const std::uint64_t seed = run_seed(config.master_seed, "real_subject" + std::to_string(real.target_subject),
                                        jobs[i].seed);
    auto [train, test] = train_test_split(target->data, real.train_fraction, derive_seed(seed, "target_split"));
    const TargetDomain target_train = make_target(std::move(train));
    const TargetDomain target_test = make_target(std::move(test));
    RunSettings settings = config.settings;
    settings.learner = jobs[i].learner;
    for (Method m : config.methods) {
      const auto start = std::chrono::steady_clock::now();
      const MethodResult r = MethodEvaluator::run(m, sources, target_train, target_test, settings, seed);
      const auto elapsed = std::chrono::steady_clock::now() - start;
      RunRecord rec{scenario, r.method, jobs[i].seed, r.test_mae, r.chosen_theta.value(), 0};
      if (config.timing) rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
      out[i].push_back(std::move(rec));
    }
  });
  std::vector<RunRecord> records;
  for (auto& v : out) records.insert(records.end(), v.begin(), v.end());
  sort_records(records);
  return records;
}

/// Mean, standard error and worst (max) MAE per (scenario, method).
inline std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records) {
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const auto& r : records) groups[{r.scenario, r.method}].push_back(r.mae);
  std::vector<SummaryRow> rows;
  for (const auto& [key, values] : groups) {
    SummaryRow row;
    row.scenario = key.first;
    row.method = key.second;
    row.runs = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    row.mean = sum / static_cast<double>(values.size());
    row.worst = *std::max_element(values.begin(), values.end());
    if (values.size() > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - row.mean) * (v - row.mean);
      const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
      row.stderr_ = sd / std::sqrt(static_cast<double>(values.size()));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline const SummaryRow* find_summary(const std::vector<SummaryRow>& rows, const std::string& scenario,
                                      const std::string& method) {
  for (const auto& r : rows) {
    if (r.scenario == scenario && r.method == method) return &r;
  }
  return nullptr;
}

// -- CSV ---------------------------------------------------------------------

inline std::string runs_csv(const std::vector<RunRecord>& records) {
  std::string out = "scenario,method,seed,mae,theta,wall_ms\n";
  for (const auto& r : records) {
    out += r.scenario + "," + r.method + "," + std::to_string(r.seed) + "," + format_number(r.mae) + "," +
           format_number(r.theta) + "," + std::to_string(r.wall_ms) + "\n";
  }
  return out;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "scenario,method,mean,stderr,worst\n";
  for (const auto& r : rows) {
    out += r.scenario + "," + r.method + "," + format_number(r.mean) + "," + format_number(r.stderr_) + "," +
           format_number(r.worst) + "\n";
  }
  return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open '" + path.string() + "' for writing");
  out << contents;
  if (!out) throw InvalidArgument("failed writing '" + path.string() + "'");
}

// -- SVG ---------------------------------------------------------------------

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;  // optional half-widths, drawn as bars
};

/// Minimal line chart: axes with ticks, one polyline per series, legend.
inline std::string line_plot_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                                 const std::vector<PlotSeries>& series, std::optional<double> reference_y = {}) {
  constexpr double width = 640, height = 420, left = 70, right = 150, top = 40, bottom = 60;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  double x_min = INFINITY, x_max = -INFINITY, y_min = INFINITY, y_max = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double e = i < s.err.size() ? s.err[i] : 0.0;
      x_min = std::min(x_min, s.x[i]);
      x_max = std::max(x_max, s.x[i]);
      y_min = std::min(y_min, s.y[i] - e);
      y_max = std::max(y_max, s.y[i] + e);
    }
  }
  if (reference_y) {
    y_min = std::min(y_min, *reference_y);
    y_max = std::max(y_max, *reference_y);
  }
  if (!std::isfinite(x_min)) x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  if (x_max == x_min) x_max = x_min + 1;
  if (y_max == y_min) y_max = y_min + 1;
  const double pad = 0.05 * (y_max - y_min);
  y_min -= pad;
  y_max += pad;
  const double pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double x) { return left + (x - x_min) / (x_max - x_min) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y_min) / (y_max - y_min)) * ph; };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title
      << "</text>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double xv = x_min + (x_max - x_min) * t / 5.0;
    const double yv = y_min + (y_max - y_min) * t / 5.0;
    svg << "<line x1=\"" << px(xv) << "\" y1=\"" << top + ph << "\" x2=\"" << px(xv) << "\" y2=\"" << top + ph + 5
        << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << num(xv)
        << "</text>\n";
    svg << "<line x1=\"" << left - 5 << "\" y1=\"" << py(yv) << "\" x2=\"" << left << "\" y2=\"" << py(yv)
        << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << left - 8 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << num(yv)
        << "</text>\n";
  }
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 15 << "\" text-anchor=\"middle\">" << x_label
      << "</text>\n";
  svg << "<text x=\"18\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << top + ph / 2 << ")\">" << y_label << "</text>\n";
  if (reference_y) {
    svg << "<line x1=\"" << left << "\" y1=\"" << py(*reference_y) << "\" x2=\"" << left + pw << "\" y2=\""
        << py(*reference_y) << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = colors[k % std::size(colors)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) svg << (i ? " " : "") << px(s.x[i]) << "," << py(s.y[i]);
    svg << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      svg << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
      if (i < s.err.size() && s.err[i] > 0.0) {
        svg << "<line x1=\"" << px(s.x[i]) << "\" y1=\"" << py(s.y[i] - s.err[i]) << "\" x2=\"" << px(s.x[i])
            << "\" y2=\"" << py(s.y[i] + s.err[i]) << "\" stroke=\"" << color << "\"/>\n";
      }
    }
    const double ly = top + 10 + 20.0 * static_cast<double>(k);
    svg << "<line x1=\"" << left + pw + 15 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 40 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << left + pw + 45 << "\" y=\"" << ly + 4 << "\">" << s.name << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

/// Mean MAE against c for each method, with approximate 95% intervals.
inline std::string case2_means_svg(const std::vector<SummaryRow>& rows, const std::vector<double>& shifts,
                                   const std::vector<Method>& methods) {
  std::vector<PlotSeries> series;
  for (Method m : methods) {
    PlotSeries s{std::string(method_name(m)), {}, {}, {}};
    for (double c : shifts) {
      if (const auto* r = find_summary(rows, case2_label(c), s.name)) {
        s.x.push_back(c);
        s.y.push_back(r->mean);
        s.err.push_back(1.96 * r->stderr_);
      }
    }
    series.push_back(std::move(s));
  }
  return line_plot_svg("Case 2: mean MAE", "c", "mean MAE", series);
}

/// mean MAE(FedIW) / mean MAE(FedDA) against c.
inline std::vector<std::pair<double, double>> case2_ratio_curve(const std::vector<SummaryRow>& rows,
                                                                const std::vector<double>& shifts) {
  std::vector<std::pair<double, double>> curve;
  for (double c : shifts) {
    const auto* iw = find_summary(rows, case2_label(c), "FedIW");
    const auto* da = find_summary(rows, case2_label(c), "FedDA");
    if (iw && da && da->mean > 0.0) curve.emplace_back(c, iw->mean / da->mean);
  }
  return curve;
}

inline std::string case2_ratio_svg(const std::vector<SummaryRow>& rows, const std::vector<double>& shifts) {
  PlotSeries s{"FedIW / FedDA", {}, {}, {}};
  for (const auto& [c, ratio] : case2_ratio_curve(rows, shifts)) {
    s.x.push_back(c);
    s.y.push_back(ratio);
  }
  return line_plot_svg("Case 2: FedIW / FedDA mean MAE", "c", "ratio", {s}, 1.0);
}

}  // namespace fedcsa
