#pragma once

// Scaling experiment: the first g trips of a chronologically sorted corpus,
// split 80/20 in time, for every (group, model, scheme), reporting training
// time, aggregate prediction time and accuracy.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <future>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bustime/csv.hpp"
#include "bustime/evalsim.hpp"
#include "bustime/registry.hpp"

namespace bustime::bench {

struct BenchPlan {
  std::vector<std::size_t> group_sizes{500, 1000, 1500, 2000, 2500, 3000, 3500, 4000};
  bool include_all = true;  // one more group holding the whole corpus
  double split_fraction = 0.8;
  std::vector<std::string> models{"delay", "knn", "kr", "bam", "lstm"};
  std::vector<Scheme> schemes{Scheme::kStopBased, Scheme::kDistanceBased};
  ModelParams params;
  std::map<std::size_t, std::size_t> lstm_groups{{1000, 600}, {3000, 300}};  // group size -> epochs
  bool parallel_groups = false;
  bool warm_up = true;
  AccuracyMode accuracy_mode = AccuracyMode::kPerEstimate;

  /// Small plan for a desk-scale corpus of a few hundred trips.
  static BenchPlan reduced() {
    BenchPlan p;
    p.group_sizes = {100, 200, 300};
    p.lstm_groups = {{200, 100}};
    p.params.lstm.hidden = 16;
    return p;
  }

  void validate() const {
    if (group_sizes.empty() && !include_all) throw Error(ErrorCode::kInvalidConfig, "plan has no groups");
    for (std::size_t i = 0; i < group_sizes.size(); ++i)
      if (group_sizes[i] == 0 || (i > 0 && group_sizes[i] <= group_sizes[i - 1]))
        throw Error(ErrorCode::kInvalidConfig, "group sizes must be positive and increasing");
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
      throw Error(ErrorCode::kInvalidConfig, "split fraction must lie in (0, 1)");
    if (models.empty() || schemes.empty()) throw Error(ErrorCode::kInvalidConfig, "plan needs models and schemes");
    params.bam.validate();
    params.lstm.validate();
  }

  /// Applies one `key = value` setting.
  void set(const std::string& key, const std::string& value) {
    auto bad = [&](const std::string& why) {
      return Error(ErrorCode::kInvalidConfig, "plan key '" + key + "': " + why + " (got '" + value + "')");
    };
    auto list = [&] {
      std::vector<std::string> items;
      for (auto& s : csv::split_line(value)) {
        const auto t = std::string(csv::trim(s));
        if (!t.empty()) items.push_back(t);
      }
      return items;
    };
    auto count = [&](const std::string& s) {
      const auto v = csv::parse_int(s);
      if (!v || *v < 0) throw bad("expected a non-negative integer");
      return static_cast<std::size_t>(*v);
    };
    auto real = [&](const std::string& s) {
      const auto v = csv::parse_double(s);
      if (!v) throw bad("expected a number");
      return *v;
    };
    auto flag = [&] {
      if (value == "true" || value == "1" || value == "yes") return true;
      if (value == "false" || value == "0" || value == "no") return false;
      throw bad("expected true or false");
    };

    if (key == "groups") {
      group_sizes.clear();
      include_all = false;
      for (const auto& item : list()) {
        if (item == "all") include_all = true;
        else group_sizes.push_back(count(item));
      }
    } else if (key == "split") {
      split_fraction = real(value);
    } else if (key == "models") {
      models = list();
    } else if (key == "schemes") {
      schemes.clear();
      for (const auto& item : list()) {
        const auto s = parse_scheme(item);
        if (!s) throw bad("unknown scheme '" + item + "'");
        schemes.push_back(*s);
      }
    } else if (key == "k") {
      params.k = count(value);
    } else if (key == "bandwidth") {
      if (value == "median") params.bandwidth.reset();
      else params.bandwidth = real(value);
    } else if (key == "bam_knots") {
      params.bam.interior_knots = count(value);
    } else if (key == "bam_lambda") {
      params.bam.lambda = real(value);
    } else if (key == "lstm_hidden") {
      params.lstm.hidden = count(value);
    } else if (key == "lstm_lr") {
      params.lstm.learning_rate = real(value);
    } else if (key == "lstm_groups") {
      lstm_groups.clear();
      for (const auto& item : list()) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw bad("expected size:epochs pairs");
        lstm_groups[count(item.substr(0, colon))] = count(item.substr(colon + 1));
      }
    } else if (key == "seed") {
      params.lstm.seed = count(value);
    } else if (key == "parallel_groups") {
      parallel_groups = flag();
    } else if (key == "warm_up") {
      warm_up = flag();
    } else if (key == "accuracy_mode") {
      if (value == "per_estimate") accuracy_mode = AccuracyMode::kPerEstimate;
      else if (value == "first_query_only") accuracy_mode = AccuracyMode::kFirstQueryOnly;
      else throw bad("expected per_estimate or first_query_only");
    } else {
      throw Error(ErrorCode::kInvalidConfig, "unknown plan key '" + key + "'");
    }
  }

  /// Line-based `key = value` file; '#' starts a comment. Keys not given
  /// keep the values already in `base`.
  static BenchPlan parse(const std::filesystem::path& path) { return parse(path, BenchPlan{}); }

  static BenchPlan parse(const std::filesystem::path& path, BenchPlan base) {
    const auto lines = csv::read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      std::string_view line = lines[i];
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = csv::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      const auto where = path.string() + ":" + std::to_string(i + 1);
      if (eq == std::string_view::npos) throw Error(ErrorCode::kInvalidConfig, where + ": expected key = value");
      try {
        base.set(std::string(csv::trim(line.substr(0, eq))), std::string(csv::trim(line.substr(eq + 1))));
      } catch (const Error& e) {
        throw Error(e.code(), where + ": " + e.what());
      }
    }
    base.validate();
    return base;
  }

  std::string describe() const {
    std::ostringstream s;
    s << "groups=";
    for (std::size_t i = 0; i < group_sizes.size(); ++i) s << (i ? "," : "") << group_sizes[i];
    if (include_all) s << (group_sizes.empty() ? "" : ",") << "all";
    s << " split=" << split_fraction << " models=";
    for (std::size_t i = 0; i < models.size(); ++i) s << (i ? "," : "") << models[i];
    s << " schemes=";
    for (std::size_t i = 0; i < schemes.size(); ++i) s << (i ? "," : "") << to_string(schemes[i]);
    s << " k=" << params.k << " bandwidth=" << (params.bandwidth ? std::to_string(*params.bandwidth) : "median")
      << " bam_knots=" << params.bam.interior_knots << " bam_lambda=" << params.bam.lambda
      << " lstm_hidden=" << params.lstm.hidden << " lstm_lr=" << params.lstm.learning_rate
      << " seed=" << params.lstm.seed << " lstm_groups=";
    bool first = true;
    for (const auto& [g, e] : lstm_groups) {
      s << (first ? "" : ",") << g << ':' << e;
      first = false;
    }
    s << " parallel_groups=" << (parallel_groups ? "true" : "false")
      << " warm_up=" << (warm_up ? "true" : "false") << " accuracy_mode="
      << (accuracy_mode == AccuracyMode::kPerEstimate ? "per_estimate" : "first_query_only");
    return s.str();
  }
};

/// Aligned trips of one scheme, sorted by departure epoch.
struct SchemeCorpus {
  std::vector<double> anchor_distances;
  std::vector<AlignedTrip> trips;
};

using BenchCorpus = std::map<Scheme, SchemeCorpus>;

/// Builds a model for one cell. `test` is passed so that evaluation-only
/// pseudo-models (an oracle) can be benchmarked through the same path.
using ModelFactory =
    std::function<std::unique_ptr<Predictor>(const TrainingSet& train, std::span<const AlignedTrip> test)>;

struct BenchRow {
  std::string group_label;  // requested size, or "all"
  std::size_t group_requested = 0;
  std::size_t group = 0;  // trips actually used
  bool clamped = false;   // requested more trips than the corpus holds
  std::size_t train = 0;
  std::size_t test = 0;
  std::string model;
  Scheme scheme = Scheme::kStopBased;
  std::string status = "ok";
  double train_s = NAN;
  double predict_s = NAN;
  AccuracyReport accuracy{NAN, NAN, NAN, 0};

  bool ok() const { return status == "ok"; }
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<std::string> group_labels;  // in plan order
  std::vector<std::string> models;        // in plan order
};

inline std::size_t train_count(std::size_t group, double fraction) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(group) * fraction + 1e-9));
}

namespace detail {

struct Group {
  std::string label;
  std::size_t requested;
  std::size_t size;
  bool clamped;
};

inline ModelFactory builtin_factory(ModelKind kind, ModelParams params) {
  return [kind, params](const TrainingSet& ts, std::span<const AlignedTrip>) { return train_model(kind, ts, params); };
}

inline std::vector<BenchRow> run_group(const BenchPlan& plan, const BenchCorpus& corpus, const Group& g,
                                       const std::map<std::string, ModelFactory>& extra) {
  std::vector<BenchRow> rows;
  for (const auto& name : plan.models) {
    const auto kind = parse_model_kind(name);
    ModelParams params = plan.params;
    if (kind == ModelKind::kLstm) {
      const auto it = plan.lstm_groups.find(g.requested);
      if (it == plan.lstm_groups.end()) continue;  // LSTM runs only where the plan asks
      params.lstm.epochs = it->second;
    }
    for (const auto scheme : plan.schemes) {
      BenchRow row;
      row.group_label = g.label;
      row.group_requested = g.requested;
      row.group = g.size;
      row.clamped = g.clamped;
      row.model = name;
      row.scheme = scheme;
      row.train = train_count(g.size, plan.split_fraction);
      row.test = g.size - row.train;
      try {
        const auto c = corpus.find(scheme);
        if (c == corpus.end()) throw Error(ErrorCode::kInvalidArgument, "no corpus for scheme " +
                                                                            std::string(to_string(scheme)));
        if (row.train == 0 || row.test == 0)
          throw Error(ErrorCode::kInvalidArgument, "group of " + std::to_string(g.size) +
                                                       " trips leaves an empty train or test split");
        ModelFactory factory;
        if (kind) factory = builtin_factory(*kind, params);
        else if (const auto e = extra.find(name); e != extra.end()) factory = e->second;
        else throw Error(ErrorCode::kInvalidConfig, "unknown model '" + name + "'");

        const std::span<const AlignedTrip> all(c->second.trips.data(), g.size);
        const auto train_trips = all.first(row.train);
        const auto test_trips = all.subspan(row.train);
        const TrainingSet ts{c->second.anchor_distances, {train_trips.begin(), train_trips.end()}};
        const auto trained = time_train([&] { return factory(ts, test_trips); });
        const auto predicted = time_predict(*trained.value, test_trips, plan.warm_up);
        row.train_s = trained.seconds;
        row.predict_s = predicted.seconds;
        row.accuracy = accuracy(predicted.value, plan.accuracy_mode);
      } catch (const std::exception& e) {
        row.status = std::string("failed: ") + e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace detail

/// Runs every (group, model, scheme) cell. Cell failures are recorded in
/// the row status and the run continues. Groups larger than the corpus
/// are clamped to it and flagged.
inline BenchReport run_bench(const BenchPlan& plan, const BenchCorpus& corpus,
                             const std::map<std::string, ModelFactory>& extra = {}) {
  plan.validate();
  std::size_t available = std::numeric_limits<std::size_t>::max();
  for (const auto scheme : plan.schemes) {
    const auto c = corpus.find(scheme);
    available = std::min<std::size_t>(available, c == corpus.end() ? 0 : c->second.trips.size());
  }
  if (available == 0) throw Error(ErrorCode::kEmptyInput, "bench corpus has no trips");

  std::vector<detail::Group> groups;
  for (auto g : plan.group_sizes) groups.push_back({std::to_string(g), g, std::min(g, available), g > available});
  if (plan.include_all) groups.push_back({"all", available, available, false});

  BenchReport report;
  report.models = plan.models;
  for (const auto& g : groups) report.group_labels.push_back(g.label);

  std::vector<std::vector<BenchRow>> per_group(groups.size());
  if (plan.parallel_groups) {
    std::vector<std::future<std::vector<BenchRow>>> jobs;
    for (const auto& g : groups)
      jobs.push_back(std::async(std::launch::async, [&, g] { return detail::run_group(plan, corpus, g, extra); }));
    for (std::size_t i = 0; i < jobs.size(); ++i) per_group[i] = jobs[i].get();
  } else {
    for (std::size_t i = 0; i < groups.size(); ++i) per_group[i] = detail::run_group(plan, corpus, groups[i], extra);
  }
  for (auto& rows : per_group)
    for (auto& r : rows) report.rows.push_back(std::move(r));
  return report;
}

/// Writes train_time.csv, predict_time.csv, mae.csv, rmse.csv, mape.csv
/// (one row per group, one "stop/distance" cell per model) and report.csv
/// (one row per cell). With `include_timing` false the timing tables are
/// skipped and report.csv carries no timing columns, so two runs can be
/// compared byte for byte.
inline void emit_tables(const BenchReport& report, const std::filesystem::path& dir, bool include_timing = true) {
  if (report.rows.empty()) throw Error(ErrorCode::kEmptyRecords, "bench report is empty");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw Error(ErrorCode::kUnwritableDirectory, "cannot create " + dir.string());

  auto find = [&](const std::string& group, const std::string& model, Scheme s) -> const BenchRow* {
    for (const auto& r : report.rows)
      if (r.group_label == group && r.model == model && r.scheme == s) return &r;
    return nullptr;
  };
  auto group_size = [&](const std::string& label) {
    for (const auto& r : report.rows)
      if (r.group_label == label) return r.group;
    return std::size_t{0};
  };

  struct Metric {
    const char* file;
    std::function<double(const BenchRow&)> get;
    int decimals;
  };
  std::vector<Metric> metrics;
  if (include_timing) {
    metrics.push_back({"train_time.csv", [](const BenchRow& r) { return r.train_s; }, 6});
    metrics.push_back({"predict_time.csv", [](const BenchRow& r) { return r.predict_s; }, 6});
  }
  metrics.push_back({"mae.csv", [](const BenchRow& r) { return r.accuracy.mae; }, 2});
  metrics.push_back({"rmse.csv", [](const BenchRow& r) { return r.accuracy.rmse; }, 2});
  metrics.push_back({"mape.csv", [](const BenchRow& r) { return r.accuracy.mape; }, 2});

  for (const auto& m : metrics) {
    auto out = csv::open_for_write(dir / m.file);
    out << "group,trips";
    for (const auto& model : report.models) out << ',' << model;
    out << '\n';
    for (const auto& label : report.group_labels) {
      bool any = false;
      std::ostringstream line;
      line << label << ',' << group_size(label);
      for (const auto& model : report.models) {
        const auto* s = find(label, model, Scheme::kStopBased);
        const auto* d = find(label, model, Scheme::kDistanceBased);
        auto cell = [&](const BenchRow* r) {
          return r && r->ok() ? csv::format_fixed(m.get(*r), m.decimals) : std::string("NA");
        };
        line << ',';
        if (s || d) {
          line << cell(s) << '/' << cell(d);
          any = true;
        }
      }
      if (any) out << line.str() << '\n';
    }
  }

  auto out = csv::open_for_write(dir / "report.csv");
  out << "group,group_requested,clamped,trips,train,test,model,scheme,status";
  if (include_timing) out << ",train_s,predict_s";
  out << ",mae,rmse,mape,estimates\n";
  for (const auto& r : report.rows) {
    auto num = [&](double v) { return r.ok() ? csv::format_double(v) : std::string("NA"); };
    std::string status = r.status;
    std::replace(status.begin(), status.end(), '"', '\'');
    out << r.group_label << ',' << r.group_requested << ',' << (r.clamped ? 1 : 0) << ',' << r.group << ','
        << r.train << ',' << r.test << ',' << r.model << ',' << to_string(r.scheme) << ",\"" << status << '"';
    if (include_timing) out << ',' << num(r.train_s) << ',' << num(r.predict_s);
    out << ',' << num(r.accuracy.mae) << ',' << num(r.accuracy.rmse) << ',' << num(r.accuracy.mape) << ','
        << r.accuracy.estimate_count << '\n';
  }
}

}  // namespace bustime::bench
