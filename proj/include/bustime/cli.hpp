#pragma once

// Command-line front end: one subcommand per pipeline stage plus `bench`.
// Exit codes: 0 success, 1 usage error, 2 data or validation error.

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bustime/bench.hpp"
#include "bustime/evalsim.hpp"
#include "bustime/ingest.hpp"
#include "bustime/pipeline.hpp"
#include "bustime/registry.hpp"
#include "bustime/segmentation.hpp"
#include "bustime/synth.hpp"

namespace bustime::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2 };

class Log {
 public:
  explicit Log(std::ostream& os) : os_(os) {}
  int verbosity = 0;

  void info(const std::string& msg) const { os_ << "bustime: " << msg << '\n'; }
  void debug(const std::string& msg) const {
    if (verbosity > 0) os_ << "bustime: " << msg << '\n';
  }

 private:
  std::ostream& os_;
};

struct SynthArgs {
  synth::SynthConfig cfg;
};

struct PreprocessArgs {
  std::string gps, gtfs, route;
  SegmentationConfig seg;
};

struct AlignArgs {
  std::string trips, gtfs, route, direction = "outbound";
};

struct TrainArgs {
  std::string aligned, anchors, model, name = "model.bin";
  ModelParams params;
  std::optional<double> bandwidth;
};

struct ReplayArgs {
  std::string model_file, aligned, mode = "per_estimate";
};

struct BenchArgs {
  std::string plan, gps, gtfs, route, direction = "outbound";
  bool full = false;
  bool no_timing = false;
  synth::SynthConfig synth;
};

namespace detail {

inline Direction direction_arg(const std::string& s) {
  const auto d = parse_direction(s);
  if (!d) throw Error(ErrorCode::kInvalidArgument, "unknown direction '" + s + "'");
  return *d;
}

inline std::string fmt(double v) { return csv::format_fixed(v, 3); }

inline RoutePair load_routes(const std::string& gtfs, const std::string& route) {
  const auto routes = ingest::parse_gtfs(gtfs);
  return segmentation::select_route_pair(routes, route);
}

inline void log_tally(const Log& log, const std::string& what, const std::map<RejectReason, std::size_t>& tally) {
  for (const auto& [reason, n] : tally) log.info(what + " reject " + std::string(to_string(reason)) + "=" + std::to_string(n));
}

inline void write_alignment(const std::filesystem::path& out, const pipeline::AlignmentRun& run, const Log& log) {
  for (auto s : {Scheme::kStopBased, Scheme::kDistanceBased}) {
    const std::string tag(to_string(s));
    pipeline::write_aligned(out / ("aligned_" + tag + ".csv"), run.trips(s));
    pipeline::write_anchors(out / ("anchors_" + tag + ".csv"), run.anchor_set(s));
    log.info("aligned " + tag + ": " + std::to_string(run.trips(s).size()) + " trips x " +
             std::to_string(run.anchor_set(s).size()) + " anchors");
  }
  log_tally(log, "stop_based", run.stop_rejects);
  log_tally(log, "distance_based", run.distance_rejects);
  if (!run.deviations.empty()) {
    const auto stats = alignment::deviation_stats(run.deviations);
    pipeline::write_deviation_stats(out / "deviation_stats.csv", stats);
    log.info("stop deviation mean=" + fmt(stats.mean) + " p99=" + fmt(stats.p99) + " m");
  }
}

inline TrainingSet load_training_set(const std::string& aligned, const std::string& anchors) {
  TrainingSet ts;
  ts.anchor_distances = pipeline::read_anchor_distances(anchors);
  ts.trips = pipeline::read_aligned(aligned);
  if (!ts.trips.empty() && ts.trips.front().times.size() != ts.anchor_count())
    throw Error(ErrorCode::kInvalidArgument, aligned + " has " + std::to_string(ts.trips.front().times.size()) +
                                                 " anchors but " + anchors + " lists " +
                                                 std::to_string(ts.anchor_count()));
  return ts;
}

}  // namespace detail

inline void add_synth_options(CLI::App* cmd, synth::SynthConfig& c) {
  cmd->add_option("--trips", c.trips, "Number of trips")->capture_default_str();
  cmd->add_option("--stops", c.stops, "Stops per direction")->capture_default_str();
  cmd->add_option("--route-length", c.route_length, "Route length in meters")->capture_default_str();
  cmd->add_option("--route-id", c.route_id, "Route identifier")->capture_default_str();
  cmd->add_option("--vehicles", c.vehicles, "Vehicle fleet size")->capture_default_str();
  cmd->add_option("--headway", c.headway, "Seconds between departures")->capture_default_str();
  cmd->add_option("--inbound-fraction", c.inbound_fraction, "Share of inbound trips")->capture_default_str();
  cmd->add_option("--base-speed", c.base_speed, "Free-flow speed, m/s")->capture_default_str();
  cmd->add_option("--noise", c.gps_noise_sigma, "GPS noise sigma, meters")->capture_default_str();
  cmd->add_option("--period", c.sample_period, "GPS sampling period, seconds")->capture_default_str();
  cmd->add_option("--stay-rate", c.stay_point_rate, "Share of trips ending in a stay cluster")->capture_default_str();
  cmd->add_option("--noisy-rate", c.noisy_point_rate, "Per-record far-offset rate")->capture_default_str();
  cmd->add_option("--missing-rate", c.missing_segment_rate, "Share of trips with a GPS gap")->capture_default_str();
  cmd->add_option("--truncated-rate", c.truncated_rate, "Share of trips cut short")->capture_default_str();
  cmd->add_option("--late-start-rate", c.late_start_rate, "Share of trips starting late")->capture_default_str();
  cmd->add_option("--sparse-rate", c.sparse_rate, "Share of trips with under 30 records")->capture_default_str();
}

inline void add_model_options(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--k", a.params.k, "k-NN neighbours")->capture_default_str();
  cmd->add_option("--bandwidth", a.bandwidth, "KR bandwidth (default: median heuristic)");
  cmd->add_option("--knots", a.params.bam.interior_knots, "BAM interior knots")->capture_default_str();
  cmd->add_option("--lambda", a.params.bam.lambda, "BAM ridge penalty")->capture_default_str();
  cmd->add_option("--hidden", a.params.lstm.hidden, "LSTM hidden units")->capture_default_str();
  cmd->add_option("--epochs", a.params.lstm.epochs, "LSTM epochs")->capture_default_str();
  cmd->add_option("--lr", a.params.lstm.learning_rate, "LSTM learning rate")->capture_default_str();
}

inline int run(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  CLI::App app{"Bus arrival time prediction: preprocessing, alignment, models and benchmark"};
  app.set_config("--config", "", "Read options from a key=value file ([subcommand] sections)");
  app.require_subcommand(1);

  std::uint64_t seed = 2012;
  std::string out_dir = "out";
  int verbosity = 0;
  app.add_option("--seed", seed, "Random seed (synthetic data, LSTM initialisation)")->capture_default_str();
  app.add_option("--out", out_dir, "Output directory; every file is written below it")->capture_default_str();
  app.add_flag("-v,--verbose", verbosity, "More detail on standard error");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic GTFS route, GPS feed and ground truth");
  add_synth_options(synth_cmd, synth_args.cfg);

  PreprocessArgs pre;
  auto* pre_cmd = app.add_subcommand("preprocess", "Segment raw GPS into complete trips");
  pre_cmd->add_option("--gps", pre.gps, "GPS CSV")->required();
  pre_cmd->add_option("--gtfs", pre.gtfs, "GTFS directory")->required();
  pre_cmd->add_option("--route", pre.route, "Route id (default: the only route)");
  pre_cmd->add_option("--gap", pre.seg.gap_split_s, "Split at gaps longer than this, seconds")->capture_default_str();
  pre_cmd->add_option("--probe-points", pre.seg.direction_probe_points, "Points used to judge direction")
      ->capture_default_str();
  pre_cmd->add_option("--endpoint-radius", pre.seg.endpoint_radius_m, "Terminal match radius, meters")
      ->capture_default_str();
  pre_cmd->add_option("--min-fraction", pre.seg.min_completeness_fraction,
                      "Minimum share of scheduled duration and route length")
      ->capture_default_str();
  pre_cmd->add_option("--utc-offset", pre.seg.utc_offset_s, "Local time minus UTC, seconds")->capture_default_str();

  AlignArgs al;
  auto* align_cmd = app.add_subcommand("align", "Align trips to stop-based and distance-based anchors");
  align_cmd->add_option("--trips", al.trips, "Trips CSV written by preprocess")->required();
  align_cmd->add_option("--gtfs", al.gtfs, "GTFS directory")->required();
  align_cmd->add_option("--route", al.route, "Route id (default: the only route)");
  align_cmd->add_option("--direction", al.direction, "outbound or inbound")->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Fit one model and save it");
  train_cmd->add_option("--aligned", tr.aligned, "Aligned trips CSV")->required();
  train_cmd->add_option("--anchors", tr.anchors, "Anchors CSV matching the aligned trips")->required();
  train_cmd->add_option("--model", tr.model, "delay, knn, kr, bam or lstm")->required();
  train_cmd->add_option("--name", tr.name, "Model file name inside --out")->capture_default_str();
  add_model_options(train_cmd, tr);

  ReplayArgs pr;
  auto* predict_cmd = app.add_subcommand("predict", "Replay trips through a saved model and write every estimate");
  predict_cmd->add_option("--model-file", pr.model_file, "Saved model")->required();
  predict_cmd->add_option("--aligned", pr.aligned, "Aligned trips CSV to replay")->required();

  ReplayArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a saved model on aligned trips");
  eval_cmd->add_option("--model-file", ev.model_file, "Saved model")->required();
  eval_cmd->add_option("--aligned", ev.aligned, "Aligned trips CSV to replay")->required();
  eval_cmd->add_option("--mode", ev.mode, "per_estimate or first_query_only")
      ->check(CLI::IsMember({"per_estimate", "first_query_only"}))
      ->capture_default_str();

  BenchArgs be;
  be.synth.trips = 400;
  auto* bench_cmd = app.add_subcommand("bench", "Scaling benchmark over data-size groups, models and schemes");
  bench_cmd->add_option("--plan", be.plan, "Plan file (key = value lines)");
  bench_cmd->add_flag("--full", be.full, "Start from the full plan (500..4000 and all) instead of the reduced one");
  bench_cmd->add_flag("--no-timing", be.no_timing, "Omit timing tables and columns");
  bench_cmd->add_option("--gps", be.gps, "GPS CSV (default: generate a synthetic corpus)");
  bench_cmd->add_option("--gtfs", be.gtfs, "GTFS directory, required with --gps");
  bench_cmd->add_option("--route", be.route, "Route id (default: the only route)");
  bench_cmd->add_option("--direction", be.direction, "outbound or inbound")->capture_default_str();
  add_synth_options(bench_cmd, be.synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  } catch (const CLI::ParseError& e) {
    err << "bustime: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  Log log(err);
  log.verbosity = verbosity;
  // Global options plus the chosen subcommand, in config-file syntax.
  std::string resolved = "seed=" + std::to_string(seed) + "\nout=\"" + out_dir + "\"\nverbose=" +
                         std::to_string(verbosity) + "\n";
  for (const auto* sub : app.get_subcommands())
    resolved += "[" + sub->get_name() + "]\n" + sub->config_to_str(true, false);
  log.info("resolved configuration:\n" + resolved);

  try {
    const std::filesystem::path out(out_dir);
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec || !std::filesystem::is_directory(out))
      throw Error(ErrorCode::kUnwritableDirectory, "cannot create output directory " + out.string());

    if (*synth_cmd) {
      synth_args.cfg.seed = seed;
      const auto data = synth::generate(synth_args.cfg);
      synth::write(out, data);
      log.info("wrote " + std::to_string(data.truth.trips.size()) + " trips, " + std::to_string(data.gps.size()) +
               " GPS records to " + out.string());
    } else if (*pre_cmd) {
      const auto routes = detail::load_routes(pre.gtfs, pre.route);
      const auto parsed = ingest::parse_gps(pre.gps);
      log.info("read " + std::to_string(parsed.records.size()) + " GPS records (" + std::to_string(parsed.dropped) +
               " dropped) from " + pre.gps);
      const auto journeys = ingest::group_journeys(parsed.records);
      const auto result = segmentation::segment_all(journeys, routes, pre.seg);
      pipeline::write_trips(out / "trips.csv", result.trips);
      pipeline::write_reject_summary(out / "rejects.csv", result);
      log.info(std::to_string(result.fragments) + " fragments from " + std::to_string(journeys.size()) +
               " journeys: " + std::to_string(result.trips.size()) + " trips accepted");
      detail::log_tally(log, "segmentation", result.tally);
    } else if (*align_cmd) {
      const auto trips = pipeline::read_trips(al.trips);
      const auto routes = detail::load_routes(al.gtfs, al.route);
      const auto dir = detail::direction_arg(al.direction);
      std::vector<SegmentedTrip> chosen;
      for (const auto& t : trips)
        if (t.direction == dir) chosen.push_back(t);
      log.info(std::to_string(chosen.size()) + " of " + std::to_string(trips.size()) + " trips run " + al.direction);
      detail::write_alignment(out, pipeline::align_all(chosen, routes.get(dir)), log);
    } else if (*train_cmd) {
      const auto kind = parse_model_kind(tr.model);
      if (!kind) throw Error(ErrorCode::kInvalidArgument, "unknown model '" + tr.model + "'");
      tr.params.bandwidth = tr.bandwidth;
      tr.params.lstm.seed = seed;
      const auto ts = detail::load_training_set(tr.aligned, tr.anchors);
      log.info("training " + tr.model + " (" + tr.params.describe(*kind) + ") on " + std::to_string(ts.trips.size()) +
               " trips x " + std::to_string(ts.anchor_count()) + " anchors");
      const auto trained = time_train([&] { return train_model(*kind, ts, tr.params); });
      save_model(out / tr.name, *trained.value);
      log.info("trained in " + csv::format_fixed(trained.seconds, 6) + " s, saved " + (out / tr.name).string());
    } else if (*predict_cmd || *eval_cmd) {
      const auto& a = *predict_cmd ? pr : ev;
      const auto model = load_model(a.model_file);
      const auto trips = pipeline::read_aligned(a.aligned);
      const auto timed = time_predict(*model, trips);
      log.info("replayed " + std::to_string(trips.size()) + " trips through " + model->name() + " in " +
               csv::format_fixed(timed.seconds, 6) + " s");
      if (*predict_cmd) {
        auto f = csv::open_for_write(out / "estimates.csv");
        f << "trip_id,from,target,predicted,actual\n";
        for (const auto& r : timed.value)
          f << trips[r.trip].trip_id << ',' << r.from << ',' << r.target << ',' << csv::format_double(r.predicted)
            << ',' << csv::format_double(r.actual) << '\n';
        log.info("wrote " + std::to_string(timed.value.size()) + " estimates to " + (out / "estimates.csv").string());
      } else {
        const auto mode = ev.mode == "first_query_only" ? AccuracyMode::kFirstQueryOnly : AccuracyMode::kPerEstimate;
        const auto acc = accuracy(timed.value, mode);
        auto f = csv::open_for_write(out / "accuracy.csv");
        f << "model,mode,trips,estimates,mae,rmse,mape,predict_s\n"
          << model->name() << ',' << ev.mode << ',' << trips.size() << ',' << acc.estimate_count << ','
          << csv::format_double(acc.mae) << ',' << csv::format_double(acc.rmse) << ',' << csv::format_double(acc.mape)
          << ',' << csv::format_fixed(timed.seconds, 6) << '\n';
        log.info("MAE " + detail::fmt(acc.mae) + " s, RMSE " + detail::fmt(acc.rmse) + " s, MAPE " +
                 detail::fmt(acc.mape) + " %");
      }
    } else if (*bench_cmd) {
      auto plan = be.full ? bench::BenchPlan{} : bench::BenchPlan::reduced();
      plan.params.lstm.seed = seed;
      if (!be.plan.empty()) plan = bench::BenchPlan::parse(be.plan, plan);
      plan.validate();
      log.info("plan: " + plan.describe());

      const auto dir = detail::direction_arg(be.direction);
      pipeline::Corpus corpus;
      if (!be.gps.empty()) {
        if (be.gtfs.empty()) throw Error(ErrorCode::kInvalidArgument, "--gps needs --gtfs");
        const auto routes = detail::load_routes(be.gtfs, be.route);
        corpus = pipeline::build_corpus(ingest::parse_gps(be.gps).records, routes, {}, dir);
      } else {
        be.synth.seed = seed;
        const auto data = synth::generate(be.synth);
        corpus = pipeline::build_corpus(data.gps, data.routes, {}, dir);
        log.info("synthetic corpus: " + std::to_string(data.truth.trips.size()) + " trips generated");
      }
      log.info(std::to_string(corpus.segmentation.trips.size()) + " trips segmented, " +
               std::to_string(corpus.alignment.stop_based.size()) + " aligned under both schemes");
      detail::log_tally(log, "segmentation", corpus.segmentation.tally);
      pipeline::write_reject_summary(out / "rejects.csv", corpus.segmentation);
      detail::write_alignment(out, corpus.alignment, log);

      bench::BenchCorpus bc;
      for (auto s : plan.schemes) bc[s] = {corpus.alignment.anchor_set(s).distances(), corpus.alignment.trips(s)};
      const auto report = bench::run_bench(plan, bc);
      for (const auto& r : report.rows) {
        std::ostringstream line;
        line << "group " << r.group_label << " " << r.model << " " << to_string(r.scheme) << ": ";
        if (r.ok())
          line << "train " << csv::format_fixed(r.train_s, 4) << " s, predict " << csv::format_fixed(r.predict_s, 4)
               << " s, MAE " << detail::fmt(r.accuracy.mae);
        else
          line << r.status;
        log.debug(line.str());
      }
      bench::emit_tables(report, out, !be.no_timing);
      std::size_t failed = 0;
      for (const auto& r : report.rows) failed += !r.ok();
      log.info("bench finished: " + std::to_string(report.rows.size()) + " cells, " + std::to_string(failed) +
               " failed; tables in " + out.string());
    }
    return kOk;
  } catch (const Error& e) {
    err << "bustime: error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "bustime: error: " << e.what() << '\n';
    return kDataError;
  }
}

}  // namespace bustime::cli
