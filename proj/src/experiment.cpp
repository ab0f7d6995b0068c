#include "mmdcal/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mmdcal/errors.hpp"

namespace mmdcal {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kMetricNames = {"ecpe", "mcpe", "ecpe_one_sided", "mcpe_one_sided", "epiw",
                                               "mpiw", "rmse", "r2",   "rse",            "smape"};

json read_json(const fs::path& path, Errc missing) {
  std::ifstream in(path);
  if (!in) throw Error(missing, path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::kParseError, path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::kFileNotFound, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<fs::path> seed_runs(const fs::path& dir) {
  std::vector<fs::path> runs;
  if (!fs::is_directory(dir)) return runs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_directory() && name.rfind("seed_", 0) == 0 && fs::exists(entry.path() / "config.json")) {
      runs.push_back(entry.path());
    }
  }
  std::sort(runs.begin(), runs.end(), [](const fs::path& a, const fs::path& b) {
    return std::stoull(a.filename().string().substr(5)) < std::stoull(b.filename().string().substr(5));
  });
  return runs;
}

CalibrationReport evaluate_single(const fs::path& run_dir, const EvaluateOptions& options) {
  const auto j = read_json(run_dir / "config.json", Errc::kMissingCheckpoint);
  const auto config = ExperimentConfig::from_json(j);
  const auto seed = j.at("run_seed").get<std::uint64_t>();
  const auto data = prepare_data(config, seed);

  FittedRun run{HnnModel::load(run_dir / "checkpoint.json"), std::nullopt, {}};
  if (config.method == Method::kHnnIsr) {
    if (!fs::exists(run_dir / "isotonic.csv")) throw Error(Errc::kMissingCheckpoint, (run_dir / "isotonic.csv").string());
    run.recalibrator = IsotonicRecalibrator::load_csv(run_dir / "isotonic.csv");
  }
  if (run.model.input_dim() != data.test.cols) {
    throw Error(Errc::kConfigError, "checkpoint input width does not match the dataset");
  }
  const auto report = evaluate_run(run, data, config.train.grid);

  auto rj = report_to_json(report);
  rj["method"] = method_name(config.method);
  rj["seed"] = seed;
  rj["version"] = kVersion;
  write_json(rj, run_dir / "report.json");

  std::ofstream rel(run_dir / "reliability.csv");
  rel << "expected,observed,observed_one_sided\n";
  for (std::size_t k = 0; k < report.levels.size(); ++k) {
    rel << fmt(report.levels[k]) << ',' << fmt(report.coverage[k]) << ',' << fmt(report.coverage_one_sided[k]) << '\n';
  }

  const auto preds = denormalize(run.model.predict_distribution(data.test.x_tensor()), data.scalers.target);
  const auto map = run.level_map();
  std::ofstream iv(run_dir / "intervals.csv");
  iv << "index,y,mu,lower,upper\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto pi = central_interval(preds[i], report.interval_level, map);
    iv << data.test.index[i] << ',' << fmt(data.test.y_raw[i]) << ',' << fmt(preds[i].mu) << ',' << fmt(pi.lower)
       << ',' << fmt(pi.upper) << '\n';
  }
  if (options.all_levels) {
    std::ofstream all(run_dir / "intervals_all_levels.csv");
    all << "index,level,lower,upper\n";
    for (std::size_t i = 0; i < preds.size(); ++i) {
      for (double p : report.levels) {
        const auto pi = central_interval(preds[i], p, map);
        all << data.test.index[i] << ',' << fmt(p) << ',' << fmt(pi.lower) << ',' << fmt(pi.upper) << '\n';
      }
    }
  }
  return report;
}

void write_summary(const fs::path& dir, const std::vector<json>& reports) {
  json summary;
  summary["method"] = reports.front().value("method", "");
  summary["n_runs"] = reports.size();
  summary["levels"] = reports.front().at("levels");
  summary["version"] = kVersion;
  std::ofstream csv(dir / "summary.csv");
  csv << "metric,mean,stderr,n\n";
  for (const auto& name : kMetricNames) {
    std::vector<double> values;
    for (const auto& r : reports)
      if (r.contains(name) && !r.at(name).is_null()) values.push_back(r.at(name).get<double>());
    if (values.empty()) {
      summary["metrics"][name] = nullptr;
      csv << name << ",null,null,0\n";
      continue;
    }
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double se = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
    summary["metrics"][name] = {{"mean", mean}, {"stderr", se}, {"n", values.size()}};
    csv << name << ',' << fmt(mean) << ',' << fmt(se) << ',' << values.size() << '\n';
  }
  write_json(summary, dir / "summary.json");
}

struct CompareRow {
  std::string label;
  std::vector<double> levels;
  std::vector<std::optional<double>> values;
};

CompareRow load_compare_row(const fs::path& dir) {
  CompareRow row;
  const auto label = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
  json j;
  bool aggregate = false;
  if (fs::exists(dir / "summary.json")) {
    j = read_json(dir / "summary.json", Errc::kMissingCheckpoint);
    aggregate = true;
  } else if (fs::exists(dir / "report.json")) {
    j = read_json(dir / "report.json", Errc::kMissingCheckpoint);
  } else {
    throw Error(Errc::kMissingCheckpoint, dir.string() + " has no report.json or summary.json; run evaluate first");
  }
  row.label = label + " (" + j.value("method", "?") + ")";
  row.levels = j.at("levels").get<std::vector<double>>();
  for (const auto& name : kMetricNames) {
    const json* v = nullptr;
    if (aggregate) {
      const auto& metrics = j.at("metrics");
      if (metrics.contains(name) && !metrics.at(name).is_null()) v = &metrics.at(name).at("mean");
    } else if (j.contains(name) && !j.at(name).is_null()) {
      v = &j.at(name);
    }
    row.values.push_back(v ? std::optional<double>(v->get<double>()) : std::nullopt);
  }
  return row;
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::kHnn:
      return "hnn";
    case Method::kHnnIsr:
      return "hnn+isr";
    case Method::kHnnMmd:
      return "hnn+mmd";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "hnn") return Method::kHnn;
  if (name == "hnn+isr") return Method::kHnnIsr;
  if (name == "hnn+mmd") return Method::kHnnMmd;
  throw Error(Errc::kConfigError, "unknown method '" + name + "' (expected hnn, hnn+isr or hnn+mmd)");
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw Error(Errc::kConfigError, "at least one seed is required");
  if (hidden == 0) throw Error(Errc::kConfigError, "hidden width must be positive");
  if (data.kind == DataSource::Kind::kCsv) {
    if (!fs::exists(data.path)) throw Error(Errc::kFileNotFound, data.path.string());
  } else if (data.n < 100 || data.dims == 0) {
    throw Error(Errc::kConfigError, "synthetic data needs n >= 100 and dims >= 1");
  }
  if (!std::isfinite(sigma_shift)) throw Error(Errc::kConfigError, "sigma_shift must be finite");
  split.validate();
  train.validate();
}

json ExperimentConfig::to_json() const {
  json j;
  if (data.kind == DataSource::Kind::kSynth) {
    j["data"] = {{"source", "synth"}, {"n", data.n}, {"dims", data.dims}, {"noise_scale", data.noise_scale}};
  } else {
    j["data"] = {{"source", "csv"},           {"path", data.path.string()}, {"target", data.target},
                 {"features", data.features}, {"series", data.series},      {"window", data.window},
                 {"horizon", data.horizon}};
  }
  j["split"] = {{"mode", split.mode == SplitMode::kRandom ? "random" : "chronological"},
                {"train", split.train},
                {"val", split.val},
                {"test", split.test}};
  j["model"] = {{"hidden", hidden}};
  j["train"] = {{"lr", train.adam.lr},
                {"weight_decay", train.adam.weight_decay},
                {"beta1", train.adam.beta1},
                {"beta2", train.adam.beta2},
                {"eps", train.adam.eps},
                {"batch_size", train.batch_size},
                {"stage2_batch_size", train.stage2_batch_size},
                {"stage2_weight_decay",
                 train.stage2_weight_decay ? json(*train.stage2_weight_decay) : json(nullptr)},
                {"stage1_epochs", train.stage1_epochs},
                {"stage2_epochs", train.stage2_epochs},
                {"patience", train.patience},
                {"variance_head_only", train.variance_head_only},
                {"bandwidths", train.kernels.bandwidths},
                {"mmd_estimator", train.mmd_estimator == EstimatorKind::kUnbiased ? "unbiased" : "biased"}};
  j["grid"] = train.grid.levels;
  j["method"] = method_name(method);
  j["output_dir"] = output_dir.string();
  j["seeds"] = seeds;
  j["sigma_shift"] = sigma_shift;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("data")) {
      const auto& d = j.at("data");
      const auto source = d.value("source", std::string("synth"));
      if (source == "synth") {
        c.data.kind = DataSource::Kind::kSynth;
        c.data.n = d.value("n", c.data.n);
        c.data.dims = d.value("dims", c.data.dims);
        c.data.noise_scale = d.value("noise_scale", c.data.noise_scale);
      } else if (source == "csv") {
        c.data.kind = DataSource::Kind::kCsv;
        c.data.path = d.at("path").get<std::string>();
        c.data.target = d.value("target", c.data.target);
        c.data.features = d.value("features", c.data.features);
        c.data.series = d.value("series", false);
        c.data.window = d.value("window", c.data.window);
        c.data.horizon = d.value("horizon", c.data.horizon);
      } else {
        throw Error(Errc::kConfigError, "data.source must be 'synth' or 'csv'");
      }
    }
    if (j.contains("split")) {
      const auto& s = j.at("split");
      const auto mode = s.value("mode", std::string("random"));
      if (mode != "random" && mode != "chronological") {
        throw Error(Errc::kConfigError, "split.mode must be 'random' or 'chronological'");
      }
      c.split.mode = mode == "random" ? SplitMode::kRandom : SplitMode::kChronological;
      c.split.train = s.value("train", c.split.train);
      c.split.val = s.value("val", c.split.val);
      c.split.test = s.value("test", c.split.test);
    }
    if (c.data.series) c.split.mode = SplitMode::kChronological;
    if (j.contains("model")) c.hidden = j.at("model").value("hidden", c.hidden);
    if (j.contains("train")) {
      const auto& t = j.at("train");
      c.train.adam.lr = t.value("lr", c.train.adam.lr);
      c.train.adam.weight_decay = t.value("weight_decay", c.train.adam.weight_decay);
      c.train.adam.beta1 = t.value("beta1", c.train.adam.beta1);
      c.train.adam.beta2 = t.value("beta2", c.train.adam.beta2);
      c.train.adam.eps = t.value("eps", c.train.adam.eps);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.stage2_batch_size = t.value("stage2_batch_size", c.train.stage2_batch_size);
      if (t.contains("stage2_weight_decay") && !t.at("stage2_weight_decay").is_null()) {
        c.train.stage2_weight_decay = t.at("stage2_weight_decay").get<double>();
      }
      c.train.stage1_epochs = t.value("stage1_epochs", c.train.stage1_epochs);
      c.train.stage2_epochs = t.value("stage2_epochs", c.train.stage2_epochs);
      c.train.patience = t.value("patience", c.train.patience);
      c.train.variance_head_only = t.value("variance_head_only", c.train.variance_head_only);
      c.train.kernels.bandwidths = t.value("bandwidths", c.train.kernels.bandwidths);
      const auto estimator = t.value("mmd_estimator", std::string("biased"));
      if (estimator != "biased" && estimator != "unbiased") {
        throw Error(Errc::kConfigError, "train.mmd_estimator must be 'biased' or 'unbiased'");
      }
      c.train.mmd_estimator = estimator == "unbiased" ? EstimatorKind::kUnbiased : EstimatorKind::kBiased;
    }
    if (j.contains("grid")) c.train.grid.levels = j.at("grid").get<std::vector<double>>();
    c.method = parse_method(j.value("method", method_name(c.method)));
    c.output_dir = j.value("output_dir", c.output_dir.string());
    c.seeds = j.value("seeds", c.seeds);
    c.sigma_shift = j.value("sigma_shift", c.sigma_shift);
  } catch (const json::exception& e) {
    throw Error(Errc::kConfigError, e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  json j;
  {
    std::ifstream in(path);
    if (!in) throw Error(Errc::kConfigError, "cannot open config " + path.string());
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(Errc::kConfigError, path.string() + ": " + e.what());
    }
  }
  auto config = from_json(j);
  apply_env_overrides(config);
  return config;
}

void apply_env_overrides(ExperimentConfig& config) {
  if (const char* seed = std::getenv("MMDCAL_SEED"); seed && *seed) {
    try {
      config.seeds = {std::stoull(seed)};
    } catch (const std::exception&) {
      throw Error(Errc::kConfigError, std::string("MMDCAL_SEED is not an integer: ") + seed);
    }
  }
  if (const char* out = std::getenv("MMDCAL_OUT"); out && *out) config.output_dir = out;
}

SplitResult prepare_data(const ExperimentConfig& config, std::uint64_t seed) {
  SplitSpec spec = config.split;
  spec.seed = seed;
  if (config.data.kind == DataSource::Kind::kSynth) {
    const auto data = synth_heteroscedastic(config.data.n, seed, {config.data.dims, config.data.noise_scale});
    return split(data, spec);
  }
  CsvOptions options;
  options.interpolate_missing = config.data.series;
  const auto data = load_csv(config.data.path, config.data.target, config.data.features, options);
  if (config.data.series) {
    spec.mode = SplitMode::kChronological;
    return split_series(data, spec, config.data.window, config.data.horizon);
  }
  return split(data, spec);
}

LevelMap FittedRun::level_map() const {
  if (!recalibrator) return {};
  return [recal = *recalibrator](double p) { return recal.inverse(p); };
}

FittedRun fit_run(const ExperimentConfig& config, const SplitResult& data, std::uint64_t seed) {
  TrainConfig train = config.train;
  train.seed = seed;
  FittedRun run{HnnModel(data.train.cols, config.hidden, seed), std::nullopt, {}};
  train_stage1(run.model, data.train, data.val, train, run.trace);
  if (config.sigma_shift != 0.0) run.model.shift_log_variance(config.sigma_shift);
  if (config.method == Method::kHnnMmd) {
    train_stage2(run.model, data.train, data.val, train, run.trace);
  } else if (config.method == Method::kHnnIsr) {
    run.recalibrator = fit_isotonic(run.model.predict_distribution(data.val.x_tensor()), data.val.y);
  }
  return run;
}

CalibrationReport evaluate_run(const FittedRun& run, const SplitResult& data, const ConfidenceGrid& grid) {
  const auto preds = denormalize(run.model.predict_distribution(data.test.x_tensor()), data.scalers.target);
  return make_report(preds, data.test.y_raw, grid, 0.95, run.level_map());
}

fs::path run_directory(const fs::path& output_dir, std::uint64_t seed) {
  return output_dir / ("seed_" + std::to_string(seed));
}

std::vector<fs::path> cmd_train(const ExperimentConfig& config) {
  config.validate();
  ExperimentConfig resolved = config;
  if (resolved.data.kind == DataSource::Kind::kCsv) resolved.data.path = fs::absolute(resolved.data.path);

  std::vector<fs::path> dirs;
  json summary = json::array();
  for (auto seed : config.seeds) {
    const auto dir = run_directory(config.output_dir, seed);
    fs::create_directories(dir);
    auto j = resolved.to_json();
    j["run_seed"] = seed;
    j["version"] = kVersion;
    write_json(j, dir / "config.json");

    const auto data = prepare_data(resolved, seed);
    save_scalers(data.scalers, {}, dir / "scalers.json");
    FittedRun run{HnnModel(1, 1, 0), std::nullopt, {}};
    try {
      run = fit_run(resolved, data, seed);
    } catch (const DivergedError& e) {
      e.trace().save_csv(dir / "trace.csv");
      throw;
    }
    run.model.save(dir / "checkpoint.json");
    run.trace.save_csv(dir / "trace.csv");
    if (run.recalibrator) run.recalibrator->save_csv(dir / "isotonic.csv");

    std::size_t epochs1 = 0, epochs2 = 0;
    for (const auto& r : run.trace.rows) (r.stage == 1 ? epochs1 : epochs2)++;
    summary.push_back({{"seed", seed},
                       {"dir", dir.string()},
                       {"stage1_epochs", epochs1},
                       {"stage2_epochs", epochs2},
                       {"val_nll", evaluate_nll(run.model, data.val)},
                       {"val_ecpe", evaluate_ecpe(run.model, data.val, resolved.train.grid)}});
    dirs.push_back(dir);
  }
  write_json({{"method", method_name(config.method)}, {"version", kVersion}, {"runs", summary}},
             config.output_dir / "train_summary.json");
  return dirs;
}

nlohmann::json report_to_json(const CalibrationReport& r) {
  json j;
  j["levels"] = r.levels;
  j["coverage"] = r.coverage;
  j["coverage_one_sided"] = r.coverage_one_sided;
  j["ecpe"] = r.ecpe;
  j["mcpe"] = r.mcpe;
  j["ecpe_one_sided"] = r.ecpe_one_sided;
  j["mcpe_one_sided"] = r.mcpe_one_sided;
  j["interval_level"] = r.interval_level;
  j["epiw"] = r.epiw;
  j["mpiw"] = r.mpiw;
  j["rmse"] = r.rmse;
  j["r2"] = r.r2 ? json(*r.r2) : json(nullptr);
  j["rse"] = r.rse ? json(*r.rse) : json(nullptr);
  j["smape"] = r.smape;
  j["n_test"] = r.n_test;
  return j;
}

std::vector<CalibrationReport> cmd_evaluate(const fs::path& dir, const EvaluateOptions& options) {
  if (fs::exists(dir / "config.json")) return {evaluate_single(dir, options)};
  const auto runs = seed_runs(dir);
  if (runs.empty()) throw Error(Errc::kMissingCheckpoint, dir.string() + " holds no trained run");
  std::vector<CalibrationReport> reports;
  std::vector<json> jsons;
  for (const auto& run : runs) {
    reports.push_back(evaluate_single(run, options));
    jsons.push_back(read_json(run / "report.json", Errc::kMissingCheckpoint));
  }
  write_summary(dir, jsons);
  return reports;
}

std::string cmd_compare(const std::vector<fs::path>& dirs, const fs::path& csv_path) {
  if (dirs.size() < 2) throw Error(Errc::kConfigError, "compare needs at least two runs");
  std::vector<CompareRow> rows;
  for (const auto& d : dirs) rows.push_back(load_compare_row(d));
  for (const auto& r : rows) {
    if (r.levels != rows.front().levels) {
      throw Error(Errc::kIncompatibleGrids, r.label + " uses a different confidence grid than " + rows.front().label);
    }
  }

  std::vector<std::optional<std::size_t>> best(kMetricNames.size());
  for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
    const bool larger_is_better = kMetricNames[m] == "r2";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!rows[i].values[m]) continue;
      const double v = *rows[i].values[m];
      if (!best[m] || (larger_is_better ? v > *rows[*best[m]].values[m] : v < *rows[*best[m]].values[m])) best[m] = i;
    }
  }

  if (!csv_path.empty()) {
    std::ofstream csv(csv_path);
    if (!csv) throw Error(Errc::kFileNotFound, "cannot write " + csv_path.string());
    csv << "run";
    for (const auto& name : kMetricNames) csv << ',' << name;
    csv << '\n';
    for (const auto& r : rows) {
      csv << '"' << r.label << '"';
      for (const auto& v : r.values) csv << ',' << (v ? fmt(*v) : "null");
      csv << '\n';
    }
  }

  std::size_t label_width = 3;
  for (const auto& r : rows) label_width = std::max(label_width, r.label.size());
  std::ostringstream text;
  char cell[64];
  std::snprintf(cell, sizeof cell, "%-*s", static_cast<int>(label_width), "run");
  text << cell;
  for (const auto& name : kMetricNames) {
    std::snprintf(cell, sizeof cell, " %15s", name.c_str());
    text << cell;
  }
  text << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::snprintf(cell, sizeof cell, "%-*s", static_cast<int>(label_width), rows[i].label.c_str());
    text << cell;
    for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
      const auto& v = rows[i].values[m];
      if (!v) {
        std::snprintf(cell, sizeof cell, " %15s", "null");
      } else {
        std::snprintf(cell, sizeof cell, " %14.6g%c", *v, best[m] == i ? '*' : ' ');
      }
      text << cell;
    }
    text << '\n';
  }
  text << "* best value per metric\n";
  return text.str();
}

}  // namespace mmdcal
