#include "preasp/cli.hpp"

#include "preasp/text_io.hpp"
#include "preasp/wav.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace preasp::cli {

namespace {

const std::vector<std::string> kSynthKeys = {"n", "speakers", "sample_rate", "seed", "jobs"};

const std::vector<std::string> kModelKeys = {
    "model_type",   "C",         "epsilon",   "min_duration_ms", "max_duration_ms", "interval_row",
    "pa_max_epochs", "pa_patience", "pa_average", "lr",            "batch_size",      "nn_patience",
    "nn_max_epochs", "dropout",   "smoothing_ms", "threshold",     "val_fraction",    "tolerance",
    "thresholds",   "seed",      "jobs"};

std::string flag_for(const std::string& key) {
  std::string flag = "--" + key;
  std::replace(flag.begin(), flag.end(), '_', '-');
  return flag;
}

double to_double(const std::string& key, const std::string& value) {
  try {
    return text_io::parse_double(value);
  } catch (const FormatError&) {
    throw UsageError(key + ": expected a number, got '" + value + "'");
  }
}

long to_long(const std::string& key, const std::string& value) {
  try {
    return text_io::parse_long(value);
  } catch (const FormatError&) {
    throw UsageError(key + ": expected an integer, got '" + value + "'");
  }
}

int to_int(const std::string& key, const std::string& value, long lo) {
  const long v = to_long(key, value);
  if (v < lo || v > 1'000'000'000L) throw UsageError(key + ": value out of range: " + value);
  return static_cast<int>(v);
}

double to_positive(const std::string& key, const std::string& value) {
  const double v = to_double(key, value);
  if (!(v > 0.0)) throw UsageError(key + ": must be positive");
  return v;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw UsageError(key + ": expected true or false, got '" + value + "'");
}

void require_readable(const std::string& path, const char* what) {
  if (!std::filesystem::exists(path)) throw DataError(std::string(what) + " not found: " + path);
}

// Shuffles indices with the run seed and holds out val_fraction (at least one) for validation.
void split_validation(std::size_t n, double val_fraction, std::uint64_t seed, std::vector<std::size_t>& train,
                      std::vector<std::size_t>& validation) {
  if (n < 2) throw TrainingDataError("need at least two labelled examples to train");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(validation.begin(), validation.end());
  std::sort(train.begin(), train.end());
}

std::vector<Example> gather(std::span<const Example> examples, const std::vector<std::size_t>& idx) {
  std::vector<Example> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(examples[i]);
  return out;
}

Model train_on(const RunConfig& config, std::span<const Example> train, std::span<const Example> validation,
               std::ostream* log) {
  if (config.model == ModelType::kStructured) {
    const auto result = train_structured(train, validation, config.structured_config());
    if (log) {
      *log << "epoch,train_loss,validation_loss,best_validation_loss,updates\n";
      double best = std::numeric_limits<double>::infinity();
      for (const auto& h : result.history) {
        best = std::min(best, h.validation_loss);
        *log << h.epoch << ',' << text_io::format_double(h.train_loss) << ','
             << text_io::format_double(h.validation_loss) << ',' << text_io::format_double(best) << ','
             << h.updates << '\n';
      }
      *log << "# best epoch " << result.best_epoch << '\n';
    }
    return result.model;
  }
  const auto result = train_frame_model(train, validation, config.frame_config());
  if (log) {
    *log << "epoch,train_loss,validation_loss,best_validation_loss\n";
    double best = std::numeric_limits<double>::infinity();
    for (const auto& h : result.history) {
      best = std::min(best, h.validation_loss);
      *log << h.epoch << ',' << text_io::format_double(h.train_loss) << ','
           << text_io::format_double(h.validation_loss) << ',' << text_io::format_double(best) << '\n';
    }
    *log << "# best epoch " << result.best_epoch << '\n';
  }
  return result.model;
}

void require_gold(std::span<const Example> examples) {
  for (const auto& ex : examples) {
    if (!ex.has_gold) throw TrainingDataError("example '" + ex.id + "' has no gold labels");
  }
}

void require_loaded(const Dataset& data) {
  for (std::size_t i = 0; i < data.errors.size(); ++i) {
    if (!data.errors[i].empty()) {
      throw DataError("example '" + data.records[i].example_id + "': " + data.errors[i]);
    }
  }
}

std::vector<Fold> parse_split(const std::string& split, const std::vector<Example>& examples,
                              const RunConfig& config) {
  if (split == "loso") {
    std::vector<std::string> speakers;
    for (const auto& ex : examples) speakers.push_back(ex.speaker);
    return loso_split(speakers, config.val_fraction, config.seed);
  }
  int k = 5;
  if (split.rfind("kfold", 0) == 0) {
    const std::string rest = split.substr(5);
    if (!rest.empty()) {
      if (rest[0] != ':') throw UsageError("--split: expected kfold:K or loso, got '" + split + "'");
      k = to_int("--split", rest.substr(1), 2);
    }
    return kfold_split(examples.size(), k, config.val_fraction, config.seed);
  }
  throw UsageError("--split: expected kfold:K or loso, got '" + split + "'");
}

void write_report(const std::string& path, std::span<const EvalReport> reports,
                  std::span<const std::string> labels) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report: " + path);
  write_report_csv(out, reports, labels);
}

// --- commands -------------------------------------------------------------

int cmd_synth(const RunConfig& config, const std::string& out_dir, std::ostream& out) {
  const GenParams params = config.gen_params();
  params.validate();
  std::vector<SynthToken> tokens(static_cast<std::size_t>(config.n));
  parallel_for(tokens.size(), config.jobs,
               [&](std::size_t i) { tokens[i] = generate_corpus_token(params, static_cast<int>(i)); });
  const std::string csv = write_corpus(out_dir, tokens);
  out << "wrote " << tokens.size() << " tokens from " << params.speakers << " speakers; annotations: " << csv
      << '\n';
  return kExitOk;
}

int cmd_extract(const RunConfig& config, const std::string& annotations, const std::string& wav,
                const std::string& out_path, std::ostream& out, std::ostream& err) {
  if (annotations.empty() == wav.empty()) throw UsageError("extract: give exactly one of --annotations or --wav");
  if (!wav.empty()) {
    require_readable(wav, "audio file");
    const FeatureSequence features = extract_features(read_wav(wav));
    std::ofstream file(out_path);
    if (!file) throw DataError("cannot write feature file: " + out_path);
    write_feature_csv(file, features);
    out << "wrote " << features.rows() << " frames to " << out_path << '\n';
    return kExitOk;
  }
  require_readable(annotations, "annotation file");
  const Dataset data = load_dataset(annotations, config.jobs);
  std::error_code ec;
  std::filesystem::create_directories(out_path, ec);
  if (ec || !std::filesystem::is_directory(out_path)) throw DataError("cannot create output directory: " + out_path);
  std::size_t written = 0;
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    if (!data.errors[i].empty()) {
      err << "error: " << data.records[i].example_id << ": " << data.errors[i] << '\n';
      continue;
    }
    const auto path = std::filesystem::path(out_path) / (data.examples[i].id + ".csv");
    std::ofstream file(path);
    if (!file) throw DataError("cannot write feature file: " + path.string());
    write_feature_csv(file, data.examples[i].features);
    ++written;
  }
  out << "wrote " << written << " feature files to " << out_path << '\n';
  if (data.failures() > 0) {
    err << data.failures() << " of " << data.examples.size() << " records failed\n";
    return kExitData;
  }
  return kExitOk;
}

int cmd_train(const RunConfig& config, const std::string& annotations, const std::string& model_path,
              const std::string& log_path, std::ostream& out, std::ostream& err) {
  require_readable(annotations, "annotation file");
  const Dataset data = load_dataset(annotations, config.jobs);
  require_loaded(data);
  require_gold(data.examples);
  std::ofstream log_file;
  std::ostream* log = &err;
  if (!log_path.empty()) {
    log_file.open(log_path);
    if (!log_file) throw DataError("cannot write log: " + log_path);
    log = &log_file;
  }
  const Model model = train_model(config, data.examples, log);
  save_model(model_path, model);
  out << "trained " << (config.model == ModelType::kStructured ? "structured" : "frame") << " model on "
      << data.examples.size() << " examples; saved to " << model_path << '\n';
  return kExitOk;
}

int cmd_predict(const RunConfig& config, const std::string& model_path, const std::string& annotations,
                const std::string& out_path, std::ostream& out, std::ostream& err) {
  require_readable(model_path, "model file");
  require_readable(annotations, "annotation file");
  const Model model = load_model(model_path);
  Dataset data = load_dataset(annotations, config.jobs);
  std::vector<PredictionRecord> rows(data.records.size());
  parallel_for(rows.size(), config.jobs, [&](std::size_t i) {
    const auto& record = data.records[i];
    rows[i].example_id = record.example_id;
    if (record.has_gold()) rows[i].gold = Interval{*record.gold_ts_ms, *record.gold_te_ms};
    if (!data.errors[i].empty()) {
      rows[i].error = data.errors[i];
      return;
    }
    try {
      rows[i].pred = predict(model, data.examples[i]);
    } catch (const std::exception& e) {
      rows[i].error = e.what();
    }
  });
  write_predictions(out_path, rows);
  std::size_t failed = 0;
  for (const auto& r : rows) {
    if (!r.error.empty()) {
      ++failed;
      err << "error: " << r.example_id << ": " << r.error << '\n';
    }
  }
  out << "wrote " << rows.size() << " predictions to " << out_path << '\n';
  if (failed > 0) {
    err << failed << " of " << rows.size() << " records failed; their rows are NA\n";
    return kExitData;
  }
  return kExitOk;
}

int cmd_evaluate_predictions(const RunConfig& config, const std::string& predictions,
                             const std::string& annotations, const std::string& report_csv, std::ostream& out) {
  require_readable(predictions, "predictions file");
  const auto rows = read_predictions(predictions);
  std::map<std::string, Interval> gold_by_id;
  if (!annotations.empty()) {
    require_readable(annotations, "annotation file");
    for (const auto& r : read_annotations(annotations)) {
      if (!r.has_gold()) throw DataError("annotation '" + r.example_id + "' has no gold labels");
      if (!gold_by_id.emplace(r.example_id, Interval{*r.gold_ts_ms, *r.gold_te_ms}).second) {
        throw DataError("duplicate annotation id '" + r.example_id + "'");
      }
    }
    if (gold_by_id.size() != rows.size()) {
      throw DataError("predictions and annotations cover different ids (" + std::to_string(rows.size()) +
                      " vs " + std::to_string(gold_by_id.size()) + ")");
    }
  }
  std::vector<Interval> preds, golds;
  for (const auto& r : rows) {
    if (!r.pred) throw DataError("no prediction for '" + r.example_id + "'");
    std::optional<Interval> gold = r.gold;
    if (!annotations.empty()) {
      const auto it = gold_by_id.find(r.example_id);
      if (it == gold_by_id.end()) throw DataError("prediction id '" + r.example_id + "' not in annotations");
      gold = it->second;
    }
    if (!gold) throw DataError("no gold pair for '" + r.example_id + "'");
    preds.push_back(*r.pred);
    golds.push_back(*gold);
  }
  const EvalReport report = evaluate(preds, golds, config.thresholds, config.tolerance);
  print_report(out, report);
  if (!report_csv.empty()) {
    const std::vector<std::string> labels{"all"};
    write_report(report_csv, std::span<const EvalReport>(&report, 1), labels);
  }
  return kExitOk;
}

int cmd_evaluate_split(const RunConfig& config, const std::string& split, const std::string& annotations,
                       const std::string& report_csv, std::ostream& out) {
  if (annotations.empty()) throw UsageError("evaluate --split needs --annotations");
  require_readable(annotations, "annotation file");
  const Dataset data = load_dataset(annotations, config.jobs);
  require_loaded(data);
  require_gold(data.examples);
  const auto folds = parse_split(split, data.examples, config);
  const CrossValidation cv = cross_validate(config, data.examples, folds);
  for (std::size_t i = 0; i < cv.folds.size(); ++i) {
    print_report(out, cv.folds[i], cv.names[i]);
    out << '\n';
  }
  print_report(out, cv.overall, "aggregate (" + split + ")");
  if (!report_csv.empty()) {
    std::vector<EvalReport> reports = cv.folds;
    std::vector<std::string> labels = cv.names;
    reports.push_back(cv.overall);
    labels.push_back("aggregate");
    write_report(report_csv, reports, labels);
  }
  return kExitOk;
}

}  // namespace

StructuredTrainConfig RunConfig::structured_config() const {
  StructuredTrainConfig c;
  c.C = C;
  c.epsilon = epsilon;
  c.constraints = {min_duration_ms, max_duration_ms};
  c.interval_row = interval_row;
  c.max_epochs = pa_max_epochs;
  c.patience = pa_patience;
  c.average_weights = pa_average;
  c.seed = seed;
  return c;
}

FrameTrainConfig RunConfig::frame_config() const {
  FrameTrainConfig c;
  c.learning_rate = lr;
  c.batch_size = batch_size;
  c.patience = nn_patience;
  c.max_epochs = nn_max_epochs;
  c.dropout_rate = dropout;
  c.seed = seed;
  c.decode.smoothing_ms = smoothing_ms;
  c.decode.threshold = threshold;
  return c;
}

GenParams RunConfig::gen_params() const {
  GenParams p;
  p.speakers = speakers;
  p.sample_rate = sample_rate;
  p.seed = seed;
  return p;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k = kModelKeys;
    for (const auto& s : kSynthKeys) {
      if (std::find(k.begin(), k.end(), s) == k.end()) k.push_back(s);
    }
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& c, const std::string& key, const std::string& raw) {
  const std::string value = text_io::trim(raw);
  if (key == "model_type") {
    if (value == "frame") {
      c.model = ModelType::kFrame;
    } else if (value == "structured") {
      c.model = ModelType::kStructured;
    } else {
      throw UsageError("model_type: expected frame or structured, got '" + value + "'");
    }
  } else if (key == "C") {
    c.C = to_positive(key, value);
  } else if (key == "epsilon") {
    c.epsilon = to_double(key, value);
    if (c.epsilon < 0.0) throw UsageError("epsilon: must be non-negative");
  } else if (key == "min_duration_ms") {
    c.min_duration_ms = to_int(key, value, 1);
  } else if (key == "max_duration_ms") {
    c.max_duration_ms = to_int(key, value, 1);
  } else if (key == "interval_row") {
    if (value == "boundary_diffs") {
      c.interval_row = IntervalRowReading::kWithBoundaryDiffs;
    } else if (value == "plain") {
      c.interval_row = IntervalRowReading::kPlain;
    } else {
      throw UsageError("interval_row: expected boundary_diffs or plain, got '" + value + "'");
    }
  } else if (key == "pa_max_epochs") {
    c.pa_max_epochs = to_int(key, value, 1);
  } else if (key == "pa_patience") {
    c.pa_patience = to_int(key, value, 1);
  } else if (key == "pa_average") {
    c.pa_average = to_bool(key, value);
  } else if (key == "lr") {
    c.lr = to_positive(key, value);
  } else if (key == "batch_size") {
    c.batch_size = to_int(key, value, 1);
  } else if (key == "nn_patience") {
    c.nn_patience = to_int(key, value, 1);
  } else if (key == "nn_max_epochs") {
    c.nn_max_epochs = to_int(key, value, 1);
  } else if (key == "dropout") {
    c.dropout = to_double(key, value);
    if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw UsageError("dropout: must be in [0, 1)");
  } else if (key == "smoothing_ms") {
    c.smoothing_ms = to_int(key, value, 1);
  } else if (key == "threshold") {
    c.threshold = to_double(key, value);
    if (!(c.threshold > 0.0 && c.threshold < 1.0)) throw UsageError("threshold: must be in (0, 1)");
  } else if (key == "val_fraction") {
    c.val_fraction = to_double(key, value);
    if (!(c.val_fraction > 0.0 && c.val_fraction < 1.0)) throw UsageError("val_fraction: must be in (0, 1)");
  } else if (key == "tolerance") {
    if (value == "duration") {
      c.tolerance = ToleranceMode::kDuration;
    } else if (value == "both") {
      c.tolerance = ToleranceMode::kBothBoundaries;
    } else {
      throw UsageError("tolerance: expected duration or both, got '" + value + "'");
    }
  } else if (key == "thresholds") {
    std::vector<double> t;
    for (const auto& part : text_io::split(value, ',')) t.push_back(to_positive(key, text_io::trim(part)));
    if (t.empty()) throw UsageError("thresholds: empty list");
    c.thresholds = std::move(t);
  } else if (key == "seed") {
    const long v = to_long(key, value);
    if (v < 0) throw UsageError("seed: must be non-negative");
    c.seed = static_cast<std::uint64_t>(v);
  } else if (key == "jobs") {
    c.jobs = to_int(key, value, 1);
  } else if (key == "n") {
    c.n = to_int(key, value, 1);
  } else if (key == "speakers") {
    c.speakers = to_int(key, value, 1);
  } else if (key == "sample_rate") {
    c.sample_rate = to_int(key, value, 8000);
  } else {
    throw UsageError("unknown config key '" + key + "'");
  }
}

void apply_config_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (text_io::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set_config_value(config, text_io::trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const UsageError& e) {
      throw UsageError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void save_model(const std::string& path, const Model& model) {
  std::visit(
      [&path](const auto& m) {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, FrameModel>) {
          save_frame_model(path, m);
        } else {
          save_structured_model(path, m);
        }
      },
      model);
}

Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file: " + path);
  std::string header;
  std::getline(in, header);
  header = text_io::trim(header);
  in.clear();
  in.seekg(0);
  if (header == kFrameModelHeader) return load_frame_model(in);
  if (header == kStructuredModelHeader) return load_structured_model(in);
  throw FormatError("unrecognised model file header '" + header + "' in " + path);
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::clamp<long>(jobs, 1, static_cast<long>(std::max<std::size_t>(n, 1))));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(work);
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

Example make_example(const AnnotationRecord& record, FeatureSequence features) {
  Example ex;
  ex.id = record.example_id;
  ex.speaker = record.speaker_id;
  ex.word = record.word_id;
  ex.features = std::move(features);
  ex.has_gold = record.has_gold();
  if (ex.has_gold) ex.gold = {*record.gold_ts_ms, *record.gold_te_ms};
  ex.window_start = record.window_start_ms;
  ex.window_end = record.window_end_ms;
  return ex;
}

std::size_t Dataset::failures() const {
  return static_cast<std::size_t>(
      std::count_if(errors.begin(), errors.end(), [](const std::string& e) { return !e.empty(); }));
}

Dataset load_dataset(const std::string& annotation_path, int jobs, const AcousticsConfig& acoustics) {
  Dataset data;
  data.records = read_annotations(annotation_path);
  const std::size_t n = data.records.size();
  data.examples.resize(n);
  data.errors.resize(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const auto& record = data.records[i];
    try {
      const std::string path = resolve_audio_path(annotation_path, record.audio_path);
      if (!std::filesystem::exists(path)) throw DataError("audio file not found: " + path);
      FeatureSequence features = extract_features(read_wav(path), acoustics);
      if (record.window_start_ms >= features.rows()) {
        throw DataError("window starts after the end of the audio");
      }
      if (record.has_gold() && *record.gold_te_ms >= features.rows()) {
        throw DataError("gold offset lies beyond the end of the audio");
      }
      data.examples[i] = make_example(record, std::move(features));
    } catch (const std::exception& e) {
      data.examples[i] = make_example(record, FeatureSequence(0, kNumFeatures));
      data.errors[i] = e.what();
    }
  });
  return data;
}

Model train_model(const RunConfig& config, std::span<const Example> examples, std::ostream* log) {
  require_gold(examples);
  std::vector<std::size_t> train_idx, val_idx;
  split_validation(examples.size(), config.val_fraction, config.seed, train_idx, val_idx);
  const auto train = gather(examples, train_idx);
  const auto validation = gather(examples, val_idx);
  return train_on(config, train, validation, log);
}

SearchWindow example_window(const Example& example) {
  const int last_frame = example.num_frames() - 1;
  if (last_frame < 0) throw InvalidInput("example '" + example.id + "' has no frames");
  return {std::clamp(example.window_start, 0, last_frame), std::clamp(example.window_end, 0, last_frame)};
}

Interval predict(const Model& model, const Example& example) {
  const SearchWindow window = example_window(example);
  if (const auto* frame = std::get_if<FrameModel>(&model)) {
    return decode(*frame, example.features, window.first, window.last).interval;
  }
  return infer(std::get<StructuredModel>(model), example.features, window);
}

std::vector<Interval> predict_all(const Model& model, std::span<const Example> examples, int jobs) {
  std::vector<Interval> out(examples.size());
  parallel_for(examples.size(), jobs, [&](std::size_t i) { out[i] = predict(model, examples[i]); });
  return out;
}

CrossValidation cross_validate(const RunConfig& config, std::span<const Example> examples,
                               std::span<const Fold> folds) {
  require_gold(examples);
  CrossValidation cv;
  cv.names.resize(folds.size());
  cv.folds.resize(folds.size());
  parallel_for(folds.size(), config.jobs, [&](std::size_t f) {
    const Fold& fold = folds[f];
    const auto train = gather(examples, fold.train);
    const auto validation = gather(examples, fold.validation);
    const auto test = gather(examples, fold.test);
    const Model model = train_on(config, train, validation, nullptr);
    const auto preds = predict_all(model, test, 1);
    std::vector<Interval> golds;
    for (const auto& ex : test) golds.push_back(ex.gold);
    cv.names[f] = fold.name;
    cv.folds[f] = evaluate(preds, golds, config.thresholds, config.tolerance);
  });
  cv.overall = aggregate(cv.folds);
  return cv;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pre-aspiration onset/offset measurement"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> key_options;
  std::string config_path, out_path, annotations, wav, model_path, log_path, predictions, split, report_csv;

  auto add_keys = [&](CLI::App* sub, const std::vector<std::string>& keys) {
    for (const auto& key : keys) {
      key_options.emplace_back(key, sub->add_option(flag_for(key), values[key], "config key " + key));
    }
    sub->add_option("--config", config_path, "key = value config file; flags override it");
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus (WAVs + annotations.csv)");
  synth->add_option("--out", out_path, "Output directory")->required();
  add_keys(synth, kSynthKeys);

  auto* extract = app.add_subcommand("extract", "Write per-frame feature CSVs");
  extract->add_option("--annotations", annotations, "Annotation CSV");
  extract->add_option("--wav", wav, "Single WAV file");
  extract->add_option("--out", out_path, "Output directory (or file with --wav)")->required();
  add_keys(extract, {"jobs"});

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--annotations", annotations, "Annotation CSV with gold labels")->required();
  train->add_option("--out", out_path, "Model file to write")->required();
  train->add_option("--log", log_path, "Per-epoch log (CSV); defaults to stderr");
  add_keys(train, kModelKeys);

  auto* predict_cmd = app.add_subcommand("predict", "Predict onset/offset pairs");
  predict_cmd->add_option("--model", model_path, "Model file")->required();
  predict_cmd->add_option("--annotations", annotations, "Annotation CSV (windows required)")->required();
  predict_cmd->add_option("--out", out_path, "Predictions CSV to write")->required();
  add_keys(predict_cmd, {"jobs"});

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score predictions or run a cross-validation");
  evaluate_cmd->add_option("--predictions", predictions, "Predictions CSV");
  evaluate_cmd->add_option("--annotations", annotations, "Gold annotations");
  evaluate_cmd->add_option("--split", split, "kfold:K or loso (train and test per fold)");
  evaluate_cmd->add_option("--report-csv", report_csv, "Also write the report as CSV");
  add_keys(evaluate_cmd, kModelKeys);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    RunConfig config;
    if (!config_path.empty()) apply_config_file(config, config_path);
    for (const auto& [key, option] : key_options) {
      if (option->count() > 0) set_config_value(config, key, values[key]);
    }
    if (config.min_duration_ms >= config.max_duration_ms) {
      throw UsageError("min_duration_ms must be below max_duration_ms");
    }
    if (synth->parsed()) return cmd_synth(config, out_path, out);
    if (extract->parsed()) return cmd_extract(config, annotations, wav, out_path, out, err);
    if (train->parsed()) return cmd_train(config, annotations, out_path, log_path, out, err);
    if (predict_cmd->parsed()) return cmd_predict(config, model_path, annotations, out_path, out, err);
    if (!split.empty()) {
      if (!predictions.empty()) throw UsageError("evaluate: --split and --predictions are exclusive");
      return cmd_evaluate_split(config, split, annotations, report_csv, out);
    }
    if (predictions.empty()) throw UsageError("evaluate: give --predictions or --split");
    return cmd_evaluate_predictions(config, predictions, annotations, report_csv, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidInput& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const InferenceError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace preasp::cli
