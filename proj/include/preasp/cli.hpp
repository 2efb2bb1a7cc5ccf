#pragma once

#include "preasp/acoustics.hpp"
#include "preasp/annotation.hpp"
#include "preasp/evaluation.hpp"
#include "preasp/frame_model.hpp"
#include "preasp/structured_model.hpp"
#include "preasp/synthdata.hpp"

#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace preasp::cli {

/// Bad flags, unknown config keys, malformed values. Maps to exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitInternal = 3;

enum class ModelType { kFrame, kStructured };

struct RunConfig {
  ModelType model = ModelType::kStructured;

  // structured
  double C = 50.0;
  double epsilon = 2.0;
  int min_duration_ms = 5;
  int max_duration_ms = 150;
  IntervalRowReading interval_row = IntervalRowReading::kWithBoundaryDiffs;
  int pa_max_epochs = 50;
  int pa_patience = 5;
  bool pa_average = false;

  // frame
  double lr = 0.01;
  int batch_size = 32;
  int nn_patience = 10;
  int nn_max_epochs = 200;
  double dropout = 0.3;
  int smoothing_ms = 9;
  double threshold = 0.5;

  // protocol
  double val_fraction = 0.15;
  ToleranceMode tolerance = ToleranceMode::kDuration;
  std::vector<double> thresholds{5.0, 10.0, 15.0, 20.0};
  std::uint64_t seed = 1;
  int jobs = 1;

  // synthetic corpus
  int n = 500;
  int speakers = 8;
  int sample_rate = 16000;

  StructuredTrainConfig structured_config() const;
  FrameTrainConfig frame_config() const;
  GenParams gen_params() const;
};

/// Every key accepted by config files and by the matching `--key` flags.
const std::vector<std::string>& config_keys();

/// Throws UsageError for unknown keys or unparsable values.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

/// Flat `key = value` lines; `#` starts a comment.
void apply_config_file(RunConfig& config, const std::string& path);

using Model = std::variant<FrameModel, StructuredModel>;

void save_model(const std::string& path, const Model& model);
/// Dispatches on the header line; unknown headers are a FormatError.
Model load_model(const std::string& path);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception is rethrown.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

Example make_example(const AnnotationRecord& record, FeatureSequence features);

struct Dataset {
  std::vector<AnnotationRecord> records;
  std::vector<Example> examples;    // one per record; features empty when loading failed
  std::vector<std::string> errors;  // one per record; empty on success
  std::size_t failures() const;
};

/// Reads the annotation file and extracts features for every record.
Dataset load_dataset(const std::string& annotation_path, int jobs, const AcousticsConfig& acoustics = {});

/// Trains the configured model. `val_fraction` of the examples (seeded shuffle) are held
/// out for early stopping. Per-epoch lines go to `log` when given.
Model train_model(const RunConfig& config, std::span<const Example> examples, std::ostream* log = nullptr);

SearchWindow example_window(const Example& example);
Interval predict(const Model& model, const Example& example);
std::vector<Interval> predict_all(const Model& model, std::span<const Example> examples, int jobs);

struct CrossValidation {
  std::vector<std::string> names;
  std::vector<EvalReport> folds;
  EvalReport overall;
};

/// Trains and tests on every fold, then aggregates weighted by test-set size.
CrossValidation cross_validate(const RunConfig& config, std::span<const Example> examples,
                               std::span<const Fold> folds);

/// Entry point shared by the executable and the tests. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace preasp::cli
