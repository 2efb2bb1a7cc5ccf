#pragma once

#include "preasp/types.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace preasp {

/// One row of an annotation CSV. Times are in ms; gold times may be absent at
/// prediction time.
struct AnnotationRecord {
  std::string example_id;
  std::string audio_path;
  std::string speaker_id;
  std::string word_id;
  std::optional<int> gold_ts_ms;
  std::optional<int> gold_te_ms;
  int window_start_ms = 0;
  int window_end_ms = 0;

  bool has_gold() const { return gold_ts_ms.has_value() && gold_te_ms.has_value(); }
  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

inline constexpr const char* kAnnotationHeader =
    "example_id,audio_path,speaker_id,word_id,gold_ts_ms,gold_te_ms,window_start_ms,window_end_ms";

/// Checks window ordering and that the window contains the gold pair when present.
void validate(const AnnotationRecord& record);

void write_annotations(std::ostream& out, const std::vector<AnnotationRecord>& records);
std::vector<AnnotationRecord> read_annotations(std::istream& in);
void write_annotations(const std::string& path, const std::vector<AnnotationRecord>& records);
std::vector<AnnotationRecord> read_annotations(const std::string& path);

/// Resolves a record's audio path against the directory holding the annotation file.
std::string resolve_audio_path(const std::string& annotation_path, const std::string& audio_path);

/// One row of a predictions CSV. A missing prediction marks a row-level failure.
struct PredictionRecord {
  std::string example_id;
  std::optional<Interval> pred;
  std::optional<Interval> gold;
  std::string error;  // not serialized

  friend bool operator==(const PredictionRecord& a, const PredictionRecord& b) {
    return a.example_id == b.example_id && a.pred == b.pred && a.gold == b.gold;
  }
};

inline constexpr const char* kPredictionHeader =
    "example_id,pred_ts_ms,pred_te_ms,gold_ts_ms,gold_te_ms";

void write_predictions(std::ostream& out, const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> read_predictions(std::istream& in);
void write_predictions(const std::string& path, const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> read_predictions(const std::string& path);

inline constexpr const char* kFeatureCsvHeader = "frame_ms,E_total,E_low,E_high,H_wiener,P_max,R_l,V,ZC";

void write_feature_csv(std::ostream& out, const FeatureSequence& features);
FeatureSequence read_feature_csv(std::istream& in);

}  // namespace preasp
