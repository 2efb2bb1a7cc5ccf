#include "preasp/annotation.hpp"

#include "preasp/text_io.hpp"

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>

namespace preasp {

namespace {

constexpr const char* kMissing = "NA";

std::string opt_to_string(const std::optional<int>& v) {
  return v ? std::to_string(*v) : std::string();
}

std::optional<int> parse_opt_int(const std::string& field) {
  const std::string t = text_io::trim(field);
  if (t.empty() || t == kMissing) return std::nullopt;
  return static_cast<int>(text_io::parse_long(t));
}

// Reads the header line and then calls fn(fields, line_number) per non-empty row.
template <typename Fn>
void for_each_row(std::istream& in, const std::string& expected_header, std::size_t columns, Fn&& fn) {
  std::string line;
  if (!std::getline(in, line) || text_io::trim(line) != expected_header) {
    throw FormatError("bad CSV header: expected '" + expected_header + "'");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (text_io::trim(line).empty()) continue;
    const auto fields = text_io::split(line, ',');
    if (fields.size() != columns) {
      throw FormatError("line " + std::to_string(line_no) + ": expected " + std::to_string(columns) +
                        " fields, got " + std::to_string(fields.size()));
    }
    try {
      fn(fields);
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void check_field(const std::string& value, const char* name) {
  if (value.find(',') != std::string::npos || value.find('\n') != std::string::npos) {
    throw InvalidInput(std::string(name) + " may not contain commas or newlines: " + value);
  }
}

}  // namespace

void validate(const AnnotationRecord& r) {
  if (r.example_id.empty()) throw DataError("annotation record without example_id");
  if (!(r.window_start_ms < r.window_end_ms)) {
    throw DataError("example '" + r.example_id + "': window_start must be before window_end");
  }
  if (r.gold_ts_ms.has_value() != r.gold_te_ms.has_value()) {
    throw DataError("example '" + r.example_id + "': gold onset and offset must both be present");
  }
  if (r.has_gold()) {
    if (!(*r.gold_ts_ms < *r.gold_te_ms)) {
      throw DataError("example '" + r.example_id + "': gold onset must be before offset");
    }
    if (*r.gold_ts_ms < r.window_start_ms || *r.gold_te_ms > r.window_end_ms) {
      throw DataError("example '" + r.example_id + "': window does not contain the gold pair");
    }
  }
}

void write_annotations(std::ostream& out, const std::vector<AnnotationRecord>& records) {
  out << kAnnotationHeader << '\n';
  for (const auto& r : records) {
    check_field(r.example_id, "example_id");
    check_field(r.audio_path, "audio_path");
    check_field(r.speaker_id, "speaker_id");
    check_field(r.word_id, "word_id");
    out << r.example_id << ',' << r.audio_path << ',' << r.speaker_id << ',' << r.word_id << ','
        << opt_to_string(r.gold_ts_ms) << ',' << opt_to_string(r.gold_te_ms) << ','
        << r.window_start_ms << ',' << r.window_end_ms << '\n';
  }
}

std::vector<AnnotationRecord> read_annotations(std::istream& in) {
  std::vector<AnnotationRecord> out;
  for_each_row(in, kAnnotationHeader, 8, [&out](const std::vector<std::string>& f) {
    AnnotationRecord r;
    r.example_id = text_io::trim(f[0]);
    r.audio_path = text_io::trim(f[1]);
    r.speaker_id = text_io::trim(f[2]);
    r.word_id = text_io::trim(f[3]);
    r.gold_ts_ms = parse_opt_int(f[4]);
    r.gold_te_ms = parse_opt_int(f[5]);
    r.window_start_ms = static_cast<int>(text_io::parse_long(f[6]));
    r.window_end_ms = static_cast<int>(text_io::parse_long(f[7]));
    try {
      validate(r);
    } catch (const DataError& e) {
      throw FormatError(e.what());
    }
    out.push_back(std::move(r));
  });
  return out;
}

void write_annotations(const std::string& path, const std::vector<AnnotationRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write annotation file: " + path);
  write_annotations(out, records);
  if (!out) throw DataError("write failed: " + path);
}

std::vector<AnnotationRecord> read_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open annotation file: " + path);
  return read_annotations(in);
}

std::string resolve_audio_path(const std::string& annotation_path, const std::string& audio_path) {
  const std::filesystem::path audio(audio_path);
  if (audio.is_absolute()) return audio.string();
  return (std::filesystem::path(annotation_path).parent_path() / audio).string();
}

void write_predictions(std::ostream& out, const std::vector<PredictionRecord>& records) {
  out << kPredictionHeader << '\n';
  auto field = [](const std::optional<Interval>& iv, bool onset) {
    if (!iv) return std::string(kMissing);
    return std::to_string(onset ? iv->ts : iv->te);
  };
  for (const auto& r : records) {
    check_field(r.example_id, "example_id");
    out << r.example_id << ',' << field(r.pred, true) << ',' << field(r.pred, false) << ','
        << field(r.gold, true) << ',' << field(r.gold, false) << '\n';
  }
}

std::vector<PredictionRecord> read_predictions(std::istream& in) {
  std::vector<PredictionRecord> out;
  for_each_row(in, kPredictionHeader, 5, [&out](const std::vector<std::string>& f) {
    auto pair = [](const std::string& a, const std::string& b) -> std::optional<Interval> {
      const auto ts = parse_opt_int(a);
      const auto te = parse_opt_int(b);
      if (ts.has_value() != te.has_value()) throw FormatError("half-specified interval");
      if (!ts) return std::nullopt;
      return Interval{*ts, *te};
    };
    PredictionRecord r;
    r.example_id = text_io::trim(f[0]);
    r.pred = pair(f[1], f[2]);
    r.gold = pair(f[3], f[4]);
    out.push_back(std::move(r));
  });
  return out;
}

void write_predictions(const std::string& path, const std::vector<PredictionRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write predictions file: " + path);
  write_predictions(out, records);
  if (!out) throw DataError("write failed: " + path);
}

std::vector<PredictionRecord> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions file: " + path);
  return read_predictions(in);
}

void write_feature_csv(std::ostream& out, const FeatureSequence& features) {
  out << kFeatureCsvHeader << '\n';
  for (Eigen::Index t = 0; t < features.rows(); ++t) {
    out << t;
    for (int f = 0; f < kNumFeatures; ++f) out << ',' << text_io::format_double(features(t, f));
    out << '\n';
  }
}

FeatureSequence read_feature_csv(std::istream& in) {
  std::vector<FeatureRow<double>> rows;
  for_each_row(in, kFeatureCsvHeader, kNumFeatures + 1, [&rows](const std::vector<std::string>& f) {
    FeatureRow<double> row;
    for (int j = 0; j < kNumFeatures; ++j) row[j] = text_io::parse_double(f[j + 1]);
    rows.push_back(row);
  });
  FeatureSequence out(static_cast<Eigen::Index>(rows.size()), kNumFeatures);
  for (std::size_t t = 0; t < rows.size(); ++t) out.row(static_cast<Eigen::Index>(t)) = rows[t];
  return out;
}

}  // namespace preasp
