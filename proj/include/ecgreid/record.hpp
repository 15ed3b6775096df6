#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ecgreid {

enum class Gender { M, F };

std::string_view to_string(Gender g);
Gender parse_gender(std::string_view s);

/// Combined age range of the supported cohorts; records outside it are rejected.
inline constexpr int kMinAge = 21;
inline constexpr int kMaxAge = 89;

/// One participant's single-lead trace plus metadata. Samples in millivolts.
struct EcgRecord {
  std::string participant_id;
  int age = 0;
  Gender gender = Gender::M;
  double sampling_rate_hz = 0.0;
  std::vector<double> samples;
  std::string source_label;

  double duration_s() const { return static_cast<double>(samples.size()) / sampling_rate_hz; }

  bool operator==(const EcgRecord&) const = default;
};

/// Throws ValidationError when an invariant does not hold.
void validate(const EcgRecord& record);

struct ReadOptions {
  /// Column to use from a multi-column CSV: header name or 0-based index.
  std::optional<std::string> column;
  std::optional<double> segment_start_s;
  std::optional<double> segment_duration_s;
};

struct RecordMetadata {
  std::string participant_id;
  int age = 0;
  Gender gender = Gender::M;
  double sampling_rate_hz = 0.0;
  std::string source_label;
};

RecordMetadata parse_metadata(std::string_view json_text, const std::string& source = "metadata");
std::string format_metadata(const EcgRecord& record);

/// Parses the signal CSV. `source` is used in error messages.
std::vector<double> parse_signal_csv(std::string_view csv, const ReadOptions& options,
                                     const std::string& source = "signal");

EcgRecord read_record(const std::string& signal_path, const std::string& metadata_path,
                      const ReadOptions& options = {});

/// `t,mv` CSV with shortest round-trip decimal text.
std::string format_signal_csv(const EcgRecord& record);
void write_record(const EcgRecord& record, const std::string& signal_path,
                  const std::string& metadata_path);

struct ManifestEntry {
  std::string signal_path;
  std::string metadata_path;
  ReadOptions options;
};

/// Manifest JSON: {"records": [{"signal", "metadata", "column"?, "segment_start_s"?,
/// "segment_duration_s"?}]}. Relative paths resolve against the manifest directory.
std::vector<ManifestEntry> read_manifest(const std::string& manifest_path);
std::string format_manifest(const std::vector<ManifestEntry>& entries);

}  // namespace ecgreid
