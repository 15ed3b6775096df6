#include "ecgreid/record.hpp"

#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "ecgreid/error.hpp"
#include "ecgreid/text.hpp"

namespace ecgreid {

using nlohmann::json;

std::string_view to_string(Gender g) { return g == Gender::M ? "M" : "F"; }

Gender parse_gender(std::string_view s) {
  if (s == "M") return Gender::M;
  if (s == "F") return Gender::F;
  throw ValidationError("gender must be \"M\" or \"F\", got \"" + std::string(s) + "\"");
}

void validate(const EcgRecord& r) {
  if (r.participant_id.empty()) throw ValidationError("empty participant_id");
  if (!(r.sampling_rate_hz > 0.0) || !std::isfinite(r.sampling_rate_hz))
    throw ValidationError(r.participant_id + ": sampling_rate_hz must be positive");
  if (r.age < kMinAge || r.age > kMaxAge)
    throw ValidationError(r.participant_id + ": age " + std::to_string(r.age) +
                          " outside supported range 21-89");
  if (r.samples.empty()) throw ValidationError(r.participant_id + ": no samples");
  for (std::size_t i = 0; i < r.samples.size(); ++i)
    if (!std::isfinite(r.samples[i]))
      throw ValidationError(r.participant_id + ": non-finite sample at index " +
                            std::to_string(i));
}

RecordMetadata parse_metadata(std::string_view json_text, const std::string& source) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(source, 1, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError(source + ": metadata must be a JSON object");
  for (const char* key : {"participant_id", "age", "gender", "sampling_rate_hz"})
    if (!j.contains(key)) throw ValidationError(source + ": missing key \"" + key + "\"");

  RecordMetadata m;
  const auto& id = j["participant_id"];
  if (id.is_string())
    m.participant_id = id.get<std::string>();
  else if (id.is_number_integer())
    m.participant_id = std::to_string(id.get<long long>());
  else
    throw ValidationError(source + ": participant_id must be a string");

  const auto& age = j["age"];
  if (age.is_number_integer()) {
    m.age = age.get<int>();
  } else if (age.is_number_float() && std::floor(age.get<double>()) == age.get<double>()) {
    m.age = static_cast<int>(age.get<double>());
  } else {
    throw ValidationError(source + ": age must be an integer");
  }
  if (!j["gender"].is_string()) throw ValidationError(source + ": gender must be a string");
  m.gender = parse_gender(j["gender"].get<std::string>());
  if (!j["sampling_rate_hz"].is_number())
    throw ValidationError(source + ": sampling_rate_hz must be a number");
  m.sampling_rate_hz = j["sampling_rate_hz"].get<double>();
  if (j.contains("source_label") && j["source_label"].is_string())
    m.source_label = j["source_label"].get<std::string>();
  return m;
}

std::string format_metadata(const EcgRecord& r) {
  json j = json::object();
  j["participant_id"] = r.participant_id;
  j["age"] = r.age;
  j["gender"] = std::string(to_string(r.gender));
  j["sampling_rate_hz"] = r.sampling_rate_hz;
  if (!r.source_label.empty()) j["source_label"] = r.source_label;
  return j.dump(2) + "\n";
}

namespace {

bool all_numeric(const std::vector<std::string_view>& fields) {
  for (const auto f : fields) {
    double v;
    if (!text::parse_double(f, v)) return false;
  }
  return true;
}

}  // namespace

std::vector<double> parse_signal_csv(std::string_view csv, const ReadOptions& options,
                                     const std::string& source) {
  std::vector<std::string_view> lines = text::split(csv, '\n');
  while (!lines.empty() && text::trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw ParseError(source, 1, "empty signal file");

  const auto first = text::split(lines[0], ',');
  const std::size_t n_cols = first.size();
  const bool has_header = !all_numeric(first);

  std::size_t col = 0;
  if (options.column) {
    long long idx;
    bool found = false;
    if (has_header) {
      for (std::size_t c = 0; c < n_cols; ++c)
        if (text::trim(first[c]) == *options.column) {
          col = c;
          found = true;
        }
    }
    if (!found && text::parse_int(*options.column, idx) && idx >= 0 &&
        static_cast<std::size_t>(idx) < n_cols) {
      col = static_cast<std::size_t>(idx);
      found = true;
    }
    if (!found) throw ConfigError(source + ": column \"" + *options.column + "\" not found");
  } else if (n_cols == 1) {
    col = 0;
  } else if (n_cols == 2 && (!has_header || (text::trim(first[0]) == "t" &&
                                             text::trim(first[1]) == "mv"))) {
    col = 1;
  } else {
    throw ConfigError(source + ": multi-column CSV requires an explicit column selection");
  }

  std::vector<double> samples;
  samples.reserve(lines.size());
  for (std::size_t li = has_header ? 1 : 0; li < lines.size(); ++li) {
    const auto line = text::trim(lines[li]);
    if (line.empty()) throw ParseError(source, li + 1, "blank line inside data");
    const auto fields = text::split(line, ',');
    if (fields.size() != n_cols)
      throw ParseError(source, li + 1,
                       "expected " + std::to_string(n_cols) + " fields, got " +
                           std::to_string(fields.size()));
    double v;
    if (!text::parse_double(fields[col], v))
      throw ParseError(source, li + 1, "not a number: \"" + std::string(fields[col]) + "\"");
    if (!std::isfinite(v))
      throw ValidationError(source + ":" + std::to_string(li + 1) + ": non-finite sample");
    samples.push_back(v);
  }
  return samples;
}

EcgRecord read_record(const std::string& signal_path, const std::string& metadata_path,
                      const ReadOptions& options) {
  const auto meta = parse_metadata(text::read_file(metadata_path), metadata_path);
  EcgRecord r;
  r.participant_id = meta.participant_id;
  r.age = meta.age;
  r.gender = meta.gender;
  r.sampling_rate_hz = meta.sampling_rate_hz;
  r.source_label = meta.source_label;
  r.samples = parse_signal_csv(text::read_file(signal_path), options, signal_path);

  if (options.segment_start_s || options.segment_duration_s) {
    const double fs = r.sampling_rate_hz;
    if (!(fs > 0.0)) throw ValidationError(metadata_path + ": sampling_rate_hz must be positive");
    const double start_s = options.segment_start_s.value_or(0.0);
    if (start_s < 0.0) throw ConfigError("segment start must be non-negative");
    const auto begin = static_cast<std::size_t>(std::llround(start_s * fs));
    std::size_t end = r.samples.size();
    if (options.segment_duration_s) {
      if (!(*options.segment_duration_s > 0.0))
        throw ConfigError("segment duration must be positive");
      end = begin + static_cast<std::size_t>(std::llround(*options.segment_duration_s * fs));
    }
    if (begin >= end || end > r.samples.size())
      throw ValidationError(signal_path + ": configured segment lies outside the recording");
    r.samples = std::vector<double>(r.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                                    r.samples.begin() + static_cast<std::ptrdiff_t>(end));
  }
  validate(r);
  return r;
}

std::string format_signal_csv(const EcgRecord& r) {
  std::string out = "t,mv\n";
  out.reserve(r.samples.size() * 24);
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    out += text::format_double(static_cast<double>(i) / r.sampling_rate_hz);
    out += ',';
    out += text::format_double(r.samples[i]);
    out += '\n';
  }
  return out;
}

void write_record(const EcgRecord& r, const std::string& signal_path,
                  const std::string& metadata_path) {
  text::write_file(signal_path, format_signal_csv(r));
  text::write_file(metadata_path, format_metadata(r));
}

std::vector<ManifestEntry> read_manifest(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  json j;
  try {
    j = json::parse(text::read_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw ParseError(manifest_path, 1, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("records") || !j["records"].is_array())
    throw InputError(manifest_path + ": expected an object with a \"records\" array");

  const fs::path base = fs::path(manifest_path).parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return (path.is_absolute() ? path : base / path).string();
  };

  std::vector<ManifestEntry> out;
  for (const auto& e : j["records"]) {
    if (!e.contains("signal") || !e.contains("metadata"))
      throw InputError(manifest_path + ": each record needs \"signal\" and \"metadata\"");
    ManifestEntry m;
    m.signal_path = resolve(e["signal"].get<std::string>());
    m.metadata_path = resolve(e["metadata"].get<std::string>());
    for (const auto& p : {m.signal_path, m.metadata_path})
      if (!fs::exists(p)) throw InputError("missing input file: " + p);
    if (e.contains("column")) {
      m.options.column = e["column"].is_string() ? e["column"].get<std::string>()
                                                 : std::to_string(e["column"].get<int>());
    }
    if (e.contains("segment_start_s")) m.options.segment_start_s = e["segment_start_s"].get<double>();
    if (e.contains("segment_duration_s"))
      m.options.segment_duration_s = e["segment_duration_s"].get<double>();
    out.push_back(std::move(m));
  }
  return out;
}

std::string format_manifest(const std::vector<ManifestEntry>& entries) {
  json records = json::array();
  for (const auto& e : entries) {
    json r = {{"signal", e.signal_path}, {"metadata", e.metadata_path}};
    if (e.options.column) r["column"] = *e.options.column;
    if (e.options.segment_start_s) r["segment_start_s"] = *e.options.segment_start_s;
    if (e.options.segment_duration_s) r["segment_duration_s"] = *e.options.segment_duration_s;
    records.push_back(std::move(r));
  }
  return json{{"records", records}}.dump(2) + "\n";
}

}  // namespace ecgreid
