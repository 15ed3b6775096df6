#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

#include "ecgreid/error.hpp"
#include "ecgreid/record.hpp"
#include "ecgreid/synth.hpp"
#include "ecgreid/text.hpp"
#include "support.hpp"

using namespace ecgreid;
using testing_support::TempDir;

namespace {

std::string metadata_json(const std::string& id, int age, const std::string& gender, double fs) {
  return "{\"participant_id\": \"" + id + "\", \"age\": " + std::to_string(age) +
         ", \"gender\": \"" + gender + "\", \"sampling_rate_hz\": " + text::format_double(fs) +
         ", \"source_label\": \"test\", \"extra\": [1, 2]}";
}

}  // namespace

TEST(ReadRecord, MitBihSizedRecord) {
  TempDir dir;
  std::string csv = "t,mv\n";
  for (int i = 0; i < 360000; ++i)
    csv += text::format_double(i / 360.0) + "," + text::format_double(0.001 * (i % 97)) + "\n";
  text::write_file(dir.file("s.csv"), csv);
  text::write_file(dir.file("m.json"), metadata_json("mitdb_100", 69, "M", 360));

  const auto r = read_record(dir.file("s.csv"), dir.file("m.json"));
  EXPECT_EQ(r.participant_id, "mitdb_100");
  EXPECT_EQ(r.age, 69);
  EXPECT_EQ(r.gender, Gender::M);
  EXPECT_EQ(r.sampling_rate_hz, 360.0);
  EXPECT_EQ(r.samples.size(), 360000u);
  EXPECT_DOUBLE_EQ(r.duration_s(), 1000.0);
  EXPECT_EQ(r.samples[96], 0.096);

  // Two reads are structurally equal.
  EXPECT_EQ(r, read_record(dir.file("s.csv"), dir.file("m.json")));
}

TEST(ReadRecord, AgeOutsideRangeRejected) {
  TempDir dir;
  text::write_file(dir.file("s.csv"), "0.1\n0.2\n");
  text::write_file(dir.file("young.json"), metadata_json("a", 20, "F", 250));
  text::write_file(dir.file("old.json"), metadata_json("a", 90, "F", 250));
  text::write_file(dir.file("edge.json"), metadata_json("a", 21, "F", 250));
  EXPECT_THROW(read_record(dir.file("s.csv"), dir.file("young.json")), ValidationError);
  EXPECT_THROW(read_record(dir.file("s.csv"), dir.file("old.json")), ValidationError);
  EXPECT_NO_THROW(read_record(dir.file("s.csv"), dir.file("edge.json")));
}

TEST(ReadRecord, MetadataErrors) {
  EXPECT_THROW(parse_metadata("{\"participant_id\": \"x\"}"), ValidationError);
  EXPECT_THROW(parse_metadata("{not json"), ParseError);
  EXPECT_THROW(parse_metadata(metadata_json("x", 40, "X", 250)), ValidationError);
  const auto m = parse_metadata(metadata_json("x", 40, "F", 500));
  EXPECT_EQ(m.gender, Gender::F);
  EXPECT_EQ(m.sampling_rate_hz, 500.0);
}

TEST(SignalCsv, ColumnSelection) {
  EXPECT_EQ(parse_signal_csv("t,mv\n0,1.5\n0.004,2.5\n", {}), (std::vector<double>{1.5, 2.5}));
  EXPECT_EQ(parse_signal_csv("mv\n1\n2\n", {}), (std::vector<double>{1, 2}));
  EXPECT_EQ(parse_signal_csv("1\n2\n3\n", {}), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(parse_signal_csv("0,7\n1,8\n", {}), (std::vector<double>{7, 8}));

  const std::string multi = "t,I,II,V1\n0,1,2,3\n1,4,5,6\n";
  EXPECT_THROW(parse_signal_csv(multi, {}), ConfigError);
  ReadOptions by_name;
  by_name.column = "II";
  EXPECT_EQ(parse_signal_csv(multi, by_name), (std::vector<double>{2, 5}));
  ReadOptions by_index;
  by_index.column = "3";
  EXPECT_EQ(parse_signal_csv(multi, by_index), (std::vector<double>{3, 6}));
  ReadOptions missing;
  missing.column = "V6";
  EXPECT_THROW(parse_signal_csv(multi, missing), ConfigError);
}

TEST(SignalCsv, MalformedLineReportsLineNumber) {
  try {
    parse_signal_csv("t,mv\n0,1\n0.1,abc\n", {}, "sig.csv");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("sig.csv:3"), std::string::npos);
  }
  try {
    parse_signal_csv("t,mv\n0,1\n0.1\n", {}, "sig.csv");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(SignalCsv, NonFiniteSampleIsValidationError) {
  EXPECT_THROW(parse_signal_csv("t,mv\n0,1\n0.1,nan\n", {}), ValidationError);
  EXPECT_THROW(parse_signal_csv("1\ninf\n", {}), ValidationError);
}

TEST(ReadRecord, SegmentSelection) {
  TempDir dir;
  std::string csv;
  for (int i = 0; i < 1000; ++i) csv += std::to_string(i) + "\n";
  text::write_file(dir.file("s.csv"), csv);
  text::write_file(dir.file("m.json"), metadata_json("seg", 50, "M", 100));
  ReadOptions o;
  o.segment_start_s = 2.0;
  o.segment_duration_s = 3.0;
  const auto r = read_record(dir.file("s.csv"), dir.file("m.json"), o);
  ASSERT_EQ(r.samples.size(), 300u);
  EXPECT_EQ(r.samples.front(), 200.0);
  EXPECT_EQ(r.samples.back(), 499.0);

  o.segment_start_s = 9.0;
  EXPECT_THROW(read_record(dir.file("s.csv"), dir.file("m.json"), o), ValidationError);
}

TEST(WriteRecord, RoundTripIsTextExact) {
  TempDir dir;
  SyntheticPopulationConfig c;
  c.n_participants = 2;
  c.duration_s = 5;
  const auto pop = generate_population(c);
  for (const auto& rec : pop.records) {
    write_record(rec, dir.file("a.csv"), dir.file("a.json"));
    const auto back = read_record(dir.file("a.csv"), dir.file("a.json"));
    EXPECT_EQ(back, rec);
    write_record(back, dir.file("b.csv"), dir.file("b.json"));
    EXPECT_EQ(text::read_file(dir.file("a.csv")), text::read_file(dir.file("b.csv")));
    EXPECT_EQ(text::read_file(dir.file("a.json")), text::read_file(dir.file("b.json")));
  }
}

TEST(Manifest, ResolvesRelativePathsAndReportsMissingFiles) {
  TempDir dir;
  std::filesystem::create_directories(dir.path() / "rec");
  text::write_file(dir.file("rec/a.csv"), "1\n2\n");
  text::write_file(dir.file("rec/a.json"), metadata_json("a", 30, "M", 250));
  text::write_file(dir.file("m.json"),
                   R"({"records": [{"signal": "rec/a.csv", "metadata": "rec/a.json", "column": 0}]})");
  const auto entries = read_manifest(dir.file("m.json"));
  ASSERT_EQ(entries.size(), 1u);
  EXPECT_EQ(std::filesystem::path(entries[0].signal_path), dir.path() / "rec/a.csv");
  EXPECT_EQ(entries[0].options.column, std::optional<std::string>("0"));

  text::write_file(dir.file("bad.json"),
                   R"({"records": [{"signal": "rec/missing.csv", "metadata": "rec/a.json"}]})");
  try {
    read_manifest(dir.file("bad.json"));
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("missing.csv"), std::string::npos);
  }
}

TEST(Generate, LengthArithmetic) {
  SyntheticPopulationConfig c;
  c.n_participants = 2;
  c.seed = 7;
  c.duration_s = 30;
  c.sampling_rate_hz = 250;
  const auto pop = generate_population(c);
  ASSERT_EQ(pop.records.size(), 2u);
  ASSERT_EQ(pop.truth.size(), 2u);
  for (const auto& r : pop.records) EXPECT_EQ(r.samples.size(), 7500u);
}

TEST(Generate, SeedSensitivityAndPurity) {
  SyntheticPopulationConfig c;
  c.n_participants = 2;
  c.duration_s = 10;
  c.seed = 7;
  const auto a = generate_population(c);
  const auto a2 = generate_population(c);
  c.seed = 8;
  const auto b = generate_population(c);
  EXPECT_EQ(a.records, a2.records);
  EXPECT_NE(a.records[0].samples, b.records[0].samples);
}

TEST(Generate, EmptyPopulationRejected) {
  SyntheticPopulationConfig c;
  c.n_participants = 0;
  EXPECT_THROW(generate_population(c), ConfigError);
}

TEST(Generate, RecordsValidAndMorphologiesDistinct) {
  SyntheticPopulationConfig c;
  c.n_participants = 20;
  c.duration_s = 12;
  const auto pop = generate_population(c);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < pop.records.size(); ++i) {
    EXPECT_NO_THROW(validate(pop.records[i]));
    ids.insert(pop.records[i].participant_id);
    for (std::size_t k = 0; k < i; ++k) EXPECT_NE(pop.truth[i].morphology, pop.truth[k].morphology);
    // Ground truth R indices lie inside the record and increase.
    const auto r = pop.truth[i].r_indices();
    ASSERT_FALSE(r.empty());
    for (std::size_t b = 1; b < r.size(); ++b) EXPECT_LT(r[b - 1], r[b]);
    EXPECT_LT(r.back(), pop.records[i].samples.size());
  }
  EXPECT_EQ(ids.size(), 20u);
}

TEST(Generate, ConfigJsonRoundTrip) {
  SyntheticPopulationConfig c;
  c.n_participants = 7;
  c.seed = 123456789012345ULL;
  c.bpm_min = 61.5;
  c.noise_snr_db = 10;
  EXPECT_EQ(parse_synthetic_config(format_synthetic_config(c)), c);
  EXPECT_THROW(parse_synthetic_config("{\"beat_rate_bpm_range\": [60]}"), ConfigError);
}
