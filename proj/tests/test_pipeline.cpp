#include <gtest/gtest.h>

#include <sstream>

#include "ecgreid/error.hpp"
#include "ecgreid/pipeline.hpp"
#include "ecgreid/text.hpp"
#include "support.hpp"

using namespace ecgreid;
using testing_support::directory_snapshot;
using testing_support::TempDir;

namespace {

RunConfig small_config() {
  RunConfig c;
  SyntheticPopulationConfig s;
  s.n_participants = 8;
  s.duration_s = 60;
  c.synthetic = s;
  c.models = {ModelKind::Logistic, ModelKind::Tree};
  c.shap_max_points = 40;
  c.shap_background = 16;
  return c;
}

}  // namespace

TEST(RunConfig, JsonRoundTripAndValidation) {
  auto c = small_config();
  c.features.window_s = 7.5;
  c.features.all_pairs = true;
  c.features.filter.powerline_freq_hz = 60;
  c.tasks = {Task::AgeGroup};
  c.seed = 1234567890123ULL;
  c.tune = false;
  c.shap_scale = ShapScale::Logit;
  c.models = {ModelKind::Logistic};
  const auto text = format_run_config(c);
  const auto back = parse_run_config(text);
  EXPECT_EQ(format_run_config(back), text);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.features.window_s, 7.5);
  EXPECT_EQ(back.tasks, c.tasks);
  EXPECT_EQ(*back.synthetic, *c.synthetic);

  RunConfig none;
  EXPECT_THROW(validate(none), ConfigError);
  auto both = small_config();
  both.manifest_path = "m.json";
  EXPECT_THROW(validate(both), ConfigError);
  auto empty_tasks = small_config();
  empty_tasks.tasks.clear();
  EXPECT_THROW(validate(empty_tasks), ConfigError);
  auto logit_tree = small_config();
  logit_tree.shap_scale = ShapScale::Logit;
  EXPECT_THROW(validate(logit_tree), ConfigError);
  EXPECT_THROW(parse_run_config("{"), ParseError);
}

TEST(Seeds, StageSeedsAreStableAndDistinct) {
  EXPECT_EQ(stage_seed(42, "split/gender"), stage_seed(42, split_stage(Task::Gender)));
  EXPECT_NE(stage_seed(42, split_stage(Task::Gender)), stage_seed(43, split_stage(Task::Gender)));
  EXPECT_NE(stage_seed(42, model_stage(Task::Gender, ModelKind::Tree)),
            stage_seed(42, tune_stage(Task::Gender, ModelKind::Tree)));
  EXPECT_EQ(model_stage(Task::AgeGroup, ModelKind::Forest), "model/age_group/forest");
}

TEST(ExitCodes, InputVersusStageErrors) {
  EXPECT_EQ(exit_code_for(InputError("x")), 2);
  EXPECT_EQ(exit_code_for(ParseError("f", 3, "x")), 2);
  EXPECT_EQ(exit_code_for(ValidationError("x")), 2);
  EXPECT_EQ(exit_code_for(ConfigError("x")), 3);
  EXPECT_EQ(exit_code_for(DegenerateError("x")), 3);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), 3);
}

TEST(Annotations, FileNamesAreSanitised) {
  EXPECT_EQ(annotation_file_name(7, "a/b c"), "007_a_b_c.csv");
  EXPECT_EQ(annotation_file_name(123, "mitdb_100"), "123_mitdb_100.csv");
}

TEST(Extraction, AnnotationReuseReproducesFeatures) {
  const auto c = small_config();
  const auto records = load_records(c);
  const auto first = extract_features(records, c.features);
  EXPECT_EQ(first.records.size(), records.size());
  EXPECT_FALSE(first.table.rows.empty());
  TempDir dir;
  for (std::size_t k = 0; k < records.size(); ++k)
    text::write_file(dir.file(first.records[k].annotation_file), format_annotations_csv(first.beats[k]));
  const auto again = extract_features(records, c.features, dir.path().string());
  EXPECT_EQ(format_feature_csv(again.table), format_feature_csv(first.table));
  EXPECT_EQ(format_drop_log(again), format_drop_log(first));
}

TEST(Extraction, WindowIndicesContinueAcrossRecordsOfOneParticipant) {
  auto c = small_config();
  c.synthetic->n_participants = 2;
  auto records = load_records(c);
  records[1].participant_id = records[0].participant_id;
  records[1].gender = records[0].gender;
  records[1].age = records[0].age;
  const auto ex = extract_features(records, c.features);
  std::vector<int> windows;
  for (const auto& r : ex.table.rows) windows.push_back(r.window_index);
  EXPECT_TRUE(std::is_sorted(windows.begin(), windows.end()));
  EXPECT_EQ(std::adjacent_find(windows.begin(), windows.end()), windows.end());
  EXPECT_GT(windows.back(), 5);
}

TEST(RunAudit, DeterministicArtifacts) {
  const auto c = small_config();
  TempDir a, b;
  std::ostringstream log;
  run_audit(c, a.path().string(), log, 1);
  run_audit(c, b.path().string(), log, 2);
  const auto sa = directory_snapshot(a.path()), sb = directory_snapshot(b.path());
  EXPECT_EQ(sa, sb);
  for (const auto* name : {"config.json", "features.csv", "drops.csv", "split_gender.json",
                           "model_participant_id_tree.json", "eval_age_group_logistic.json",
                           "shap_gender_tree.csv", "shap_gender_tree.svg", "evaluation.csv",
                           "summary.csv", "summary.md", "MANIFEST"})
    EXPECT_TRUE(sa.count(name)) << name;
  EXPECT_FALSE(sa.count("FAILED"));
  EXPECT_FALSE(sa.count("input_manifest.json"));

  // The run config on disk reproduces the run.
  const auto back = parse_run_config(sa.at("config.json"));
  TempDir r;
  run_audit(back, r.path().string(), log, 1);
  EXPECT_EQ(directory_snapshot(r.path()), sa);
}

TEST(RunAudit, TaskAndModelFilter) {
  auto c = small_config();
  c.tasks = {Task::Gender};
  c.models = {ModelKind::Tree};
  c.tune = false;
  TempDir d;
  std::ostringstream log;
  run_audit(c, d.path().string(), log);
  for (const auto& [name, content] : directory_snapshot(d.path())) {
    EXPECT_EQ(name.find("age_group"), std::string::npos) << name;
    EXPECT_EQ(name.find("participant_id"), std::string::npos) << name;
    EXPECT_EQ(name.find("logistic"), std::string::npos) << name;
    EXPECT_EQ(name.find("tuning_"), std::string::npos) << name;
  }
  EXPECT_TRUE(std::filesystem::exists(d.path() / "model_gender_tree.json"));
}

TEST(RunAudit, MissingInputWritesFailed) {
  RunConfig c;
  TempDir d;
  c.manifest_path = d.file("nope/manifest.json");
  std::ostringstream log;
  try {
    run_audit(c, d.file("out"), log);
    FAIL() << "expected an input error";
  } catch (const std::exception& e) {
    EXPECT_EQ(exit_code_for(e), 2);
    EXPECT_NE(std::string(e.what()).find("nope/manifest.json"), std::string::npos);
  }
  const auto failed = text::read_file(d.file("out/FAILED"));
  EXPECT_NE(failed.find("nope/manifest.json"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(d.path() / "out" / "MANIFEST"));
}

TEST(RunAudit, ManifestInput) {
  TempDir d;
  SyntheticPopulationConfig s;
  s.n_participants = 6;
  s.duration_s = 60;
  const auto pop = generate_population(s);
  std::string manifest = "{\"records\": [";
  for (std::size_t k = 0; k < pop.records.size(); ++k) {
    const auto stem = "r" + std::to_string(k);
    write_record(pop.records[k], d.file(stem + ".csv"), d.file(stem + ".json"));
    manifest += std::string(k ? ", " : "") + "{\"signal\": \"" + stem + ".csv\", \"metadata\": \"" + stem +
                ".json\"}";
  }
  manifest += "]}";
  text::write_file(d.file("manifest.json"), manifest);
  RunConfig c;
  c.manifest_path = d.file("manifest.json");
  c.tasks = {Task::ParticipantId};
  c.models = {ModelKind::Forest};
  c.tune = false;
  std::ostringstream log;
  run_audit(c, d.file("out"), log);
  EXPECT_EQ(text::read_file(d.file("out/input_manifest.json")), manifest);
  const auto report = parse_report_json(text::read_file(d.file("out/eval_participant_id_forest.json")));
  EXPECT_EQ(report.class_labels.size(), 6u);
  ASSERT_TRUE(report.reference.has_value());
  EXPECT_EQ(report.reference->reference.accuracy, 0.819);
}

TEST(Summary, MarksBestModelPerTask) {
  EvalReport a, b;
  a.task = b.task = Task::Gender;
  a.kind = ModelKind::Logistic;
  b.kind = ModelKind::Forest;
  a.f1_macro = 0.4;
  b.f1_macro = 0.7;
  const auto csv = format_summary_csv({a, b}, {});
  const auto lines = text::split(csv, '\n');
  ASSERT_GE(lines.size(), 3u);
  const auto header = text::split(lines[0], ',');
  const auto best_col = std::find(header.begin(), header.end(), "best") - header.begin();
  ASSERT_LT(static_cast<std::size_t>(best_col), header.size());
  EXPECT_EQ(text::split(lines[1], ',')[static_cast<std::size_t>(best_col)], "0");
  EXPECT_EQ(text::split(lines[2], ',')[static_cast<std::size_t>(best_col)], "1");
  EXPECT_NE(format_summary_markdown({a, b}, {}).find("forest"), std::string::npos);
}
