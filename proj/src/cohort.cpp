#include "ecgreid/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

#include "ecgreid/error.hpp"
#include "ecgreid/rng.hpp"

namespace ecgreid {

using nlohmann::json;

std::string_view to_string(Task t) {
  switch (t) {
    case Task::Gender: return "gender";
    case Task::AgeGroup: return "age_group";
    case Task::ParticipantId: return "participant_id";
  }
  return "?";
}

Task parse_task(std::string_view s) {
  if (s == "gender") return Task::Gender;
  if (s == "age_group" || s == "age") return Task::AgeGroup;
  if (s == "participant_id" || s == "id") return Task::ParticipantId;
  throw ConfigError("unknown task \"" + std::string(s) + "\"");
}

std::string task_label(const FeatureRow& row, Task task) {
  switch (task) {
    case Task::Gender: return std::string(to_string(row.gender));
    case Task::AgeGroup: return std::string(to_string(row.age_group));
    case Task::ParticipantId: return row.participant_id;
  }
  return {};
}

namespace {

// Labels in their natural order: M/F, the age bins, or sorted participant ids.
std::vector<std::string> ordered_labels(std::vector<std::string> labels, Task task) {
  auto rank = [task](const std::string& l) {
    if (task == Task::Gender) return static_cast<int>(parse_gender(l));
    if (task == Task::AgeGroup) return static_cast<int>(parse_age_group(l));
    return 0;
  };
  std::sort(labels.begin(), labels.end(), [&](const std::string& a, const std::string& b) {
    const int ra = rank(a), rb = rank(b);
    return ra != rb ? ra < rb : a < b;
  });
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

}  // namespace

SplitPlan split_by_participant(const FeatureTable& table, Task task, std::uint64_t seed) {
  if (task == Task::ParticipantId)
    throw ConfigError("participant_id uses the temporal split, not the participant split");

  std::map<std::string, std::string> class_of;  // participant -> class, sorted by id
  for (const auto& row : table.rows) {
    const auto label = task_label(row, task);
    const auto [it, inserted] = class_of.emplace(row.participant_id, label);
    if (!inserted && it->second != label)
      throw SchemaError("participant " + row.participant_id + " has inconsistent " +
                        std::string(to_string(task)) + " labels");
  }
  const auto n = static_cast<int>(class_of.size());
  if (n < kMinParticipants)
    throw DegenerateError("participant split needs at least " + std::to_string(kMinParticipants) +
                          " participants, got " + std::to_string(n));

  SplitPlan plan;
  plan.task = task;
  plan.seed = seed;

  std::vector<std::string> labels;
  for (const auto& [id, label] : class_of) labels.push_back(label);
  plan.label_map = ordered_labels(labels, task);

  Rng rng(seed);
  std::vector<std::vector<std::string>> members(plan.label_map.size());
  for (const auto& [id, label] : class_of) {
    const auto pos = std::find(plan.label_map.begin(), plan.label_map.end(), label);
    members[static_cast<std::size_t>(pos - plan.label_map.begin())].push_back(id);
  }
  for (auto& m : members) rng.shuffle(m);

  const int n_test = std::max(1, static_cast<int>(std::lround((1.0 - kTrainFraction) * n)));
  std::vector<std::size_t> eligible;
  for (std::size_t c = 0; c < members.size(); ++c) {
    if (members[c].size() >= 2)
      eligible.push_back(c);
    else
      plan.warnings.push_back("class " + plan.label_map[c] +
                              " has a single participant; confined to train");
  }

  std::vector<int> alloc(members.size(), 0);
  int budget = n_test;
  if (static_cast<int>(eligible.size()) > budget) {
    // Not every class fits; cover the largest ones, random among equals.
    rng.shuffle(eligible);
    std::stable_sort(eligible.begin(), eligible.end(), [&](std::size_t a, std::size_t b) {
      return members[a].size() > members[b].size();
    });
    plan.warnings.push_back(std::to_string(eligible.size() - static_cast<std::size_t>(budget)) +
                            " classes cannot reach the test side with " +
                            std::to_string(n_test) + " test participants");
  }
  for (const std::size_t c : eligible) {
    if (budget == 0) break;
    alloc[c] = 1;
    --budget;
  }
  int eligible_total = 0;
  for (const std::size_t c : eligible) eligible_total += static_cast<int>(members[c].size());
  while (budget > 0) {
    // Give the next test slot to the class furthest below its proportional share.
    std::size_t best = members.size();
    double best_deficit = -1e300;
    for (std::size_t c = 0; c < members.size(); ++c) {
      if (alloc[c] == 0 || alloc[c] + 1 >= static_cast<int>(members[c].size())) continue;
      const double share = static_cast<double>(members[c].size()) * n_test / eligible_total;
      const double deficit = share - alloc[c];
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = c;
      }
    }
    if (best == members.size()) {
      plan.warnings.push_back("test side short by " + std::to_string(budget) +
                              " participants; every class keeps one in train");
      break;
    }
    ++alloc[best];
    --budget;
  }

  std::map<std::string, bool> in_test;
  for (std::size_t c = 0; c < members.size(); ++c)
    for (std::size_t i = 0; i < members[c].size(); ++i)
      in_test[members[c][i]] = static_cast<int>(i) < alloc[c];

  for (std::size_t r = 0; r < table.rows.size(); ++r)
    (in_test[table.rows[r].participant_id] ? plan.test : plan.train).push_back(r);
  return plan;
}

SplitPlan split_temporal(const FeatureTable& table, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> rows_of;
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    rows_of[table.rows[r].participant_id].push_back(r);

  SplitPlan plan;
  plan.task = Task::ParticipantId;
  plan.seed = seed;
  for (auto& [id, rows] : rows_of) {
    if (static_cast<int>(rows.size()) < kMinWindowsPerParticipant) {
      plan.warnings.push_back("participant " + id + " has " + std::to_string(rows.size()) +
                              " windows (< " + std::to_string(kMinWindowsPerParticipant) +
                              "); excluded");
      continue;
    }
    std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
      return table.rows[a].window_index < table.rows[b].window_index;
    });
    const auto cut = static_cast<std::size_t>(std::floor(kTrainFraction * rows.size()));
    plan.train.insert(plan.train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(cut));
    plan.test.insert(plan.test.end(), rows.begin() + static_cast<std::ptrdiff_t>(cut), rows.end());
    plan.label_map.push_back(id);
  }
  if (plan.label_map.empty())
    throw DegenerateError("temporal split is empty: no participant has " +
                          std::to_string(kMinWindowsPerParticipant) + " windows");
  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.test.begin(), plan.test.end());
  return plan;
}

SplitPlan make_split(const FeatureTable& table, Task task, std::uint64_t seed) {
  return task == Task::ParticipantId ? split_temporal(table, seed)
                                     : split_by_participant(table, task, seed);
}

std::string format_plan_json(const SplitPlan& plan, const FeatureTable& table) {
  json assignments = json::array();
  std::vector<std::pair<std::size_t, const char*>> all;
  for (const auto r : plan.train) all.emplace_back(r, "train");
  for (const auto r : plan.test) all.emplace_back(r, "test");
  std::sort(all.begin(), all.end());
  for (const auto& [r, side] : all)
    assignments.push_back({{"participant_id", table.rows.at(r).participant_id},
                           {"window_index", table.rows.at(r).window_index},
                           {"side", side}});
  json j = {{"task", std::string(to_string(plan.task))},
            {"seed", plan.seed},
            {"label_map", plan.label_map},
            {"assignments", assignments},
            {"warnings", plan.warnings}};
  return j.dump(2) + "\n";
}

SplitPlan parse_plan_json(std::string_view json_text, const FeatureTable& table,
                          const std::string& source) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(source, 1, e.what());
  }
  SplitPlan plan;
  try {
    plan.task = parse_task(j.at("task").get<std::string>());
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.label_map = j.at("label_map").get<std::vector<std::string>>();
    if (j.contains("warnings")) plan.warnings = j["warnings"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw SchemaError(source + ": " + e.what());
  }

  std::map<std::pair<std::string, int>, std::size_t> index;
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    index[{table.rows[r].participant_id, table.rows[r].window_index}] = r;

  for (const auto& a : j.at("assignments")) {
    const auto key = std::make_pair(a.at("participant_id").get<std::string>(),
                                    a.at("window_index").get<int>());
    const auto it = index.find(key);
    if (it == index.end())
      throw SchemaError(source + ": window " + key.first + "/" + std::to_string(key.second) +
                        " not present in the feature table");
    const auto side = a.at("side").get<std::string>();
    if (side == "train")
      plan.train.push_back(it->second);
    else if (side == "test")
      plan.test.push_back(it->second);
    else
      throw SchemaError(source + ": side must be train or test");
  }
  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.test.begin(), plan.test.end());
  return plan;
}

}  // namespace ecgreid
