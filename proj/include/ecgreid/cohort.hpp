#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ecgreid/features.hpp"

namespace ecgreid {

enum class Task { Gender, AgeGroup, ParticipantId };

std::string_view to_string(Task t);
/// Accepts "gender", "age_group" (or "age"), "participant_id" (or "id").
Task parse_task(std::string_view s);

/// Class label of a row for a task.
std::string task_label(const FeatureRow& row, Task task);

/// Train/test assignment of feature-table rows. Indices refer to the table the
/// plan was built from and are sorted ascending.
struct SplitPlan {
  Task task = Task::Gender;
  std::uint64_t seed = 0;
  std::vector<std::string> label_map;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<std::string> warnings;

  bool operator==(const SplitPlan&) const = default;
};

inline constexpr double kTrainFraction = 0.8;
inline constexpr int kMinParticipants = 5;
inline constexpr int kMinWindowsPerParticipant = 5;

/// Gender / age-group protocol: 80% of participants train, 20% test, every
/// window following its participant. Participants are shuffled with the seed
/// and stratified by class so each class with >= 2 participants reaches the
/// test side while the test count stays round(0.2 * n).
SplitPlan split_by_participant(const FeatureTable& table, Task task, std::uint64_t seed);

/// Participant-ID protocol: per participant the first floor(0.8 * n) windows
/// (by window_index) train and the rest test. Participants with fewer than 5
/// windows are excluded with a warning.
SplitPlan split_temporal(const FeatureTable& table, std::uint64_t seed);

/// Dispatches on the task.
SplitPlan make_split(const FeatureTable& table, Task task, std::uint64_t seed);

std::string format_plan_json(const SplitPlan& plan, const FeatureTable& table);
/// Resolves assignments against `table` by (participant_id, window_index).
SplitPlan parse_plan_json(std::string_view json_text, const FeatureTable& table,
                          const std::string& source = "plan");

}  // namespace ecgreid
