#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <string>
#include <unistd.h>

#include "ecgreid/delineate.hpp"
#include "ecgreid/features.hpp"
#include "ecgreid/rng.hpp"
#include "ecgreid/synth.hpp"

namespace testing_support {

// Scratch directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ecgreid_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

// Relative path -> content for every file under `dir`. The MANIFEST creation
// time is blanked since it is the only wall-clock field in a run.
inline std::map<std::string, std::string> directory_snapshot(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto rel = std::filesystem::relative(e.path(), dir).generic_string();
    if (rel == "MANIFEST") {
      const auto at = content.find("\"created_utc\"");
      if (at != std::string::npos) content.erase(at, content.find('\n', at) - at);
    }
    out[rel] = std::move(content);
  }
  return out;
}

// Random cohort: participant i gets `windows` rows of standard-normal features.
inline ecgreid::FeatureTable random_table(ecgreid::Rng& rng, int participants, int windows,
                                          std::size_t n_features = 8) {
  ecgreid::FeatureTable t;
  for (std::size_t j = 0; j < n_features; ++j) t.names.push_back("f" + std::to_string(j));
  for (int p = 0; p < participants; ++p) {
    const auto gender = rng.below(2) ? ecgreid::Gender::F : ecgreid::Gender::M;
    const int age = static_cast<int>(ecgreid::kMinAge + rng.below(ecgreid::kMaxAge - ecgreid::kMinAge + 1));
    for (int w = 0; w < windows; ++w) {
      ecgreid::FeatureRow row;
      row.participant_id = "p" + std::to_string(1000 + p);
      row.window_index = w;
      row.gender = gender;
      row.age_group = ecgreid::assign_age_group(age);
      for (std::size_t j = 0; j < n_features; ++j) row.values.push_back(rng.normal());
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

struct DelineationScore {
  std::size_t truth_beats = 0;
  std::size_t detected = 0;
  std::size_t matched = 0;
  // Matched beats whose P, Q, S and T all lie within the fiducial tolerance.
  std::size_t fiducials_ok = 0;

  double recall() const { return truth_beats ? double(matched) / double(truth_beats) : 0.0; }
  double precision() const { return detected ? double(matched) / double(detected) : 0.0; }
  double fiducial_rate() const { return truth_beats ? double(fiducials_ok) / double(truth_beats) : 0.0; }

  DelineationScore& operator+=(const DelineationScore& o) {
    truth_beats += o.truth_beats;
    detected += o.detected;
    matched += o.matched;
    fiducials_ok += o.fiducials_ok;
    return *this;
  }
};

// Greedy one-to-one matching of detected R peaks to generator truth.
inline DelineationScore score_delineation(const ecgreid::GroundTruth& truth,
                                          const std::vector<ecgreid::BeatAnnotation>& beats, double fs,
                                          double r_tol_s = 0.050, double fiducial_tol_s = 0.025) {
  DelineationScore s;
  s.truth_beats = truth.beats.size();
  s.detected = beats.size();
  std::size_t j = 0;
  for (const auto& tb : truth.beats) {
    const double tr = tb.time_s[2];
    while (j < beats.size() && double(beats[j].at(ecgreid::Wave::R)) / fs < tr - r_tol_s) ++j;
    if (j == beats.size()) break;
    if (std::abs(double(beats[j].at(ecgreid::Wave::R)) / fs - tr) > r_tol_s) continue;
    ++s.matched;
    bool ok = true;
    for (const auto w : {ecgreid::Wave::P, ecgreid::Wave::Q, ecgreid::Wave::S, ecgreid::Wave::T}) {
      const int k = static_cast<int>(w);
      ok = ok && beats[j].has(w) &&
           std::abs(double(beats[j].at(w)) / fs - tb.time_s[k]) <= fiducial_tol_s;
    }
    if (ok) ++s.fiducials_ok;
    ++j;
  }
  return s;
}

// Shapley values by averaging marginal contributions over all M! feature
// orderings, with the interventional value function computed from scratch.
inline std::vector<double> permutation_shapley(const std::function<double(const std::vector<double>&)>& f,
                                               const std::vector<double>& x,
                                               const std::vector<std::vector<double>>& background) {
  const std::size_t m = x.size();
  auto value = [&](const std::vector<bool>& in) {
    double s = 0.0;
    for (const auto& b : background) {
      std::vector<double> z(m);
      for (std::size_t j = 0; j < m; ++j) z[j] = in[j] ? x[j] : b[j];
      s += f(z);
    }
    return s / static_cast<double>(background.size());
  };
  std::vector<std::size_t> order(m);
  for (std::size_t j = 0; j < m; ++j) order[j] = j;
  std::vector<double> phi(m, 0.0);
  double count = 0.0;
  do {
    std::vector<bool> in(m, false);
    double prev = value(in);
    for (const auto j : order) {
      in[j] = true;
      const double next = value(in);
      phi[j] += next - prev;
      prev = next;
    }
    count += 1.0;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& p : phi) p /= count;
  return phi;
}

}  // namespace testing_support
