#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "malcall/synthgen.hpp"

namespace test {

// A few thousand records over a week; fast enough for unit tests.
inline malcall::GeneratorConfig tiny_config(std::uint64_t seed) {
  malcall::GeneratorConfig c;
  c.seed = seed;
  c.days = 7;
  c.n_touchpal_users = 60;
  c.n_benign_others = 300;
  c.n_malicious = 4;
  c.malicious_record_fraction_target = 0.03;
  return c;
}

inline nlohmann::json small_spec_json(std::uint64_t seed = 0) {
  return {{"seed", seed},
          {"generator", {{"n_touchpal_users", 200}, {"n_benign_others", 1000}, {"n_malicious", 12}, {"days", 10}}},
          {"train", {{"days", {0, 7}}}},
          {"test", {{"days", {7, 10}}}},
          {"resamples", 2},
          {"models", {"logistic", {{"kind", "mlp"}, {"epochs", 5}}, {{"kind", "forest"}, {"n_trees", 10}},
                      {{"kind", "gbt"}, {"rounds", 10}}}}};
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("malcall_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace test
