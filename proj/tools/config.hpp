#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "lockin/domain.hpp"
#include "lockin/family.hpp"
#include "lockin/growth.hpp"
#include "lockin/sim.hpp"

namespace lockin::cli {

inline constexpr int kSchemaVersion = 1;

/// Matrix-only plug-in: A is given verbatim and the PLL forcing is the
/// textbook sin(dtheta) with no current coupling.
struct LinearTestPlugin {
  Mat4 A = Mat4::Zero();
  double k_p = 1.0;
  double k_i = 1.0;
};

struct RunConfig {
  std::string preset = "version-I";
  InverterParams params = InverterParams::preset("version-I");
  std::optional<LinearTestPlugin> plugin;

  double gauge_margin = 0.5;
  double eps_margin = 0.1;

  FamilyOptions family;
  GrowthOptions growth;

  int N = 500;
  std::uint64_t seed = 1;
  double horizon = 0.0;
  double inset = 0.01;
  int audit_N = 100;
  bool dump_trajectories = false;
  /// Start of `simulate`; sampled inside the estimate when absent.
  std::optional<Vec6> initial;
  /// Negative-control fixture: multiplies Phi before validation.
  double phi_inflation = 1.0;

  std::filesystem::path output = "out";

  std::string version() const { return plugin ? "linear-test" : preset; }
};

/// Parses and validates a config document. Unknown keys are rejected so
/// that typos do not silently fall back to defaults.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

/// Default document for `preset`, with every field spelled out.
nlohmann::json default_config_json(const std::string& preset = "version-I");

/// Model described by the config. Does not require A to be Hurwitz.
CascadeModel build_model(const RunConfig& cfg);

}  // namespace lockin::cli
