#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>

namespace gmc::run {

inline constexpr const char* kToolkitVersion = "0.1.0";

/// Flat "key = value" config ('#' comments). Keys are validated against the
/// per-kind schema; unknown keys are hard errors.
struct ConfigFile {
  std::map<std::string, std::string> values;
  std::string source_path;
};
ConfigFile parse_config_file(const std::string& path);
ConfigFile parse_config_text(const std::string& text, const std::string& name);

/// Config resolved against the schema of its kind: every key present with its
/// final (possibly defaulted) textual value. Echoed verbatim into the
/// manifest so a replay sees exactly the same inputs.
struct ResolvedConfig {
  std::string kind;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> keys;
};
ResolvedConfig resolve_config(const ConfigFile& file);

struct RunOptions {
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed_override;
  int threads = 1;
  bool print_report = false;
};

/// Exit codes: 0 = ran and all declared tolerances pass, 2 = ran but some
/// tolerance failed. Config/schema errors throw std::invalid_argument.
int run(ResolvedConfig cfg, const RunOptions& opt);

/// Re-executes the config echoed in an existing manifest.json.
int replay(const std::string& manifest_path, RunOptions opt);

/// Prints the summary table(s) found in a results directory.
int report_dir(const std::string& dir);

/// Worker pool over replica indices; the callee writes only to its own slot,
/// so results do not depend on the thread count.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& fn);

}  // namespace gmc::run
