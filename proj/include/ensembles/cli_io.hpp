#pragma once

// Run configuration (flat key=value text), experiment dispatch, and CSV /
// JSON result emission.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ensembles/analysis.hpp"
#include "ensembles/common.hpp"

namespace ensembles {

inline constexpr std::string_view kVersion = "0.1.0";

enum class KeyType { Int, UInt, Real, String, IntList, RealList };

struct KeySpec {
  std::string_view key;
  KeyType type;
  /// Default in config syntax; empty when the key has no default (or the
  /// default depends on other keys).
  std::string_view fallback;
  std::string_view help;
};

/// Every accepted key, sorted.
const std::vector<KeySpec>& config_keys();

using ConfigValue = std::variant<std::int64_t, std::uint64_t, double, std::string,
                                 std::vector<std::int64_t>, std::vector<double>>;

inline constexpr std::string_view kExperiments[] = {"exact", "sample", "mixing", "invariance",
                                                    "converge", "dominance", "blocks", "slope",
                                                    "oracle"};

/// Typed configuration. Only explicitly set keys are stored; getters fall
/// back to the registry defaults (and to derived defaults for boundary
/// vectors).
class RunConfig {
 public:
  const std::string& experiment() const { return experiment_; }
  void set_experiment(std::string name);

  /// Parses `text` with the key's declared type and stores it. Throws
  /// UnknownKey or TypeError.
  void set(std::string_view key, std::string_view text);
  bool has(std::string_view key) const { return values_.count(std::string(key)) > 0; }
  const std::map<std::string, ConfigValue>& values() const { return values_; }

  std::int64_t get_int(std::string_view key) const;
  std::uint64_t get_uint(std::string_view key) const;
  double get_real(std::string_view key) const;
  std::string get_string(std::string_view key) const;
  std::vector<std::int64_t> get_ints(std::string_view key) const;
  std::vector<double> get_reals(std::string_view key) const;

  std::uint64_t seed() const { return get_uint("seed"); }
  int threads() const { return static_cast<int>(get_int("threads")); }
  std::string output_dir() const { return get_string("output.dir"); }

  // Model objects built from the configuration (validated by their
  // constructors).
  Kernel kernel() const;
  Potential potential(double lambda) const;
  TiltSpec tilt(double lambda) const;
  std::vector<int> boundary_u() const;
  std::vector<int> boundary_v() const;
  std::vector<int> boundary_u_alt() const;
  std::vector<double> boundary_u_cont() const;
  Boundary boundary() const;
  EnsembleSpec ensemble(double lambda) const;
  McmcParams mcmc() const;
  GridSpec grid() const;

  /// Builds every model object the experiment uses; throws the model's
  /// validation errors.
  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;

 private:
  const ConfigValue* find(std::string_view key) const;
  ConfigValue lookup(std::string_view key, KeyType type) const;
  std::string experiment_;
  std::map<std::string, ConfigValue> values_;
};

/// Strict parse of key = value lines ('#' starts a comment line). Throws
/// UnknownKey, TypeError, MissingRequired (no experiment), InvalidArgument
/// (malformed line, duplicate key) and any model validation error.
/// `experiment` fills in or must match the experiment key.
RunConfig parse_config(std::string_view text, std::optional<std::string> experiment = {});

/// Explicit keys only, sorted, one per line; parse_config(emit_config(c))
/// == c.
std::string emit_config(const RunConfig& config);

/// Every key that affects results, with defaults filled in; threads and
/// output.dir are execution settings and are left out. This text is hashed.
std::string canonical_config(const RunConfig& config);

/// Git blob id: SHA-1 of "blob <len>\0" followed by the text, lowercase hex.
std::string content_hash(std::string_view text);

// ---- CSV ----

using CsvCell = std::variant<std::int64_t, double, std::string>;

struct CsvTable {
  std::string name;  // file stem
  std::vector<std::string> header;
  std::vector<std::vector<CsvCell>> rows;
};

/// RFC 4180 style: comma separated, LF line endings, header row first,
/// reals with 17 significant digits, infinities as inf / -inf, strings
/// quoted when they contain a comma, quote or newline. Throws Emission on
/// NaN or a row of the wrong width.
std::string emit_csv(const CsvTable& table);

/// %.17g, with inf / -inf. Throws Emission on NaN.
std::string format_real(double x);

CsvTable to_csv(const MixingReport& report);

// ---- runs ----

struct RunOutcome {
  std::string results_json;
  std::vector<CsvTable> tables;
  /// 0 ok, 2 when a PASS/FAIL experiment fails.
  int exit_code = 0;
};

/// Runs the experiment without touching the file system.
RunOutcome execute(const RunConfig& config);

/// Writes results.json and <name>.csv files into `dir` (created if needed).
/// Throws Io.
void write_outputs(const RunOutcome& outcome, const std::string& dir);

/// execute + write_outputs into config.output_dir().
int run(const RunConfig& config);

}  // namespace ensembles
