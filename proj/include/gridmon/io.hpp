#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gridmon/signal.hpp"
#include "json.hpp"

namespace gridmon::io {

// A waveform on disk: a human-readable sidecar describing rate, channel,
// count and encoding, next to a payload file holding the samples either as
// little-endian 32-bit floats or one value per line.
struct SampleFileInfo {
  std::string meta_path;
  std::string payload_path;
  std::string encoding;  // "f32le" | "text"
  SampleStream stream;
};

// Writes <base>.meta plus <base>.f32 or <base>.txt; returns the sidecar path.
std::string write_samples(const std::string& base, const SampleStream& stream,
                          const std::string& encoding = "f32le");

// Reads the sidecar and its payload; the declared sample count must match.
SampleFileInfo read_samples(const std::string& meta_path);

// Power draw at a fixed reporting interval, the disaggregation exchange
// format: a small header, a separator, one watt value per line.
struct PowerSeries {
  std::vector<double> watts;
  double interval_s = 6.0;
  std::string label;  // appliance name or "aggregate"
};

void write_power_series(const std::string& path, const PowerSeries& series);
PowerSeries read_power_series(const std::string& path);

// Flat key = value configuration with a fixed registry: every key has a
// documented default, unknown keys are rejected, and each key can be
// overridden by an environment variable (GRIDMON_ prefix, dots become
// underscores, upper case).
class Config {
 public:
  struct Entry {
    const char* key;
    const char* value;
    const char* doc;
  };

  static const std::vector<Entry>& registry();
  static Config defaults();
  static std::string env_name(const std::string& key);
  static std::string document();

  // '#' comments and blank lines allowed; an unknown key is an error.
  void load_file(const std::string& path);
  // Applies any set GRIDMON_* variables over the current values.
  void apply_env();

  void set(const std::string& key, const std::string& value);
  const std::string& text(const std::string& key) const;
  double number(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  bool flag(const std::string& key) const;

 private:
  std::map<std::string, std::string> values_;
};

// Line-delimited structured records (one document per line).
void write_lines(const std::string& path, const std::vector<nlohmann::ordered_json>& rows);
std::vector<nlohmann::ordered_json> read_lines(const std::string& path);

}  // namespace gridmon::io
