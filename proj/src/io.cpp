#include "gridmon/io.hpp"

#include <bit>
#include <cctype>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gridmon/errors.hpp"

namespace gridmon::io {

namespace {

constexpr char kSampleMagic[] = "gridmon-samples v1";
constexpr char kPowerMagic[] = "gridmon-power v1";

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// Splits "key = value"; empty key on failure.
std::pair<std::string, std::string> split_kv(const std::string& line) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) return {"", ""};
  return {trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
}

double parse_number(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw FormatError(what + " is not a number: '" + text + "'");
  }
}

void write_f32le(std::ofstream& out, const std::vector<double>& samples) {
  for (double v : samples) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                           static_cast<char>((bits >> 16) & 0xff),
                           static_cast<char>((bits >> 24) & 0xff)};
    out.write(bytes, 4);
  }
}

std::vector<double> read_f32le(std::ifstream& in) {
  std::vector<double> samples;
  char bytes[4];
  while (in.read(bytes, 4)) {
    const std::uint32_t bits = (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[0]))) |
                               (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[1])) << 8) |
                               (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[2])) << 16) |
                               (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[3])) << 24);
    samples.push_back(static_cast<double>(std::bit_cast<float>(bits)));
  }
  if (in.gcount() != 0) throw FormatError("payload is not a whole number of 32-bit samples");
  return samples;
}

}  // namespace

std::string write_samples(const std::string& base, const SampleStream& stream,
                          const std::string& encoding) {
  if (stream.samples.empty()) throw InvalidArgument("refusing to write an empty stream");
  if (stream.sample_rate_hz <= 0.0) throw InvalidArgument("sample rate must be positive");
  if (encoding != "f32le" && encoding != "text") {
    throw InvalidArgument("encoding must be 'f32le' or 'text', got '" + encoding + "'");
  }
  const std::string payload = base + (encoding == "f32le" ? ".f32" : ".txt");
  {
    std::ofstream out(payload, std::ios::binary);
    if (!out) throw FormatError("cannot open '" + payload + "' for writing");
    if (encoding == "f32le") {
      write_f32le(out, stream.samples);
    } else {
      out.precision(17);
      for (double v : stream.samples) out << v << '\n';
    }
  }
  const std::string meta = base + ".meta";
  std::ofstream out(meta);
  if (!out) throw FormatError("cannot open '" + meta + "' for writing");
  out << kSampleMagic << '\n';
  out.precision(17);
  out << "sample_rate_hz = " << stream.sample_rate_hz << '\n';
  out << "channel_label = " << (stream.channel == Channel::voltage ? "voltage" : "current")
      << '\n';
  out << "sample_count = " << stream.samples.size() << '\n';
  out << "encoding = " << encoding << '\n';
  out << "payload = " << std::filesystem::path(payload).filename().string() << '\n';
  return meta;
}

SampleFileInfo read_samples(const std::string& meta_path) {
  std::ifstream in(meta_path);
  if (!in) throw FormatError("cannot open '" + meta_path + "'");

  std::string line;
  if (!std::getline(in, line) || trim(line) != kSampleMagic) {
    throw FormatError("'" + meta_path + "' is not a recognised sample sidecar");
  }
  std::map<std::string, std::string> fields;
  while (std::getline(in, line)) {
    const auto stripped = trim(line);
    if (stripped.empty()) continue;
    auto [key, value] = split_kv(stripped);
    if (key.empty()) throw FormatError("malformed sidecar line: '" + stripped + "'");
    fields[key] = value;
  }
  for (const char* want : {"sample_rate_hz", "channel_label", "sample_count", "encoding", "payload"}) {
    if (!fields.contains(want)) {
      throw FormatError("sidecar is missing the '" + std::string(want) + "' field");
    }
  }
  if (fields.size() != 5) throw FormatError("sidecar carries unrecognised fields");

  SampleFileInfo info;
  info.meta_path = meta_path;
  info.encoding = fields["encoding"];
  info.stream.sample_rate_hz = parse_number(fields["sample_rate_hz"], "sample_rate_hz");
  if (info.stream.sample_rate_hz <= 0.0) throw FormatError("sample rate must be positive");
  if (fields["channel_label"] == "current") {
    info.stream.channel = Channel::current;
  } else if (fields["channel_label"] == "voltage") {
    info.stream.channel = Channel::voltage;
  } else {
    throw FormatError("unknown channel label '" + fields["channel_label"] + "'");
  }
  const auto declared = static_cast<std::size_t>(parse_number(fields["sample_count"], "sample_count"));

  info.payload_path =
      (std::filesystem::path(meta_path).parent_path() / fields["payload"]).string();
  if (info.encoding == "f32le") {
    std::ifstream payload(info.payload_path, std::ios::binary);
    if (!payload) throw FormatError("cannot open payload '" + info.payload_path + "'");
    info.stream.samples = read_f32le(payload);
  } else if (info.encoding == "text") {
    std::ifstream payload(info.payload_path);
    if (!payload) throw FormatError("cannot open payload '" + info.payload_path + "'");
    std::string row;
    while (std::getline(payload, row)) {
      const auto stripped = trim(row);
      if (stripped.empty()) continue;
      info.stream.samples.push_back(parse_number(stripped, "sample"));
    }
  } else {
    throw FormatError("unsupported encoding '" + info.encoding + "'");
  }
  if (info.stream.samples.size() != declared) {
    throw FormatError("sidecar declares " + std::to_string(declared) + " samples, payload holds " +
                      std::to_string(info.stream.samples.size()));
  }
  return info;
}

void write_power_series(const std::string& path, const PowerSeries& series) {
  if (series.watts.empty()) throw InvalidArgument("refusing to write an empty power series");
  if (series.interval_s <= 0.0) throw InvalidArgument("reporting interval must be positive");
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << kPowerMagic << '\n';
  out.precision(17);
  out << "interval_s = " << series.interval_s << '\n';
  out << "count = " << series.watts.size() << '\n';
  if (!series.label.empty()) out << "label = " << series.label << '\n';
  out << "---\n";
  for (double v : series.watts) out << v << '\n';
}

PowerSeries read_power_series(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || trim(line) != kPowerMagic) {
    throw FormatError("'" + path + "' is not a recognised power series");
  }
  PowerSeries series;
  std::size_t declared = 0;
  bool have_count = false;
  while (std::getline(in, line)) {
    const auto stripped = trim(line);
    if (stripped == "---") break;
    auto [key, value] = split_kv(stripped);
    if (key == "interval_s") {
      series.interval_s = parse_number(value, "interval_s");
    } else if (key == "count") {
      declared = static_cast<std::size_t>(parse_number(value, "count"));
      have_count = true;
    } else if (key == "label") {
      series.label = value;
    } else {
      throw FormatError("unrecognised power series field '" + key + "'");
    }
  }
  while (std::getline(in, line)) {
    const auto stripped = trim(line);
    if (stripped.empty()) continue;
    series.watts.push_back(parse_number(stripped, "watts"));
  }
  if (series.interval_s <= 0.0) throw FormatError("reporting interval must be positive");
  if (!have_count || series.watts.size() != declared) {
    throw FormatError("power series declares " + std::to_string(declared) + " values, holds " +
                      std::to_string(series.watts.size()));
  }
  return series;
}

const std::vector<Config::Entry>& Config::registry() {
  static const std::vector<Entry> entries = {
      {"seed", "1", "master seed; every derived stream is a pure function of it"},
      {"format", "text", "report style: text or lines"},
      {"sim.rate_hz", "20000", "waveform sample rate"},
      {"sim.duration_s", "2", "seconds of waveform per generated file"},
      {"sim.rms_a", "2", "load current RMS in amperes"},
      {"sim.snr_db", "40", "additive noise level for generated waveforms"},
      {"sim.hif.files_per_cell", "2", "waveform files per surface and ratio cell"},
      {"corpus.hif.maps_per_class", "2000", "feature maps per class for fault training"},
      {"corpus.hif.stream_s", "0.5", "seconds of waveform behind each corpus entry"},
      {"corpus.load.events_per_class", "220", "switching events per appliance class"},
      {"train.epochs", "30", "optimiser passes over the training split"},
      {"train.batch", "64", "windows per optimiser step"},
      {"train.rate", "0.01", "Adam learning rate for the classifiers"},
      {"train.holdout", "0.2", "fraction of the corpus kept for evaluation"},
      {"train.hidden", "16", "hidden units of the load identifier"},
      {"disagg.windows", "6000", "training windows for the disaggregator"},
      {"disagg.window", "64", "samples per disaggregation window (6 s each)"},
      {"disagg.latent", "16", "disaggregator code dimensions"},
      {"disagg.kl_weight", "0.0016", "divergence weight in the disaggregation objective"},
      {"disagg.epochs", "150", "first-phase passes for the disaggregator"},
      {"disagg.rate", "0.002", "first-phase learning rate for the disaggregator"},
      {"disagg.epochs2", "100", "second-phase passes (0 disables the phase)"},
      {"disagg.rate2", "0.0003", "second-phase learning rate"},
      {"bench.duration_s", "30", "seconds of paced input for the benchmark"},
      {"bench.rate_hz", "20000", "benchmark source sample rate"},
      {"bench.chunk", "256", "samples per benchmark source item"},
      {"bench.capacity", "8", "queue slots per pipeline link"},
  };
  return entries;
}

Config Config::defaults() {
  Config cfg;
  for (const auto& entry : registry()) cfg.values_[entry.key] = entry.value;
  return cfg;
}

std::string Config::env_name(const std::string& key) {
  std::string name = "GRIDMON_";
  for (char c : key) {
    name += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return name;
}

std::string Config::document() {
  std::ostringstream out;
  for (const auto& entry : registry()) {
    out << entry.key << " = " << entry.value << "\n    " << entry.doc << "\n    env: " << env_name(entry.key)
        << "\n";
  }
  return out.str();
}

void Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    auto [key, value] = split_kv(stripped);
    if (key.empty()) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    set(key, value);
  }
}

void Config::apply_env() {
  for (const auto& entry : registry()) {
    if (const char* v = std::getenv(env_name(entry.key).c_str())) {
      values_[entry.key] = v;
    }
  }
}

void Config::set(const std::string& key, const std::string& value) {
  if (!values_.contains(key)) {
    throw FormatError("unknown configuration key '" + key + "'");
  }
  values_[key] = value;
}

const std::string& Config::text(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw InvalidArgument("unknown configuration key '" + key + "'");
  return it->second;
}

double Config::number(const std::string& key) const { return parse_number(text(key), key); }

std::int64_t Config::integer(const std::string& key) const {
  const double v = number(key);
  if (v != std::floor(v)) throw FormatError(key + " must be an integer, got '" + text(key) + "'");
  return static_cast<std::int64_t>(v);
}

bool Config::flag(const std::string& key) const {
  const auto& v = text(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw FormatError(key + " must be a boolean, got '" + v + "'");
}

void write_lines(const std::string& path, const std::vector<nlohmann::ordered_json>& rows) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  for (const auto& row : rows) out << row.dump() << '\n';
}

std::vector<nlohmann::ordered_json> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::vector<nlohmann::ordered_json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      rows.push_back(nlohmann::ordered_json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace gridmon::io
