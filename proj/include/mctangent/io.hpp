#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mctangent/field.hpp"
#include "mctangent/network.hpp"
#include "mctangent/tensor.hpp"

namespace mct {

// Binary array files: "MCT1", dtype byte (0 f64, 1 f32), rank byte, rank
// little-endian u64 dims, then the row-major little-endian payload.
enum class DType : std::uint8_t { F64 = 0, F32 = 1 };

std::string encode_array(const Tensor& t, DType dtype = DType::F64);
Tensor decode_array(std::string_view bytes);

void write_array(const std::filesystem::path& path, const Tensor& t, DType dtype = DType::F64);
Tensor read_array(const std::filesystem::path& path);

/// Trajectories are stored as [(N_t + 1) x n] arrays.
Tensor trajectory_to_tensor(const Trajectory& traj);
Trajectory tensor_to_trajectory(const Tensor& t, double dt, Grid grid);
void write_trajectory(const std::filesystem::path& path, const Trajectory& traj);
Trajectory read_trajectory(const std::filesystem::path& path, double dt, Grid grid);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double x);

/// Flat `key = value` configuration. `[section]` headers prefix the keys that
/// follow with "section."; `#` starts a comment. Keys serialize sorted.
class Config {
 public:
  static Config parse(std::string_view text);
  static Config load(const std::filesystem::path& path);

  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  void set_double(const std::string& key, double v) { values_[key] = format_double(v); }
  void set_size(const std::string& key, std::size_t v) { values_[key] = std::to_string(v); }
  void set_bool(const std::string& key, bool v) { values_[key] = v ? "true" : "false"; }
  void erase(const std::string& key) { values_.erase(key); }
  /// Copies every key of `other`, overwriting.
  void merge(const Config& other);

  const std::string& get(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// CSV with a header row, '.' decimals and '\n' line endings.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void row(const std::vector<std::string>& cells);
  void row(const std::vector<double>& cells);
  const std::string& text() const noexcept { return text_; }
  void save(const std::filesystem::path& path) const { write_text(path, text_); }

 private:
  std::size_t columns_;
  std::string text_;
};

/// One array per parameter plus manifest.txt (architecture, mode, shapes and
/// whatever `meta` carries, typically the experiment configuration).
void save_checkpoint(const std::filesystem::path& dir, const TangentNetwork& net, const Config& meta);

struct Checkpoint {
  TangentNetwork net;
  Config manifest;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace mct
