#include "mctangent/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mctangent/errors.hpp"

namespace mct {

namespace {

constexpr char kMagic[4] = {'M', 'C', 'T', '1'};
constexpr std::size_t kMaxRank = 8;

template <typename T>
T to_little(T x) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(x);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return x;
}

template <typename T>
void put(std::string& out, T x) {
  x = to_little(x);
  char buf[sizeof(T)];
  std::memcpy(buf, &x, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw IoError("array file is truncated");
  T x;
  std::memcpy(&x, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return to_little(x);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string encode_array(const Tensor& t, DType dtype) {
  if (t.rank() > kMaxRank) throw IoError("array rank too large to encode");
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(dtype));
  out.push_back(static_cast<char>(t.rank()));
  for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
  const std::size_t width = dtype == DType::F64 ? 8 : 4;
  out.reserve(out.size() + width * t.size());
  for (double x : t.data()) {
    if (dtype == DType::F64) {
      put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
    } else {
      put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
    }
  }
  return out;
}

Tensor decode_array(std::string_view bytes) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError("not an MCT1 array file");
  const auto dtype = static_cast<unsigned char>(bytes[4]);
  if (dtype > 1) throw IoError("unknown array dtype code " + std::to_string(dtype));
  const std::size_t rank = static_cast<unsigned char>(bytes[5]);
  if (rank > kMaxRank) throw IoError("array rank " + std::to_string(rank) + " is out of range");
  std::size_t pos = 6;
  Shape shape(rank);
  std::size_t count = 1;
  for (auto& d : shape) {
    d = static_cast<std::size_t>(take<std::uint64_t>(bytes, pos));
    count *= d;
  }
  const std::size_t width = dtype == 0 ? 8 : 4;
  if (bytes.size() - pos != count * width) {
    throw IoError("array payload has " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                  std::to_string(count * width));
  }
  std::vector<double> data(count);
  for (auto& x : data) {
    x = dtype == 0 ? std::bit_cast<double>(take<std::uint64_t>(bytes, pos))
                   : static_cast<double>(std::bit_cast<float>(take<std::uint32_t>(bytes, pos)));
  }
  return Tensor(std::move(shape), std::move(data));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

void write_array(const std::filesystem::path& path, const Tensor& t, DType dtype) {
  write_text(path, encode_array(t, dtype));
}

Tensor read_array(const std::filesystem::path& path) {
  try {
    return decode_array(read_text(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

Tensor trajectory_to_tensor(const Trajectory& traj) {
  const std::size_t rows = traj.states.size();
  const std::size_t n = traj.state_size();
  Tensor t({rows, n});
  for (std::size_t k = 0; k < rows; ++k) {
    if (traj.states[k].size() != n) throw DimensionError("trajectory states differ in length");
    std::copy(traj.states[k].begin(), traj.states[k].end(), t.data().begin() + static_cast<std::ptrdiff_t>(k * n));
  }
  return t;
}

Trajectory tensor_to_trajectory(const Tensor& t, double dt, Grid grid) {
  if (t.rank() != 2) throw DimensionError("a trajectory array must have rank 2, got " + shape_string(t.shape()));
  Trajectory traj;
  traj.dt = dt;
  traj.grid = grid;
  const std::size_t n = t.cols();
  for (std::size_t k = 0; k < t.rows(); ++k) {
    auto row = t.data().subspan(k * n, n);
    traj.states.emplace_back(row.begin(), row.end());
  }
  return traj;
}

void write_trajectory(const std::filesystem::path& path, const Trajectory& traj) {
  write_array(path, trajectory_to_tensor(traj));
}

Trajectory read_trajectory(const std::filesystem::path& path, double dt, Grid grid) {
  return tensor_to_trajectory(read_array(path), dt, grid);
}

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

Config Config::parse(std::string_view text) {
  Config cfg;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string s = trim(line);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ValidationError("config line " + std::to_string(line_no) + ": unterminated section");
      section = trim(std::string_view(s).substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    std::string key = trim(std::string_view(s).substr(0, eq));
    if (key.empty()) throw ValidationError("config line " + std::to_string(line_no) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    cfg.values_[key] = trim(std::string_view(s).substr(eq + 1));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) { return parse(read_text(path)); }

std::string Config::serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

void Config::save(const std::filesystem::path& path) const { write_text(path, serialize()); }

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

const std::string& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("missing config key '" + key + "'");
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key) const {
  const std::string& s = get(key);
  double x = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError(key + ": '" + s + "' is not a number");
  }
  return x;
}

std::uint64_t Config::get_u64(const std::string& key) const {
  const std::string& s = get(key);
  std::uint64_t x = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError(key + ": '" + s + "' is not a non-negative integer");
  }
  return x;
}

std::size_t Config::get_size(const std::string& key) const { return static_cast<std::size_t>(get_u64(key)); }

bool Config::get_bool(const std::string& key) const {
  const std::string& s = get(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ValidationError(key + ": '" + s + "' is not a boolean");
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
  if (header.empty()) throw ContractError("CSV header must not be empty");
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw DimensionError("CSV row has the wrong number of cells");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) text_ += ',';
    text_ += cells[i];
  }
  text_ += '\n';
}

void CsvWriter::row(const std::vector<double>& cells) {
  std::vector<std::string> s;
  s.reserve(cells.size());
  for (double x : cells) s.push_back(format_double(x));
  row(s);
}

void save_checkpoint(const std::filesystem::path& dir, const TangentNetwork& net, const Config& meta) {
  std::filesystem::create_directories(dir);
  Config manifest = meta;
  manifest.set("checkpoint.architecture", std::string(architecture_name(net.architecture())));
  manifest.set("checkpoint.mode", std::string(mode_name(net.mode())));
  manifest.set_size("checkpoint.n", net.input_size());
  manifest.set_size("checkpoint.hidden", net.hidden());
  manifest.set_bool("checkpoint.use_bias", net.use_bias());
  const auto names = net.param_names();
  std::string list;
  for (std::size_t p = 0; p < names.size(); ++p) {
    if (p) list += ",";
    list += names[p];
    manifest.set("checkpoint.shape." + names[p], shape_string(net.params()[p].shape()));
    write_array(dir / (names[p] + ".mct"), net.params()[p]);
  }
  manifest.set("checkpoint.params", list);
  manifest.save(dir / "manifest.txt");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  Checkpoint ck;
  ck.manifest = Config::load(dir / "manifest.txt");
  const auto& m = ck.manifest;
  TangentNetwork net(parse_architecture(m.get("checkpoint.architecture")), parse_mode(m.get("checkpoint.mode")),
                     m.get_size("checkpoint.n"), m.get_size("checkpoint.hidden"), m.get_bool("checkpoint.use_bias"));
  const auto names = net.param_names();
  for (std::size_t p = 0; p < names.size(); ++p) {
    Tensor t = read_array(dir / (names[p] + ".mct"));
    if (t.shape() != net.params()[p].shape()) {
      throw DimensionError("checkpoint parameter " + names[p] + " has shape " + shape_string(t.shape()) +
                           ", expected " + shape_string(net.params()[p].shape()));
    }
    net.params()[p] = std::move(t);
  }
  ck.net = std::move(net);
  return ck;
}

}  // namespace mct
