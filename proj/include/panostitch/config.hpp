#pragma once

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "panostitch/color.hpp"
#include "panostitch/geometry.hpp"
#include "panostitch/losses.hpp"
#include "panostitch/optimizer.hpp"

namespace panostitch::config {

/// `key = value` lines; `#` starts a comment; blank lines ignored. Throws
/// DomainError naming the line on malformed input. Order is preserved.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text,
                                                                  std::string_view origin);

struct KeySpec {
  std::string key;
  std::string default_value;
  std::string help;
};

/// Flat key-value configuration with a fixed schema (rig.*, color.*, loss.*,
/// optim.*, io.*). Every key always has a value; unknown keys are rejected.
class Config {
 public:
  Config();

  static const std::vector<KeySpec>& schema();
  static Config parse(std::string_view text, std::string_view origin = "<config>");
  static Config load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_list(const std::string& key) const;

  /// Every key, schema order, `key = value` per line.
  std::string serialize() const;
  /// Defaults and descriptions, one per line (for --help).
  static std::string describe();

  geometry::RigConfig rig() const;
  losses::LossConfig loss() const;
  optimizer::OptimConfig optim() const;
  color::ConsistencyOptions consistency() const;
  double alpha() const;
  int control_divisor() const;

  /// Writes the rig.* keys from a rig description.
  void set_rig(const geometry::RigConfig& rig);

  bool operator==(const Config&) const = default;

 private:
  std::map<std::string, std::string> values_;
};

std::string format_list(const std::vector<double>& values);
std::string format_double(double v);

}  // namespace panostitch::config
