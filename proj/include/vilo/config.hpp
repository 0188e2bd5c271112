#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

namespace vilo {

/// Flat key-value configuration with dotted section names:
///
///   # comment
///   sim.speed = 0.5
///   sim.slip_event = 0 10.0 10.25 0.3 0 0    # repeatable key
///
/// Values are whitespace- or comma-separated scalars. Unknown keys are kept
/// (and dumped), so configs round-trip.
class Config {
 public:
  Config() = default;

  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  double get_double(const std::string& key, double dflt) const;
  int get_int(const std::string& key, int dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;
  std::string get_string(const std::string& key, const std::string& dflt) const;
  Eigen::VectorXd get_vector(const std::string& key, const Eigen::VectorXd& dflt) const;

  /// All values of a repeatable key, in file order.
  std::vector<std::string> get_all(const std::string& key) const;

  void set(const std::string& key, const std::string& value);

  /// Deterministic dump (sorted keys, repeated keys in file order); the
  /// round-output provenance copy.
  std::string dump() const;

 private:
  // key -> values in insertion order
  std::map<std::string, std::vector<std::string>> kv_;
};

}  // namespace vilo
