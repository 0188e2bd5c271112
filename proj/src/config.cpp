#include "vilo/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vilo {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::parse_string(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config: line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::runtime_error("config: line " + std::to_string(line_no) + ": empty key");
    }
    c.kv_[key].push_back(value);
  }
  return c;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str());
}

double Config::get_double(const std::string& key, double dflt) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  try {
    return std::stod(it->second.back());
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "' is not a number: " + it->second.back());
  }
}

int Config::get_int(const std::string& key, int dflt) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  try {
    return std::stoi(it->second.back());
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "' is not an integer: " + it->second.back());
  }
}

bool Config::get_bool(const std::string& key, bool dflt) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  const std::string& v = it->second.back();
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::runtime_error("config: key '" + key + "' is not a boolean: " + v);
}

std::string Config::get_string(const std::string& key, const std::string& dflt) const {
  const auto it = kv_.find(key);
  return it == kv_.end() ? dflt : it->second.back();
}

Eigen::VectorXd Config::get_vector(const std::string& key, const Eigen::VectorXd& dflt) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  std::string v = it->second.back();
  for (auto& ch : v) {
    if (ch == ',') ch = ' ';
  }
  std::istringstream ss(v);
  std::vector<double> vals;
  double x;
  while (ss >> x) vals.push_back(x);
  Eigen::VectorXd out(vals.size());
  for (size_t i = 0; i < vals.size(); ++i) out(i) = vals[i];
  return out;
}

std::vector<std::string> Config::get_all(const std::string& key) const {
  const auto it = kv_.find(key);
  return it == kv_.end() ? std::vector<std::string>{} : it->second;
}

void Config::set(const std::string& key, const std::string& value) {
  kv_[key] = {value};
}

std::string Config::dump() const {
  std::ostringstream os;
  for (const auto& [key, values] : kv_) {
    for (const auto& v : values) {
      os << key << " = " << v << "\n";
    }
  }
  return os.str();
}

}  // namespace vilo
