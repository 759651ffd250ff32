#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "oscar/encoder.hpp"
#include "oscar/gradcheck.hpp"
#include "oscar/trainer.hpp"

namespace oscar {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat dotted-key configuration. Only known keys are accepted; every key
// has a default.
class Config {
 public:
  struct Key {
    std::string name;
    std::string default_value;
    std::string help;
  };
  static const std::vector<Key>& keys();

  Config();

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool is_set_explicitly(const std::string& key) const { return explicit_.count(key) != 0; }

  std::string get_string(const std::string& key) const { return get(key); }
  double get_double(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  // "key = value" lines; '#' starts a comment line; blank lines ignored.
  void load_file(const std::filesystem::path& path);
  void load_text(const std::string& text, const std::string& origin = "<config>");

  // All keys in sorted order as "key = value" lines.
  std::string echo() const;

  EncoderConfig encoder() const;
  TrainConfig train() const;
  OscarConfig oscar() const;
  GradcheckOptions gradcheck() const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> explicit_;
};

}  // namespace oscar
