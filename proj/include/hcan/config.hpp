#pragma once

#include <map>
#include <string>

#include "hcan/dataio.hpp"
#include "hcan/trainer.hpp"

namespace hcan {

// Flat key=value configuration with documented defaults. Precedence:
// defaults < config file < command-line overrides. Unknown keys are hard
// errors.
class RunConfig {
 public:
  RunConfig();   // defaults

  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_uint64(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  TrainConfig train_config() const;
  SyntheticSpec synthetic_spec() const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace hcan
