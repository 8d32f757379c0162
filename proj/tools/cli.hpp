// `cadaug` command line: surfaces, augment, analyze, validate.

#pragma once

#include <ostream>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace cadaug::cli {

enum Exit : int { kOk = 0, kDomainFailure = 1, kUsage = 2, kEnvironment = 3 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One section per module; every key has a default.
nlohmann::json default_config();

// Keys unknown to the defaults are rejected so typos fail loudly.
void merge_config(nlohmann::json& base, const nlohmann::json& patch, const std::string& where = "");

// `section.key=value`; value is parsed as JSON when it parses, else taken as
// a string.
void apply_override(nlohmann::json& config, const std::string& assignment);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cadaug::cli
