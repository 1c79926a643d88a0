#pragma once

// Batch experiment driver. Each command reads a flat key=value configuration
// (defaults, then an optional --config file, then command-line flags), writes
// a CSV table and a manifest next to it, and returns a process exit status.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace fkm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitOutput = 3;

std::string version_string();

// Malformed configuration: unknown key, bad syntax, or an invalid value.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ParamSpec {
  std::string key;
  std::string default_value;
  std::string help;
};

// Keys understood by every command.
const std::vector<ParamSpec>& common_params();
// Keys specific to one command; throws ConfigError for unknown commands.
const std::vector<ParamSpec>& command_params(const std::string& command);
const std::vector<std::string>& command_names();

// Resolved key=value configuration with typed, validating accessors. Every
// accessor error names the offending key.
class Config {
public:
  Config() = default;
  Config(std::string command, std::map<std::string, std::string> values);

  const std::string& command() const noexcept { return command_; }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::size_t> get_sizes(const std::string& key) const;

private:
  std::string command_;
  std::map<std::string, std::string> values_;
};

// Parse a key=value file. '#' starts a comment; blank lines are ignored.
// Unknown keys and lines without '=' raise ConfigError with "path:line".
// `command` may be empty, in which case the file must name it.
// A `version` line (as written in manifests) is accepted and ignored, so a
// manifest can be fed back as a config.
std::map<std::string, std::string> read_config_file(const std::string& path, std::string& command);

// Defaults for the command, overlaid with `overrides`; unknown keys rejected.
Config resolve_config(const std::string& command, const std::map<std::string, std::string>& file_values,
                      const std::map<std::string, std::string>& flag_values);

// Run one resolved command. Validates every parameter before computing,
// opens both outputs before computing, and writes them on success.
int run_command(const Config& config, std::ostream& err);

// Full command-line entry point (argv[0] excluded).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Shortest round-trip decimal representation.
std::string format_double(double x);

}  // namespace fkm::cli
