#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <vector>

#include "autoscout/config_space.hpp"
#include "autoscout/oracle.hpp"

namespace autoscout {

/// Where real costs come from: a compiled-in synthetic preset or an external
/// profiler command.
struct OracleSpec {
  enum class Kind { Builtin, Command };
  Kind kind = Kind::Builtin;
  std::string target;  // preset name or executable path
  double timeout_seconds = 600.0;
  /// Variables passed to the command; empty inherits the whole environment.
  std::vector<std::string> env_passthrough;

  /// "builtin:<preset>" or "command:<path>".
  static OracleSpec parse(const std::string& text);
};

/// The profiler broke the one-line protocol (bad output, extra lines).
class ProtocolError : public OracleError {
 public:
  using OracleError::OracleError;
};

/// Parses one protocol line: a finite decimal or INFEASIBLE.
double parse_oracle_line(const std::string& line);

/// Runs the command once: the configuration goes to stdin as one JSON object,
/// exactly one line is read back from stdout. Throws OracleError on timeout
/// or nonzero exit, ProtocolError on unparseable output.
double external_oracle_eval(const OracleSpec& spec, const ConfigSpace& space, const Configuration& c);

/// Oracle calling the command; protocol violations are also counted in
/// `violations` when given.
Oracle make_command_oracle(OracleSpec spec, const ConfigSpace& space,
                           std::shared_ptr<std::atomic<std::size_t>> violations = nullptr);

}  // namespace autoscout
