#include "autoscout/external_oracle.hpp"

#include <cerrno>
#include <charconv>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace autoscout {

OracleSpec OracleSpec::parse(const std::string& text) {
  OracleSpec spec;
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("oracle must be builtin:<preset> or command:<path>");
  const auto kind = text.substr(0, colon);
  spec.target = text.substr(colon + 1);
  if (kind == "builtin") {
    spec.kind = Kind::Builtin;
  } else if (kind == "command") {
    spec.kind = Kind::Command;
  } else {
    throw std::invalid_argument("unknown oracle kind: " + kind);
  }
  if (spec.target.empty()) throw std::invalid_argument("oracle target is empty");
  return spec;
}

double parse_oracle_line(const std::string& raw) {
  const auto first = raw.find_first_not_of(" \t\r");
  const auto last = raw.find_last_not_of(" \t\r");
  if (first == std::string::npos) throw ProtocolError("oracle printed an empty line");
  const auto line = raw.substr(first, last - first + 1);
  if (line == "INFEASIBLE") return kInfeasible;
  double v = 0.0;
  const auto* end = line.data() + line.size();
  const auto [ptr, ec] = std::from_chars(line.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v))
    throw ProtocolError("oracle output is not a finite decimal: '" + line + "'");
  return v;
}

namespace {

struct Pipe {
  int fd[2] = {-1, -1};
  Pipe() {
    if (::pipe2(fd, O_CLOEXEC) != 0) throw OracleError(std::string("pipe: ") + std::strerror(errno));
  }
  ~Pipe() { close_all(); }
  void close_end(int i) {
    if (fd[i] >= 0) ::close(fd[i]);
    fd[i] = -1;
  }
  void close_all() {
    close_end(0);
    close_end(1);
  }
};

std::vector<std::string> child_environment(const std::vector<std::string>& pass) {
  std::vector<std::string> env;
  if (pass.empty()) {
    for (char** e = environ; *e; ++e) env.emplace_back(*e);
    return env;
  }
  for (const auto& name : pass)
    if (const char* v = std::getenv(name.c_str())) env.push_back(name + "=" + v);
  return env;
}

}  // namespace

double external_oracle_eval(const OracleSpec& spec, const ConfigSpace& space, const Configuration& c) {
  if (spec.kind != OracleSpec::Kind::Command) throw std::invalid_argument("not a command oracle");
  const std::string input = space.config_to_json(c).dump() + "\n";

  auto env_strings = child_environment(spec.env_passthrough);
  std::vector<char*> envp;
  for (auto& s : env_strings) envp.push_back(s.data());
  envp.push_back(nullptr);
  std::string path = spec.target;
  char* argv[] = {path.data(), nullptr};

  Pipe in, out;
  const pid_t pid = ::fork();
  if (pid < 0) throw OracleError(std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::dup2(in.fd[0], STDIN_FILENO);
    ::dup2(out.fd[1], STDOUT_FILENO);
    ::execve(path.c_str(), argv, envp.data());
    ::_exit(127);
  }
  in.close_end(0);
  out.close_end(1);

  // Small payload; a profiler that never reads stdin gets EPIPE, not a hang.
  std::signal(SIGPIPE, SIG_IGN);
  std::size_t written = 0;
  while (written < input.size()) {
    const auto n = ::write(in.fd[1], input.data() + written, input.size() - written);
    if (n <= 0) break;
    written += static_cast<std::size_t>(n);
  }
  in.close_end(1);

  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(spec.timeout_seconds);
  std::string output;
  bool timed_out = false;
  char buf[4096];
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      timed_out = true;
      break;
    }
    pollfd p{out.fd[0], POLLIN, 0};
    const int r = ::poll(&p, 1, static_cast<int>(std::min<long long>(left.count(), 1000)));
    if (r < 0 && errno == EINTR) continue;
    if (r == 0) continue;
    const auto n = ::read(out.fd[0], buf, sizeof buf);
    if (n <= 0) break;
    output.append(buf, static_cast<std::size_t>(n));
  }
  if (timed_out) ::kill(pid, SIGKILL);
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (timed_out) throw OracleError("oracle timed out after " + std::to_string(spec.timeout_seconds) + " s");
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw OracleError("oracle exited abnormally (status " + std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1) +
                      ")");

  if (!output.empty() && output.back() == '\n') output.pop_back();
  if (output.find('\n') != std::string::npos) throw ProtocolError("oracle printed more than one line");
  return parse_oracle_line(output);
}

Oracle make_command_oracle(OracleSpec spec, const ConfigSpace& space,
                           std::shared_ptr<std::atomic<std::size_t>> violations) {
  return [spec = std::move(spec), &space, violations](const Configuration& c) {
    try {
      return external_oracle_eval(spec, space, c);
    } catch (const ProtocolError&) {
      if (violations) ++*violations;
      throw;
    }
  };
}

}  // namespace autoscout
