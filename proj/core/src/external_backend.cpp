#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <map>

#include "esm/error.hpp"
#include "esm/jsonio.hpp"
#include "esm/measurement.hpp"

namespace esm {

namespace {

using Clock = std::chrono::steady_clock;

struct Pipe {
  int read_fd = -1;
  int write_fd = -1;
  Pipe() {
    int fds[2];
    if (pipe(fds) != 0)
      throw BackendError(std::string("pipe() failed: ") + std::strerror(errno));
    read_fd = fds[0];
    write_fd = fds[1];
  }
  ~Pipe() {
    close_read();
    close_write();
  }
  void close_read() {
    if (read_fd >= 0) ::close(read_fd);
    read_fd = -1;
  }
  void close_write() {
    if (write_fd >= 0) ::close(write_fd);
    write_fd = -1;
  }
};

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                        deadline - Clock::now())
                        .count();
  return left > 0 ? static_cast<int>(left) : 0;
}

// Runs `command` via /bin/sh, writes `request` to its stdin, returns stdout.
// Enforces a wall-clock deadline over the whole exchange.
struct ExchangeResult {
  std::string output;
  int exit_code = 0;
  bool timed_out = false;
};

ExchangeResult run_exchange(const std::string& command,
                            const std::string& request, double timeout_s) {
  Pipe to_child;
  Pipe from_child;
  const pid_t pid = fork();
  if (pid < 0)
    throw BackendError(std::string("fork() failed: ") + std::strerror(errno));
  if (pid == 0) {
    setpgid(0, 0);  // own group so a timeout kill reaps the whole tree
    dup2(to_child.read_fd, STDIN_FILENO);
    dup2(from_child.write_fd, STDOUT_FILENO);
    to_child.close_read();
    to_child.close_write();
    from_child.close_read();
    from_child.close_write();
    execl("/bin/sh", "sh", "-c", command.c_str(), nullptr);
    _exit(127);
  }
  setpgid(pid, pid);  // mirror of the child's call; either one wins the race
  to_child.close_read();
  from_child.close_write();

  const auto deadline =
      Clock::now() + std::chrono::milliseconds(
                         static_cast<long long>(timeout_s * 1000.0));
  fcntl(to_child.write_fd, F_SETFL, O_NONBLOCK);
  // The child may die before reading everything; don't let EPIPE kill us.
  signal(SIGPIPE, SIG_IGN);

  ExchangeResult result;
  std::size_t written = 0;
  bool write_open = true;
  bool read_open = true;
  char buffer[4096];
  while (read_open) {
    pollfd fds[2];
    nfds_t nfds = 0;
    int write_slot = -1, read_slot = -1;
    if (write_open) {
      write_slot = static_cast<int>(nfds);
      fds[nfds++] = {to_child.write_fd, POLLOUT, 0};
    }
    read_slot = static_cast<int>(nfds);
    fds[nfds++] = {from_child.read_fd, POLLIN, 0};

    const int waited = poll(fds, nfds, remaining_ms(deadline));
    if (waited < 0) {
      if (errno == EINTR) continue;
      throw BackendError(std::string("poll() failed: ") + std::strerror(errno));
    }
    if (waited == 0) {  // deadline hit
      result.timed_out = true;
      if (kill(-pid, SIGKILL) != 0) kill(pid, SIGKILL);
      break;
    }
    if (write_slot >= 0 && (fds[write_slot].revents & (POLLOUT | POLLERR))) {
      const ssize_t n = write(to_child.write_fd, request.data() + written,
                              request.size() - written);
      if (n > 0) written += static_cast<std::size_t>(n);
      if ((n < 0 && errno != EAGAIN && errno != EINTR) ||
          written == request.size()) {
        to_child.close_write();
        write_open = false;
      }
    }
    if (fds[read_slot].revents & (POLLIN | POLLHUP)) {
      const ssize_t n = read(from_child.read_fd, buffer, sizeof buffer);
      if (n > 0) {
        result.output.append(buffer, static_cast<std::size_t>(n));
      } else if (n == 0) {
        read_open = false;
      } else if (errno != EAGAIN && errno != EINTR) {
        read_open = false;
      }
    }
  }

  int status = 0;
  waitpid(pid, &status, 0);
  if (WIFEXITED(status))
    result.exit_code = WEXITSTATUS(status);
  else if (WIFSIGNALED(status))
    result.exit_code = 128 + WTERMSIG(status);
  return result;
}

}  // namespace

ExternalBackend::ExternalBackend(ExternalBackendOptions options)
    : options_(std::move(options)) {
  if (options_.command.empty())
    throw ConfigError("external backend requires a command");
  if (options_.timeout_s <= 0)
    throw ConfigError("external backend timeout must be > 0");
}

BackendCapabilities ExternalBackend::capabilities() const {
  return {"external:" + options_.command, false, 0};
}

std::vector<std::vector<double>> ExternalBackend::collect(
    const std::vector<ArchConfig>& archs,
    const std::vector<std::string>& arch_ids, int runs_per_arch,
    std::uint64_t seed, const std::string& batch_id) {
  (void)seed;  // external hardware owns its own stochasticity
  if (arch_ids.size() != archs.size())
    throw BackendError("arch_ids size mismatch");

  Json request;
  request["batch_id"] = batch_id;
  request["runs_per_arch"] = runs_per_arch;
  auto& list = request["archs"] = Json::array();
  for (std::size_t i = 0; i < archs.size(); ++i) {
    Json entry = archs[i];
    entry["arch_id"] = arch_ids[i];
    list.push_back(std::move(entry));
  }

  const auto exchange =
      run_exchange(options_.command, request.dump() + "\n", options_.timeout_s);
  if (exchange.timed_out)
    throw TimeoutError("external backend timed out after " +
                       std::to_string(options_.timeout_s) + " s (batch " +
                       batch_id + ")");
  if (exchange.exit_code != 0)
    throw ExitError("external backend exited with status " +
                    std::to_string(exchange.exit_code) + " (batch " +
                    batch_id + ")");

  const auto newline = exchange.output.find('\n');
  const std::string line = newline == std::string::npos
                               ? exchange.output
                               : exchange.output.substr(0, newline);
  if (line.empty())
    throw ProtocolError("external backend produced no response (batch " +
                        batch_id + ")");
  Json response = parse_json_line(line, "backend response");
  check_keys(response, {"batch_id", "results"}, {}, "backend response");
  if (response.at("batch_id").get<std::string>() != batch_id)
    throw ProtocolError("backend answered for batch '" +
                        response.at("batch_id").get<std::string>() +
                        "', expected '" + batch_id + "'");

  std::map<std::string, std::vector<double>> by_id;
  for (const auto& item : response.at("results")) {
    check_keys(item, {"arch_id", "runs_ms"}, {}, "backend result");
    by_id[item.at("arch_id").get<std::string>()] =
        item.at("runs_ms").get<std::vector<double>>();
  }

  std::vector<std::vector<double>> out;
  out.reserve(archs.size());
  for (const auto& id : arch_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw ProtocolError("backend response missing arch_id '" + id +
                          "' (batch " + batch_id + ")");
    if (it->second.size() != static_cast<std::size_t>(runs_per_arch))
      throw ProtocolError("backend returned " +
                          std::to_string(it->second.size()) + " runs for '" +
                          id + "', expected " + std::to_string(runs_per_arch));
    out.push_back(std::move(it->second));
  }
  return out;
}

}  // namespace esm
