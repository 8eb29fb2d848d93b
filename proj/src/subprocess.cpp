#include <cerrno>
#include <csignal>
#include <cstring>
#include <iomanip>
#include <sstream>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include "gpabc/model.hpp"

namespace gpabc {

SubprocessSimulator::SubprocessSimulator(std::vector<std::string> command, std::size_t output_dim)
    : command_(std::move(command)), output_dim_(output_dim) {
  if (command_.empty()) throw ConfigError("subprocess simulator needs a command");
  if (output_dim_ == 0) throw ConfigError("subprocess simulator output dimension must be >= 1");
}

SubprocessSimulator::~SubprocessSimulator() { stop(); }

void SubprocessSimulator::start() {
  int in_pipe[2];
  int out_pipe[2];
  if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) {
    throw SimulatorError(std::string("pipe: ") + std::strerror(errno));
  }
  const pid_t pid = fork();
  if (pid < 0) throw SimulatorError(std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    std::vector<char*> argv;
    for (auto& arg : command_) argv.push_back(arg.data());
    argv.push_back(nullptr);
    execvp(argv[0], argv.data());
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  pid_ = pid;
  buffer_.clear();
}

void SubprocessSimulator::stop() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

void SubprocessSimulator::fail(const std::string& what) {
  std::string detail = what;
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
    if (WIFEXITED(status) && WEXITSTATUS(status) != 0) {
      detail += " (exit status " + std::to_string(WEXITSTATUS(status)) + ")";
    } else if (WIFSIGNALED(status)) {
      detail += " (killed by signal " + std::to_string(WTERMSIG(status)) + ")";
    }
    pid_ = -1;
  }
  throw SimulatorError("subprocess simulator '" + command_.front() + "': " + detail);
}

Eigen::VectorXd SubprocessSimulator::simulate(const Eigen::VectorXd& theta, Rng& rng) {
  if (pid_ < 0) {
    // A broken pipe must surface as a write error, not terminate the process.
    std::signal(SIGPIPE, SIG_IGN);
    start();
  }

  std::ostringstream request;
  request << std::setprecision(17);
  for (Eigen::Index j = 0; j < theta.size(); ++j) request << theta[j] << ' ';
  request << rng() << '\n';
  const std::string line = request.str();
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = write(to_child_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail("write failed");
    }
    written += static_cast<std::size_t>(n);
  }

  std::size_t newline;
  while ((newline = buffer_.find('\n')) == std::string::npos) {
    char chunk[4096];
    const ssize_t n = read(from_child_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) fail("process closed its output before answering");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
  const std::string response = buffer_.substr(0, newline);
  buffer_.erase(0, newline + 1);

  std::istringstream in(response);
  Eigen::VectorXd out(static_cast<Eigen::Index>(output_dim_));
  for (std::size_t i = 0; i < output_dim_; ++i) {
    if (!(in >> out[static_cast<Eigen::Index>(i)])) {
      fail("malformed response line '" + response + "'");
    }
  }
  std::string extra;
  if (in >> extra) fail("response has more than " + std::to_string(output_dim_) + " values");
  return out;
}

}  // namespace gpabc
