#include "support/proc.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <stdexcept>

extern char** environ;

namespace dcs::test {

namespace {

[[noreturn]] void exec_child(const std::vector<std::string>& argv,
                             const std::vector<std::string>& extra_env) {
    std::vector<char*> args;
    for (const auto& a : argv)
        args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);

    std::vector<char*> env;
    for (char** e = environ; *e; ++e)
        env.push_back(*e);
    for (const auto& e : extra_env)
        env.push_back(const_cast<char*>(e.c_str()));
    env.push_back(nullptr);

    execve(args[0], args.data(), env.data());
    _exit(127);
}

std::string drain_fd(int fd) {
    std::string out;
    char buf[4096];
    ssize_t n;
    while ((n = read(fd, buf, sizeof buf)) > 0)
        out.append(buf, static_cast<std::size_t>(n));
    return out;
}

} // namespace

CmdResult run_cmd(const std::vector<std::string>& argv,
                  const std::vector<std::string>& extra_env) {
    int out_pipe[2], err_pipe[2];
    if (pipe(out_pipe) != 0 || pipe(err_pipe) != 0)
        throw std::runtime_error("pipe failed");

    const pid_t pid = fork();
    if (pid < 0)
        throw std::runtime_error("fork failed");
    if (pid == 0) {
        dup2(out_pipe[1], STDOUT_FILENO);
        dup2(err_pipe[1], STDERR_FILENO);
        close(out_pipe[0]);
        close(out_pipe[1]);
        close(err_pipe[0]);
        close(err_pipe[1]);
        exec_child(argv, extra_env);
    }
    close(out_pipe[1]);
    close(err_pipe[1]);

    CmdResult result;
    result.out = drain_fd(out_pipe[0]);
    result.err = drain_fd(err_pipe[0]);
    close(out_pipe[0]);
    close(err_pipe[0]);

    int status = 0;
    waitpid(pid, &status, 0);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

ChildProc::ChildProc(const std::vector<std::string>& argv) {
    int out_pipe[2];
    if (pipe(out_pipe) != 0)
        throw std::runtime_error("pipe failed");
    const pid_t pid = fork();
    if (pid < 0)
        throw std::runtime_error("fork failed");
    if (pid == 0) {
        dup2(out_pipe[1], STDOUT_FILENO);
        close(out_pipe[0]);
        close(out_pipe[1]);
        exec_child(argv, {});
    }
    close(out_pipe[1]);
    pid_ = pid;
    out_fd_ = out_pipe[0];
}

ChildProc::~ChildProc() {
    if (pid_ > 0) {
        kill(pid_, SIGKILL);
        waitpid(pid_, nullptr, 0);
    }
    if (out_fd_ >= 0)
        close(out_fd_);
}

std::string ChildProc::read_line() {
    while (true) {
        const auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        char buf[512];
        const ssize_t n = read(out_fd_, buf, sizeof buf);
        if (n <= 0)
            throw std::runtime_error("child closed stdout");
        buffer_.append(buf, static_cast<std::size_t>(n));
    }
}

void ChildProc::send_sigterm() {
    if (pid_ > 0)
        kill(pid_, SIGTERM);
}

int ChildProc::wait_exit() {
    int status = 0;
    waitpid(pid_, &status, 0);
    pid_ = -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string build_path(const std::string& rel) {
    const auto self = std::filesystem::read_symlink("/proc/self/exe");
    // tests live in <build>/tests/<binary>
    return (self.parent_path().parent_path() / rel).string();
}

} // namespace dcs::test
