#pragma once

#include <chrono>
#include <csignal>
#include <cstring>
#include <string>
#include <tuple>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <textevo/errors.hpp>

namespace textevo {

struct SubprocessResult {
    int exit_code = -1;
    bool timed_out = false;
    bool signaled = false;
    int term_signal = 0;
    std::string stdout_data;
    std::string stderr_data;
};

namespace detail {

inline void ignore_sigpipe_once() {
    static const bool done = [] {
        std::signal(SIGPIPE, SIG_IGN);
        return true;
    }();
    (void)done;
}

inline void set_nonblocking(int fd) {
    const int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

} // namespace detail

/// Spawns argv[0] with the given arguments, feeds `stdin_data` to its stdin,
/// and drains stdout/stderr until exit or timeout. On timeout the child is
/// killed with SIGKILL and whatever output was collected is returned.
/// Spawn failures (missing executable) raise SpawnFailure.
inline SubprocessResult run_subprocess(const std::vector<std::string>& argv, const std::string& stdin_data,
                                       std::chrono::milliseconds timeout) {
    if (argv.empty()) throw ContractViolation("run_subprocess: empty argv");
    detail::ignore_sigpipe_once();

    int in_pipe[2], out_pipe[2], err_pipe[2];
    if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0 || ::pipe(err_pipe) != 0)
        throw SpawnFailure("pipe() failed: " + std::string(std::strerror(errno)));

    // exec failure is reported through a CLOEXEC pipe so the parent can
    // distinguish "program missing" from "program exited nonzero"
    int exec_pipe[2];
    if (::pipe2(exec_pipe, O_CLOEXEC) != 0)
        throw SpawnFailure("pipe2() failed: " + std::string(std::strerror(errno)));

    const pid_t pid = ::fork();
    if (pid < 0) throw SpawnFailure("fork() failed: " + std::string(std::strerror(errno)));

    if (pid == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::dup2(err_pipe[1], STDERR_FILENO);
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        ::close(err_pipe[0]);
        ::close(err_pipe[1]);
        ::close(exec_pipe[0]);
        std::vector<char*> cargv;
        for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
        cargv.push_back(nullptr);
        ::execvp(cargv[0], cargv.data());
        const int err = errno;
        (void)!::write(exec_pipe[1], &err, sizeof(err));
        ::_exit(127);
    }

    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    ::close(exec_pipe[1]);

    {
        int err = 0;
        const ssize_t n = ::read(exec_pipe[0], &err, sizeof(err));
        ::close(exec_pipe[0]);
        if (n == sizeof(err)) {
            ::close(in_pipe[1]);
            ::close(out_pipe[0]);
            ::close(err_pipe[0]);
            int status = 0;
            ::waitpid(pid, &status, 0);
            throw SpawnFailure("cannot execute '" + argv[0] + "': " + std::strerror(err));
        }
    }

    detail::set_nonblocking(in_pipe[1]);
    detail::set_nonblocking(out_pipe[0]);
    detail::set_nonblocking(err_pipe[0]);

    SubprocessResult result;
    std::size_t written = 0;
    int stdin_fd = in_pipe[1];
    int stdout_fd = out_pipe[0];
    int stderr_fd = err_pipe[0];
    if (stdin_data.empty()) {
        ::close(stdin_fd);
        stdin_fd = -1;
    }

    const auto deadline = std::chrono::steady_clock::now() + timeout;
    char buf[4096];

    while (stdout_fd >= 0 || stderr_fd >= 0 || stdin_fd >= 0) {
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            result.timed_out = true;
            break;
        }
        const auto wait_ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();

        struct pollfd fds[3];
        int nfds = 0;
        int idx_in = -1, idx_out = -1, idx_err = -1;
        if (stdin_fd >= 0) {
            idx_in = nfds;
            fds[nfds++] = {stdin_fd, POLLOUT, 0};
        }
        if (stdout_fd >= 0) {
            idx_out = nfds;
            fds[nfds++] = {stdout_fd, POLLIN, 0};
        }
        if (stderr_fd >= 0) {
            idx_err = nfds;
            fds[nfds++] = {stderr_fd, POLLIN, 0};
        }

        const int rc = ::poll(fds, static_cast<nfds_t>(nfds), static_cast<int>(std::min<long long>(wait_ms, 1000)));
        if (rc < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (rc == 0) continue;

        if (idx_in >= 0 && (fds[idx_in].revents & (POLLOUT | POLLERR | POLLHUP))) {
            if (fds[idx_in].revents & (POLLERR | POLLHUP)) {
                ::close(stdin_fd);
                stdin_fd = -1;
            } else {
                const ssize_t n = ::write(stdin_fd, stdin_data.data() + written,
                                          std::min<std::size_t>(stdin_data.size() - written, sizeof(buf)));
                if (n > 0) written += static_cast<std::size_t>(n);
                if (n < 0 && errno != EAGAIN && errno != EINTR) {
                    ::close(stdin_fd);
                    stdin_fd = -1;
                }
                if (written >= stdin_data.size() && stdin_fd >= 0) {
                    ::close(stdin_fd);
                    stdin_fd = -1;
                }
            }
        }
        for (auto [idx, fd, sink] : {std::tuple{idx_out, &stdout_fd, &result.stdout_data},
                                     std::tuple{idx_err, &stderr_fd, &result.stderr_data}}) {
            if (idx < 0 || !(fds[idx].revents & (POLLIN | POLLHUP | POLLERR))) continue;
            const ssize_t n = ::read(*fd, buf, sizeof(buf));
            if (n > 0) {
                sink->append(buf, static_cast<std::size_t>(n));
            } else if (n == 0 || (n < 0 && errno != EAGAIN && errno != EINTR)) {
                ::close(*fd);
                *fd = -1;
            }
        }
    }

    if (stdin_fd >= 0) ::close(stdin_fd);
    if (stdout_fd >= 0) ::close(stdout_fd);
    if (stderr_fd >= 0) ::close(stderr_fd);

    if (result.timed_out) ::kill(pid, SIGKILL);
    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    if (WIFEXITED(status)) {
        result.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        result.signaled = true;
        result.term_signal = WTERMSIG(status);
    }
    return result;
}

} // namespace textevo
