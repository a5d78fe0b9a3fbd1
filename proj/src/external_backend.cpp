#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>
#include <thread>

#include "lumap/class_scheme.hpp"
#include "lumap/error.hpp"
#include "lumap/protocol.hpp"

extern char** environ;

namespace lumap {

ChildProcess::ChildProcess(const std::string& command) {
    // One socket carries both directions; send() with MSG_NOSIGNAL keeps a
    // dead child from raising SIGPIPE in the parent.
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0)
        throw_backend(std::string("socketpair failed: ") + std::strerror(errno));
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, sv[1], 0);
    posix_spawn_file_actions_adddup2(&actions, sv[1], 1);
    std::string sh = "/bin/sh";
    std::string dash_c = "-c";
    std::string cmd = command;
    char* argv[] = {sh.data(), dash_c.data(), cmd.data(), nullptr};
    pid_t pid = 0;
    const int rc = ::posix_spawn(&pid, "/bin/sh", &actions, nullptr, argv, environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(sv[1]);
    if (rc != 0) {
        ::close(sv[0]);
        throw_backend("cannot spawn '" + command + "': " + std::strerror(rc));
    }
    pid_ = pid;
    to_child_ = sv[0];
    from_child_ = sv[0];
}

ChildProcess::~ChildProcess() {
    if (pid_ > 0) wait(std::chrono::milliseconds(0));
    if (to_child_ >= 0) ::close(to_child_);
}

void ChildProcess::close_input() {
    if (to_child_ >= 0) ::shutdown(to_child_, SHUT_WR);
}

int ChildProcess::wait(std::chrono::milliseconds timeout) {
    if (pid_ <= 0) return -1;
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    int status = 0;
    for (;;) {
        const pid_t r = ::waitpid(pid_, &status, WNOHANG);
        if (r == pid_) break;
        if (r < 0 && errno != EINTR) {
            pid_ = -1;
            return -1;
        }
        if (std::chrono::steady_clock::now() >= deadline) {
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, &status, 0);
            pid_ = -1;
            return -1;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    pid_ = -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

namespace {

class ExternalBackend final : public Backend {
public:
    ExternalBackend(const std::string& command, std::size_t channels, ExternalOptions options)
        : options_(std::move(options)), channels_(channels), child_(command), reader_(child_.out_fd()) {
        if (options_.transcript) reader_.record(options_.transcript.get());
        send({hello_request(channels_, options_.tile), {}});
        Frame reply;
        if (!reader_.read(reply, options_.timeout)) throw_backend("external backend exited during handshake");
        const auto& h = reply.header;
        if (h.value("type", "") != "hello") throw_protocol("handshake: expected a hello frame");
        if (!h.contains("version") || !h["version"].is_number_integer() || h["version"].get<int>() != kProtocolVersion)
            throw_protocol("handshake version mismatch: expected " + std::to_string(kProtocolVersion) + ", got " +
                           (h.contains("version") ? h["version"].dump() : std::string("none")));
    }

    ~ExternalBackend() override {
        try {
            send({bye_frame(), {}});
        } catch (...) {
        }
        child_.close_input();
        child_.wait(std::chrono::milliseconds(2000));
    }

    std::size_t num_classes() const override { return options_.num_classes; }
    std::size_t channels() const override { return channels_; }
    bool thread_safe() const override { return false; }

    ClassMap predict(const ChannelStack& tile, const TileContext& ctx) override {
        std::lock_guard lock(mu_);
        const std::uint64_t id = ctx.tile_id;
        const std::string in_flight = "tile " + std::to_string(id);
        try {
            send(predict_frame(id, tile));
        } catch (const Error& e) {
            throw_backend("external backend failed while " + in_flight + " was in flight: " + e.what());
        }
        Frame reply;
        bool got = false;
        try {
            got = reader_.read(reply, options_.timeout);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::Protocol) throw_protocol(std::string(e.what()) + " (" + in_flight + ")");
            throw_backend(std::string(e.what()) + " (" + in_flight + ")");
        }
        if (!got) throw_backend("external backend exited while " + in_flight + " was in flight");
        const auto& h = reply.header;
        const std::string where = "frame at offset " + std::to_string(reader_.last_frame_offset()) + ": ";
        const std::string type = h.value("type", "");
        if (type == "error")
            throw_backend("external backend reported an error for " + in_flight + ": " + h.dump());
        if (type != "labels") throw_protocol(where + "expected labels, got '" + type + "'");
        if (h.value("id", std::uint64_t(~0ULL)) != id)
            throw_protocol(where + "reply id " + h["id"].dump() + " does not match " + in_flight);
        if (h.value("height", 0ULL) != tile.height || h.value("width", 0ULL) != tile.width)
            throw_protocol(where + "label tile is " + h["width"].dump() + "x" + h["height"].dump() + ", expected " +
                           std::to_string(tile.width) + "x" + std::to_string(tile.height));
        ClassMap out = ClassMap::filled(tile.width, tile.height, 0);
        out.labels = std::move(reply.payload);
        return out;
    }

private:
    void send(const Frame& f) {
        const auto bytes = encode_frame(f);
        if (options_.transcript) options_.transcript->insert(options_.transcript->end(), bytes.begin(), bytes.end());
        write_all(child_.in_fd(), bytes);
    }

    ExternalOptions options_;
    std::size_t channels_;
    ChildProcess child_;
    FrameReader reader_;
    std::mutex mu_;
};

}  // namespace

std::shared_ptr<Backend> make_external_backend(const std::string& command, std::size_t channels,
                                               const ExternalOptions& options) {
    if (command.empty()) throw_config("external backend command is empty");
    if (channels == 0) throw_config("external backend needs a channel count");
    if (options.num_classes < 2 || options.num_classes > 255) throw_config("external backend: K must be in [2, 255]");
    return std::make_shared<ExternalBackend>(command, channels, options);
}

BackendFactory external_factory(const std::string& command, std::size_t channels, const ExternalOptions& options) {
    return [=] { return make_external_backend(command, channels, options); };
}

}  // namespace lumap
