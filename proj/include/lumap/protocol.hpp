#pragma once

// Tile wire protocol v1.
//
// Every frame is a u32 little-endian header length, a UTF-8 JSON header,
// then a raw payload whose size follows from the header:
//   hello    parent {"type":"hello","version":1,"channels":C,"tile":T}
//            child  {"type":"hello","version":1}
//   predict  {"type":"predict","id":n,"dtype":"f32","channels":C,"height":T,"width":T}
//            + C*T*T f32 LE
//   labels   {"type":"labels","id":n,"dtype":"u8","height":T,"width":T} + T*T u8
//   bye      {"type":"bye"}
//   error    {"type":"error","id":n,...}   (child -> parent, no payload)
// Strict request/response alternation per child process.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lumap/backend.hpp"

namespace lumap {

inline constexpr int kProtocolVersion = 1;

struct Frame {
    nlohmann::ordered_json header;
    std::vector<std::uint8_t> payload;
};

/// Payload size implied by a header; throws Protocol for unknown types or
/// dtypes.
std::size_t payload_size(const nlohmann::ordered_json& header);

std::vector<std::uint8_t> encode_frame(const Frame& frame);

nlohmann::ordered_json hello_request(std::size_t channels, std::size_t tile);
nlohmann::ordered_json hello_reply();
Frame predict_frame(std::uint64_t id, const ChannelStack& tile);
Frame labels_frame(std::uint64_t id, const ClassMap& labels);
nlohmann::ordered_json bye_frame();

/// Reads whole frames from a file descriptor with a per-read deadline and
/// tracks the stream offset of each frame for diagnostics.
class FrameReader {
public:
    explicit FrameReader(int fd) : fd_(fd) {}

    /// Returns false on clean end-of-stream before the first byte of a frame.
    /// Throws Protocol on a frame cut short or a malformed header.
    bool read(Frame& out, std::chrono::milliseconds timeout);

    std::uint64_t offset() const { return offset_; }
    std::uint64_t last_frame_offset() const { return frame_offset_; }

    /// Every byte read so far, when recording is on.
    void record(std::vector<std::uint8_t>* sink) { sink_ = sink; }

private:
    /// Reads exactly n bytes; returns the count actually read before EOF.
    std::size_t read_exact(std::uint8_t* dst, std::size_t n, std::chrono::steady_clock::time_point deadline);

    int fd_;
    std::uint64_t offset_ = 0;
    std::uint64_t frame_offset_ = 0;
    std::vector<std::uint8_t>* sink_ = nullptr;
};

/// Writes all bytes or throws (Backend on a closed pipe).
void write_all(int fd, std::span<const std::uint8_t> bytes);

/// Child process with its stdin/stdout piped; stderr is inherited.
class ChildProcess {
public:
    /// Runs `command` through /bin/sh -c.
    explicit ChildProcess(const std::string& command);
    ~ChildProcess();
    ChildProcess(const ChildProcess&) = delete;
    ChildProcess& operator=(const ChildProcess&) = delete;

    int in_fd() const { return to_child_; }
    int out_fd() const { return from_child_; }
    void close_input();
    /// Waits up to `timeout`, then kills. Returns the exit status or -1.
    int wait(std::chrono::milliseconds timeout);

private:
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
};

struct ExternalOptions {
    std::size_t num_classes = 9;
    std::size_t tile = 640;
    std::chrono::milliseconds timeout{60000};
    /// When set, every byte exchanged (both directions, in order) is appended.
    std::shared_ptr<std::vector<std::uint8_t>> transcript;
};

/// Spawns `command`, performs the hello handshake and then forwards tiles.
/// No restart on crash: a dead child surfaces as an error naming the tile.
std::shared_ptr<Backend> make_external_backend(const std::string& command, std::size_t channels,
                                               const ExternalOptions& options = {});

/// Factory spawning one child per call, for worker pools.
BackendFactory external_factory(const std::string& command, std::size_t channels, const ExternalOptions& options = {});

}  // namespace lumap
