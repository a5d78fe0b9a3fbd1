#include "lumap/protocol.hpp"

#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "lumap/error.hpp"

namespace lumap {

namespace {

using ojson = nlohmann::ordered_json;

constexpr std::uint32_t kMaxHeaderBytes = 1u << 20;

std::string at_offset(std::uint64_t off) { return "frame at offset " + std::to_string(off) + ": "; }

}  // namespace

std::size_t payload_size(const ojson& header) {
    if (!header.is_object() || !header.contains("type") || !header["type"].is_string())
        throw_protocol("frame header has no type");
    const std::string type = header["type"].get<std::string>();
    if (type == "hello" || type == "bye" || type == "error") return 0;
    if (type != "predict" && type != "labels") throw_protocol("unknown frame type '" + type + "'");
    try {
        const std::string dtype = header.at("dtype").get<std::string>();
        const auto h = header.at("height").get<std::size_t>();
        const auto w = header.at("width").get<std::size_t>();
        if (type == "predict") {
            if (dtype != "f32") throw_protocol("predict frames carry f32, got '" + dtype + "'");
            return header.at("channels").get<std::size_t>() * h * w * 4;
        }
        if (dtype != "u8") throw_protocol("labels frames carry u8, got '" + dtype + "'");
        return h * w;
    } catch (const nlohmann::json::exception& e) {
        throw_protocol("bad " + type + " header: " + e.what());
    }
}

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
    const std::string text = frame.header.dump();
    const auto hlen = static_cast<std::uint32_t>(text.size());
    std::vector<std::uint8_t> out(4 + text.size() + frame.payload.size());
    std::memcpy(out.data(), &hlen, 4);
    std::memcpy(out.data() + 4, text.data(), text.size());
    if (!frame.payload.empty()) std::memcpy(out.data() + 4 + text.size(), frame.payload.data(), frame.payload.size());
    return out;
}

ojson hello_request(std::size_t channels, std::size_t tile) {
    ojson j;
    j["type"] = "hello";
    j["version"] = kProtocolVersion;
    j["channels"] = channels;
    j["tile"] = tile;
    return j;
}

ojson hello_reply() {
    ojson j;
    j["type"] = "hello";
    j["version"] = kProtocolVersion;
    return j;
}

Frame predict_frame(std::uint64_t id, const ChannelStack& tile) {
    Frame f;
    f.header["type"] = "predict";
    f.header["id"] = id;
    f.header["dtype"] = "f32";
    f.header["channels"] = tile.channels();
    f.header["height"] = tile.height;
    f.header["width"] = tile.width;
    f.payload.resize(tile.data.size() * 4);
    std::memcpy(f.payload.data(), tile.data.data(), f.payload.size());
    return f;
}

Frame labels_frame(std::uint64_t id, const ClassMap& labels) {
    Frame f;
    f.header["type"] = "labels";
    f.header["id"] = id;
    f.header["dtype"] = "u8";
    f.header["height"] = labels.height;
    f.header["width"] = labels.width;
    f.payload = labels.labels;
    return f;
}

ojson bye_frame() { return ojson{{"type", "bye"}}; }

std::size_t FrameReader::read_exact(std::uint8_t* dst, std::size_t n, std::chrono::steady_clock::time_point deadline) {
    std::size_t got = 0;
    while (got < n) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) throw_backend("timed out waiting for external backend");
        pollfd p{fd_, POLLIN, 0};
        const int rc = ::poll(&p, 1, static_cast<int>(std::min<long long>(left.count(), 1 << 30)));
        if (rc < 0) {
            if (errno == EINTR) continue;
            throw_backend(std::string("poll failed: ") + std::strerror(errno));
        }
        if (rc == 0) continue;
        const ssize_t r = ::read(fd_, dst + got, n - got);
        if (r < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            if (errno == ECONNRESET) break;
            throw_backend(std::string("read from external backend failed: ") + std::strerror(errno));
        }
        if (r == 0) break;
        if (sink_) sink_->insert(sink_->end(), dst + got, dst + got + r);
        got += static_cast<std::size_t>(r);
        offset_ += static_cast<std::uint64_t>(r);
    }
    return got;
}

bool FrameReader::read(Frame& out, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    frame_offset_ = offset_;
    std::uint8_t len[4];
    const std::size_t got = read_exact(len, 4, deadline);
    if (got == 0) return false;
    if (got < 4) throw_protocol(at_offset(frame_offset_) + "stream ended inside the length prefix");
    std::uint32_t hlen = 0;
    std::memcpy(&hlen, len, 4);
    if (hlen == 0 || hlen > kMaxHeaderBytes)
        throw_protocol(at_offset(frame_offset_) + "implausible header length " + std::to_string(hlen));
    std::string text(hlen, '\0');
    if (read_exact(reinterpret_cast<std::uint8_t*>(text.data()), hlen, deadline) < hlen)
        throw_protocol(at_offset(frame_offset_) + "stream ended inside the JSON header");
    std::size_t need = 0;
    try {
        out.header = ojson::parse(text);
        need = payload_size(out.header);
    } catch (const nlohmann::json::exception& e) {
        throw_protocol(at_offset(frame_offset_) + "malformed header: " + e.what());
    } catch (const Error& e) {
        throw_protocol(at_offset(frame_offset_) + e.what());
    }
    out.payload.resize(need);
    const std::size_t body = read_exact(out.payload.data(), need, deadline);
    if (body < need)
        throw_protocol(at_offset(frame_offset_) + "wrong payload length: got " + std::to_string(body) + " of " +
                       std::to_string(need) + " bytes before end of stream");
    return true;
}

void write_all(int fd, std::span<const std::uint8_t> bytes) {
    std::size_t done = 0;
    while (done < bytes.size()) {
        const ssize_t w = ::send(fd, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
        if (w < 0) {
            if (errno == EINTR) continue;
            if (errno == EPIPE || errno == ECONNRESET) throw_backend("external backend closed its input");
            throw_backend(std::string("write to external backend failed: ") + std::strerror(errno));
        }
        done += static_cast<std::size_t>(w);
    }
}

}  // namespace lumap
