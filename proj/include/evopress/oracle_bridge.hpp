#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <sys/types.h>
#include <variant>
#include <vector>

#include "evopress/fitness.hpp"
#include "evopress/level_space.hpp"

namespace evopress {

// Protocol v1: newline-delimited compact JSON over the oracle's standard
// streams.
//   engine -> oracle: {"type":"hello","version":1}
//                     {"type":"eval","id":N,"levels":[...],"seed":S,"tokens":T}
//                     {"type":"bye"}
//   oracle -> engine: {"type":"info","version":1,"n_units":N,"levels_per_unit":[...]}
//                     {"type":"result","id":N,"fitness":F,"tokens_used":T}
//                     {"type":"error","id":N,"message":"..."}
inline constexpr int kProtocolVersion = 1;

struct OracleRequest {
    std::uint64_t request_id = 0;
    std::vector<int> levels;
    std::uint64_t seed = 0;
    std::int64_t tokens = 0;

    bool operator==(const OracleRequest&) const = default;
};

struct OracleResponse {
    std::uint64_t request_id = 0;
    double fitness = 0.0;
    std::int64_t tokens_used = 0;

    bool operator==(const OracleResponse&) const = default;
};

struct OracleInfo {
    int protocol_version = kProtocolVersion;
    std::size_t n_units = 0;
    std::vector<int> levels_per_unit;

    bool operator==(const OracleInfo&) const = default;
};

struct OracleFailure {
    std::uint64_t request_id = 0;
    std::string message;

    bool operator==(const OracleFailure&) const = default;
};

struct HelloMessage {
    int version = kProtocolVersion;
    bool operator==(const HelloMessage&) const = default;
};

struct ByeMessage {
    bool operator==(const ByeMessage&) const = default;
};

using OracleMessage = std::variant<OracleInfo, OracleResponse, OracleFailure>;
using EngineMessage = std::variant<HelloMessage, OracleRequest, ByeMessage>;

// Encoders return one line without the trailing newline.
std::string encode_hello(int version = kProtocolVersion);
std::string encode_eval(const OracleRequest& request);
std::string encode_bye();
std::string encode_info(const OracleInfo& info);
std::string encode_result(const OracleResponse& response);
std::string encode_error(std::uint64_t request_id, std::string_view message);

/// Throws MalformedResponse.
OracleMessage decode_oracle_message(std::string_view line);
/// Throws MalformedRequest.
EngineMessage decode_engine_message(std::string_view line);

/// Bidirectional line transport.
class LineChannel {
public:
    virtual ~LineChannel() = default;
    virtual void write_line(std::string_view line) = 0;
    /// Next line without its newline; nullopt on end of stream. Throws
    /// OracleTimeout when nothing arrives within `timeout`.
    virtual std::optional<std::string> read_line(std::chrono::milliseconds timeout) = 0;
    /// Signals end of input to the peer.
    virtual void close_write() = 0;
};

/// A child process whose stdin/stdout are connected to this channel.
/// The child is reaped (and killed if it lingers) on destruction.
class ChildProcess final : public LineChannel {
public:
    explicit ChildProcess(const std::vector<std::string>& argv);
    ~ChildProcess() override;

    ChildProcess(const ChildProcess&) = delete;
    ChildProcess& operator=(const ChildProcess&) = delete;

    void write_line(std::string_view line) override;
    std::optional<std::string> read_line(std::chrono::milliseconds timeout) override;
    void close_write() override;

    pid_t pid() const { return pid_; }

private:
    pid_t pid_ = -1;
    int fd_ = -1;
    bool write_closed_ = false;
    std::string buffer_;
};

/// Splits a command line on whitespace, honouring single and double quotes.
std::vector<std::string> split_command_line(std::string_view command);

struct OracleTimeouts {
    std::chrono::milliseconds handshake{120'000};
    std::chrono::milliseconds evaluate{600'000};
};

/// Throws SpaceMismatch unless the oracle's declared shape matches `db`.
void validate_space(const OracleInfo& info, const LevelDatabase& db);

/// One conversation with an external oracle. Not thread-safe; many
/// requests may be in flight and responses are matched by id.
class OracleSession {
public:
    explicit OracleSession(std::unique_ptr<LineChannel> channel, OracleTimeouts timeouts = {});
    ~OracleSession();

    OracleSession(const OracleSession&) = delete;
    OracleSession& operator=(const OracleSession&) = delete;

    static std::unique_ptr<OracleSession> spawn(const std::vector<std::string>& argv, OracleTimeouts timeouts = {});

    /// Sends hello and waits for info. Throws ProtocolMismatch, OracleTimeout
    /// or OracleCrashed.
    OracleInfo handshake();
    /// handshake() plus validate_space().
    OracleInfo handshake(const LevelDatabase& db);

    std::uint64_t next_request_id() const { return last_sent_id_ + 1; }

    /// Writes the request; its id must exceed every id sent before.
    void submit(const OracleRequest& request);
    /// Convenience: assigns the next id and submits.
    std::uint64_t submit(std::vector<int> levels, std::uint64_t seed, std::int64_t tokens);
    /// Blocks until the response for `request_id` arrives, buffering others.
    OracleResponse wait(std::uint64_t request_id);

    OracleResponse evaluate_remote(const OracleRequest& request);
    /// Submits everything first, then collects in request order.
    std::vector<OracleResponse> evaluate_pipelined(std::span<const OracleRequest> requests);

    /// Sends bye and closes the write side. Idempotent.
    void close();

    bool handshake_done() const { return info_.has_value(); }

private:
    std::string read_or_throw(std::chrono::milliseconds timeout);

    std::unique_ptr<LineChannel> channel_;
    OracleTimeouts timeouts_;
    std::optional<OracleInfo> info_;
    std::uint64_t last_sent_id_ = 0;
    std::map<std::uint64_t, bool> outstanding_;
    std::map<std::uint64_t, OracleMessage> arrived_;
    bool closed_ = false;
};

/// Fitness from an external process. Calls are serialized; evaluate_many
/// pipelines all candidates of a batch.
class ExternalOracle final : public FitnessOracle {
public:
    explicit ExternalOracle(std::shared_ptr<OracleSession> session);

    OracleKind kind() const override { return OracleKind::External; }
    double evaluate(const LevelDatabase& db, const LevelAssignment& a, const Batch& batch) const override;
    std::vector<double> evaluate_many(const LevelDatabase& db, std::span<const LevelAssignment> candidates,
                                      const Batch& batch, int jobs = 1) const override;

private:
    std::shared_ptr<OracleSession> session_;
    mutable std::mutex mutex_;
};

}  // namespace evopress
