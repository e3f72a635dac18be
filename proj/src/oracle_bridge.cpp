#include "evopress/oracle_bridge.hpp"

#include <cctype>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "evopress/errors.hpp"

namespace evopress {

namespace {

using ordered_json = nlohmann::ordered_json;
using json = nlohmann::json;

template <typename Error>
json parse_line(std::string_view line) {
    try {
        json j = json::parse(line);
        if (!j.is_object()) {
            throw Error("protocol line is not a JSON object: " + std::string(line));
        }
        return j;
    } catch (const json::parse_error& e) {
        throw Error("unparseable protocol line: " + std::string(e.what()));
    }
}

template <typename Error>
void expect_keys(const json& j, std::initializer_list<std::string_view> keys, std::string_view type) {
    if (j.size() != keys.size()) {
        throw Error("\"" + std::string(type) + "\" message has unexpected fields");
    }
    for (auto k : keys) {
        if (!j.contains(k)) {
            throw Error("\"" + std::string(type) + "\" message lacks \"" + std::string(k) + "\"");
        }
    }
}

template <typename Error>
std::uint64_t get_id(const json& j) {
    const auto& v = j.at("id");
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw Error("\"id\" must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

template <typename Error>
std::int64_t get_int(const json& j, const char* key) {
    const auto& v = j.at(key);
    if (!v.is_number_integer()) {
        throw Error(std::string("\"") + key + "\" must be an integer");
    }
    return v.get<std::int64_t>();
}

template <typename Error>
std::vector<int> get_int_list(const json& j, const char* key) {
    const auto& v = j.at(key);
    if (!v.is_array()) {
        throw Error(std::string("\"") + key + "\" must be an array");
    }
    std::vector<int> out;
    out.reserve(v.size());
    for (const auto& x : v) {
        if (!x.is_number_integer()) {
            throw Error(std::string("\"") + key + "\" must hold integers");
        }
        out.push_back(x.get<int>());
    }
    return out;
}

}  // namespace

std::string encode_hello(int version) {
    ordered_json j;
    j["type"] = "hello";
    j["version"] = version;
    return j.dump();
}

std::string encode_eval(const OracleRequest& request) {
    ordered_json j;
    j["type"] = "eval";
    j["id"] = request.request_id;
    j["levels"] = request.levels;
    j["seed"] = request.seed;
    j["tokens"] = request.tokens;
    return j.dump();
}

std::string encode_bye() {
    return R"({"type":"bye"})";
}

std::string encode_info(const OracleInfo& info) {
    ordered_json j;
    j["type"] = "info";
    j["version"] = info.protocol_version;
    j["n_units"] = info.n_units;
    j["levels_per_unit"] = info.levels_per_unit;
    return j.dump();
}

std::string encode_result(const OracleResponse& response) {
    ordered_json j;
    j["type"] = "result";
    j["id"] = response.request_id;
    j["fitness"] = response.fitness;
    j["tokens_used"] = response.tokens_used;
    return j.dump();
}

std::string encode_error(std::uint64_t request_id, std::string_view message) {
    ordered_json j;
    j["type"] = "error";
    j["id"] = request_id;
    j["message"] = message;
    return j.dump();
}

OracleMessage decode_oracle_message(std::string_view line) {
    using E = MalformedResponse;
    const json j = parse_line<E>(line);
    if (!j.contains("type") || !j.at("type").is_string()) {
        throw E("message without a \"type\"");
    }
    const auto type = j.at("type").get<std::string>();
    if (type == "info") {
        expect_keys<E>(j, {"type", "version", "n_units", "levels_per_unit"}, type);
        OracleInfo info;
        info.protocol_version = static_cast<int>(get_int<E>(j, "version"));
        const auto n = get_int<E>(j, "n_units");
        if (n < 0) {
            throw E("\"n_units\" must be non-negative");
        }
        info.n_units = static_cast<std::size_t>(n);
        info.levels_per_unit = get_int_list<E>(j, "levels_per_unit");
        return info;
    }
    if (type == "result") {
        expect_keys<E>(j, {"type", "id", "fitness", "tokens_used"}, type);
        OracleResponse r;
        r.request_id = get_id<E>(j);
        if (!j.at("fitness").is_number()) {
            throw E("\"fitness\" must be a number");
        }
        r.fitness = j.at("fitness").get<double>();
        if (!std::isfinite(r.fitness)) {
            throw E("\"fitness\" must be finite");
        }
        r.tokens_used = get_int<E>(j, "tokens_used");
        return r;
    }
    if (type == "error") {
        expect_keys<E>(j, {"type", "id", "message"}, type);
        if (!j.at("message").is_string()) {
            throw E("\"message\" must be a string");
        }
        return OracleFailure{get_id<E>(j), j.at("message").get<std::string>()};
    }
    throw E("unknown message type \"" + type + "\"");
}

EngineMessage decode_engine_message(std::string_view line) {
    using E = MalformedRequest;
    const json j = parse_line<E>(line);
    if (!j.contains("type") || !j.at("type").is_string()) {
        throw E("message without a \"type\"");
    }
    const auto type = j.at("type").get<std::string>();
    if (type == "hello") {
        expect_keys<E>(j, {"type", "version"}, type);
        return HelloMessage{static_cast<int>(get_int<E>(j, "version"))};
    }
    if (type == "eval") {
        expect_keys<E>(j, {"type", "id", "levels", "seed", "tokens"}, type);
        OracleRequest r;
        r.request_id = get_id<E>(j);
        r.levels = get_int_list<E>(j, "levels");
        const auto& seed = j.at("seed");
        if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
            throw E("\"seed\" must be a non-negative integer");
        }
        r.seed = seed.get<std::uint64_t>();
        r.tokens = get_int<E>(j, "tokens");
        return r;
    }
    if (type == "bye") {
        expect_keys<E>(j, {"type"}, type);
        return ByeMessage{};
    }
    throw E("unknown message type \"" + type + "\"");
}

ChildProcess::ChildProcess(const std::vector<std::string>& argv) {
    if (argv.empty()) {
        throw ConfigError("external oracle command is empty");
    }
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
        throw OracleError(std::string("socketpair failed: ") + std::strerror(errno));
    }
    std::vector<char*> args;
    for (const auto& a : argv) {
        args.push_back(const_cast<char*>(a.c_str()));
    }
    args.push_back(nullptr);

    pid_ = ::fork();
    if (pid_ < 0) {
        ::close(fds[0]);
        ::close(fds[1]);
        throw OracleError(std::string("fork failed: ") + std::strerror(errno));
    }
    if (pid_ == 0) {
        ::dup2(fds[1], STDIN_FILENO);
        ::dup2(fds[1], STDOUT_FILENO);
        ::execvp(args[0], args.data());
        ::_exit(127);
    }
    ::close(fds[1]);
    fd_ = fds[0];
    spdlog::debug("spawned oracle pid {}: {}", pid_, argv.front());
}

ChildProcess::~ChildProcess() {
    if (fd_ >= 0) {
        close_write();
    }
    if (pid_ > 0) {
        int status = 0;
        bool reaped = false;
        for (int i = 0; i < 200 && !reaped; ++i) {
            reaped = ::waitpid(pid_, &status, WNOHANG) == pid_;
            if (!reaped) {
                std::this_thread::sleep_for(std::chrono::milliseconds(10));
            }
        }
        if (!reaped) {
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, &status, 0);
        }
    }
    if (fd_ >= 0) {
        ::close(fd_);
    }
}

void ChildProcess::write_line(std::string_view line) {
    if (write_closed_) {
        throw OracleError("write side of the oracle channel is closed");
    }
    std::string data(line);
    data += '\n';
    std::size_t off = 0;
    while (off < data.size()) {
        const ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw OracleCrashed(std::string("oracle stopped reading: ") + std::strerror(errno));
        }
        off += static_cast<std::size_t>(n);
    }
}

std::optional<std::string> ChildProcess::read_line(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        if (auto pos = buffer_.find('\n'); pos != std::string::npos) {
            std::string line = buffer_.substr(0, pos);
            buffer_.erase(0, pos + 1);
            return line;
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            throw OracleTimeout("no oracle response within " + std::to_string(timeout.count()) + " ms");
        }
        pollfd pfd{fd_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<std::int64_t>(left.count(), 1'000'000)));
        if (ready < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw OracleError(std::string("poll failed: ") + std::strerror(errno));
        }
        if (ready == 0) {
            continue;
        }
        char chunk[4096];
        const ssize_t n = ::read(fd_, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            return std::nullopt;
        }
        if (n == 0) {
            return std::nullopt;
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

void ChildProcess::close_write() {
    if (!write_closed_ && fd_ >= 0) {
        ::shutdown(fd_, SHUT_WR);
        write_closed_ = true;
    }
}

std::vector<std::string> split_command_line(std::string_view command) {
    std::vector<std::string> out;
    std::string current;
    bool in_token = false;
    char quote = 0;
    for (char c : command) {
        if (quote) {
            if (c == quote) {
                quote = 0;
            } else {
                current += c;
            }
        } else if (c == '"' || c == '\'') {
            quote = c;
            in_token = true;
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            if (in_token) {
                out.push_back(std::move(current));
                current.clear();
                in_token = false;
            }
        } else {
            current += c;
            in_token = true;
        }
    }
    if (quote) {
        throw ConfigError("unterminated quote in command line");
    }
    if (in_token) {
        out.push_back(std::move(current));
    }
    return out;
}

void validate_space(const OracleInfo& info, const LevelDatabase& db) {
    if (info.n_units != db.size()) {
        throw SpaceMismatch("oracle declares " + std::to_string(info.n_units) + " units, database has " +
                            std::to_string(db.size()));
    }
    if (info.levels_per_unit.size() != db.size()) {
        throw SpaceMismatch("oracle level list does not cover every unit");
    }
    for (std::size_t i = 0; i < db.size(); ++i) {
        if (info.levels_per_unit[i] != db.num_levels(i)) {
            throw SpaceMismatch("unit \"" + db.unit(i).id + "\": oracle declares " +
                                std::to_string(info.levels_per_unit[i]) + " levels, database has " +
                                std::to_string(db.num_levels(i)));
        }
    }
}

OracleSession::OracleSession(std::unique_ptr<LineChannel> channel, OracleTimeouts timeouts)
    : channel_(std::move(channel)), timeouts_(timeouts) {}

OracleSession::~OracleSession() {
    try {
        close();
    } catch (const std::exception& e) {
        spdlog::debug("closing oracle session: {}", e.what());
    }
}

std::unique_ptr<OracleSession> OracleSession::spawn(const std::vector<std::string>& argv, OracleTimeouts timeouts) {
    return std::make_unique<OracleSession>(std::make_unique<ChildProcess>(argv), timeouts);
}

std::string OracleSession::read_or_throw(std::chrono::milliseconds timeout) {
    auto line = channel_->read_line(timeout);
    if (!line) {
        throw OracleCrashed("oracle closed its output");
    }
    return std::move(*line);
}

OracleInfo OracleSession::handshake() {
    channel_->write_line(encode_hello());
    const auto message = decode_oracle_message(read_or_throw(timeouts_.handshake));
    const auto* info = std::get_if<OracleInfo>(&message);
    if (!info) {
        throw ProtocolMismatch("oracle did not answer hello with info");
    }
    if (info->protocol_version != kProtocolVersion) {
        throw ProtocolMismatch("oracle speaks protocol v" + std::to_string(info->protocol_version) + ", expected v" +
                               std::to_string(kProtocolVersion));
    }
    if (info->levels_per_unit.size() != info->n_units) {
        throw MalformedResponse("info: levels_per_unit does not have n_units entries");
    }
    info_ = *info;
    return *info;
}

OracleInfo OracleSession::handshake(const LevelDatabase& db) {
    auto info = handshake();
    validate_space(info, db);
    return info;
}

void OracleSession::submit(const OracleRequest& request) {
    if (!info_) {
        throw OracleError("oracle session used before handshake");
    }
    if (closed_) {
        throw OracleError("oracle session is closed");
    }
    if (request.request_id <= last_sent_id_) {
        throw OracleError("request ids must be strictly increasing");
    }
    channel_->write_line(encode_eval(request));
    last_sent_id_ = request.request_id;
    outstanding_[request.request_id] = true;
}

std::uint64_t OracleSession::submit(std::vector<int> levels, std::uint64_t seed, std::int64_t tokens) {
    OracleRequest request{next_request_id(), std::move(levels), seed, tokens};
    submit(request);
    return request.request_id;
}

OracleResponse OracleSession::wait(std::uint64_t request_id) {
    if (!outstanding_.contains(request_id)) {
        throw OracleError("request " + std::to_string(request_id) + " is not in flight");
    }
    const auto deadline = std::chrono::steady_clock::now() + timeouts_.evaluate;
    while (!arrived_.contains(request_id)) {
        const auto left =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            throw OracleTimeout("no result for request " + std::to_string(request_id));
        }
        auto message = decode_oracle_message(read_or_throw(left));
        std::uint64_t id = 0;
        if (const auto* r = std::get_if<OracleResponse>(&message)) {
            id = r->request_id;
        } else if (const auto* f = std::get_if<OracleFailure>(&message)) {
            id = f->request_id;
        } else {
            throw MalformedResponse("unexpected info message during evaluation");
        }
        if (!outstanding_.contains(id) || arrived_.contains(id)) {
            throw MalformedResponse("response for unknown request id " + std::to_string(id));
        }
        arrived_.emplace(id, std::move(message));
    }
    auto node = arrived_.extract(request_id);
    outstanding_.erase(request_id);
    if (const auto* f = std::get_if<OracleFailure>(&node.mapped())) {
        throw OracleError("oracle failed request " + std::to_string(request_id) + ": " + f->message);
    }
    return std::get<OracleResponse>(node.mapped());
}

OracleResponse OracleSession::evaluate_remote(const OracleRequest& request) {
    submit(request);
    return wait(request.request_id);
}

std::vector<OracleResponse> OracleSession::evaluate_pipelined(std::span<const OracleRequest> requests) {
    for (const auto& r : requests) {
        submit(r);
    }
    std::vector<OracleResponse> out;
    out.reserve(requests.size());
    for (const auto& r : requests) {
        out.push_back(wait(r.request_id));
    }
    return out;
}

void OracleSession::close() {
    if (closed_) {
        return;
    }
    closed_ = true;
    try {
        channel_->write_line(encode_bye());
    } catch (const OracleError&) {
        // The peer is already gone.
    }
    channel_->close_write();
}

ExternalOracle::ExternalOracle(std::shared_ptr<OracleSession> session) : session_(std::move(session)) {
    if (!session_) {
        throw ConfigError("external oracle needs a session");
    }
}

double ExternalOracle::evaluate(const LevelDatabase& db, const LevelAssignment& a, const Batch& batch) const {
    return evaluate_many(db, std::span<const LevelAssignment>(&a, 1), batch).front();
}

std::vector<double> ExternalOracle::evaluate_many(const LevelDatabase& db, std::span<const LevelAssignment> candidates,
                                                  const Batch& batch, int /*jobs*/) const {
    std::lock_guard lock(mutex_);
    std::vector<OracleRequest> requests;
    requests.reserve(candidates.size());
    std::uint64_t id = session_->next_request_id();
    for (const auto& a : candidates) {
        db.validate(a);
        requests.push_back({id++, a.levels, batch.seed, batch.token_count});
    }
    std::vector<double> out;
    out.reserve(candidates.size());
    for (const auto& r : session_->evaluate_pipelined(requests)) {
        out.push_back(r.fitness);
    }
    return out;
}

}  // namespace evopress
