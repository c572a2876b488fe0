#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace routine {

struct ChatTurn {
    std::string role; // user | assistant | tool
    std::string content;

    friend bool operator==(const ChatTurn&, const ChatTurn&) = default;
};

/// Stateless chat backend: all state lives in the request.
class ModelClient {
public:
    virtual ~ModelClient() = default;
    virtual std::string complete(const std::string& system_prompt, const std::vector<ChatTurn>& turns) = 0;
};

/// Deterministic replay client: returns the scripted outputs in order and a
/// fixed refusal once exhausted. Thread-safe.
class ScriptedClient : public ModelClient {
public:
    static constexpr const char* exhausted_reply = "I have nothing further to add.";

    explicit ScriptedClient(std::vector<std::string> script);

    std::string complete(const std::string& system_prompt, const std::vector<ChatTurn>& turns) override;
    std::size_t calls_made() const;

private:
    std::vector<std::string> script_;
    std::size_t next_ = 0;
    mutable std::mutex mutex_;
};

struct HttpClientConfig {
    std::string endpoint;        // e.g. http://127.0.0.1:8089/v1/chat/completions
    std::string model;
    std::string credentials_env; // env var holding the bearer token ("" = none)
    int timeout_ms = 30000;
};

/// Chat-completions-style backend. Request {model, messages:[{role,content}]},
/// response choices[0].message.content. Throws Error(transport_failure|timeout).
std::unique_ptr<ModelClient> make_http_chat_client(const HttpClientConfig& config);

} // namespace routine
