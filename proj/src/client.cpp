#include "routine/client.hpp"

#include "routine/error.hpp"

#include <json.hpp>

#include <httplib.h>

#include <cstdlib>

namespace routine {

using json = nlohmann::ordered_json;

ScriptedClient::ScriptedClient(std::vector<std::string> script) : script_(std::move(script)) {}

std::string ScriptedClient::complete(const std::string&, const std::vector<ChatTurn>&) {
    std::lock_guard<std::mutex> lock(mutex_);
    if (next_ >= script_.size()) {
        return exhausted_reply;
    }
    return script_[next_++];
}

std::size_t ScriptedClient::calls_made() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return next_;
}

namespace {

struct ParsedEndpoint {
    std::string base; // scheme://host:port
    std::string path;
};

ParsedEndpoint split_endpoint(const std::string& endpoint) {
    auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(Errc::transport_failure, "endpoint \"" + endpoint + "\" has no scheme");
    }
    auto path_start = endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {endpoint, "/"};
    }
    return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

class HttpChatClient : public ModelClient {
public:
    explicit HttpChatClient(HttpClientConfig config) : config_(std::move(config)) {}

    std::string complete(const std::string& system_prompt, const std::vector<ChatTurn>& turns) override {
        ParsedEndpoint ep = split_endpoint(config_.endpoint);

        json messages = json::array();
        messages.push_back({{"role", "system"}, {"content", system_prompt}});
        for (const ChatTurn& turn : turns) {
            messages.push_back({{"role", turn.role}, {"content", turn.content}});
        }
        json request;
        request["model"] = config_.model;
        request["messages"] = messages;

        httplib::Client client(ep.base);
        client.set_connection_timeout(0, config_.timeout_ms * 1000LL);
        client.set_read_timeout(0, config_.timeout_ms * 1000LL);
        client.set_write_timeout(0, config_.timeout_ms * 1000LL);

        httplib::Headers headers;
        if (!config_.credentials_env.empty()) {
            const char* token = std::getenv(config_.credentials_env.c_str());
            if (token && *token) {
                headers.emplace("Authorization", std::string("Bearer ") + token);
            }
        }

        auto res = client.Post(ep.path, headers, request.dump(), "application/json");
        if (!res) {
            auto err = res.error();
            if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
                throw Error(Errc::timeout, "request to " + config_.endpoint + " timed out (" +
                                               httplib::to_string(err) + ")");
            }
            throw Error(Errc::transport_failure,
                        "request to " + config_.endpoint + " failed (" + httplib::to_string(err) + ")");
        }
        if (res->status < 200 || res->status >= 300) {
            throw Error(Errc::transport_failure,
                        config_.endpoint + " returned status " + std::to_string(res->status));
        }

        json body;
        try {
            body = json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw Error(Errc::transport_failure, std::string("response is not JSON: ") + e.what());
        }
        if (body.contains("choices") && body["choices"].is_array() && !body["choices"].empty()) {
            const json& first = body["choices"][0];
            if (first.contains("message") && first["message"].contains("content") &&
                first["message"]["content"].is_string()) {
                return first["message"]["content"].get<std::string>();
            }
        }
        throw Error(Errc::transport_failure, "response carries no choices[0].message.content");
    }

private:
    HttpClientConfig config_;
};

} // namespace

std::unique_ptr<ModelClient> make_http_chat_client(const HttpClientConfig& config) {
    return std::make_unique<HttpChatClient>(config);
}

} // namespace routine
