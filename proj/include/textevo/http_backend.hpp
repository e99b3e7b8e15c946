#pragma once

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <string>

#include <httplib.h>

#include <textevo/proposer.hpp>
#include <textevo/side_info.hpp>

namespace textevo {

struct HttpChatConfig {
    std::string endpoint;       // full URL, e.g. http://127.0.0.1:8080/v1/chat/completions
    std::string model;
    std::string api_key_env = "TEXTEVO_API_KEY";
    int timeout_seconds = 120;
    bool multimodal = false;
    bool verbose = false;
};

/// Single-turn chat-completion client: one user message per request, first
/// choice's text back. Non-success status, timeout or a malformed response
/// raise TransportFailure, which propose() retries.
class HttpChatBackend : public ProposerBackend {
public:
    explicit HttpChatBackend(HttpChatConfig config) : config_(std::move(config)) {
        const auto scheme_end = config_.endpoint.find("://");
        if (scheme_end == std::string::npos)
            throw ConfigError("proposer endpoint must be a full URL: " + config_.endpoint);
        const auto path_start = config_.endpoint.find('/', scheme_end + 3);
        if (path_start == std::string::npos) {
            base_ = config_.endpoint;
            path_ = "/v1/chat/completions";
        } else {
            base_ = config_.endpoint.substr(0, path_start);
            path_ = config_.endpoint.substr(path_start);
        }
    }

    bool supports_attachments() const override { return config_.multimodal; }

    std::string complete(const ReflectionContext& ctx, const std::string& prompt) override {
        json body;
        body["model"] = config_.model;
        json message;
        message["role"] = "user";
        const auto attachments = config_.multimodal ? prompt_attachments(ctx) : std::vector<ImageRef>{};
        if (attachments.empty()) {
            message["content"] = prompt;
        } else {
            json parts = json::array();
            parts.push_back({{"type", "text"}, {"text", prompt}});
            for (const auto& img : attachments) {
                if (img.data.empty()) continue;  // path-only refs stay placeholders
                parts.push_back({{"type", "image_url"},
                                 {"image_url",
                                  {{"url", "data:" + img.media_type + ";base64," +
                                               detail::base64_encode(img.data)}}}});
            }
            message["content"] = parts;
        }
        body["messages"] = json::array({message});
        const std::string payload = body.dump();

        httplib::Client client(base_);
        client.set_connection_timeout(config_.timeout_seconds, 0);
        client.set_read_timeout(config_.timeout_seconds, 0);
        client.set_write_timeout(config_.timeout_seconds, 0);
        httplib::Headers headers;
        if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);

        const auto res = client.Post(path_, headers, payload, "application/json");
        if (!res) throw TransportFailure("request failed: " + httplib::to_string(res.error()));
        if (config_.verbose)
            std::clog << "proposer http: status=" << res->status << " request=" << payload.size()
                      << "B response=" << res->body.size() << "B\n";
        if (res->status < 200 || res->status >= 300)
            throw TransportFailure("http status " + std::to_string(res->status));

        const json reply = json::parse(res->body, nullptr, false);
        if (reply.is_discarded()) throw TransportFailure("response is not JSON");
        try {
            const json& content = reply.at("choices").at(0).at("message").at("content");
            if (content.is_string()) return content.get<std::string>();
            if (content.is_array()) {
                std::string out;
                for (const auto& part : content)
                    if (part.contains("text")) out += part.at("text").get<std::string>();
                return out;
            }
        } catch (const json::exception&) {
        }
        throw TransportFailure("response missing choices[0].message.content");
    }

private:
    HttpChatConfig config_;
    std::string base_;
    std::string path_;
};

} // namespace textevo
