#pragma once

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <json.hpp>

#include <cstdlib>
#include <string>

#include "react/generator.hpp"
#include "react/rewrite.hpp"
#include "react/types.hpp"

namespace react {

// Text-completion endpoint contract: POST a JSON body
//   {"prompt", "max_new_tokens", "temperature", "nucleus_p"}
// and read {"completion"} back. Auth token comes from the environment, never
// from config files.
class HttpBackend final : public GeneratorBackend {
public:
    struct Options {
        std::string url; // e.g. http://host:port/v1/complete
        std::string auth_token;
        int timeout_ms = 30000;

        static Options from_env(std::string url, int timeout_ms = 30000) {
            Options o;
            o.url = std::move(url);
            o.timeout_ms = timeout_ms;
            if (const char* tok = std::getenv("REACT_API_TOKEN"); tok && *tok) o.auth_token = tok;
            return o;
        }
    };

    explicit HttpBackend(Options options) : options_(std::move(options)) {
        const auto scheme_end = options_.url.find("://");
        if (scheme_end == std::string::npos)
            throw Error("HttpBackend: endpoint URL must include a scheme: " + options_.url);
        const auto path_start = options_.url.find('/', scheme_end + 3);
        if (path_start == std::string::npos) {
            base_ = options_.url;
            path_ = "/";
        } else {
            base_ = options_.url.substr(0, path_start);
            path_ = options_.url.substr(path_start);
        }
    }

    std::string name() const override { return "http:" + base_; }

    static nlohmann::json build_request(const std::string& prompt, const GenerationConfig& cfg) {
        return nlohmann::json{{"prompt", prompt},
                              {"max_new_tokens", cfg.max_new_tokens},
                              {"temperature", cfg.temperature},
                              {"nucleus_p", cfg.nucleus_p}};
    }

    std::string complete(const std::string& prompt, const GenerationConfig& cfg,
                         std::uint64_t seed) override {
        (void)seed; // sampling randomness is server-side
        httplib::Client client(base_);
        client.set_connection_timeout(options_.timeout_ms / 1000,
                                      (options_.timeout_ms % 1000) * 1000);
        client.set_read_timeout(options_.timeout_ms / 1000, (options_.timeout_ms % 1000) * 1000);
        httplib::Headers headers;
        if (!options_.auth_token.empty())
            headers.emplace("Authorization", "Bearer " + options_.auth_token);

        const auto res = client.Post(path_, headers, build_request(prompt, cfg).dump(),
                                     "application/json");
        if (!res)
            throw TransportError("generator endpoint unreachable: " + base_ + " (" +
                                 httplib::to_string(res.error()) + ")");
        if (res->status != 200)
            throw TransportError("generator endpoint returned HTTP " + std::to_string(res->status));
        nlohmann::json body;
        try {
            body = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("generator endpoint returned malformed JSON: ") + e.what());
        }
        if (!body.contains("completion") || !body["completion"].is_string())
            throw TransportError("generator endpoint response missing string field \"completion\"");
        return body["completion"].get<std::string>();
    }

private:
    Options options_;
    std::string base_;
    std::string path_;
};

} // namespace react
