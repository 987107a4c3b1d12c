// Copyright (c) 2026, the lrkd authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal JSON-over-HTTP client shared by the external teacher and the
// external sentence-embedding service.

#pragma once

#include <cstdlib>
#include <string>

#include <httplib.h>
// resolv.h defines this and it collides with Eigen internals
#ifdef _res
#undef _res
#endif
#include <json.hpp>

#include "lrkd/common.hpp"

namespace lrkd {

struct Endpoint {
    /// e.g. http://127.0.0.1:8080/v1/generate
    std::string url;
    std::string api_key;
    int timeout_s = 60;
    int retries = 2;
};

/// Reads url and key from the environment; empty url means "not configured".
inline Endpoint endpoint_from_env(const char* url_var, const char* key_var = "LRKD_API_KEY") {
    Endpoint e;
    if (const char* u = std::getenv(url_var)) e.url = u;
    if (const char* k = std::getenv(key_var)) e.api_key = k;
    return e;
}

namespace detail {

struct SplitUrl {
    std::string base;  // scheme://host[:port]
    std::string path;
};

inline SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("endpoint url needs a scheme: '" + url + "'");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace detail

/// POSTs body and parses the JSON reply. Connection failures, non-2xx replies
/// and unparseable bodies raise TransportError after `retries` extra attempts.
inline nlohmann::json post_json(const Endpoint& ep, const nlohmann::json& body) {
    if (ep.url.empty()) {
        throw ConfigError("no endpoint url configured");
    }
    const auto parts = detail::split_url(ep.url);
    httplib::Client cli(parts.base);
    cli.set_connection_timeout(ep.timeout_s, 0);
    cli.set_read_timeout(ep.timeout_s, 0);
    httplib::Headers headers;
    if (!ep.api_key.empty()) headers.emplace("Authorization", "Bearer " + ep.api_key);
    std::string last_error;
    for (int attempt = 0; attempt <= ep.retries; ++attempt) {
        auto res = cli.Post(parts.path, headers, body.dump(), "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            last_error = "HTTP status " + std::to_string(res->status);
            continue;
        }
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            last_error = std::string("unparseable reply: ") + e.what();
        }
    }
    throw TransportError(ep.url + ": " + last_error);
}

}  // namespace lrkd
