// SPDX-License-Identifier: Apache-2.0

#include "r2ai/provider.hpp"

#include "r2ai/text.hpp"

#include <httplib.h>

namespace r2ai {

namespace {

struct Url {
    std::string origin;
    std::string path;
};

Url split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ProviderError(ErrorClass::transport, "invalid endpoint URL: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, path_start), url.substr(path_start)};
}

class HttpTransport final : public Transport {
public:
    RawResponse post(const WireRequest& request, std::chrono::seconds timeout) override {
        const auto url = split_url(request.url);
        httplib::Client client(url.origin);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        httplib::Headers headers;
        std::string content_type = "application/json";
        for (const auto& [k, v] : request.headers) {
            if (text::to_lower(k) == "content-type") {
                content_type = v;
            } else {
                headers.emplace(k, v);
            }
        }
        auto res = client.Post(url.path, headers, request.body.dump(), content_type);
        if (!res) {
            throw ProviderError(ErrorClass::transport,
                                "request to " + url.origin + " failed: " + httplib::to_string(res.error()));
        }
        RawResponse raw;
        raw.status = res->status;
        raw.body = res->body;
        for (const auto& [k, v] : res->headers) {
            raw.headers[k] = v;
        }
        return raw;
    }
};

} // namespace

std::shared_ptr<Transport> make_http_transport() { return std::make_shared<HttpTransport>(); }

} // namespace r2ai
