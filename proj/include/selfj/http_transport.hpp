#pragma once

#include <memory>
#include <string>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include "selfj/gateway.hpp"
#include "selfj/mock_backend.hpp"

namespace selfj {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

inline ParsedUrl parse_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  require(scheme_end != std::string::npos, "base_url '" + url + "' has no scheme");
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl p;
  p.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) p.prefix = url.substr(path_start);
  while (!p.prefix.empty() && p.prefix.back() == '/') p.prefix.pop_back();
  return p;
}

class HttpTransport : public Transport {
 public:
  HttpResponse post(const EndpointConfig& endpoint, const std::string& path, const std::string& body) override {
    const auto url = parse_base_url(endpoint.base_url);
    httplib::Client client(url.origin);
    const auto secs = endpoint.timeout.count() / 1000;
    const auto usecs = (endpoint.timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);
    auto res = client.Post(url.prefix + path, headers, body, "application/json");
    if (!res) throw GatewayError("transport error: " + httplib::to_string(res.error()), 0);
    return {res->status, res->body};
  }
};

// Routes mock:// endpoints to the in-process backend and everything else
// over HTTP(S).
class DefaultTransport : public Transport {
 public:
  HttpResponse post(const EndpointConfig& endpoint, const std::string& path, const std::string& body) override {
    if (endpoint.base_url.rfind("mock://", 0) == 0) return mock_.post(endpoint, path, body);
    return http_.post(endpoint, path, body);
  }

 private:
  mock::MockTransport mock_;
  HttpTransport http_;
};

}  // namespace selfj
