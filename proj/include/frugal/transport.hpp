#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <memory>
#include <string>
#include <utility>

#include "httplib.h"
#include "json.hpp"

#include "frugal/errors.hpp"

namespace frugal {

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// A POST-JSON channel to one service. Implementations throw Timeout or
/// ServiceUnavailable for failures below the HTTP layer.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& path, const nlohmann::json& body) = 0;
  virtual HttpResponse get(const std::string& path) { return post(path, nlohmann::json::object()); }
};

using TransportPtr = std::shared_ptr<Transport>;

class HttpTransport final : public Transport {
 public:
  HttpTransport(std::string base_url, int timeout_ms, std::string bearer_token = {})
      : base_url_(std::move(base_url)), timeout_ms_(timeout_ms), bearer_(std::move(bearer_token)) {
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
  }

  HttpResponse post(const std::string& path, const nlohmann::json& body) override {
    auto cli = make_client();
    auto res = cli->Post(path, body.dump(), "application/json");
    return unwrap(res, path);
  }

  HttpResponse get(const std::string& path) override {
    auto cli = make_client();
    auto res = cli->Get(path);
    return unwrap(res, path);
  }

 private:
  // One client per request; httplib clients are not meant to be shared across threads.
  std::unique_ptr<httplib::Client> make_client() const {
    auto cli = std::make_unique<httplib::Client>(base_url_);
    const auto sec = timeout_ms_ / 1000;
    const auto usec = (timeout_ms_ % 1000) * 1000;
    cli->set_connection_timeout(sec, usec);
    cli->set_read_timeout(sec, usec);
    cli->set_write_timeout(sec, usec);
    if (!bearer_.empty()) cli->set_bearer_token_auth(bearer_);
    return cli;
  }

  HttpResponse unwrap(const httplib::Result& res, const std::string& path) const {
    if (!res) {
      const auto err = res.error();
      const auto msg = base_url_ + path + ": " + httplib::to_string(err);
      if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout || err == httplib::Error::Write) {
        throw Timeout(msg);
      }
      throw ServiceUnavailable(msg);
    }
    return {res->status, res->body};
  }

  std::string base_url_;
  int timeout_ms_;
  std::string bearer_;
};

/// Adapts a plain function to the Transport interface; in-process stubs use it.
class FunctionTransport final : public Transport {
 public:
  using Handler = std::function<HttpResponse(const std::string&, const nlohmann::json&)>;
  explicit FunctionTransport(Handler h) : handler_(std::move(h)) {}
  HttpResponse post(const std::string& path, const nlohmann::json& body) override { return handler_(path, body); }

 private:
  Handler handler_;
};

/// Counts calls and the peak number of concurrent in-flight requests.
class CountingTransport final : public Transport {
 public:
  explicit CountingTransport(TransportPtr inner) : inner_(std::move(inner)) {}

  HttpResponse post(const std::string& path, const nlohmann::json& body) override {
    Guard g(*this);
    return inner_->post(path, body);
  }
  HttpResponse get(const std::string& path) override {
    Guard g(*this);
    return inner_->get(path);
  }

  long calls() const noexcept { return calls_.load(); }
  long peak_in_flight() const noexcept { return peak_.load(); }

 private:
  struct Guard {
    explicit Guard(CountingTransport& t) : t_(t) {
      t_.calls_.fetch_add(1);
      const long now = t_.in_flight_.fetch_add(1) + 1;
      long prev = t_.peak_.load();
      while (prev < now && !t_.peak_.compare_exchange_weak(prev, now)) {
      }
    }
    ~Guard() { t_.in_flight_.fetch_sub(1); }
    CountingTransport& t_;
  };

  TransportPtr inner_;
  std::atomic<long> calls_{0};
  std::atomic<long> in_flight_{0};
  std::atomic<long> peak_{0};
};

inline std::string env_or_empty(const std::string& var) {
  if (var.empty()) return {};
  const char* v = std::getenv(var.c_str());
  return v ? std::string(v) : std::string();
}

}  // namespace frugal
