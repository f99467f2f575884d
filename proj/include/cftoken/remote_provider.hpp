#pragma once

// Adapter for an external model that serves logits over HTTP:
//   POST /logits  {"context": [token indices]}  ->  {"logits": [reals]}
// Responses are cached per context so replay never re-queries a prefix.

#include <cftoken/providers.hpp>

#include "httplib.h"

#include <atomic>
#include <chrono>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <unordered_map>

namespace cftoken {

/// Network failure after all retries.
class TransportError : public std::runtime_error {
 public:
  TransportError(const std::string& what, int attempts)
      : std::runtime_error(what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

/// Peer answered, but not with what the wire contract promises.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RemoteOptions {
  std::chrono::milliseconds timeout{5000};
  int retries = 2;
  std::chrono::milliseconds retry_backoff{50};
  std::string path = "/logits";
};

struct TokenSequenceHash {
  std::size_t operator()(const TokenSequence& s) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (TokenId t : s) {
      h ^= t;
      h *= 0x100000001b3ull;
    }
    return static_cast<std::size_t>(h);
  }
};

class RemoteProvider final : public DistributionProvider {
 public:
  RemoteProvider(std::string endpoint, Vocabulary vocab, std::size_t context_limit,
                 RemoteOptions options = {})
      : endpoint_(std::move(endpoint)), vocab_(std::move(vocab)), limit_(context_limit),
        options_(std::move(options)) {}

  const Vocabulary& vocabulary() const override { return vocab_; }
  std::size_t context_limit() const override { return limit_; }
  std::string model_id() const override { return "remote:" + endpoint_; }

  std::vector<double> next_logits(std::span<const TokenId> context) const override {
    vocab_.validate(context);
    auto ctx = trailing(context, limit_);
    TokenSequence key(ctx.begin(), ctx.end());
    {
      std::lock_guard lock(mu_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    auto logits = fetch(key);
    std::lock_guard lock(mu_);
    return cache_.try_emplace(std::move(key), std::move(logits)).first->second;
  }

  std::size_t remote_calls() const { return calls_.load(); }

 private:
  std::vector<double> fetch(const TokenSequence& ctx) const {
    const std::string body = nlohmann::json{{"context", ctx}}.dump();
    std::string last_error;
    const int attempts = options_.retries + 1;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
      httplib::Client client(endpoint_);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
      const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      ++calls_;
      auto res = client.Post(options_.path, body, "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
      } else if (res->status != 200) {
        last_error = "HTTP status " + std::to_string(res->status);
        if (res->status < 500) break;
      } else {
        return parse(res->body);
      }
      if (attempt < attempts) std::this_thread::sleep_for(options_.retry_backoff * attempt);
    }
    throw TransportError("remote logits from " + endpoint_ + " failed: " + last_error, attempts);
  }

  std::vector<double> parse(const std::string& body) const {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw ProtocolError(std::string("remote logits: malformed JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("logits") || !j["logits"].is_array())
      throw ProtocolError("remote logits: response lacks a 'logits' array");
    std::vector<double> logits;
    for (const auto& v : j["logits"]) {
      if (!v.is_number()) throw ProtocolError("remote logits: non-numeric entry");
      logits.push_back(v.get<double>());
    }
    if (logits.size() != vocab_.size())
      throw ProtocolError("remote logits: got " + std::to_string(logits.size()) + " values for a vocabulary of " +
                          std::to_string(vocab_.size()));
    return logits;
  }

  std::string endpoint_;
  Vocabulary vocab_;
  std::size_t limit_;
  RemoteOptions options_;
  mutable std::mutex mu_;
  mutable std::unordered_map<TokenSequence, std::vector<double>, TokenSequenceHash> cache_;
  mutable std::atomic<std::size_t> calls_{0};
};

}  // namespace cftoken
