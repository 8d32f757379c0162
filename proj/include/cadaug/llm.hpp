// Chat-completion gateway: a live HTTP backend, a digest-keyed replay
// backend and a recorder that fills cassettes, behind one retrying front.

#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <string_view>

#include "json.hpp"

namespace cadaug::llm {

enum class ReasoningEffort { Low, Medium, High };

std::string_view effort_name(ReasoningEffort effort);
std::optional<ReasoningEffort> parse_effort(std::string_view name);

struct LlmRequest {
  std::string model_id;
  std::string system_text;
  std::string user_text;
  ReasoningEffort reasoning_effort = ReasoningEffort::High;
  int max_output_tokens = 32768;
  std::string request_tag;
};

struct Usage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
  long total_tokens = 0;
};

nlohmann::json usage_to_json(const Usage& u);
Usage usage_from_json(const nlohmann::json& j);

// What a backend returns before extraction.
struct Completion {
  std::string raw_text;
  Usage usage;
};

struct LlmResponse {
  std::string program_text;
  std::string raw_text;
  Usage usage;
  std::chrono::milliseconds latency{0};
  bool empty_program = false;
};

class LlmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
// Transient; retried by the gateway.
class TransportError : public LlmError {
 public:
  using LlmError::LlmError;
};
class AuthError : public LlmError {
 public:
  using LlmError::LlmError;
};
class EmptyCompletion : public LlmError {
 public:
  EmptyCompletion() : LlmError("completion contained no text") {}
};
class CassetteMiss : public LlmError {
 public:
  explicit CassetteMiss(const std::string& digest) : LlmError("no cassette entry for digest " + digest) {}
};
class IoError : public LlmError {
 public:
  using LlmError::LlmError;
};

// Hex SHA-256 over model_id, system_text, user_text and reasoning_effort.
std::string request_digest(const LlmRequest& request);

// Body of the largest fenced block, or the whole text when there is no fence.
std::string extract_program(std::string_view raw_text);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual Completion complete(const LlmRequest& request) = 0;
};

struct HttpConfig {
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::string auth_header = "Authorization";
  std::string auth_scheme = "Bearer ";
  // Empty means no credential is sent.
  std::string api_key_env = "OPENAI_API_KEY";
  int connect_timeout_s = 30;
  int read_timeout_s = 600;
};

nlohmann::json chat_request_json(const LlmRequest& request);
Completion parse_chat_response(std::string_view body);

class HttpBackend : public Backend {
 public:
  // Throws AuthError when the credential variable is named but unset.
  explicit HttpBackend(HttpConfig config);
  Completion complete(const LlmRequest& request) override;

 private:
  HttpConfig config_;
  std::string api_key_;
};

struct CassetteEntry {
  std::string digest;
  std::string request_tag;
  std::string raw_text;
  Usage usage;
};

// Append-only JSON-lines file of {digest, request_tag, raw_text, usage}.
// The first entry for a digest wins.
class Cassette {
 public:
  Cassette() = default;
  static Cassette load(const std::filesystem::path& path);

  const CassetteEntry* find_digest(std::string_view digest) const;
  const CassetteEntry* find_tag(std::string_view tag) const;
  std::size_t size() const { return by_digest_.size(); }

  // Adds in memory; returns false when the digest is already present.
  bool insert(CassetteEntry entry);

 private:
  std::map<std::string, CassetteEntry, std::less<>> by_digest_;
  std::map<std::string, std::string, std::less<>> tag_to_digest_;
};

nlohmann::json entry_to_json(const CassetteEntry& e);
CassetteEntry entry_from_json(const nlohmann::json& j);

// Looks up by digest, then by request_tag.
class ReplayBackend : public Backend {
 public:
  explicit ReplayBackend(Cassette cassette) : cassette_(std::move(cassette)) {}
  explicit ReplayBackend(const std::filesystem::path& path) : cassette_(Cassette::load(path)) {}
  Completion complete(const LlmRequest& request) override;

 private:
  Cassette cassette_;
};

// Serves digests already on the cassette, otherwise asks `inner` and appends
// the answer to the file.
class RecordingBackend : public Backend {
 public:
  RecordingBackend(std::shared_ptr<Backend> inner, std::filesystem::path path);
  Completion complete(const LlmRequest& request) override;

 private:
  std::shared_ptr<Backend> inner_;
  std::filesystem::path path_;
  std::mutex mutex_;
  Cassette cassette_;
};

// Appends one entry to the cassette file.
void record(const std::filesystem::path& path, const LlmRequest& request, const Completion& completion);

struct GatewayConfig {
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{2000};
  int max_in_flight = 4;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

class Gateway {
 public:
  Gateway(std::shared_ptr<Backend> backend, GatewayConfig config = {}, Sleeper sleeper = {});

  // Safe to call from many threads.
  LlmResponse generate(const LlmRequest& request);

  std::size_t calls() const { return calls_.load(); }
  std::size_t attempts() const { return attempts_.load(); }

 private:
  std::shared_ptr<Backend> backend_;
  GatewayConfig config_;
  Sleeper sleeper_;
  std::counting_semaphore<> in_flight_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> attempts_{0};
};

}  // namespace cadaug::llm
