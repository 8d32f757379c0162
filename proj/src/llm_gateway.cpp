#include "cadaug/llm.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "httplib.h"

namespace cadaug::llm {

namespace {

bool is_fence(std::string_view line) {
  const auto b = line.find_first_not_of(" \t");
  return b != std::string_view::npos && line.substr(b, 3) == "```";
}

bool blank(std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; }

std::string tail(std::string_view s, std::size_t n) {
  return std::string(s.size() <= n ? s : s.substr(s.size() - n));
}

}  // namespace

std::string_view effort_name(ReasoningEffort effort) {
  switch (effort) {
    case ReasoningEffort::Low:
      return "low";
    case ReasoningEffort::Medium:
      return "medium";
    case ReasoningEffort::High:
      return "high";
  }
  return "high";
}

std::optional<ReasoningEffort> parse_effort(std::string_view name) {
  for (auto e : {ReasoningEffort::Low, ReasoningEffort::Medium, ReasoningEffort::High}) {
    if (effort_name(e) == name) return e;
  }
  return std::nullopt;
}

nlohmann::json usage_to_json(const Usage& u) {
  return {{"prompt_tokens", u.prompt_tokens}, {"completion_tokens", u.completion_tokens}, {"total_tokens", u.total_tokens}};
}

Usage usage_from_json(const nlohmann::json& j) {
  Usage u;
  if (!j.is_object()) return u;
  u.prompt_tokens = j.value("prompt_tokens", 0L);
  u.completion_tokens = j.value("completion_tokens", 0L);
  u.total_tokens = j.value("total_tokens", u.prompt_tokens + u.completion_tokens);
  return u;
}

std::string request_digest(const LlmRequest& request) {
  const nlohmann::json key = {{"model_id", request.model_id},
                              {"system_text", request.system_text},
                              {"user_text", request.user_text},
                              {"reasoning_effort", effort_name(request.reasoning_effort)}};
  const std::string text = key.dump();
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw LlmError("SHA-256 digest failed");
  }
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

std::string extract_program(std::string_view raw) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    const auto nl = raw.find('\n', pos);
    const auto end = nl == std::string_view::npos ? raw.size() : nl;
    lines.push_back(raw.substr(pos, end - pos));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }

  std::optional<std::string> best;
  std::optional<std::string> body;
  for (auto line : lines) {
    if (is_fence(line)) {
      if (body) {
        if (!best || body->size() > best->size()) best = std::move(body);
        body.reset();
      } else {
        body.emplace();
      }
      continue;
    }
    if (body) {
      body->append(line);
      body->push_back('\n');
    }
  }
  // unterminated fence runs to the end
  if (body && (!best || body->size() > best->size())) best = std::move(body);
  if (!best) return std::string(raw);
  if (!best->empty()) best->pop_back();
  return *best;
}

nlohmann::json chat_request_json(const LlmRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  if (!request.system_text.empty()) messages.push_back({{"role", "system"}, {"content", request.system_text}});
  messages.push_back({{"role", "user"}, {"content", request.user_text}});
  return {{"model", request.model_id},
          {"messages", messages},
          {"reasoning_effort", effort_name(request.reasoning_effort)},
          {"max_completion_tokens", request.max_output_tokens}};
}

Completion parse_chat_response(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    throw LlmError("completion body is not JSON: " + tail(body, 200));
  }
  Completion c;
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_string()) c.raw_text = content.get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw LlmError("completion body has no choices[0].message: " + tail(body, 200));
  }
  if (j.contains("usage")) c.usage = usage_from_json(j["usage"]);
  return c;
}

HttpBackend::HttpBackend(HttpConfig config) : config_(std::move(config)) {
  if (!config_.api_key_env.empty()) {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') throw AuthError("environment variable " + config_.api_key_env + " is not set");
    api_key_ = key;
  }
}

Completion HttpBackend::complete(const LlmRequest& request) {
  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.connect_timeout_s, 0);
  client.set_read_timeout(config_.read_timeout_s, 0);
  client.set_write_timeout(config_.read_timeout_s, 0);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace(config_.auth_header, config_.auth_scheme + api_key_);

  const auto res = client.Post(config_.path, headers, chat_request_json(request).dump(), "application/json");
  if (!res) throw TransportError("request to " + config_.base_url + " failed: " + httplib::to_string(res.error()));
  const int status = res->status;
  if (status == 401 || status == 403) throw AuthError(fmt::format("HTTP {}: {}", status, tail(res->body, 500)));
  if (status == 429 || status >= 500) throw TransportError(fmt::format("HTTP {}: {}", status, tail(res->body, 500)));
  if (status < 200 || status >= 300) throw LlmError(fmt::format("HTTP {}: {}", status, tail(res->body, 500)));
  return parse_chat_response(res->body);
}

nlohmann::json entry_to_json(const CassetteEntry& e) {
  nlohmann::json j = {{"digest", e.digest}, {"raw_text", e.raw_text}, {"usage", usage_to_json(e.usage)}};
  if (!e.request_tag.empty()) j["request_tag"] = e.request_tag;
  return j;
}

CassetteEntry entry_from_json(const nlohmann::json& j) {
  CassetteEntry e;
  e.digest = j.value("digest", "");
  e.request_tag = j.value("request_tag", "");
  e.raw_text = j.at("raw_text").get<std::string>();
  if (j.contains("usage")) e.usage = usage_from_json(j["usage"]);
  if (e.digest.empty() && e.request_tag.empty()) throw LlmError("cassette entry has neither digest nor request_tag");
  return e;
}

Cassette Cassette::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read cassette " + path.string());
  Cassette c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    try {
      c.insert(entry_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(fmt::format("{}:{}: bad cassette line: {}", path.string(), lineno, e.what()));
    }
  }
  return c;
}

bool Cassette::insert(CassetteEntry entry) {
  // tag-only entries are keyed by a tag-derived pseudo digest
  const std::string key = entry.digest.empty() ? "tag:" + entry.request_tag : entry.digest;
  if (by_digest_.count(key) != 0) return false;
  if (!entry.request_tag.empty()) tag_to_digest_.emplace(entry.request_tag, key);
  by_digest_.emplace(key, std::move(entry));
  return true;
}

const CassetteEntry* Cassette::find_digest(std::string_view digest) const {
  auto it = by_digest_.find(digest);
  return it == by_digest_.end() ? nullptr : &it->second;
}

const CassetteEntry* Cassette::find_tag(std::string_view tag) const {
  auto it = tag_to_digest_.find(tag);
  return it == tag_to_digest_.end() ? nullptr : find_digest(it->second);
}

Completion ReplayBackend::complete(const LlmRequest& request) {
  const std::string digest = request_digest(request);
  const CassetteEntry* e = cassette_.find_digest(digest);
  if (e == nullptr && !request.request_tag.empty()) e = cassette_.find_tag(request.request_tag);
  if (e == nullptr) throw CassetteMiss(digest);
  return {e->raw_text, e->usage};
}

void record(const std::filesystem::path& path, const LlmRequest& request, const Completion& completion) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw IoError("cannot append to cassette " + path.string());
  out << entry_to_json({request_digest(request), request.request_tag, completion.raw_text, completion.usage}).dump()
      << '\n';
  out.flush();
  if (!out) throw IoError("write to cassette " + path.string() + " failed");
}

RecordingBackend::RecordingBackend(std::shared_ptr<Backend> inner, std::filesystem::path path)
    : inner_(std::move(inner)), path_(std::move(path)) {
  if (std::filesystem::exists(path_)) cassette_ = Cassette::load(path_);
}

Completion RecordingBackend::complete(const LlmRequest& request) {
  const std::string digest = request_digest(request);
  {
    std::lock_guard lock(mutex_);
    if (const auto* e = cassette_.find_digest(digest)) return {e->raw_text, e->usage};
  }
  Completion c = inner_->complete(request);
  std::lock_guard lock(mutex_);
  // another thread may have recorded the same digest meanwhile
  if (const auto* e = cassette_.find_digest(digest)) return {e->raw_text, e->usage};
  record(path_, request, c);
  cassette_.insert({digest, request.request_tag, c.raw_text, c.usage});
  return c;
}

Gateway::Gateway(std::shared_ptr<Backend> backend, GatewayConfig config, Sleeper sleeper)
    : backend_(std::move(backend)),
      config_(config),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })),
      in_flight_(std::max(1, config.max_in_flight)) {
  if (!backend_) throw std::invalid_argument("gateway needs a backend");
  if (config_.max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
}

LlmResponse Gateway::generate(const LlmRequest& request) {
  if (blank(request.user_text)) throw std::invalid_argument("user_text is empty");
  calls_.fetch_add(1);

  struct Slot {
    std::counting_semaphore<>& s;
    explicit Slot(std::counting_semaphore<>& sem) : s(sem) { s.acquire(); }
    ~Slot() { s.release(); }
  };

  const auto start = std::chrono::steady_clock::now();
  Completion c;
  for (int attempt = 0;; ++attempt) {
    attempts_.fetch_add(1);
    try {
      Slot slot(in_flight_);
      c = backend_->complete(request);
      break;
    } catch (const TransportError&) {
      if (attempt >= config_.max_retries) throw;
    }
    sleeper_(config_.backoff_base * (1LL << attempt));
  }
  if (blank(c.raw_text)) throw EmptyCompletion();

  LlmResponse r;
  r.raw_text = std::move(c.raw_text);
  r.usage = c.usage;
  r.program_text = extract_program(r.raw_text);
  r.empty_program = blank(r.program_text);
  r.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
  return r;
}

}  // namespace cadaug::llm
