#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "slr/clock.hpp"
#include "slr/http.hpp"

namespace slr::llm {

enum class Role { System, User, Assistant, Tool };

std::string_view role_name(Role role);
Role parse_role(std::string_view name);

struct ToolCall {
  std::string id;
  std::string name;
  std::string arguments;  ///< JSON text as produced by the model

  bool operator==(const ToolCall&) const = default;
};

struct Message {
  Role role = Role::User;
  std::string content;
  std::vector<ToolCall> tool_calls;  ///< assistant messages only
  std::string tool_call_id;          ///< tool messages only
  std::string name;                  ///< tool messages: tool name

  bool operator==(const Message&) const = default;
};

struct ToolDeclaration {
  std::string name;
  std::string description;
  nlohmann::json parameters;  ///< JSON schema of the arguments

  bool operator==(const ToolDeclaration&) const = default;
};

struct ChatRequest {
  std::string model_name;
  std::vector<Message> messages;
  std::vector<ToolDeclaration> tools;
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::string request_tag;

  /// Raises invalid_request unless messages are nonempty, the first is a
  /// system or user message and temperature >= 0.
  void validate() const;

  bool operator==(const ChatRequest&) const = default;
};

enum class FinishReason { Stop, ToolCall, Length, Error };

std::string_view finish_reason_name(FinishReason reason);

struct Usage {
  std::optional<int> prompt_tokens;
  std::optional<int> output_tokens;

  bool operator==(const Usage&) const = default;
};

struct ChatResponse {
  std::string content;
  std::vector<ToolCall> tool_calls;
  FinishReason finish_reason = FinishReason::Stop;
  Usage usage;
  int attempts = 1;  ///< transport attempts the backend needed

  bool operator==(const ChatResponse&) const = default;

  static ChatResponse text(std::string content);
  static ChatResponse tool(std::string name, std::string arguments, std::string id = "call-1");
};

nlohmann::json to_json(const ChatRequest& request);
nlohmann::json to_json(const ChatResponse& response);
ChatResponse response_from_json(const nlohmann::json& j);

/// Chat-completions wire payload: {model, messages, tools, temperature, max_tokens}.
nlohmann::json to_wire(const ChatRequest& request);
/// Parse a chat-completions response body ({choices:[{message, finish_reason}], usage}).
ChatResponse from_wire(const nlohmann::json& body);

/// Replay/mock key: the request tag, or a stable hash of the messages when
/// the tag is empty.
std::string request_key(const ChatRequest& request);
/// SHA-256 of the canonical request JSON.
std::string request_digest(const ChatRequest& request);

/// Every agent call goes through one shared provider; implementations are
/// safe for concurrent complete() calls.
class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

/// Deterministic scripted backend. Lookup order: scripted tag, scripted
/// message hash, fallback responder; otherwise scripting_error.
class MockProvider final : public ChatProvider {
 public:
  using Responder = std::function<ChatResponse(const ChatRequest&)>;

  explicit MockProvider(Responder fallback = {}) : fallback_(std::move(fallback)) {}

  void script(const std::string& key, ChatResponse response);
  void script_text(const std::string& key, std::string content) { script(key, ChatResponse::text(std::move(content))); }

  ChatResponse complete(const ChatRequest& request) override;

  std::size_t calls() const;
  std::vector<ChatRequest> requests() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, ChatResponse> scripts_;
  Responder fallback_;
  std::vector<ChatRequest> seen_;
};

/// Append-only JSONL store of {key, request_sha, response}.
class ReplayStore {
 public:
  /// Loads existing entries when the file exists; a missing file is an empty store.
  explicit ReplayStore(std::filesystem::path path);

  void record(const ChatRequest& request, const ChatResponse& response);
  std::optional<ChatResponse> lookup(const std::string& key) const;
  std::size_t size() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::map<std::string, ChatResponse> entries_;
};

/// Forwards to an inner provider and records every exchange.
class RecordingProvider final : public ChatProvider {
 public:
  RecordingProvider(ChatProvider& inner, ReplayStore& store) : inner_(inner), store_(store) {}
  ChatResponse complete(const ChatRequest& request) override;

 private:
  ChatProvider& inner_;
  ReplayStore& store_;
};

/// Serves recorded responses; a key with no recording raises replay_miss.
class ReplayProvider final : public ChatProvider {
 public:
  explicit ReplayProvider(const ReplayStore& store) : store_(store) {}
  ChatResponse complete(const ChatRequest& request) override;

 private:
  const ReplayStore& store_;
};

struct ProviderConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key_env = "OPENAI_API_KEY";
  std::string model_name = "gpt-4.1";
  int timeout_s = 120;
  int max_retries = 3;
  http::Backoff backoff{1000, 2.0, 30000};

  void validate() const;
};

/// Live backend: POST {base_url}/chat/completions, retrying transport errors,
/// 429 and 5xx with exponential backoff.
class HttpChatProvider final : public ChatProvider {
 public:
  HttpChatProvider(ProviderConfig config, http::Client& client, Clock& clock);
  ChatResponse complete(const ChatRequest& request) override;

 private:
  ProviderConfig config_;
  http::Client& client_;
  Clock& clock_;
};

}  // namespace slr::llm
