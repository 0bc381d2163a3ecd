#pragma once

// OpenAI-compatible chat-completions client backend.
//
// Wire format: HTTP POST {base_url}/chat/completions with JSON body
// {model, messages:[{role, content}], temperature}; the reply is read from
// the first choice's message content. The API key comes from an environment
// variable (DWLAB_API_KEY by default) and is sent as a Bearer token.

#include "dwlab/debate.hpp"

#include <string>

namespace dwlab::backends {

struct RemoteConfig {
  std::string base_url;  // e.g. "http://localhost:8080/v1"
  std::string model;
  double temperature_debater = 0.7;
  double temperature_summarizer = 0.0;
  std::string api_key_env = "DWLAB_API_KEY";
  int max_attempts = 4;          // total tries incl. the first
  int retry_backoff_ms = 250;    // doubled after each retriable failure
  int timeout_seconds = 120;
};

class RemoteBackend : public debate::AgentBackend {
 public:
  // Resolves the API key eagerly so misconfiguration fails before any task
  // runs. Throws std::runtime_error when the key variable is unset or the
  // base URL is malformed.
  RemoteBackend(std::string identity, RemoteConfig cfg);

  std::string identity() const override { return identity_; }
  bool deterministic() const override { return false; }

  // Retries on HTTP 429/5xx and transport errors with exponential backoff;
  // fails immediately on other statuses. Throws debate::BackendError after
  // the attempt budget is exhausted.
  std::string generate(const debate::GenerationRequest& request) override;

 private:
  std::string identity_;
  RemoteConfig cfg_;
  std::string api_key_;
  std::string origin_;       // scheme://host[:port]
  std::string path_prefix_;  // path part of base_url, possibly empty
};

// Splits "scheme://host[:port][/path]" into origin and path prefix.
// Exposed for tests. Throws std::runtime_error on malformed input.
void split_base_url(const std::string& base_url, std::string& origin,
                    std::string& path_prefix);

// Serializes a generation request into the chat-message list sent over the
// wire: the rendered prompt first, then prior-turn context with the
// caller's own message as an assistant turn and other agents' messages as
// attributed user turns. Exposed for tests. Returns a JSON array dump.
std::string chat_messages_json(const debate::GenerationRequest& request);

}  // namespace dwlab::backends
