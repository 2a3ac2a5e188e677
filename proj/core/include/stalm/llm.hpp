#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stalm/prompt.hpp"

namespace stalm::llm {

struct LLMRequest {
  prompt::PromptBundle prompt;
  int n = 1;
  double temperature = 1.0;
  std::string model;
  double timeout_seconds = 60.0;
};

enum class BackendKind { http, replay };

struct LLMBatch {
  std::vector<std::string> responses;
  std::vector<double> per_response_latency;
  BackendKind backend = BackendKind::replay;
  int warnings = 0;  // requested-but-missing response count
};

enum class ErrorKind { auth, timeout, exhausted_replay, all_failed };

std::string to_string(ErrorKind kind);

struct LLMError {
  ErrorKind kind = ErrorKind::all_failed;
  std::string message;
};

struct QueryOutcome {
  std::optional<LLMBatch> batch;
  std::optional<LLMError> error;

  bool ok() const { return batch.has_value(); }
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual QueryOutcome query(const LLMRequest& req) = 0;
};

/// Replays scripted responses from UTF-8 files named
/// `<problem>.<call>.<i>.txt`; the call index advances on every query.
class ReplayBackend : public Backend {
 public:
  ReplayBackend(std::filesystem::path dir, std::string problem_id);

  QueryOutcome query(const LLMRequest& req) override;

  int call_index() const { return call_index_; }

 private:
  std::filesystem::path dir_;
  std::string problem_id_;
  int call_index_ = 0;
};

struct HttpOptions {
  /// Full URL of the chat-completions endpoint.
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  /// Single request with an `n` parameter when true; otherwise n independent
  /// requests dispatched with bounded concurrency.
  bool multi_completion = true;
  int max_retries = 3;
  double backoff_seconds = 0.5;
  /// Read from the LLM_API_KEY environment variable when empty.
  std::string api_key;
};

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpOptions options);

  QueryOutcome query(const LLMRequest& req) override;

 private:
  HttpOptions opt_;
};

/// Accumulates wall time spent inside an inner backend; bench uses it to
/// report planning time net of LLM latency.
class TimingBackend : public Backend {
 public:
  explicit TimingBackend(Backend* inner) : inner_(inner) {}

  QueryOutcome query(const LLMRequest& req) override;

  double total_seconds() const { return total_seconds_; }
  int calls() const { return calls_; }

 private:
  Backend* inner_;
  double total_seconds_ = 0.0;
  int calls_ = 0;
};

}  // namespace stalm::llm
