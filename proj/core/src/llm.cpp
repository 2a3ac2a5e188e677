#include "stalm/llm.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace stalm::llm {
namespace {

using nlohmann::json;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

struct SplitUrl {
  std::string host;  // scheme://authority
  std::string path;
};

std::optional<SplitUrl> split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) return std::nullopt;
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) {
    return SplitUrl{url, "/v1/chat/completions"};
  }
  return SplitUrl{url.substr(0, slash), url.substr(slash)};
}

json request_body(const LLMRequest& req, int n) {
  json body;
  body["model"] = req.model;
  body["temperature"] = req.temperature;
  body["n"] = n;
  body["messages"] = json::array({
      json{{"role", "system"}, {"content", req.prompt.system_text}},
      json{{"role", "user"}, {"content", req.prompt.user_text}},
  });
  return body;
}

struct HttpAttempt {
  std::vector<std::string> contents;
  double latency = 0.0;
  bool ok = false;
  bool auth_failure = false;
  bool timed_out = false;
  std::string message;
};

HttpAttempt post_once(const SplitUrl& url, const HttpOptions& opt,
                      const LLMRequest& req, int n) {
  HttpAttempt out;
  const auto start = std::chrono::steady_clock::now();
  httplib::Client client(url.host);
  client.set_connection_timeout(std::chrono::duration<double>(req.timeout_seconds));
  client.set_read_timeout(std::chrono::duration<double>(req.timeout_seconds));
  client.set_write_timeout(std::chrono::duration<double>(req.timeout_seconds));
  httplib::Headers headers;
  if (!opt.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + opt.api_key);
  }
  const auto res = client.Post("/" == url.path ? "/v1/chat/completions" : url.path,
                               headers, request_body(req, n).dump(),
                               "application/json");
  out.latency = seconds_since(start);
  if (!res) {
    out.timed_out = res.error() == httplib::Error::ConnectionTimeout ||
                    res.error() == httplib::Error::Read;
    out.message = httplib::to_string(res.error());
    return out;
  }
  if (res->status == 401 || res->status == 403) {
    out.auth_failure = true;
    out.message = "HTTP " + std::to_string(res->status);
    return out;
  }
  if (res->status != 200) {
    out.message = "HTTP " + std::to_string(res->status);
    return out;
  }
  json parsed;
  try {
    parsed = json::parse(res->body);
    for (const auto& choice : parsed.at("choices")) {
      out.contents.push_back(choice.at("message").at("content").get<std::string>());
    }
  } catch (const std::exception& e) {
    out.message = std::string("bad response body: ") + e.what();
    return out;
  }
  out.ok = !out.contents.empty();
  if (!out.ok) out.message = "response carried no choices";
  return out;
}

HttpAttempt post_with_retries(const SplitUrl& url, const HttpOptions& opt,
                              const LLMRequest& req, int n) {
  HttpAttempt last;
  for (int attempt = 0; attempt < std::max(1, opt.max_retries); ++attempt) {
    if (attempt > 0) {
      const double delay = opt.backoff_seconds * static_cast<double>(1 << (attempt - 1));
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    last = post_once(url, opt, req, n);
    if (last.ok || last.auth_failure) return last;
  }
  return last;
}

}  // namespace

std::string to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::auth: return "auth";
    case ErrorKind::timeout: return "timeout";
    case ErrorKind::exhausted_replay: return "exhausted_replay";
    case ErrorKind::all_failed: return "all_failed";
  }
  return "?";
}

ReplayBackend::ReplayBackend(std::filesystem::path dir, std::string problem_id)
    : dir_(std::move(dir)), problem_id_(std::move(problem_id)) {}

QueryOutcome ReplayBackend::query(const LLMRequest& req) {
  const int call = call_index_++;
  QueryOutcome out;
  LLMBatch batch;
  batch.backend = BackendKind::replay;
  for (int i = 0; i < req.n; ++i) {
    const auto path = dir_ / (problem_id_ + "." + std::to_string(call) + "." +
                              std::to_string(i) + ".txt");
    std::ifstream in(path, std::ios::binary);
    if (!in) break;
    std::ostringstream body;
    body << in.rdbuf();
    batch.responses.push_back(body.str());
    batch.per_response_latency.push_back(0.0);
  }
  if (batch.responses.empty()) {
    out.error = LLMError{ErrorKind::exhausted_replay,
                         "no replay files for " + problem_id_ + " call " +
                             std::to_string(call) + " under " + dir_.string()};
    return out;
  }
  batch.warnings = req.n - static_cast<int>(batch.responses.size());
  out.batch = std::move(batch);
  return out;
}

HttpBackend::HttpBackend(HttpOptions options) : opt_(std::move(options)) {
  if (opt_.api_key.empty()) {
    if (const char* key = std::getenv("LLM_API_KEY")) opt_.api_key = key;
  }
}

QueryOutcome HttpBackend::query(const LLMRequest& req) {
  QueryOutcome out;
  const auto url = split_url(opt_.endpoint);
  if (!url) {
    out.error = LLMError{ErrorKind::all_failed,
                         "bad endpoint URL: " + opt_.endpoint};
    return out;
  }
  LLMBatch batch;
  batch.backend = BackendKind::http;

  if (opt_.multi_completion) {
    const auto attempt = post_with_retries(*url, opt_, req, req.n);
    if (!attempt.ok) {
      const ErrorKind kind = attempt.auth_failure ? ErrorKind::auth
                             : attempt.timed_out  ? ErrorKind::timeout
                                                  : ErrorKind::all_failed;
      out.error = LLMError{kind, attempt.message};
      return out;
    }
    for (const auto& content : attempt.contents) {
      batch.responses.push_back(content);
      batch.per_response_latency.push_back(attempt.latency);
    }
  } else {
    std::vector<std::future<HttpAttempt>> jobs;
    jobs.reserve(req.n);
    for (int i = 0; i < req.n; ++i) {
      jobs.push_back(std::async(std::launch::async, [&] {
        return post_with_retries(*url, opt_, req, 1);
      }));
    }
    bool any_auth = false;
    bool any_timeout = false;
    std::string message;
    for (auto& job : jobs) {
      const auto attempt = job.get();
      if (attempt.ok) {
        batch.responses.push_back(attempt.contents.front());
        batch.per_response_latency.push_back(attempt.latency);
      } else {
        any_auth |= attempt.auth_failure;
        any_timeout |= attempt.timed_out;
        if (message.empty()) message = attempt.message;
      }
    }
    if (batch.responses.empty()) {
      const ErrorKind kind = any_auth      ? ErrorKind::auth
                             : any_timeout ? ErrorKind::timeout
                                           : ErrorKind::all_failed;
      out.error = LLMError{kind, message};
      return out;
    }
  }

  batch.warnings = req.n - static_cast<int>(batch.responses.size());
  if (batch.warnings < 0) batch.warnings = 0;
  out.batch = std::move(batch);
  return out;
}

QueryOutcome TimingBackend::query(const LLMRequest& req) {
  const auto start = std::chrono::steady_clock::now();
  auto out = inner_->query(req);
  total_seconds_ += seconds_since(start);
  ++calls_;
  return out;
}

}  // namespace stalm::llm
