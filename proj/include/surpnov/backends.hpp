#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "surpnov/alignment.hpp"

namespace surpnov {

enum class BackendKind { precomputed, http, mock };

std::string_view to_string(BackendKind kind);

struct BackendDescriptor {
  BackendKind kind = BackendKind::mock;
  std::string model_id = "mock";
  bool prepend_bos = true;
  /// Base URL for http, file path for precomputed; empty for mock.
  std::string endpoint;
  std::optional<std::size_t> vocab_size_hint;

  nlohmann::ordered_json to_json() const;
};

/// Parses the CLI form: "mock", "precomputed:PATH" or "http:URL".
BackendDescriptor parse_backend_spec(std::string_view spec, std::string model_id,
                                     bool prepend_bos);

/// Context-free uniform model. Text is split on whitespace into words, each
/// word into pieces of at most `piece_length` characters; a word's first
/// piece also absorbs the single whitespace character preceding it. Every
/// piece has logprob -ln(vocab_size).
struct MockLM {
  std::size_t piece_length = 4;
  std::size_t vocab_size = 100;
};

/// Wire form shared by precomputed files and the HTTP service.
nlohmann::ordered_json scoring_to_json(const TokenScoring& scoring);
TokenScoring scoring_from_json(const nlohmann::json& record);

class Backend {
 public:
  virtual ~Backend() = default;
  /// Thread-safe. Throws BackendError.
  virtual TokenScoring score_text(std::string_view text) const = 0;
  virtual const BackendDescriptor& descriptor() const = 0;
};

class MockBackend final : public Backend {
 public:
  explicit MockBackend(BackendDescriptor desc, MockLM lm = {});
  TokenScoring score_text(std::string_view text) const override;
  const BackendDescriptor& descriptor() const override { return desc_; }
  const MockLM& lm() const { return lm_; }

 private:
  BackendDescriptor desc_;
  MockLM lm_;
};

/// Serves scorings from a JSONL dump keyed by (model, text).
class PrecomputedBackend final : public Backend {
 public:
  PrecomputedBackend(BackendDescriptor desc, const std::filesystem::path& path);
  PrecomputedBackend(BackendDescriptor desc, std::vector<TokenScoring> records);
  TokenScoring score_text(std::string_view text) const override;
  const BackendDescriptor& descriptor() const override { return desc_; }
  std::size_t size() const { return cache_.size(); }

 private:
  void insert(TokenScoring record);

  BackendDescriptor desc_;
  std::unordered_map<std::string, TokenScoring> cache_;
};

struct HttpOptions {
  std::chrono::milliseconds timeout{30000};
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  /// Ask the service for per-position boundary masses.
  bool request_boundary_mass = false;

  /// Defaults with the timeout taken from SURPNOV_HTTP_TIMEOUT_MS when set.
  static HttpOptions from_env();
};

/// Client for POST /v1/score. Transport errors and 5xx responses are retried
/// with exponential backoff; 4xx responses fail immediately.
class HttpBackend final : public Backend {
 public:
  HttpBackend(BackendDescriptor desc, HttpOptions options = HttpOptions::from_env());
  TokenScoring score_text(std::string_view text) const override;
  const BackendDescriptor& descriptor() const override { return desc_; }

 private:
  BackendDescriptor desc_;
  HttpOptions options_;
};

std::unique_ptr<Backend> make_backend(const BackendDescriptor& desc,
                                      const HttpOptions& http = HttpOptions::from_env());

struct BatchFailure {
  std::size_t index = 0;
  std::string message;
  bool retryable = false;
};

struct BatchResult {
  /// Same order as the input; nullopt where scoring failed.
  std::vector<std::optional<TokenScoring>> scorings;
  std::vector<BatchFailure> failures;

  bool ok() const { return failures.empty(); }
};

/// Scores texts with at most `max_in_flight` concurrent calls. Failures are
/// collected per index; the batch always runs to completion.
BatchResult batch_score(const Backend& backend, const std::vector<std::string>& texts,
                        std::size_t max_in_flight = 4);

}  // namespace surpnov
