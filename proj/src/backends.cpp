#include "surpnov/backends.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "surpnov/error.hpp"

namespace surpnov {

using ojson = nlohmann::ordered_json;

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::precomputed: return "precomputed";
    case BackendKind::http: return "http";
    case BackendKind::mock: return "mock";
  }
  return "mock";
}

ojson BackendDescriptor::to_json() const {
  ojson j;
  j["kind"] = to_string(kind);
  j["model_id"] = model_id;
  j["prepend_bos"] = prepend_bos;
  j["endpoint"] = endpoint.empty() ? ojson(nullptr) : ojson(endpoint);
  j["vocab_size_hint"] = vocab_size_hint ? ojson(*vocab_size_hint) : ojson(nullptr);
  return j;
}

BackendDescriptor parse_backend_spec(std::string_view spec, std::string model_id,
                                     bool prepend_bos) {
  BackendDescriptor desc;
  desc.model_id = std::move(model_id);
  desc.prepend_bos = prepend_bos;
  if (spec == "mock") {
    desc.kind = BackendKind::mock;
    desc.vocab_size_hint = MockLM{}.vocab_size;
  } else if (spec.starts_with("precomputed:")) {
    desc.kind = BackendKind::precomputed;
    desc.endpoint = std::string(spec.substr(12));
  } else if (spec.starts_with("http:")) {
    desc.kind = BackendKind::http;
    // Accept both "http:http://host:port" and "http://host:port".
    desc.endpoint = spec.starts_with("http://") ? std::string(spec)
                                                : std::string(spec.substr(5));
  } else {
    throw BackendError("unknown backend '" + std::string(spec) +
                           "' (expected mock, precomputed:PATH or http:URL)",
                       false);
  }
  if (desc.kind != BackendKind::mock && desc.endpoint.empty()) {
    throw BackendError("backend '" + std::string(spec) + "' is missing its location", false);
  }
  return desc;
}

ojson scoring_to_json(const TokenScoring& scoring) {
  ojson j;
  j["model"] = scoring.model;
  j["text"] = scoring.text;
  j["tokens"] = ojson::array();
  for (const auto& tok : scoring.tokens) {
    ojson t;
    t["piece"] = tok.piece;
    t["start"] = tok.range.start;
    t["end"] = tok.range.end;
    t["logprob"] = tok.logprob;
    t["special"] = tok.special;
    if (tok.boundary_mass) t["boundary_mass"] = *tok.boundary_mass;
    j["tokens"].push_back(std::move(t));
  }
  if (scoring.final_boundary_mass) j["final_boundary_mass"] = *scoring.final_boundary_mass;
  return j;
}

TokenScoring scoring_from_json(const nlohmann::json& record) {
  TokenScoring scoring;
  try {
    scoring.model = record.at("model").get<std::string>();
    scoring.text = record.at("text").get<std::string>();
    for (const auto& t : record.at("tokens")) {
      Token tok;
      tok.piece = t.at("piece").get<std::string>();
      tok.range = {t.at("start").get<std::size_t>(), t.at("end").get<std::size_t>()};
      tok.logprob = t.at("logprob").get<double>();
      tok.special = t.value("special", false);
      if (auto it = t.find("boundary_mass"); it != t.end() && !it->is_null()) {
        tok.boundary_mass = it->get<double>();
      }
      scoring.tokens.push_back(std::move(tok));
    }
    if (auto it = record.find("final_boundary_mass"); it != record.end() && !it->is_null()) {
      scoring.final_boundary_mass = it->get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("malformed scoring record: ") + e.what(), false);
  }
  try {
    validate_scoring(scoring);
  } catch (const Error& e) {
    throw BackendError("invalid scoring for '" + scoring.text + "': " + e.what(), false);
  }
  return scoring;
}

// ---------------------------------------------------------------------------

MockBackend::MockBackend(BackendDescriptor desc, MockLM lm)
    : desc_(std::move(desc)), lm_(lm) {
  if (lm_.vocab_size < 2) throw BackendError("mock vocab_size must be >= 2", false);
  if (lm_.piece_length < 1) throw BackendError("mock piece_length must be >= 1", false);
  desc_.kind = BackendKind::mock;
  desc_.vocab_size_hint = lm_.vocab_size;
}

TokenScoring MockBackend::score_text(std::string_view text) const {
  if (text.empty()) throw BackendError("cannot score empty text", false);
  const std::u32string cps = utf8::decode(text);
  const double logprob = -std::log(static_cast<double>(lm_.vocab_size));

  TokenScoring out;
  out.model = desc_.model_id;
  out.text = std::string(text);
  if (desc_.prepend_bos) out.tokens.push_back({"<s>", {0, 0}, 0.0, true, std::nullopt});

  auto emit = [&](std::size_t start, std::size_t end) {
    out.tokens.push_back({utf8::encode(std::u32string_view(cps).substr(start, end - start)),
                          {start, end}, logprob, false, std::nullopt});
  };
  std::size_t i = 0;
  while (i < cps.size()) {
    if (utf8::is_space(cps[i])) {
      ++i;
      continue;
    }
    std::size_t word_end = i;
    while (word_end < cps.size() && !utf8::is_space(cps[word_end])) ++word_end;
    std::size_t piece_start = i;
    const std::size_t lead = (i > 0) ? i - 1 : i;
    bool first = true;
    while (piece_start < word_end) {
      const std::size_t piece_end = std::min(piece_start + lm_.piece_length, word_end);
      emit(first ? lead : piece_start, piece_end);
      first = false;
      piece_start = piece_end;
    }
    i = word_end;
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string cache_key(std::string_view model, std::string_view text) {
  std::string key(model);
  key.push_back('\0');
  key.append(text);
  return key;
}

}  // namespace

PrecomputedBackend::PrecomputedBackend(BackendDescriptor desc,
                                       const std::filesystem::path& path)
    : desc_(std::move(desc)) {
  std::ifstream in(path);
  if (!in) throw BackendError("cannot open precomputed file '" + path.string() + "'", false);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      insert(scoring_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw BackendError(path.string() + ":" + std::to_string(line_no) + ": " + e.what(),
                         false);
    }
  }
  desc_.kind = BackendKind::precomputed;
}

PrecomputedBackend::PrecomputedBackend(BackendDescriptor desc,
                                       std::vector<TokenScoring> records)
    : desc_(std::move(desc)) {
  for (auto& r : records) insert(std::move(r));
  desc_.kind = BackendKind::precomputed;
}

void PrecomputedBackend::insert(TokenScoring record) {
  auto key = cache_key(record.model, record.text);
  cache_.insert_or_assign(std::move(key), std::move(record));
}

TokenScoring PrecomputedBackend::score_text(std::string_view text) const {
  if (text.empty()) throw BackendError("cannot score empty text", false);
  auto it = cache_.find(cache_key(desc_.model_id, text));
  if (it == cache_.end()) {
    throw BackendError("precomputed cache miss for model '" + desc_.model_id +
                           "', text '" + std::string(text) + "'",
                       false);
  }
  return it->second;
}

// ---------------------------------------------------------------------------

HttpOptions HttpOptions::from_env() {
  HttpOptions opts;
  if (const char* env = std::getenv("SURPNOV_HTTP_TIMEOUT_MS")) {
    char* end = nullptr;
    const long ms = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && ms > 0) opts.timeout = std::chrono::milliseconds(ms);
  }
  return opts;
}

HttpBackend::HttpBackend(BackendDescriptor desc, HttpOptions options)
    : desc_(std::move(desc)), options_(options) {
  desc_.kind = BackendKind::http;
  if (desc_.endpoint.empty()) throw BackendError("http backend needs an endpoint", false);
  if (options_.max_attempts < 1) options_.max_attempts = 1;
}

TokenScoring HttpBackend::score_text(std::string_view text) const {
  if (text.empty()) throw BackendError("cannot score empty text", false);
  ojson body;
  body["model"] = desc_.model_id;
  body["text"] = std::string(text);
  body["prepend_bos"] = desc_.prepend_bos;
  const std::string payload = body.dump();
  const std::string path = options_.request_boundary_mass ? "/v1/score?boundary=1"
                                                          : "/v1/score";

  std::string last_error;
  auto backoff = options_.initial_backoff;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    // httplib clients are not safe to share across threads; one per call.
    httplib::Client client(desc_.endpoint);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
    const auto usecs =
        std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    auto res = client.Post(path, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status == 200) {
      try {
        return scoring_from_json(nlohmann::json::parse(res->body));
      } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("unparseable response: ") + e.what(), false);
      }
    } else if (res->status >= 400 && res->status < 500) {
      throw BackendError("HTTP " + std::to_string(res->status) + " for model '" +
                             desc_.model_id + "': " + res->body,
                         false);
    } else {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
    }
    if (attempt < options_.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw BackendError("giving up after " + std::to_string(options_.max_attempts) +
                         " attempts: " + last_error,
                     true);
}

std::unique_ptr<Backend> make_backend(const BackendDescriptor& desc,
                                      const HttpOptions& http) {
  switch (desc.kind) {
    case BackendKind::mock:
      return std::make_unique<MockBackend>(desc);
    case BackendKind::precomputed:
      return std::make_unique<PrecomputedBackend>(desc, desc.endpoint);
    case BackendKind::http:
      return std::make_unique<HttpBackend>(desc, http);
  }
  throw BackendError("unknown backend kind", false);
}

BatchResult batch_score(const Backend& backend, const std::vector<std::string>& texts,
                        std::size_t max_in_flight) {
  BatchResult result;
  result.scorings.resize(texts.size());
  std::vector<std::optional<BatchFailure>> failures(texts.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < texts.size(); i = next++) {
      try {
        result.scorings[i] = backend.score_text(texts[i]);
      } catch (const BackendError& e) {
        failures[i] = BatchFailure{i, e.what(), e.retryable()};
      } catch (const std::exception& e) {
        failures[i] = BatchFailure{i, e.what(), false};
      }
    }
  };

  const std::size_t n_workers = std::min(std::max<std::size_t>(max_in_flight, 1), texts.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  for (auto& f : failures) {
    if (f) result.failures.push_back(std::move(*f));
  }
  return result;
}

}  // namespace surpnov
