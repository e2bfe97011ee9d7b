#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "surpnov/backends.hpp"
#include "surpnov/error.hpp"
#include "test_util.hpp"

using namespace surpnov;
using doctest::Approx;

namespace {

BackendDescriptor mock_desc(bool bos = true) {
  BackendDescriptor d;
  d.kind = BackendKind::mock;
  d.model_id = "mock";
  d.prepend_bos = bos;
  return d;
}

std::vector<std::string> pieces(const TokenScoring& s) {
  std::vector<std::string> out;
  for (const auto& t : s.tokens) out.push_back(t.piece);
  return out;
}

// Serves /v1/score from the mock model, failing the first `fail_first`
// requests with 503.
class ScoreServer {
 public:
  explicit ScoreServer(int fail_first = 0) : fail_left_(fail_first) {
    server_.Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      if (fail_left_ > 0) {
        --fail_left_;
        res.status = 503;
        res.set_content("busy", "text/plain");
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      const auto text = body.at("text").get<std::string>();
      if (text.empty()) {
        res.status = 400;
        res.set_content("empty text", "text/plain");
        return;
      }
      if (body.at("model").get<std::string>() != "served") {
        res.status = 404;
        res.set_content("unknown model", "text/plain");
        return;
      }
      auto desc = mock_desc(body.at("prepend_bos").get<bool>());
      desc.model_id = "served";
      auto scoring = MockBackend(desc).score_text(text);
      if (req.has_param("boundary")) {
        for (auto& t : scoring.tokens) {
          if (!t.special) t.boundary_mass = 0.5;
        }
        scoring.final_boundary_mass = 0.25;
      }
      res.set_content(scoring_to_json(scoring).dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~ScoreServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int requests() const { return requests_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> fail_left_;
  std::atomic<int> requests_{0};
};

HttpBackend http_backend(const std::string& url, std::string model = "served") {
  BackendDescriptor d;
  d.kind = BackendKind::http;
  d.model_id = std::move(model);
  d.endpoint = url;
  HttpOptions opts;
  opts.timeout = std::chrono::milliseconds(2000);
  opts.initial_backoff = std::chrono::milliseconds(1);
  return HttpBackend(d, opts);
}

}  // namespace

TEST_CASE("mock tokenization and log-probabilities") {
  const MockBackend mock(mock_desc());
  const auto s = mock.score_text("The arrested water");
  CHECK(pieces(s) == std::vector<std::string>{"<s>", "The", " arre", "sted", " wate", "r"});
  CHECK(s.tokens[0].special);
  CHECK(s.tokens[0].logprob == 0.0);
  for (std::size_t i = 1; i < s.tokens.size(); ++i) {
    CHECK(s.tokens[i].logprob == -std::log(100.0));
    CHECK(s.tokens[i].logprob == Approx(-4.60517).epsilon(1e-6));
  }
  CHECK(s.tokens[2].range == utf8::CharRange{3, 8});
  CHECK_NOTHROW(validate_scoring(s));

  const auto hi = MockBackend(mock_desc(false)).score_text("hi");
  REQUIRE(hi.tokens.size() == 1);
  CHECK(hi.tokens[0].logprob == Approx(-4.60517).epsilon(1e-6));

  CHECK_THROWS_AS(mock.score_text(""), BackendError);
  CHECK_THROWS_AS(MockBackend(mock_desc(), MockLM{4, 1}), BackendError);
  CHECK_THROWS_AS(MockBackend(mock_desc(), MockLM{0, 100}), BackendError);
}

TEST_CASE("mock total surprisal is token count times ln(vocab)") {
  const MockBackend mock(mock_desc(), MockLM{3, 7});
  const auto s = mock.score_text("  alpha  beta\tgamma, délta ");
  double total = 0.0;
  for (const auto& t : s.tokens) total -= t.logprob;
  CHECK(total == Approx(static_cast<double>(s.content_token_count()) * std::log(7.0)));
  CHECK_NOTHROW(validate_scoring(s));
}

TEST_CASE("parse_backend_spec") {
  CHECK(parse_backend_spec("mock", "m", true).kind == BackendKind::mock);
  const auto p = parse_backend_spec("precomputed:/tmp/x.jsonl", "gpt2", false);
  CHECK(p.kind == BackendKind::precomputed);
  CHECK(p.endpoint == "/tmp/x.jsonl");
  CHECK_FALSE(p.prepend_bos);
  CHECK(parse_backend_spec("http:http://localhost:8000", "gpt2", true).endpoint ==
        "http://localhost:8000");
  CHECK(parse_backend_spec("http://localhost:8000", "gpt2", true).endpoint ==
        "http://localhost:8000");
  CHECK_THROWS_AS(parse_backend_spec("gpu", "m", true), BackendError);
  CHECK_THROWS_AS(parse_backend_spec("precomputed:", "m", true), BackendError);
}

TEST_CASE("precomputed backend") {
  testing::TempDir dir;
  auto desc = mock_desc();
  desc.model_id = "gpt2";
  const auto a = MockBackend(desc).score_text("The arrested water");
  {
    std::ofstream out(dir / "dump.jsonl");
    out << scoring_to_json(a).dump() << "\n\n";
  }
  BackendDescriptor pd = desc;
  pd.kind = BackendKind::precomputed;
  pd.endpoint = (dir / "dump.jsonl").string();
  const PrecomputedBackend pre(pd, pd.endpoint);
  CHECK(pre.size() == 1);
  CHECK(pre.score_text("The arrested water") == a);
  CHECK(pre.score_text("The arrested water") == pre.score_text("The arrested water"));
  try {
    pre.score_text("unseen");
    FAIL("expected a cache miss");
  } catch (const BackendError& e) {
    CHECK_FALSE(e.retryable());
    CHECK(std::string(e.what()).find("'gpt2'") != std::string::npos);
    CHECK(std::string(e.what()).find("'unseen'") != std::string::npos);
  }

  testing::write_text(dir / "bad.jsonl", "{\"model\":\"m\"}\n");
  CHECK_THROWS_AS(PrecomputedBackend(pd, dir / "bad.jsonl"), BackendError);
}

TEST_CASE("scoring json carries optional boundary masses") {
  TokenScoring s{"m", "ab", {Token{"ab", {0, 2}, -0.25, false, 0.75}}, 0.5};
  const auto back = scoring_from_json(nlohmann::json::parse(scoring_to_json(s).dump()));
  CHECK(back == s);
}

TEST_CASE("http backend: success, client errors, retries") {
  ScoreServer server(0);
  const auto http = http_backend(server.url());
  auto served = mock_desc();
  served.model_id = "served";
  CHECK(http.score_text("The arrested water") ==
        MockBackend(served).score_text("The arrested water"));

  try {
    http_backend(server.url(), "nope").score_text("x");
    FAIL("expected 404");
  } catch (const BackendError& e) {
    CHECK_FALSE(e.retryable());
    CHECK(std::string(e.what()).find("404") != std::string::npos);
  }
  CHECK_THROWS_AS(http.score_text(""), BackendError);
}

TEST_CASE("http backend retries 5xx with backoff") {
  ScoreServer flaky(2);
  CHECK_NOTHROW(http_backend(flaky.url()).score_text("hello there"));
  CHECK(flaky.requests() == 3);

  ScoreServer down(10);
  try {
    http_backend(down.url()).score_text("hello");
    FAIL("expected failure");
  } catch (const BackendError& e) {
    CHECK(e.retryable());
  }
  CHECK(down.requests() == 3);
}

TEST_CASE("http transport failure is retryable") {
  BackendDescriptor d;
  d.kind = BackendKind::http;
  d.model_id = "served";
  d.endpoint = "http://127.0.0.1:1";
  HttpOptions opts;
  opts.timeout = std::chrono::milliseconds(200);
  opts.initial_backoff = std::chrono::milliseconds(1);
  try {
    HttpBackend(d, opts).score_text("x");
    FAIL("expected failure");
  } catch (const BackendError& e) {
    CHECK(e.retryable());
  }
}

TEST_CASE("http and precomputed dumps of the same service agree bit-for-bit") {
  ScoreServer server;
  const auto http = http_backend(server.url());
  const std::vector<std::string> texts = {"The arrested water", "Fill in the blank:\nx ____\nx y",
                                          "‘ Tell him I am very sorry. ’"};
  testing::TempDir dir;
  {
    std::ofstream out(dir / "dump.jsonl");
    for (const auto& t : texts) out << scoring_to_json(http.score_text(t)).dump() << '\n';
  }
  BackendDescriptor pd;
  pd.kind = BackendKind::precomputed;
  pd.model_id = "served";
  const PrecomputedBackend pre(pd, dir / "dump.jsonl");
  for (const auto& t : texts) CHECK(pre.score_text(t) == http.score_text(t));
}

TEST_CASE("SURPNOV_HTTP_TIMEOUT_MS") {
  ::setenv("SURPNOV_HTTP_TIMEOUT_MS", "1234", 1);
  CHECK(HttpOptions::from_env().timeout == std::chrono::milliseconds(1234));
  ::setenv("SURPNOV_HTTP_TIMEOUT_MS", "junk", 1);
  CHECK(HttpOptions::from_env().timeout == std::chrono::milliseconds(30000));
  ::unsetenv("SURPNOV_HTTP_TIMEOUT_MS");
}

namespace {

// Records the peak number of concurrent calls.
class ProbeBackend final : public Backend {
 public:
  TokenScoring score_text(std::string_view text) const override {
    const int now = ++active_;
    int peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    --active_;
    if (text == "fail") throw BackendError("boom", true);
    return mock_.score_text(text);
  }
  const BackendDescriptor& descriptor() const override { return mock_.descriptor(); }
  int peak() const { return peak_; }

 private:
  MockBackend mock_{mock_desc()};
  mutable std::atomic<int> active_{0};
  mutable std::atomic<int> peak_{0};
};

}  // namespace

TEST_CASE("batch_score") {
  const MockBackend mock(mock_desc());
  CHECK(batch_score(mock, {}).scorings.empty());

  const auto dup = batch_score(mock, {"same text", "other", "same text"});
  REQUIRE(dup.ok());
  CHECK(*dup.scorings[0] == *dup.scorings[2]);
  CHECK(dup.scorings[1]->text == "other");

  ProbeBackend probe;
  std::vector<std::string> texts;
  for (int i = 0; i < 40; ++i) texts.push_back(i % 10 == 3 ? "fail" : "t" + std::to_string(i));
  const auto res = batch_score(probe, texts, 3);
  CHECK(probe.peak() <= 3);
  CHECK(probe.peak() >= 2);
  REQUIRE(res.failures.size() == 4);
  CHECK(res.failures[0].index == 3);
  CHECK(res.failures[3].index == 33);
  CHECK(res.failures[0].retryable);
  CHECK_FALSE(res.scorings[3].has_value());
  CHECK(res.scorings[4]->text == "t4");
}

TEST_CASE("1,000 mock texts score in under a second") {
  const MockBackend mock(mock_desc());
  std::vector<std::string> texts;
  for (int i = 0; i < 1000; ++i) {
    texts.push_back("Sentence number " + std::to_string(i) + " has some extraordinary words.");
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = batch_score(mock, texts);
  const auto elapsed = std::chrono::steady_clock::now() - t0;
  CHECK(res.ok());
  CHECK(elapsed < std::chrono::seconds(1));
}
