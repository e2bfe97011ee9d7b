#include <doctest.h>

#include <atomic>
#include <cmath>
#include <random>

#include "fuzz_tokenizer.hpp"
#include "surpnov/error.hpp"
#include "surpnov/scoring.hpp"

using namespace surpnov;
using doctest::Approx;

namespace {

const double kLn100 = std::log(100.0);

MockBackend mock(bool bos = true) {
  BackendDescriptor d;
  d.model_id = "mock";
  d.prepend_bos = bos;
  return MockBackend(d);
}

SentenceItem item(std::string id, std::string sentence,
                  std::vector<std::pair<std::string, std::size_t>> targets) {
  SentenceItem it;
  it.id = std::move(id);
  it.sentence = std::move(sentence);
  for (const auto& [surface, occurrence] : targets) {
    TargetAnnotation t;
    t.surface = surface;
    t.range = locate_surface(it.sentence, surface, occurrence);
    t.novelty_label = NoveltyLabel::novel;
    it.targets.push_back(t);
  }
  return it;
}

class CountingBackend final : public Backend {
 public:
  TokenScoring score_text(std::string_view text) const override {
    ++calls;
    return inner_.score_text(text);
  }
  const BackendDescriptor& descriptor() const override { return inner_.descriptor(); }
  mutable std::atomic<int> calls{0};

 private:
  MockBackend inner_ = mock();
};

class FixedBackend final : public Backend {
 public:
  explicit FixedBackend(TokenScoring s) : s_(std::move(s)) { desc_.model_id = "fixed"; }
  TokenScoring score_text(std::string_view) const override { return s_; }
  const BackendDescriptor& descriptor() const override { return desc_; }

 private:
  TokenScoring s_;
  BackendDescriptor desc_;
};

}  // namespace

TEST_CASE("direct surprisal with the mock") {
  const auto m = mock();
  const auto rec = direct_surprisal(item("a", "The arrested water", {{"arrested", 0}}), 0, m,
                                    Correction::raw);
  CHECK(rec.surprisal == Approx(2 * kLn100).epsilon(1e-15));
  CHECK(rec.surprisal == Approx(9.2103).epsilon(1e-5));
  CHECK(rec.method == Method::direct);
  CHECK(rec.span.leakage == 1);
  CHECK(rec.surface == "arrested");

  CHECK(direct_surprisal(item("b", "a b c", {{"c", 0}}), 0, m, Correction::raw).surprisal ==
        Approx(kLn100));

  const auto first = direct_surprisal(item("c", "Struggled with it a little", {{"Struggled", 0}}),
                                      0, m, Correction::raw);
  CHECK(std::isfinite(first.surprisal));
  CHECK(first.span.first == 1);  // index 0 is the BOS token

  CHECK_THROWS_AS(direct_surprisal(item("d", "a b", {{"a", 0}}), 3, m, Correction::raw),
                  ScoringError);
}

TEST_CASE("single-token target keeps its logprob") {
  TokenScoring s{"m", "x yz", {Token{"x", {0, 1}, -0.7, false, {}},
                               Token{" yz", {1, 4}, -1.25, false, {}}}, {}};
  const auto span = find_minimal_span(s, {2, 4});
  CHECK(word_surprisal(s, span, Correction::raw) == 1.25);
}

TEST_CASE("one backend call per item for direct scoring") {
  CountingBackend counting;
  const auto recs = direct_surprisals(item("a", "the cat sat on the mat", {{"cat", 0}, {"mat", 0}}),
                                      counting, Correction::raw);
  CHECK(counting.calls == 1);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].target_index == 0);
  CHECK(recs[1].target_index == 1);
}

TEST_CASE("boundary-corrected surprisal") {
  // Pieces: "The" " arre" "sted" " water"; boundary masses per position.
  TokenScoring s{"m", "The arrested water",
                 {Token{"<s>", {0, 0}, 0.0, true, {}},
                  Token{"The", {0, 3}, -2.0, false, 0.9},
                  Token{" arre", {3, 8}, -3.0, false, 0.6},
                  Token{"sted", {8, 12}, -0.5, false, 0.2},
                  Token{" water", {12, 18}, -1.0, false, 0.7}},
                 0.95};
  const auto span = find_minimal_span(s, {4, 12});
  CHECK(word_surprisal(s, span, Correction::raw) == 3.5);
  CHECK(word_surprisal(s, span, Correction::boundary_corrected) ==
        Approx(3.5 - std::log(0.7) + std::log(0.6)).epsilon(1e-15));

  const auto last = find_minimal_span(s, {13, 18});
  CHECK(word_surprisal(s, last, Correction::boundary_corrected) ==
        Approx(1.0 - std::log(0.95) + std::log(0.7)).epsilon(1e-15));

  TokenScoring bare = s;
  for (auto& t : bare.tokens) t.boundary_mass.reset();
  CHECK_THROWS_AS(word_surprisal(bare, span, Correction::boundary_corrected), ScoringError);

  // The mock provides no masses, so the corrected mode is rejected end to end.
  CHECK_THROWS_AS(direct_surprisal(item("a", "The arrested water", {{"arrested", 0}}), 0, mock(),
                                   Correction::boundary_corrected),
                  ScoringError);
}

TEST_CASE("render_cloze") {
  const auto it = item("a", "The arrested water", {{"arrested", 0}});
  const auto r = render_cloze(it, 0);
  CHECK(r.prompt == "Fill in the blank:\nThe ____ water\nThe arrested water");
  CHECK(r.template_id == "default");
  CHECK(utf8::substr(r.prompt, r.completion_target_range) == "arrested");
  CHECK(r.completion_target_range == utf8::CharRange{38, 46});

  const auto initial = render_cloze(item("b", "Struggled with it", {{"Struggled", 0}}), 0);
  CHECK(initial.prompt == "Fill in the blank:\n____ with it\nStruggled with it");

  const auto twice = item("c", "the cat saw the dog", {{"the", 0}, {"dog", 0}});
  const auto rc = render_cloze(twice, 0);
  CHECK(rc.prompt == "Fill in the blank:\n____ cat saw the dog\nthe cat saw the dog");
  CHECK(utf8::substr(rc.prompt, rc.completion_target_range) == "the");
  CHECK(rc.completion_target_range.start == rc.completion_start);

  ClozeTemplate reversed{"rev", "{completion} <- {masked}", "[MASK]"};
  const auto rr = render_cloze(it, 0, reversed);
  CHECK(rr.prompt == "The arrested water <- The [MASK] water");
  CHECK(utf8::substr(rr.prompt, rr.completion_target_range) == "arrested");

  CHECK_THROWS_AS(render_cloze(it, 0, ClozeTemplate{"x", "{masked} only", "_"}), ScoringError);
  CHECK_THROWS_AS(render_cloze(it, 0, ClozeTemplate{"x", "{completion} only", "_"}),
                  ScoringError);
  CHECK_THROWS_AS(
      render_cloze(it, 0, ClozeTemplate{"x", "{masked} {completion} {completion}", "_"}),
      ScoringError);
}

TEST_CASE("cloze completion copy is byte-identical to the sentence") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    const auto c = fuzz::make_case(rng);
    SentenceItem it;
    it.id = "f";
    it.sentence = c.scoring.text;
    for (std::size_t w = 0; w < c.words.size(); ++w) {
      it.targets.push_back({c.surfaces[w], c.words[w], std::nullopt, NoveltyLabel::novel, {}});
    }
    const std::size_t t = rng() % it.targets.size();
    const auto r = render_cloze(it, t);
    const auto offsets = utf8::byte_offsets(r.prompt);
    REQUIRE(r.prompt.substr(offsets[r.completion_start]) == it.sentence);
    REQUIRE(utf8::substr(r.prompt, r.completion_target_range) == it.targets[t].surface);
  }
}

TEST_CASE("cloze surprisal equals direct under the context-free mock") {
  const auto m = mock();
  const auto it = item("a", "‘ Tell him I must fill the quota. ’", {{"Tell", 0}, {"fill", 0}, {"quota", 0}});
  for (std::size_t t = 0; t < it.targets.size(); ++t) {
    const auto d = direct_surprisal(it, t, m, Correction::raw);
    const auto c = cloze_surprisal(it, t, m, ClozeTemplate{}, Correction::raw);
    CHECK(c.method == Method::cloze);
    CHECK(c.surprisal == d.surprisal);
  }
  CHECK(cloze_surprisal(item("b", "hi there", {{"hi", 0}}), 0, m, ClozeTemplate{},
                        Correction::raw)
            .surprisal == Approx(kLn100));
}

TEST_CASE("raw word surprisal is a difference of cumulative surprisals") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    const auto c = fuzz::make_case(rng);
    std::vector<double> cumulative{0.0};
    for (const auto& t : c.scoring.tokens) cumulative.push_back(cumulative.back() - t.logprob);
    for (const auto& w : c.words) {
      const auto span = find_minimal_span(c.scoring, w);
      const double s = word_surprisal(c.scoring, span, Correction::raw);
      REQUIRE(s >= 0.0);
      REQUIRE(s == Approx(cumulative[span.last + 1] - cumulative[span.first]).epsilon(1e-12));
    }
  }
}

TEST_CASE("perplexity") {
  const auto m = mock();
  const std::vector<SentenceItem> items = {item("a", "The arrested water", {{"water", 0}}),
                                           item("b", "Another quite long sentence here", {{"here", 0}})};
  const auto rep = corpus_perplexity("All", items, m);
  CHECK(rep.token_count == 5 + 8);
  CHECK(rep.perplexity == Approx(100.0).epsilon(1e-14));
  CHECK(std::abs(std::log(rep.perplexity) - rep.mean_token_surprisal) <= 1e-12);

  TokenScoring one{"m", "x", {Token{"<s>", {0, 0}, 0.0, true, {}},
                              Token{"x", {0, 1}, -std::log(5.0), false, {}}}, {}};
  CHECK(perplexity_from_scorings("one", {one}).perplexity == Approx(5.0).epsilon(1e-14));

  // Token-weighted: (ln 2 + 3 ln 8) / 4 = 2.5 ln 2, so perplexity 2^2.5. A
  // sentence-weighted mean would give 2 ln 2, perplexity 4.
  TokenScoring a{"m", "a", {Token{"a", {0, 1}, -std::log(2.0), false, {}}}, {}};
  TokenScoring b{"m", "b c d", {Token{"b", {0, 1}, -std::log(8.0), false, {}},
                                Token{" c", {1, 3}, -std::log(8.0), false, {}},
                                Token{" d", {3, 5}, -std::log(8.0), false, {}}}, {}};
  const auto weighted = perplexity_from_scorings("two", {a, b});
  CHECK(weighted.perplexity == Approx(std::pow(2.0, 2.5)).epsilon(1e-13));
  CHECK(weighted.perplexity != Approx(4.0));

  CHECK_THROWS_AS(corpus_perplexity("none", {}, m), ScoringError);
}

TEST_CASE("scoring errors carry the item id") {
  TokenScoring broken{"m", "ab cd", {Token{"ab", {0, 2}, -1.0, false, {}}}, {}};
  const FixedBackend fixed(broken);
  SentenceItem it;
  it.id = "item-42";
  it.sentence = "ab cd";
  it.targets.push_back({"cd", {3, 5}, std::nullopt, NoveltyLabel::novel, {}});
  try {
    direct_surprisal(it, 0, fixed, Correction::raw);
    FAIL("expected an alignment failure");
  } catch (const ScoringError& e) {
    CHECK(std::string(e.what()).find("item-42") != std::string::npos);
  }
}
