#include <cftoken/core_types.hpp>
#include <cftoken/experiment.hpp>
#include <cftoken/tokenizer.hpp>

#include <gtest/gtest.h>

#include <sstream>

#include "helpers.hpp"

using namespace cftoken;

namespace {

void expect_probs(const TokenDistribution& d, std::vector<double> want, double tol = 1e-12) {
  ASSERT_EQ(d.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(d[i], want[i], tol) << "index " << i;
}

TokenDistribution dist(std::vector<double> p) { return TokenDistribution::from_probs(std::move(p)); }

}  // namespace

TEST(Vocabulary, RejectsDuplicatesAndBadEos) {
  EXPECT_THROW(Vocabulary({"a", "a"}, 0), DomainError);
  EXPECT_THROW(Vocabulary({"a", "b"}, 2), DomainError);
  EXPECT_THROW(Vocabulary({}, 0), DomainError);
}

TEST(Vocabulary, EosOnlyAllowedLast) {
  auto v = testing_support::letters(3);
  EXPECT_NO_THROW(v.validate(TokenSequence{1, 2, 0}));
  EXPECT_THROW(v.validate(TokenSequence{1, 0, 2}), DomainError);
  EXPECT_THROW(v.validate(TokenSequence{1, 9}), DomainError);
  EXPECT_THROW(v.validate(TokenSequence{1, 2, 3}, 2), DomainError);
}

TEST(Vocabulary, FileRoundTripWithEscapes) {
  Vocabulary v({"</s>", "a", "\n", "tab\there", "back\\slash", " "}, 0);
  std::stringstream ss;
  save_vocabulary(v, ss);
  EXPECT_EQ(ss.str().substr(0, 6), "eos\t0\n");
  EXPECT_EQ(load_vocabulary(ss), v);
}

TEST(Vocabulary, LoadRejectsMissingHeader) {
  std::stringstream ss("a\nb\n");
  EXPECT_THROW(load_vocabulary(ss), DomainError);
}

TEST(Normalize, Examples) {
  expect_probs(normalize(std::vector<double>{2, 2}), {0.5, 0.5});
  expect_probs(normalize(std::vector<double>{1, 0, 0}), {1, 0, 0});
  expect_probs(normalize(std::vector<double>{1, 2, 1}), {0.25, 0.5, 0.25});
}

TEST(Normalize, Errors) {
  EXPECT_THROW(normalize(std::vector<double>{0, 0}), DomainError);
  EXPECT_THROW(normalize(std::vector<double>{1, -1}), DomainError);
  EXPECT_THROW(normalize(std::vector<double>{}), DomainError);
}

TEST(Temperature, Examples) {
  expect_probs(apply_temperature(std::vector<double>{4.2, 4.2, 4.2}, 0.3), {1.0 / 3, 1.0 / 3, 1.0 / 3});
  expect_probs(apply_temperature(std::vector<double>{1, 0}, 1.0), {0.7311, 0.2689}, 1e-4);
  EXPECT_GT(apply_temperature(std::vector<double>{1, 0}, 0.1)[0], 0.9999);
}

TEST(Temperature, Errors) {
  EXPECT_THROW(apply_temperature(std::vector<double>{1, 0}, 0.0), DomainError);
  EXPECT_THROW(apply_temperature(std::vector<double>{1, 0}, -1.0), DomainError);
  EXPECT_THROW(apply_temperature(std::vector<double>{1, std::nan("")}, 1.0), DomainError);
}

TEST(Temperature, StableForHugeLogitsAndNegInf) {
  const double inf = std::numeric_limits<double>::infinity();
  auto d = apply_temperature(std::vector<double>{1000, 999, -inf}, 1.0);
  EXPECT_NEAR(d[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_EQ(d[2], 0.0);
  EXPECT_THROW(apply_temperature(std::vector<double>{-inf, -inf}, 1.0), DomainError);
}

TEST(Temperature, PreservesArgmax) {
  UniformStream rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> logits(7);
    for (double& l : logits) l = 10 * rng.next() - 5;
    const auto want = std::max_element(logits.begin(), logits.end()) - logits.begin();
    for (double tau : {0.05, 0.5, 1.0, 3.0, 50.0})
      EXPECT_EQ(apply_temperature(logits, tau).argmax(), static_cast<TokenId>(want));
  }
}

TEST(TopK, Examples) {
  auto d = dist({0.5, 0.3, 0.2});
  expect_probs(restrict_top_k(d, 1), {1, 0, 0});
  EXPECT_EQ(restrict_top_k(d, 3), d);
  expect_probs(restrict_top_k(d, 2), {0.625, 0.375, 0}, 1e-12);
  EXPECT_THROW(restrict_top_k(d, 0), DomainError);
  EXPECT_THROW(restrict_top_k(d, 4), DomainError);
}

TEST(TopK, TiesGoToLowerIndex) {
  expect_probs(restrict_top_k(dist({0.25, 0.25, 0.25, 0.25}), 2), {0.5, 0.5, 0, 0});
  expect_probs(restrict_top_k(dist({0.2, 0.4, 0.4}), 1), {0, 1, 0});
}

TEST(TopP, Examples) {
  auto d = dist({0.5, 0.3, 0.2});
  EXPECT_EQ(restrict_top_p(d, 1.0), d);
  EXPECT_EQ(restrict_top_p(dist({0, 1, 0}), 0.3), dist({0, 1, 0}));
  expect_probs(restrict_top_p(d, 0.7), {0.625, 0.375, 0}, 1e-12);
  expect_probs(restrict_top_p(d, 0.5), {1, 0, 0});
  EXPECT_THROW(restrict_top_p(d, 0.0), DomainError);
  EXPECT_THROW(restrict_top_p(d, 1.5), DomainError);
}

TEST(Restriction, PropertiesOnRandomDistributions) {
  UniformStream rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t v = 2 + rng.below(12);
    const auto d = random_dirichlet(rng, v);
    const std::size_t k = 1 + rng.below(v);
    const double p = 0.05 + 0.95 * rng.next();
    for (const auto& r : {restrict_top_k(d, k), restrict_top_p(d, p)}) {
      double sum = 0.0;
      for (double x : r.probs()) {
        EXPECT_GE(x, 0.0);
        sum += x;
      }
      EXPECT_NEAR(sum, 1.0, kProbTolerance);
      // ratios among survivors are preserved
      std::vector<TokenId> kept;
      for (TokenId t = 0; t < v; ++t)
        if (r[t] > 0) kept.push_back(t);
      for (std::size_t i = 1; i < kept.size(); ++i)
        EXPECT_NEAR(r[kept[i]] / r[kept[0]], d[kept[i]] / d[kept[0]], 1e-9);
    }
    EXPECT_LE(restrict_top_k(d, k).support_size(), k);
    const auto rp = restrict_top_p(d, p);
    double factual_mass = 0.0;
    for (TokenId t = 0; t < v; ++t)
      if (rp[t] > 0) factual_mass += d[t];
    EXPECT_GE(factual_mass, p - kProbTolerance);
  }
}

TEST(Tokenizer, CharacterSplitsCodePoints) {
  Tokenizer tok(TokenizerKind::character);
  auto parts = tok.split("a\xC3\xA9z");
  ASSERT_EQ(parts.size(), 3u);
  EXPECT_EQ(parts[1], "\xC3\xA9");
}

TEST(Tokenizer, WordModeKeepsNewlines) {
  Tokenizer tok(TokenizerKind::word);
  auto parts = tok.split("sex: male\nrace:  white");
  EXPECT_EQ(parts, (std::vector<std::string>{"sex:", "male", "\n", "race:", "white"}));
}

TEST(Tokenizer, DocumentsByMode) {
  EXPECT_EQ(Tokenizer(TokenizerKind::character).documents("ab\n\ncd\n").size(), 2u);
  auto docs = Tokenizer(TokenizerKind::word).documents("a b\nc\n\n\nd e\n");
  ASSERT_EQ(docs.size(), 2u);
  EXPECT_EQ(docs[0], (std::vector<std::string>{"a", "b", "\n", "c"}));
}

TEST(Tokenizer, RenderRoundTripsAndReportsSpans) {
  Tokenizer tok(TokenizerKind::word);
  const std::string text = "sex: male\nincome: 50000";
  auto vocab = build_vocabulary(tok.documents(text));
  auto ids = tok.encode(text, vocab);
  auto r = tok.render(ids, vocab);
  EXPECT_EQ(r.text, text);
  ASSERT_EQ(r.spans.size(), ids.size());
  EXPECT_EQ(r.text.substr(r.spans[1].first, r.spans[1].second - r.spans[1].first), "male");
}

TEST(Tokenizer, BuildVocabularyPutsEosFirst) {
  auto v = build_vocabulary({{"b", "a"}, {"c"}});
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"</s>", "a", "b", "c"}));
  EXPECT_EQ(v.eos(), 0u);
}
