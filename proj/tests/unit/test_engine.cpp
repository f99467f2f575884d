#include <cftoken/engine.hpp>
#include <cftoken/experiment.hpp>

#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"

using namespace cftoken;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// a -> b -> c -> eos, everything else uniform
LookupTableProvider chain() {
  LookupTableProvider p(testing_support::letters(4), 1, std::vector<double>(5, 0.0));
  p.set_row({1}, p.point_mass_row(2));
  p.set_row({2}, p.point_mass_row(3));
  p.set_row({3}, p.point_mass_row(0));
  p.set_row({4}, p.point_mass_row(3));
  return p;
}

const NGramModel& bigram() {
  static const NGramModel m = train_ngram_from_text(
      "abc cab bca\nacb bac\n\nthe cat ate a bat\n\nabba cabba\n\nbe a cat\n", 2, 0.1);
  return m;
}

std::vector<SamplerConfig> all_samplers() {
  return {SamplerConfig::gumbel(0.9), SamplerConfig::top_k(3, 1.1), SamplerConfig::top_p(0.8, 0.7),
          SamplerConfig::inverse_transform(1.0)};
}

}  // namespace

TEST(Generate, PointMassFollowsTheForcedPath) {
  auto p = chain();
  for (std::uint64_t seed : {0ull, 1ull, 999ull}) {
    auto s = generate(p, {1}, SamplerConfig::gumbel(), seed, 10);
    EXPECT_EQ(s.output, (TokenSequence{2, 3, 0}));
    EXPECT_FALSE(s.truncated);
    EXPECT_EQ(s.noise.step_count, 3u);
    EXPECT_EQ(s.fingerprints.size(), 3u);
  }
}

TEST(Generate, Deterministic) {
  for (const auto& cfg : all_samplers()) {
    auto a = generate(bigram(), {1}, cfg, 77, 30);
    auto b = generate(bigram(), {1}, cfg, 77, 30);
    EXPECT_EQ(a, b);
  }
}

TEST(Generate, TruncatesAtMaxSteps) {
  LookupTableProvider p(testing_support::letters(2), 1, {kNegInf, 0.0, 0.0});
  auto s = generate(p, {1}, SamplerConfig::gumbel(), 3, 7);
  EXPECT_EQ(s.output.size(), 7u);
  EXPECT_TRUE(s.truncated);
}

TEST(Generate, Errors) {
  auto p = chain();
  EXPECT_THROW(generate(p, {1}, SamplerConfig::gumbel(), 1, 0), DomainError);
  EXPECT_THROW(generate(p, {1, 0}, SamplerConfig::gumbel(), 1, 5), DomainError);
  EXPECT_THROW(generate(p, {12}, SamplerConfig::gumbel(), 1, 5), DomainError);
  EXPECT_THROW(generate(p, {1}, SamplerConfig::top_p(2.0), 1, 5), DomainError);
}

TEST(Generate, FirstStepFrequenciesMatchTheModel) {
  const auto& m = bigram();
  const auto cfg = SamplerConfig::gumbel(1.0);
  const std::size_t seeds = 10000;
  for (TokenId first = 1; first < m.vocabulary().size(); ++first) {
    const TokenSequence prompt{first};
    const auto d = prepare_distribution(m.next_logits(prompt), cfg);
    std::vector<double> freq(d.size(), 0.0);
    for (std::uint64_t seed = 0; seed < seeds; ++seed) freq[generate(m, prompt, cfg, seed, 1).output[0]] += 1;
    for (std::size_t t = 0; t < d.size(); ++t) EXPECT_NEAR(freq[t] / seeds, d[t], 0.05);
  }
}

TEST(Counterfactual, NullInterventionReproducesEverySampler) {
  for (const auto& cfg : all_samplers()) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      auto s = generate(bigram(), {2, 3}, cfg, seed, 25);
      auto rep = verify_replay(bigram(), s);
      EXPECT_TRUE(rep.identical) << to_string(cfg.kind) << " seed " << seed;
      for (std::size_t i = 0; i <= s.output.size(); ++i)
        EXPECT_EQ(regenerate_counterfactual(bigram(), s, Intervention::identity(s, i)).output, s.output);
    }
  }
}

TEST(Counterfactual, PointMassSubstitutionFollowsTheNewPath) {
  auto p = chain();
  auto s = generate(p, {1}, SamplerConfig::gumbel(), 4, 10);
  auto r = regenerate_counterfactual(p, s, Intervention::replace_token(s, 1, 4));
  EXPECT_EQ(r.output, (TokenSequence{4, 3, 0}));
  EXPECT_EQ(r.prefix_length, 1u);
  auto r2 = regenerate_interventional(p, s, Intervention::replace_token(s, 1, 4), 1234);
  EXPECT_EQ(r2.output, r.output);
}

TEST(Counterfactual, OddsShiftKeepsTheFactualToken) {
  // prompt c; step 1 forced to d; after d the next token is a/b at 0.6/0.4,
  // after the replacement e it is 0.7/0.3
  auto v = testing_support::letters(5);
  LookupTableProvider p(v, 1, std::vector<double>(6, 0.0));
  p.set_row({3}, p.point_mass_row(4));
  std::vector<double> factual(6, kNegInf), shifted(6, kNegInf);
  factual[1] = std::log(0.6), factual[2] = std::log(0.4);
  shifted[1] = std::log(0.7), shifted[2] = std::log(0.3);
  p.set_row({4}, factual);
  p.set_row({5}, shifted);
  p.set_row({1}, p.point_mass_row(0));
  p.set_row({2}, p.point_mass_row(0));
  std::size_t same = 0, sessions = 10000, a_count = 0;
  for (std::uint64_t seed = 0; seed < sessions; ++seed) {
    auto s = generate(p, {3}, SamplerConfig::gumbel(), seed, 5);
    auto r = regenerate_counterfactual(p, s, Intervention::replace_token(s, 1, 5));
    if (s.output[1] == 1) {
      ++a_count;
      if (r.output[1] == 1) ++same;
    }
  }
  EXPECT_EQ(same, a_count);
  EXPECT_NEAR(double(a_count) / sessions, 0.6, 0.02);
}

TEST(Counterfactual, PrefixIsPreserved) {
  auto s = generate(bigram(), {1}, SamplerConfig::gumbel(), 8, 20);
  ASSERT_GE(s.output.size(), 3u);
  const TokenSequence repl{5, 6};
  auto iv = Intervention::replace_span(s, 2, repl);
  for (auto mode : {RegenerationMode::counterfactual, RegenerationMode::interventional}) {
    auto r = regenerate(bigram(), s, iv, mode, 99);
    ASSERT_GE(r.output.size(), 3u);
    EXPECT_EQ(r.output[0], s.output[0]);
    EXPECT_EQ(r.output[1], 5u);
    EXPECT_EQ(r.output[2], 6u);
    EXPECT_EQ(r.prefix_length, 3u);
  }
}

TEST(Counterfactual, NoiseIndexingUnderLengthChanges) {
  auto s = generate(bigram(), {1}, SamplerConfig::gumbel(), 8, 20);
  ASSERT_GE(s.output.size(), 2u);
  auto iv = Intervention::replace_span(s, 2, TokenSequence{5, 6, 7});
  auto by_step = regenerate_counterfactual(bigram(), s, iv);
  if (!by_step.noise_steps.empty()) EXPECT_EQ(by_step.noise_steps.front(), 3u);
  RegenerationOptions opts;
  opts.indexing = NoiseIndexing::prefix_length;
  auto by_length = regenerate_counterfactual(bigram(), s, iv, opts);
  if (!by_length.noise_steps.empty()) EXPECT_EQ(by_length.noise_steps.front(), 5u);
  auto deletion = regenerate_counterfactual(bigram(), s, Intervention::replace_span(s, 2, TokenSequence{}));
  if (!deletion.noise_steps.empty()) EXPECT_EQ(deletion.noise_steps.front(), 3u);
  EXPECT_EQ(deletion.prefix_length, 1u);
}

TEST(Counterfactual, UnchangedDistributionGivesUnchangedToken) {
  // bigram: whenever the counterfactual previous token matches the factual
  // one, d'_j = d_j and Gumbel-Max must pick the factual token again
  const auto cfg = SamplerConfig::gumbel(1.0);
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    auto s = generate(bigram(), {1}, cfg, seed, 30);
    if (s.output.size() < 2) continue;
    const std::size_t pos = 1 + seed % s.output.size();
    const TokenId repl = static_cast<TokenId>(1 + (s.output[pos - 1] % (bigram().vocabulary().size() - 1)));
    auto r = regenerate_counterfactual(bigram(), s, Intervention::replace_token(s, pos, repl));
    for (std::size_t j = pos; j < std::min(r.output.size(), s.output.size()); ++j) {
      if (r.output[j - 1] == s.output[j - 1]) {
        ++checked;
        EXPECT_EQ(r.output[j], s.output[j]);
      }
    }
  }
  EXPECT_GT(checked, 100u);
}

TEST(Interventional, FreshSeedDeterminismAndWarning) {
  auto s = generate(bigram(), {1}, SamplerConfig::gumbel(), 8, 20);
  auto iv = Intervention::replace_token(s, 1, 2);
  auto a = regenerate_interventional(bigram(), s, iv, 555);
  auto b = regenerate_interventional(bigram(), s, iv, 555);
  EXPECT_EQ(a.output, b.output);
  EXPECT_FALSE(a.warning);
  auto same_seed = regenerate_interventional(bigram(), s, iv, s.noise.seed);
  ASSERT_TRUE(same_seed.warning);
  EXPECT_EQ(same_seed.output, regenerate_counterfactual(bigram(), s, iv).output);
}

TEST(Intervention, Validation) {
  auto s = generate(chain(), {1}, SamplerConfig::gumbel(), 1, 10);
  EXPECT_THROW(Intervention::identity(s, 4), DomainError);
  EXPECT_THROW(Intervention::replace_token(s, 0, 1), DomainError);
  EXPECT_THROW(Intervention::replace_token(s, 4, 1), DomainError);
  Intervention bad{9, s.prompt, {}};
  EXPECT_THROW(regenerate_counterfactual(chain(), s, bad), DomainError);
  Intervention eos_prompt{0, {1, 0}, {}};
  EXPECT_THROW(regenerate_counterfactual(chain(), s, eos_prompt), DomainError);
  LookupTableProvider other(testing_support::letters(4), 1, std::vector<double>(5, 0.0), "other");
  EXPECT_THROW(regenerate_counterfactual(other, s, Intervention::identity(s, 0)), DomainError);
}

TEST(Intervention, PromptReplacementRegeneratesEverything) {
  auto p = chain();
  auto s = generate(p, {1}, SamplerConfig::gumbel(), 1, 10);
  auto r = regenerate_counterfactual(p, s, Intervention::replace_prompt(s, {2}));
  EXPECT_EQ(r.output, (TokenSequence{3, 0}));
  EXPECT_EQ(r.prompt, (TokenSequence{2}));
}

TEST(Intervention, StoppingOnAnEosReplacement) {
  auto p = chain();
  auto s = generate(p, {1}, SamplerConfig::gumbel(), 1, 10);
  auto r = regenerate_counterfactual(p, s, Intervention::replace_token(s, 1, 0));
  EXPECT_EQ(r.output, (TokenSequence{0}));
  EXPECT_FALSE(r.truncated);
}

TEST(Replay, DetectsModelDrift) {
  auto s = generate(bigram(), {1}, SamplerConfig::gumbel(), 3, 20);
  auto drifted = train_ngram_from_text("abc cab bca\nacb bac\n\nthe cat ate a bat\n\nabba cabba\n\nbe a cat\n", 2, 0.3);
  auto rep = verify_replay(drifted, s);
  EXPECT_FALSE(rep.identical);
  ASSERT_TRUE(rep.first_fingerprint_mismatch);
  EXPECT_EQ(*rep.first_fingerprint_mismatch, 1u);
}

TEST(Replay, DetectsTamperedOutput) {
  auto s = generate(bigram(), {1}, SamplerConfig::gumbel(), 3, 20);
  ASSERT_GE(s.output.size(), 2u);
  s.output[1] = s.output[1] == 1 ? 2 : 1;
  auto rep = verify_replay(bigram(), s);
  EXPECT_FALSE(rep.identical);
  EXPECT_EQ(rep.first_divergence, std::optional<std::size_t>(1));
}

TEST(SessionJson, RoundTripAndFieldOrder) {
  for (const auto& cfg : all_samplers()) {
    auto s = generate(bigram(), {1, 2}, cfg, 0xDEADBEEFCAFEull, 15);
    const auto text = session_to_json(s).dump(2);
    EXPECT_EQ(text.find("\"version\""), 4u);
    EXPECT_EQ(session_from_json(nlohmann::json::parse(text)), s);
  }
}

TEST(SessionJson, Rejections) {
  auto j = nlohmann::json::parse(session_to_json(generate(chain(), {1}, SamplerConfig::gumbel(), 1, 5)).dump());
  auto bad = j;
  bad["version"] = 2;
  EXPECT_THROW(session_from_json(bad), DomainError);
  bad = j;
  bad["noise"]["step_count"] = 9;
  EXPECT_THROW(session_from_json(bad), DomainError);
  bad = j;
  bad["fingerprints"][0] = "xyz";
  EXPECT_THROW(session_from_json(bad), DomainError);
  bad = j;
  bad["sampler"]["kind"] = "beam";
  EXPECT_THROW(session_from_json(bad), DomainError);
}

TEST(InterventionJson, RoundTrip) {
  Intervention iv{3, {1, 2}, {4, 5, 6}};
  EXPECT_EQ(intervention_from_json(nlohmann::json::parse(intervention_to_json(iv).dump())), iv);
}
