#pragma once

// Synthetic census-style corpus with known conditional tables, used to check
// that the bias pipeline recovers effects whose sign is known in advance.
//
//   sex, race                 independent, uniform
//   occupation | sex          engineer/nurse 0.7/0.3 for male, 0.3/0.7 for female
//   income | occupation       three equally likely values per occupation
//     (direct variant: the three values also move by +-20000 with sex)
//   education | race          fixed table
//
// Every combination appears exactly in proportion to its probability.

#include <cftoken/bias.hpp>

#include <string>
#include <vector>

namespace cftoken {

enum class PlantedVariant { mediated, direct_edge };

inline std::string to_string(PlantedVariant v) { return v == PlantedVariant::mediated ? "mediated" : "direct"; }

inline PlantedVariant parse_planted_variant(std::string_view s) {
  if (s == "mediated") return PlantedVariant::mediated;
  if (s == "direct") return PlantedVariant::direct_edge;
  throw DomainError("unknown planted variant '" + std::string(s) + "'");
}

namespace planted {

// Long enough that an order-10 model sees a full context from the first step.
inline constexpr const char* kPrompt = "the following lines describe one synthetic person drawn from the census sample\n";

inline const std::vector<std::string> kSexes = {"male", "female"};
inline const std::vector<std::string> kRaces = {"white", "black", "asian"};
inline const std::vector<std::string> kOccupations = {"engineer", "nurse"};
inline const std::vector<std::string> kEducation = {"high school diploma", "bachelor's degree", "master's degree",
                                                    "phd"};

/// P(occupation | sex), tenths.
inline int occupation_weight(std::size_t sex, std::size_t occ) {
  static const int w[2][2] = {{7, 3}, {3, 7}};
  return w[sex][occ];
}

/// P(education | race), tenths.
inline int education_weight(std::size_t race, std::size_t edu) {
  static const int w[3][4] = {{3, 4, 2, 1}, {5, 3, 1, 1}, {2, 4, 2, 2}};
  return w[race][edu];
}

inline std::vector<int> income_values(PlantedVariant v, std::size_t sex, std::size_t occ) {
  const int base = occ == 0 ? 90000 : 50000;
  const int shift = v == PlantedVariant::direct_edge ? (sex == 0 ? 10000 : -10000) : 0;
  return {base - 10000 + shift, base + shift, base + 10000 + shift};
}

}  // namespace planted

inline AttributeSchema planted_schema() {
  std::vector<Attribute> a(5);
  a[0] = {"sex", AttributeKind::categorical, planted::kSexes};
  a[1] = {"race", AttributeKind::categorical, planted::kRaces};
  a[2] = {"occupation", AttributeKind::categorical, planted::kOccupations};
  a[2].outcome = true;
  a[3].name = "income";
  a[3].kind = AttributeKind::numeric;
  a[3].min = 0;
  a[3].max = 1e9;
  a[3].outcome = true;
  a[3].exclude_zero = true;
  a[4] = {"education", AttributeKind::categorical, planted::kEducation};
  a[4].outcome = true;
  a[4].scale = "education";
  return AttributeSchema(std::move(a), planted::kPrompt);
}

/// Records in word-tokenizer document form (blank-line separated), shuffled
/// deterministically by `seed`.
inline std::string planted_corpus(PlantedVariant variant, std::uint64_t seed = 7) {
  using namespace planted;
  std::vector<std::string> docs;
  for (std::size_t sx = 0; sx < kSexes.size(); ++sx)
    for (std::size_t rc = 0; rc < kRaces.size(); ++rc)
      for (std::size_t oc = 0; oc < kOccupations.size(); ++oc)
        for (int income : income_values(variant, sx, oc))
          for (std::size_t ed = 0; ed < kEducation.size(); ++ed) {
            const int copies = occupation_weight(sx, oc) * education_weight(rc, ed);
            std::string doc = std::string(kPrompt) + "sex: " + kSexes[sx] + "\nrace: " + kRaces[rc] +
                              "\noccupation: " + kOccupations[oc] + "\nincome: " + std::to_string(income) +
                              "\neducation: " + kEducation[ed];
            for (int c = 0; c < copies; ++c) docs.push_back(doc);
          }
  UniformStream rng(seed);
  for (std::size_t i = docs.size(); i > 1; --i) std::swap(docs[i - 1], docs[rng.below(i)]);
  std::string out;
  for (const auto& d : docs) out += d + "\n\n";
  return out;
}

}  // namespace cftoken
