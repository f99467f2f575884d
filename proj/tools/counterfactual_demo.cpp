// Trains a word bigram model on the bundled corpus, samples one sentence,
// swaps a word and shows the counterfactual and interventional rewrites.

#include <cftoken/experiment.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace cftoken;

namespace {

void show(const char* label, const Tokenizer& tok, const Vocabulary& v, std::span<const TokenId> factual,
          std::span<const TokenId> other) {
  const auto flags = positional_diff(factual, other);
  std::cout << label;
  for (std::size_t i = 0; i < other.size(); ++i) {
    if (other[i] == v.eos()) break;
    const bool changed = flags[i] == DiffFlag::changed;
    std::cout << ' ' << (changed ? "[" : "") << tok.decode(other.subspan(i, 1), v) << (changed ? "]" : "");
  }
  std::cout << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  const std::string path = argc > 1 ? argv[1] : CFTOKEN_DATA_DIR "/corpus.txt";
  std::ifstream is(path);
  if (!is) {
    std::cerr << "cannot open " << path << "\n";
    return 1;
  }
  std::stringstream ss;
  ss << is.rdbuf();
  const auto model = train_ngram_from_text(ss.str(), 2, 0.01, TokenizerKind::word);
  const Tokenizer tok(TokenizerKind::word);
  const auto& v = model.vocabulary();

  const auto prompt = tok.encode("gevo bapedu", v);
  const auto s = generate(model, prompt, SamplerConfig::gumbel(0.8), 2024, 30);
  const std::size_t pos = std::min<std::size_t>(4, s.output.size());
  const auto d = apply_temperature(model.next_logits(detail::concat(
                                       prompt, TokenSequence(s.output.begin(), s.output.begin() + pos - 1))),
                                   0.8);
  const TokenId eos[] = {v.eos()};
  const TokenId repl = sample_replacement_token(d, s.output[pos - 1], 99, eos);
  const auto iv = Intervention::replace_token(s, pos, repl);

  std::cout << "prompt: " << tok.decode(prompt, v) << "\n";
  std::cout << "replace '" << v.token(s.output[pos - 1]) << "' at position " << pos << " with '" << v.token(repl)
            << "'\n\n";
  show("factual:       ", tok, v, s.output, s.output);
  show("counterfactual:", tok, v, s.output, regenerate_counterfactual(model, s, iv).output);
  show("interventional:", tok, v, s.output, regenerate_interventional(model, s, iv, 7).output);
  std::cout << "\n[brackets] mark tokens that differ from the factual output at the same position\n";
  return 0;
}
