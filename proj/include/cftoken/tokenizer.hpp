#pragma once

// Character- and whitespace-level tokenization for the bundled backends.
//
// Character mode: each non-empty corpus line is one document; tokens are
// UTF-8 code points. Word mode: documents are separated by blank lines, words
// by spaces, and a line break inside a document becomes the "\n" token.

#include <cftoken/core_types.hpp>

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace cftoken {

enum class TokenizerKind { character, word };

inline constexpr const char* kEosSurface = "</s>";
inline constexpr const char* kNewlineSurface = "\n";

inline std::string to_string(TokenizerKind k) { return k == TokenizerKind::character ? "char" : "word"; }

inline TokenizerKind parse_tokenizer_kind(std::string_view s) {
  if (s == "char" || s == "character") return TokenizerKind::character;
  if (s == "word") return TokenizerKind::word;
  throw DomainError("unknown tokenizer kind '" + std::string(s) + "'");
}

/// Text of a rendered sequence plus the [begin, end) byte range of each token.
struct RenderedText {
  std::string text;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
};

class Tokenizer {
 public:
  explicit Tokenizer(TokenizerKind kind = TokenizerKind::character) : kind_(kind) {}

  TokenizerKind kind() const { return kind_; }

  /// Token surfaces of one document, without the end-of-sequence marker.
  std::vector<std::string> split(std::string_view text) const {
    std::vector<std::string> out;
    if (kind_ == TokenizerKind::character) {
      for (std::size_t i = 0; i < text.size();) {
        std::size_t len = utf8_length(static_cast<unsigned char>(text[i]));
        len = std::min(len, text.size() - i);
        out.emplace_back(text.substr(i, len));
        i += len;
      }
      return out;
    }
    std::string current;
    auto flush = [&] {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    };
    for (char c : text) {
      if (c == ' ' || c == '\t' || c == '\r') {
        flush();
      } else if (c == '\n') {
        flush();
        out.emplace_back(kNewlineSurface);
      } else {
        current += c;
      }
    }
    flush();
    return out;
  }

  /// Splits a corpus into documents (see header comment).
  std::vector<std::vector<std::string>> documents(std::string_view corpus) const {
    std::vector<std::vector<std::string>> docs;
    std::vector<std::string_view> lines;
    for (std::size_t pos = 0; pos <= corpus.size();) {
      auto nl = corpus.find('\n', pos);
      if (nl == std::string_view::npos) nl = corpus.size();
      auto line = corpus.substr(pos, nl - pos);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      lines.push_back(line);
      pos = nl + 1;
    }
    if (kind_ == TokenizerKind::character) {
      for (auto line : lines)
        if (!line.empty()) docs.push_back(split(line));
      return docs;
    }
    std::string block;
    auto flush = [&] {
      if (!block.empty()) docs.push_back(split(block));
      block.clear();
    };
    for (auto line : lines) {
      if (line.find_first_not_of(" \t") == std::string_view::npos) {
        flush();
        continue;
      }
      if (!block.empty()) block += '\n';
      block += line;
    }
    flush();
    return docs;
  }

  TokenSequence encode(std::string_view text, const Vocabulary& vocab) const {
    TokenSequence out;
    for (const auto& s : split(text)) out.push_back(vocab.id_of(s));
    return out;
  }

  RenderedText render(std::span<const TokenId> tokens, const Vocabulary& vocab) const {
    RenderedText r;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const auto& s = tokens[i] == vocab.eos() ? std::string() : vocab.token(tokens[i]);
      if (kind_ == TokenizerKind::word && i > 0 && s != kNewlineSurface && !r.text.empty() &&
          r.text.back() != '\n' && !s.empty())
        r.text += ' ';
      std::size_t begin = r.text.size();
      r.text += s;
      r.spans.emplace_back(begin, r.text.size());
    }
    return r;
  }

  std::string decode(std::span<const TokenId> tokens, const Vocabulary& vocab) const {
    return render(tokens, vocab).text;
  }

 private:
  static std::size_t utf8_length(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xE) return 3;
    if ((lead >> 3) == 0x1E) return 4;
    return 1;
  }

  TokenizerKind kind_;
};

/// Vocabulary over every token in the documents: eos first, the rest in byte order.
inline Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs) {
  std::set<std::string> distinct;
  for (const auto& d : docs) distinct.insert(d.begin(), d.end());
  distinct.erase(kEosSurface);
  std::vector<std::string> tokens{kEosSurface};
  tokens.insert(tokens.end(), distinct.begin(), distinct.end());
  return Vocabulary(std::move(tokens), 0);
}

}  // namespace cftoken
