#pragma once

#include <cftoken/engine.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace testing_support {

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline std::string data_path(const std::string& name) { return std::string(CFTOKEN_DATA_DIR) + "/" + name; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("cftoken_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

/// Vocabulary {</s>, a, b, c, ...} with eos at 0.
inline cftoken::Vocabulary letters(std::size_t n) {
  std::vector<std::string> toks{"</s>"};
  for (std::size_t i = 0; i < n; ++i) toks.push_back(std::string(1, static_cast<char>('a' + i)));
  return cftoken::Vocabulary(toks, 0);
}

/// Word bigram over the bundled corpus, trained once per process.
inline const cftoken::NGramModel& corpus_bigram() {
  static const auto m =
      cftoken::train_ngram_from_text(read_file(data_path("corpus.txt")), 2, 0.01, cftoken::TokenizerKind::word);
  return m;
}

inline std::vector<cftoken::TokenSequence> corpus_prompts(std::size_t limit) {
  const auto& m = corpus_bigram();
  std::istringstream is(read_file(data_path("prompts.txt")));
  std::vector<cftoken::TokenSequence> out;
  for (std::string line; out.size() < limit && std::getline(is, line);)
    if (!line.empty()) out.push_back(m.tokenizer().encode(line, m.vocabulary()));
  return out;
}

}  // namespace testing_support
