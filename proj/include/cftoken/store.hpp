#pragma once

// On-disk session store.
//
//   <root>/sessions/<id>.json          write-once session file
//   <root>/interventions/<id>.jsonl    append-only, one result per line
//
// The id is a hash of the session file's bytes, so storing the same session
// twice is a no-op.

#include <cftoken/engine.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

namespace cftoken {

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Logged intervention: the request and what it produced.
struct InterventionEntry {
  Intervention intervention;
  RegenerationMode mode = RegenerationMode::counterfactual;
  std::uint64_t fresh_seed = 0;  // interventional only
  std::size_t position = 0;      // 1-based output position that was replaced, 0 for prompt edits
  TokenSequence output;
  std::size_t prefix_length = 0;
  bool truncated = false;

  friend bool operator==(const InterventionEntry&, const InterventionEntry&) = default;
};

inline nlohmann::ordered_json entry_to_json(const InterventionEntry& e) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(e.mode);
  if (e.mode == RegenerationMode::interventional) j["fresh_seed"] = hex64(e.fresh_seed);
  j["position"] = e.position;
  j["intervention"] = intervention_to_json(e.intervention);
  j["output"] = e.output;
  j["prefix_length"] = e.prefix_length;
  j["truncated"] = e.truncated;
  return j;
}

inline InterventionEntry entry_from_json(const nlohmann::json& j) {
  InterventionEntry e;
  e.mode = parse_mode(j.at("mode").get<std::string>());
  if (e.mode == RegenerationMode::interventional) e.fresh_seed = parse_hex64(j.at("fresh_seed").get<std::string>());
  e.position = j.at("position").get<std::size_t>();
  e.intervention = intervention_from_json(j.at("intervention"));
  e.output = j.at("output").get<TokenSequence>();
  e.prefix_length = j.at("prefix_length").get<std::size_t>();
  e.truncated = j.at("truncated").get<bool>();
  return e;
}

class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_ / "sessions");
    std::filesystem::create_directories(root_ / "interventions");
  }

  const std::filesystem::path& root() const { return root_; }

  static std::string content_id(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    return hex64(h);
  }

  /// Writes the session unless an identical file already exists.
  std::string put(const GenerationSession& s) {
    const std::string bytes = session_to_json(s).dump(2) + "\n";
    const std::string id = content_id(bytes);
    const auto path = session_path(id);
    std::lock_guard lock(lock_for(id));
    if (std::filesystem::exists(path)) {
      if (read_file(path) != bytes) throw StoreError("session id collision for " + id);
      return id;
    }
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream os(tmp, std::ios::binary);
      os << bytes;
      if (!os) throw StoreError("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
    return id;
  }

  bool contains(const std::string& id) const { return valid_id(id) && std::filesystem::exists(session_path(id)); }

  GenerationSession get(const std::string& id) const {
    if (!contains(id)) throw NotFound("unknown session '" + id + "'");
    return session_from_json(nlohmann::json::parse(read_file(session_path(id))));
  }

  std::vector<std::string> list() const {
    std::vector<std::string> ids;
    for (const auto& e : std::filesystem::directory_iterator(root_ / "sessions"))
      if (e.path().extension() == ".json") ids.push_back(e.path().stem().string());
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  /// Appends and returns the entry's 0-based index in the session's log.
  std::size_t append(const std::string& id, const InterventionEntry& e) {
    if (!contains(id)) throw NotFound("unknown session '" + id + "'");
    std::lock_guard lock(lock_for(id));
    const std::size_t index = count_lines(log_path(id));
    std::ofstream os(log_path(id), std::ios::app | std::ios::binary);
    os << entry_to_json(e).dump() << '\n';
    os.flush();
    if (!os) throw StoreError("cannot append to " + log_path(id).string());
    return index;
  }

  std::vector<InterventionEntry> history(const std::string& id) const {
    if (!contains(id)) throw NotFound("unknown session '" + id + "'");
    std::vector<InterventionEntry> out;
    std::ifstream is(log_path(id), std::ios::binary);
    for (std::string line; std::getline(is, line);)
      if (!line.empty()) out.push_back(entry_from_json(nlohmann::json::parse(line)));
    return out;
  }

  std::size_t history_size(const std::string& id) const {
    if (!contains(id)) throw NotFound("unknown session '" + id + "'");
    std::lock_guard lock(lock_for(id));
    return count_lines(log_path(id));
  }

 private:
  static bool valid_id(const std::string& id) {
    return id.size() == 16 && id.find_first_not_of("0123456789abcdef") == std::string::npos;
  }

  std::filesystem::path session_path(const std::string& id) const { return root_ / "sessions" / (id + ".json"); }
  std::filesystem::path log_path(const std::string& id) const { return root_ / "interventions" / (id + ".jsonl"); }

  static std::string read_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
  }

  static std::size_t count_lines(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::size_t n = 0;
    for (std::string line; std::getline(is, line);)
      if (!line.empty()) ++n;
    return n;
  }

  std::mutex& lock_for(const std::string& id) const {
    std::lock_guard lock(map_mu_);
    auto& m = locks_[id];
    if (!m) m = std::make_unique<std::mutex>();
    return *m;
  }

  std::filesystem::path root_;
  mutable std::mutex map_mu_;
  mutable std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

}  // namespace cftoken
