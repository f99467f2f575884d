#pragma once

// HTTP API under /v1 over a SessionStore and a set of loaded models.
//
//   GET  /v1/models
//   POST /v1/sessions                      {model?, prompt | prompt_tokens, sampler?, seed?, max_steps?}
//   GET  /v1/sessions/{id}
//   POST /v1/sessions/{id}/interventions   {position, replacement | replacement_tokens, mode?, fresh_seed?, diff?}
//   GET  /v1/sessions/{id}/interventions
//
// Errors are {"code", "message"} with 404 (unknown session or model), 422
// (invalid request or intervention) and 503 (provider unreachable).

#include <cftoken/edit_distance.hpp>
#include <cftoken/remote_provider.hpp>
#include <cftoken/store.hpp>

#include "httplib.h"

#include <nlohmann/json.hpp>

#include <map>
#include <memory>
#include <string>

namespace cftoken {

struct LoadedModel {
  std::shared_ptr<const DistributionProvider> provider;
  Tokenizer tokenizer;
};

class ModelRegistry {
 public:
  void add(std::shared_ptr<const DistributionProvider> provider, Tokenizer tok) {
    auto id = provider->model_id();
    if (!models_.emplace(id, LoadedModel{std::move(provider), tok}).second)
      throw DomainError("model '" + id + "' registered twice");
  }
  const LoadedModel* find(const std::string& id) const {
    auto it = models_.find(id);
    return it == models_.end() ? nullptr : &it->second;
  }
  const std::map<std::string, LoadedModel>& all() const { return models_; }

 private:
  std::map<std::string, LoadedModel> models_;
};

struct ServiceOptions {
  std::size_t default_max_steps = 64;
  std::size_t max_steps_limit = 4096;
};

class Service {
 public:
  struct Reply {
    int status = 200;
    nlohmann::ordered_json body;
  };

  Service(ModelRegistry models, SessionStore& store, ServiceOptions opts = {})
      : models_(std::move(models)), store_(store), opts_(opts) {
    if (models_.all().empty()) throw DomainError("service: no models loaded");
    routes();
  }

  httplib::Server& server() { return server_; }

  bool listen(const std::string& host, int port) { return server_.listen(host, port); }
  void stop() { server_.stop(); }

  // Handlers, reachable without a socket.

  Reply list_models() const {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& [id, m] : models_.all())
      arr.push_back({{"id", id},
                     {"tokenizer", to_string(m.tokenizer.kind())},
                     {"vocabulary_size", m.provider->vocabulary().size()},
                     {"context_limit", m.provider->context_limit()}});
    return {200, {{"models", arr}}};
  }

  Reply create_session(const std::string& body) {
    return guarded([&] {
      const auto j = parse_body(body);
      const auto& model = resolve_model(j);
      const auto& vocab = model.provider->vocabulary();
      TokenSequence prompt;
      if (j.contains("prompt_tokens")) prompt = j["prompt_tokens"].get<TokenSequence>();
      else prompt = model.tokenizer.encode(j.value("prompt", std::string()), vocab);
      const auto sampler = j.contains("sampler") ? sampler_from_json(j["sampler"]) : SamplerConfig::gumbel(1.0);
      const auto seed = j.value("seed", std::uint64_t{0});
      const auto max_steps = j.value("max_steps", opts_.default_max_steps);
      if (max_steps < 1 || max_steps > opts_.max_steps_limit)
        throw DomainError("max_steps must lie in 1.." + std::to_string(opts_.max_steps_limit));
      const auto s = generate(*model.provider, std::move(prompt), sampler, seed, max_steps);
      const auto id = store_.put(s);
      return Reply{201, session_view(id, s, model)};
    });
  }

  Reply get_session(const std::string& id) const {
    return guarded([&] {
      const auto s = store_.get(id);
      return Reply{200, session_view(id, s, model_for(s))};
    });
  }

  Reply create_intervention(const std::string& id, const std::string& body) {
    return guarded([&] {
      const auto s = store_.get(id);
      const auto& model = model_for(s);
      const auto j = parse_body(body);
      if (!j.contains("position")) throw DomainError("missing 'position'");
      const auto position = j["position"].get<std::size_t>();
      TokenSequence repl;
      if (j.contains("replacement_tokens")) repl = j["replacement_tokens"].get<TokenSequence>();
      else if (j.contains("replacement")) repl = model.tokenizer.encode(j["replacement"].get<std::string>(),
                                                                        model.provider->vocabulary());
      else throw DomainError("missing 'replacement' or 'replacement_tokens'");
      const auto mode = parse_mode(j.value("mode", std::string("counterfactual")));
      const auto diff = j.value("diff", std::string("positional"));
      if (diff != "positional" && diff != "alignment") throw DomainError("diff must be positional or alignment");

      InterventionEntry e;
      e.mode = mode;
      e.position = position;
      e.intervention = Intervention::replace_span(s, position, repl);
      if (mode == RegenerationMode::interventional) {
        e.fresh_seed = j.contains("fresh_seed") ? j["fresh_seed"].get<std::uint64_t>()
                                                : derive_seed(s.noise.seed, 0xF5E5, store_.history_size(id) + 1);
      }
      const auto r = regenerate(*model.provider, s, e.intervention, mode, e.fresh_seed);
      e.output = r.output;
      e.prefix_length = r.prefix_length;
      e.truncated = r.truncated;
      const auto index = store_.append(id, e);
      auto view = entry_view(index, e, s, model, diff == "alignment");
      if (r.warning) view["warning"] = *r.warning;
      return Reply{201, view};
    });
  }

  Reply list_interventions(const std::string& id) const {
    return guarded([&] {
      const auto s = store_.get(id);
      const auto& model = model_for(s);
      auto arr = nlohmann::ordered_json::array();
      const auto hist = store_.history(id);
      for (std::size_t i = 0; i < hist.size(); ++i) arr.push_back(entry_view(i, hist[i], s, model, false));
      return Reply{200, {{"session", id}, {"interventions", arr}}};
    });
  }

 private:
  static nlohmann::ordered_json error(const std::string& code, const std::string& message) {
    return {{"code", code}, {"message", message}};
  }

  template <class Fn>
  static Reply guarded(Fn&& fn) {
    try {
      return fn();
    } catch (const NotFound& e) {
      return {404, error("not_found", e.what())};
    } catch (const TransportError& e) {
      return {503, error("provider_unavailable", e.what())};
    } catch (const ProtocolError& e) {
      return {503, error("provider_unavailable", e.what())};
    } catch (const DomainError& e) {
      return {422, error("invalid_request", e.what())};
    } catch (const nlohmann::json::exception& e) {
      return {422, error("invalid_request", e.what())};
    }
  }

  static nlohmann::json parse_body(const std::string& body) {
    if (body.empty()) return nlohmann::json::object();
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw DomainError("request body must be a JSON object");
    return j;
  }

  const LoadedModel& resolve_model(const nlohmann::json& j) const {
    if (!j.contains("model")) {
      if (models_.all().size() == 1) return models_.all().begin()->second;
      throw DomainError("several models are loaded; name one with 'model'");
    }
    const auto id = j["model"].get<std::string>();
    if (auto* m = models_.find(id)) return *m;
    throw NotFound("unknown model '" + id + "'");
  }

  const LoadedModel& model_for(const GenerationSession& s) const {
    if (auto* m = models_.find(s.model_id)) return *m;
    throw TransportError("model '" + s.model_id + "' is not loaded in this service", 0);
  }

  static nlohmann::ordered_json surfaces(const LoadedModel& m, std::span<const TokenId> toks) {
    auto arr = nlohmann::ordered_json::array();
    const auto& vocab = m.provider->vocabulary();
    for (TokenId t : toks) arr.push_back(vocab.token(t));
    return arr;
  }

  static nlohmann::ordered_json session_view(const std::string& id, const GenerationSession& s,
                                             const LoadedModel& m) {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["model_id"] = s.model_id;
    j["sampler"] = sampler_to_json(s.sampler);
    j["seed"] = s.noise.seed;
    j["max_steps"] = s.max_steps;
    j["prompt_tokens"] = s.prompt;
    j["output_tokens"] = s.output;
    j["tokens"] = surfaces(m, s.output);
    j["prompt_text"] = m.tokenizer.decode(s.prompt, m.provider->vocabulary());
    j["text"] = m.tokenizer.decode(s.output, m.provider->vocabulary());
    j["truncated"] = s.truncated;
    return j;
  }

  static nlohmann::ordered_json entry_view(std::size_t index, const InterventionEntry& e, const GenerationSession& s,
                                           const LoadedModel& m, bool alignment) {
    nlohmann::ordered_json j;
    j["index"] = index;
    j["mode"] = to_string(e.mode);
    if (e.mode == RegenerationMode::interventional) j["fresh_seed"] = e.fresh_seed;
    j["position"] = e.position;
    j["output_tokens"] = e.output;
    j["tokens"] = surfaces(m, e.output);
    j["text"] = m.tokenizer.decode(e.output, m.provider->vocabulary());
    j["prefix_length"] = e.prefix_length;
    j["truncated"] = e.truncated;
    const std::span<const TokenId> f(s.output), r(e.output);
    const auto flags = alignment ? alignment_diff(f, r) : positional_diff(f, r);
    auto arr = nlohmann::ordered_json::array();
    for (auto fl : flags) arr.push_back(to_string(fl));
    j["diff"] = std::move(arr);
    return j;
  }

  static void send(httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  }

  void routes() {
    server_.Get("/v1/models", [this](const httplib::Request&, httplib::Response& res) { send(res, list_models()); });
    server_.Post("/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, create_session(req.body));
    });
    server_.Get(R"(/v1/sessions/([0-9a-zA-Z]+))", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, get_session(req.matches[1]));
    });
    server_.Post(R"(/v1/sessions/([0-9a-zA-Z]+)/interventions)",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   send(res, create_intervention(req.matches[1], req.body));
                 });
    server_.Get(R"(/v1/sessions/([0-9a-zA-Z]+)/interventions)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  send(res, list_interventions(req.matches[1]));
                });
    server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      res.set_content(error(res.status == 404 ? "not_found" : "error", httplib::status_message(res.status)).dump(),
                      "application/json");
    });
    server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      res.status = 500;
      res.set_content(error("internal", what).dump(), "application/json");
    });
  }

  ModelRegistry models_;
  SessionStore& store_;
  ServiceOptions opts_;
  httplib::Server server_;
};

}  // namespace cftoken
