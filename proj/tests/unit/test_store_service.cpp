#include <cftoken/service.hpp>
#include <cftoken/store.hpp>

#include <gtest/gtest.h>

#include <thread>

#include "helpers.hpp"

using namespace cftoken;
using testing_support::TempDir;

namespace {

std::shared_ptr<const NGramModel> demo_model() {
  static const auto m = std::make_shared<const NGramModel>(
      train_ngram_from_text("the cat sat on the mat\n\nthe dog sat on the log\n\na cat and a dog\n", 3, 0.1));
  return m;
}

ModelRegistry registry() {
  ModelRegistry r;
  r.add(demo_model(), demo_model()->tokenizer());
  return r;
}

// Service on an ephemeral port for the lifetime of the object.
class Running {
 public:
  explicit Running(SessionStore& store) : service_(registry(), store) {
    port_ = service_.server().bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { service_.server().listen_after_bind(); });
    service_.server().wait_until_ready();
  }
  ~Running() {
    service_.stop();
    thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

 private:
  Service service_;
  int port_ = 0;
  std::thread thread_;
};

nlohmann::json body_of(const httplib::Result& r) { return nlohmann::json::parse(r->body); }

}  // namespace

TEST(Store, PutIsContentAddressedAndIdempotent) {
  TempDir dir("store");
  SessionStore store(dir.path());
  auto s = generate(*demo_model(), {1}, SamplerConfig::gumbel(), 4, 20);
  const auto id = store.put(s);
  EXPECT_EQ(id.size(), 16u);
  EXPECT_EQ(store.put(s), id);
  EXPECT_EQ(store.list(), std::vector<std::string>{id});
  EXPECT_EQ(store.get(id), s);
  auto other = generate(*demo_model(), {1}, SamplerConfig::gumbel(), 5, 20);
  EXPECT_NE(store.put(other), id);
}

TEST(Store, UnknownIdsAreNotFound) {
  TempDir dir("store");
  SessionStore store(dir.path());
  EXPECT_THROW(store.get("0123456789abcdef"), NotFound);
  EXPECT_THROW(store.get("../../etc/passwd"), NotFound);
  EXPECT_FALSE(store.contains("xyz"));
  EXPECT_THROW(store.history("0123456789abcdef"), NotFound);
}

TEST(Store, AppendOnlyHistory) {
  TempDir dir("store");
  SessionStore store(dir.path());
  auto s = generate(*demo_model(), {1}, SamplerConfig::gumbel(), 4, 20);
  const auto id = store.put(s);
  InterventionEntry a;
  a.intervention = Intervention::replace_token(s, 1, 2);
  a.position = 1;
  a.output = regenerate_counterfactual(*demo_model(), s, a.intervention).output;
  a.prefix_length = 1;
  InterventionEntry b = a;
  b.mode = RegenerationMode::interventional;
  b.fresh_seed = 0xFFFFFFFFFFFFFFFFull;
  EXPECT_EQ(store.append(id, a), 0u);
  EXPECT_EQ(store.append(id, b), 1u);
  EXPECT_EQ(store.history_size(id), 2u);
  auto h = store.history(id);
  ASSERT_EQ(h.size(), 2u);
  EXPECT_EQ(h[0], a);
  EXPECT_EQ(h[1], b);
}

TEST(Store, StoredSessionsReplay) {
  TempDir dir("store");
  SessionStore store(dir.path());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto id = store.put(generate(*demo_model(), {2}, SamplerConfig::top_p(0.9, 0.8), seed, 30));
    EXPECT_TRUE(verify_replay(*demo_model(), SessionStore(dir.path()).get(id)).identical);
  }
}

TEST(Store, ConcurrentAppendsKeepEveryEntry) {
  TempDir dir("store");
  SessionStore store(dir.path());
  auto s = generate(*demo_model(), {1}, SamplerConfig::gumbel(), 4, 20);
  const auto id = store.put(s);
  InterventionEntry e;
  e.intervention = Intervention::identity(s, 0);
  e.output = s.output;
  std::vector<std::thread> ts;
  for (int t = 0; t < 4; ++t)
    ts.emplace_back([&] {
      for (int i = 0; i < 25; ++i) store.append(id, e);
    });
  for (auto& t : ts) t.join();
  EXPECT_EQ(store.history(id).size(), 100u);
}

TEST(Service, HandlersWithoutSocket) {
  TempDir dir("svc");
  SessionStore store(dir.path());
  Service svc(registry(), store);
  auto models = svc.list_models();
  EXPECT_EQ(models.status, 200);
  EXPECT_EQ(models.body["models"][0]["id"], "ngram");
  auto created = svc.create_session(R"({"prompt": "the ", "seed": 3, "max_steps": 30})");
  ASSERT_EQ(created.status, 201) << created.body.dump();
  const std::string id = created.body["id"];
  EXPECT_EQ(svc.get_session(id).body, created.body);
}

TEST(Service, PostThenGetOverHttp) {
  TempDir dir("svc");
  SessionStore store(dir.path());
  Running run(store);
  auto cli = run.client();
  auto post = cli.Post("/v1/sessions", R"({"prompt": "the c", "seed": 9, "max_steps": 40,
                                           "sampler": {"kind": "gumbel_max", "tau": 0.8}})",
                       "application/json");
  ASSERT_TRUE(post);
  ASSERT_EQ(post->status, 201) << post->body;
  auto created = body_of(post);
  auto get = cli.Get(("/v1/sessions/" + created["id"].get<std::string>()).c_str());
  ASSERT_TRUE(get);
  EXPECT_EQ(get->status, 200);
  EXPECT_EQ(body_of(get)["output_tokens"], created["output_tokens"]);
  EXPECT_EQ(body_of(get)["tokens"], created["tokens"]);
  auto models = cli.Get("/v1/models");
  ASSERT_TRUE(models);
  EXPECT_EQ(models->status, 200);
}

TEST(Service, NullInterventionDiffIsAllSame) {
  TempDir dir("svc");
  SessionStore store(dir.path());
  Running run(store);
  auto cli = run.client();
  auto created = body_of(cli.Post("/v1/sessions", R"({"prompt": "the ", "seed": 1})", "application/json"));
  const std::string id = created["id"];
  const auto out = created["output_tokens"].get<TokenSequence>();
  ASSERT_GE(out.size(), 3u);
  nlohmann::json req{{"position", 2}, {"replacement_tokens", {out[1]}}};
  auto res = cli.Post(("/v1/sessions/" + id + "/interventions").c_str(), req.dump(), "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 201) << res->body;
  auto j = body_of(res);
  EXPECT_EQ(j["output_tokens"], created["output_tokens"]);
  for (const auto& f : j["diff"]) EXPECT_EQ(f, "same");
  auto hist = body_of(cli.Get(("/v1/sessions/" + id + "/interventions").c_str()));
  EXPECT_EQ(hist["interventions"].size(), 1u);
}

TEST(Service, DiffFlagsMarkChangedPositions) {
  TempDir dir("svc");
  SessionStore store(dir.path());
  Service svc(registry(), store);
  auto created = svc.create_session(R"({"prompt": "the ", "seed": 2, "max_steps": 40})");
  const std::string id = created.body["id"];
  const auto f = created.body["output_tokens"].get<TokenSequence>();
  auto res = svc.create_intervention(id, R"({"position": 1, "replacement": "m", "mode": "interventional"})");
  ASSERT_EQ(res.status, 201) << res.body.dump();
  const auto g = res.body["output_tokens"].get<TokenSequence>();
  const auto& diff = res.body["diff"];
  ASSERT_EQ(diff.size(), g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    EXPECT_EQ(diff[i] == "same", i < f.size() && f[i] == g[i]) << "position " << i;
  EXPECT_TRUE(res.body.contains("fresh_seed"));
}

TEST(Service, Errors) {
  TempDir dir("svc");
  SessionStore store(dir.path());
  Running run(store);
  auto cli = run.client();
  auto missing = cli.Get("/v1/sessions/0123456789abcdef");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(body_of(missing)["code"], "not_found");

  auto created = body_of(cli.Post("/v1/sessions", R"({"prompt": "the ", "seed": 1})", "application/json"));
  const std::string path = "/v1/sessions/" + created["id"].get<std::string>() + "/interventions";
  for (const char* bad : {R"({"position": 0, "replacement_tokens": [1]})", R"({"position": 999, "replacement": "a"})",
                          R"({"replacement": "a"})", R"({"position": 1})", R"({"position": 1, "replacement_tokens": [99999]})",
                          R"({"position": 1, "replacement": "a", "mode": "sideways"})", "not json", "[1, 2]"}) {
    auto r = cli.Post(path.c_str(), bad, "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 422) << bad << " -> " << r->body;
    EXPECT_EQ(body_of(r)["code"], "invalid_request");
  }
  auto bad_model = cli.Post("/v1/sessions", R"({"model": "gpt", "prompt": "a"})", "application/json");
  EXPECT_EQ(bad_model->status, 404);
  auto bad_steps = cli.Post("/v1/sessions", R"({"prompt": "a", "max_steps": 0})", "application/json");
  EXPECT_EQ(bad_steps->status, 422);
  auto unknown_route = cli.Get("/v1/nothing");
  EXPECT_EQ(unknown_route->status, 404);
}

TEST(Service, UnreachableProviderIs503) {
  TempDir dir("svc");
  SessionStore store(dir.path());
  auto remote = std::make_shared<RemoteProvider>("http://127.0.0.1:1", testing_support::letters(2), 4,
                                                 RemoteOptions{std::chrono::milliseconds(200), 0});
  ModelRegistry reg;
  reg.add(remote, Tokenizer(TokenizerKind::character));
  Service svc(std::move(reg), store);
  auto r = svc.create_session(R"({"prompt": "ab"})");
  EXPECT_EQ(r.status, 503);
  EXPECT_EQ(r.body["code"], "provider_unavailable");
}

TEST(Service, ByteIdenticalAcrossRestarts) {
  auto transcript = [] {
    TempDir dir("svc");
    SessionStore store(dir.path());
    Running run(store);
    auto cli = run.client();
    std::string all;
    auto created = cli.Post("/v1/sessions", R"({"prompt": "the d", "seed": 2024, "max_steps": 40})",
                            "application/json");
    all += created->body;
    const std::string path = "/v1/sessions/" + body_of(created)["id"].get<std::string>() + "/interventions";
    all += cli.Post(path.c_str(), R"({"position": 3, "replacement": "m"})", "application/json")->body;
    all += cli.Post(path.c_str(), R"({"position": 3, "replacement": "m", "mode": "interventional"})",
                    "application/json")->body;
    all += cli.Get(path.c_str())->body;
    return all;
  };
  const auto first = transcript();
  EXPECT_EQ(first, transcript());
  EXPECT_NE(first.find("\"diff\""), std::string::npos);
}
