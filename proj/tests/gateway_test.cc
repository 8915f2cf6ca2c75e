#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <thread>

#include "linkgate/gateway.h"
#include "linkgate/http_server.h"
#include "oracles.h"

using namespace linkgate;

namespace {

std::vector<BrandProfile> test_brands() { return load_brands(oracle::data_path("brands.txt")); }

GatewayConfig test_config(uint64_t seed = 7) {
  GatewayConfig c;
  c.seed = seed;
  c.fsync = false;
  c.weights = {{TaskKind::kType, 1.0}};
  return c;
}

struct Fixture {
  std::shared_ptr<MemoryEventLog> log = std::make_shared<MemoryEventLog>();
  Gateway gateway;

  explicit Fixture(GatewayConfig config = test_config())
      : gateway(config, test_brands(), Allowlist::parse("intranet.futuracom.org\n"), log) {}

  GatewayResponse inspect(const std::string& target, std::optional<TaskKind> kind = std::nullopt,
                          std::optional<std::string> cookie = std::nullopt) {
    InspectRequest r;
    r.target = target;
    r.kind = kind;
    r.session_cookie = cookie;
    return gateway.handle_inspect(r);
  }
};

std::vector<EventKind> kinds(const std::vector<SessionEvent>& events) {
  std::vector<EventKind> out;
  for (const auto& e : events) out.push_back(e.kind);
  return out;
}

class ThrowingSink : public EventSink {
 public:
  void append(const SessionEvent&) override { throw StorageFailure("disk full"); }
};

}  // namespace

// ---- Link rewriting -------------------------------------------------------

TEST(RewriteLinks, AbsoluteLinksPointAtGateway) {
  auto r = rewrite_links(R"(<a href="https://paypal.com-login.com/x?a=1&b=2">pay</a>)", "https://gw");
  EXPECT_EQ(r.rewritten, 1u);
  EXPECT_EQ(r.html, R"(<a href="https://gw/inspect?target=)" +
                        url_encode("https://paypal.com-login.com/x?a=1&b=2") + R"(">pay</a>)");
  auto plain = rewrite_links(R"(<a href="http://a.com">x</a>)", "https://gw");
  EXPECT_EQ(plain.rewritten, 1u);
  EXPECT_NE(plain.html.find(url_encode("http://a.com")), std::string::npos);
}

TEST(RewriteLinks, NonHttpLinksAreByteIdentical) {
  const std::string html =
      R"(<p><a href="mailto:it@futuracom.org">mail</a> <a href="/relative/path">rel</a> )"
      R"(<a href="#top">top</a> <a href="ftp://files.example.com">ftp</a></p>)";
  auto r = rewrite_links(html, "https://gw");
  EXPECT_EQ(r.html, html);
  EXPECT_EQ(r.rewritten, 0u);
  EXPECT_EQ(r.skipped, 4u);
}

TEST(RewriteLinks, QuotingAndCase) {
  auto single = rewrite_links("<a href='https://a.com/x'>x</a>", "https://gw");
  EXPECT_EQ(single.html, "<a href='https://gw/inspect?target=" + url_encode("https://a.com/x") + "'>x</a>");
  auto bare = rewrite_links("<a href=https://a.com/x>x</a>", "https://gw");
  EXPECT_EQ(bare.rewritten, 1u);
  EXPECT_NE(bare.html.find("https://gw/inspect?target="), std::string::npos);
  auto upper = rewrite_links(R"(<A HREF="HTTPS://A.COM">x</A>)", "https://gw");
  EXPECT_EQ(upper.rewritten, 1u);
}

TEST(RewriteLinks, DataHrefIsNotALink) {
  const std::string html = R"(<div data-href="https://a.com">x</div>)";
  auto r = rewrite_links(html, "https://gw");
  EXPECT_EQ(r.html, html);
  EXPECT_EQ(r.rewritten, 0u);
}

TEST(UrlEncoding, RoundTrip) {
  for (std::string s : {"https://a.com/x?y=1&z=%20", "plain", "", "sp ace+plus", "\xc3\xa9t\xc3\xa9"}) {
    auto enc = url_encode(s);
    EXPECT_EQ(enc.find_first_of(" &?=/"), std::string::npos) << enc;
    EXPECT_EQ(url_decode(enc), s);
  }
  EXPECT_EQ(url_decode("a%2"), std::nullopt);
  EXPECT_EQ(url_decode("%zz"), std::nullopt);
}

// ---- Allowlist and config -------------------------------------------------

TEST(Allowlist, SubdomainChainEntries) {
  auto list = Allowlist::parse("# trusted\nintranet.futuracom.org\n\nexample.org  # whole domain\n");
  EXPECT_TRUE(list.allows(parse_url("intranet.futuracom.org/docs")));
  EXPECT_TRUE(list.allows(parse_url("a.b.intranet.futuracom.org")));
  EXPECT_FALSE(list.allows(parse_url("futuracom.org")));
  EXPECT_FALSE(list.allows(parse_url("admin.internal.futuracom.org")));
  EXPECT_FALSE(list.allows(parse_url("intranet.futuracom.org.evil.com")));
  EXPECT_FALSE(list.allows(parse_url("xintranet.futuracom.org")));
  EXPECT_TRUE(list.allows(parse_url("example.org")));
  EXPECT_TRUE(list.allows(parse_url("www.mail.example.org")));
  EXPECT_THROW(Allowlist::parse("example.org/path\n"), std::invalid_argument);
}

TEST(Config, ParsesEveryKey) {
  auto c = parse_config(
      "listen = 0.0.0.0:9090\nallowlist = allow.txt\nbrands = /abs/brands.txt\nstrings = s\nlocale = de\n"
      "event_log = log.jsonl\nweights = click:2, type:1\nfallback = type\npolicy = allow_subdomain_chains\n"
      "session_ttl = 60\nallow_kind_override = true\nfsync = no\nseed = 42\n",
      "/etc/lg");
  EXPECT_EQ(c.listen_host, "0.0.0.0");
  EXPECT_EQ(c.port, 9090);
  EXPECT_EQ(c.allowlist_path, "/etc/lg/allow.txt");
  EXPECT_EQ(c.brands_path, "/abs/brands.txt");
  EXPECT_EQ(c.strings_dir, "/etc/lg/s");
  EXPECT_EQ(c.event_log_path, "/etc/lg/log.jsonl");
  EXPECT_EQ(c.locale, "de");
  EXPECT_EQ(c.weights.size(), 2u);
  EXPECT_EQ(c.weights.at(TaskKind::kClick), 2.0);
  EXPECT_EQ(c.fallback, std::vector<TaskKind>{TaskKind::kType});
  EXPECT_EQ(c.policy.subdomain_tolerance, SubdomainTolerance::kAllowSubdomainChains);
  EXPECT_EQ(c.session_ttl, std::chrono::seconds(60));
  EXPECT_TRUE(c.allow_kind_override);
  EXPECT_FALSE(c.fsync);
  EXPECT_EQ(c.seed, 42u);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_config("colour = blue\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("listen = localhost:http\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("listen = localhost:70000\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("listen = localhost\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("weights = click:0\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("weights = scroll:1\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("policy = lenient\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("fsync = maybe\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("just a line\n"), std::invalid_argument);
}

TEST(Config, ShippedConfigLoads) {
  auto c = load_config(oracle::data_path("gateway.conf"));
  EXPECT_EQ(c.port, 8080);
  EXPECT_EQ(c.allowlist_path, oracle::data_path("allowlist.txt"));
  EXPECT_NO_THROW(Allowlist::load(c.allowlist_path));
}

// ---- Gateway state machine ------------------------------------------------

TEST(Gateway, AllowlistedTargetRedirectsWithoutEvents) {
  Fixture f;
  auto r = f.inspect("https://intranet.futuracom.org/docs?id=3");
  EXPECT_EQ(r.status, 302);
  EXPECT_EQ(r.location, "https://intranet.futuracom.org/docs?id=3");
  EXPECT_TRUE(r.session_id.empty());
  EXPECT_TRUE(f.log->events().empty());
}

TEST(Gateway, BadTargetsAreRejectedAndCounted) {
  Fixture f;
  for (std::string bad : {"", "not a url", "user@evil.com", "evil.com:8080", "b\xc3\xbc" "cher.de",
                          "javascript://alert.com/x"}) {
    auto r = f.inspect(bad);
    EXPECT_EQ(r.status, 400) << bad;
    EXPECT_EQ(r.body.value("error", ""), "bad_target");
  }
  EXPECT_EQ(f.gateway.bad_targets(), 6u);
  EXPECT_TRUE(f.log->events().empty());
  EXPECT_EQ(f.gateway.session_count(), 0u);
}

TEST(Gateway, CorrectAnswerProceedsOnce) {
  Fixture f;
  auto page = f.inspect("https://paypal.com-login.com/myaccount/summary");
  ASSERT_EQ(page.status, 200);
  ASSERT_FALSE(page.session_id.empty());
  EXPECT_EQ(page.body["task"]["kind"], "type");
  auto sid = page.session_id;

  auto answer = f.gateway.handle_answer(sid, " COM-LOGIN.com ", 9000);
  ASSERT_EQ(answer.status, 200);
  EXPECT_EQ(answer.body["outcome"], "correct");
  auto token = answer.body["proceed_token"].get<std::string>();

  auto go = f.gateway.handle_proceed(token);
  EXPECT_EQ(go.status, 302);
  EXPECT_EQ(go.location, "https://paypal.com-login.com/myaccount/summary");
  EXPECT_EQ(f.gateway.handle_proceed(token).status, 410);

  EXPECT_EQ(kinds(f.log->events_for(sid)),
            (std::vector<EventKind>{EventKind::kLinkClicked, EventKind::kTaskServed,
                                    EventKind::kAnswerSubmitted, EventKind::kProceedConfirmed}));
  auto replayed = replay_sessions(f.log->events());
  ASSERT_TRUE(replayed.at(sid).valid) << replayed.at(sid).error;
  EXPECT_EQ(replayed.at(sid).state, SessionState::kProceeded);
  // Terminal: no further answers.
  EXPECT_EQ(f.gateway.handle_answer(sid, "com-login.com", 1000).status, 409);
}

TEST(Gateway, BareDomainWithoutSchemeRedirectsToHttps) {
  Fixture f;
  auto page = f.inspect("googie.com/drive");
  auto answer = f.gateway.handle_answer(page.session_id, "googie.com", 9000);
  auto go = f.gateway.handle_proceed(answer.body["proceed_token"]);
  EXPECT_EQ(go.status, 302);
  EXPECT_EQ(go.location, "https://googie.com/drive");
}

TEST(Gateway, MismatchShowsMistakePageThenConfirm) {
  Fixture f;
  auto page = f.inspect("https://paypal.com-login.com/myaccount/summary");
  auto sid = page.session_id;
  auto answer = f.gateway.handle_answer(sid, "paypal.com", 9000);
  ASSERT_EQ(answer.status, 200);
  EXPECT_EQ(answer.body["outcome"], "mismatch");
  EXPECT_EQ(answer.body["result"]["mistake"], "impersonated_brand_domain");
  EXPECT_EQ(answer.body["state"], "mistake_shown");
  EXPECT_FALSE(answer.body.contains("proceed_token"));

  // A second answer on the mistake page is stale.
  EXPECT_EQ(f.gateway.handle_answer(sid, "com-login.com", 9000).status, 409);

  auto confirm = f.gateway.handle_confirm(sid);
  ASSERT_EQ(confirm.status, 200);
  auto go = f.gateway.handle_proceed(confirm.body["proceed_token"]);
  EXPECT_EQ(go.status, 302);
  EXPECT_EQ(kinds(f.log->events_for(sid)),
            (std::vector<EventKind>{EventKind::kLinkClicked, EventKind::kTaskServed,
                                    EventKind::kAnswerSubmitted, EventKind::kMistakeShown,
                                    EventKind::kProceedConfirmed}));
}

TEST(Gateway, ConfirmNeedsMistakePage) {
  Fixture f;
  auto page = f.inspect("https://paypal.com-login.com/x");
  EXPECT_EQ(f.gateway.handle_confirm(page.session_id).status, 409);
  f.gateway.handle_answer(page.session_id, "com-login.com", 9000);
  EXPECT_EQ(f.gateway.handle_confirm(page.session_id).status, 409);
}

TEST(Gateway, ReportIsTerminalAndRevokesToken) {
  Fixture f;
  auto page = f.inspect("https://paypal.com-login.com/x");
  auto sid = page.session_id;
  auto answer = f.gateway.handle_answer(sid, "paypal.com", 9000);
  auto token = f.gateway.handle_confirm(sid).body["proceed_token"].get<std::string>();
  EXPECT_EQ(f.gateway.handle_report(sid).status, 200);
  EXPECT_EQ(f.gateway.handle_proceed(token).status, 410);
  EXPECT_EQ(f.gateway.handle_report(sid).status, 409);
  EXPECT_EQ(f.gateway.handle_back(sid).status, 409);
  auto replayed = replay_sessions(f.log->events());
  EXPECT_TRUE(replayed.at(sid).valid);
  EXPECT_EQ(replayed.at(sid).state, SessionState::kReported);
}

TEST(Gateway, BackThenReclickStartsNewAttempt) {
  Fixture f;
  auto page = f.inspect("https://paypal.com-login.com/x");
  auto sid = page.session_id;
  EXPECT_EQ(f.gateway.handle_back(sid).status, 200);
  EXPECT_EQ(f.gateway.handle_answer(sid, "com-login.com", 9000).status, 409);

  auto again = f.inspect("https://paypal.com-login.com/x", std::nullopt, sid);
  ASSERT_EQ(again.status, 200);
  EXPECT_EQ(again.session_id, sid);
  EXPECT_EQ(again.body["attempt"], 2);
  EXPECT_EQ(f.gateway.handle_answer(sid, "com-login.com", 9000).body["outcome"], "correct");

  auto replayed = replay_sessions(f.log->events());
  ASSERT_TRUE(replayed.at(sid).valid) << replayed.at(sid).error;
  EXPECT_EQ(replayed.at(sid).attempt_count, 2);
}

TEST(Gateway, ReclickWithoutBackRecordsImplicitReturn) {
  Fixture f;
  auto page = f.inspect("https://paypal.com-login.com/x");
  auto again = f.inspect("https://paypal.com-login.com/x", std::nullopt, page.session_id);
  EXPECT_EQ(again.session_id, page.session_id);
  auto replayed = replay_sessions(f.log->events());
  EXPECT_TRUE(replayed.at(page.session_id).valid);
  EXPECT_EQ(replayed.at(page.session_id).attempt_count, 2);
}

TEST(Gateway, CookieForOtherTargetOrFinishedSessionStartsOver) {
  Fixture f;
  auto a = f.inspect("https://paypal.com-login.com/x");
  auto b = f.inspect("https://googie.com/x", std::nullopt, a.session_id);
  EXPECT_NE(b.session_id, a.session_id);
  f.gateway.handle_report(a.session_id);
  auto c = f.inspect("https://paypal.com-login.com/x", std::nullopt, a.session_id);
  EXPECT_NE(c.session_id, a.session_id);
  EXPECT_EQ(f.gateway.session_count(), 3u);
}

TEST(Gateway, ErrorsWithoutEvents) {
  Fixture f;
  EXPECT_EQ(f.gateway.handle_answer("feedface", "x.com", 1000).status, 404);
  EXPECT_EQ(f.gateway.handle_report("feedface").status, 404);
  EXPECT_EQ(f.gateway.handle_proceed("feedface").status, 410);
  auto page = f.inspect("https://paypal.com-login.com/x");
  size_t before = f.log->events().size();
  auto empty = f.gateway.handle_answer(page.session_id, "   ", 1000);
  EXPECT_EQ(empty.status, 422);
  EXPECT_EQ(empty.body["reprompt"], true);
  EXPECT_EQ(f.log->events().size(), before);
  // Still answerable after the re-prompt.
  EXPECT_EQ(f.gateway.handle_answer(page.session_id, "com-login.com", 9000).status, 200);
}

TEST(Gateway, KindOverrideOnlyWhenAllowed) {
  {
    Fixture f;
    auto page = f.inspect("https://paypal.com-login.com/x", TaskKind::kHighlight);
    EXPECT_EQ(page.body["task"]["kind"], "type");
  }
  auto config = test_config();
  config.allow_kind_override = true;
  Fixture f(config);
  EXPECT_EQ(f.inspect("https://paypal.com-login.com/x", TaskKind::kHighlight).body["task"]["kind"], "highlight");
  EXPECT_EQ(f.inspect("https://a.paypal.com-login.com/x", TaskKind::kPassiveConfirm).body["task"]["kind"],
            "passive");
  // Click needs subdomains to draw candidates from; falls back otherwise.
  EXPECT_EQ(f.inspect("https://googie.com/x", TaskKind::kClick).body["task"]["kind"], "highlight");
  EXPECT_EQ(f.inspect("https://drive.google.com-login.com/x", TaskKind::kClick).body["task"]["kind"], "click");
}

TEST(Gateway, WeightedDrawCoversConfiguredKinds) {
  auto config = test_config(11);
  config.weights = {{TaskKind::kClick, 1}, {TaskKind::kHighlight, 1}, {TaskKind::kType, 1}};
  Fixture f(config);
  std::map<std::string, int> seen;
  for (int i = 0; i < 300; ++i)
    ++seen[f.inspect("https://drive.google.com-login.com/x").body["task"]["kind"].get<std::string>()];
  EXPECT_EQ(seen.size(), 3u);
  for (auto& [k, n] : seen) EXPECT_GT(n, 50) << k;
}

TEST(Gateway, BaselineTasksAlwaysPass) {
  auto config = test_config();
  config.weights = {{TaskKind::kPassiveConfirm, 1}};
  Fixture f(config);
  auto page = f.inspect("https://paypal.com-login.com/x");
  EXPECT_EQ(f.gateway.handle_answer(page.session_id, "confirm", 3000).body["outcome"], "correct");
}

TEST(Gateway, StorageFailureFailsClosed) {
  Gateway g(test_config(), test_brands(), Allowlist{}, std::make_shared<ThrowingSink>());
  InspectRequest r;
  r.target = "https://paypal.com-login.com/x";
  auto page = g.handle_inspect(r);
  EXPECT_EQ(page.status, 503);
  EXPECT_EQ(page.body["error"], "storage_failure");
  EXPECT_TRUE(page.location.empty());
  EXPECT_EQ(g.session_count(), 0u);
}

namespace {

// Appends succeed until `fail` is set.
class SwitchSink : public EventSink {
 public:
  std::atomic<bool> fail{false};
  void append(const SessionEvent&) override {
    if (fail) throw StorageFailure("disk full");
  }
};

}  // namespace

TEST(Gateway, StorageFailureBeforeProceedKeepsTokenUnused) {
  auto sink = std::make_shared<SwitchSink>();
  Gateway g(test_config(), test_brands(), Allowlist{}, sink);
  InspectRequest r;
  r.target = "https://paypal.com-login.com/x";
  auto page = g.handle_inspect(r);
  auto answer = g.handle_answer(page.session_id, "com-login.com", 9000);
  sink->fail = true;
  auto go = g.handle_proceed(answer.body["proceed_token"]);
  EXPECT_EQ(go.status, 503);
  EXPECT_TRUE(go.location.empty());
}

TEST(Gateway, SessionsExpireAfterTtl) {
  auto config = test_config();
  config.session_ttl = std::chrono::seconds(60);
  Fixture f(config);
  auto now = std::chrono::steady_clock::now();
  f.gateway.set_clock([&] { return now; });
  auto page = f.inspect("https://paypal.com-login.com/x");
  auto token = f.gateway.handle_answer(page.session_id, "com-login.com", 9000).body["proceed_token"];
  now += std::chrono::seconds(30);
  EXPECT_EQ(f.gateway.expire_sessions(), 0u);
  now += std::chrono::seconds(31);
  EXPECT_EQ(f.gateway.expire_sessions(), 1u);
  EXPECT_EQ(f.gateway.session_count(), 0u);
  EXPECT_EQ(f.gateway.handle_proceed(token).status, 410);
  EXPECT_EQ(f.gateway.handle_report(page.session_id).status, 404);
}

TEST(Gateway, ServerElapsedUsesClock) {
  Fixture f;
  auto now = std::chrono::steady_clock::now();
  f.gateway.set_clock([&] { return now; });
  auto page = f.inspect("https://paypal.com-login.com/x");
  now += std::chrono::milliseconds(4321);
  f.gateway.handle_answer(page.session_id, "com-login.com", std::nullopt);
  for (const auto& e : f.log->events_for(page.session_id))
    if (e.kind == EventKind::kAnswerSubmitted) {
      EXPECT_EQ(e.payload["server_elapsed_ms"], 4321);
      EXPECT_TRUE(e.payload["elapsed_ms"].is_null());
    }
}

TEST(Gateway, TimestampsStrictlyIncrease) {
  Fixture f;
  for (int i = 0; i < 50; ++i) f.inspect("https://paypal.com-login.com/x");
  auto events = f.log->events();
  for (size_t i = 1; i < events.size(); ++i) EXPECT_LT(events[i - 1].timestamp_us, events[i].timestamp_us);
}

TEST(Gateway, ConcurrentProceedOnOneTokenRedirectsOnce) {
  Fixture f;
  auto page = f.inspect("https://paypal.com-login.com/x");
  auto token = f.gateway.handle_answer(page.session_id, "com-login.com", 9000).body["proceed_token"].get<std::string>();
  std::atomic<int> ok{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < 64; ++i)
    threads.emplace_back([&] {
      if (f.gateway.handle_proceed(token).status == 302) ++ok;
    });
  for (auto& t : threads) t.join();
  EXPECT_EQ(ok.load(), 1);
}

// ---- HTTP -----------------------------------------------------------------

namespace {

struct Server {
  std::shared_ptr<MemoryEventLog> log = std::make_shared<MemoryEventLog>();
  Gateway gateway;
  HttpGateway http;
  std::string base;

  Server()
      : gateway(test_config(), test_brands(), Allowlist::parse("intranet.futuracom.org"), log), http(gateway) {
    int port = http.bind("127.0.0.1", 0);
    base = "http://127.0.0.1:" + std::to_string(port);
    http.start();
  }
};

}  // namespace

TEST(HttpGateway, FullFlowWithCookie) {
  Server s;
  httplib::Client cli(s.base);
  ASSERT_EQ(cli.Get("/healthz")->status, 200);

  auto page = cli.Get("/inspect?target=" + url_encode("https://paypal.com-login.com/x?q=1") + "&participant=p1");
  ASSERT_TRUE(page);
  ASSERT_EQ(page->status, 200);
  EXPECT_NE(page->get_header_value("Set-Cookie").find("lg_session="), std::string::npos);
  auto body = Json::parse(page->body);
  auto sid = body["session_id"].get<std::string>();
  EXPECT_EQ(s.log->events_for(sid).front().payload["tags"]["participant"], "p1");

  auto status = cli.Get("/session/" + sid);
  EXPECT_EQ(Json::parse(status->body)["state"], "served");

  auto wrong = cli.Post("/session/" + sid + "/answer", R"({"answer":"paypal.com","elapsed_ms":5000})",
                        "application/json");
  ASSERT_EQ(wrong->status, 200);
  EXPECT_EQ(Json::parse(wrong->body)["outcome"], "mismatch");
  auto confirm = cli.Post("/session/" + sid + "/confirm");
  auto token = Json::parse(confirm->body)["proceed_token"].get<std::string>();
  auto go = cli.Get("/proceed?token=" + token);
  ASSERT_EQ(go->status, 302);
  EXPECT_EQ(go->get_header_value("Location"), "https://paypal.com-login.com/x?q=1");
  EXPECT_EQ(go->get_header_value("Cache-Control"), "no-store");
  EXPECT_EQ(cli.Get("/proceed?token=" + token)->status, 410);
}

TEST(HttpGateway, RequestErrors) {
  Server s;
  httplib::Client cli(s.base);
  EXPECT_EQ(cli.Get("/inspect?target=not%20a%20url")->status, 400);
  EXPECT_EQ(cli.Get("/inspect?target=a.com&kind=scroll")->status, 400);
  auto allow = cli.Get("/inspect?target=intranet.futuracom.org%2Fdocs");
  EXPECT_EQ(allow->status, 302);
  EXPECT_EQ(allow->get_header_value("Location"), "https://intranet.futuracom.org/docs");
  EXPECT_EQ(cli.Post("/session/abc/answer", httplib::Params{{"answer", "x.com"}})->status, 404);
  auto page = Json::parse(cli.Get("/inspect?target=googie.com")->body);
  auto sid = page["session_id"].get<std::string>();
  EXPECT_EQ(cli.Post("/session/" + sid + "/answer")->status, 400);
  EXPECT_EQ(cli.Post("/session/" + sid + "/answer", httplib::Params{{"answer", "googie.com"}, {"elapsed_ms", "soon"}})
                ->status,
            400);
  EXPECT_EQ(cli.Post("/session/" + sid + "/answer", httplib::Params{{"answer", ""}})->status, 422);
}

TEST(HttpGateway, ConcurrentTokenReplayRedirectsOnce) {
  Server s;
  httplib::Client cli(s.base);
  auto page = Json::parse(cli.Get("/inspect?target=googie.com")->body);
  auto answer = cli.Post("/session/" + page["session_id"].get<std::string>() + "/answer",
                         httplib::Params{{"answer", "googie.com"}});
  auto url = Json::parse(answer->body)["proceed_url"].get<std::string>();
  EXPECT_EQ(oracle::concurrent_proceed(s.base, url, 100), 1u);
}

TEST(HttpGateway, FuzzNeverLeaksRedirects) {
  Server s;
  auto report = oracle::fuzz_gateway(s.base, Allowlist::parse("intranet.futuracom.org"), 2000, 99,
                                     [&] { return s.log->events(); });
  for (const auto& v : report.violations) ADD_FAILURE() << v;
  EXPECT_EQ(report.server_errors, 0u);
  EXPECT_GT(report.redirects, 0u);
  EXPECT_GT(report.allowlisted_redirects, 0u);
}
