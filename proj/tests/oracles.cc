#include "oracles.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <unistd.h>

namespace oracle {

std::map<std::string, std::set<std::pair<linkgate::EditKind, size_t>>> distance_one_edits(
    const std::string& label, const std::string& alphabet) {
  using linkgate::EditKind;
  std::map<std::string, std::set<std::pair<EditKind, size_t>>> out;
  auto add = [&](std::string s, EditKind k, size_t pos) {
    if (s != label) out[s].insert({k, pos});
  };
  for (size_t i = 0; i < label.size(); ++i) {
    std::string s = label;
    s.erase(i, 1);
    add(s, EditKind::kDeletion, i);
  }
  for (size_t i = 0; i <= label.size(); ++i)
    for (char c : alphabet) {
      std::string s = label;
      s.insert(s.begin() + static_cast<long>(i), c);
      add(s, EditKind::kAddition, i);
    }
  for (size_t i = 0; i < label.size(); ++i)
    for (char c : alphabet) {
      if (c == label[i]) continue;
      std::string s = label;
      s[i] = c;
      add(s, EditKind::kSubstitution, i);
    }
  for (size_t i = 0; i + 1 < label.size(); ++i) {
    std::string s = label;
    std::swap(s[i], s[i + 1]);
    add(s, EditKind::kTransposition, i);
  }
  return out;
}

size_t osa_distance(const std::string& a, const std::string& b) {
  std::vector<std::vector<size_t>> d(a.size() + 1, std::vector<size_t>(b.size() + 1));
  for (size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (size_t i = 1; i <= a.size(); ++i)
    for (size_t j = 1; j <= b.size(); ++j) {
      size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost});
      if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1])
        d[i][j] = std::min(d[i][j], d[i - 2][j - 2] + 1);
    }
  return d[a.size()][b.size()];
}

std::string normalize(const std::string& raw) {
  size_t b = 0, e = raw.size();
  while (b < e && std::isspace(static_cast<unsigned char>(raw[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(raw[e - 1]))) --e;
  std::string s;
  for (size_t i = b; i < e; ++i) s += static_cast<char>(std::tolower(static_cast<unsigned char>(raw[i])));
  // Only a leading RFC 3986 scheme counts.
  if (auto p = s.find("://"); p != std::string::npos && p > 0 && std::isalpha(static_cast<unsigned char>(s[0])) &&
                              std::all_of(s.begin(), s.begin() + p, [](char c) {
                                return std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.';
                              }))
    s = s.substr(p + 3);
  while (!s.empty() && s.back() == '/') s.pop_back();
  if (s.rfind("www.", 0) == 0) s = s.substr(4);
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

bool within_sigma(double observed, double p, size_t n, double k) {
  return std::fabs(observed - p) <= k * std::sqrt(p * (1 - p) / static_cast<double>(n));
}

std::vector<GoldenRow> golden_rows(const linkgate::Corpus& corpus) {
  std::vector<GoldenRow> rows;
  for (const auto& s : corpus.services) {
    rows.push_back({s.id, s.legit_url, linkgate::Pattern::kNone, s.brand});
    for (const auto& [p, url] : s.phishing_urls) rows.push_back({s.id, url, p, s.brand});
  }
  return rows;
}

std::string data_path(const std::string& name) { return std::string(LINKGATE_DATA_DIR) + "/" + name; }
std::string fixture_path(const std::string& name) { return std::string(LINKGATE_FIXTURE_DIR) + "/" + name; }

std::string temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("linkgate-test-" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  auto path = dir / name;
  std::filesystem::remove_all(path);
  return path.string();
}

}  // namespace oracle

#include <httplib.h>

#include <atomic>
#include <random>
#include <thread>

namespace oracle {


FuzzReport fuzz_gateway(const std::string& base, const linkgate::Allowlist& allowlist, size_t requests,
                        uint64_t seed, const std::function<std::vector<linkgate::SessionEvent>()>& events) {
  using linkgate::parse_url;
  FuzzReport report;
  std::mt19937_64 rng(seed);
  httplib::Client cli(base);
  cli.set_keep_alive(true);
  cli.set_tcp_nodelay(true);

  const std::vector<std::string> targets = {
      "paypal.com-login.com/myaccount/home", "https://drive.google-login.com/drive/x", "googie.com",
      "https://www.paypal.com/signin",       "intranet.futuracom.org/docs/2025",     "fed-ex.com/track?n=1",
      "secure-login.com/paypal.com/myaccount", "http://a.b.example-login.com/p#f",  "not a url",
      "javascript://x.com/alert",            "user@evil.com",                          "evil.com:8080/x",
      "b\xc3\xbc" "cher.de",                 "",                                       "https://intranet.futuracom.org.evil.com/x",
      "admin.internal.futuracom.org/invoice/314766"};
  const std::vector<std::string> answers = {"com-login.com", "paypal.com", "google-login.com", "googie.com",
                                            "google.com", "", "   ", "fed-ex.com", "secure-login.com",
                                            "example-login.com", "x", std::string(3000, 'a')};
  std::vector<std::string> sessions = {"deadbeef", "0123"};
  std::vector<std::pair<std::string, std::string>> tokens = {{"nope", ""}, {"", ""}};  // token, session
  std::vector<std::pair<std::string, std::string>> redirects;  // session, location

  for (size_t n = 0; n < requests; ++n) {
    ++report.requests;
    int op = static_cast<int>(rng() % 8);
    const std::string session = sessions[rng() % sessions.size()];
    httplib::Result res;
    std::string target, proceeded_session;
    switch (op) {
      case 0:
      case 1: {
        target = targets[rng() % targets.size()];
        std::string path = "/inspect?target=" + linkgate::url_encode(target);
        if (rng() % 4 == 0) path += "&kind=" + std::string(rng() % 2 ? "click" : "bogus");
        httplib::Headers h;
        if (rng() % 2) h.emplace("Cookie", "lg_session=" + session);
        res = cli.Get(path, h);
        break;
      }
      case 2:
        res = cli.Post("/session/" + session + "/answer",
                       httplib::Params{{"answer", answers[rng() % answers.size()]},
                                       {"elapsed_ms", std::to_string(rng() % 20000)}});
        break;
      case 3: res = cli.Post("/session/" + session + "/report"); break;
      case 4: res = cli.Post("/session/" + session + "/back"); break;
      case 5: res = cli.Post("/session/" + session + "/confirm"); break;
      case 6:
      case 7: {
        const auto& [token, sid] = tokens[rng() % tokens.size()];
        proceeded_session = sid;
        res = cli.Get("/proceed?token=" + token);
        break;
      }
    }
    if (!res) {
      report.violations.push_back("request failed: " + httplib::to_string(res.error()));
      continue;
    }
    if (res->status >= 500) ++report.server_errors;
    if (res->status == 200) {
      auto body = linkgate::Json::parse(res->body, nullptr, false);
      if (body.is_object()) {
        if (body.contains("session_id")) sessions.push_back(body["session_id"].get<std::string>());
        if (body.contains("proceed_token"))
          tokens.emplace_back(body["proceed_token"].get<std::string>(), body.value("session_id", ""));
      }
    }
    if (res->status == 302) {
      auto location = res->get_header_value("Location");
      if (op <= 1) {
        // Inspect only redirects allowlisted targets.
        linkgate::ParsedUrl url;
        try {
          url = parse_url(target);
        } catch (const linkgate::UrlError&) {
          report.violations.push_back("redirect for unparseable target " + target);
          continue;
        }
        if (!allowlist.allows(url)) report.violations.push_back("inspect redirected to " + location);
        ++report.allowlisted_redirects;
      } else {
        redirects.emplace_back(proceeded_session, location);
        ++report.redirects;
      }
    }
  }

  auto log = events();
  auto replayed = linkgate::replay_sessions(log);
  std::map<std::string, size_t> proceeded;
  for (const auto& e : log)
    if (e.kind == linkgate::EventKind::kProceedConfirmed) ++proceeded[e.session_id];
  std::map<std::string, size_t> redirected;
  for (const auto& [sid, location] : redirects) {
    ++redirected[sid];
    auto it = replayed.find(sid);
    if (it == replayed.end()) {
      report.violations.push_back("redirect without a session trail: " + location);
      continue;
    }
    const auto& rs = it->second;
    if (!rs.valid) report.violations.push_back("invalid trail for " + sid + ": " + rs.error);
    // The event before ProceedConfirmed must be a correct answer or a mistake page.
    bool solved_or_confirmed = false;
    for (size_t i = 1; i < rs.events.size(); ++i) {
      if (rs.events[i].kind != linkgate::EventKind::kProceedConfirmed) continue;
      const auto& prev = rs.events[i - 1];
      if (prev.kind == linkgate::EventKind::kMistakeShown ||
          (prev.kind == linkgate::EventKind::kAnswerSubmitted &&
           prev.payload.at("result").value("outcome", "") == "correct"))
        solved_or_confirmed = true;
    }
    if (!solved_or_confirmed) report.violations.push_back("redirect without solve/confirm: " + location);
    const auto& clicked = rs.events.front().payload;
    auto target = parse_url(clicked.value("target", ""));
    if (parse_url(location).host() != target.host())
      report.violations.push_back("redirect to " + location + " for target " + target.to_string());
  }
  for (const auto& [sid, n] : redirected)
    if (proceeded[sid] != n || n > 1)
      report.violations.push_back("session " + sid + " redirected " + std::to_string(n) + " times");
  return report;
}

size_t concurrent_proceed(const std::string& base, const std::string& proceed_url, size_t n) {
  std::atomic<size_t> redirects{0};
  std::atomic<size_t> ready{0};
  std::vector<std::thread> threads;
  for (size_t i = 0; i < n; ++i)
    threads.emplace_back([&] {
      httplib::Client cli(base);
      ++ready;
      while (ready.load() < n) std::this_thread::yield();
      auto res = cli.Get(proceed_url);
      if (res && res->status == 302) ++redirects;
    });
  for (auto& t : threads) t.join();
  return redirects;
}

}  // namespace oracle
