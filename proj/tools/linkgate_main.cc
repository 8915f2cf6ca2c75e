// linkgate command line: analysis, the inspection gateway and the study harness.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "linkgate/gateway.h"
#include "linkgate/http_server.h"
#include "linkgate/impersonation.h"
#include "linkgate/serialization.h"
#include "linkgate/study_harness.h"
#include "linkgate/task_engine.h"
#include "linkgate/url_model.h"

using namespace linkgate;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::string default_path(const char* name) { return std::string(LINKGATE_DATA_DIR) + "/" + name; }

std::vector<BrandProfile> brands_from(const std::string& path) {
  return load_brands(path.empty() ? default_path("brands.txt") : path);
}

void print(const Json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out);
  f << j.dump(2) << "\n";
}

Json analyze(const std::string& target, const std::vector<BrandProfile>& brands) {
  auto url = parse_url(target);
  Json subdomains = url.subdomains;
  return {{"url", url.to_string()},
          {"host", url.host()},
          {"subdomains", subdomains},
          {"registrable_domain", url.registrable_domain},
          {"public_suffix", url.public_suffix},
          {"path", url.path},
          {"segments", to_json(render_segments(url))},
          {"verdict", to_json(classify(url, brands))}};
}

int serve(const std::string& config_path, std::optional<int> port) {
  auto config = load_config(config_path);
  if (port) config.port = *port;
  auto gateway = Gateway::from_config(config);
  HttpGateway http(*gateway);
  int bound = http.bind(config.listen_host, config.port);
  if (bound < 0) throw std::runtime_error("cannot bind " + config.listen_host + ":" + std::to_string(config.port));

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    http.stop();
  });
  waiter.detach();

  std::cerr << "linkgate: listening on " << config.listen_host << ":" << bound << ", log "
            << config.event_log_path << "\n";
  http.listen();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"linkgate: link inspection gateway and analysis tools"};
  app.require_subcommand(1);

  std::string target, brands_path, out, lure = std::string(kDefaultLure), brand_token, kind_name;
  uint64_t seed = 0;

  auto* analyze_cmd = app.add_subcommand("analyze", "Parse a URL and classify its impersonation pattern");
  analyze_cmd->add_option("--target", target, "URL to analyze")->required();
  analyze_cmd->add_option("--brands", brands_path, "Brand profile file");
  analyze_cmd->add_option("--out", out, "Write JSON here instead of stdout");

  auto* variants_cmd = app.add_subcommand("variants", "Generate phishing variants of a legitimate URL");
  variants_cmd->add_option("--target", target, "Legitimate URL")->required();
  variants_cmd->add_option("--brand", brand_token, "Brand token from the brand file")->required();
  variants_cmd->add_option("--brands", brands_path, "Brand profile file");
  variants_cmd->add_option("--lure", lure, "Lure keyword");
  variants_cmd->add_option("--out", out, "Write JSON here instead of stdout");

  auto* task_cmd = app.add_subcommand("task", "Build a task instance");
  task_cmd->add_option("--target", target, "URL")->required();
  task_cmd->add_option("--kind", kind_name, "click|highlight|type|passive|active")->required();
  task_cmd->add_option("--seed", seed, "Task seed")->required();

  std::string config_path;
  std::optional<int> port;
  auto* serve_cmd = app.add_subcommand("serve", "Run the inspection gateway");
  serve_cmd->add_option("--config", config_path, "Gateway config file (default: $LINKGATE_CONFIG)");
  serve_cmd->add_option("--port", port, "Override the configured port");

  std::string corpus_path, model_path;
  size_t n = 100, threads = 8;
  std::vector<std::string> group_names;
  auto* sim_cmd = app.add_subcommand("simulate", "Run simulated participants through in-process gateways");
  sim_cmd->add_option("--corpus", corpus_path, "Email corpus JSON");
  sim_cmd->add_option("--model", model_path, "Behavior model JSON");
  sim_cmd->add_option("--n", n, "Participants per group")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--seed", seed, "Simulation seed");
  sim_cmd->add_option("--groups", group_names, "Groups to run (default: all in the model)")->delimiter(',');
  sim_cmd->add_option("--threads", threads, "Agent threads")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--out", out, "Output directory for logs and report.json")->required();

  std::vector<std::string> logs;
  std::string mailbox_path;
  bool json_out = false;
  auto* report_cmd = app.add_subcommand("report", "Aggregate event logs into study metrics");
  report_cmd->add_option("--log", logs, "Gateway event log (repeatable)")->required();
  report_cmd->add_option("--mailbox", mailbox_path, "Mailbox log");
  report_cmd->add_option("--out", out, "Write the JSON report here");
  report_cmd->add_flag("--json", json_out, "Print JSON instead of the summary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*analyze_cmd) {
      print(analyze(target, brands_from(brands_path)), out);
    } else if (*variants_cmd) {
      auto brands = brands_from(brands_path);
      auto it = std::find_if(brands.begin(), brands.end(), [&](const BrandProfile& b) { return b.token == brand_token; });
      if (it == brands.end()) {
        std::cerr << "linkgate: unknown brand " << brand_token << "\n";
        return kExitUsage;
      }
      auto set = generate_variants(parse_url(target), *it, lure);
      Json variants = Json::object();
      for (const auto& [pattern, url] : set.variants) variants[std::string(to_string(pattern))] = url.to_string();
      print({{"legit", parse_url(target).to_string()},
             {"brand", it->token},
             {"variants", variants},
             {"squat_unavailable", set.squat_unavailable}},
            out);
    } else if (*task_cmd) {
      auto kind = task_kind_from_string(kind_name);
      if (!kind) {
        std::cerr << "linkgate: unknown task kind " << kind_name << "\n";
        return kExitUsage;
      }
      std::cout << serialize_task(build_task(parse_url(target), *kind, seed)) << "\n";
    } else if (*serve_cmd) {
      if (config_path.empty()) {
        const char* env = std::getenv("LINKGATE_CONFIG");
        if (!env || !*env) {
          std::cerr << "linkgate: no config given (--config or LINKGATE_CONFIG)\n";
          return kExitUsage;
        }
        config_path = env;
      }
      return serve(config_path, port);
    } else if (*sim_cmd) {
      auto corpus = Corpus::load(corpus_path.empty() ? default_path("corpus.json") : corpus_path);
      auto model = BehaviorModel::load(model_path.empty() ? default_path("models/table1.json") : model_path);
      StudyOptions options;
      options.participants_per_group = n;
      options.seed = seed ? seed : 1;
      options.out_dir = out;
      options.threads = threads;
      for (const auto& name : group_names) {
        auto g = group_from_string(name);
        if (!g) {
          std::cerr << "linkgate: unknown group " << name << "\n";
          return kExitUsage;
        }
        options.groups.push_back(*g);
      }
      auto result = run_study(corpus, model, options);
      print(result.to_json(), out + "/report.json");
      std::cout << result.report.summary();
    } else if (*report_cmd) {
      std::vector<SessionEvent> events;
      size_t corrupt = 0;
      for (const auto& path : logs) {
        auto contents = read_event_log(path);
        corrupt += contents.corrupt_lines;
        events.insert(events.end(), contents.events.begin(), contents.events.end());
      }
      std::vector<MailboxRecord> mailbox;
      if (!mailbox_path.empty()) {
        auto contents = read_mailbox_log(mailbox_path);
        corrupt += contents.corrupt_lines;
        mailbox = std::move(contents.records);
      }
      auto report = aggregate(events, mailbox, corrupt);
      if (!out.empty()) print(report.to_json(), out);
      if (json_out)
        std::cout << report.to_json().dump(2) << "\n";
      else
        std::cout << report.summary();
    }
  } catch (const UrlError& e) {
    std::cerr << "linkgate: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::invalid_argument& e) {
    std::cerr << "linkgate: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "linkgate: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
