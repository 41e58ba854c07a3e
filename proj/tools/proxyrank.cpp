// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The proxyrank Authors

// proxyrank command-line tool. Exit codes: 0 success, 1 internal error,
// 2 invalid input or configuration.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "proxyrank/commands.hpp"

namespace {

namespace fs = std::filesystem;
using namespace proxyrank;

struct Flags {
  std::optional<fs::path> config;
  std::optional<fs::path> out;
  std::optional<unsigned> threads;
  std::optional<std::uint64_t> seed;
  bool permissive = false;

  std::optional<std::string> ranker;
  std::optional<int> k;
  std::optional<double> fraction;
  std::optional<int> n_seeds;

  std::vector<fs::path> inputs;
  std::optional<fs::path> features, scores, series, proxy_values, target_scores, compute;
};

fs::path need(const std::optional<fs::path>& cli, const std::optional<fs::path>& cfg, const char* name) {
  if (cli) return *cli;
  if (cfg) return *cfg;
  throw ValidationError(std::string("missing --") + name + " (or paths." + name + " in the config)");
}

void emit(const Flags& f, const std::string& text) {
  if (f.out) {
    detail::write_text(*f.out, text);
  } else {
    std::cout << text;
  }
}

Config load_config(const Flags& f) {
  Config cfg = f.config ? read_config(*f.config) : Config{};
  if (f.threads) {
    cfg.threads = *f.threads;
  } else if (const char* env = std::getenv("PROXYRANK_THREADS"); env && *env) {
    double v;
    if (!parse_double(env, v) || v < 1 || v != std::floor(v))
      throw ValidationError("PROXYRANK_THREADS must be a positive integer");
    cfg.threads = static_cast<unsigned>(v);
  }
  if (cfg.threads < 1) throw ValidationError("--threads must be >= 1");
  if (f.ranker) {
    auto r = parse_ranker_variant(*f.ranker);
    if (!r) throw ValidationError("--ranker must be univariate, sparse3, ranksvm_linear or ranksvm_rbf");
    cfg.ranker.variant = *r;
  }
  if (f.k) cfg.cv_k = *f.k;
  if (f.fraction) cfg.cv_fraction = *f.fraction;
  if (f.n_seeds) {
    if (*f.n_seeds < 1) throw ValidationError("--seeds must be >= 1");
    cfg.cv_seeds = CvConfig::default_seeds(*f.n_seeds);
  }
  if (f.seed) {
    const auto base = *f.seed;
    for (std::size_t i = 0; i < cfg.cv_seeds.size(); ++i) cfg.cv_seeds[i] = base + i;
  }
  return cfg;
}

void warn(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

ScoreTable load_scores(const fs::path& p) {
  auto r = read_scores(p);
  warn(r.warnings);
  return std::move(r.table);
}

int run(CLI::App& app, const Flags& f) {
  const Config cfg = load_config(f);
  const ReadMode mode = f.permissive ? ReadMode::permissive : ReadMode::fail_fast;
  if (app.got_subcommand("metrics")) {
    auto manifests = f.inputs.empty() ? cfg.manifests : f.inputs;
    auto res = cmd_metrics(manifests, cfg, mode);
    warn(res.warnings);
    emit(f, format_features(res.file));
  } else if (app.got_subcommand("cv")) {
    const auto features = read_features(need(f.features, cfg.features, "features"));
    emit(f, cmd_cv(features, load_scores(need(f.scores, cfg.scores, "scores")), cfg));
  } else if (app.got_subcommand("oracle")) {
    const auto features = read_features(need(f.features, cfg.features, "features"));
    emit(f, cmd_oracle(features, load_scores(need(f.scores, cfg.scores, "scores")), cfg));
  } else if (app.got_subcommand("fit")) {
    emit(f, format_fit_report(cmd_fit(read_fit_series(need(f.series, cfg.series, "series")), cfg)));
  } else if (app.got_subcommand("datadecide")) {
    const auto pv = need(f.proxy_values, cfg.proxy_values, "proxy-values");
    const auto ts = need(f.target_scores, cfg.target_scores, "target-scores");
    const auto cp = need(f.compute, cfg.compute, "compute");
    emit(f, cmd_datadecide(parse_proxy_values(detail::read_text(pv), pv.string()),
                           parse_target_scores(detail::read_text(ts), ts.string()),
                           parse_compute(detail::read_text(cp), cp.string())));
  } else if (app.got_subcommand("validate")) {
    auto paths = f.inputs.empty() ? cfg.manifests : f.inputs;
    if (paths.empty()) throw ValidationError("validate: no files given");
    const auto summary = cmd_validate(paths);
    emit(f, summary.text());
    return summary.errors.empty() ? 0 : 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"proxyrank: expert-trajectory proxy metrics, rankers and extrapolation curves"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON config file");
  app.add_option("--out", f.out, "Output file (stdout when omitted)");
  app.add_option("--threads", f.threads, "Worker threads (default: PROXYRANK_THREADS, else config, else 1)");
  app.add_option("--seed", f.seed, "Base seed; CV uses seed, seed+1, ...");
  app.add_flag("--permissive", f.permissive, "Skip and report invalid trajectory lines instead of failing");

  auto* metrics = app.add_subcommand("metrics", "Proxy vectors per (subject, task) from run manifests");
  metrics->add_option("manifests", f.inputs, "Run manifest files");

  auto add_ranking = [&](CLI::App* sub) {
    sub->add_option("--features", f.features, "Features CSV from `metrics`");
    sub->add_option("--scores", f.scores, "Scores CSV subject,task,score");
    sub->add_option("--ranker", f.ranker, "univariate | sparse3 | ranksvm_linear | ranksvm_rbf");
  };
  auto* cv = app.add_subcommand("cv", "Leave-k-tasks-out cross-validation");
  add_ranking(cv);
  cv->add_option("--k", f.k, "Held-out tasks per fold");
  cv->add_option("--fraction", f.fraction, "Subject subsampling fraction");
  cv->add_option("--seeds", f.n_seeds, "Number of seeds");
  auto* oracle = app.add_subcommand("oracle", "In-sample ranker fit on every task and subject");
  add_ranking(oracle);

  auto* fit = app.add_subcommand("fit", "Accuracy extrapolation from proxy, CE loss and compute");
  fit->add_option("--series", f.series, "Checkpoint series CSV step,split,name,value");

  auto* dd = app.add_subcommand("datadecide", "Decision accuracy versus compute fraction");
  dd->add_option("--proxy-values", f.proxy_values, "CSV corpus,scale,value");
  dd->add_option("--target-scores", f.target_scores, "CSV corpus,score");
  dd->add_option("--compute", f.compute, "CSV scale,n_params,d_tokens with a \"target\" row");

  auto* validate = app.add_subcommand("validate", "Validate trajectory files or manifests");
  validate->add_option("files", f.inputs, "Trajectory .jsonl files or manifest .json files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    return run(app, f);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
