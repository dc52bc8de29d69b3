#include <cstdio>
#include <functional>
#include <list>
#include <memory>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trafficlm/config.hpp"
#include "trafficlm/pipeline.hpp"
#include "trafficlm/selftest.hpp"

namespace {

using trafficlm::Error;
using trafficlm::ErrorCode;
using trafficlm::RunConfig;

enum Exit { ok = 0, config_error = 2, input_error = 3, selftest_failed = 4 };

struct Common {
  std::vector<std::string> config_files;
  std::vector<std::string> assignments;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  bool quiet = false;
};

// config key -> value of a subcommand flag; a list so CLI11 can bind to
// elements that never move
using Overrides = std::list<std::pair<std::string, std::optional<std::string>>>;

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config_files, "key = value configuration file (repeatable, later files win)");
  sub->add_option("-s,--set", c.assignments, "override one key, e.g. --set model.d_model=64 (repeatable)");
  sub->add_option("-o,--out", c.out_dir, "output directory (paths.out_dir)");
  sub->add_option("--seed", c.seed, "master seed");
  sub->add_flag("--deterministic", c.deterministic, "serial execution (the default build is already single-threaded)");
  sub->add_flag("-q,--quiet", c.quiet, "do not echo the resolved configuration");
}

void add_override(CLI::App* sub, Overrides& ov, const std::string& flag, const std::string& key, const std::string& help) {
  ov.emplace_back(key, std::nullopt);
  sub->add_option(flag, ov.back().second, help + " (" + key + ")");
}

RunConfig resolve(const Common& c, const Overrides& ov) {
  RunConfig cfg;
  for (const auto& file : c.config_files) {
    std::string text;
    try {
      const auto bytes = trafficlm::read_file(file);
      text.assign(bytes.begin(), bytes.end());
    } catch (const Error&) {
      throw Error(ErrorCode::Config, "cannot read config file " + file);
    }
    try {
      cfg.merge_text(text);
    } catch (const Error& e) {
      const std::string what = e.what();
      throw Error(ErrorCode::Config, file + ": " + what.substr(what.find(": ") + 2));
    }
  }
  for (const auto& a : c.assignments) cfg.set_assignment(a);
  for (const auto& [key, value] : ov) {
    if (value) cfg.set(key, *value);
  }
  if (c.out_dir) cfg.set("paths.out_dir", *c.out_dir);
  if (c.seed) cfg.set("seed", std::to_string(*c.seed));
  return cfg;
}

int run_stage(const Common& c, const Overrides& ov, const std::function<trafficlm::pipeline::Stage(const RunConfig&)>& stage) {
  const RunConfig cfg = resolve(c, ov);
  if (!c.quiet) std::cout << "# resolved configuration\n" << cfg.resolved();
  auto st = stage(cfg);
  if (c.deterministic) st.note("deterministic = true");
  for (const auto& n : st.notes()) std::cout << n << '\n';
  for (const auto& [file, hash] : st.outputs()) std::cout << "wrote " << file << '\n';
  std::cout << "manifest " << st.finish() << '\n';
  return ok;
}

int run_selftest() {
  bool all = true;
  for (const auto& check : trafficlm::selftest::run_all()) {
    std::cout << (check.passed ? "PASS " : "FAIL ") << check.name << ": " << check.detail << '\n';
    all = all && check.passed;
  }
  return all ? ok : selftest_failed;
}

void print_keys() {
  for (const auto& k : RunConfig::keys()) std::cout << k.name << " = " << k.value << "    # " << k.help << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  namespace pl = trafficlm::pipeline;
  CLI::App app{"trafficlm: traffic foundation-model toolkit"};
  app.require_subcommand(1);

  struct Command {
    CLI::App* app;
    Common common;
    Overrides overrides;
    std::function<pl::Stage(const RunConfig&)> stage;
  };
  std::vector<std::unique_ptr<Command>> commands;
  auto command = [&](const std::string& name, const std::string& help, std::function<pl::Stage(const RunConfig&)> stage) {
    auto cmd = std::make_unique<Command>();
    cmd->app = app.add_subcommand(name, help);
    cmd->stage = std::move(stage);
    add_common(cmd->app, cmd->common);
    commands.push_back(std::move(cmd));
    return commands.back().get();
  };

  auto* synth = command("synth", "write a synthetic pcap trace and its ground truth", pl::synth);
  add_override(synth->app, synth->overrides, "--preset", "synth.preset", "corpus preset");
  add_override(synth->app, synth->overrides, "--flows", "synth.flows", "number of flows");
  add_override(synth->app, synth->overrides, "--pcap", "paths.pcap", "output capture");

  auto* ingest = command("ingest", "parse a pcap/pcapng capture into a flow store", pl::ingest);
  add_override(ingest->app, ingest->overrides, "--pcap", "paths.pcap", "input capture");
  add_override(ingest->app, ingest->overrides, "--truth", "paths.truth", "ground-truth CSV for labels");

  auto* tokenize = command("tokenize", "train the vocabulary and build token and MFR datasets", pl::tokenize);
  add_override(tokenize->app, tokenize->overrides, "--vocab-size", "tokenize.vocab_size", "vocabulary size");

  auto* pretrain = command("pretrain", "self-supervised pre-training", pl::pretrain);
  add_override(pretrain->app, pretrain->overrides, "--objective", "pretrain.objective", "objective");
  add_override(pretrain->app, pretrain->overrides, "--steps", "pretrain.steps", "optimizer steps");

  auto* finetune = command("finetune", "fit a task head (and optionally the backbone)", pl::finetune_stage);
  add_override(finetune->app, finetune->overrides, "--task", "finetune.task", "classify, regress or generate");
  add_override(finetune->app, finetune->overrides, "--input", "finetune.input", "patches, tokens or metadata");
  add_override(finetune->app, finetune->overrides, "--epochs", "finetune.epochs", "training epochs");

  auto* evaluate = command("evaluate", "score a fine-tuned checkpoint on labeled flows", pl::evaluate);
  add_override(evaluate->app, evaluate->overrides, "--checkpoint", "paths.finetuned", "checkpoint to score");

  auto* generate = command("generate", "sample field records from a fine-tuned decoder", pl::generate_stage);
  add_override(generate->app, generate->overrides, "--label", "generate.label", "class prompt");
  add_override(generate->app, generate->overrides, "-n,--count", "generate.n", "samples");
  add_override(generate->app, generate->overrides, "--temperature", "generate.temperature", "sampling temperature");

  auto* selftest = app.add_subcommand("selftest", "gradient checks and oracle comparisons");
  auto* keys = app.add_subcommand("keys", "list every configuration key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return config_error;
  }

  try {
    if (selftest->parsed()) return run_selftest();
    if (keys->parsed()) {
      print_keys();
      return ok;
    }
    for (const auto& cmd : commands) {
      if (cmd->app->parsed()) return run_stage(cmd->common, cmd->overrides, cmd->stage);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::Config ? config_error : input_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return input_error;
  }
  return config_error;
}
