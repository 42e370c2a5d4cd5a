// rfloss: building-level radio-frequency loss classification pipeline.
//
// Subcommands: synth | label | train | infer | eval
// Exit codes: 0 success, 2 config error, 3 data error, 4 training error.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rfloss/pipeline.hpp"

namespace {

struct Flags {
  std::string config_path;
  std::string task, mode, model, out;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

rfloss::pipeline::PipelineConfig resolveConfig(const Flags& f) {
  rfloss::pipeline::PipelineConfig cfg;
  if (!f.config_path.empty())
    cfg = rfloss::pipeline::PipelineConfig::load(f.config_path);
  if (!f.task.empty()) cfg.task = f.task;
  if (!f.mode.empty()) cfg.mode = f.mode;
  if (!f.model.empty()) cfg.model = f.model;
  if (!f.out.empty()) cfg.paths.out = f.out;
  if (f.seed_set) cfg.seed = f.seed;
  cfg.validate();
  return cfg;
}

int run(const std::string& stage, const Flags& f) {
  rfloss::pipeline::PipelineConfig cfg;
  try {
    cfg = resolveConfig(f);
  } catch (const rfloss::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  try {
    if (stage == "synth") {
      rfloss::pipeline::runSynth(cfg);
    } else if (stage == "label") {
      rfloss::pipeline::runLabel(cfg);
    } else if (stage == "train") {
      for (const auto& r : rfloss::pipeline::runTrain(cfg))
        std::cout << r.report.toText() << "\n";
    } else if (stage == "infer") {
      rfloss::pipeline::runInfer(cfg);
    } else {
      for (const auto& r : rfloss::pipeline::runEval(cfg))
        std::cout << r.toText() << "\n";
    }
  } catch (const rfloss::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const rfloss::NonFiniteGradient& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 4;
  } catch (const rfloss::DegenerateCluster& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 4;
  } catch (const rfloss::EmptyLabeledSet& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 4;
  } catch (const rfloss::SchemaMismatch& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 4;
  } catch (const rfloss::PipelineError& e) {
    // remaining pipeline failures (parse, join, geometry, insufficient data)
    // are data errors
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  }
  std::cout << stage << ": done (out=" << cfg.paths.out << ", " << cfg.header()
            << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"building RF loss classification pipeline"};
  app.require_subcommand(1);

  Flags f;
  std::string stage;
  for (const char* name : {"synth", "label", "train", "infer", "eval"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", f.config_path, "JSON config file");
    sub->add_option("--seed", f.seed, "global seed (overrides config)")
        ->each([&f](const std::string&) { f.seed_set = true; });
    sub->add_option("--task", f.task)->check(CLI::IsMember({"o2i", "i2i", "both"}));
    sub->add_option("--mode", f.mode)->check(CLI::IsMember({"sl", "ssl"}));
    sub->add_option("--model", f.model)
        ->check(CLI::IsMember({"rf", "gb-level", "gb-leaf", "voting"}));
    sub->add_option("--out", f.out, "output directory");
    sub->callback([&stage, name] { stage = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  return run(stage, f);
}
