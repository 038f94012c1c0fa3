// spherecat: weakly supervised hierarchical text categorization.
//
// Subcommands cover synthetic data generation, the four model stages and
// evaluation; `pipeline` chains the model stages end to end. All artifacts
// live under the output directory with fixed names.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spherecat/config.hpp"
#include "spherecat/errors.hpp"
#include "spherecat/log.hpp"
#include "spherecat/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string corpus;
  std::string taxonomy;
  std::string out;
  std::vector<std::string> defines;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool deterministic = false;
  bool no_deterministic = false;
  int threads = 0;
};

void attach_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value configuration file");
  cmd->add_option("--corpus", args.corpus, "documents as JSONL");
  cmd->add_option("--taxonomy", args.taxonomy, "parent<TAB>child edge list");
  cmd->add_option("--out", args.out, "output directory (default: out)");
  cmd->add_option("-D,--define", args.defines, "override a config key, e.g. -D dim=64")
      ->type_name("KEY=VALUE");
  cmd->add_option("--seed", args.seed, "master RNG seed")->each([&args](const std::string&) {
    args.seed_set = true;
  });
  cmd->add_flag("--deterministic", args.deterministic,
                "force single-threaded, bit-reproducible embedding training");
  cmd->add_flag("--no-deterministic", args.no_deterministic,
                "allow lock-free parallel embedding updates");
  cmd->add_option("--threads", args.threads, "worker thread count");
}

spherecat::PipelineConfig resolve_config(const CommonArgs& args) {
  spherecat::PipelineConfig cfg;
  if (!args.config_path.empty()) cfg = spherecat::PipelineConfig::from_file(args.config_path);
  for (const auto& d : args.defines) {
    auto eq = d.find('=');
    if (eq == std::string::npos)
      throw spherecat::ConfigError("-D expects key=value, got: " + d);
    cfg.set(spherecat::trim(d.substr(0, eq)), spherecat::trim(d.substr(eq + 1)));
  }
  if (!args.corpus.empty()) cfg.corpus_path = args.corpus;
  if (!args.taxonomy.empty()) cfg.taxonomy_path = args.taxonomy;
  if (!args.out.empty()) cfg.out_dir = args.out;
  if (args.seed_set) cfg.seed = args.seed;
  if (args.deterministic && args.no_deterministic)
    throw spherecat::ConfigError("--deterministic and --no-deterministic conflict");
  if (args.deterministic) cfg.deterministic = true;
  if (args.no_deterministic) cfg.deterministic = false;
  if (args.threads > 0) cfg.threads = args.threads;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spherecat: hierarchical text categorization from a handful of labels"};
  app.require_subcommand(1);

  CommonArgs args;
  const char* stages[] = {"gen-synthetic", "train-embeddings", "augment",
                          "train-classifier", "predict",          "evaluate",
                          "pipeline"};
  const char* descriptions[] = {
      "generate a planted taxonomy and corpus for experiments",
      "jointly embed categories, metadata, documents and words on the sphere",
      "synthesize per-category training documents from the embedding space",
      "train the top-down classifier tree on real plus synthetic documents",
      "assign a root-to-leaf path to every test document",
      "score predictions against gold labels (micro/macro F1)",
      "run train-embeddings through evaluate in sequence"};
  for (std::size_t i = 0; i < std::size(stages); ++i)
    attach_common(app.add_subcommand(stages[i], descriptions[i]), args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    auto cfg = resolve_config(args);
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "gen-synthetic") spherecat::run_gen_synthetic(cfg);
    else if (cmd == "train-embeddings") spherecat::run_train_embeddings(cfg);
    else if (cmd == "augment") spherecat::run_augment(cfg);
    else if (cmd == "train-classifier") spherecat::run_train_classifier(cfg);
    else if (cmd == "predict") spherecat::run_predict(cfg);
    else if (cmd == "evaluate") spherecat::run_evaluate(cfg);
    else spherecat::run_pipeline(cfg);
    return 0;
  } catch (const spherecat::ConfigError& e) {
    spherecat::logging::error(e.what());
    return 2;
  } catch (const spherecat::MissingInputError& e) {
    spherecat::logging::error(e.what());
    return 3;
  } catch (const spherecat::DataError& e) {
    spherecat::logging::error(e.what());
    return 4;
  } catch (const std::exception& e) {
    spherecat::logging::error(std::string("unexpected: ") + e.what());
    return 5;
  }
}
