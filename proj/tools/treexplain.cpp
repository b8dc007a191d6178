// treexplain: trees -> graphs -> features -> GCN -> explanations -> analysis.
// Exit codes: 0 ok, 1 user error, 2 internal error. Failures print one JSON
// record on stderr.

#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "treexplain/pipeline.hpp"

namespace tx = treexplain;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> workdir;
  std::optional<std::size_t> threads;
  std::optional<std::string> trees;
  std::optional<std::string> embeddings;
  std::optional<std::string> labels;
};

tx::PipelineConfig effective_config(const Overrides& o) {
  auto cfg = o.config.empty() ? tx::pipeline_config_from_json(nlohmann::json::object()) : tx::load_pipeline_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.workdir) cfg.workdir = *o.workdir;
  if (o.threads) {
    if (*o.threads == 0) throw tx::Error(tx::ErrorCode::InvalidConfig, "--threads must be positive");
    cfg.threads = *o.threads;
  }
  if (o.trees) cfg.trees = *o.trees;
  if (o.embeddings) cfg.embeddings = *o.embeddings;
  if (o.labels) cfg.labels = *o.labels;
  cfg.propagate_seed();
  for (const auto* p : {&cfg.trees, &cfg.embeddings, &cfg.labels, &cfg.stopwords, &cfg.tag_aliases})
    if (*p) tx::detail::require_file(**p, "configured input");
  return cfg;
}

void run_stage(const std::string& stage, const tx::PipelineConfig& cfg) {
  if (stage == "synth") {
    tx::stage_synth(cfg);
  } else if (stage == "graphs") {
    std::cout << "graphs: " << tx::stage_graphs(cfg) << '\n';
  } else if (stage == "features") {
    std::cout << "features: " << tx::stage_features(cfg) << '\n';
  } else if (stage == "train") {
    const auto r = tx::stage_train(cfg);
    std::cout << "train: " << r.history.size() << " epochs\n";
  } else if (stage == "eval") {
    const auto j = tx::stage_eval(cfg);
    if (!j["test_teacher"].is_null()) std::cout << "eval: test accuracy " << j["test_teacher"]["accuracy"] << '\n';
  } else if (stage == "explain") {
    std::cout << "explain: " << tx::stage_explain(cfg).size() << " graphs\n";
  } else if (stage == "hpo") {
    std::cout << "hpo: best objective " << tx::stage_hpo(cfg).best.objective << '\n';
  } else if (stage == "analyze") {
    tx::stage_analyze(cfg);
  } else if (stage == "report") {
    tx::stage_report(cfg);
  }
}

void run_all(const tx::PipelineConfig& cfg) {
  if (!cfg.trees) run_stage("synth", cfg);
  for (const char* s : {"graphs", "features", "train", "eval", "explain"}) run_stage(s, cfg);
  if (cfg.hpo_enabled) run_stage("hpo", cfg);
  run_stage("analyze", cfg);
  run_stage("report", cfg);
}

int fail(const std::string& error, const std::string& message, const std::string& stage, int code) {
  std::cerr << nlohmann::json{{"error", error}, {"message", message}, {"stage", stage}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explain constituency-tree GCN classifiers"};
  app.require_subcommand(1, 1);
  Overrides o;
  app.add_option("--config", o.config, "JSON pipeline config")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "global seed");
  app.add_option("--workdir", o.workdir, "work directory");
  app.add_option("--threads", o.threads, "worker threads");
  app.add_option("--trees", o.trees, "trees NDJSON or bracketed file");
  app.add_option("--embeddings", o.embeddings, "embeddings NDJSON");
  app.add_option("--labels", o.labels, "teacher labels NDJSON");

  const std::pair<const char*, const char*> stages[] = {
      {"synth", "write the synthetic corpus"},
      {"graphs", "convert trees to graph NDJSON"},
      {"features", "attach embeddings or hash features"},
      {"train", "train the GCN student"},
      {"eval", "score the model on the test split"},
      {"explain", "explain test-split predictions"},
      {"hpo", "tune explainer hyperparameters"},
      {"analyze", "semantic and structural analysis"},
      {"report", "bundle reports"},
      {"run", "every stage in order"},
  };
  for (const auto& [name, help] : stages) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("Usage", e.what(), "", 1);
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    const auto cfg = effective_config(o);
    if (stage == "run")
      run_all(cfg);
    else
      run_stage(stage, cfg);
    return 0;
  } catch (const tx::Error& e) {
    return fail(std::string(tx::to_string(e.code())), e.what(), stage, 1);
  } catch (const std::exception& e) {
    return fail("Internal", e.what(), stage, 2);
  }
}
