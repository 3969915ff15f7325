#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gnnplus/ablation.hpp"
#include "gnnplus/config.hpp"
#include "gnnplus/dataset_io.hpp"
#include "gnnplus/gradcheck.hpp"
#include "gnnplus/model.hpp"
#include "gnnplus/synthetic.hpp"
#include "gnnplus/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOpts {
  std::optional<uint64_t> seed;
  int threads = 1;
};

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw gnnplus::StateError("cannot write '" + path.string() + "'");
  out << content;
}

gnnplus::Dataset load_and_check(const gnnplus::RunSpec& spec) {
  if (spec.data_path.empty())
    throw gnnplus::ConfigError("[data] path is required for this command");
  gnnplus::Dataset ds = gnnplus::load_dataset(spec.data_path);
  if (!(ds.info == spec.data_info))
    throw gnnplus::ConfigError("dataset '" + spec.data_path +
                               "' does not match the [data] schema in the config");
  return ds;
}

gnnplus::RunSpec load_spec(const std::string& config_path, const GlobalOpts& g) {
  gnnplus::RunSpec spec = gnnplus::parse_run_spec_file(config_path);
  if (g.seed) {
    spec.model.seed = *g.seed;
    spec.train.seed = *g.seed;
  }
  spec.train.threads = g.threads;
  return spec;
}

json metrics_to_json(const gnnplus::Metrics& m) {
  json j;
  for (const auto& [k, v] : m.values) j[k] = v;
  return j;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const GlobalOpts& g) {
  auto t0 = std::chrono::steady_clock::now();
  gnnplus::RunSpec spec = load_spec(config_path, g);
  gnnplus::GnnModel model(spec.model, spec.data_info);
  std::cout << "parameters: " << model.num_trainable() << "\n";
  gnnplus::Dataset ds = load_and_check(spec);
  gnnplus::TrainResult result = gnnplus::train(model, ds, spec.train);

  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "log.csv", gnnplus::log_to_csv(result));
  model.save_checkpoint((fs::path(out_dir) / "checkpoint.bin").string());

  double val = result.best_val, test = result.best_test;
  if (result.best_epoch < 0) {
    // zero-epoch run: report the untouched initial model
    val = gnnplus::evaluate(model, ds, ds.val_idx, spec.train.batch_size, g.threads)
              .get(spec.train.eval_metric);
    test = gnnplus::evaluate(model, ds, ds.test_idx, spec.train.batch_size, g.threads)
               .get(spec.train.eval_metric);
  }
  json summary;
  summary["test_metric"] = test;
  summary["val_metric"] = val;
  summary["epoch_of_best"] = result.best_epoch;
  summary["wall_seconds"] = std::chrono::duration<double>(
                                std::chrono::steady_clock::now() - t0).count();
  write_file(fs::path(out_dir) / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data,
             const std::string& split, int64_t batch_size, const GlobalOpts& g) {
  gnnplus::GnnModel model = gnnplus::GnnModel::load_checkpoint(ckpt);
  gnnplus::Dataset ds = gnnplus::load_dataset(data);
  if (!(ds.info == model.info()))
    throw gnnplus::ConfigError("dataset '" + data +
                               "' does not match the checkpoint's schema");
  if (model.config().flags.use_pe)
    gnnplus::ensure_rwse(ds, model.config().pe_steps, g.threads);
  gnnplus::Metrics m =
      gnnplus::evaluate_split(model, ds, split, batch_size, g.threads);
  std::cout << metrics_to_json(m).dump(2) << "\n";
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out_dir,
               const GlobalOpts& g) {
  gnnplus::RunSpec spec = load_spec(config_path, g);
  gnnplus::Dataset ds = load_and_check(spec);
  gnnplus::AblationReport report = gnnplus::run_ablation(spec, ds);
  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "ablation.csv", gnnplus::ablation_to_csv(report));
  std::string text = gnnplus::ablation_to_text(report);
  write_file(fs::path(out_dir) / "ablation.txt", text);
  std::cout << text;
  return 0;
}

int cmd_gradcheck(const GlobalOpts& g, const std::string& inject_fault) {
  gnnplus::GradCheckOptions opt;
  if (g.seed) opt.seed = *g.seed;
  opt.threads = g.threads;
  gnnplus::GradCheckReport report;
  if (!inject_fault.empty()) {
    opt.threads = 1;  // the fault hook is thread-local
    gnnplus::Tape::FaultGuard guard(inject_fault.c_str());
    report = gnnplus::run_gradcheck(opt);
  } else {
    report = gnnplus::run_gradcheck(opt);
  }
  std::cout << gnnplus::gradcheck_report_text(report);
  std::cout << "combinations: " << report.rows.size()
            << "  worst_rel_err: " << report.worst << "  ("
            << report.seconds << "s)\n";
  if (!inject_fault.empty())
    std::cout << "fault injected into '" << inject_fault << "'\n";
  if (!report.ok) {
    std::cerr << "gradcheck FAILED: worst relative error " << report.worst
              << " exceeds " << opt.tolerance;
    if (!inject_fault.empty()) std::cerr << " with fault in '" << inject_fault << "'";
    std::cerr << "\n";
    return 1;
  }
  std::cout << "gradcheck OK\n";
  return 0;
}

int cmd_gen_data(const std::string& kind, const gnnplus::SbmParams& sbm,
                 const gnnplus::RegressionParams& reg, const std::string& out,
                 const GlobalOpts& g) {
  gnnplus::RngState rng(g.seed.value_or(1));
  gnnplus::Dataset ds;
  if (kind == "sbm")
    ds = gnnplus::generate_sbm_node_task(sbm, rng);
  else if (kind == "regression")
    ds = gnnplus::generate_regression_task(reg, rng);
  else
    throw gnnplus::ConfigError("gen-data: kind must be sbm or regression");
  if (fs::path(out).has_parent_path())
    fs::create_directories(fs::path(out).parent_path());
  gnnplus::save_dataset(ds, out);
  double nodes = 0.0, edges = 0.0;
  for (const gnnplus::Graph& gr : ds.graphs) {
    nodes += static_cast<double>(gr.num_nodes);
    for (int64_t i = 0; i < gr.num_edges(); ++i)
      edges += gr.edge_src[i] <= gr.edge_dst[i] ? 1.0 : 0.0;
  }
  double n = static_cast<double>(ds.graphs.size());
  std::cout << "# graphs: " << ds.graphs.size()
            << "  Avg. # nodes: " << nodes / n
            << "  Avg. # edges: " << edges / n << "\n";
  std::cout << "wrote " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GNN+ graph-level benchmark harness"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "override every configured seed");
  app.add_option("--threads", g.threads, "worker thread cap")
      ->check(CLI::PositiveNumber);

  std::string config_path, out_dir = "run-out";
  auto* train_cmd = app.add_subcommand("train", "train a model from a config");
  train_cmd->add_option("--config", config_path, "run config file")->required();
  train_cmd->add_option("--out", out_dir, "output directory");

  std::string eval_ckpt, eval_data, eval_split = "test";
  int64_t eval_batch = 128;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "dataset file")->required();
  eval_cmd->add_option("--split", eval_split, "train|val|test");
  eval_cmd->add_option("--batch-size", eval_batch, "evaluation batch size");

  std::string ablate_config, ablate_out = "ablate-out";
  auto* ablate_cmd =
      app.add_subcommand("ablate", "base run plus six single-technique ablations");
  ablate_cmd->add_option("--config", ablate_config, "run config file")->required();
  ablate_cmd->add_option("--out", ablate_out, "output directory");

  std::string inject_fault;
  auto* gradcheck_cmd = app.add_subcommand(
      "gradcheck", "finite-difference check of every backbone x flag combination");
  gradcheck_cmd
      ->add_option("--inject-fault", inject_fault,
                   "deliberately corrupt one op's backward rule (negative control)")
      ->group("");

  std::string gen_kind, gen_out;
  gnnplus::SbmParams sbm;
  gnnplus::RegressionParams reg;
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic JSONL dataset");
  gen_cmd->add_option("--kind", gen_kind, "sbm | regression")->required();
  gen_cmd->add_option("--out", gen_out, "output file")->required();
  gen_cmd->add_option("--graphs", sbm.num_graphs, "number of graphs");
  gen_cmd->add_option("--nodes", sbm.nodes_per_graph, "nodes per graph (sbm)");
  gen_cmd->add_option("--blocks", sbm.num_blocks, "number of blocks (sbm)");
  gen_cmd->add_option("--p-intra", sbm.p_intra, "intra-block edge probability");
  gen_cmd->add_option("--p-inter", sbm.p_inter, "inter-block edge probability");
  gen_cmd->add_option("--noise", sbm.feature_noise, "feature hide probability");
  gen_cmd->add_option("--min-nodes", reg.min_nodes, "min nodes (regression)");
  gen_cmd->add_option("--max-nodes", reg.max_nodes, "max nodes (regression)");
  gen_cmd->add_option("--edge-prob", reg.edge_prob, "edge probability (regression)");

  for (CLI::App* sub : app.get_subcommands(nullptr)) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(config_path, out_dir, g);
    if (*eval_cmd) return cmd_eval(eval_ckpt, eval_data, eval_split, eval_batch, g);
    if (*ablate_cmd) return cmd_ablate(ablate_config, ablate_out, g);
    if (*gradcheck_cmd) return cmd_gradcheck(g, inject_fault);
    if (*gen_cmd) {
      reg.num_graphs = sbm.num_graphs;
      return cmd_gen_data(gen_kind, sbm, reg, gen_out, g);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
