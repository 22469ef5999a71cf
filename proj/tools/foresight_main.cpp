// Command-line surface: dataset generation, training, evaluation, the
// ablation grid and the gradient checker.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "foresight/gradcheck.hpp"
#include "foresight/train.hpp"

namespace {

using namespace foresight;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write '" + path + "'");
  f << text;
}

int run_gen_data(const std::string& config_path, const std::string& out_dir,
                 std::uint64_t seed, bool seed_given) {
  WorldConfig cfg = config_path.empty() ? WorldConfig{}
                                        : world_config_from_file(config_path);
  if (seed_given) cfg.seed = seed;
  DatasetManifest manifest = gen_dataset(cfg, out_dir);
  std::cout << "wrote " << manifest.segments.size() << " labeled segments, "
            << manifest.modalities.size() << " modalities, "
            << manifest.vocab.num_actions() << " actions to " << out_dir
            << "\n";
  return 0;
}

int run_train(const std::string& data_dir, const std::string& modality,
              const std::string& config_path, const std::string& out_path) {
  RunConfig cfg =
      config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
  if (!modality.empty()) cfg.modality = modality;
  Dataset ds = Dataset::load(data_dir, cfg.window_s);
  TrainResult res = train(cfg, ds, &std::cout);
  save_checkpoint(out_path, res.best);
  write_file(out_path + ".log", res.log_csv());
  std::cout << "best epoch " << res.best.epoch << " val_top5@1s "
            << res.best.val_top5_at_1s << "; checkpoint written to "
            << out_path << "\n";
  return 0;
}

int run_eval(const std::string& data_dir, const std::string& ckpt_list,
             const std::string& weight_list, const std::string& split,
             const std::string& out_path) {
  std::vector<std::string> paths = split_list(ckpt_list);
  if (paths.empty()) throw ContractError("eval: no checkpoints given");
  std::vector<Checkpoint> ckpts;
  for (const std::string& p : paths) ckpts.push_back(load_checkpoint(p));

  std::vector<double> weights(paths.size(), 1.0);
  if (!weight_list.empty()) {
    std::vector<std::string> parts = split_list(weight_list);
    if (parts.size() != paths.size())
      throw ContractError("eval: need one fuse weight per checkpoint");
    for (std::size_t i = 0; i < parts.size(); ++i)
      weights[i] = std::stod(parts[i]);
  }

  Dataset ds = Dataset::load(data_dir, ckpts[0].config.window_s);
  std::vector<EvalModel> models;
  for (Checkpoint& c : ckpts)
    models.push_back(EvalModel{&c.params, c.modality,
                               c.config.timeline_config(),
                               c.config.pipeline_options()});
  EvalReport report = evaluate(models, weights, ds, split,
                               ckpts[0].config.many_shot_threshold);
  write_file(out_path, report.to_csv());
  std::cout << report.to_csv();
  return 0;
}

int run_ablate(const std::string& data_dir, const std::string& config_path,
               const std::string& out_path, const std::string& grid) {
  RunConfig cfg =
      config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
  AblateAxes axes;
  if (grid != "full") {
    axes = AblateAxes{false, false, false, false};
    if (grid != "none")
      for (const std::string& dim : split_list(grid)) {
        if (dim == "cell") axes.cell = true;
        else if (dim == "loss") axes.loss = true;
        else if (dim == "residual") axes.residual = true;
        else if (dim == "intention") axes.intention = true;
        else throw ConfigError("unknown grid axis '" + dim + "'");
      }
  }
  Dataset ds = Dataset::load(data_dir, cfg.window_s);
  const std::string csv = ablate(cfg, ds, axes, &std::cout);
  write_file(out_path, csv);
  std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"anticipation-by-generation pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_dir, modality, split = "val";
  std::string ckpt_list, weight_list, grid = "full";
  std::uint64_t seed = 0;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--config", config_path, "world config file");
  gen->add_option("--out", out_path, "output directory")->required();
  CLI::Option* seed_opt = gen->add_option("--seed", seed, "override the config seed");

  CLI::App* tr = app.add_subcommand("train", "train one per-modality model");
  tr->add_option("--data", data_dir, "dataset directory")->required();
  tr->add_option("--modality", modality, "modality to train on");
  tr->add_option("--config", config_path, "run config file");
  tr->add_option("--out", out_path, "checkpoint output path")->required();

  CLI::App* ev = app.add_subcommand("eval", "evaluate checkpoints (late fusion)");
  ev->add_option("--data", data_dir, "dataset directory")->required();
  ev->add_option("--ckpt", ckpt_list, "comma-separated checkpoint paths")->required();
  ev->add_option("--fuse-weights", weight_list, "comma-separated fusion weights");
  ev->add_option("--split", split, "val or test");
  ev->add_option("--out", out_path, "report CSV path")->required();

  CLI::App* ab = app.add_subcommand("ablate", "train the ablation grid");
  ab->add_option("--data", data_dir, "dataset directory")->required();
  ab->add_option("--config", config_path, "base run config file");
  ab->add_option("--out", out_path, "comparison CSV path")->required();
  ab->add_option("--grid", grid,
                 "axes to vary: full, none, or a comma list of "
                 "cell,loss,residual,intention");

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient check");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return run_gen_data(config_path, out_path, seed, seed_opt->count() > 0);
    if (tr->parsed()) return run_train(data_dir, modality, config_path, out_path);
    if (ev->parsed())
      return run_eval(data_dir, ckpt_list, weight_list, split, out_path);
    if (ab->parsed()) return run_ablate(data_dir, config_path, out_path, grid);
    if (gc->parsed()) return foresight::gradcheck_report(std::cout);
  } catch (const foresight::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
