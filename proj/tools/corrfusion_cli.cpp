// corrfusion: generate data, train, evaluate, gradient-check and sweep.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "corrfusion/dataset.hpp"
#include "corrfusion/io.hpp"
#include "corrfusion/metrics.hpp"
#include "corrfusion/serialize.hpp"
#include "corrfusion/train.hpp"

namespace fs = std::filesystem;
using namespace corrfusion;

namespace {

constexpr const char* kPrecedence =
    "Settings are resolved as: built-in defaults, then --config FILE (flat JSON keys "
    "mirroring the training config), then command-line flags. The resolved settings are "
    "written to config.json next to the outputs.";

unsigned eval_threads() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CORRFUSION_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap < 1) throw ConfigError("CORRFUSION_THREADS must be >= 1");
      n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    } catch (const std::logic_error&) {
      throw ConfigError(std::string("CORRFUSION_THREADS: not a positive integer '") + env + "'");
    }
  }
  return n;
}

// Flags that override the config file. Unset flags leave the file value alone.
struct TrainOverrides {
  std::string config;
  std::optional<std::string> head;
  std::optional<std::size_t> r, dim, epochs;
  std::optional<double> rho;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--head", head, "corrfusion | softdcca | dcca | nofusion");
    cmd->add_option("--r", r, "reduction ratio (must divide --dim)")->check(CLI::PositiveNumber);
    cmd->add_option("--rho", rho, "covariance accumulation rate in [0,1)");
    cmd->add_option("--seed", seed, "initialization, split and shuffle seed");
    cmd->add_option("--dim", dim, "backbone width d")->check(CLI::PositiveNumber);
    cmd->add_option("--epochs", epochs, "training epochs");
  }

  TrainConfig resolve() const {
    TrainConfig c;
    if (!config.empty()) merge_json(c, io::read_json(config));
    if (head) c.head = parse_head(*head);
    if (r) c.r = *r;
    if (dim) c.dim = *dim;
    if (epochs) c.epochs = *epochs;
    if (rho) c.rho = *rho;
    if (seed) c.seed = *seed;
    c.validate();
    validate_fusion_hyperparameters(c.dim, c.r, c.rho);
    return c;
  }
};

int cmd_gen(const GeneratorConfig& g, const fs::path& out) {
  g.validate();
  const auto ds = gen_synthetic(g);
  save_dataset(ds, out);
  io::write_json(out / "config.json", nlohmann::json(g));
  std::cout << "wrote " << ds.size() << " pairs (C=" << ds.num_classes << ", d_in=" << ds.dim()
            << ") to " << out.string() << "\n";
  return 0;
}

int cmd_train(const TrainOverrides& o, const fs::path& data, const fs::path& out) {
  const TrainConfig cfg = o.resolve();
  const auto ds = load_dataset(data);
  const auto splits = split_dataset(ds.size(), {}, cfg.seed);
  auto res = train(cfg, ds, splits, eval_threads());

  fs::create_directories(out);
  const nlohmann::json resolved = cfg;
  io::write_json(out / "config.json", resolved);
  io::write_bytes(out / "history.jsonl", history_jsonl(res.history));
  save_network(res.best, out / "model");
  save_network(res.last, out / "last");
  io::write_json(out / "model" / "config.json", resolved);
  io::write_json(out / "last" / "config.json", resolved);

  std::cout << "head " << to_string(cfg.head) << ", " << res.history.size()
            << " epochs, best epoch " << res.best_epoch;
  if (!res.history.empty()) {
    const auto& last = res.history.back();
    std::cout << ", final loss " << last.total << ", val OA_tr " << last.val.oa_tr;
  }
  std::cout << "\n";
  return 0;
}

int cmd_eval(const fs::path& model, const fs::path& data, const std::string& split,
             std::optional<std::uint64_t> split_seed, const fs::path& report) {
  const Network net = load_network(model);
  const auto ds = load_dataset(data);
  if (ds.dim() != net.config.input_dim || ds.num_classes != net.config.classes)
    throw ConfigError("dataset (d_in " + std::to_string(ds.dim()) + ", C " +
                      std::to_string(ds.num_classes) + ") does not match the model (d_in " +
                      std::to_string(net.config.input_dim) + ", C " +
                      std::to_string(net.config.classes) + ")");
  std::uint64_t seed = 1;
  if (split_seed) {
    seed = *split_seed;
  } else if (fs::exists(model / "config.json")) {
    seed = io::read_json(model / "config.json").at("seed").get<std::uint64_t>();
  }
  const auto splits = split_dataset(ds.size(), {}, seed);
  const auto& idx = split == "train" ? splits.train : split == "val" ? splits.val : splits.test;
  const auto rep = evaluate(net, ds, idx, eval_threads());
  if (report.has_parent_path()) fs::create_directories(report.parent_path());
  io::write_json(report, nlohmann::json(rep));
  std::cout << split << " n=" << rep.n << " oa_t1=" << rep.oa.oa_t1 << " oa_t2=" << rep.oa.oa_t2
            << " oa_bi=" << rep.oa.oa_bi << " oa_tr=" << rep.oa.oa_tr << "\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, double tol, const std::string& head) {
  GradcheckSpec spec;
  spec.head = parse_head(head);
  spec.tol = tol;
  const auto rep = gradcheck(spec, seed);
  const bool ok = rep.max_rel_err <= tol;
  std::cout << "max_rel_err " << rep.max_rel_err << " at " << rep.worst_coordinate
            << " (analytic " << rep.analytic_at_worst << ", numeric " << rep.numeric_at_worst
            << ") over " << rep.coordinates << " coordinates\n"
            << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? 0 : 1;
}

int cmd_sweep(const TrainOverrides& o, const std::string& param, const std::vector<double>& values,
              std::size_t repeat, const std::string& data, const std::string& out) {
  const TrainConfig base = o.resolve();
  std::vector<TrainConfig> cells;
  for (double v : values) {
    TrainConfig c = base;
    if (param == "r") {
      if (!(v >= 1) || v != std::floor(v))
        throw ConfigError("sweep: r values must be positive integers");
      c.r = static_cast<std::size_t>(v);
    } else {
      c.rho = v;
    }
    validate_fusion_hyperparameters(c.dim, c.r, c.rho);
    cells.push_back(c);
  }

  PairedDataset ds = data.empty() ? gen_synthetic(GeneratorConfig{}) : load_dataset(data);
  const unsigned threads = eval_threads();

  std::ostringstream csv;
  csv.precision(17);
  csv << "param,value,seed,oa_t1,oa_t2,oa_bi,oa_tr,param_count\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t k = 0; k < repeat; ++k) {
      TrainConfig c = cells[i];
      c.seed = base.seed + k;
      const auto splits = split_dataset(ds.size(), {}, c.seed);
      const auto res = train(c, ds, splits, threads);
      const auto rep = evaluate(res.best, ds, splits.test, threads);
      const std::string value =
          param == "r" ? std::to_string(c.r) : nlohmann::json(values[i]).dump();
      csv << param << "," << value << "," << c.seed << "," << rep.oa.oa_t1 << "," << rep.oa.oa_t2
          << "," << rep.oa.oa_bi << "," << rep.oa.oa_tr << ","
          << param_count(static_cast<std::int64_t>(c.dim), static_cast<std::int64_t>(c.r))
          << "\n";
      std::cerr << param << "=" << values[i] << " seed " << c.seed << " oa_bi " << rep.oa.oa_bi
                << "\n";
    }
  }
  if (out.empty()) {
    std::cout << csv.str();
  } else {
    const fs::path p(out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    io::write_bytes(p, csv.str());
    nlohmann::json resolved = base;
    resolved["sweep"] = {{"param", param}, {"values", values}, {"repeat", repeat}};
    io::write_json(fs::path(p).replace_extension(".config.json"), resolved);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CorrFusion change detection: data generation, training and evaluation"};
  app.require_subcommand(1);
  app.footer(kPrecedence);

  GeneratorConfig g;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic bi-temporal dataset");
  gen->add_option("--classes", g.classes, "number of classes")->capture_default_str()->check(CLI::Range(2, 1 << 20));
  gen->add_option("--dim", g.dim, "input width d_in")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--pairs", g.pairs, "number of pairs")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--p-change", g.p_change, "probability a pair changes class")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  gen->add_option("--noise", g.noise, "noise sigma")->capture_default_str()->check(CLI::NonNegativeNumber);
  gen->add_option("--temporal-corr", g.temporal_corr, "noise carry-over for unchanged pairs")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  gen->add_option("--imbalance", g.imbalance, "class frequency exponent (0 = balanced)")->capture_default_str()->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", g.seed, "generator seed")->capture_default_str();
  gen->add_option("--out", gen_out, "output directory")->required();

  TrainOverrides train_flags;
  std::string train_data, train_out;
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->footer(kPrecedence);
  train_flags.attach(tr);
  tr->add_option("--data", train_data, "dataset directory")->required();
  tr->add_option("--out", train_out, "output directory")->required();

  std::string eval_model, eval_data, eval_split = "test", eval_report = "report.json";
  std::optional<std::uint64_t> eval_seed;
  auto* ev = app.add_subcommand("eval", "Evaluate a trained model on one split");
  ev->add_option("--model", eval_model, "model directory")->required();
  ev->add_option("--data", eval_data, "dataset directory")->required();
  ev->add_option("--split", eval_split, "train | val | test")->capture_default_str()->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--split-seed", eval_seed, "split seed (default: the model's training seed)");
  ev->add_option("--report", eval_report, "report path")->capture_default_str();

  std::uint64_t gc_seed = 1;
  double gc_tol = 1e-5;
  std::string gc_head = "corrfusion";
  auto* gc = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  gc->add_option("--seed", gc_seed, "seed")->capture_default_str();
  gc->add_option("--tol", gc_tol, "max relative error")->capture_default_str()->check(CLI::PositiveNumber);
  gc->add_option("--head", gc_head, "head to check")->capture_default_str();

  TrainOverrides sweep_flags;
  std::string sweep_param, sweep_data, sweep_out;
  std::vector<double> sweep_values;
  std::size_t sweep_repeat = 1;
  auto* sw = app.add_subcommand("sweep", "Train one model per value and seed, write a CSV");
  sw->footer(kPrecedence);
  sweep_flags.attach(sw);
  sw->add_option("--param", sweep_param, "r | rho")->required()->check(CLI::IsMember({"r", "rho"}));
  sw->add_option("--values", sweep_values, "comma-separated values")->required()->delimiter(',');
  sw->add_option("--repeat", sweep_repeat, "seeds per value")->capture_default_str()->check(CLI::PositiveNumber);
  sw->add_option("--data", sweep_data, "dataset directory (default: generate the reference set)");
  sw->add_option("--out", sweep_out, "CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_gen(g, gen_out);
    if (*tr) return cmd_train(train_flags, train_data, train_out);
    if (*ev) return cmd_eval(eval_model, eval_data, eval_split, eval_seed, eval_report);
    if (*gc) return cmd_gradcheck(gc_seed, gc_tol, gc_head);
    if (*sw)
      return cmd_sweep(sweep_flags, sweep_param, sweep_values, sweep_repeat, sweep_data, sweep_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
