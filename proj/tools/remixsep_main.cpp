#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "remixsep/checkpoint.hpp"
#include "remixsep/config.hpp"
#include "remixsep/datagen.hpp"
#include "remixsep/selfcheck.hpp"
#include "remixsep/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace remixsep;

namespace {

void apply_worker_cap() {
  if (const char* env = std::getenv("REMIXSEP_NUM_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) set_max_workers(n);
  }
}

int cmd_synth_data(const std::string& config_path, const std::string& out_dir,
                   std::optional<std::uint64_t> seed) {
  ExperimentConfig cfg = parse_config_file(config_path);
  if (seed) cfg.data.seed = *seed;
  for (const std::string split : {"train", "valid", "test"}) {
    const CorpusSpec spec = cfg.data.split_spec(split);
    if (spec.num_examples <= 0) continue;
    auto corpus = synthesize_corpus(spec);
    write_corpus((fs::path(out_dir) / split).string(), corpus, spec.seed);
    std::cout << split << ": " << corpus.size() << " examples\n";
  }
  return 0;
}

std::vector<MixtureExample> load_split(const std::string& data_dir, const std::string& split,
                                       bool required) {
  const fs::path p = fs::path(data_dir) / split;
  if (!fs::exists(p / "manifest.jsonl")) {
    if (required) throw std::invalid_argument("missing split: " + p.string());
    return {};
  }
  return read_corpus(p.string());
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, std::optional<std::uint64_t> seed, bool log_plans) {
  ExperimentConfig cfg = parse_config_file(config_path);
  if (seed) cfg.train.seed = *seed;
  if (log_plans) cfg.train.log_plans = true;
  cfg.output_dir = out_dir;

  fs::create_directories(out_dir);
  {
    std::ofstream snap(fs::path(out_dir) / "config.resolved");
    snap << serialize_config(cfg);
  }

  auto train_split = load_split(data_dir, "train", true);
  auto val_split = load_split(data_dir, "valid", false);

  Trainer trainer(cfg.model, cfg.train);
  std::ofstream log(fs::path(out_dir) / "train_log.jsonl");
  if (!log) throw std::runtime_error("cannot open training log in " + out_dir);
  TrainReport report = trainer.run(train_split, val_split, out_dir, &log);

  std::cout << "method=" << to_string(cfg.train.method) << " epochs=" << cfg.train.epochs
            << " best_val_sisdri=" << report.best_val_sisdri << " dB\n";
  std::cout << "final checkpoint: " << (fs::path(out_dir) / "ckpt" / "best_avg.bin").string()
            << "\n";
  return 0;
}

json aggregate_to_json(const AggregateReport& a) {
  json k_si = json::object();
  for (const auto& [k, v] : a.k_si) k_si[std::to_string(k)] = v;
  return json{{"one_s", a.one_s},         {"one_s_defined", a.one_s_defined},
              {"k_si", k_si},             {"m_si", a.m_si},
              {"m_si_defined", a.m_si_defined}, {"trf", a.trf},
              {"num_examples", a.num_examples}};
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data_dir,
                 const std::string& out_path, const std::string& label, int batch_size) {
  auto [params, meta] = load_checkpoint(ckpt_path);
  SeparatorModel model(meta.model);
  if (!params.index->same_as(*model.param_index()))
    throw std::runtime_error("checkpoint index does not match its embedded model config");
  params.index = model.param_index();

  std::string split_dir = data_dir;
  if (!fs::exists(fs::path(split_dir) / "manifest.jsonl") &&
      fs::exists(fs::path(data_dir) / "test" / "manifest.jsonl"))
    split_dir = (fs::path(data_dir) / "test").string();
  auto corpus = read_corpus(split_dir);

  auto records = evaluate_records(model, params, corpus, batch_size);
  const AggregateReport agg = aggregate(records);

  double mean_sisdr = 0.0, mean_sisdri = 0.0;
  std::size_t n_src = 0;
  json recs = json::array();
  for (const auto& r : records) {
    recs.push_back(json{{"id", r.example_id},
                        {"k", r.k_active},
                        {"per_source_sisdr", r.per_source_sisdr},
                        {"mixture_sisdr", r.mixture_sisdr},
                        {"sisdri", r.sisdri}});
    for (std::size_t i = 0; i < r.per_source_sisdr.size(); ++i) {
      mean_sisdr += r.per_source_sisdr[i];
      mean_sisdri += r.sisdri[i];
      ++n_src;
    }
  }
  if (n_src > 0) {
    mean_sisdr /= static_cast<double>(n_src);
    mean_sisdri /= static_cast<double>(n_src);
  }

  json out{{"label", label.empty() ? fs::path(ckpt_path).stem().string() : label},
           {"checkpoint", ckpt_path},
           {"aggregate", aggregate_to_json(agg)},
           {"mean_sisdr", mean_sisdr},
           {"mean_sisdri", mean_sisdri},
           {"records", recs}};
  std::ofstream f(out_path);
  if (!f) throw std::runtime_error("cannot write " + out_path);
  f << out.dump(2) << "\n";
  std::cout << "examples=" << agg.num_examples << " mean_sisdr=" << mean_sisdr
            << " dB mean_sisdri=" << mean_sisdri << " dB\n";
  return 0;
}

std::string fmt_cell(double v, bool defined = true) {
  if (!defined) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

int cmd_report(const std::vector<std::string>& files, const std::string& out_path) {
  std::ostringstream md;
  md << "## Separation quality (SISDR)\n\n";
  md << "| Method | SISDR | SISDRi |\n|---|---:|---:|\n";
  std::vector<json> loaded;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw std::invalid_argument("cannot open " + f);
    json j = json::parse(in);
    loaded.push_back(j);
    md << "| " << j.value("label", f) << " | " << fmt_cell(j.value("mean_sisdr", 0.0)) << " | "
       << fmt_cell(j.value("mean_sisdri", 0.0)) << " |\n";
  }
  md << "\n## Variable-source aggregates\n\n";
  md << "| Method | 1S | 2Si | 3Si | 4Si | MSi | TRF |\n|---|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& j : loaded) {
    const auto& a = j.at("aggregate");
    auto ksi = [&](int k) {
      const auto& m = a.at("k_si");
      const std::string key = std::to_string(k);
      return m.contains(key) ? fmt_cell(m.at(key).get<double>()) : std::string("-");
    };
    md << "| " << j.value("label", std::string("?")) << " | "
       << fmt_cell(a.at("one_s").get<double>(), a.at("one_s_defined").get<bool>()) << " | "
       << ksi(2) << " | " << ksi(3) << " | " << ksi(4) << " | "
       << fmt_cell(a.at("m_si").get<double>(), a.at("m_si_defined").get<bool>()) << " | "
       << fmt_cell(a.at("trf").get<double>()) << " |\n";
  }
  if (out_path.empty()) {
    std::cout << md.str();
  } else {
    std::ofstream f(out_path);
    if (!f) throw std::runtime_error("cannot write " + out_path);
    f << md.str();
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

int cmd_selftest() {
  const auto results = run_selfchecks();
  bool all = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name;
    if (!r.pass && !r.detail.empty()) std::cout << " - " << r.detail;
    std::cout << "\n";
    all = all && r.pass;
  }
  std::cout << (all ? "selftest: all checks passed\n" : "selftest: FAILURES\n");
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  apply_worker_cap();

  CLI::App app{"remixsep: unsupervised source-separation training at desk scale"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_path, ckpt_path, label;
  std::vector<std::string> report_files;
  std::optional<std::uint64_t> seed;
  bool log_plans = false;
  int eval_batch = 16;

  auto* synth = app.add_subcommand("synth-data", "synthesize a corpus to disk");
  synth->add_option("--config", config_path)->required();
  synth->add_option("--out", out_path)->required();
  synth->add_option("--seed", seed);

  auto* train = app.add_subcommand("train", "train a separator");
  train->add_option("--config", config_path)->required();
  train->add_option("--data", data_dir)->required();
  train->add_option("--out", out_path)->required();
  train->add_option("--seed", seed);
  train->add_flag("--log-plans", log_plans);

  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on a corpus");
  evaluate->add_option("--ckpt", ckpt_path)->required();
  evaluate->add_option("--data", data_dir)->required();
  evaluate->add_option("--out", out_path)->required();
  evaluate->add_option("--label", label);
  evaluate->add_option("--batch-size", eval_batch);

  auto* report = app.add_subcommand("report", "render Markdown tables from report files");
  report->add_option("files", report_files)->required();
  report->add_option("--out", out_path);

  app.add_subcommand("selftest", "run the module invariant suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand("synth-data")) return cmd_synth_data(config_path, out_path, seed);
    if (app.got_subcommand("train"))
      return cmd_train(config_path, data_dir, out_path, seed, log_plans);
    if (app.got_subcommand("evaluate"))
      return cmd_evaluate(ckpt_path, data_dir, out_path, label, eval_batch);
    if (app.got_subcommand("report")) return cmd_report(report_files, out_path);
    if (app.got_subcommand("selftest")) return cmd_selftest();
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
