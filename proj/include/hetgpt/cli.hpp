#pragma once

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hetgpt/checkpoint.hpp"
#include "hetgpt/graph_io.hpp"
#include "hetgpt/synth.hpp"
#include "hetgpt/tuner.hpp"

namespace hetgpt::cli {

// Exit codes: 0 ok, 2 configuration error, 3 checkpoint/fingerprint error,
// 4 numeric failure.

/// Flat key=value configuration file; '#' starts a comment, keys may repeat.
class ConfigMap {
 public:
  ConfigMap() = default;

  static ConfigMap from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    ConfigMap cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": expected key=value, got '" + line + "'");
      cfg.kv_.emplace(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  std::string get(const std::string& key) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? std::string() : it->second;
  }
  std::vector<std::string> all(const std::string& key) const {
    std::vector<std::string> out;
    auto [lo, hi] = kv_.equal_range(key);
    for (auto it = lo; it != hi; ++it) out.push_back(it->second);
    return out;
  }

 private:
  std::multimap<std::string, std::string> kv_;
};

namespace detail {

inline double to_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad real value '" + s + "'");
  }
}

inline long to_long(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad integer '" + s + "'");
  }
}

/// Applies config-file values to every flag the user did not pass, then the
/// HETGPT_SEED fallback for seeds.
struct Overrides {
  std::vector<std::pair<CLI::Option*, std::function<void(const std::string&)>>> slots;
  void bind(CLI::Option* opt, const std::string& key, const ConfigMap& cfg,
            const std::function<void(const std::string&)>& set) {
    if (opt->count() == 0 && cfg.has(key)) set(cfg.get(key));
  }
};

inline std::string dataset_id(const std::string& graph_path) {
  return std::filesystem::path(graph_path).stem().string();
}

inline void ensure_parent_writable(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::exists(parent))
    throw ConfigError("output directory '" + parent.string() + "' does not exist");
}

struct SplitConfig {
  int shots = 5;
  int val_size = 100;
  int test_size = 100;
};

inline Splits make_split(const HetGraph& g, const SplitConfig& sc, std::uint64_t seed) {
  return split(g, SplitSpec{sc.shots, sc.val_size, sc.test_size, seed});
}

inline std::string split_hash(const Splits& s) {
  std::ostringstream os;
  for (int v : s.labeled) os << "l" << v;
  for (int v : s.val) os << "v" << v;
  for (int v : s.test) os << "t" << v;
  return sha256_hex(os.str());
}

}  // namespace detail

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

// ---------------------------------------------------------------------------

inline int cmd_synth(const std::string& out_path, const ConfigMap& cfg,
                     SyntheticSpec spec, Streams io) {
  // Config-file shape overrides beyond the CLI flags.
  if (cfg.has("target")) {
    std::istringstream is(cfg.get("target"));
    std::string name, count, dim;
    if (!std::getline(is, name, ':') || !std::getline(is, count, ':') ||
        !std::getline(is, dim, ':'))
      throw ConfigError("config key 'target': expected name:count:dim");
    spec.target = {name, static_cast<int>(detail::to_long(count, "target")),
                   static_cast<int>(detail::to_long(dim, "target")), false};
  }
  const auto inters = cfg.all("intermediate");
  if (!inters.empty()) {
    spec.intermediates.clear();
    for (const std::string& row : inters) {
      std::istringstream is(row);
      std::string name, count, dim, hub;
      if (!std::getline(is, name, ':') || !std::getline(is, count, ':') ||
          !std::getline(is, dim, ':') || !std::getline(is, hub, ':'))
        throw ConfigError("config key 'intermediate': expected name:count:dim:hub");
      spec.intermediates.push_back({name, static_cast<int>(detail::to_long(count, "intermediate")),
                                    static_cast<int>(detail::to_long(dim, "intermediate")),
                                    detail::to_long(hub, "intermediate") != 0});
    }
  }

  detail::ensure_parent_writable(out_path);
  HetGraph g = generate(spec);
  std::vector<std::pair<std::string, std::string>> meta{
      {"generator", "stochastic-block"},
      {"classes", std::to_string(spec.classes)},
      {"p_in", std::to_string(spec.p_in)},
      {"p_out", std::to_string(spec.p_out)},
      {"signal", std::to_string(spec.signal)},
      {"seed", std::to_string(spec.seed)},
  };
  save_graph_file(g, out_path, meta);
  io.out << "wrote " << out_path << " (" << g.target_count() << " target nodes, "
         << g.num_classes() << " classes, fingerprint "
         << graph_fingerprint(g).substr(0, 12) << ")\n";
  return 0;
}

inline int cmd_pretrain(const std::string& graph_path, const std::string& out_path,
                        const EncoderConfig& cfg, Streams io) {
  HetGraph g = load_graph_file(graph_path);
  NeighborIndex index = build_neighbor_index(g);
  detail::ensure_parent_writable(out_path);
  PretrainResult r = pretrain(g, index, cfg);
  save_encoder_file(r.encoder, out_path);
  io.out << "pretrained " << detail::dataset_id(graph_path) << ": initial loss "
         << (r.losses.empty() ? 0.0 : r.losses.front()) << ", final loss "
         << (r.losses.empty() ? 0.0 : r.losses.back()) << "\n";
  io.out << "checkpoint " << out_path << " (params "
         << encoder_param_hash(r.encoder).substr(0, 12) << ")\n";
  return 0;
}

inline int cmd_tune(const std::string& graph_path, const std::string& checkpoint_path,
                    const std::string& out_dir, const detail::SplitConfig& sc,
                    TuneConfig cfg, int repeats, Streams io) {
  if (repeats < 1) throw ConfigError("tune: repeats must be >= 1");
  HetGraph g = load_graph_file(graph_path);
  NeighborIndex index = build_neighbor_index(g);
  FrozenEncoder enc = load_encoder_file(checkpoint_path);
  require_fingerprint_match(enc, g);
  if (!std::filesystem::exists(out_dir))
    throw ConfigError("output directory '" + out_dir + "' does not exist");

  const std::string results_path = out_dir + "/results.tsv";
  const bool fresh = !std::filesystem::exists(results_path);
  std::ofstream results(results_path, std::ios::app);
  if (!results) throw ConfigError("cannot write '" + results_path + "'");
  if (fresh) results << results_header() << "\n";
  std::ofstream timing(out_dir + "/timing.log", std::ios::app);

  const std::string dataset = detail::dataset_id(graph_path);
  std::vector<double> macros, micros;
  double epochs_total = 0.0;
  long trainable = 0;
  for (int k = 0; k < repeats; ++k) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(k);
    Splits splits = detail::make_split(g, sc, seed);
    TuneConfig run_cfg = cfg;
    run_cfg.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    TuneResult r = tune(g, index, enc, splits, run_cfg);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    timing << "tune\tseed=" << seed << "\twall_s=" << wall << "\n";

    ResultRow row;
    row.dataset = dataset;
    row.seed = std::to_string(seed);
    row.shots = sc.shots;
    row.token_count = run_cfg.token_count;
    row.lambda = run_cfg.lambda_orth;
    row.tau = run_cfg.tau;
    row.lr = run_cfg.lr;
    row.epochs_run = r.epochs_run;
    row.macro_f1 = r.test_metrics.macro_f1;
    row.micro_f1 = r.test_metrics.micro_f1;
    row.trainable_params = r.trainable_params;
    results << format_result_row(row) << "\n";

    macros.push_back(r.test_metrics.macro_f1);
    micros.push_back(r.test_metrics.micro_f1);
    epochs_total += r.epochs_run;
    trainable = r.trainable_params;

    std::ofstream prompt_out(out_dir + "/prompt_seed" + std::to_string(seed) + ".ckpt");
    if (!prompt_out) throw ConfigError("cannot write prompt checkpoint");
    save_prompt_state(r.state, g, encoder_param_hash(enc), prompt_out);
  }

  auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  auto std_of = [&](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
  };

  ResultRow summary;
  summary.dataset = dataset;
  summary.seed = "mean";
  summary.shots = sc.shots;
  summary.token_count = cfg.token_count;
  summary.lambda = cfg.lambda_orth;
  summary.tau = cfg.tau;
  summary.lr = cfg.lr;
  summary.epochs_run = epochs_total / repeats;
  summary.macro_f1 = mean_of(macros);
  summary.micro_f1 = mean_of(micros);
  summary.macro_f1_std = std_of(macros);
  summary.micro_f1_std = std_of(micros);
  summary.trainable_params = trainable;
  results << format_result_row(summary) << "\n";

  io.out << "tuned " << dataset << " over " << repeats << " seed(s): mean macro-F1 "
         << summary.macro_f1 << " (std " << summary.macro_f1_std << "), mean micro-F1 "
         << summary.micro_f1 << "\n";
  io.out << "results " << results_path << "\n";
  return 0;
}

inline int cmd_eval(const std::string& graph_path, const std::string& checkpoint_path,
                    const std::string& prompt_path, const detail::SplitConfig& sc,
                    std::uint64_t seed, const std::string& dump_embeddings,
                    const std::string& dump_attention, Streams io) {
  HetGraph g = load_graph_file(graph_path);
  NeighborIndex index = build_neighbor_index(g);
  FrozenEncoder enc = load_encoder_file(checkpoint_path);
  require_fingerprint_match(enc, g);

  std::ifstream pin(prompt_path);
  if (!pin) throw CheckpointError("cannot open prompt checkpoint '" + prompt_path + "'");
  std::string prompt_fp;
  PromptTuneState state = load_prompt_state(pin, &prompt_fp);
  if (prompt_fp != encoder_param_hash(enc))
    throw CheckpointError("prompt checkpoint was tuned against encoder " +
                          prompt_fp.substr(0, 12) + "..., loaded encoder is " +
                          encoder_param_hash(enc).substr(0, 12) + "...");

  Splits splits = detail::make_split(g, sc, seed);
  AggregationPlan plan = build_aggregation_plan(g, index);
  auto prop = build_propagation_matrices(g, index);
  TokenForward tokens = forward_tokens(g, plan, prop, enc, state);

  auto metrics_on = [&](const std::vector<int>& subset) {
    Tensor rows(static_cast<int>(subset.size()), tokens.node_projected.cols());
    std::vector<int> gold;
    for (std::size_t i = 0; i < subset.size(); ++i) {
      rows.row(static_cast<int>(i)) = tokens.node_projected.row(subset[i]);
      gold.push_back(g.labels()[static_cast<std::size_t>(subset[i])]);
    }
    Tensor probs = predict_proba(rows, tokens.class_projected,
                                 state.inference_temperature, state.tau);
    return evaluate(predict(probs), gold, g.num_classes());
  };
  Metrics val = metrics_on(splits.val);
  Metrics test = metrics_on(splits.test);
  char line[256];
  std::snprintf(line, sizeof(line), "val\tmacro_f1=%.6f\tmicro_f1=%.6f\n", val.macro_f1,
                val.micro_f1);
  io.out << line;
  std::snprintf(line, sizeof(line), "test\tmacro_f1=%.6f\tmicro_f1=%.6f\n", test.macro_f1,
                test.micro_f1);
  io.out << line;

  if (!dump_embeddings.empty()) {
    detail::ensure_parent_writable(dump_embeddings);
    std::ofstream dump(dump_embeddings);
    if (!dump) throw ConfigError("cannot write '" + dump_embeddings + "'");
    dump << "kind\tid\tlabel";
    for (int c = 0; c < tokens.node_projected.cols(); ++c) dump << "\tz" << c;
    dump << "\n";
    for (int i = 0; i < tokens.node_projected.rows(); ++i) {
      dump << "node\t" << i << "\t" << g.labels()[static_cast<std::size_t>(i)];
      for (int c = 0; c < tokens.node_projected.cols(); ++c)
        dump << "\t" << hetgpt::detail::fmt_double(tokens.node_projected(i, c));
      dump << "\n";
    }
    for (int k = 0; k < tokens.class_projected.rows(); ++k) {
      dump << "class_token\t" << k << "\t" << k;
      for (int c = 0; c < tokens.class_projected.cols(); ++c)
        dump << "\t" << hetgpt::detail::fmt_double(tokens.class_projected(k, c));
      dump << "\n";
    }
  }

  if (!dump_attention.empty()) {
    detail::ensure_parent_writable(dump_attention);
    std::ofstream dump(dump_attention);
    if (!dump) throw ConfigError("cannot write '" + dump_attention + "'");
    Tape tape;
    auto prompted = prompt_features_on_tape(tape, g, state.feature_prompt);
    EncodeComputation embed = encode_on_tape(tape, prompted, g, prop, enc.params);
    AggregationOutput agg = aggregate_on_tape(
        tape, embed.type_embeddings,
        embed.type_embeddings[static_cast<std::size_t>(g.target_type())], plan, state.agg);
    write_attention_dump(dump, tape, plan, agg);
  }
  return 0;
}

inline int cmd_compare(const std::string& graph_path, const std::string& checkpoint_path,
                       const std::string& out_dir, const detail::SplitConfig& sc,
                       TuneConfig cfg, int repeats, Streams io) {
  if (repeats < 1) throw ConfigError("compare: repeats must be >= 1");
  HetGraph g = load_graph_file(graph_path);
  NeighborIndex index = build_neighbor_index(g);
  FrozenEncoder enc = load_encoder_file(checkpoint_path);
  require_fingerprint_match(enc, g);
  if (!std::filesystem::exists(out_dir))
    throw ConfigError("output directory '" + out_dir + "' does not exist");

  const std::string report_path = out_dir + "/compare.tsv";
  const bool fresh = !std::filesystem::exists(report_path);
  std::ofstream report(report_path, std::ios::app);
  if (fresh)
    report << "dataset\tseed\tshots\tprompt_macro_f1\tprompt_micro_f1\t"
              "prompt_epochs_to_best\tprompt_params\tfinetune_macro_f1\t"
              "finetune_micro_f1\tfinetune_epochs_to_best\tfinetune_params\n";

  const std::string dataset = detail::dataset_id(graph_path);
  for (int k = 0; k < repeats; ++k) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(k);
    // Both arms must see the identical seed-derived split.
    Splits prompt_split = detail::make_split(g, sc, seed);
    Splits finetune_split = detail::make_split(g, sc, seed);
    if (detail::split_hash(prompt_split) != detail::split_hash(finetune_split))
      throw Error("compare: split derivation diverged between arms");

    TuneConfig run_cfg = cfg;
    run_cfg.seed = seed;
    TuneResult pt = tune(g, index, enc, prompt_split, run_cfg);
    FinetuneResult ft = baseline_finetune(g, index, enc, finetune_split, run_cfg);

    char row[512];
    std::snprintf(row, sizeof(row), "%s\t%llu\t%d\t%.6f\t%.6f\t%d\t%ld\t%.6f\t%.6f\t%d\t%ld\n",
                  dataset.c_str(), static_cast<unsigned long long>(seed), sc.shots,
                  pt.test_metrics.macro_f1, pt.test_metrics.micro_f1, pt.epochs_to_best,
                  pt.trainable_params, ft.test_metrics.macro_f1, ft.test_metrics.micro_f1,
                  ft.epochs_to_best, ft.trainable_params);
    report << row;

    auto write_curve = [&](const std::string& name, const std::vector<double>& losses,
                           const std::vector<double>& vals) {
      std::ofstream curve(out_dir + "/" + name);
      curve << "epoch\tloss\tval_macro_f1\n";
      for (std::size_t e = 0; e < losses.size(); ++e)
        curve << e << "\t" << hetgpt::detail::fmt_double(losses[e]) << "\t"
              << hetgpt::detail::fmt_double(vals[e]) << "\n";
    };
    write_curve("loss_prompt_seed" + std::to_string(seed) + ".tsv", pt.loss_curve,
                pt.val_curve);
    write_curve("loss_finetune_seed" + std::to_string(seed) + ".tsv", ft.loss_curve,
                ft.val_curve);

    io.out << "seed " << seed << ": prompt macro-F1 " << pt.test_metrics.macro_f1 << " ("
           << pt.trainable_params << " params, best at epoch " << pt.epochs_to_best
           << "), finetune macro-F1 " << ft.test_metrics.macro_f1 << " ("
           << ft.trainable_params << " params, best at epoch " << ft.epochs_to_best
           << ")\n";
  }
  io.out << "report " << report_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

/// Full argument grammar; returns the process exit code.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  Streams io{out, err};
  CLI::App app{"heterogeneous graph prompt tuning pipeline"};
  app.require_subcommand(1);

  std::string config_path, graph_path, checkpoint_path, prompt_path, out_path, out_dir;
  std::string dump_embeddings, dump_attention;
  std::uint64_t seed = 0;
  bool seed_given_anywhere = false;
  int repeats = 10;
  detail::SplitConfig sc;
  TuneConfig tune_cfg;
  EncoderConfig enc_cfg;
  SyntheticSpec synth_spec;

  // synth ---------------------------------------------------------------
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic benchmark graph");
  auto* sy_out = synth->add_option("--out", out_path, "output graph file");
  sy_out->required(false);
  auto* sy_cfgf = synth->add_option("--config", config_path, "key=value config file");
  auto* sy_seed = synth->add_option("--seed", seed, "generator seed");
  auto* sy_classes = synth->add_option("--classes", synth_spec.classes, "class count");
  auto* sy_pin = synth->add_option("--p-in", synth_spec.p_in, "within-class edge probability");
  auto* sy_pout = synth->add_option("--p-out", synth_spec.p_out, "cross-class edge probability");
  auto* sy_signal = synth->add_option("--signal", synth_spec.signal, "feature mean shift");

  // pretrain ------------------------------------------------------------
  CLI::App* pre = app.add_subcommand("pretrain", "contrastively pre-train the encoder");
  auto* pr_graph = pre->add_option("--graph", graph_path, "graph file")->required();
  auto* pr_out = pre->add_option("--out", out_path, "encoder checkpoint to write");
  auto* pr_cfgf = pre->add_option("--config", config_path, "key=value config file");
  auto* pr_seed = pre->add_option("--seed", seed, "training seed");
  auto* pr_dim = pre->add_option("--dim", enc_cfg.dim, "embedding width");
  auto* pr_hidden = pre->add_option("--hidden", enc_cfg.hidden, "projection hidden width");
  auto* pr_epochs = pre->add_option("--epochs", enc_cfg.epochs, "training epochs");
  auto* pr_lr = pre->add_option("--lr", enc_cfg.lr, "learning rate");
  auto* pr_tau = pre->add_option("--tau-pre", enc_cfg.tau_pre, "contrastive temperature");

  // shared tune/eval/compare options -------------------------------------
  auto add_split_opts = [&](CLI::App* cmd) {
    cmd->add_option("--shots", sc.shots, "labeled nodes per class")
        ->check(CLI::IsMember({1, 5, 20, 40, 60}));
    cmd->add_option("--val-size", sc.val_size, "validation node count");
    cmd->add_option("--test-size", sc.test_size, "test node count");
  };

  // tune ------------------------------------------------------------------
  CLI::App* tu = app.add_subcommand("tune", "prompt-tune over a frozen encoder");
  auto* tu_graph = tu->add_option("--graph", graph_path, "graph file")->required();
  auto* tu_ckpt = tu->add_option("--checkpoint", checkpoint_path, "encoder checkpoint")
                      ->required();
  auto* tu_outdir = tu->add_option("--out-dir", out_dir, "directory for results");
  auto* tu_cfgf = tu->add_option("--config", config_path, "key=value config file");
  auto* tu_seed = tu->add_option("--seed", seed, "base seed");
  auto* tu_repeats = tu->add_option("--repeats", repeats, "independent repetitions");
  add_split_opts(tu);
  auto* tu_k = tu->add_option("--K", tune_cfg.token_count, "feature tokens per type");
  auto* tu_lr = tu->add_option("--lr", tune_cfg.lr, "learning rate");
  auto* tu_lambda = tu->add_option("--lambda", tune_cfg.lambda_orth, "orthogonal weight");
  auto* tu_tau = tu->add_option("--tau", tune_cfg.tau, "similarity temperature");
  auto* tu_patience = tu->add_option("--patience", tune_cfg.patience, "early-stop patience");
  auto* tu_epochs = tu->add_option("--max-epochs", tune_cfg.max_epochs, "epoch budget");

  // eval ------------------------------------------------------------------
  CLI::App* ev = app.add_subcommand("eval", "evaluate a tuned prompt checkpoint");
  auto* ev_graph = ev->add_option("--graph", graph_path, "graph file")->required();
  auto* ev_ckpt = ev->add_option("--checkpoint", checkpoint_path, "encoder checkpoint")
                      ->required();
  auto* ev_prompt = ev->add_option("--prompt", prompt_path, "prompt checkpoint")->required();
  auto* ev_cfgf = ev->add_option("--config", config_path, "key=value config file");
  auto* ev_seed = ev->add_option("--seed", seed, "split seed");
  add_split_opts(ev);
  ev->add_option("--dump-embeddings", dump_embeddings, "write node/class tokens here");
  ev->add_option("--dump-attention", dump_attention, "write attention weights here");

  // compare ----------------------------------------------------------------
  CLI::App* co = app.add_subcommand("compare", "prompt tuning vs fine-tuning");
  auto* co_graph = co->add_option("--graph", graph_path, "graph file")->required();
  auto* co_ckpt = co->add_option("--checkpoint", checkpoint_path, "encoder checkpoint")
                      ->required();
  auto* co_outdir = co->add_option("--out-dir", out_dir, "directory for reports");
  auto* co_cfgf = co->add_option("--config", config_path, "key=value config file");
  auto* co_seed = co->add_option("--seed", seed, "base seed");
  auto* co_repeats = co->add_option("--repeats", repeats, "independent repetitions");
  add_split_opts(co);
  auto* co_k = co->add_option("--K", tune_cfg.token_count, "feature tokens per type");
  auto* co_lr = co->add_option("--lr", tune_cfg.lr, "learning rate");
  auto* co_lambda = co->add_option("--lambda", tune_cfg.lambda_orth, "orthogonal weight");
  auto* co_tau = co->add_option("--tau", tune_cfg.tau, "similarity temperature");
  auto* co_patience = co->add_option("--patience", tune_cfg.patience, "early-stop patience");
  auto* co_epochs = co->add_option("--max-epochs", tune_cfg.max_epochs, "epoch budget");

  std::vector<const char*> argv;
  argv.push_back("hetgpt");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    ConfigMap cfg;
    if (!config_path.empty()) cfg = ConfigMap::from_file(config_path);

    auto apply_d = [&](CLI::Option* opt, const std::string& key, double& var) {
      if (opt->count() == 0 && cfg.has(key)) var = detail::to_double(cfg.get(key), key);
    };
    auto apply_i = [&](CLI::Option* opt, const std::string& key, int& var) {
      if (opt->count() == 0 && cfg.has(key))
        var = static_cast<int>(detail::to_long(cfg.get(key), key));
    };
    auto apply_u = [&](CLI::Option* opt, const std::string& key, std::uint64_t& var) {
      if (opt->count() == 0 && cfg.has(key)) {
        var = static_cast<std::uint64_t>(detail::to_long(cfg.get(key), key));
        seed_given_anywhere = true;
      }
      if (opt->count() > 0) seed_given_anywhere = true;
    };
    auto apply_s = [&](CLI::Option* opt, const std::string& key, std::string& var) {
      if (opt->count() == 0 && cfg.has(key)) var = cfg.get(key);
    };

    // Seed precedence: flag, then config, then HETGPT_SEED, then 1.
    auto finish_seed = [&]() {
      if (!seed_given_anywhere) {
        const char* env = std::getenv("HETGPT_SEED");
        if (env) {
          seed = static_cast<std::uint64_t>(detail::to_long(env, "HETGPT_SEED"));
        } else {
          seed = 1;
        }
      }
    };

    if (*synth) {
      apply_u(sy_seed, "seed", seed);
      apply_i(sy_classes, "classes", synth_spec.classes);
      apply_d(sy_pin, "p_in", synth_spec.p_in);
      apply_d(sy_pout, "p_out", synth_spec.p_out);
      apply_d(sy_signal, "signal", synth_spec.signal);
      apply_s(sy_out, "out", out_path);
      (void)sy_cfgf;
      finish_seed();
      synth_spec.seed = seed;
      if (out_path.empty()) throw ConfigError("synth: --out (or config 'out') is required");
      return cmd_synth(out_path, cfg, synth_spec, io);
    }
    if (*pre) {
      apply_u(pr_seed, "seed", seed);
      apply_i(pr_dim, "dim", enc_cfg.dim);
      apply_i(pr_hidden, "hidden", enc_cfg.hidden);
      apply_i(pr_epochs, "epochs", enc_cfg.epochs);
      apply_d(pr_lr, "lr", enc_cfg.lr);
      apply_d(pr_tau, "tau_pre", enc_cfg.tau_pre);
      apply_s(pr_out, "out", out_path);
      (void)pr_graph;
      (void)pr_cfgf;
      finish_seed();
      enc_cfg.seed = seed;
      if (out_path.empty())
        throw ConfigError("pretrain: --out (or config 'out') is required");
      return cmd_pretrain(graph_path, out_path, enc_cfg, io);
    }

    auto apply_tune_common = [&](CLI::Option* o_seed, CLI::Option* o_repeats,
                                 CLI::Option* o_k, CLI::Option* o_lr, CLI::Option* o_lambda,
                                 CLI::Option* o_tau, CLI::Option* o_patience,
                                 CLI::Option* o_epochs, CLI::App* cmd) {
      apply_u(o_seed, "seed", seed);
      if (o_repeats) apply_i(o_repeats, "repeats", repeats);
      apply_i(o_k, "K", tune_cfg.token_count);
      apply_d(o_lr, "lr", tune_cfg.lr);
      apply_d(o_lambda, "lambda", tune_cfg.lambda_orth);
      apply_d(o_tau, "tau", tune_cfg.tau);
      apply_i(o_patience, "patience", tune_cfg.patience);
      apply_i(o_epochs, "max_epochs", tune_cfg.max_epochs);
      apply_i(cmd->get_option("--shots"), "shots", sc.shots);
      apply_i(cmd->get_option("--val-size"), "val_size", sc.val_size);
      apply_i(cmd->get_option("--test-size"), "test_size", sc.test_size);
      finish_seed();
      tune_cfg.seed = seed;
    };

    if (*tu) {
      apply_tune_common(tu_seed, tu_repeats, tu_k, tu_lr, tu_lambda, tu_tau, tu_patience,
                        tu_epochs, tu);
      apply_s(tu_outdir, "out_dir", out_dir);
      (void)tu_graph;
      (void)tu_ckpt;
      (void)tu_cfgf;
      if (out_dir.empty()) throw ConfigError("tune: --out-dir (or config 'out_dir') is required");
      return cmd_tune(graph_path, checkpoint_path, out_dir, sc, tune_cfg, repeats, io);
    }
    if (*ev) {
      apply_u(ev_seed, "seed", seed);
      apply_i(ev->get_option("--shots"), "shots", sc.shots);
      apply_i(ev->get_option("--val-size"), "val_size", sc.val_size);
      apply_i(ev->get_option("--test-size"), "test_size", sc.test_size);
      (void)ev_graph;
      (void)ev_ckpt;
      (void)ev_prompt;
      (void)ev_cfgf;
      finish_seed();
      return cmd_eval(graph_path, checkpoint_path, prompt_path, sc, seed, dump_embeddings,
                      dump_attention, io);
    }
    if (*co) {
      apply_tune_common(co_seed, co_repeats, co_k, co_lr, co_lambda, co_tau, co_patience,
                        co_epochs, co);
      apply_s(co_outdir, "out_dir", out_dir);
      (void)co_graph;
      (void)co_ckpt;
      (void)co_cfgf;
      if (out_dir.empty())
        throw ConfigError("compare: --out-dir (or config 'out_dir') is required");
      return cmd_compare(graph_path, checkpoint_path, out_dir, sc, tune_cfg, repeats, io);
    }
    throw ConfigError("no subcommand selected");
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace hetgpt::cli
