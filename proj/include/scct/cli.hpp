#pragma once

// Command surface: gen-data, train, decode, eval, probe-convergence.
// Exit codes: 0 success, 1 usage or config error, 2 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "scct/checkpoint.hpp"
#include "scct/corpus.hpp"
#include "scct/decode.hpp"
#include "scct/metrics.hpp"
#include "scct/probe.hpp"
#include "scct/train.hpp"

namespace scct::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DecodeRunConfig {
  std::string mode = "all";  // none | context | fusion | both | all
  double boost = 0.3;
  bool manifest_hints = false;  // per-utterance hints from the manifest
  std::size_t max_sc_iters = 0;  // 0 = keep the checkpoint's value
  double sc_threshold = 0.0;     // 0 = keep the checkpoint's value
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DecodeRunConfig, mode, boost, manifest_hints,
                                                max_sc_iters, sc_threshold)

struct RunConfig {
  ModelConfig model;
  OptimConfig optim;
  TrainConfig train;
  DatasetConfig dataset;
  DecodeRunConfig decode;
  ProbeConfig probe;
  std::string manifest;
  std::string hints;
  std::string checkpoint;
  std::string resume;
  std::string synth;
  std::string out_dir;
  std::string hyps;
  std::string refs;
  std::string baseline;
  std::string baseline_name;
  std::string report;
};

inline RunConfig parse_run_config(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  RunConfig rc;
  for (const auto& [key, v] : j.items()) {
    if (key == "model") rc.model = parse_strict<ModelConfig>(v, "model");
    else if (key == "optim") rc.optim = parse_strict<OptimConfig>(v, "optim");
    else if (key == "train") rc.train = parse_strict<TrainConfig>(v, "train");
    else if (key == "dataset") {
      rc.dataset = parse_strict<DatasetConfig>(v, "dataset");
      if (v.contains("synth")) rc.dataset.synth = parse_strict<SynthConfig>(v["synth"], "synth");
    } else if (key == "decode") rc.decode = parse_strict<DecodeRunConfig>(v, "decode");
    else if (key == "probe") rc.probe = parse_strict<ProbeConfig>(v, "probe");
    else if (key == "manifest") rc.manifest = v.get<std::string>();
    else if (key == "hints") rc.hints = v.get<std::string>();
    else if (key == "checkpoint") rc.checkpoint = v.get<std::string>();
    else if (key == "resume") rc.resume = v.get<std::string>();
    else if (key == "synth") rc.synth = v.get<std::string>();
    else if (key == "out_dir") rc.out_dir = v.get<std::string>();
    else if (key == "hyps") rc.hyps = v.get<std::string>();
    else if (key == "refs") rc.refs = v.get<std::string>();
    else if (key == "baseline") rc.baseline = v.get<std::string>();
    else if (key == "baseline_name") rc.baseline_name = v.get<std::string>();
    else if (key == "report") rc.report = v.get<std::string>();
    else throw FormatError("unknown config key '" + key + "'");
  }
  return rc;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot read config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return parse_run_config(j);
}

inline void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " is required");
  if (!std::filesystem::is_regular_file(path)) {
    throw UsageError(what + " '" + path + "' does not exist");
  }
}

inline void require_out_dir(const std::string& dir) {
  if (dir.empty()) throw UsageError("--out-dir is required");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw UsageError("cannot create output directory '" + dir + "'");
  }
  const auto probe = std::filesystem::path(dir) / ".write_test";
  std::ofstream os(probe);
  if (!os) throw UsageError("output directory '" + dir + "' is not writable");
  os.close();
  std::filesystem::remove(probe, ec);
}

// Synth settings: an explicit file wins, then synth.json next to the
// manifest, then the config's dataset section.
inline SynthConfig resolve_synth(const RunConfig& rc) {
  std::string path = rc.synth;
  if (path.empty() && !rc.manifest.empty()) {
    const auto sib = std::filesystem::path(rc.manifest).parent_path() / "synth.json";
    if (std::filesystem::is_regular_file(sib)) path = sib.string();
  }
  if (path.empty()) return rc.dataset.synth;
  std::ifstream is(path);
  if (!is) throw UsageError("cannot read synth config '" + path + "'");
  return parse_strict<SynthConfig>(nlohmann::json::parse(is), "synth");
}

struct DecodeMode {
  std::string name;
  bool context;
  bool fusion;
};

inline std::vector<DecodeMode> decode_modes(const std::string& mode) {
  const std::vector<DecodeMode> all = {
      {"none", false, false}, {"context", true, false}, {"fusion", false, true}, {"both", true, true}};
  if (mode == "all") return all;
  for (const auto& m : all)
    if (m.name == mode) return {m};
  throw UsageError("unknown decode mode '" + mode + "' (none|context|fusion|both|all)");
}

inline std::string transcripts_path(const std::string& out_dir, const std::string& mode) {
  return (std::filesystem::path(out_dir) / ("transcripts_" + mode + ".txt")).string();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os << text;
  if (!os) throw std::runtime_error("failed writing '" + path + "'");
}

// ---- commands -------------------------------------------------------------

inline void cmd_gen_data(const RunConfig& rc, std::ostream& out) {
  require_out_dir(rc.out_dir);
  const Dataset ds = generate_dataset(rc.dataset);
  const std::filesystem::path dir(rc.out_dir);
  write_manifest((dir / "train.jsonl").string(), ds.train);
  write_manifest((dir / "test.jsonl").string(), ds.test);
  write_lines((dir / "rare_hints.txt").string(), ds.rare_hints());
  write_lines((dir / "negative_pool.txt").string(), ds.negative_pool);
  write_text((dir / "synth.json").string(), nlohmann::json(rc.dataset.synth).dump(2) + "\n");
  write_text((dir / "dataset.json").string(), nlohmann::json(rc.dataset).dump(2) + "\n");
  out << "wrote " << ds.train.size() << " train, " << ds.test.size() << " test utterances, "
      << ds.rare.size() << " rare hints to " << rc.out_dir << "\n";
}

inline void cmd_train(const RunConfig& rc, std::ostream& out) {
  require_file(rc.manifest, "--manifest");
  if (!rc.resume.empty()) require_file(rc.resume, "--resume");
  require_out_dir(rc.out_dir);
  rc.model.validate();
  const SynthConfig synth = resolve_synth(rc);
  const auto manifest = read_manifest(rc.manifest);
  std::optional<Checkpoint> resume;
  if (!rc.resume.empty()) resume = load_checkpoint(rc.resume, rc.model);
  TrainConfig tc = rc.train;
  tc.out_dir = rc.out_dir;
  const TrainResult r = train_loop(manifest, synth, rc.model, rc.optim, tc, resume);
  out << "trained to step " << r.optim.step << " (" << r.epochs_completed << " epochs)";
  if (!r.curve.empty()) out << ", last loss " << r.curve.back().loss;
  out << "\ncheckpoint " << checkpoint_path(rc.out_dir) << "\n";
}

inline void cmd_decode(const RunConfig& rc, std::ostream& out) {
  require_file(rc.checkpoint, "--checkpoint");
  require_file(rc.manifest, "--manifest");
  const auto modes = decode_modes(rc.decode.mode);
  bool need_hints = false;
  for (const auto& m : modes) need_hints = need_hints || m.context || m.fusion;
  if (need_hints && !rc.decode.manifest_hints) require_file(rc.hints, "--hints");
  if (rc.decode.boost < 0.0) throw UsageError("--boost must be >= 0");
  require_out_dir(rc.out_dir);

  const Checkpoint ck = load_checkpoint(rc.checkpoint);
  ModelConfig cfg = ck.config;
  if (rc.decode.max_sc_iters) cfg.max_sc_iters = rc.decode.max_sc_iters;
  if (rc.decode.sc_threshold > 0.0) cfg.sc_threshold = rc.decode.sc_threshold;
  cfg.validate();
  SynthConfig synth = ck.extra.contains("synth") ? ck.extra["synth"].get<SynthConfig>()
                                                  : resolve_synth(rc);
  if (!rc.synth.empty()) synth = resolve_synth(rc);
  const Vocab vocab;
  const auto manifest = read_manifest(rc.manifest);
  const std::vector<TokenSeq> file_hints =
      need_hints && !rc.decode.manifest_hints ? tokenize_hints(read_lines(rc.hints), vocab)
                                              : std::vector<TokenSeq>{};

  for (const auto& m : modes) {
    std::vector<std::string> lines;
    lines.reserve(manifest.size());
    for (const auto& e : manifest) {
      const Tensor feats =
          synth_features(vocab.tokenize(e.spoken), synth, e.seed, std::nullopt, vocab.size());
      const std::vector<TokenSeq> hints =
          rc.decode.manifest_hints ? tokenize_hints(e.hints, vocab) : file_hints;
      DecodeOptions opt;
      opt.use_context = m.context;
      opt.use_fusion = m.fusion && !hints.empty();
      opt.boost = rc.decode.boost;
      lines.push_back(vocab.detokenize(greedy_decode(feats, m.context || m.fusion ? hints : std::vector<TokenSeq>{},
                                                     ck.params, cfg, opt)));
    }
    const std::string path = transcripts_path(rc.out_dir, m.name);
    write_lines(path, lines);
    out << "mode " << m.name << ": " << lines.size() << " transcripts -> " << path << "\n";
  }
}

inline void cmd_eval(const RunConfig& rc, std::ostream& out) {
  require_file(rc.hyps, "--hyps");
  if (rc.refs.empty() && rc.manifest.empty()) throw UsageError("--refs or --manifest is required");
  std::vector<std::string> refs;
  if (!rc.refs.empty()) {
    require_file(rc.refs, "--refs");
  } else {
    require_file(rc.manifest, "--manifest");
  }
  if (!rc.hints.empty()) require_file(rc.hints, "--hints");
  if (!rc.baseline.empty()) require_file(rc.baseline, "--baseline");

  // Transcript files may legitimately hold empty lines, so read them raw.
  auto read_raw = [](const std::string& path) {
    std::ifstream is(path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(line);
    }
    return lines;
  };
  const auto hyps = read_raw(rc.hyps);
  if (!rc.refs.empty()) {
    refs = read_raw(rc.refs);
  } else {
    for (const auto& e : read_manifest(rc.manifest)) refs.push_back(e.text);
  }
  if (hyps.size() != refs.size()) {
    throw UsageError("transcript count " + std::to_string(hyps.size()) +
                     " does not match reference count " + std::to_string(refs.size()));
  }
  const std::vector<std::string> hint_words =
      rc.hints.empty() ? std::vector<std::string>{} : read_lines(rc.hints);
  const std::vector<std::vector<std::string>> hints(refs.size(), hint_words);

  std::optional<EvalReport> base;
  if (!rc.baseline.empty()) {
    std::ifstream is(rc.baseline);
    base = nlohmann::json::parse(is).get<EvalReport>();
  }
  const std::string base_name = rc.baseline_name.empty() ? rc.baseline : rc.baseline_name;
  const EvalReport rep = evaluate(hyps, refs, hints, base ? &*base : nullptr, base_name);
  if (!rc.report.empty()) write_text(rc.report, nlohmann::json(rep).dump(2) + "\n");
  out << format_report_table(rep);
}

inline void cmd_probe(const RunConfig& rc, std::ostream& out) {
  require_file(rc.checkpoint, "--checkpoint");
  require_file(rc.manifest, "--manifest");
  if (!rc.hints.empty()) require_file(rc.hints, "--hints");
  if (rc.probe.iterations < 6) throw UsageError("--iters must be >= 6");
  if (rc.probe.resamples < 2) throw UsageError("--resamples must be >= 2");
  const Checkpoint ck = load_checkpoint(rc.checkpoint);
  SynthConfig synth = ck.extra.contains("synth") ? ck.extra["synth"].get<SynthConfig>()
                                                  : resolve_synth(rc);
  if (!rc.synth.empty()) synth = resolve_synth(rc);
  const Vocab vocab;
  std::vector<Utterance> data;
  for (const auto& e : read_manifest(rc.manifest)) data.push_back(materialize(e, synth, vocab));
  const std::vector<TokenSeq> hints =
      rc.hints.empty() ? std::vector<TokenSeq>{} : tokenize_hints(read_lines(rc.hints), vocab);
  const ProbeReport rep = probe_convergence(data, hints, ck.params, ck.config, rc.probe);
  if (!rc.report.empty()) write_text(rc.report, nlohmann::json(rep).dump(2) + "\n");
  out << format_probe_table(rep);
}

// ---- entry point ----------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Self-consistent context transducer toolkit"};
  app.require_subcommand(1);
  std::string config_path;

  struct Flags {
    std::optional<std::string> manifest, hints, checkpoint, resume, synth, out_dir, hyps, refs,
        baseline, baseline_name, report, mode;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> num_train, num_test, num_rare, epochs, batch_size, max_steps,
        log_every, iters, cells, resamples, max_sc_iters;
    std::optional<double> lr, boost, threshold, noise;
    bool no_shuffle = false, manifest_hints = false;
  } f;

  auto add_config = [&](CLI::App* sc) {
    sc->add_option("--config", config_path, "JSON run config; flags override it");
  };
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus and hint pools");
  add_config(gen);
  gen->add_option("--out-dir", f.out_dir);
  gen->add_option("--seed", f.seed);
  gen->add_option("--num-train", f.num_train);
  gen->add_option("--num-test", f.num_test);
  gen->add_option("--num-rare", f.num_rare);
  gen->add_option("--noise", f.noise, "feature noise sigma");

  auto* train = app.add_subcommand("train", "Train a model on a manifest");
  add_config(train);
  train->add_option("--manifest", f.manifest);
  train->add_option("--synth", f.synth, "synth.json written by gen-data");
  train->add_option("--out-dir", f.out_dir);
  train->add_option("--resume", f.resume, "checkpoint to continue from");
  train->add_option("--seed", f.seed);
  train->add_option("--epochs", f.epochs);
  train->add_option("--batch-size", f.batch_size);
  train->add_option("--max-steps", f.max_steps);
  train->add_option("--lr", f.lr);
  train->add_option("--log-every", f.log_every);
  train->add_option("--max-sc-iters", f.max_sc_iters);
  train->add_flag("--no-shuffle", f.no_shuffle);

  auto* decode = app.add_subcommand("decode", "Greedy decoding with optional hints and fusion");
  add_config(decode);
  decode->add_option("--checkpoint", f.checkpoint);
  decode->add_option("--manifest", f.manifest);
  decode->add_option("--hints", f.hints, "one hint per line");
  decode->add_option("--synth", f.synth);
  decode->add_option("--out-dir", f.out_dir);
  decode->add_option("--mode", f.mode, "none|context|fusion|both|all");
  decode->add_option("--boost", f.boost, "per-token fusion boost");
  decode->add_option("--max-sc-iters", f.max_sc_iters);
  decode->add_option("--sc-threshold", f.threshold);
  decode->add_flag("--manifest-hints", f.manifest_hints, "use each utterance's own hints");

  auto* eval = app.add_subcommand("eval", "Score transcripts: WER, WERR, OOV accuracy");
  add_config(eval);
  eval->add_option("--hyps", f.hyps);
  eval->add_option("--refs", f.refs, "reference transcripts, one per line");
  eval->add_option("--manifest", f.manifest, "references from a manifest");
  eval->add_option("--hints", f.hints);
  eval->add_option("--baseline", f.baseline, "baseline report JSON for WERR");
  eval->add_option("--baseline-name", f.baseline_name);
  eval->add_option("--report", f.report, "write the report JSON here");

  auto* probe = app.add_subcommand("probe-convergence", "Per-iteration self-consistency diffs");
  add_config(probe);
  probe->add_option("--checkpoint", f.checkpoint);
  probe->add_option("--manifest", f.manifest);
  probe->add_option("--hints", f.hints);
  probe->add_option("--synth", f.synth);
  probe->add_option("--iters", f.iters);
  probe->add_option("--cells", f.cells);
  probe->add_option("--resamples", f.resamples);
  probe->add_option("--sc-threshold", f.threshold);
  probe->add_option("--seed", f.seed);
  probe->add_option("--report", f.report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    RunConfig rc = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    auto set = [](auto& dst, const auto& src) {
      if (src) dst = *src;
    };
    set(rc.manifest, f.manifest);
    set(rc.hints, f.hints);
    set(rc.checkpoint, f.checkpoint);
    set(rc.resume, f.resume);
    set(rc.synth, f.synth);
    set(rc.out_dir, f.out_dir);
    set(rc.hyps, f.hyps);
    set(rc.refs, f.refs);
    set(rc.baseline, f.baseline);
    set(rc.baseline_name, f.baseline_name);
    set(rc.report, f.report);

    if (gen->parsed()) {
      if (f.seed) {
        rc.dataset.seed = *f.seed;
        rc.dataset.synth.dataset_seed = *f.seed;
      }
      set(rc.dataset.num_train, f.num_train);
      set(rc.dataset.num_test, f.num_test);
      set(rc.dataset.num_rare, f.num_rare);
      set(rc.dataset.synth.noise_sigma, f.noise);
      cmd_gen_data(rc, out);
    } else if (train->parsed()) {
      set(rc.train.seed, f.seed);
      set(rc.train.epochs, f.epochs);
      set(rc.train.batch_size, f.batch_size);
      set(rc.train.max_steps, f.max_steps);
      set(rc.train.log_every, f.log_every);
      set(rc.optim.lr, f.lr);
      set(rc.model.max_sc_iters, f.max_sc_iters);
      if (f.no_shuffle) rc.train.shuffle = false;
      cmd_train(rc, out);
    } else if (decode->parsed()) {
      set(rc.decode.mode, f.mode);
      set(rc.decode.boost, f.boost);
      set(rc.decode.max_sc_iters, f.max_sc_iters);
      set(rc.decode.sc_threshold, f.threshold);
      if (f.manifest_hints) rc.decode.manifest_hints = true;
      cmd_decode(rc, out);
    } else if (eval->parsed()) {
      cmd_eval(rc, out);
    } else if (probe->parsed()) {
      set(rc.probe.iterations, f.iters);
      set(rc.probe.cells, f.cells);
      set(rc.probe.resamples, f.resamples);
      set(rc.probe.threshold, f.threshold);
      set(rc.probe.seed, f.seed);
      cmd_probe(rc, out);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const ContractError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const DimensionError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return kRuntime;
  }
  return kOk;
}

}  // namespace scct::cli
