#include "vab/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "vab/audio_io.hpp"
#include "vab/bench.hpp"
#include "vab/checkpoint.hpp"
#include "vab/codec.hpp"
#include "vab/config.hpp"
#include "vab/errors.hpp"
#include "vab/metrics.hpp"
#include "vab/sampler.hpp"
#include "vab/training.hpp"

#ifndef VAB_GIT_DESCRIBE
#define VAB_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;

namespace vab {

namespace {

std::string fnv_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// State shared by every subcommand.
struct Run {
  std::string command;
  Config cfg;
  fs::path out_dir;
  std::ostream& out;
  std::vector<std::string> outputs;  // relative to out_dir
  std::vector<std::pair<std::string, std::string>> results;

  fs::path output(const std::string& name) {
    outputs.push_back(name);
    return out_dir / name;
  }
  void result(const std::string& key, const std::string& value) {
    results.emplace_back(key, value);
    out << key << ": " << value << "\n";
  }
  std::uint64_t seed() const { return cfg.get_u64("seed"); }
};

// Resolves an input path key; a missing file is a validation error naming the stage.
std::string input(const Run& run, const std::string& key, const std::string& stage) {
  const auto& p = run.cfg.get(key);
  if (p.empty()) throw ValidationError(run.command + ": " + key + " is not set (produced by `" + stage + "`)");
  if (!fs::exists(p)) throw ValidationError(run.command + ": " + key + "=" + p + " does not exist (run `" + stage + "`)");
  return p;
}

// Loader failures on user-supplied inputs are validation errors.
template <class F>
auto load_input(const std::string& what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    throw ValidationError(what + ": " + e.what());
  }
}

std::vector<PairedSample> split_of(const Run& run, const std::string& split) {
  const auto dir = input(run, "in.data", "datagen");
  return load_input("dataset " + split, [&] { return load_split(dir, split); });
}

Codebooks codebooks_of(const Run& run) {
  const auto p = input(run, "in.codec", "codec-train");
  return load_input("codebooks", [&] { return load_codebooks(p); });
}

MultiwayModel model_of(const Run& run, const std::string& key, const std::string& kind, const std::string& stage) {
  const auto p = input(run, key, stage);
  return load_input(key, [&] { return load_model(p, kind); });
}

EvalProbe probe_of(const Run& run) {
  const auto p = input(run, "in.eval_probe", "probe-train --set probe.target=eval");
  auto ck = load_input("eval probe", [&] { return load_checkpoint(p); });
  if (ck.kind != "eval_probe") throw ValidationError("in.eval_probe: checkpoint kind '" + ck.kind + "' is not eval_probe");
  return EvalProbe::from_checkpoint(ck.config_text, std::move(ck.params));
}

StepCallback progress(Run& run, const std::string& stage, std::int64_t total) {
  const std::int64_t every = std::max<std::int64_t>(1, total / 20);
  return [&run, stage, every, total](std::int64_t step, double loss) {
    if ((step + 1) % every == 0 || step + 1 == total) {
      run.out << stage << " step " << (step + 1) << "/" << total << " loss " << fmt(loss) << "\n";
      run.out.flush();
    }
  };
}

void write_log(Run& run, const std::string& name, const TrainLog& log) {
  std::ofstream f(run.output(name));
  f << "step\tloss\tlr\n";
  for (std::size_t i = 0; i < log.loss.size(); ++i) {
    f << i << '\t' << fmt(log.loss[i]) << '\t' << (i < log.lr.size() ? fmt(log.lr[i]) : "") << '\n';
  }
}

std::size_t visual_factors(const Run& run) { return run.cfg.get_size("data.visual_factors"); }
std::size_t composite_classes(const Run& run) {
  return run.cfg.get_size("data.audio_factors") * run.cfg.get_size("data.visual_factors");
}

// --------------------------------------------------------------- subcommands

void cmd_datagen(Run& run) {
  const auto ds = dataset_config(run.cfg);
  const auto& names = split_names();
  for (const auto& split : run.cfg.get_list("data.splits")) {
    const auto it = std::find(names.begin(), names.end(), split);
    if (it == names.end()) throw ValidationError("data.splits: unknown split '" + split + "'");
    const auto index = static_cast<std::uint64_t>(it - names.begin());
    const auto samples = generate_dataset(ds, index);
    fs::create_directories(run.out_dir / split);
    std::vector<ManifestEntry> entries;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "%05zu", i);
      ManifestEntry e{i, samples[i].seed, samples[i].label, std::string(stem) + ".wav", std::string(stem) + ".vabv"};
      write_wav(samples[i].waveform, run.output(split + "/" + e.wav_path).string());
      write_visual(samples[i].visual, run.output(split + "/" + e.visual_path).string());
      entries.push_back(e);
    }
    write_manifest(entries, run.output(split + "/manifest.txt").string());
    run.result("clips." + split, std::to_string(samples.size()));
  }
}

void cmd_codec_train(Run& run) {
  const auto train = split_of(run, "train");
  std::vector<Waveform> corpus;
  for (const auto& s : train) corpus.push_back(s.waveform);
  CodebookTrainingStats stats;
  const auto cb = train_codebooks(corpus, codec_config(run.cfg), &stats);
  save_codebooks(cb, run.output("codebooks.vabc").string());
  run.result("frames", std::to_string(stats.frames));
  for (std::size_t l = 0; l < stats.residual_norm.size(); ++l) {
    run.result("residual_norm.level" + std::to_string(l), fmt(stats.residual_norm[l]));
  }
}

void cmd_codec_eval(Run& run) {
  const auto cb = codebooks_of(run);
  const auto test = split_of(run, "test");
  std::ofstream f(run.output("codec_eval.tsv"));
  f << "levels_used\tmse\tsnr_db\n";
  for (std::size_t k = 1; k <= cb.config.levels; ++k) {
    double mse = 0.0, snr = 0.0;
    for (const auto& s : test) {
      const auto rec = decode(encode(s.waveform, cb), cb, k);
      mse += recon_mse(s.waveform, rec);
      snr += recon_snr(s.waveform, rec);
    }
    mse /= static_cast<double>(test.size());
    snr /= static_cast<double>(test.size());
    f << k << '\t' << fmt(mse) << '\t' << fmt(snr) << '\n';
    run.result("mse.levels" + std::to_string(k), fmt(mse));
  }
}

void cmd_pretrain(Run& run, bool c2f) {
  const auto cb = codebooks_of(run);
  const auto train = encode_dataset(split_of(run, "train"), cb, visual_factors(run));
  const auto valid = encode_dataset(split_of(run, "valid"), cb, visual_factors(run));
  const auto ds = dataset_config(run.cfg);
  ModelConfig mc = backbone_config(run.cfg, ds.visual_dim, ds.visual_frames());
  if (c2f) mc = ModelConfig::coarse_to_fine(mc, cb.config.levels);
  const std::string ns = c2f ? "c2f" : "pretrain";
  const auto pc = pretrain_config(run.cfg, ns);
  MultiwayModel model(mc);
  run.result("parameters", std::to_string(model.params().parameter_count()));
  const auto log = pretrain(model, train, pc, progress(run, ns, pc.schedule.steps));
  write_log(run, ns + "_log.tsv", log);
  const double val = validation_loss(model, valid, pc.mask_ratio, derive_seed(run.seed(), {0x7a1}));
  run.result("validation_loss", fmt(val));
  save_model(model, c2f ? "c2f" : "backbone", {{"stage", ns}, {"validation_loss", fmt(val)}},
             run.output(c2f ? "c2f.vabm" : "backbone.vabm").string());
}

void report_retrieval(Run& run, const RetrievalResult& r) {
  const char* k[] = {"1", "5", "10"};
  std::ofstream f(run.output("retrieval.tsv"));
  f << "direction\tR@1\tR@5\tR@10\n";
  f << "V->A\t" << fmt(r.visual_to_audio[0]) << '\t' << fmt(r.visual_to_audio[1]) << '\t'
    << fmt(r.visual_to_audio[2]) << '\n';
  f << "A->V\t" << fmt(r.audio_to_visual[0]) << '\t' << fmt(r.audio_to_visual[1]) << '\t'
    << fmt(r.audio_to_visual[2]) << '\n';
  for (int i = 0; i < 3; ++i) run.result(std::string("V->A R@") + k[i], fmt(r.visual_to_audio[i]));
  for (int i = 0; i < 3; ++i) run.result(std::string("A->V R@") + k[i], fmt(r.audio_to_visual[i]));
}

void cmd_finetune_contrastive(Run& run) {
  const auto cb = codebooks_of(run);
  auto model = model_of(run, "in.backbone", "backbone", "pretrain");
  const auto train = encode_dataset(split_of(run, "train"), cb, visual_factors(run));
  const auto test = encode_dataset(split_of(run, "test"), cb, visual_factors(run));
  const auto cc = contrastive_config(run.cfg);
  auto state = make_contrastive_state(cc.initial_tau);
  const auto log = contrastive_finetune(model, state, train, cc, progress(run, "contrastive", cc.schedule.steps));
  write_log(run, "contrastive_log.tsv", log);
  run.result("tau", fmt(state.tau()));
  report_retrieval(run, evaluate_retrieval(model, test));
  save_model(model, "contrastive", {{"stage", "finetune-contrastive"}, {"tau", fmt(state.tau())}},
             run.output("contrastive.vabm").string());
}

void cmd_retrieve(Run& run) {
  const auto cb = codebooks_of(run);
  const auto model = model_of(run, "in.backbone", "", "finetune-contrastive");
  const auto test = encode_dataset(split_of(run, "test"), cb, visual_factors(run));
  report_retrieval(run, evaluate_retrieval(model, test));
}

void save_head(Run& run, const ClassifierHead& head, ClassifyMode mode, const std::string& name) {
  Checkpoint ck;
  ck.kind = "head";
  ck.config_text = "classes=" + std::to_string(head.classes) + "\nmode=" + to_string(mode) + "\n";
  ck.params = head.params.deep_copy();
  save_checkpoint(ck, run.output(name).string());
}

// Pretrained backbone if in.backbone is set, else a fresh random one.
MultiwayModel backbone_or_random(Run& run) {
  if (!run.cfg.get("in.backbone").empty()) return model_of(run, "in.backbone", "", "pretrain");
  const auto ds = dataset_config(run.cfg);
  run.result("backbone", "random");
  return MultiwayModel(backbone_config(run.cfg, ds.visual_dim, ds.visual_frames()));
}

void cmd_finetune_classify(Run& run) {
  const auto cb = codebooks_of(run);
  auto model = backbone_or_random(run);
  const auto train = encode_dataset(split_of(run, "train"), cb, visual_factors(run));
  const auto test = encode_dataset(split_of(run, "test"), cb, visual_factors(run));
  const auto mode = parse_classify_mode(run.cfg.get("classify.mode"));
  const auto cc = classify_config(run.cfg, "classify", composite_classes(run));
  ClassifierHead head(model.config().d_emb, cc.classes, derive_seed(run.seed(), {0xc1a5}));
  const auto r = classify_finetune(model, head, train, test, mode, cc, progress(run, "classify", cc.schedule.steps));
  write_log(run, "classify_log.tsv", r.log);
  run.result("mode", to_string(mode));
  run.result("accuracy", fmt(r.accuracy));
  save_model(model, "classify", {{"stage", "finetune-classify"}, {"mode", to_string(mode)}},
             run.output("classify.vabm").string());
  save_head(run, head, mode, "classify_head.vabm");
}

void cmd_probe_train(Run& run) {
  const auto target = run.cfg.get("probe.target");
  if (target == "eval") {
    const auto probe_split = split_of(run, "probe");
    std::vector<Waveform> clips;
    std::vector<std::size_t> labels;
    for (const auto& s : probe_split) {
      clips.push_back(s.waveform);
      labels.push_back(s.label.audio_factor);
    }
    const auto cc = codec_config(run.cfg);
    EvalProbe probe(run.cfg.get_size("data.audio_factors"), run.cfg.get_size("probe.hidden"),
                    derive_seed(run.seed(), {0xe7a1}));
    const Matrix feats = EvalProbe::waveform_features(clips, cc);
    probe.train(feats, labels, run.cfg.get_int("probe.eval_steps"));
    const auto pred = probe.predict(feats);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
    run.result("train_accuracy", fmt(static_cast<double>(hit) / static_cast<double>(pred.size())));
    // Held-out check on the test split.
    const auto test = split_of(run, "test");
    std::vector<Waveform> tclips;
    for (const auto& s : test) tclips.push_back(s.waveform);
    const auto tpred = probe.predict(EvalProbe::waveform_features(tclips, cc));
    hit = 0;
    for (std::size_t i = 0; i < tpred.size(); ++i) hit += tpred[i] == test[i].label.audio_factor;
    run.result("test_accuracy", fmt(static_cast<double>(hit) / static_cast<double>(tpred.size())));
    Checkpoint ck{"eval_probe", probe.config_text(), {{"stage", "probe-train"}}, probe.params().deep_copy()};
    save_checkpoint(ck, run.output("eval_probe.vabm").string());
    return;
  }
  if (target != "linear") throw ValidationError("probe.target must be linear or eval, got '" + target + "'");
  const auto cb = codebooks_of(run);
  const auto model = backbone_or_random(run);
  const auto train = encode_dataset(split_of(run, "train"), cb, visual_factors(run));
  const auto test = encode_dataset(split_of(run, "test"), cb, visual_factors(run));
  const auto mode = parse_classify_mode(run.cfg.get("classify.mode"));
  const auto cc = classify_config(run.cfg, "probe", composite_classes(run));
  ClassifierHead head(model.config().d_emb, cc.classes, derive_seed(run.seed(), {0x9b0e}));
  const auto r = linear_probe(model, head, train, test, mode, cc, progress(run, "probe", cc.schedule.steps));
  write_log(run, "probe_log.tsv", r.log);
  run.result("mode", to_string(mode));
  run.result("accuracy", fmt(r.accuracy));
  save_head(run, head, mode, "probe_head.vabm");
}

void cmd_generate(Run& run) {
  const auto cb = codebooks_of(run);
  const auto backbone = model_of(run, "in.backbone", "backbone", "pretrain");
  const std::size_t levels = run.cfg.get_size("decode.levels");
  std::optional<MultiwayModel> c2f;
  if (levels > backbone.config().input_levels) c2f = model_of(run, "in.c2f", "c2f", "c2f-train");
  const auto test = split_of(run, "test");
  const auto count = std::min(run.cfg.get_size("decode.count"), test.size());
  auto dc = decode_config(run.cfg);
  const auto base_seed = dc.seed;
  std::ofstream index(run.output("generated.tsv"));
  index << "id\taudio_factor\tvisual_factor\tinvocations\n";
  for (std::size_t i = 0; i < count; ++i) {
    dc.seed = derive_seed(base_seed, {i});
    const auto t0 = std::chrono::steady_clock::now();
    const auto g = generate(test[i].visual, cb, backbone, c2f ? &*c2f : nullptr, levels, test[i].waveform.seconds(), dc);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char stem[32];
    std::snprintf(stem, sizeof stem, "%05zu", i);
    write_wav(g.waveform, run.output(std::string(stem) + ".wav").string());
    write_tokens(g.tokens, cb.config.entries, run.output(std::string(stem) + ".vabt").string());
    std::ofstream(run.output(std::string(stem) + ".trace.tsv")) << g.trace.to_table();
    if (g.c2f_trace) std::ofstream(run.output(std::string(stem) + ".c2f_trace.tsv")) << g.c2f_trace->to_table();
    const auto inv = g.trace.invocations + (g.c2f_trace ? g.c2f_trace->invocations : 0);
    index << i << '\t' << test[i].label.audio_factor << '\t' << test[i].label.visual_factor << '\t' << inv << '\n';
    run.out << "generated " << stem << ".wav (" << inv << " invocations, " << fmt(secs) << " s)\n";
  }
  run.result("clips", std::to_string(count));
}

std::vector<Waveform> wavs_in(const std::string& dir, const std::string& key) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".wav") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError(key + ": no .wav files in " + dir);
  std::vector<Waveform> out;
  for (const auto& f : files) out.push_back(load_input(f.string(), [&] { return read_wav(f.string()); }));
  return out;
}

void cmd_evaluate(Run& run) {
  const auto probe = probe_of(run);
  const auto cc = codec_config(run.cfg);
  const auto ref = wavs_in(input(run, "in.reference", "datagen"), "in.reference");
  const auto gen = wavs_in(input(run, "in.generated", "generate"), "in.generated");
  if (ref.size() != gen.size()) {
    throw ValidationError("evaluate: " + std::to_string(ref.size()) + " reference vs " + std::to_string(gen.size()) +
                          " generated clips are not paired");
  }
  const Matrix rf = EvalProbe::waveform_features(ref, cc);
  const Matrix gf = EvalProbe::waveform_features(gen, cc);
  const double fad = frechet_distance(probe.embed(rf), probe.embed(gf));
  const double kld = kld_metric(probe.probabilities(rf), probe.probabilities(gf));
  std::ofstream(run.output("evaluate.tsv")) << "fad\tkld\tclips\n" << fmt(fad) << '\t' << fmt(kld) << '\t' << ref.size() << '\n';
  run.result("fad", fmt(fad));
  run.result("kld", fmt(kld));
}

std::vector<double> doubles(const Config& c, const std::string& key) {
  std::vector<double> out;
  for (const auto& s : c.get_list(key)) out.push_back(load_input(key, [&] { return std::stod(s); }));
  return out;
}

void cmd_bench(Run& run) {
  BenchAxes axes;
  axes.axes = run.cfg.get_list("bench.axes");
  axes.cfg_scales = doubles(run.cfg, "bench.cfg_scale");
  axes.alpha0s = doubles(run.cfg, "bench.alpha0");
  axes.steps.clear();
  for (double v : doubles(run.cfg, "bench.steps")) axes.steps.push_back(static_cast<std::size_t>(v));
  axes.seeds.clear();
  for (const auto& s : run.cfg.get_list("bench.seeds")) {
    axes.seeds.push_back(load_input("bench.seeds", [&] { return std::stoull(s); }));
  }
  axes.defaults = decode_config(run.cfg);
  const auto cells = load_input("bench", [&] { return bench_grid(axes); });

  const auto cb = codebooks_of(run);
  const auto backbone = model_of(run, "in.backbone", "backbone", "pretrain");
  const auto probe = probe_of(run);
  auto test = split_of(run, "test");
  test.resize(std::min(test.size(), run.cfg.get_size("bench.clips")));

  BenchInputs in;
  in.backbone = &backbone;
  in.codebooks = &cb;
  in.probe = &probe;
  in.eval_set = test;
  in.audio_factors = run.cfg.get_size("data.audio_factors");
  in.levels = backbone.config().input_levels;
  const auto report = run_bench(in, cells, run.cfg.get_size("bench.threads"));
  std::ofstream(run.output("bench.tsv")) << report.to_tsv();
  std::ofstream(run.output("bench_metrics.tsv")) << report.metrics_tsv();
  std::ofstream(run.output("bench.txt")) << report.to_table();
  run.out << report.to_table();
  run.result("rows", std::to_string(report.rows.size()));
}

void write_manifest_file(Run& run) {
  std::ofstream f(run.out_dir / "manifest.txt");
  f << "command " << run.command << "\n";
  f << "config_hash " << run.cfg.hash_hex() << "\n";
  f << "seed " << run.seed() << "\n";
  f << "git_describe " << VAB_GIT_DESCRIBE << "\n";
  for (const auto& [k, v] : run.results) f << "result " << k << " " << v << "\n";
  for (const auto& o : run.outputs) f << "output " << o << " " << file_hash((run.out_dir / o).string()) << "\n";
  f << "[config]\n" << run.cfg.to_text();
}

const std::map<std::string, std::pair<std::string, std::function<void(Run&)>>>& commands() {
  static const std::map<std::string, std::pair<std::string, std::function<void(Run&)>>> m = {
      {"codec-train", {"train the residual codebooks on the train split", cmd_codec_train}},
      {"codec-eval", {"reconstruction error per number of levels on the test split", cmd_codec_eval}},
      {"datagen", {"write the synthetic paired dataset", cmd_datagen}},
      {"pretrain", {"masked token pretraining of the backbone", [](Run& r) { cmd_pretrain(r, false); }}},
      {"c2f-train", {"train the coarse-to-fine model", [](Run& r) { cmd_pretrain(r, true); }}},
      {"finetune-contrastive", {"contrastive fine-tuning and retrieval eval", cmd_finetune_contrastive}},
      {"finetune-classify", {"classification fine-tuning", cmd_finetune_classify}},
      {"probe-train", {"linear probe on a frozen backbone, or the evaluation probe", cmd_probe_train}},
      {"generate", {"visual-conditioned audio generation for the test split", cmd_generate}},
      {"retrieve", {"audio/visual retrieval recall on the test split", cmd_retrieve}},
      {"evaluate", {"Frechet distance and KL between two WAV directories", cmd_evaluate}},
      {"bench", {"decoding-parameter sweep", cmd_bench}},
  };
  return m;
}

}  // namespace

const std::vector<std::string>& split_names() {
  static const std::vector<std::string> names = {"train", "valid", "test", "probe"};
  return names;
}

std::vector<PairedSample> load_split(const std::string& dir, const std::string& split) {
  const fs::path base = fs::path(dir) / split;
  const auto entries = read_manifest((base / "manifest.txt").string());
  std::vector<PairedSample> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    PairedSample s;
    s.waveform = read_wav((base / e.wav_path).string());
    s.visual = read_visual((base / e.visual_path).string());
    s.label = e.label;
    s.seed = e.seed;
    out.push_back(std::move(s));
  }
  if (out.empty()) throw ValidationError("split " + split + " in " + dir + " is empty");
  return out;
}

std::string file_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return fnv_hex(ss.str());
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Visual-to-audio masked token generation toolkit", "vab"};
  app.require_subcommand(1);
  app.footer("Config keys (key = default):\n" + config_help_text());
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = ".";
  std::string chosen;
  for (const auto& [name, entry] : commands()) {
    auto* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--set", overrides, "override key=value (repeatable)");
    sub->add_option("--out", out_dir, "output directory");
    sub->callback([&chosen, name] { chosen = name; });
  }
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    Run run{chosen, Config{}, fs::path(out_dir), out, {}, {}};
    if (!config_path.empty()) run.cfg.load_file(config_path);
    for (const auto& o : overrides) run.cfg.set(o);
    fs::create_directories(run.out_dir);
    out << chosen << ": config " << run.cfg.hash_hex() << ", seed " << run.seed() << "\n";
    commands().at(chosen).second(run);
    write_manifest_file(run);
    return 0;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << "\n";
    return 2;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace vab
