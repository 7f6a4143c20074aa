// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "commands.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>

#include "cantus/checkpoint.hpp"
#include "cantus/error.hpp"
#include "cantus/io.hpp"
#include "cantus/metrics.hpp"
#include "cantus/oracle.hpp"
#include "run_config.hpp"

namespace cantus::cli {
namespace {

namespace fs = std::filesystem;

// Thrown for bad flag combinations discovered after parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const char* const kLossHeader =
    "# step\tlr\ttotal\tphoneme_duration\tsyllable_duration\tmgc\tbap\tlogf0\tvuv\n";

// Config file first, then per-key flags.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "key = value config file")->check(CLI::ExistingFile);
    for (const std::string& key : config_keys()) {
      app->add_option("--" + key, overrides[key], "override " + key)->group("Config overrides");
    }
  }

  // Config problems are usage errors.
  RunConfig resolve(CLI::App* app) const {
    try {
      RunConfig rc;
      if (!config_file.empty()) rc = parse_run_config(read_file(config_file));
      for (const auto& [key, value] : overrides) {
        if (app->count("--" + key) > 0) apply_key_value(rc, key, value);
      }
      rc.train.validate();
      rc.oracle.validate();
      return rc;
    } catch (const Error& e) {
      throw UsageError(config_file.empty() ? std::string(e.what()) : config_file + ": " + e.what());
    }
  }
};

void ensure_directory(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir);
}

PhonemeLexicon lexicon_for(const CorpusManifest& manifest, const std::string& fallback) {
  if (!manifest.lexicon_path.empty()) return PhonemeLexicon::load(manifest.lexicon_path);
  if (!fallback.empty()) return PhonemeLexicon::load(fallback);
  return PhonemeLexicon::demo();
}

void require_vocab(const TrainState& state, const PhonemeLexicon& lexicon) {
  if (state.vocab != lexicon.vocab()) {
    throw ValidationError("vocabulary mismatch: checkpoint has " + std::to_string(state.vocab.size()) +
                          " phonemes, lexicon induces " + std::to_string(lexicon.vocab().size()) +
                          (state.vocab.size() == lexicon.vocab().size() ? " in a different order" : ""));
  }
}

// Keeps log lines up to and including `step` so a resumed run appends cleanly.
std::string truncate_log(const std::string& log, std::size_t step) {
  std::string out = kLossHeader;
  std::size_t pos = 0;
  while (pos < log.size()) {
    std::size_t nl = log.find('\n', pos);
    if (nl == std::string::npos) nl = log.size();
    const std::string_view line(log.data() + pos, nl - pos);
    pos = nl + 1;
    const auto fields = split_char(line, '\t');
    long long s = 0;
    if (!fields.empty() && parse_int(fields[0], s) && s >= 1 &&
        static_cast<std::size_t>(s) <= step) {
      out += std::string(line) + "\n";
    }
  }
  return out;
}

// ---- gen-data ---------------------------------------------------------------

struct GenDataArgs {
  ConfigFlags config;
  std::size_t songs = 0;
  std::uint64_t seed = 1;
  std::string out;
};

int gen_data(const GenDataArgs& a, CLI::App* app, std::ostream& out) {
  const RunConfig rc = a.config.resolve(app);
  const CorpusManifest manifest = generate_corpus(a.songs, a.seed, rc.oracle, a.out);
  write_file_atomic((fs::path(a.out) / "config.txt").string(), serialize_run_config(rc));
  out << (fs::path(a.out) / "manifest.tsv").string() << "\n";
  out << manifest.split("train").size() << " train, " << manifest.split("test").size()
      << " test\n";
  return kExitOk;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  ConfigFlags config;
  std::string manifest, run_dir, resume;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 500;
};

int train(const TrainArgs& a, CLI::App* app, std::ostream& out) {
  RunConfig rc = a.config.resolve(app);
  if (!a.manifest.empty()) rc.manifest = a.manifest;
  if (!a.run_dir.empty()) rc.run_dir = a.run_dir;
  if (app->count("--seed") > 0) rc.train.seed = a.seed;
  if (rc.manifest.empty()) throw UsageError("train: --manifest (or paths.manifest) is required");
  if (rc.run_dir.empty()) throw UsageError("train: --run-dir (or paths.run_dir) is required");

  const CorpusManifest manifest = load_manifest(rc.manifest);
  const PhonemeLexicon lexicon = lexicon_for(manifest, rc.lexicon);
  const std::vector<Utterance> corpus = load_corpus(manifest, lexicon, "train", rc.oracle);
  if (corpus.empty()) throw ValidationError("manifest has no train entries");
  validate_corpus(corpus, rc.train.model);
  ensure_directory(rc.run_dir);

  const fs::path dir(rc.run_dir);
  const std::string ckpt_path = (dir / "checkpoint.ckpt").string();
  const std::string log_path = (dir / "loss.tsv").string();
  TrainState state;
  std::string log = kLossHeader;
  if (!a.resume.empty()) {
    state = load_checkpoint(a.resume);
    require_vocab(state, lexicon);
    // The checkpoint's settings win; only the step budget may be extended.
    state.config.total_steps = rc.train.total_steps;
    if (fs::exists(log_path)) log = truncate_log(read_file(log_path), state.step);
  } else {
    state = initial_state(rc.train, corpus, lexicon.vocab());
  }
  rc.train = state.config;
  write_file_atomic((dir / "config.txt").string(), serialize_run_config(rc));

  write_file_atomic(log_path, log);
  std::ofstream log_file(log_path, std::ios::binary | std::ios::app);
  if (!log_file) throw IoError("cannot append to " + log_path);

  Trainer trainer(std::move(state), corpus);
  while (!trainer.done()) {
    const LossRecord record = trainer.step();
    log_file << format_loss_record(record) << '\n' << std::flush;
    if (!log_file) throw IoError("write failed: " + log_path);
    if (a.checkpoint_every > 0 && record.step % a.checkpoint_every == 0) {
      save_checkpoint(ckpt_path, trainer.state());
      out << format_loss_record(record) << "\n";
    }
  }
  save_checkpoint(ckpt_path, trainer.state());
  out << "checkpoint " << ckpt_path << " at step " << trainer.state().step << "\n";
  return kExitOk;
}

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string score, checkpoint, out, lexicon;
};

int synth(const SynthArgs& a, std::ostream& out) {
  const TrainState state = load_checkpoint(a.checkpoint);
  const PhonemeLexicon lexicon =
      a.lexicon.empty() ? PhonemeLexicon::demo() : PhonemeLexicon::load(a.lexicon);
  require_vocab(state, lexicon);
  PhonemeTokenSequence tokens = score_to_tokens(load_score(a.score), lexicon);
  const Synthesis syn = synthesize(tokens, state.params, state.config.model);
  tokens.gt_durations = syn.durations;
  save_features(a.out, syn.features);
  write_file_atomic(a.out + ".durations.tsv", serialize_tokens(tokens, lexicon));
  out << a.out << "\t" << syn.features.frames() << " frames\n";
  return kExitOk;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> pred, gt, pred_tokens, gt_tokens;
  std::string manifest, checkpoint, split = "test", out_dir, lexicon;
};

std::vector<int> durations_from(const std::string& path) {
  const PhonemeTokenSequence t = parse_tokens(read_file(path));
  if (!t.gt_durations) throw ValidationError(path + ": token sidecar has no durations");
  return *t.gt_durations;
}

std::vector<EvalPair> pairs_from_files(const EvalArgs& a) {
  if (a.pred.size() != a.gt.size()) throw UsageError("eval: --pred and --gt counts differ");
  if (a.pred_tokens.size() != a.gt_tokens.size() ||
      (!a.pred_tokens.empty() && a.pred_tokens.size() != a.pred.size())) {
    throw UsageError("eval: token sidecars must be given for every pair or for none");
  }
  std::vector<EvalPair> pairs;
  for (std::size_t i = 0; i < a.pred.size(); ++i) {
    EvalPair p;
    p.name = fs::path(a.gt[i]).stem().string();
    p.pred = load_features(a.pred[i]);
    p.gt = load_features(a.gt[i]);
    if (!a.pred_tokens.empty()) {
      p.pred_durations = durations_from(a.pred_tokens[i]);
      p.gt_durations = durations_from(a.gt_tokens[i]);
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<EvalPair> pairs_from_checkpoint(const EvalArgs& a) {
  const TrainState state = load_checkpoint(a.checkpoint);
  const CorpusManifest manifest = load_manifest(a.manifest);
  const PhonemeLexicon lexicon = lexicon_for(manifest, a.lexicon);
  require_vocab(state, lexicon);
  std::vector<EvalPair> pairs;
  for (Utterance& u : load_corpus(manifest, lexicon, a.split)) {
    EvalPair p;
    p.name = u.name;
    p.gt = std::move(u.features);
    if (u.tokens.gt_durations) {
      p.pred = synthesize(u.tokens, state.params, state.config.model, &*u.tokens.gt_durations).features;
      p.pred_durations = predict_token_durations(u.tokens, state.params, state.config.model);
      p.gt_durations = *u.tokens.gt_durations;
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

int eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const bool file_mode = !a.pred.empty() || !a.gt.empty();
  const bool ckpt_mode = !a.manifest.empty() || !a.checkpoint.empty();
  if (file_mode == ckpt_mode) {
    throw UsageError("eval: give either --pred/--gt pairs or --manifest with --checkpoint");
  }
  if (ckpt_mode && (a.manifest.empty() || a.checkpoint.empty())) {
    throw UsageError("eval: --manifest and --checkpoint go together");
  }
  const std::vector<EvalPair> pairs = file_mode ? pairs_from_files(a) : pairs_from_checkpoint(a);
  const EvalReport report = evaluate(pairs);
  for (const std::string& e : report.errors) err << "eval: " << e << "\n";

  std::vector<std::span<const double>> pred_mgc, gt_mgc;
  for (const EvalPair& p : pairs) {
    if (p.pred.frames() != p.gt.frames()) continue;
    pred_mgc.emplace_back(p.pred.mgc);
    gt_mgc.emplace_back(p.gt.mgc);
  }
  const std::string text = format_report(report);
  out << text;
  if (!a.out_dir.empty()) {
    ensure_directory(a.out_dir);
    const fs::path dir(a.out_dir);
    write_file_atomic((dir / "report.tsv").string(), text);
    write_file_atomic((dir / "utterances.tsv").string(), format_utterance_table(report));
    write_file_atomic((dir / "gv.tsv").string(), format_gv_table(global_variance(pred_mgc)));
    write_file_atomic((dir / "gv_reference.tsv").string(),
                      format_gv_table(global_variance(gt_mgc)));
  }
  return report.per_utterance.empty() ? kExitFailure : kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"cantus: score-to-acoustic-feature singing synthesis"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  GenDataArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate an oracle corpus");
  gen_cmd->add_option("--songs", gen.songs, "number of songs")->required()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen.seed, "corpus seed");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen.config.attach(gen_cmd);

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model on a manifest's train split");
  train_cmd->add_option("--manifest", tr.manifest, "corpus manifest");
  train_cmd->add_option("--run-dir", tr.run_dir, "output directory");
  train_cmd->add_option("--resume", tr.resume, "checkpoint to continue from")->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", tr.seed, "training seed (same as --train.seed)");
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "steps between checkpoints");
  tr.config.attach(train_cmd);

  SynthArgs sy;
  CLI::App* synth_cmd = app.add_subcommand("synth", "synthesize features for a score");
  synth_cmd->add_option("--score", sy.score, "score file")->required()->check(CLI::ExistingFile);
  synth_cmd->add_option("--checkpoint", sy.checkpoint, "checkpoint")->required()->check(CLI::ExistingFile);
  synth_cmd->add_option("--out", sy.out, "output feature file")->required();
  synth_cmd->add_option("--lexicon", sy.lexicon, "lexicon file (default: built-in)")->check(CLI::ExistingFile);

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "objective metrics");
  eval_cmd->add_option("--pred", ev.pred, "predicted feature files");
  eval_cmd->add_option("--gt", ev.gt, "reference feature files");
  eval_cmd->add_option("--pred-tokens", ev.pred_tokens, "token sidecars with predicted durations");
  eval_cmd->add_option("--gt-tokens", ev.gt_tokens, "token sidecars with reference durations");
  eval_cmd->add_option("--manifest", ev.manifest, "corpus manifest");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint");
  eval_cmd->add_option("--split", ev.split, "manifest split")->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--lexicon", ev.lexicon, "lexicon when the manifest names none");
  eval_cmd->add_option("--out", ev.out_dir, "directory for report.tsv, utterances.tsv and gv.tsv");

  std::vector<std::string> rest(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return gen_data(gen, gen_cmd, out);
    if (*train_cmd) return train(tr, train_cmd, out);
    if (*synth_cmd) return synth(sy, out);
    if (*eval_cmd) return eval(ev, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace cantus::cli
