// garble/tools/garble.cpp
//
// Copyright 2026 The garble authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Command-line front end. Exit code 0 means the requested campaign or
// report completed (attack success is recorded, not signalled); nonzero
// means an infrastructure failure (bad config, unreachable oracle, IO).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "garble/campaign.hpp"

namespace {

using namespace garble;

// Shared flag plumbing: every attack flag mirrors a config key and, when
// given on the command line, overrides the config file's value.
struct Overrides {
  std::vector<std::pair<std::string, std::string>> kv;

  void apply(RunConfig& cfg) const {
    for (const auto& [k, v] : kv) cfg.set(k, v);
  }
};

void add_override_flags(CLI::App* cmd, Overrides& ov) {
  auto mirror = [&ov, cmd](const std::string& flag, const std::string& key,
                           const std::string& help) {
    cmd->add_option_function<std::string>(
        flag, [&ov, key](const std::string& v) { ov.kv.emplace_back(key, v); }, help);
  };
  mirror("--corpus", "corpus", "command corpus file, one command per line");
  mirror("--out", "out_dir", "run directory to create");
  mirror("--oracle", "oracle", "oracle kind: mock | http | subprocess");
  mirror("--seed", "master_seed", "master seed for all per-command derivations");
  mirror("--alpha", "alpha", "low-band attenuation factor(s), comma list");
  mirror("--beta", "beta", "count(s) of lowest bands zeroed, comma list");
  mirror("--gamma", "gamma", "uniform spectrogram noise amplitude(s), comma list");
  mirror("--low-band-count", "low_band_count", "bands treated as low by alpha");
  mirror("--thr", "thr", "perturbation infinity-norm bound (0 = backend default)");
  mirror("--epoch-max", "epoch_max", "optimization iterations per candidate");
  mirror("--num-candidates", "num_candidates", "independent restarts (gradient mode)");
  mirror("--learning-rate", "learning_rate", "gradient step size");
  mirror("--policy", "policy", "query policy: online | offline");
  mirror("--particles", "particles", "swarm size");
  mirror("--inertia", "inertia", "swarm inertia weight");
  mirror("--c1", "c1", "swarm cognitive constant");
  mirror("--c2", "c2", "swarm social constant");
  mirror("--eta", "eta", "playback noise amplitude");
  mirror("--tau", "tau", "mock oracle decision threshold (0 = calibrate)");
  mirror("--robustness-sigma", "robustness_sigma", "mock oracle feature smoothing");
  mirror("--tts-seed", "tts_seed", "toy TTS weight seed");
  mirror("--vocoder-iters", "vocoder_iters", "Griffin-Lim iterations");
  mirror("--http-endpoint", "http_endpoint", "http oracle endpoint URL");
  mirror("--http-text-path", "http_text_path", "dot path to transcript in response JSON");
  mirror("--subprocess-cmd", "subprocess_cmd", "transcriber command line");
  cmd->add_option_function<std::vector<std::string>>(
      "--set",
      [&ov](const std::vector<std::string>& items) {
        for (const auto& item : items) {
          const std::size_t eq = item.find('=');
          if (eq == std::string::npos)
            throw CLI::ValidationError("--set expects key=value, got '" + item + "'");
          ov.kv.emplace_back(item.substr(0, eq), item.substr(eq + 1));
        }
      },
      "extra key=value config overrides");
}

RunConfig load_config(const std::string& config_path, const Overrides& ov) {
  RunConfig cfg =
      config_path.empty() ? RunConfig() : RunConfig::parse_file(config_path);
  ov.apply(cfg);
  return cfg;
}

int cmd_synth(const std::string& config_path, const Overrides& ov, const std::string& text) {
  RunConfig cfg = load_config(config_path, ov);
  const std::string out_dir = cfg.get("out_dir");
  if (out_dir.empty()) throw std::runtime_error("synth requires out_dir (--out)");
  std::vector<std::string> commands;
  if (!text.empty())
    commands.push_back(text);
  else
    commands = read_corpus(cfg.get("corpus"));

  ToyTts tts(tts_profile_from_config(cfg));
  std::filesystem::create_directories(std::filesystem::path(out_dir) / "wav");
  for (const auto& command : commands) {
    const std::string target = normalize_text(command);
    const Waveform w =
        mix_noise_and_scale(tts.vocode(tts.decode(tts.encode(target).rows).mel), 0.0);
    const std::string file = slugify(target) + ".wav";
    write_wav((std::filesystem::path(out_dir) / "wav" / file).string(), w);
    std::cout << file << "  (" << w.samples.size() << " samples)\n";
  }
  return 0;
}

int cmd_attack(const std::string& mode, const std::string& config_path, const Overrides& ov) {
  RunConfig cfg = load_config(config_path, ov);
  cfg.set("mode", mode);
  const RunOutcome outcome = run_campaign(cfg);
  std::size_t successes = 0, attempts = 0;
  for (const auto& row : outcome.manifest.at("results")) {
    ++attempts;
    if (row.at("success").get<bool>()) ++successes;
  }
  std::cout << "run " << outcome.run_dir.string() << ": " << successes << "/" << attempts
            << " successful, ledger total ";
  std::uint64_t total = 0;
  for (const auto& [id, n] : outcome.manifest.at("ledger_counts").items())
    total += n.get<std::uint64_t>();
  std::cout << total << "\n";
  return 0;
}

int cmd_recheck(const std::string& run_dir, const std::string& config_path,
                const Overrides& ov) {
  RunConfig cfg = config_path.empty()
                      ? RunConfig::parse_file(
                            (std::filesystem::path(run_dir) / "config.txt").string())
                      : RunConfig::parse_file(config_path);
  ov.apply(cfg);
  const std::vector<std::string> corpus = read_corpus(cfg.get("corpus"));
  ToyTts tts(tts_profile_from_config(cfg));
  QueryLedger ledger;
  std::unique_ptr<AsrOracle> oracle = make_oracle(cfg, corpus, tts, ledger);
  OracleSession session(*oracle, ledger);

  const RecheckOutcome outcome = recheck(run_dir, session);
  for (const auto& hp : outcome.table.hp_labels)
    for (const auto& id : outcome.table.oracle_ids) {
      const SuccessCell* c = outcome.table.find(hp, id);
      if (c)
        std::cout << hp << " vs " << id << ": " << c->successes << "/" << c->attempts
                  << "\n";
    }
  for (const auto& slug : outcome.stale) std::cout << "stale: " << slug << "\n";
  return 0;
}

int cmd_eval_defense(const std::string& run_dir, const std::string& config_path,
                     const Overrides& ov, const std::vector<double>& down_rates,
                     const std::vector<double>& lp_cutoffs,
                     const std::vector<double>& hp_cutoffs, bool all_samples) {
  RunConfig cfg = config_path.empty()
                      ? RunConfig::parse_file(
                            (std::filesystem::path(run_dir) / "config.txt").string())
                      : RunConfig::parse_file(config_path);
  ov.apply(cfg);
  const std::vector<std::string> corpus = read_corpus(cfg.get("corpus"));
  ToyTts tts(tts_profile_from_config(cfg));
  QueryLedger ledger;
  std::unique_ptr<AsrOracle> oracle = make_oracle(cfg, corpus, tts, ledger);
  OracleSession session(*oracle, ledger);

  std::vector<DefenseSpec> specs;
  for (double r : down_rates) {
    DefenseSpec s;
    s.kind = DefenseKind::downsample_upsample;
    s.rate_hz = r;
    specs.push_back(s);
  }
  for (double c : lp_cutoffs) {
    DefenseSpec s;
    s.kind = DefenseKind::low_pass;
    s.cutoff_hz = c;
    specs.push_back(s);
  }
  for (double c : hp_cutoffs) {
    DefenseSpec s;
    s.kind = DefenseKind::high_pass;
    s.cutoff_hz = c;
    specs.push_back(s);
  }
  if (specs.empty()) {
    // Standard battery: 8 kHz resampling round trip, 6 kHz low-pass,
    // 500 Hz high-pass.
    DefenseSpec down;
    down.kind = DefenseKind::downsample_upsample;
    down.rate_hz = 8000.0;
    DefenseSpec low;
    low.kind = DefenseKind::low_pass;
    low.cutoff_hz = 6000.0;
    DefenseSpec high;
    high.kind = DefenseKind::high_pass;
    high.cutoff_hz = 500.0;
    specs = {down, low, high};
  }

  const std::vector<StoredSample> samples = load_stored_samples(run_dir, !all_samples);
  if (samples.empty()) throw std::runtime_error("no stored samples to defend against");
  const DefenseEvaluation ev = evaluate_defense(samples, session, specs);
  const std::string text = defense_markdown(ev);
  const std::filesystem::path out =
      std::filesystem::path(run_dir) / "reports" / "defense.md";
  std::filesystem::create_directories(out.parent_path());
  std::ofstream f(out, std::ios::binary);
  f << text;
  std::cout << text;
  return 0;
}

int cmd_robustness(const std::string& config_path, const Overrides& ov,
                   const std::vector<double>& snrs) {
  RunConfig cfg = load_config(config_path, ov);
  const std::vector<std::string> corpus = read_corpus(cfg.get("corpus"));
  ToyTts tts(tts_profile_from_config(cfg));
  QueryLedger ledger;
  std::unique_ptr<AsrOracle> oracle = make_oracle(cfg, corpus, tts, ledger);
  OracleSession session(*oracle, ledger);

  const RobustnessReport report = noise_robustness_report(
      tts, session, corpus, snrs, cfg.get_u64("master_seed", 1));
  const std::string text = robustness_markdown(report);
  const std::string out_dir = cfg.get("out_dir");
  if (!out_dir.empty()) {
    const std::filesystem::path out =
        std::filesystem::path(out_dir) / "reports" / "robustness.md";
    std::filesystem::create_directories(out.parent_path());
    std::ofstream f(out, std::ios::binary);
    f << text;
  }
  std::cout << text;
  return 0;
}

int cmd_report(const std::string& run_dir, const std::string& format) {
  const std::filesystem::path out = emit_report(run_dir, format);
  std::cout << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"black-box adversarial speech-command generator"};
  app.require_subcommand(1);

  std::string config_path, text, run_dir, format = "md";
  std::vector<double> snrs = {37.0, 25.0, 13.0, 3.0};
  std::vector<double> down_rates, lp_cutoffs, hp_cutoffs;
  bool all_samples = false;
  Overrides ov;

  CLI::App* synth = app.add_subcommand("synth", "render clean command audio");
  synth->add_option("--config", config_path, "campaign config file");
  synth->add_option("--text", text, "single command text (otherwise the corpus)");
  add_override_flags(synth, ov);

  CLI::App* otl = app.add_subcommand("attack-otl", "gradient attack over the line");
  otl->add_option("--config", config_path, "campaign config file");
  add_override_flags(otl, ov);

  CLI::App* ota = app.add_subcommand("attack-ota", "swarm attack over the air");
  ota->add_option("--config", config_path, "campaign config file");
  add_override_flags(ota, ov);

  CLI::App* re = app.add_subcommand("recheck", "re-transcribe a finished run's WAVs");
  re->add_option("--run", run_dir, "run directory")->required();
  re->add_option("--config", config_path, "oracle config (default: the run's copy)");
  add_override_flags(re, ov);

  CLI::App* def = app.add_subcommand("eval-defense", "transform stored WAVs, re-measure");
  def->add_option("--run", run_dir, "run directory")->required();
  def->add_option("--config", config_path, "oracle config (default: the run's copy)");
  def->add_option("--downsample", down_rates, "down/up resample rate(s), Hz");
  def->add_option("--low-pass", lp_cutoffs, "low-pass cutoff(s), Hz");
  def->add_option("--high-pass", hp_cutoffs, "high-pass cutoff(s), Hz");
  def->add_flag("--all", all_samples, "include failed samples too");
  add_override_flags(def, ov);

  CLI::App* rob = app.add_subcommand("robustness", "WER increase under mixed noise");
  rob->add_option("--config", config_path, "campaign config file");
  rob->add_option("--snr", snrs, "signal-to-noise ratios in dB");
  add_override_flags(rob, ov);

  CLI::App* rep = app.add_subcommand("report", "render a stored run's success table");
  rep->add_option("--run", run_dir, "run directory")->required();
  rep->add_option("--format", format, "csv | md");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(config_path, ov, text);
    if (otl->parsed()) return cmd_attack("otl", config_path, ov);
    if (ota->parsed()) return cmd_attack("ota", config_path, ov);
    if (re->parsed()) return cmd_recheck(run_dir, config_path, ov);
    if (def->parsed())
      return cmd_eval_defense(run_dir, config_path, ov, down_rates, lp_cutoffs,
                              hp_cutoffs, all_samples);
    if (rob->parsed()) return cmd_robustness(config_path, ov, snrs);
    if (rep->parsed()) return cmd_report(run_dir, format);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
