// garble/campaign.hpp
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

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "garble/asr.hpp"
#include "garble/asr_external.hpp"
#include "garble/attack.hpp"
#include "garble/defense.hpp"
#include "garble/metrics.hpp"
#include "garble/tts.hpp"
#include "garble/wav.hpp"

namespace garble {

inline constexpr const char* kToolVersion = "0.1.0";

// Flat key = value campaign configuration. Lines starting with '#' and
// blank lines are skipped; comma-separated values make grid lists.
class RunConfig {
 public:
  static RunConfig parse_text(const std::string& text) {
    RunConfig cfg;
    cfg.raw_text_ = text;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string trimmed = trim(line);
      if (trimmed.empty() || trimmed[0] == '#') continue;
      const std::size_t eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": expected key = value");
      std::string key = trim(trimmed.substr(0, eq));
      std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty())
        throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
      cfg.set(key, value);
    }
    return cfg;
  }

  static RunConfig parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    RunConfig cfg = parse_text(text);
    cfg.source_path_ = path;
    return cfg;
  }

  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_)
      if (k == key) {
        v = value;
        return;
      }
    entries_.emplace_back(key, value);
  }

  bool has(const std::string& key) const { return find(key) != nullptr; }

  std::string get(const std::string& key, const std::string& fallback = "") const {
    const std::string* v = find(key);
    return v ? *v : fallback;
  }

  int get_int(const std::string& key, int fallback) const {
    const std::string* v = find(key);
    return v ? std::stoi(*v) : fallback;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    const std::string* v = find(key);
    return v ? std::stoull(*v) : fallback;
  }

  double get_double(const std::string& key, double fallback) const {
    const std::string* v = find(key);
    return v ? std::stod(*v) : fallback;
  }

  std::vector<double> get_list(const std::string& key, std::vector<double> fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    std::vector<double> out;
    std::istringstream in(*v);
    std::string item;
    while (std::getline(in, item, ',')) {
      const std::string t = trim(item);
      if (!t.empty()) out.push_back(std::stod(t));
    }
    if (out.empty())
      throw std::invalid_argument("config key '" + key + "': empty list");
    return out;
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }
  const std::string& raw_text() const { return raw_text_; }
  const std::string& source_path() const { return source_path_; }

 private:
  static std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
  }

  const std::string* find(const std::string& key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return &v;
    return nullptr;
  }

  std::vector<std::pair<std::string, std::string>> entries_;
  std::string raw_text_;
  std::string source_path_;
};

inline std::vector<std::string> read_corpus(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open corpus " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(f, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    out.push_back(line);
  }
  if (out.empty()) throw std::runtime_error("corpus is empty: " + path);
  return out;
}

inline TtsProfile tts_profile_from_config(const RunConfig& cfg) {
  TtsProfile p;
  p.dim = cfg.get_int("emb_dim", p.dim);
  p.frames_per_token = cfg.get_int("frames_per_token", p.frames_per_token);
  p.vocoder_iters = cfg.get_int("vocoder_iters", p.vocoder_iters);
  p.table_scale = cfg.get_double("table_scale", p.table_scale);
  p.map_scale = cfg.get_double("map_scale", p.map_scale);
  p.tilt_bass_db = cfg.get_double("tilt_bass_db", p.tilt_bass_db);
  p.tilt_shelf_db = cfg.get_double("tilt_shelf_db", p.tilt_shelf_db);
  p.tilt_presence_db = cfg.get_double("tilt_presence_db", p.tilt_presence_db);
  p.tilt_top_db = cfg.get_double("tilt_top_db", p.tilt_top_db);
  p.seed = cfg.get_u64("tts_seed", p.seed);
  return p;
}

inline MockAsrParams mock_params_from_config(const RunConfig& cfg) {
  MockAsrParams p;
  p.tau = cfg.get_double("tau", p.tau);
  p.robustness_sigma = cfg.get_double("robustness_sigma", p.robustness_sigma);
  p.mel_floor = cfg.get_double("mock_mel_floor", p.mel_floor);
  return p;
}

// Builds the oracle selected by the config. The mock oracle's vocabulary
// is the campaign corpus.
inline std::unique_ptr<AsrOracle> make_oracle(const RunConfig& cfg,
                                              const std::vector<std::string>& corpus,
                                              const ToyTts& tts, QueryLedger& ledger) {
  const std::string kind = cfg.get("oracle", "mock");
  if (kind == "mock") {
    return std::make_unique<MockAsr>(corpus, tts, mock_params_from_config(cfg));
  }
  if (kind == "http") {
    HttpAsrConfig hc;
    hc.endpoint = cfg.get("http_endpoint");
    if (hc.endpoint.empty())
      throw std::invalid_argument("oracle=http requires http_endpoint");
    hc.text_field_path = cfg.get("http_text_path", hc.text_field_path);
    hc.base64_json = cfg.get_int("http_base64", 0) != 0;
    hc.rate_limit_per_min = cfg.get_int("http_rate_limit_per_min", 0);
    hc.timeout_ms = cfg.get_int("http_timeout_ms", hc.timeout_ms);
    hc.max_retries = cfg.get_int("http_max_retries", hc.max_retries);
    hc.backoff_base_ms = cfg.get_int("http_backoff_base_ms", hc.backoff_base_ms);
    return std::make_unique<HttpAsr>(hc, &ledger);
  }
  if (kind == "subprocess") {
    SubprocessAsrConfig sc;
    std::istringstream in(cfg.get("subprocess_cmd"));
    std::string tok;
    while (in >> tok) sc.argv.push_back(tok);
    if (sc.argv.empty())
      throw std::invalid_argument("oracle=subprocess requires subprocess_cmd");
    sc.workdir = cfg.get("subprocess_workdir", "");
    sc.timeout_ms = cfg.get_int("subprocess_timeout_ms", sc.timeout_ms);
    return std::make_unique<SubprocessAsr>(sc);
  }
  throw std::invalid_argument("unknown oracle kind '" + kind + "'");
}

struct RunOutcome {
  std::filesystem::path run_dir;
  nlohmann::ordered_json manifest;
  bool complete = true;
};

namespace detail {

inline nlohmann::ordered_json config_json(const RunConfig& cfg) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : cfg.entries()) j[k] = v;
  return j;
}

inline std::string wav_name(const std::string& slug, const std::string& hp_label,
                            bool single_cell) {
  return single_cell ? slug + ".wav" : slug + "__" + hp_label + ".wav";
}

inline void render_reports(const nlohmann::ordered_json& manifest,
                           const std::filesystem::path& reports_dir);

}  // namespace detail

// Executes one attack campaign: every hyper-parameter cell against every
// corpus command, artifacts under out_dir. Transport-level oracle
// failures abort the campaign but still leave a manifest flagged
// incomplete for the rows that finished.
inline RunOutcome run_campaign(const RunConfig& cfg) {
  const std::string mode = cfg.get("mode", "otl");
  if (mode != "otl" && mode != "ota")
    throw std::invalid_argument("mode must be otl or ota");
  const std::string corpus_path = cfg.get("corpus");
  if (corpus_path.empty()) throw std::invalid_argument("config requires corpus");
  const std::string out_dir = cfg.get("out_dir");
  if (out_dir.empty()) throw std::invalid_argument("config requires out_dir");

  const std::vector<std::string> corpus = read_corpus(corpus_path);
  const std::uint64_t master_seed = cfg.get_u64("master_seed", 1);

  ToyTts tts(tts_profile_from_config(cfg));
  QueryLedger ledger;
  std::unique_ptr<AsrOracle> oracle = make_oracle(cfg, corpus, tts, ledger);
  OracleSession session(*oracle, ledger);

  const std::filesystem::path run_dir(out_dir);
  std::filesystem::create_directories(run_dir / "wav");
  std::filesystem::create_directories(run_dir / "reports");
  std::filesystem::remove(run_dir / "ledger.jsonl");
  ledger.open_log((run_dir / "ledger.jsonl").string());
  {
    std::ofstream copy(run_dir / "config.txt", std::ios::binary);
    copy << cfg.raw_text();
  }

  std::ifstream corpus_file(corpus_path, std::ios::binary);
  const std::string corpus_bytes((std::istreambuf_iterator<char>(corpus_file)),
                                 std::istreambuf_iterator<char>());

  const std::vector<double> alphas = cfg.get_list("alpha", {0.3});
  const std::vector<double> betas = cfg.get_list("beta", {1});
  const std::vector<double> gammas = cfg.get_list("gamma", {1.0});
  std::vector<BlurParams> grid;
  for (double a : alphas)
    for (double b : betas)
      for (double g : gammas) {
        BlurParams hp;
        hp.alpha = a;
        hp.beta = static_cast<int>(b);
        hp.gamma = g;
        hp.low_band_count = cfg.get_int("low_band_count", 30);
        grid.push_back(hp);
      }
  const bool single_cell = grid.size() == 1;

  nlohmann::ordered_json manifest;
  manifest["tool"] = "garble";
  manifest["version"] = kToolVersion;
  manifest["complete"] = true;
  manifest["mode"] = mode;
  manifest["oracle"] = oracle->id();
  manifest["config"] = detail::config_json(cfg);
  manifest["corpus_path"] = corpus_path;
  manifest["corpus_sha256"] = sha256_hex(corpus_bytes);
  manifest["commands"] = corpus;
  manifest["thr"] =
      cfg.get_double("thr", 0.0) > 0.0 ? cfg.get_double("thr", 0.0) : tts.default_threshold();
  manifest["results"] = nlohmann::ordered_json::array();

  bool complete = true;
  std::string abort_reason;
  try {
    for (const BlurParams& hp : grid) {
      for (const std::string& command : corpus) {
        const std::string target = normalize_text(command);
        const std::uint64_t cmd_seed =
            derive_seed(master_seed, "cmd:" + hp.label() + ":" + target);
        const std::uint64_t before = ledger.total();

        AttackResult res;
        if (mode == "otl") {
          OtlConfig oc;
          oc.epoch_max = cfg.get_int("epoch_max", 50);
          oc.num_candidates = cfg.get_int("num_candidates", 10);
          oc.learning_rate = cfg.get_double("learning_rate", 0.05);
          oc.thr = cfg.get_double("thr", -1.0);
          oc.policy = cfg.get("policy", "online") == "offline" ? QueryPolicy::offline
                                                               : QueryPolicy::online;
          oc.hp = hp;
          oc.rng_seed = cmd_seed;
          res = otl_generate(target, tts, session, oc);
        } else {
          OtaConfig oc;
          oc.k = cfg.get_int("particles", 20);
          oc.epoch_max = cfg.get_int("epoch_max", 10);
          oc.w = cfg.get_double("inertia", 0.5);
          oc.c1 = cfg.get_double("c1", 2.0);
          oc.c2 = cfg.get_double("c2", 2.0);
          oc.thr = cfg.get_double("thr", -1.0);
          oc.eta = cfg.get_double("eta", 0.1);
          oc.hp = hp;
          oc.rng_seed = cmd_seed;
          res = ota_generate(target, tts, session, oc);
        }
        const std::uint64_t row_queries = ledger.total() - before;

        const std::string slug = slugify(target);
        const std::string wav_file = detail::wav_name(slug, hp.label(), single_cell);
        // Over-the-line audio leaves the tool scaled the same way the
        // over-the-air path already is.
        const Waveform stored =
            mode == "otl" ? mix_noise_and_scale(res.audio, 0.0) : res.audio;
        write_wav((run_dir / "wav" / wav_file).string(), stored);

        nlohmann::ordered_json row;
        row["command"] = target;
        row["slug"] = slug;
        row["hp"] = hp.label();
        row["oracle"] = oracle->id();
        row["wav"] = "wav/" + wav_file;
        std::string delta_bytes(reinterpret_cast<const char*>(res.delta.data()),
                                static_cast<std::size_t>(res.delta.size()) * sizeof(double));
        row["delta_sha256"] = sha256_hex(delta_bytes);
        row["loss"] = res.loss;
        row["loss_mel"] = res.loss_mel;
        row["loss_gate"] = res.loss_gate;
        row["queries"] = row_queries;
        row["attack_queries"] = res.queries;
        row["success"] = res.success;
        row["transcript"] = res.final_transcript;
        nlohmann::ordered_json events = nlohmann::ordered_json::array();
        for (const auto& ev : res.history) {
          nlohmann::ordered_json e;
          e["candidate"] = ev.candidate;
          e["step"] = ev.step;
          e["kind"] = ev.kind;
          e["transcript"] = ev.transcript;
          e["loss"] = ev.loss;
          e["matched"] = ev.matched;
          events.push_back(std::move(e));
        }
        row["transcripts"] = std::move(events);
        manifest["results"].push_back(std::move(row));
      }
    }
  } catch (const TransportError& e) {
    complete = false;
    abort_reason = e.what();
  } catch (const AdapterProtocolError& e) {
    complete = false;
    abort_reason = e.what();
  } catch (const SubprocessError& e) {
    complete = false;
    abort_reason = e.what();
  }

  manifest["complete"] = complete;
  if (!complete) manifest["abort_reason"] = abort_reason;
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  counts[oracle->id()] = ledger.count(oracle->id());
  manifest["ledger_counts"] = std::move(counts);
  manifest["recheck_history"] = nlohmann::ordered_json::array();

  {
    std::ofstream mf(run_dir / "manifest.json", std::ios::binary);
    mf << manifest.dump(2) << "\n";
  }
  detail::render_reports(manifest, run_dir / "reports");

  RunOutcome out;
  out.run_dir = run_dir;
  out.manifest = std::move(manifest);
  out.complete = complete;
  if (!complete)
    throw std::runtime_error("campaign aborted (manifest flagged incomplete): " +
                             abort_reason);
  return out;
}

namespace detail {

inline SuccessTable table_from_manifest(const nlohmann::ordered_json& manifest) {
  std::vector<AttackOutcome> outcomes;
  for (const auto& row : manifest.at("results")) {
    AttackOutcome o;
    o.hp_label = row.at("hp").get<std::string>();
    o.oracle_id = row.at("oracle").get<std::string>();
    o.target = row.at("command").get<std::string>();
    o.transcript = row.value("transcript", "");
    o.queries = row.at("queries").get<std::uint64_t>();
    o.success = row.at("success").get<bool>();
    outcomes.push_back(std::move(o));
  }
  return success_rate(outcomes);
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string table_csv(const SuccessTable& t) {
  std::string out = "hp,oracle,successes,attempts,rate,mean_queries\n";
  for (const auto& hp : t.hp_labels)
    for (const auto& oracle : t.oracle_ids) {
      const SuccessCell* c = t.find(hp, oracle);
      if (!c) continue;  // no attempts for this pairing
      out += hp + "," + oracle + "," + std::to_string(c->successes) + "," +
             std::to_string(c->attempts) + "," + format_double(c->rate()) + "," +
             format_double(c->mean_queries()) + "\n";
    }
  return out;
}

inline std::string table_markdown(const SuccessTable& t, const std::string& title) {
  std::string out = "# " + title + "\n\n";
  out += "| hp | oracle | success | rate | mean queries |\n";
  out += "| --- | --- | --- | --- | --- |\n";
  for (const auto& hp : t.hp_labels)
    for (const auto& oracle : t.oracle_ids) {
      const SuccessCell* c = t.find(hp, oracle);
      if (!c) continue;
      out += "| " + hp + " | " + oracle + " | " + std::to_string(c->successes) + "/" +
             std::to_string(c->attempts) + " | " + format_double(c->rate()) + " | " +
             format_double(c->mean_queries()) + " |\n";
    }
  return out;
}

inline void render_reports(const nlohmann::ordered_json& manifest,
                           const std::filesystem::path& reports_dir) {
  const SuccessTable t = table_from_manifest(manifest);
  std::filesystem::create_directories(reports_dir);
  {
    std::ofstream f(reports_dir / "success.csv", std::ios::binary);
    f << table_csv(t);
  }
  {
    std::ofstream f(reports_dir / "success.md", std::ios::binary);
    f << table_markdown(t, "Attack success");
  }
}

}  // namespace detail

// Renders the success table of a stored run. format is "csv" or "md".
inline std::filesystem::path emit_report(const std::filesystem::path& run_dir,
                                         const std::string& format) {
  std::ifstream mf(run_dir / "manifest.json");
  if (!mf) throw std::runtime_error("emit_report: no manifest in " + run_dir.string());
  nlohmann::ordered_json manifest = nlohmann::ordered_json::parse(mf);
  const SuccessTable t = detail::table_from_manifest(manifest);
  std::filesystem::create_directories(run_dir / "reports");
  std::filesystem::path out;
  if (format == "csv") {
    out = run_dir / "reports" / "success.csv";
    std::ofstream f(out, std::ios::binary);
    f << detail::table_csv(t);
  } else if (format == "md") {
    out = run_dir / "reports" / "success.md";
    std::ofstream f(out, std::ios::binary);
    f << detail::table_markdown(t, "Attack success");
  } else {
    throw std::invalid_argument("emit_report: format must be csv or md");
  }
  return out;
}

struct RecheckOutcome {
  SuccessTable table;
  std::vector<std::string> stale;  // slugs whose WAV is missing
  nlohmann::ordered_json entry;    // appended history record
};

// Re-transcribes every stored WAV of a finished run against an oracle,
// appending a dated entry to the manifest's recheck history. Attempts are
// never re-generated, only re-evaluated.
inline RecheckOutcome recheck(const std::filesystem::path& run_dir, OracleSession& session) {
  std::ifstream mf(run_dir / "manifest.json");
  if (!mf) throw std::runtime_error("recheck: no manifest in " + run_dir.string());
  nlohmann::ordered_json manifest = nlohmann::ordered_json::parse(mf);

  RecheckOutcome out;
  std::vector<AttackOutcome> outcomes;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : manifest.at("results")) {
    const std::string slug = row.at("slug").get<std::string>();
    const std::filesystem::path wav_path = run_dir / row.at("wav").get<std::string>();
    nlohmann::ordered_json r;
    r["slug"] = slug;
    r["hp"] = row.at("hp");
    if (!std::filesystem::exists(wav_path)) {
      out.stale.push_back(slug);
      r["stale"] = true;
      rows.push_back(std::move(r));
      continue;
    }
    const Waveform w = read_wav(wav_path.string());
    const Transcription t = session.transcribe(w);
    AttackOutcome o;
    o.hp_label = row.at("hp").get<std::string>();
    o.oracle_id = session.oracle().id();
    o.target = row.at("command").get<std::string>();
    o.transcript = t.raw_text;
    o.queries = 1;
    o.success = t.normalized_text == normalize_text(o.target);
    r["stale"] = false;
    r["success"] = o.success;
    r["transcript"] = t.raw_text;
    rows.push_back(std::move(r));
    outcomes.push_back(std::move(o));
  }
  out.table = success_rate(outcomes);

  nlohmann::ordered_json entry;
  entry["date"] = iso8601_utc_now();
  entry["oracle"] = session.oracle().id();
  entry["stale"] = out.stale;
  entry["rows"] = std::move(rows);
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const auto& hp : out.table.hp_labels)
    for (const auto& oracle : out.table.oracle_ids) {
      const SuccessCell* c = out.table.find(hp, oracle);
      if (!c) continue;
      nlohmann::ordered_json cell;
      cell["hp"] = hp;
      cell["oracle"] = oracle;
      cell["successes"] = c->successes;
      cell["attempts"] = c->attempts;
      cells.push_back(std::move(cell));
    }
  entry["table"] = std::move(cells);
  out.entry = entry;

  manifest["recheck_history"].push_back(entry);
  {
    std::ofstream f(run_dir / "manifest.json", std::ios::binary);
    f << manifest.dump(2) << "\n";
  }
  {
    std::ofstream f(run_dir / "reports" / "recheck.md", std::ios::binary);
    f << "# Recheck history\n\n";
    for (const auto& h : manifest["recheck_history"]) {
      f << "## " << h.at("date").get<std::string>() << " ("
        << h.at("oracle").get<std::string>() << ")\n\n";
      f << "| hp | oracle | successes | attempts |\n| --- | --- | --- | --- |\n";
      for (const auto& cell : h.at("table"))
        f << "| " << cell.at("hp").get<std::string>() << " | "
          << cell.at("oracle").get<std::string>() << " | " << cell.at("successes")
          << " | " << cell.at("attempts") << " |\n";
      f << "\n";
    }
  }
  return out;
}

struct RobustnessRow {
  double snr_db = 0.0;
  double wer = 0.0;
  double delta_wer = 0.0;
  double achieved_snr_db = 0.0;
};

struct RobustnessReport {
  double clean_wer = 0.0;
  std::vector<RobustnessRow> rows;
};

// Mixes calibrated Gaussian noise into clean corpus renderings and
// measures the word-error-rate increase per signal-to-noise ratio. The
// drawn noise is renormalized to exact target power, so the achieved SNR
// matches the request to float precision.
inline RobustnessReport noise_robustness_report(const ToyTts& tts, OracleSession& session,
                                                const std::vector<std::string>& corpus,
                                                const std::vector<double>& snr_db,
                                                std::uint64_t seed = 1) {
  std::vector<Waveform> clean;
  std::vector<std::string> targets;
  double clean_wer_sum = 0.0;
  for (const auto& command : corpus) {
    const std::string target = normalize_text(command);
    Waveform w = tts.vocode(tts.decode(tts.encode(target).rows).mel);
    Transcription t = session.transcribe(w);
    clean_wer_sum += wer(target, t.raw_text);
    clean.push_back(std::move(w));
    targets.push_back(target);
  }

  RobustnessReport report;
  report.clean_wer = clean_wer_sum / static_cast<double>(corpus.size());

  for (double snr : snr_db) {
    double wer_sum = 0.0;
    double achieved_sum = 0.0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
      const Waveform& x = clean[i];
      double sig_power = 0.0;
      for (double v : x.samples) sig_power += v * v;
      sig_power /= static_cast<double>(x.samples.size());

      Rng rng(derive_seed(seed, "snr:" + std::to_string(snr) + ":" + targets[i]));
      std::vector<double> g(x.samples.size());
      double g_power = 0.0;
      for (double& v : g) {
        v = rng.gaussian();
        g_power += v * v;
      }
      g_power /= static_cast<double>(g.size());
      const double target_power = sig_power / std::pow(10.0, snr / 10.0);
      const double scale = std::sqrt(target_power / g_power);

      Waveform noisy = x;
      double noise_power = 0.0;
      for (std::size_t n = 0; n < noisy.samples.size(); ++n) {
        const double added = scale * g[n];
        noisy.samples[n] += added;
        noise_power += added * added;
      }
      noise_power /= static_cast<double>(noisy.samples.size());
      achieved_sum += 10.0 * std::log10(sig_power / noise_power);

      Transcription t = session.transcribe(noisy);
      wer_sum += wer(targets[i], t.raw_text);
    }
    RobustnessRow row;
    row.snr_db = snr;
    row.wer = wer_sum / static_cast<double>(clean.size());
    row.delta_wer = row.wer - report.clean_wer;
    row.achieved_snr_db = achieved_sum / static_cast<double>(clean.size());
    report.rows.push_back(row);
  }
  return report;
}

inline std::string robustness_markdown(const RobustnessReport& r) {
  std::string out = "# Noise robustness\n\n";
  out += "clean WER: " + detail::format_double(r.clean_wer) + "\n\n";
  out += "| SNR (dB) | achieved (dB) | WER | dWER |\n| --- | --- | --- | --- |\n";
  for (const auto& row : r.rows)
    out += "| " + detail::format_double(row.snr_db) + " | " +
           detail::format_double(row.achieved_snr_db) + " | " +
           detail::format_double(row.wer) + " | " + detail::format_double(row.delta_wer) +
           " |\n";
  return out;
}

inline std::string defense_markdown(const DefenseEvaluation& ev) {
  std::string out = "# Defense evaluation\n\n";
  out += "#" + detail::table_markdown(ev.before, "No defense");
  for (std::size_t i = 0; i < ev.defense_labels.size(); ++i) {
    out += "\n#" + detail::table_markdown(ev.after[i], ev.defense_labels[i]);
    out += "\nrate drop: " + detail::format_double(ev.rate_drop[i]) + "\n";
  }
  return out;
}

// Loads the stored samples of a finished run for defense evaluation.
inline std::vector<StoredSample> load_stored_samples(const std::filesystem::path& run_dir,
                                                     bool successes_only) {
  std::ifstream mf(run_dir / "manifest.json");
  if (!mf)
    throw std::runtime_error("load_stored_samples: no manifest in " + run_dir.string());
  nlohmann::ordered_json manifest = nlohmann::ordered_json::parse(mf);
  std::vector<StoredSample> out;
  for (const auto& row : manifest.at("results")) {
    if (successes_only && !row.at("success").get<bool>()) continue;
    const std::filesystem::path wav_path = run_dir / row.at("wav").get<std::string>();
    if (!std::filesystem::exists(wav_path)) continue;
    StoredSample s;
    s.target = row.at("command").get<std::string>();
    s.hp_label = row.at("hp").get<std::string>();
    s.audio = read_wav(wav_path.string());
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace garble
