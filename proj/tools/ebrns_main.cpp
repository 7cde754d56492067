// Command-line front end: gen / train / eval / smooth / inspect subcommands
// driven by a JSON run config with strict key checking. Every writing command
// drops a manifest next to its outputs carrying the effective config and a
// content hash per file, so any run can be replayed bit-identically.
//
// Exit codes: 0 success, 1 configuration or numeric contract violation,
// 2 filesystem problem.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ebrns/checkpoint.hpp"
#include "ebrns/classic.hpp"
#include "ebrns/dataset.hpp"
#include "ebrns/ebrns.hpp"
#include "ebrns/errors.hpp"
#include "ebrns/eval.hpp"
#include "ebrns/gates.hpp"
#include "ebrns/model.hpp"
#include "ebrns/rng.hpp"
#include "ebrns/train.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ebrns;

namespace {

constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------- plumbing

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << content;
  if (!out) throw IoError("write failed for " + path);
}

// FNV-1a 64-bit over raw bytes; stable fingerprint for the manifests.
std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string("fnv1a:") + buf;
}

json load_config(const std::string& path) {
  if (path.empty()) throw ConfigError("--config is required for this command");
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
}

void check_keys(const json& obj, const std::string& where,
                const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& item : obj.items())
    if (allowed.count(item.key()) == 0)
      throw ConfigError(where + ": unknown key '" + item.key() + "'");
}

const json& require_section(const json& cfg, const std::string& name) {
  if (!cfg.contains(name))
    throw ConfigError("config is missing the '" + name + "' section");
  return cfg.at(name);
}

double jnum(const json& obj, const std::string& where, const std::string& key,
            double fallback, bool required = false) {
  if (!obj.contains(key)) {
    if (required) throw ConfigError(where + ": missing required key '" + key + "'");
    return fallback;
  }
  if (!obj.at(key).is_number())
    throw ConfigError(where + "." + key + ": expected a number");
  return obj.at(key).get<double>();
}

long jint(const json& obj, const std::string& where, const std::string& key, long fallback,
          bool required = false) {
  if (!obj.contains(key)) {
    if (required) throw ConfigError(where + ": missing required key '" + key + "'");
    return fallback;
  }
  if (!obj.at(key).is_number_integer())
    throw ConfigError(where + "." + key + ": expected an integer");
  return obj.at(key).get<long>();
}

std::string jstr(const json& obj, const std::string& where, const std::string& key,
                 const std::string& fallback, bool required = false) {
  if (!obj.contains(key)) {
    if (required) throw ConfigError(where + ": missing required key '" + key + "'");
    return fallback;
  }
  if (!obj.at(key).is_string())
    throw ConfigError(where + "." + key + ": expected a string");
  return obj.at(key).get<std::string>();
}

// ------------------------------------------------------------------ model

std::unique_ptr<StateSpaceModel> model_from_config(const json& cfg,
                                                   const std::string& id_override,
                                                   std::string* id_out) {
  const json& jm = require_section(cfg, "model");
  check_keys(jm, "model", {"id", "dt", "q2", "r_diag"});
  std::string id_name = jstr(jm, "model", "id", "", true);
  if (!id_override.empty()) id_name = id_override;
  const BuiltinModelId id = parse_model_id(id_name);
  ModelParams p;
  p.dt = jnum(jm, "model", "dt", 1.0);
  p.q2 = jnum(jm, "model", "q2", 1.0);
  if (!jm.contains("r_diag") || !jm.at("r_diag").is_array())
    throw ConfigError("model.r_diag: expected an array of variances");
  for (const auto& v : jm.at("r_diag")) {
    if (!v.is_number()) throw ConfigError("model.r_diag: expected numbers");
    p.r_diag.push_back(v.get<double>());
  }
  if (id_out) *id_out = model_id_name(id);
  return make_builtin(id, p);
}

void check_dataset_dims(const Dataset& d, const StateSpaceModel& m, const std::string& path) {
  if (d.n_x != m.state_dim() || d.n_z != m.meas_dim())
    throw ConfigError("dataset " + path + " has dims x:" + std::to_string(d.n_x) +
                      "/z:" + std::to_string(d.n_z) + " but model " + m.name() +
                      " expects x:" + std::to_string(m.state_dim()) +
                      "/z:" + std::to_string(m.meas_dim()));
}

void check_bank_dims(const GateBank& bank, const StateSpaceModel& m,
                     const std::string& path) {
  if (bank.n_x != m.state_dim())
    throw ConfigError("checkpoint " + path + " carries state dimension " +
                      std::to_string(bank.n_x) + " but model " + m.name() +
                      " has state dimension " + std::to_string(m.state_dim()));
}

// ------------------------------------------------------------------ shared

struct CommonOpts {
  std::string config_path;
  std::string out = ".";
  int threads = 1;
  bool nominal = false;
  std::string model_override;
  int stage_override = 0;      // 0: keep config
  double noise_scale = 1.0;    // multiplies generator noise magnitudes
  bool seed_set = false;
  std::uint64_t seed = 0;
};

void attach_common(CLI::App* sub, CommonOpts& o, bool with_config = true) {
  if (with_config)
    sub->add_option("--config", o.config_path, "JSON run configuration file");
  sub->add_option("--out", o.out, "output directory (created if missing)");
  sub->add_option("--threads", o.threads, "worker-parallelism cap (default 1)")
      ->check(CLI::PositiveNumber);
  sub->add_option("--seed", o.seed, "override the command's seed")
      ->each([&o](const std::string&) { o.seed_set = true; });
}

void ensure_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory " + out + ": " + ec.message());
}

void write_manifest(const CommonOpts& o, const std::string& command,
                    const json& effective_config,
                    const std::map<std::string, std::string>& output_hashes) {
  json man;
  man["command"] = command;
  man["effective_config"] = effective_config;
  man["threads"] = o.threads;
  json outs = json::object();
  for (const auto& [name, hash] : output_hashes) outs[name] = hash;
  man["outputs"] = outs;
  write_file((fs::path(o.out) / (command + "_manifest.json")).string(), man.dump(2) + "\n");
}

// --------------------------------------------------------------------- gen

int cmd_gen(const CommonOpts& o) {
  json cfg = load_config(o.config_path);
  const json& jg = require_section(cfg, "gen");
  check_keys(jg, "gen",
             {"kind", "count", "k_len", "seed", "sigma_v", "sigma_range",
              "sigma_azimuth_deg", "dt"});
  const std::string kind = jstr(jg, "gen", "kind", "", true);
  const int count = static_cast<int>(jint(jg, "gen", "count", 0, true));
  const int k_len = static_cast<int>(jint(jg, "gen", "k_len", 0, true));
  std::uint64_t seed = static_cast<std::uint64_t>(jint(jg, "gen", "seed", 1));
  if (o.seed_set) seed = o.seed;

  Dataset data;
  json eff = jg;
  eff["seed"] = seed;
  if (kind == "temperature") {
    const double sigma_v = jnum(jg, "gen", "sigma_v", 0.0, true) * o.noise_scale;
    eff["sigma_v"] = sigma_v;
    data = gen_temperature(count, k_len, sigma_v, seed);
  } else if (kind == "landing") {
    const double dt = jnum(jg, "gen", "dt", 4.0);
    const double sigma_range = jnum(jg, "gen", "sigma_range", 0.0, true) * o.noise_scale;
    const double sigma_az_deg =
        jnum(jg, "gen", "sigma_azimuth_deg", 0.0, true) * o.noise_scale;
    eff["sigma_range"] = sigma_range;
    eff["sigma_azimuth_deg"] = sigma_az_deg;
    data = gen_landing(count, k_len, dt, sigma_range, sigma_az_deg * kPi / 180.0, seed);
  } else {
    throw ConfigError("gen.kind: expected 'temperature' or 'landing', got '" + kind + "'");
  }

  ensure_out_dir(o.out);
  const std::string csv_name = kind + ".csv";
  const std::string csv_path = (fs::path(o.out) / csv_name).string();
  write_csv(csv_path, data);
  write_manifest(o, "gen", eff, {{csv_name, fnv1a_hex(read_file(csv_path))}});
  std::cout << "wrote " << data.samples.size() << " samples x " << data.k_len
            << " frames to " << csv_path << "\n";
  return 0;
}

// ------------------------------------------------------------------- train

int cmd_train(const CommonOpts& o) {
  json cfg = load_config(o.config_path);
  std::string model_id;
  auto m = model_from_config(cfg, o.model_override, &model_id);
  const json& jt = require_section(cfg, "train");
  check_keys(jt, "train",
             {"dataset", "stage", "d_c", "hidden", "init_seed", "split", "split_seed",
              "lr", "batch", "epochs", "tau_a", "tau_b", "clip", "seed", "patience",
              "start_checkpoint"});

  int stage = static_cast<int>(jint(jt, "train", "stage", 1));
  if (o.stage_override != 0) stage = o.stage_override;
  if (stage != 1 && stage != 2)
    throw ConfigError("train.stage: expected 1 or 2, got " + std::to_string(stage));

  const std::string data_path = jstr(jt, "train", "dataset", "", true);
  Dataset data = read_csv(data_path);
  check_dataset_dims(data, *m, data_path);

  double p_train = 0.7, p_val = 0.2, p_test = 0.1;
  if (jt.contains("split")) {
    const json& js = jt.at("split");
    if (!js.is_array() || js.size() != 3)
      throw ConfigError("train.split: expected [train, validation, test] proportions");
    p_train = js[0].get<double>();
    p_val = js[1].get<double>();
    p_test = js[2].get<double>();
  }
  const std::uint64_t split_seed = static_cast<std::uint64_t>(jint(jt, "train", "split_seed", 1));
  SplitDataset split = split_dataset(data, p_train, p_val, p_test, split_seed);

  const std::string start_path = jstr(jt, "train", "start_checkpoint", "");
  GateBank bank;
  if (!start_path.empty()) {
    Checkpoint cp = load_checkpoint(start_path);
    check_bank_dims(cp.bank, *m, start_path);
    bank = cp.bank;
  } else if (stage == 2) {
    throw ConfigError(
        "train.stage 2 refines the backward nets of an already-trained forward pass: "
        "set train.start_checkpoint to the stage-one checkpoint");
  } else {
    const int d_c = static_cast<int>(jint(jt, "train", "d_c", 32));
    const int hidden = static_cast<int>(jint(jt, "train", "hidden", 32));
    Rng init_rng(static_cast<std::uint64_t>(jint(jt, "train", "init_seed", 9)));
    bank = make_gate_bank(m->state_dim(), d_c, hidden, init_rng);
  }

  TrainConfig tc;
  tc.stage = stage == 1 ? TrainStage::Filter : TrainStage::Smooth;
  tc.lr = jnum(jt, "train", "lr", tc.lr);
  tc.batch = static_cast<int>(jint(jt, "train", "batch", tc.batch));
  tc.epochs = static_cast<int>(jint(jt, "train", "epochs", tc.epochs));
  tc.tau_a = jnum(jt, "train", "tau_a", tc.tau_a);
  tc.tau_b = jnum(jt, "train", "tau_b", tc.tau_b);
  tc.clip = jnum(jt, "train", "clip", tc.clip);
  tc.seed = static_cast<std::uint64_t>(jint(jt, "train", "seed", 1));
  if (o.seed_set) tc.seed = o.seed;
  tc.patience = static_cast<int>(jint(jt, "train", "patience", tc.patience));

  TrainResult res = train_stage(bank, split, *m, tc);

  ensure_out_dir(o.out);
  const std::string ck_name = "stage" + std::to_string(stage) + ".ckpt";
  const std::string ck_path = (fs::path(o.out) / ck_name).string();
  Checkpoint cp;
  cp.bank = res.bank;
  cp.model_id = model_id;
  cp.n_z = m->meas_dim();
  save_checkpoint(ck_path, cp);

  const std::string report = train_report_to_json(res.report);
  const std::string report_path = (fs::path(o.out) / "train_report.json").string();
  write_file(report_path, report);

  json eff = jt;
  eff["stage"] = stage;
  eff["seed"] = tc.seed;
  // The report embeds wall-clock timing; hash its canonical (timing-free)
  // form so replays of the same config+seed produce the same manifest.
  json canon = json::parse(report);
  canon.erase("timing");
  write_manifest(o, "train", eff,
                 {{ck_name, fnv1a_hex(read_file(ck_path))},
                  {"train_report.json", fnv1a_hex(canon.dump())}});

  std::cout << "stage " << stage << ": ran " << res.report.ran_epochs << " epochs, best epoch "
            << res.report.best_epoch << " with validation RMSE " << res.report.best_val_rmse
            << "\ncheckpoint: " << ck_path << "\n";
  return 0;
}

// -------------------------------------------------------------------- eval

int cmd_eval(const CommonOpts& o) {
  json cfg = load_config(o.config_path);
  auto m = model_from_config(cfg, o.model_override, nullptr);
  const json& je = require_section(cfg, "eval");
  check_keys(je, "eval",
             {"dataset", "checkpoint", "estimators", "mc_runs", "sample_id", "mc_seed"});

  const std::string data_path = jstr(je, "eval", "dataset", "", true);
  Dataset data = read_csv(data_path);
  check_dataset_dims(data, *m, data_path);

  std::vector<EstimatorId> ids;
  if (je.contains("estimators")) {
    if (!je.at("estimators").is_array())
      throw ConfigError("eval.estimators: expected an array of names");
    for (const auto& v : je.at("estimators")) {
      if (!v.is_string()) throw ConfigError("eval.estimators: expected strings");
      ids.push_back(parse_estimator(v.get<std::string>()));
    }
    if (ids.empty()) throw ConfigError("eval.estimators: list is empty");
  } else {
    ids = {EstimatorId::ClassicSmoother, EstimatorId::EbrnsFilter,
           EstimatorId::EbrnsSmoother};
  }

  bool needs_bank = false;
  for (EstimatorId id : ids)
    needs_bank = needs_bank || id == EstimatorId::EbrnsFilter || id == EstimatorId::EbrnsSmoother;

  const std::string ck_path = jstr(je, "eval", "checkpoint", "");
  GateBank bank;
  bool have_bank = false;
  if (!ck_path.empty()) {
    Checkpoint cp = load_checkpoint(ck_path);
    check_bank_dims(cp.bank, *m, ck_path);
    bank = cp.bank;
    have_bank = true;
  } else if (needs_bank) {
    if (!o.nominal)
      throw ConfigError(
          "eval: the learned estimators need eval.checkpoint (or --nominal-mode to run "
          "the gate-free reduction)");
    Rng dummy(1);
    bank = make_gate_bank(m->state_dim(), 1, 1, dummy);  // dims only; gates skipped
    have_bank = true;
  }

  const int mc_runs = static_cast<int>(jint(je, "eval", "mc_runs", 0));
  std::uint64_t mc_seed = static_cast<std::uint64_t>(jint(je, "eval", "mc_seed", 1));
  if (o.seed_set) mc_seed = o.seed;

  std::vector<McResult> results;
  if (mc_runs > 0) {
    const int sample_id = static_cast<int>(jint(je, "eval", "sample_id", 0));
    const TrajectorySample* truth = nullptr;
    for (const TrajectorySample& s : data.samples)
      if (s.id == sample_id) truth = &s;
    if (!truth)
      throw ConfigError("eval.sample_id: no sample with id " + std::to_string(sample_id) +
                        " in " + data_path);
    for (EstimatorId id : ids)
      results.push_back(mc_run(id, have_bank ? &bank : nullptr, *truth, *m, mc_runs,
                               mc_seed, o.nominal));
  } else {
    for (EstimatorId id : ids)
      results.push_back(
          evaluate_dataset(id, have_bank ? &bank : nullptr, data, *m, o.nominal));
  }

  ensure_out_dir(o.out);
  const std::string js = compare_report_json(results);
  const std::string csv = compare_report_csv(results);
  const std::string js_path = (fs::path(o.out) / "compare.json").string();
  const std::string csv_path = (fs::path(o.out) / "compare.csv").string();
  write_file(js_path, js);
  write_file(csv_path, csv);

  json eff = je;
  eff["mc_seed"] = mc_seed;
  eff["nominal"] = o.nominal;
  write_manifest(o, "eval", eff,
                 {{"compare.json", fnv1a_hex(js)}, {"compare.csv", fnv1a_hex(csv)}});
  std::cout << summary_table(results);
  return 0;
}

// ------------------------------------------------------------------ smooth

int cmd_smooth(const CommonOpts& o) {
  json cfg = load_config(o.config_path);
  auto m = model_from_config(cfg, o.model_override, nullptr);
  const json& js = require_section(cfg, "smooth");
  check_keys(js, "smooth", {"dataset", "checkpoint", "sample_id"});

  const std::string data_path = jstr(js, "smooth", "dataset", "", true);
  Dataset data = read_csv(data_path);
  check_dataset_dims(data, *m, data_path);

  const int sample_id = static_cast<int>(jint(js, "smooth", "sample_id", 0));
  const TrajectorySample* sample = nullptr;
  for (const TrajectorySample& s : data.samples)
    if (s.id == sample_id) sample = &s;
  if (!sample)
    throw ConfigError("smooth.sample_id: no sample with id " + std::to_string(sample_id) +
                      " in " + data_path);

  const std::string ck_path = jstr(js, "smooth", "checkpoint", "");
  GateBank bank;
  if (!ck_path.empty()) {
    Checkpoint cp = load_checkpoint(ck_path);
    check_bank_dims(cp.bank, *m, ck_path);
    bank = cp.bank;
  } else if (!o.nominal) {
    throw ConfigError(
        "smooth: set smooth.checkpoint or pass --nominal-mode for the gate-free run");
  } else {
    Rng dummy(1);
    bank = make_gate_bank(m->state_dim(), 1, 1, dummy);
  }

  const GaussianBelief init = default_init(*m, sample->z[0]);
  EbrnsSequence seq =
      run_ebrns(bank, *m, sample->z, init, EbrnsMode::Smooth, o.nominal);

  // One row per frame: smoothed mean and marginal standard deviation per dim.
  std::ostringstream csv;
  csv << "k";
  for (int i = 1; i <= m->state_dim(); ++i) csv << ",x_hat_" << i;
  for (int i = 1; i <= m->state_dim(); ++i) csv << ",std_" << i;
  csv << "\n";
  char buf[32];
  for (int k = 0; k < seq.length(); ++k) {
    csv << k;
    for (int i = 0; i < m->state_dim(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", seq.smoothed[k].mean(i, 0));
      csv << "," << buf;
    }
    for (int i = 0; i < m->state_dim(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", std::sqrt(seq.smoothed[k].cov(i, i)));
      csv << "," << buf;
    }
    csv << "\n";
  }

  ensure_out_dir(o.out);
  const std::string out_path = (fs::path(o.out) / "smoothed.csv").string();
  write_file(out_path, csv.str());
  json eff = js;
  eff["nominal"] = o.nominal;
  write_manifest(o, "smooth", eff, {{"smoothed.csv", fnv1a_hex(csv.str())}});
  std::cout << "smoothed sample " << sample_id << " (" << seq.length() << " frames) -> "
            << out_path << "\n";
  return 0;
}

// ----------------------------------------------------------------- inspect

int cmd_inspect(const std::string& path) {
  const fs::path p(path);
  if (p.extension() == ".ckpt") {
    Checkpoint cp = load_checkpoint(path);
    std::cout << "checkpoint " << path << "\n  model: " << cp.model_id
              << "\n  state dim: " << cp.bank.n_x << "\n  measurement dim: " << cp.n_z
              << "\n  memory dim: " << cp.bank.d_c << "\n  hidden width: " << cp.bank.hidden
              << "\n  parameters: " << cp.bank.param_count()
              << "\n  content: " << fnv1a_hex(read_file(path)) << "\n";
    return 0;
  }
  if (p.extension() == ".csv") {
    Dataset d = read_csv(path);
    std::cout << "dataset " << path << "\n  samples: " << d.samples.size()
              << "\n  frames per sample: " << d.k_len << "\n  state dim: " << d.n_x
              << "\n  measurement dim: " << d.n_z
              << "\n  content: " << fnv1a_hex(read_file(path)) << "\n";
    return 0;
  }
  throw ConfigError("inspect: cannot tell what " + path +
                    " is (expected a .ckpt checkpoint or .csv dataset)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Gaussian sequence smoothing toolkit: recurrent-gated Bayesian filtering and "
      "smoothing with data generation, two-stage training and Monte-Carlo evaluation"};
  app.require_subcommand(1);

  CommonOpts gen_o, train_o, eval_o, smooth_o;
  std::string inspect_path;

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset (CSV + manifest)");
  attach_common(gen, gen_o);
  gen->add_option("--noise-level", gen_o.noise_scale,
                  "multiplier on the configured measurement-noise magnitudes");

  CLI::App* train = app.add_subcommand("train", "train one stage and write a checkpoint");
  attach_common(train, train_o);
  train->add_option("--stage", train_o.stage_override, "training stage (1 or 2)")
      ->check(CLI::Range(1, 2));
  train->add_option("--model", train_o.model_override,
                    "override model id (rw1d, cv2d-linear, cv2d-radar)");

  CLI::App* eval = app.add_subcommand("eval", "compare estimators and write reports");
  attach_common(eval, eval_o);
  eval->add_flag("--nominal-mode", eval_o.nominal,
                 "run the learned estimators with gates disabled (classical reduction)");
  eval->add_option("--model", eval_o.model_override, "override model id");

  CLI::App* smooth = app.add_subcommand("smooth", "smooth one sequence and write estimates");
  attach_common(smooth, smooth_o);
  smooth->add_flag("--nominal-mode", smooth_o.nominal, "gate-free classical smoothing");
  smooth->add_option("--model", smooth_o.model_override, "override model id");

  CLI::App* inspect = app.add_subcommand("inspect", "describe a checkpoint or dataset file");
  inspect->add_option("path", inspect_path, "file to describe (.ckpt or .csv)")->required();

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_gen(gen_o);
    if (train->parsed()) return cmd_train(train_o);
    if (eval->parsed()) return cmd_eval(eval_o);
    if (smooth->parsed()) return cmd_smooth(smooth_o);
    if (inspect->parsed()) return cmd_inspect(inspect_path);
    return 1;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
