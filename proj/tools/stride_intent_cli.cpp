// stride-intent command-line driver.

#include "stride_intent/stride_intent.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <numeric>

namespace si = stride_intent;
namespace fs = std::filesystem;

namespace {

struct Options {
  fs::path out = ".";
  fs::path in;
  fs::path config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string w_list;
  int max_k = 10;
  bool synth_default = false;
  bool quiet = false;
  bool verbose = false;
};

class Run {
 public:
  Run(const Options& o, si::PipelineConfig cfg) : opt_(o), cfg_(std::move(cfg)) {}

  const si::PipelineConfig& config() const { return cfg_; }

  fs::path output(const std::string& name) const { return opt_.out / name; }

  /// Input lookup: the run directory first, then --in.
  fs::path input(const std::string& name, std::string_view producer) const {
    if (fs::exists(opt_.out / name)) return opt_.out / name;
    if (!opt_.in.empty() && fs::exists(opt_.in / name)) return opt_.in / name;
    throw si::ValidationError("missing input file " + name + " (produced by '" + std::string(producer) +
                              "'; pass --in or run that command first)");
  }

  void prepare_output() const {
    std::error_code ec;
    fs::create_directories(opt_.out, ec);
    if (ec) throw si::ComputeError("cannot create output directory " + opt_.out.string() + ": " + ec.message());
    si::csv::write_file(output("config.ini"), cfg_.to_text());
  }

  si::ToneTimeline tones() const { return si::ToneTimeline::from_events(si::load_events(input("events.csv", "synth"))); }

  si::MultichannelSignal signals() const { return si::load_signal(input("signals.csv", "synth")); }

  std::vector<si::StepRecord> steps() const {
    const auto gait = si::timeline_to_gait(si::load_events(input("strikes.csv", "steps")));
    return si::build_steps(gait, tones());
  }

  si::MultichannelSignal clean() const { return si::load_signal(input("clean.csv", "preprocess")); }

  si::EpochSet epochs(si::LabelScheme scheme) const {
    const auto labels =
        si::load_labels(input("labels_" + std::string(si::to_string(scheme)) + ".csv", "epochs"), scheme);
    return si::extract_epochs(clean(), labels, scheme, cfg_.epoch_len_s).epochs;
  }

 private:
  Options opt_;
  si::PipelineConfig cfg_;
};

std::string steps_to_csv(const std::vector<si::StepRecord>& steps) {
  std::string out = "onset_s,side,duration_s,trial,position,alternation_violation\n";
  for (const auto& s : steps) {
    out += si::csv::format(s.onset_s) + ',' + std::string(si::to_string(s.side)) + ',' +
           si::csv::format(s.duration_s) + ',' + std::to_string(s.trial_index) + ',' +
           std::to_string(s.position_in_trial) + ',' + (s.alternation_violation ? "1" : "0") + '\n';
  }
  return out;
}

std::string reactions_to_csv(const std::vector<si::TrialReaction>& rs) {
  std::string out = "trial,mode,rt_s,n_adapt_steps,detected\n";
  for (const auto& r : rs)
    out += std::to_string(r.trial) + ',' + std::string(si::to_string(r.mode)) + ',' + si::csv::format(r.rt_s) + ',' +
           std::to_string(r.n_adapt_steps) + ',' + (r.detected ? "1" : "0") + '\n';
  return out;
}

constexpr std::array kSchemes{si::LabelScheme::LeftRight, si::LabelScheme::AdaptNonAdapt,
                              si::LabelScheme::ThreeClass};

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void cmd_synth(const Run& run) {
  run.prepare_output();
  const auto m = si::gen_session(run.config().synth, run.output(""));
  si::log_info("synth: wrote " + std::to_string(m.file_hashes.size()) + " files");
}

void cmd_steps(const Run& run) {
  const auto keypoints = si::load_keypoints(run.input("keypoints.csv", "synth"));
  const auto signals = run.signals();
  const auto accel = signals.select(si::accel_channel_names());
  const auto r = si::run_steps(keypoints, accel, run.tones(), run.config());
  run.prepare_output();
  si::save_events(si::gait_to_timeline(r.fused.events), run.output("strikes.csv"));
  si::csv::write_file(run.output("steps.csv"), steps_to_csv(r.steps));
  si::csv::write_file(run.output("sync_report.csv"), r.fused.report.to_csv());
}

void cmd_preprocess(const Run& run) {
  const auto signals = run.signals();
  std::vector<std::string> eeg_names;
  for (const auto& n : signals.channel_names())
    if (n.rfind("acc_", 0) != 0) eeg_names.push_back(n);
  const auto r = si::run_preprocess(signals.select(eeg_names), run.config());
  run.prepare_output();
  si::save_signal(r.clean, run.output("clean.csv"));
  si::csv::write_file(run.output("ica_report.csv"), r.rejection.to_csv());
}

void cmd_epochs(const Run& run) {
  const auto steps = run.steps();
  const auto tones = run.tones();
  const auto clean = run.clean();
  run.prepare_output();
  std::string summary = "scheme,n_epochs,dropped\n";
  for (auto scheme : kSchemes) {
    const auto labels = si::label_steps(steps, tones, scheme, run.config().n_adapt_steps);
    si::csv::write_file(run.output("labels_" + std::string(si::to_string(scheme)) + ".csv"),
                        si::labels_to_csv(labels, scheme));
    const auto ex = si::extract_epochs(clean, labels, scheme, run.config().epoch_len_s);
    summary += std::string(si::to_string(scheme)) + ',' + std::to_string(ex.epochs.size()) + ',' +
               std::to_string(ex.dropped) + '\n';
  }
  si::csv::write_file(run.output("epochs.csv"), summary);
}

void cmd_behavior(const Run& run) {
  const auto steps = run.steps();
  const auto tones = run.tones();
  const auto rep = si::behavior_report(steps, tones, run.config().rt_band_k);
  run.prepare_output();
  si::csv::write_file(run.output("behavior_report.csv"), rep.to_csv());
  si::csv::write_file(run.output("reaction_times.csv"),
                      reactions_to_csv(si::estimate_reaction_time(steps, tones, run.config().rt_band_k)));
}

void cmd_features(const Run& run) {
  const auto& cfg = run.config();
  std::map<si::LabelScheme, si::EpochSet> sets;
  for (auto scheme : kSchemes) sets[scheme] = run.epochs(scheme);
  const auto channels = run.clean().channel_names();
  run.prepare_output();
  for (auto scheme : kSchemes) {
    const auto ws = si::slide_windows(sets[scheme], cfg.w, cfg.stride);
    std::vector<std::size_t> all(ws.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto model = si::train_model(ws, all, cfg.model_spec(scheme));
    const std::string tag(si::to_string(scheme));
    si::csv::write_file(run.output("features_" + tag + ".csv"),
                        si::features_to_csv(si::compute_features(ws, model.banks), scheme));
    si::csv::write_file(run.output("filters_" + tag + ".csv"), si::banks_to_csv(model.banks, channels, scheme, false));
    si::csv::write_file(run.output("patterns_" + tag + ".csv"), si::banks_to_csv(model.banks, channels, scheme, true));
  }
}

void cmd_train_eval(const Run& run) {
  const auto& cfg = run.config();
  std::map<si::LabelScheme, si::SchemeResult> results;
  for (auto scheme : kSchemes) {
    results[scheme] = si::run_train_eval(run.epochs(scheme), scheme, cfg);
    si::log_info("train-eval " + std::string(si::to_string(scheme)) + ": cv loss " +
                 si::csv::format(results[scheme].cv.loss_epoch) + ", holdout epoch accuracy " +
                 si::csv::format(results[scheme].holdout.acc_epoch));
  }
  const auto behavior = si::behavior_report(run.steps(), run.tones(), cfg.rt_band_k);
  run.prepare_output();
  for (const auto& [scheme, r] : results) {
    const std::string tag(si::to_string(scheme));
    si::csv::write_file(run.output("confusion_" + tag + ".csv"), r.cv.confusion_epoch.to_csv());
    std::string folds = "fold,loss_window,loss_epoch\n";
    for (std::size_t f = 0; f < r.cv.fold_loss_epoch.size(); ++f)
      folds += std::to_string(f) + ',' + si::csv::format(r.cv.fold_loss_window[f]) + ',' +
               si::csv::format(r.cv.fold_loss_epoch[f]) + '\n';
    si::csv::write_file(run.output("cv_" + tag + ".csv"), folds);
  }
  si::csv::write_file(run.output("metrics.json"), si::metrics_json(results, behavior).dump(2) + "\n");
}

std::vector<int> parse_w_list(const std::string& text, const std::vector<int>& fallback) {
  if (text.empty()) return fallback;
  std::vector<int> out;
  for (auto cell : si::csv::split(text)) {
    const auto v = si::csv::parse_double(si::csv::trim(cell));
    if (!v || *v <= 0 || *v != std::floor(*v)) throw si::ValidationError("--w: expected positive integers, got '" + text + "'");
    out.push_back(static_cast<int>(*v));
  }
  return out;
}

void cmd_sweep(const Run& run, const Options& o) {
  const auto& cfg = run.config();
  const auto sizes = parse_w_list(o.w_list, cfg.sweep_w);
  const auto epochs = run.epochs(si::LabelScheme::AdaptNonAdapt);
  const auto spec = cfg.model_spec(si::LabelScheme::AdaptNonAdapt);
  const auto table = si::window_sweep(epochs, sizes, spec, cfg.cv_options(), cfg.stride);
  const auto ws = si::slide_windows(epochs, cfg.w, cfg.stride);
  const int max_k = std::min<int>(o.max_k, static_cast<int>(ws.n_channels()));
  const auto curve = si::component_sweep(ws, max_k, spec, cfg.cv_options());
  run.prepare_output();
  si::csv::write_file(run.output("sweep.csv"), table.to_csv());
  si::csv::write_file(run.output("components.csv"), curve.to_csv());
}

void cmd_pipeline(const Options& o, const si::PipelineConfig& cfg) {
  const Run run(o, cfg);
  const bool have_data = !o.in.empty() && fs::exists(o.in / "signals.csv");
  if (o.synth_default || !have_data) {
    if (!o.synth_default && !o.in.empty())
      throw si::ValidationError("--in " + o.in.string() + " has no signals.csv; pass --synth-default to generate");
    cmd_synth(run);
  }
  cmd_steps(run);
  cmd_preprocess(run);
  cmd_epochs(run);
  cmd_behavior(run);
  cmd_features(run);
  cmd_train_eval(run);
}

si::PipelineConfig effective_config(const Options& o) {
  si::PipelineConfig cfg;
  if (!o.config.empty()) si::apply_config_text(cfg, si::csv::read_file(o.config));
  for (const auto& kv : o.overrides) si::apply_config_override(cfg, kv);
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.synth.seed = *o.seed;
  }
  cfg.synth.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gait-adaptation intention decoding from heel-strike-locked EEG"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", o.out, "Run directory for outputs")->capture_default_str();
    sub->add_option("--in", o.in, "Directory holding input files not found in --out");
    sub->add_option("--config", o.config, "Config file ([section] key = value)")->check(CLI::ExistingFile);
    sub->add_option("--set", o.overrides, "Config override section.key=value (repeatable)");
    sub->add_option("--seed", o.seed, "Seed for every random stage");
    sub->add_flag("--quiet", o.quiet, "Warnings only");
    sub->add_flag("--verbose", o.verbose, "Debug logging");
  };
  struct Sub {
    const char* name;
    const char* help;
  };
  const std::array<Sub, 9> subs{{{"synth", "Generate a synthetic session"},
                                 {"steps", "Heel strikes and step table from keypoints and acceleration"},
                                 {"preprocess", "Band-pass filter and ICA motion-artifact removal"},
                                 {"epochs", "Step labels and heel-strike epochs"},
                                 {"behavior", "Reaction-time and step statistics per tempo"},
                                 {"features", "Spatial filters and log-variance features"},
                                 {"train-eval", "Grouped cross-validation and holdout evaluation"},
                                 {"sweep", "Window-size and component-count sweeps"},
                                 {"pipeline", "Every stage in order"}}};
  std::map<std::string, CLI::App*> commands;
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    add_common(sub);
    commands[s.name] = sub;
  }
  commands["sweep"]->add_option("--w", o.w_list, "Comma-separated window sizes in samples");
  commands["sweep"]->add_option("--max-k", o.max_k, "Largest component count in the component sweep")->capture_default_str();
  commands["pipeline"]->add_flag("--synth-default", o.synth_default, "Generate the synthetic session first");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  si::log_threshold() = o.quiet ? si::LogLevel::Warn : (o.verbose ? si::LogLevel::Debug : si::LogLevel::Info);
  try {
    const auto cfg = effective_config(o);
    const Run run(o, cfg);
    if (commands["synth"]->parsed()) cmd_synth(run);
    else if (commands["steps"]->parsed()) cmd_steps(run);
    else if (commands["preprocess"]->parsed()) cmd_preprocess(run);
    else if (commands["epochs"]->parsed()) cmd_epochs(run);
    else if (commands["behavior"]->parsed()) cmd_behavior(run);
    else if (commands["features"]->parsed()) cmd_features(run);
    else if (commands["train-eval"]->parsed()) cmd_train_eval(run);
    else if (commands["sweep"]->parsed()) cmd_sweep(run, o);
    else if (commands["pipeline"]->parsed()) cmd_pipeline(o, cfg);
    return 0;
  } catch (const si::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
