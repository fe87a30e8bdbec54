#include "stride_intent/synth.hpp"

#include <catch_amalgamated.hpp>
#include <json.hpp>

#include <sys/wait.h>

using namespace stride_intent;
namespace fs = std::filesystem;

namespace {

const fs::path& work_root() {
  static const fs::path root = [] {
    const fs::path r = fs::temp_directory_path() / "stride_intent_cli";
    fs::remove_all(r);
    fs::create_directories(r);
    csv::write_file(r / "small.ini",
                    "[synth]\nn_trials_per_mode = 4\n\n[ica]\nmax_iter = 64\n\n[classify]\ncv_folds = 5\n");
    return r;
  }();
  return root;
}

struct Result {
  int code = -1;
  std::string out;
};

Result cli(const std::string& args, const std::string& env = "") {
  const char* exe = std::getenv("STRIDE_INTENT_CLI");
  REQUIRE(exe != nullptr);
  const fs::path log = work_root() / "last_output.txt";
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" + exe + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = csv::read_file(log);
  return r;
}

std::string small(const fs::path& out) {
  return "--config \"" + (work_root() / "small.ini").string() + "\" --quiet --out \"" + out.string() + "\"";
}

std::map<std::string, std::string> hashes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) out[e.path().filename().string()] = sha256_hex(csv::read_file(e.path()));
  return out;
}

// One shared pipeline run; several tests inspect it.
const fs::path& pipeline_dir() {
  static const fs::path dir = [] {
    const fs::path d = work_root() / "pipeline_a";
    const auto r = cli("pipeline --synth-default " + small(d));
    INFO(r.out);
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("cli help and usage errors") {
  CHECK(cli("--help").code == 0);
  for (const char* sub : {"synth", "steps", "preprocess", "epochs", "behavior", "features", "train-eval", "sweep",
                          "pipeline"}) {
    const auto r = cli(std::string(sub) + " --help");
    CHECK(r.code == 0);
    CHECK(r.out.find("--out") != std::string::npos);
  }
  CHECK(cli("").code == 2);
  CHECK(cli("frobnicate").code == 2);
  CHECK(cli("synth --no-such-flag").code == 2);
}

TEST_CASE("cli reports invalid configuration with exit 2") {
  const auto r = cli("synth --set features.bogus=1 --out \"" + (work_root() / "bad").string() + "\"");
  CHECK(r.code == 2);
  CHECK(r.out.find("features.bogus") != std::string::npos);
  const auto r2 = cli("synth --set synth.n_channels=8 --out \"" + (work_root() / "bad").string() + "\"");
  CHECK(r2.code == 2);
  CHECK(cli("sweep --w 90,abc " + small(work_root() / "bad")).code == 2);
}

TEST_CASE("cli missing inputs are validation errors") {
  const auto r = cli("steps " + small(work_root() / "empty"));
  CHECK(r.code == 2);
  CHECK(r.out.find("keypoints.csv") != std::string::npos);
}

TEST_CASE("cli compute failures exit 1") {
  const fs::path blocker = work_root() / "blocker";
  csv::write_file(blocker, "x");
  CHECK(cli("synth " + small(blocker / "sub")).code == 1);
}

TEST_CASE("pipeline writes every artifact") {
  const auto& d = pipeline_dir();
  for (const char* f : {"signals.csv", "keypoints.csv", "events.csv", "ground_truth.csv", "manifest.csv", "strikes.csv",
                        "steps.csv", "sync_report.csv", "clean.csv", "ica_report.csv", "labels_left_right.csv",
                        "labels_adapt_non_adapt.csv", "labels_three_class.csv", "epochs.csv", "behavior_report.csv",
                        "reaction_times.csv", "features_adapt_non_adapt.csv", "filters_adapt_non_adapt.csv",
                        "patterns_adapt_non_adapt.csv", "confusion_three_class.csv", "metrics.json", "config.ini"})
    CHECK(fs::exists(d / f));

  const auto j = nlohmann::json::parse(csv::read_file(d / "metrics.json"));
  for (const char* k : {"acc_ana_epoch", "cv_loss_ana", "acc_lr_epoch", "confusion_3class", "rt_report"})
    CHECK(j.contains(k));
  for (const auto& [k, v] : j.items())
    if (v.is_number()) CHECK(std::isfinite(v.get<double>()));
  const auto& cm = j["confusion_3class"];
  REQUIRE(cm.size() == 3);
  for (std::size_t c = 0; c < 3; ++c) {
    double col = 0;
    for (std::size_t r = 0; r < 3; ++r) col += cm[r][c].get<double>();
    CHECK(std::abs(col - 100.0) <= 1e-6);
  }

  CHECK(csv::read_file(d / "behavior_report.csv").rfind("mode,step_mean,step_std,rt_mean,rt_std,nsteps_mean,nsteps_std\n", 0) == 0);
  CHECK(csv::read_file(d / "labels_adapt_non_adapt.csv").rfind("onset_s,side,trial,label\n", 0) == 0);
  CHECK(csv::read_file(d / "ica_report.csv").rfind("component,score,rejected\n", 0) == 0);
  CHECK(csv::read_file(d / "features_adapt_non_adapt.csv").rfind("window_id,parent_epoch,label,f1,", 0) == 0);

  const auto ini = csv::read_file(d / "config.ini");
  CHECK(ini.find("n_trials_per_mode = 4") != std::string::npos);
  CHECK(ini.find("cv_folds = 5") != std::string::npos);
}

TEST_CASE("pipeline is deterministic across runs and thread counts") {
  const auto& a = pipeline_dir();
  const fs::path b = work_root() / "pipeline_b";
  const auto r = cli("pipeline --synth-default " + small(b), "STRIDE_INTENT_THREADS=1");
  INFO(r.out);
  REQUIRE(r.code == 0);
  CHECK(hashes(a) == hashes(b));
}

TEST_CASE("pipeline equals the composed commands") {
  const auto& a = pipeline_dir();
  const fs::path c = work_root() / "composed";
  for (const char* step : {"synth", "steps", "preprocess", "epochs", "behavior", "features", "train-eval"}) {
    const auto r = cli(std::string(step) + " " + small(c));
    INFO(step << "\n" << r.out);
    REQUIRE(r.code == 0);
  }
  const auto ha = hashes(a), hc = hashes(c);
  CHECK(ha == hc);
}

TEST_CASE("commands read inputs from --in") {
  const fs::path d = work_root() / "from_in";
  const auto r = cli("behavior " + small(d) + " --in \"" + pipeline_dir().string() + "\"");
  INFO(r.out);
  REQUIRE(r.code == 0);
  CHECK(csv::read_file(d / "behavior_report.csv") == csv::read_file(pipeline_dir() / "behavior_report.csv"));
}

TEST_CASE("sweep rows cover every window and pipeline") {
  const fs::path d = work_root() / "sweep";
  const auto r = cli("sweep --w 90,80,70,60 --max-k 4 " + small(d) + " --in \"" + pipeline_dir().string() + "\"");
  INFO(r.out);
  REQUIRE(r.code == 0);
  const auto text = csv::read_file(d / "sweep.csv");
  CHECK(text.rfind("w,feature,classifier,acc_window,acc_epoch,cv_loss\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 4 * 4);
  const auto comp = csv::read_file(d / "components.csv");
  CHECK(std::count(comp.begin(), comp.end(), '\n') == 1 + 4);
}

TEST_CASE("seed flag changes the session") {
  const fs::path d = work_root() / "seed7";
  REQUIRE(cli("synth --seed 7 " + small(d)).code == 0);
  CHECK(sha256_hex(csv::read_file(d / "signals.csv")) != sha256_hex(csv::read_file(pipeline_dir() / "signals.csv")));
  CHECK(csv::read_file(d / "config.ini").find("seed = 7") != std::string::npos);
}
