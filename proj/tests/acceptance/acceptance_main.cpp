#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cafield/cli/commands.hpp"
#include "cafield/cli/verify.hpp"
#include "cafield/error.hpp"
#include "cafield/field/synth.hpp"
#include "cafield/metrics/metrics.hpp"
#include "cafield/net/model.hpp"

namespace fs = std::filesystem;
using namespace cafield;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"cafield"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

void require(const CliRun& r, const std::string& what) {
  if (r.code != 0) throw std::runtime_error(what + " exited " + std::to_string(r.code) + ": " + r.err);
}

Outcome from_checks(const std::vector<cli::CheckResult>& checks) {
  Outcome o{cli::all_passed(checks), ""};
  for (const auto& c : checks) {
    if (c.passed) continue;
    o.detail += (o.detail.empty() ? "failing: " : ", ") + c.name + "=" + fmt("%.3e", c.residual) +
                " (tol " + fmt("%.1e", c.tolerance) + ")";
  }
  if (o.detail.empty()) {
    double worst = 0.0;
    std::string at;
    for (const auto& c : checks) {
      if (c.tolerance <= 0.0 || c.name.ends_with("lower_bound")) continue;
      if (c.residual / c.tolerance >= worst) {
        worst = c.residual / c.tolerance;
        at = c.name;
      }
    }
    o.detail = std::to_string(checks.size()) + " checks, worst residual/tol " + fmt("%.2e", worst) +
               " at " + at;
  }
  return o;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

double last_field(const std::string& line) {
  return std::stod(line.substr(line.find_last_of('\t') + 1));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Every regular file under a, compared byte for byte with its twin under b.
bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    if (!fs::exists(b / rel) || slurp(e.path()) != slurp(b / rel)) {
      why = "differs: " + rel.generic_string();
      return false;
    }
    ++files;
  }
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file() && !fs::exists(a / fs::relative(e.path(), b))) {
      why = "missing: " + fs::relative(e.path(), b).generic_string();
      return false;
    }
  why = std::to_string(files) + " files identical";
  return true;
}

const fs::path kRoot = fs::temp_directory_path() / "cafield_acceptance";

// Desk-scale dataset shared by criteria 8 and 9.
const std::vector<std::string> kDesk = {"--resolution", "16", "--lmax", "2", "--candidates", "4"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void ensure_desk_data() {
  if (fs::exists(kRoot / "train" / "manifest.txt") && fs::exists(kRoot / "test" / "manifest.txt")) return;
  require(cli({"gen", "--out", (kRoot / "train").string(), "--category", "wedge", "--count", "16",
               "--seed", "1", "--resolution", "16"}),
          "gen train");
  require(cli({"gen", "--out", (kRoot / "test").string(), "--category", "wedge", "--count", "4",
               "--seed", "2", "--resolution", "16"}),
          "gen test");
}

double report_ic(const fs::path& report) { return metrics::read_report(report).ic; }

Outcome criterion7() {
  std::vector<metrics::EvalInstance> set;
  for (std::uint64_t s = 0; s < 5; ++s) set.push_back(metrics::make_eval_instance("wedge", 100 + s));
  metrics::MetricConfig cfg;
  cfg.seed = 7;
  metrics::IdentityCanonicalizer identity;
  metrics::OracleCanonicalizer oracle;
  const double id_gec = 100.0 * metrics::ground_truth_equivariance(identity, set, cfg).value;
  const double or_gec = metrics::ground_truth_equivariance(oracle, set, cfg).value;
  return {id_gec > 1.0 && or_gec < 1e-12,
          "identity GEC x100 " + fmt("%.3f", id_gec) + " (> 1.0), oracle GEC " + fmt("%.2e", or_gec) +
              " (< 1e-12)"};
}

Outcome criterion8() {
  ensure_desk_data();
  const fs::path run = kRoot / "desk";
  require(cli(with({"train", "--out", run.string(), "--data", (kRoot / "train").string(), "--epochs",
                    "50", "--seed", "0"},
                   kDesk)),
          "train");
  const auto log = read_lines(run / "train.log");
  if (log.size() != 52) throw std::runtime_error("train.log has " + std::to_string(log.size()) + " lines");
  const double first = last_field(log[2]), last = last_field(log[51]);

  // The untrained model is the training run's initialization.
  net::Model init(cli::model_config(cli::resolve_config(
                      {{"lmax", "2"}, {"candidates", "4"}})),
                  0);
  init.save(run / "init.ckpt");
  auto eval = [&](const fs::path& ckpt, const fs::path& out) {
    require(cli(with({"eval", "--out", out.string(), "--data", (kRoot / "test").string(),
                      "--canonicalizer", "model", "--checkpoint", ckpt.string()},
                     kDesk)),
            "eval");
    return report_ic(out / "metrics_model.json");
  };
  const double ic_trained = eval(run / "model.ckpt", run / "eval_trained");
  const double ic_init = eval(run / "init.ckpt", run / "eval_init");
  const bool loss_ok = last <= 0.5 * first;
  const bool ic_ok = ic_trained <= 0.5 * ic_init;
  return {loss_ok && ic_ok, "loss " + fmt("%.4f", first) + " -> " + fmt("%.4f", last) + " (ratio " +
                                fmt("%.3f", last / first) + " <= 0.5); test IC x100 trained " +
                                fmt("%.3f", ic_trained) + " vs untrained " + fmt("%.3f", ic_init) +
                                " (ratio " + fmt("%.3f", ic_trained / ic_init) + " <= 0.5)"};
}

Outcome criterion9() {
  ensure_desk_data();
  struct Toggle {
    std::string name;
    std::vector<std::string> flags;
    std::string label;
  };
  const std::vector<Toggle> toggles = {{"signal_xyz", {"--signal", "xyz"}, "signal=xyz"},
                                       {"local_average", {"--weighting", "local-average"},
                                        "weighting=local-average"},
                                       {"no_siamese", {"--no-siamese"}, "siamese=off"}};
  bool ok = true;
  std::string detail;
  for (const auto& t : toggles) {
    const fs::path run = kRoot / ("ablation_" + t.name);
    auto train = with({"train", "--out", run.string(), "--data", (kRoot / "train").string(), "--epochs",
                       "50", "--seed", "0"},
                      kDesk);
    require(cli(with(train, t.flags)), "train " + t.name);
    require(cli(with({"eval", "--out", run.string(), "--data", (kRoot / "test").string(),
                      "--canonicalizer", "model"},
                     kDesk)),
            "eval " + t.name);
    const auto r = metrics::read_report(run / "metrics_model.json");
    bool complete = !r.categories.empty() && std::isfinite(r.ic) && std::isfinite(r.cc) &&
                    std::isfinite(r.gec) && r.categories[0].ic_trials > 0 &&
                    r.categories[0].cc_trials > 0 && r.categories[0].gec_trials > 0;
    double reference = NAN;
    for (const auto& ref : r.references)
      if (ref.label == t.label && ref.metric == "GEC") reference = ref.value;
    complete = complete && std::isfinite(reference);
    ok = ok && complete;
    detail += (detail.empty() ? "" : "; ") + t.name + " GEC x100 " + fmt("%.3f", r.gec) +
              " (published " + fmt("%.2f", reference) + ")" + (complete ? "" : " INCOMPLETE");
  }
  return {ok, detail};
}

Outcome criterion10() {
  auto pipeline = [](const fs::path& dir) {
    std::string log;
    for (const auto& args : std::vector<std::vector<std::string>>{
             {"gen", "--count", "4", "--seed", "5", "--resolution", "16"},
             with({"train", "--epochs", "1", "--seed", "5"}, kDesk),
             with({"eval", "--canonicalizer", "all", "--trials", "3", "--seed", "5"}, kDesk),
             {"verify", "--seed", "5"}}) {
      const auto r = cli(with(args, {"--out", dir.string()}));
      if (r.code != 0 && !(args[0] == "verify" && r.code == 4))
        throw std::runtime_error(args[0] + " exited " + std::to_string(r.code) + ": " + r.err);
      log += args[0] + ":" + std::to_string(r.code) + "\n" + r.out + r.err;
    }
    std::ofstream(dir / "stdout.txt") << log;
  };
  pipeline(kRoot / "det_a");
  pipeline(kRoot / "det_b");
  std::string why;
  const bool same = same_tree(kRoot / "det_a", kRoot / "det_b", why);
  return {same, "verify, gen, train --epochs 1, eval reruns: " + why};
}

}  // namespace

int main() {
  std::error_code ec;
  fs::remove_all(kRoot, ec);
  fs::create_directories(kRoot);

  cli::VerifyOptions vopt;  // lmax 2, 16³, 20 rotations
  const std::vector<Criterion> criteria = {
      {1, "sh_wigner", 10, [&] { return from_checks(cli::check_sh_wigner(vopt)); }},
      {2, "clebsch_gordan", 30, [&] { return from_checks(cli::check_cg(vopt)); }},
      {3, "field_lemmas", 60, [&] { return from_checks(cli::check_lemmas(vopt)); }},
      {4, "layer_equivariance", 300, [&] { return from_checks(cli::check_layers(vopt)); }},
      {5, "autodiff_gradcheck", 120, [&] { return from_checks(cli::check_autodiff(vopt)); }},
      {6, "loss_identities", 60, [&] { return from_checks(cli::check_losses(vopt)); }},
      {7, "gec_degeneracy", 60, criterion7},
      {8, "desk_training", 1800, criterion8},
      {9, "ablation_reports", 3600, criterion9},
      {10, "determinism", 3600, criterion10},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_seconds;
    const bool pass = o.passed && in_time;
    if (!pass) ++failed;
    std::printf("%s criterion %d %s: %s; %.1f s (limit %.0f s)\n", pass ? "PASS" : "FAIL", c.id,
                c.name.c_str(), o.detail.c_str(), secs, c.limit_seconds);
    std::fflush(stdout);
  }
  fs::remove_all(kRoot, ec);
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
