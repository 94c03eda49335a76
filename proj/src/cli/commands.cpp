#include "cafield/cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "cafield/ad/checkpoint.hpp"
#include "cafield/canon/canon.hpp"
#include "cafield/cli/verify.hpp"
#include "cafield/error.hpp"
#include "cafield/field/grid_io.hpp"
#include "cafield/field/preprocess.hpp"
#include "cafield/field/synth.hpp"
#include "cafield/metrics/metrics.hpp"
#include "cafield/net/model.hpp"
#include "cafield/so3/wigner.hpp"

namespace cafield::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kArtifactsTag = "# cafield-artifacts-v1";
constexpr std::uint64_t kSeedStride = 1000000;

fs::path out_dir(const RunConfig& cfg) {
  const fs::path dir = cfg.str("out");
  if (dir.empty()) throw UsageError("out must name a directory");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

fs::path data_dir(const RunConfig& cfg) {
  return cfg.str("data").empty() ? fs::path(cfg.str("out")) : fs::path(cfg.str("data"));
}

fs::path checkpoint_path(const RunConfig& cfg) {
  return cfg.str("checkpoint").empty() ? fs::path(cfg.str("out")) / "model.ckpt"
                                       : fs::path(cfg.str("checkpoint"));
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

/// Adds or replaces entries of <out>/artifacts.txt, kept sorted by path.
void record_artifacts(const fs::path& out, const std::string& command,
                      const std::vector<fs::path>& files) {
  const fs::path manifest = out / "artifacts.txt";
  std::map<std::string, std::string> rows;
  if (std::ifstream in(manifest); in) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      rows[line.substr(0, line.find('\t'))] = line;
    }
  }
  for (const auto& f : files) {
    const std::string rel = fs::relative(f, out).generic_string();
    rows[rel] = rel + '\t' + std::to_string(fs::file_size(f)) + '\t' + hex64(file_digest(f)) + '\t' +
                command;
  }
  std::ofstream os(manifest, std::ios::trunc);
  if (!os) throw IoError("cannot write " + manifest.string());
  os << kArtifactsTag << "\npath\tbytes\tfnv1a64\tcommand\n";
  for (const auto& [k, row] : rows) os << row << '\n';
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

field::Manifest load_dataset(const RunConfig& cfg, fs::path& dir) {
  dir = data_dir(cfg);
  return field::read_manifest(dir / "manifest.txt");
}

bool starts_with_file(const fs::path& p, const std::string& prefix) {
  std::ifstream in(p, std::ios::binary);
  std::string head(prefix.size(), '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  return in && head == prefix;
}

}  // namespace

std::uint64_t file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

net::ModelConfig model_config(const RunConfig& cfg) {
  net::ModelConfig m;
  m.lmax = cfg.integer("lmax");
  m.candidates = cfg.size("candidates");
  m.embed = cfg.size("embed");
  m.neighbors = cfg.size("neighbors");
  m.radii = cfg.reals("radii");
  const auto ch = cfg.reals("channels");
  if (ch.size() != 3) throw UsageError("channels needs three comma-separated values");
  for (std::size_t b = 0; b < 3; ++b) {
    if (ch[b] < 1 || ch[b] != static_cast<double>(static_cast<std::size_t>(ch[b])))
      throw UsageError("channels must be positive integers");
    m.channels[b] = static_cast<std::size_t>(ch[b]);
  }
  m.signal = net::parse_signal(cfg.str("signal"));
  m.weighting = net::parse_weighting(cfg.str("weighting"));
  m.validate();
  return m;
}

int run_gen(const RunConfig& cfg, std::ostream& out) {
  const auto cats = cfg.list("category");
  const std::size_t count = cfg.size("count");
  const std::uint64_t seed = cfg.u64("seed");
  const std::size_t res = cfg.size("resolution");
  const double clutter = cfg.real("clutter"), noise = cfg.real("noise"), d = cfg.real("depth_step");
  if (res < 8) throw UsageError("resolution must be at least 8");
  if (clutter < 0 || noise < 0) throw UsageError("clutter and noise must be non-negative");
  if (!(d > 0)) throw UsageError("depth_step must be positive");
  if (cats.empty()) throw UsageError("category list is empty");

  const fs::path dir = out_dir(cfg);
  std::error_code ec;
  fs::create_directories(dir / "grids", ec);
  if (ec) throw IoError("cannot create " + (dir / "grids").string());

  field::Manifest m;
  m.settings = {{"category", cfg.str("category")}, {"count", std::to_string(count)},
                {"seed", std::to_string(seed)},     {"resolution", std::to_string(res)},
                {"clutter", general(clutter)},      {"noise", general(noise)},
                {"depth_step", general(d)}};
  std::vector<fs::path> files;
  for (const auto& cat : cats) {
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint64_t s = seed * kSeedStride + i;
      const auto syn = field::synth_generate(cat, s, clutter, noise);
      auto grid = field::resample_object_grid(*syn.provider, field::scene_probe(*syn.provider, d, s),
                                              res, d);
      field::round_to_float(grid);
      char name[128];
      std::snprintf(name, sizeof name, "grids/%s_%04zu.cafg", cat.c_str(), i);
      field::write_grid(dir / name, grid);
      field::read_grid(dir / name).validate();
      files.push_back(dir / name);
      m.entries.push_back({cat, s, name, syn.instance.r_gt});
    }
  }
  field::write_manifest(dir / "manifest.txt", m);
  files.push_back(dir / "manifest.txt");
  record_artifacts(dir, "gen", files);
  out << "gen: " << m.entries.size() << " instances, " << res << "^3 grids\n";
  return 0;
}

int run_train(const RunConfig& cfg, std::ostream& out) {
  fs::path ddir;
  const auto manifest = load_dataset(cfg, ddir);
  std::vector<canon::TrainingInstance> data;
  for (const auto& e : manifest.entries) data.push_back({e.category, field::read_grid(ddir / e.path)});

  canon::TrainingConfig tc;
  tc.epochs = cfg.size("epochs");
  tc.batch_size = cfg.size("batch");
  tc.adam.lr = cfg.real("lr");
  tc.adam.weight_decay = cfg.real("weight_decay");
  tc.weights = {cfg.real("w_canon"), cfg.real("w_ortho"), cfg.real("w_siamese")};
  tc.seed = cfg.u64("seed");
  tc.siamese = cfg.flag("siamese");
  tc.resolution = cfg.size("resolution");
  tc.depth_step = cfg.real("depth_step");
  tc.checkpoint_every = cfg.size("checkpoint_every");
  tc.validate();
  const net::ModelConfig mc = model_config(cfg);

  const fs::path dir = out_dir(cfg);
  std::vector<fs::path> files;
  auto save = [&](const net::Model& model, const fs::path& path) {
    ad::Checkpoint ck = model.to_checkpoint();
    ck.meta["train.epochs"] = std::to_string(tc.epochs);
    ck.meta["train.seed"] = std::to_string(tc.seed);
    ck.meta["train.siamese"] = tc.siamese ? "true" : "false";
    ck.meta["train.instances"] = std::to_string(data.size());
    ad::write_checkpoint(path, ck);
    files.push_back(path);
    files.push_back(fs::path(path.string() + ".bin"));
  };

  net::Model model(mc, tc.seed);
  const fs::path log_path = dir / "train.log";
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw IoError("cannot write " + log_path.string());
  canon::CheckpointFn every;
  if (tc.checkpoint_every > 0) {
    fs::create_directories(dir / "checkpoints");
    every = [&](std::size_t epoch, const net::Model& m) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoints/epoch_%04zu.ckpt", epoch);
      save(m, dir / name);
    };
  }
  const auto result = canon::train(model, data, tc, &log, every);
  log.close();
  files.push_back(log_path);
  save(model, checkpoint_path(cfg));
  record_artifacts(dir, "train", files);

  const auto& first = result.log.front();
  const auto& last = result.log.back();
  out << "train: " << data.size() << " instances, " << tc.epochs << " epochs, total loss "
      << general(first.total) << " -> " << general(last.total) << "\n";
  return 0;
}

int run_canonicalize(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  net::Model model = net::Model::load(checkpoint_path(cfg));
  std::vector<std::pair<std::string, fs::path>> items;
  const fs::path input = cfg.str("input");
  auto add_manifest = [&](const fs::path& path) {
    const auto m = field::read_manifest(path);
    for (const auto& e : m.entries)
      items.emplace_back(fs::path(e.path).stem().string(), path.parent_path() / e.path);
  };
  if (input.empty()) {
    add_manifest(data_dir(cfg) / "manifest.txt");
  } else if (fs::is_directory(input)) {
    for (const auto& entry : fs::directory_iterator(input))
      if (entry.path().extension() == ".cafg") items.emplace_back(entry.path().stem().string(), entry.path());
    std::sort(items.begin(), items.end());
  } else if (starts_with_file(input, "# cafield-manifest")) {
    add_manifest(input);
  } else {
    items.emplace_back(input.stem().string(), input);
  }

  const fs::path dir = out_dir(cfg);
  fs::create_directories(dir / "canon");
  std::vector<fs::path> files;
  std::size_t failed = 0;
  for (const auto& [name, path] : items) {
    try {
      const auto grid = field::read_grid(path);
      const auto r = canon::canonicalize_grid(model, grid, cfg.u64("seed"));
      if (!so3::is_rotation(r.rotation, 1e-9)) throw NumericError("output rotation is not orthonormal");
      const fs::path rec = dir / "canon" / (name + ".json");
      canon::write_result(rec, r);
      files.push_back(rec);
    } catch (const Error& e) {
      ++failed;
      err << "canonicalize: " << name << ": " << e.what() << "\n";
    }
  }
  record_artifacts(dir, "canonicalize", files);
  out << "canonicalize: " << files.size() << " of " << items.size() << " inputs\n";
  return failed > 0 ? 2 : 0;
}

int run_eval(const RunConfig& cfg, std::ostream& out) {
  fs::path ddir;
  const auto manifest = load_dataset(cfg, ddir);
  const std::size_t points = cfg.size("points");
  const std::uint64_t seed = cfg.u64("seed");
  std::vector<metrics::EvalInstance> set;
  for (const auto& e : manifest.entries)
    set.push_back(metrics::make_eval_instance(e.category, e.seed, points, seed));

  std::vector<std::string> names;
  const std::string which = cfg.str("canonicalizer");
  if (which == "all") {
    names = {"model", "pca", "identity", "oracle"};
  } else if (which == "model" || which == "pca" || which == "identity" || which == "oracle") {
    names = {which};
  } else {
    throw UsageError("unknown canonicalizer '" + which + "'");
  }

  metrics::MetricConfig mc;
  mc.trials = cfg.size("trials");
  mc.seed = seed;
  if (mc.trials == 0) throw UsageError("trials must be positive");

  const fs::path dir = out_dir(cfg);
  std::vector<fs::path> files;
  for (const auto& name : names) {
    std::unique_ptr<net::Model> model;
    std::unique_ptr<metrics::Canonicalizer> c;
    std::vector<std::pair<std::string, std::string>> settings{
        {"canonicalizer", name}, {"instances", std::to_string(set.size())},
        {"points", std::to_string(points)}};
    if (name == "model") {
      const fs::path ck_path = checkpoint_path(cfg);
      const auto ck = ad::read_checkpoint(ck_path);
      model = std::make_unique<net::Model>(net::Model::from_checkpoint(ck));
      for (const char* k : {"lmax", "candidates", "signal", "weighting", "train.siamese", "train.epochs"})
        if (ck.meta.count(k)) settings.emplace_back(k, ck.meta.at(k));
      settings.emplace_back("resolution", std::to_string(cfg.size("resolution")));
      c = std::make_unique<metrics::ModelCanonicalizer>(*model, cfg.size("resolution"),
                                                        cfg.real("depth_step"), seed);
    } else if (name == "pca") {
      c = std::make_unique<metrics::PcaCanonicalizer>();
    } else if (name == "identity") {
      c = std::make_unique<metrics::IdentityCanonicalizer>();
    } else {
      c = std::make_unique<metrics::OracleCanonicalizer>();
    }
    auto report = metrics::evaluate_suite(*c, set, mc);
    report.settings = settings;
    const fs::path path = dir / ("metrics_" + name + ".json");
    metrics::write_report(path, report);
    files.push_back(path);
    out << "eval " << name << ": IC " << fixed(report.ic, 2) << " CC " << fixed(report.cc, 2)
        << " GEC " << fixed(report.gec, 2) << " (x100)\n";
  }
  record_artifacts(dir, "eval", files);
  return 0;
}

int run_verify(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  VerifyOptions opt;
  opt.lmax = cfg.is_default("lmax") ? 2 : cfg.integer("lmax");
  opt.seed = cfg.u64("seed");
  if (opt.lmax < 1 || opt.lmax > 6) throw UsageError("verify supports lmax 1..6");
  const std::string fault = cfg.str("inject_fault");
  if (fault != "none" && fault != "wigner") throw UsageError("unknown fault '" + fault + "'");

  so3::testing::inject_wigner_fault(fault == "wigner");
  std::vector<CheckResult> checks;
  try {
    checks = run_verification(opt);
  } catch (...) {
    so3::testing::inject_wigner_fault(false);
    throw;
  }
  so3::testing::inject_wigner_fault(false);

  std::ostringstream text;
  print_checks(text, checks);
  const std::size_t failed = static_cast<std::size_t>(
      std::count_if(checks.begin(), checks.end(), [](const CheckResult& c) { return !c.passed; }));
  text << "verify: " << checks.size() - failed << " of " << checks.size() << " checks passed\n";
  out << text.str();

  const fs::path dir = out_dir(cfg);
  std::ofstream(dir / "verify.txt", std::ios::trunc) << text.str();
  record_artifacts(dir, "verify", {dir / "verify.txt"});
  if (failed == 0) return 0;
  err << "verify: failing checks:";
  for (const auto& c : checks)
    if (!c.passed) err << ' ' << c.group << '/' << c.name;
  err << "\n";
  return exit_code_for(ErrorKind::Verification);
}

int run_inspect(const RunConfig& cfg, std::ostream& out) {
  const fs::path path = cfg.str("path");
  if (path.empty()) throw UsageError("inspect needs --path");
  if (!fs::exists(path)) throw IoError("no such file: " + path.string());
  if (starts_with_file(path, "CAFG")) {
    const auto g = field::read_grid(path);
    double lo = 1.0, hi = 0.0, sum = 0.0;
    for (double v : g.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
    }
    out << "grid " << g.dims[0] << "x" << g.dims[1] << "x" << g.dims[2] << "\n"
        << "center " << general(g.center.x()) << " " << general(g.center.y()) << " "
        << general(g.center.z()) << "\n"
        << "side " << general(g.diagonal) << "\n"
        << "values min " << general(lo) << " max " << general(hi) << " mean "
        << general(g.values.empty() ? 0.0 : sum / static_cast<double>(g.values.size())) << "\n";
  } else if (starts_with_file(path, "cafield-ckpt")) {
    const auto ck = ad::read_checkpoint(path);
    out << "checkpoint " << ck.tensors.size() << " tensors\n";
    for (const auto& [k, v] : ck.meta) out << "  " << k << " = " << v << "\n";
    std::size_t total = 0;
    for (const auto& [name, t] : ck.tensors) {
      out << "  " << name << " " << ad::shape_string(t.shape()) << "\n";
      total += t.size();
    }
    out << "parameters " << total << "\n";
  } else if (starts_with_file(path, "# cafield-manifest")) {
    const auto m = field::read_manifest(path);
    out << "manifest " << m.entries.size() << " entries\n";
    for (const auto& [k, v] : m.settings) out << "  " << k << " = " << v << "\n";
  } else {
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    out << "file " << path.filename().string() << " (" << fs::file_size(path) << " bytes)\n"
        << "  " << first.substr(0, 120) << "\n";
  }
  return 0;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"cafield: canonical fields of 3D density grids"};
  app.require_subcommand(1);
  app.fallthrough(false);

  std::string keys_help = "Config keys (--key value, or key = value in a --config file):\n";
  for (const auto& k : config_keys()) {
    keys_help += "  " + k.key + " [default: " + (k.default_value.empty() ? "none" : k.default_value) +
                 "]" + (k.provenance.empty() ? "" : " (published setting)") + "\n      " + k.help + "\n";
  }
  app.footer(keys_help);

  struct Command {
    std::string name, description;
  };
  const std::vector<Command> commands = {
      {"gen", "generate a synthetic dataset of object grids"},
      {"train", "train the canonicalizer on a dataset"},
      {"canonicalize", "canonicalize grids with a trained model"},
      {"eval", "instance/category consistency and equivariance metrics"},
      {"verify", "equivariance, lemma, gradient and loss checks"},
      {"inspect", "print the header of a grid, checkpoint or manifest"},
  };
  std::map<std::string, std::map<std::string, std::string>> values;
  std::map<std::string, std::map<std::string, CLI::Option*>> options;
  std::map<std::string, CLI::Option*> no_siamese;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.description);
    for (const auto& k : config_keys()) {
      std::string names = "--" + k.key;
      if (k.key.find('_') != std::string::npos) {
        std::string dashed = k.key;
        std::replace(dashed.begin(), dashed.end(), '_', '-');
        names += ",--" + dashed;
      }
      std::string desc = k.help + " [default: " + (k.default_value.empty() ? "none" : k.default_value) + "]";
      if (!k.provenance.empty()) desc += " (published setting)";
      options[c.name][k.key] = sub->add_option(names, values[c.name][k.key], desc);
    }
    no_siamese[c.name] = sub->add_flag("--no-siamese", "same as --siamese false");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : exit_code_for(ErrorKind::Usage);
  }

  try {
    for (const auto& c : commands) {
      if (!app.got_subcommand(c.name)) continue;
      std::map<std::string, std::string> given;
      for (const auto& [key, opt] : options[c.name])
        if (opt->count() > 0) given[key] = values[c.name][key];
      if (no_siamese[c.name]->count() > 0) {
        if (given.count("siamese")) throw UsageError("--no-siamese conflicts with --siamese");
        given["siamese"] = "false";
      }
      const RunConfig cfg = resolve_config(given);
      if (c.name == "gen") return run_gen(cfg, out);
      if (c.name == "train") return run_train(cfg, out);
      if (c.name == "canonicalize") return run_canonicalize(cfg, out, err);
      if (c.name == "eval") return run_eval(cfg, out);
      if (c.name == "verify") return run_verify(cfg, out, err);
      return run_inspect(cfg, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(ErrorKind::Io);
  }
  return exit_code_for(ErrorKind::Usage);
}

}  // namespace cafield::cli
