#include "cafield/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "cafield/error.hpp"

namespace cafield::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<KeyInfo>& config_keys() {
  static const std::vector<KeyInfo> keys = {
      {"config", "", "flat key = value file applied below command-line values", ""},
      {"out", "run", "run directory; every command writes its artifacts here", ""},
      {"data", "", "dataset directory holding manifest.txt (default: the run directory)", ""},
      {"category", "wedge", "comma-separated synthetic categories", ""},
      {"count", "20", "instances per category", ""},
      {"seed", "0", "seed for generation, training, inference and metrics", ""},
      {"resolution", "32", "object grid side N (N³ cells)", "published"},
      {"clutter", "0", "relative mass of background clutter in generated scenes", ""},
      {"noise", "0", "amplitude of value noise in generated scenes", ""},
      {"depth_step", "0.03125", "d in 1 - exp(-d sigma)", ""},
      {"epochs", "300", "training epochs", "published"},
      {"batch", "2", "instances per step (one Siamese pair)", "published"},
      {"lr", "6e-4", "Adam learning rate", "published"},
      {"weight_decay", "1e-5", "decoupled Adam weight decay", "published"},
      {"w_canon", "2.0", "weight of the canonical reconstruction loss", "published"},
      {"w_ortho", "1.0", "weight of the orthonormality loss", "published"},
      {"w_siamese", "1.0", "weight of the Siamese Chamfer loss", ""},
      {"siamese", "true", "Siamese term on or off (--no-siamese turns it off)", "published"},
      {"signal", "gradient", "type-1 input signal: gradient | xyz", "published"},
      {"weighting", "direct", "density weighting: direct | local-average", "published"},
      {"lmax", "3", "maximum feature degree (verify uses 2 unless set)", ""},
      {"candidates", "4", "rotation candidates M", ""},
      {"channels", "8,16,32", "channels of the three convolution blocks", ""},
      {"embed", "128", "invariant embedding width", "published"},
      {"neighbors", "512", "neighbor cap per convolution target", ""},
      {"radii", "1,2,3", "radial shell centers in source-level lattice spacings", ""},
      {"checkpoint_every", "0", "save a checkpoint every k epochs (0 disables)", ""},
      {"checkpoint", "", "model checkpoint (default: <out>/model.ckpt)", ""},
      {"canonicalizer", "model", "eval method: model | pca | identity | oracle | all", ""},
      {"trials", "10", "rotation pairs per metric term", ""},
      {"points", "512", "template points per evaluation instance", ""},
      {"input", "", "canonicalize input: grid file, directory or manifest (default: dataset)", ""},
      {"inject_fault", "none", "verify test hook: none | wigner", ""},
      {"path", "", "file shown by inspect", ""},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.key] = {k.default_value, "default"};
}

void RunConfig::set(const std::string& key, const std::string& value, const std::string& source) {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
  it->second = {value, source};
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw UsageError(path.string() + ":" + std::to_string(n) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    if (key == "config") throw UsageError("config files cannot include other config files");
    set(key, trim(t.substr(eq + 1)), "file");
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
  return it->second.first;
}

const std::string& RunConfig::source(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
  return it->second.second;
}

double RunConfig::real(const std::string& key) const {
  const std::string& v = get(key);
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw UsageError(key + ": expected a number, got '" + v + "'");
  return d;
}

std::uint64_t RunConfig::u64(const std::string& key) const {
  const std::string& v = get(key);
  std::uint64_t x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw UsageError(key + ": expected a non-negative integer, got '" + v + "'");
  return x;
}

int RunConfig::integer(const std::string& key) const {
  const std::string& v = get(key);
  int x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw UsageError(key + ": expected an integer, got '" + v + "'");
  return x;
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw UsageError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> RunConfig::list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> RunConfig::reals(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : list(key)) {
    std::size_t used = 0;
    double d = 0.0;
    try {
      d = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || used == 0)
      throw UsageError(key + ": expected comma-separated numbers, got '" + get(key) + "'");
    out.push_back(d);
  }
  return out;
}

RunConfig resolve_config(const std::map<std::string, std::string>& cli) {
  RunConfig cfg;
  if (auto it = cli.find("config"); it != cli.end() && !it->second.empty()) {
    cfg.load_file(it->second);
    cfg.set("config", it->second, "cli");
  }
  for (const auto& [k, v] : cli)
    if (k != "config") cfg.set(k, v, "cli");
  return cfg;
}

}  // namespace cafield::cli
