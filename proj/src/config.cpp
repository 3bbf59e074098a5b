#include "attrenh/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "attrenh/errors.hpp"

namespace attrenh {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, ptr);
  // TOML floats need a dot or exponent to stay floats.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

std::string parse_string(const std::string& key, const std::string& v) {
  if (v.size() < 2 || v.front() != '"' || v.back() != '"') {
    throw ConfigError("config key '" + key + "': expected a quoted string, got '" + v + "'");
  }
  return v.substr(1, v.size() - 2);
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') {
    throw ConfigError("config key '" + key + "': expected [a, b, ...], got '" + v + "'");
  }
  std::vector<int> out;
  std::stringstream ss(v.substr(1, v.size() - 2));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(static_cast<int>(parse_int(key, item)));
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

Field dbl(const std::string& key, double& ref) {
  return {key, [&ref, key](const std::string& v) { ref = parse_double(key, v); },
          [&ref] { return fmt_double(ref); }};
}

Field num(const std::string& key, int& ref) {
  return {key, [&ref, key](const std::string& v) { ref = static_cast<int>(parse_int(key, v)); },
          [&ref] { return std::to_string(ref); }};
}

std::vector<Field> fields(RunConfig& c) {
  std::vector<Field> f;
  f.push_back({"seed", [&c](const std::string& v) { c.seed = static_cast<std::uint64_t>(parse_int("seed", v)); },
               [&c] { return std::to_string(c.seed); }});
  f.push_back(num("data.height", c.data.height));
  f.push_back(num("data.width", c.data.width));
  f.push_back(num("data.train_count", c.data.train_count));
  f.push_back(num("data.test_count", c.data.test_count));
  f.push_back(dbl("data.occluded_train_fraction", c.data.occluded_train_fraction));
  f.push_back(dbl("data.occlusion_min", c.data.occlusion_min));
  f.push_back(dbl("data.occlusion_max", c.data.occlusion_max));
  f.push_back(num("data.lowres_factor", c.data.lowres_factor));
  f.push_back(dbl("data.min_positive_ratio", c.data.min_positive_ratio));
  auto& p = c.priors;
  f.push_back(dbl("attributes.female", p.female));
  f.push_back(dbl("attributes.hat", p.hat));
  f.push_back(dbl("attributes.backpack", p.backpack));
  f.push_back(dbl("attributes.upper_dark", p.upper_dark));
  f.push_back(dbl("attributes.upper_red", p.upper_red));
  f.push_back(dbl("attributes.skirt_given_female", p.skirt_given_female));
  f.push_back(dbl("attributes.skirt_given_male", p.skirt_given_male));
  f.push_back(dbl("attributes.handbag_given_female", p.handbag_given_female));
  f.push_back(dbl("attributes.handbag_given_male", p.handbag_given_male));
  f.push_back(dbl("attributes.lower_dark_given_upper_dark", p.lower_dark_given_upper_dark));
  f.push_back(dbl("attributes.lower_dark_given_upper_light", p.lower_dark_given_upper_light));
  f.push_back({"classifier.channels",
               [&c](const std::string& v) { c.classifier.channels = parse_int_list("classifier.channels", v); },
               [&c] {
                 std::string s = "[";
                 for (std::size_t i = 0; i < c.classifier.channels.size(); ++i) {
                   if (i) s += ", ";
                   s += std::to_string(c.classifier.channels[i]);
                 }
                 return s + "]";
               }});
  f.push_back(dbl("classifier.lr", c.classifier.lr));
  f.push_back(dbl("classifier.decay", c.classifier.decay));
  f.push_back(dbl("classifier.momentum", c.classifier.momentum));
  f.push_back(num("classifier.batch", c.classifier.batch));
  f.push_back(num("classifier.epochs", c.classifier.epochs));
  f.push_back(dbl("classifier.threshold", c.classifier.threshold));
  f.push_back(dbl("gan.lr", c.gan.lr));
  f.push_back(dbl("gan.beta1", c.gan.beta1));
  f.push_back(dbl("gan.beta2", c.gan.beta2));
  f.push_back(dbl("gan.eps", c.gan.eps));
  f.push_back(num("gan.batch", c.gan.batch));
  f.push_back(num("gan.k", c.gan.k));
  for (auto [name, e] : {std::pair<const char*, EnhancerConfig*>{"reconstruction", &c.reconstruction},
                         std::pair<const char*, EnhancerConfig*>{"sr", &c.sr}}) {
    const std::string s = name;
    f.push_back(dbl(s + ".lambda", e->lambda));
    f.push_back(num(s + ".pool", e->pool));
    f.push_back(num(s + ".epochs", e->epochs));
    f.push_back(num(s + ".width_divisor", e->width_divisor));
  }
  f.push_back(dbl("pipeline.trigger", c.pipeline.trigger));
  return f;
}

}  // namespace

RunConfig RunConfig::desk() {
  RunConfig c;
  c.preset = "desk";
  c.data.height = 80;
  c.data.width = 32;
  c.classifier.channels = {16, 32, 64};
  c.classifier.lr = 0.01;
  c.classifier.epochs = 8;
  c.reconstruction.lambda = 0.1;
  c.reconstruction.pool = 2;
  c.reconstruction.width_divisor = 4;
  c.reconstruction.epochs = 20;
  c.sr.lambda = 1.0;
  c.sr.pool = 2;
  c.sr.width_divisor = 4;
  c.sr.epochs = 30;
  return c;
}

RunConfig RunConfig::full() {
  RunConfig c;
  c.preset = "full";
  c.data.height = 320;
  c.data.width = 128;
  c.classifier.channels = {64, 128, 256, 512};
  c.classifier.lr = 1e-5;
  c.classifier.decay = 1e-6;
  c.reconstruction.lambda = 0.1;
  c.reconstruction.pool = 4;
  c.reconstruction.width_divisor = 1;
  c.sr.lambda = 1.0;
  c.sr.pool = 4;
  c.sr.width_divisor = 1;
  return c;
}

RunConfig RunConfig::from_preset(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "full") return full();
  throw ConfigError("unknown preset '" + name + "' (expected desk or full)");
}

void RunConfig::validate() const {
  std::vector<std::string> errs;
  auto need = [&errs](bool ok, const std::string& what) {
    if (!ok) errs.push_back(what);
  };
  need(data.height > 0 && data.width > 0, "data.height/width must be positive");
  need(data.height % 10 == 0, "data.height must be divisible by 10 (part partition)");
  need(data.height % 16 == 0 && data.width % 16 == 0, "data.height/width must be divisible by 16 (reconstruction encoder)");
  need(data.lowres_factor == 4, "data.lowres_factor must be 4");
  need(data.height % data.lowres_factor == 0 && data.width % data.lowres_factor == 0,
       "data.height/width must be divisible by data.lowres_factor");
  need(data.train_count >= 2 && data.test_count >= 2, "data.train_count/test_count must be >= 2");
  need(data.occluded_train_fraction > 0 && data.occluded_train_fraction <= 1,
       "data.occluded_train_fraction must lie in (0, 1]");
  need(data.occlusion_min >= 0.5 && data.occlusion_max <= 0.8 && data.occlusion_min <= data.occlusion_max,
       "occlusion range must lie within [0.5, 0.8]");
  need(data.min_positive_ratio >= 0 && data.min_positive_ratio < 1, "data.min_positive_ratio must lie in [0, 1)");
  for (double v : {priors.female, priors.hat, priors.backpack, priors.upper_dark, priors.upper_red,
                   priors.skirt_given_female, priors.skirt_given_male, priors.handbag_given_female,
                   priors.handbag_given_male, priors.lower_dark_given_upper_dark, priors.lower_dark_given_upper_light}) {
    need(v >= 0 && v <= 1, "attribute priors must lie in [0, 1]");
  }
  need(!classifier.channels.empty(), "classifier.channels must not be empty");
  for (int ch : classifier.channels) need(ch > 0, "classifier.channels must be positive");
  need(classifier.lr > 0 && classifier.decay >= 0, "classifier.lr must be > 0 and decay >= 0");
  need(classifier.momentum >= 0 && classifier.momentum < 1, "classifier.momentum must lie in [0, 1)");
  need(classifier.batch >= 1 && classifier.epochs >= 0, "classifier.batch >= 1 and epochs >= 0");
  need(classifier.threshold > 0 && classifier.threshold < 1, "classifier.threshold must lie in (0, 1)");
  need(gan.lr > 0 && gan.beta1 >= 0 && gan.beta1 < 1 && gan.beta2 >= 0 && gan.beta2 < 1 && gan.eps > 0,
       "gan optimizer settings out of range");
  need(gan.batch >= 1 && gan.k >= 1, "gan.batch and gan.k must be >= 1");
  for (const auto* e : {&reconstruction, &sr}) {
    need(e->lambda >= 0, "lambda must be >= 0");
    need(e->pool >= 1 && e->epochs >= 0, "pool >= 1 and epochs >= 0");
    need(e->width_divisor >= 1 && 128 % e->width_divisor == 0, "width_divisor must divide 128");
    need(data.height % e->pool == 0 && data.width % e->pool == 0, "pool must divide the image size");
  }
  need(pipeline.trigger > 0 && pipeline.trigger < 1, "pipeline.trigger must lie in (0, 1)");
  if (!errs.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
}

std::string RunConfig::to_toml() const {
  auto& self = const_cast<RunConfig&>(*this);
  std::ostringstream os;
  os << "preset = \"" << preset << "\"\n";
  std::string section;
  for (const auto& f : fields(self)) {
    const auto dot = f.key.find('.');
    if (dot == std::string::npos) {
      os << f.key << " = " << f.get() << "\n";
      continue;
    }
    const std::string sec = f.key.substr(0, dot);
    if (sec != section) {
      os << "\n[" << sec << "]\n";
      section = sec;
    }
    os << f.key.substr(dot + 1) << " = " << f.get() << "\n";
  }
  return os.str();
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string RunConfig::hash() const {
  // Epoch counts stay out so a finished run can be resumed for longer.
  RunConfig c = *this;
  c.classifier.epochs = 0;
  c.reconstruction.epochs = 0;
  c.sr.epochs = 0;
  return fnv1a_hex(c.to_toml());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "preset") {
    throw ConfigError("'preset' can only be set at the top of a config file");
  }
  for (auto& f : fields(*this)) {
    if (f.key == key) {
      f.set(trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::string> RunConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& f : fields(const_cast<RunConfig&>(*this))) out.push_back(f.key);
  return out;
}

RunConfig parse_config(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> assignments;
  std::string preset = "desk";
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // Strip comments outside quotes.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty() && key == "preset") {
      preset = parse_string("preset", value);
      continue;
    }
    assignments.emplace_back(section.empty() ? key : section + "." + key, value);
  }
  RunConfig cfg = RunConfig::from_preset(preset);
  std::vector<std::string> unknown;
  const auto known = cfg.keys();
  for (const auto& [k, v] : assignments) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      unknown.push_back(k);
      continue;
    }
    cfg.set(k, v);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

RunConfig resolve_config(RunConfig base, const std::vector<std::string>& overrides) {
  std::vector<std::string> unknown;
  const auto known = base.keys();
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    const std::string key = trim(o.substr(0, eq));
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      unknown.push_back(key);
      continue;
    }
    base.set(key, o.substr(eq + 1));
  }
  if (!unknown.empty()) {
    std::string msg = "unknown override keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  if (const char* env = std::getenv("ATTRENHANCE_SEED"); env && *env) {
    base.set("seed", env);
  }
  base.validate();
  return base;
}

}  // namespace attrenh
