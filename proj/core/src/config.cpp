#include "difflab/config.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace difflab {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

struct Entry {
  std::string value;
  int line = 0;
  bool used = false;
};

using Section = std::map<std::string, Entry>;

struct Raw {
  std::map<std::string, Section> sections;
};

[[noreturn]] void fail_line(int line, const std::string& what) {
  throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

Raw parse_raw(const std::string& text) {
  Raw raw;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // '#' starts a comment; values therefore cannot contain '#'.
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string s = trim(line);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail_line(lineno, "malformed section header");
      section = trim(s.substr(1, s.size() - 2));
      if (section.empty()) fail_line(lineno, "empty section name");
      if (raw.sections.count(section))
        fail_line(lineno, "duplicate section [" + section + "]");
      raw.sections[section];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail_line(lineno, "expected 'key = value'");
    if (section.empty()) fail_line(lineno, "key outside any [section]");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) fail_line(lineno, "empty key");
    Section& sec = raw.sections[section];
    if (sec.count(key))
      fail_line(lineno, "duplicate key '" + section + "." + key + "'");
    sec[key] = Entry{value, lineno, false};
  }
  return raw;
}

[[noreturn]] void fail_key(const std::string& path, const std::string& what) {
  throw ConfigError("config key '" + path + "': " + what);
}

long long to_int(const std::string& v, const std::string& path) {
  errno = 0;
  char* end = nullptr;
  const long long r = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
    fail_key(path, "expected integer, got '" + v + "'");
  return r;
}

std::uint64_t to_u64(const std::string& v, const std::string& path) {
  if (v.empty() || v.front() == '-')
    fail_key(path, "expected unsigned integer, got '" + v + "'");
  errno = 0;
  char* end = nullptr;
  const unsigned long long r = std::strtoull(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || errno == ERANGE)
    fail_key(path, "expected unsigned integer, got '" + v + "'");
  return r;
}

double to_double(const std::string& v, const std::string& path) {
  errno = 0;
  char* end = nullptr;
  const double r = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size())
    fail_key(path, "expected number, got '" + v + "'");
  if (!std::isfinite(r)) fail_key(path, "value must be finite");
  return r;
}

std::vector<std::string> to_list(const std::string& v, const std::string& path) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= v.size()) {
    const auto comma = v.find(',', pos);
    const auto end = comma == std::string::npos ? v.size() : comma;
    const std::string item = trim(v.substr(pos, end - pos));
    if (item.empty()) fail_key(path, "empty list item");
    out.push_back(item);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) fail_key(path, "expected a non-empty list");
  return out;
}

std::vector<double> to_double_list(const std::string& v, const std::string& path) {
  std::vector<double> out;
  for (const std::string& item : to_list(v, path))
    out.push_back(to_double(item, path));
  return out;
}

class Reader {
 public:
  explicit Reader(Raw& raw) : raw_(raw) {}

  bool has_section(const std::string& sec) {
    if (raw_.sections.count(sec)) {
      seen_.insert({sec, true});
      return true;
    }
    return false;
  }

  Entry* find(const std::string& sec, const std::string& key) {
    auto it = raw_.sections.find(sec);
    if (it == raw_.sections.end()) return nullptr;
    seen_.insert({sec, true});
    auto jt = it->second.find(key);
    if (jt == it->second.end()) return nullptr;
    jt->second.used = true;
    return &jt->second;
  }

  std::string require(const std::string& sec, const std::string& key) {
    Entry* e = find(sec, key);
    if (!e)
      throw ConfigError("config: missing required key '" + sec + "." + key +
                        "'");
    return e->value;
  }

  void forbid(const std::string& sec, const std::string& key,
              const std::string& why) {
    auto it = raw_.sections.find(sec);
    if (it == raw_.sections.end()) return;
    if (it->second.count(key)) fail_key(sec + "." + key, why);
  }

  // After consuming everything the schema knows, any leftover is a typo.
  void reject_unknown(const std::vector<std::string>& known_sections) {
    for (const auto& [name, sec] : raw_.sections) {
      bool known = false;
      for (const auto& k : known_sections) known = known || k == name;
      if (!known) throw ConfigError("config: unknown section [" + name + "]");
      for (const auto& [key, entry] : sec)
        if (!entry.used)
          throw ConfigError("config: unknown key '" + name + "." + key + "'");
    }
  }

 private:
  Raw& raw_;
  std::map<std::string, bool> seen_;
};

template <typename Fn>
auto parse_enum(const std::string& value, const std::string& path, Fn&& fn) {
  try {
    return fn(value);
  } catch (const std::exception& e) {
    fail_key(path, e.what());
  }
}

// Shortest decimal form that parses back to the identical double.
std::string format_double(double v) {
  char buf[64];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  return out;
}

std::string join(const std::vector<double>& items) {
  std::vector<std::string> s;
  for (double v : items) s.push_back(format_double(v));
  return join(s);
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  Raw raw = parse_raw(text);
  Reader r(raw);
  ExperimentConfig cfg;

  if (!r.has_section("schedule"))
    throw ConfigError("config: missing required section [schedule]");
  cfg.T = static_cast<int>(to_int(r.require("schedule", "T"), "schedule.T"));
  cfg.beta_start =
      to_double(r.require("schedule", "beta_start"), "schedule.beta_start");
  cfg.beta_end =
      to_double(r.require("schedule", "beta_end"), "schedule.beta_end");
  if (Entry* e = r.find("schedule", "eta_ddpm"))
    cfg.eta_ddpm = to_double(e->value, "schedule.eta_ddpm");
  if (Entry* e = r.find("schedule", "h_formula"))
    cfg.h_formula = parse_enum(e->value, "schedule.h_formula",
                               h_formula_from_string);

  if (!r.has_section("dataset"))
    throw ConfigError("config: missing required section [dataset]");
  const std::string kind = r.require("dataset", "kind");
  if (kind == "synth") {
    cfg.dataset_kind = DatasetKind::Synth;
  } else if (kind == "idx") {
    cfg.dataset_kind = DatasetKind::Idx;
  } else {
    fail_key("dataset.kind", "expected 'synth' or 'idx', got '" + kind + "'");
  }
  cfg.synth.shape.height = static_cast<int>(
      to_int(r.require("dataset", "height"), "dataset.height"));
  cfg.synth.shape.width =
      static_cast<int>(to_int(r.require("dataset", "width"), "dataset.width"));
  cfg.synth.shape.channels = 1;
  if (Entry* e = r.find("dataset", "channels"))
    cfg.synth.shape.channels =
        static_cast<int>(to_int(e->value, "dataset.channels"));
  cfg.synth.templates =
      to_list(r.require("dataset", "templates"), "dataset.templates");
  cfg.synth.stds = to_double_list(r.require("dataset", "std"), "dataset.std");
  if (cfg.synth.stds.size() == 1 && cfg.synth.templates.size() > 1)
    cfg.synth.stds.assign(cfg.synth.templates.size(), cfg.synth.stds[0]);
  if (Entry* e = r.find("dataset", "priors"))
    cfg.synth.priors = to_double_list(e->value, "dataset.priors");
  if (cfg.dataset_kind == DatasetKind::Synth) {
    cfg.synth.samples_per_class = static_cast<int>(to_int(
        r.require("dataset", "samples_per_class"), "dataset.samples_per_class"));
    r.forbid("dataset", "images", "only valid when dataset.kind = idx");
    r.forbid("dataset", "labels", "only valid when dataset.kind = idx");
  } else {
    cfg.idx_images = r.require("dataset", "images");
    cfg.idx_labels = r.require("dataset", "labels");
    // Not used for file-backed data; kept valid so the same spec can build
    // the mixture model.
    cfg.synth.samples_per_class = 1;
    r.forbid("dataset", "samples_per_class",
             "only valid when dataset.kind = synth");
  }
  try {
    validate_synth_spec(cfg.synth);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  if (r.has_section("classifier")) {
    if (Entry* e = r.find("classifier", "kind"))
      cfg.classifier_kind =
          parse_enum(e->value, "classifier.kind", classifier_kind_from_string);
    if (Entry* e = r.find("classifier", "activation"))
      cfg.activation =
          parse_enum(e->value, "classifier.activation", activation_from_string);
    if (Entry* e = r.find("classifier", "hidden"))
      cfg.hidden = static_cast<int>(to_int(e->value, "classifier.hidden"));
    if (Entry* e = r.find("classifier", "epochs"))
      cfg.epochs = static_cast<int>(to_int(e->value, "classifier.epochs"));
    if (Entry* e = r.find("classifier", "lr"))
      cfg.lr = to_double(e->value, "classifier.lr");
  }
  if (cfg.epochs < 0) fail_key("classifier.epochs", "must be >= 0");
  if (!(cfg.lr > 0.0)) fail_key("classifier.lr", "must be > 0");
  if (cfg.classifier_kind == ClassifierKind::Mlp1Hidden && cfg.hidden < 1)
    fail_key("classifier.hidden", "must be >= 1 for mlp-1-hidden");

  if (r.has_section("condition")) {
    if (Entry* e = r.find("condition", "kind")) {
      if (e->value == "class") {
        cfg.condition_kind = ConditionKind::Class;
      } else if (e->value == "null") {
        cfg.condition_kind = ConditionKind::Null;
      } else {
        fail_key("condition.kind",
                 "expected 'class' or 'null', got '" + e->value + "'");
      }
    }
    if (Entry* e = r.find("condition", "guidance_scale")) {
      cfg.guidance_scale = to_double(e->value, "condition.guidance_scale");
    } else if (cfg.condition_kind == ConditionKind::Null) {
      cfg.guidance_scale = 0.0;
    }
  }
  if (cfg.condition_kind == ConditionKind::Null && cfg.guidance_scale != 0.0)
    fail_key("condition.guidance_scale", "must be 0 when condition.kind = null");
  if (cfg.guidance_scale < 0.0)
    fail_key("condition.guidance_scale", "must be >= 0");

  if (r.has_section("attack")) {
    if (Entry* e = r.find("attack", "estimator"))
      cfg.attack.estimator =
          parse_enum(e->value, "attack.estimator", estimator_from_string);
    if (Entry* e = r.find("attack", "iterations"))
      cfg.attack.iterations =
          static_cast<int>(to_int(e->value, "attack.iterations"));
    if (Entry* e = r.find("attack", "step_size"))
      cfg.attack.step_size = to_double(e->value, "attack.step_size");
    if (Entry* e = r.find("attack", "kappa"))
      cfg.attack.kappa = to_double(e->value, "attack.kappa");
    if (Entry* e = r.find("attack", "momentum"))
      cfg.attack.momentum = to_double(e->value, "attack.momentum");
    if (Entry* e = r.find("attack", "rgf_queries"))
      cfg.attack.rgf_queries =
          static_cast<int>(to_int(e->value, "attack.rgf_queries"));
    if (Entry* e = r.find("attack", "rgf_sigma"))
      cfg.attack.rgf_sigma = to_double(e->value, "attack.rgf_sigma");
  }
  try {
    validate_attack_config(cfg.attack);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  if (r.has_section("run")) {
    if (Entry* e = r.find("run", "seed")) cfg.seed = to_u64(e->value, "run.seed");
    if (Entry* e = r.find("run", "max_images"))
      cfg.max_images = static_cast<int>(to_int(e->value, "run.max_images"));
  }
  if (cfg.max_images < 0) fail_key("run.max_images", "must be >= 0");

  r.reject_unknown(
      {"schedule", "dataset", "classifier", "condition", "attack", "run"});
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "[schedule]\n";
  out << "T = " << cfg.T << "\n";
  out << "beta_start = " << format_double(cfg.beta_start) << "\n";
  out << "beta_end = " << format_double(cfg.beta_end) << "\n";
  out << "eta_ddpm = " << format_double(cfg.eta_ddpm) << "\n";
  out << "h_formula = " << to_string(cfg.h_formula) << "\n";
  out << "\n[dataset]\n";
  out << "kind = "
      << (cfg.dataset_kind == DatasetKind::Synth ? "synth" : "idx") << "\n";
  out << "height = " << cfg.synth.shape.height << "\n";
  out << "width = " << cfg.synth.shape.width << "\n";
  out << "channels = " << cfg.synth.shape.channels << "\n";
  out << "templates = " << join(cfg.synth.templates) << "\n";
  out << "std = " << join(cfg.synth.stds) << "\n";
  if (!cfg.synth.priors.empty())
    out << "priors = " << join(cfg.synth.priors) << "\n";
  if (cfg.dataset_kind == DatasetKind::Synth) {
    out << "samples_per_class = " << cfg.synth.samples_per_class << "\n";
  } else {
    out << "images = " << cfg.idx_images << "\n";
    out << "labels = " << cfg.idx_labels << "\n";
  }
  out << "\n[classifier]\n";
  out << "kind = " << to_string(cfg.classifier_kind) << "\n";
  out << "activation = " << to_string(cfg.activation) << "\n";
  out << "hidden = " << cfg.hidden << "\n";
  out << "epochs = " << cfg.epochs << "\n";
  out << "lr = " << format_double(cfg.lr) << "\n";
  out << "\n[condition]\n";
  out << "kind = "
      << (cfg.condition_kind == ConditionKind::Class ? "class" : "null")
      << "\n";
  out << "guidance_scale = " << format_double(cfg.guidance_scale) << "\n";
  out << "\n[attack]\n";
  out << "estimator = " << to_string(cfg.attack.estimator) << "\n";
  out << "iterations = " << cfg.attack.iterations << "\n";
  out << "step_size = " << format_double(cfg.attack.step_size) << "\n";
  out << "kappa = " << format_double(cfg.attack.kappa) << "\n";
  out << "momentum = " << format_double(cfg.attack.momentum) << "\n";
  out << "rgf_queries = " << cfg.attack.rgf_queries << "\n";
  out << "rgf_sigma = " << format_double(cfg.attack.rgf_sigma) << "\n";
  out << "\n[run]\n";
  out << "seed = " << cfg.seed << "\n";
  out << "max_images = " << cfg.max_images << "\n";
  return out.str();
}

}  // namespace difflab
