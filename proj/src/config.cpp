#include "radcls/config.hpp"

#include <charconv>
#include <limits>
#include <fstream>
#include <functional>
#include <sstream>

#include "radcls/errors.hpp"

namespace radcls {

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  if (v == "inf" || v == "+inf") return std::numeric_limits<double>::infinity();
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

long to_long(const std::string& key, const std::string& v) {
  long out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

int to_int(const std::string& key, const std::string& v) { return static_cast<int>(to_long(key, v)); }

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_int(key, trim(item)));
  if (out.empty()) throw ConfigError("config key '" + key + "': expected a comma-separated list");
  return out;
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

std::string from_int_list(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string from_optional(const std::optional<int>& v) { return v ? std::to_string(*v) : "auto"; }

std::optional<int> to_optional(const std::string& key, const std::string& v) {
  if (v == "auto") return std::nullopt;
  return to_int(key, v);
}

std::pair<int, int> parse_tiles(const std::string& key, const std::string& v) {
  const auto x = v.find('x');
  if (x == std::string::npos) throw ConfigError("config key '" + key + "': expected WxH, got '" + v + "'");
  return {to_int(key, v.substr(0, x)), to_int(key, v.substr(x + 1))};
}

template <typename T>
struct Entry {
  const char* key;
  std::function<std::string(const T&)> get;
  std::function<void(T&, const std::string&, const std::string&)> set;
};

#define RADCLS_FIELD(KEY, FIELD, PARSE, FORMAT)                                 \
  Entry<T> {                                                                    \
    KEY, [](const T& c) { return FORMAT(c.FIELD); },                            \
        [](T& c, const std::string& k, const std::string& v) { c.FIELD = PARSE(k, v); } \
  }

std::string fmt_int(long v) { return std::to_string(v); }

const std::vector<Entry<ModelConfig>>& model_table() {
  using T = ModelConfig;
  static const std::vector<Entry<T>> table = {
      RADCLS_FIELD("model.stage_block_counts", stage_block_counts, to_int_list, from_int_list),
      RADCLS_FIELD("model.stage_channels", stage_channels, to_int_list, from_int_list),
      RADCLS_FIELD("model.stem_channels", stem_channels, to_int, fmt_int),
      RADCLS_FIELD("model.stem_kernel", stem_kernel, to_int, fmt_int),
      RADCLS_FIELD("model.stem_stride", stem_stride, to_int, fmt_int),
      RADCLS_FIELD("model.stem_pool", stem_pool, to_bool, from_bool),
      Entry<T>{"model.num_classes", [](const T& c) { return fmt_int(c.num_classes); },
               [](T& c, const std::string& k, const std::string& v) {
                 to_int(k, v);
                 c.num_classes = kNumClasses;  // the head is always binary
               }},
      RADCLS_FIELD("model.dropout_p", dropout_p, to_double, format_double),
      RADCLS_FIELD("model.cbam.reduction_ratio", cbam.reduction_ratio, to_int, fmt_int),
      RADCLS_FIELD("model.cbam.spatial_kernel", cbam.spatial_kernel, to_int, fmt_int),
      RADCLS_FIELD("model.cbam_per_block", cbam_per_block, to_bool, from_bool),
      RADCLS_FIELD("model.input_size", input_size, to_int, fmt_int),
      RADCLS_FIELD("model.bn_eps", bn_eps, to_double, format_double),
      RADCLS_FIELD("model.bn_momentum", bn_momentum, to_double, format_double),
  };
  return table;
}

const std::vector<Entry<TrainConfig>>& train_table() {
  using T = TrainConfig;
  static const std::vector<Entry<T>> table = {
      RADCLS_FIELD("lr_max", lr_max, to_double, format_double),
      RADCLS_FIELD("batch_size", batch_size, to_int, fmt_int),
      RADCLS_FIELD("epochs", epochs, to_int, fmt_int),
      RADCLS_FIELD("momentum", momentum, to_double, format_double),
      RADCLS_FIELD("dropout_p", dropout_p, to_double, format_double),
      Entry<T>{"seed", [](const T& c) { return std::to_string(c.seed); },
               [](T& c, const std::string& k, const std::string& v) { c.seed = static_cast<std::uint64_t>(to_long(k, v)); }},
      RADCLS_FIELD("schedule.cycle_steps", schedule.cycle_steps, to_optional, from_optional),
      RADCLS_FIELD("schedule.warmup_steps", schedule.warmup_steps, to_optional, from_optional),
      RADCLS_FIELD("schedule.lr_min", schedule.lr_min, to_double, format_double),
      RADCLS_FIELD("schedule.cycle_mult", schedule.cycle_mult, to_double, format_double),
      RADCLS_FIELD("schedule.decay_gamma", schedule.decay_gamma, to_double, format_double),
      RADCLS_FIELD("augment.hflip", augment.hflip, to_bool, from_bool),
      RADCLS_FIELD("augment.hflip_prob", augment.hflip_prob, to_double, format_double),
      RADCLS_FIELD("augment.rotate", augment.rotate, to_bool, from_bool),
      RADCLS_FIELD("augment.rotation_deg", augment.rotation_deg, to_double, format_double),
      RADCLS_FIELD("augment.scale", augment.scale, to_bool, from_bool),
      RADCLS_FIELD("augment.scale_lo", augment.scale_lo, to_double, format_double),
      RADCLS_FIELD("augment.scale_hi", augment.scale_hi, to_double, format_double),
      RADCLS_FIELD("augment.translate", augment.translate, to_bool, from_bool),
      RADCLS_FIELD("augment.translate_fraction", augment.translate_fraction, to_double, format_double),
      RADCLS_FIELD("augment.crop", augment.crop, to_bool, from_bool),
      RADCLS_FIELD("augment.crop_fraction", augment.crop_fraction, to_double, format_double),
      RADCLS_FIELD("augment.brightness", augment.brightness, to_bool, from_bool),
      RADCLS_FIELD("augment.brightness_delta", augment.brightness_delta, to_double, format_double),
      RADCLS_FIELD("augment.invert", augment.invert, to_bool, from_bool),
      RADCLS_FIELD("augment.invert_prob", augment.invert_prob, to_double, format_double),
      RADCLS_FIELD("imaging.clahe_clip", preprocess.clahe.clip_limit, to_double, format_double),
      Entry<T>{"imaging.clahe_tiles",
               [](const T& c) {
                 return std::to_string(c.preprocess.clahe.tiles_x) + "x" + std::to_string(c.preprocess.clahe.tiles_y);
               },
               [](T& c, const std::string& k, const std::string& v) {
                 std::tie(c.preprocess.clahe.tiles_x, c.preprocess.clahe.tiles_y) = parse_tiles(k, v);
               }},
      RADCLS_FIELD("imaging.crop_margin", preprocess.crop_margin, to_double, format_double),
      RADCLS_FIELD("imaging.letterbox", preprocess.letterbox, to_bool, from_bool),
      RADCLS_FIELD("imaging.pad_value", preprocess.pad_value, to_int, fmt_int),
      RADCLS_FIELD("imaging.skip_roi_and_clahe", preprocess.skip_roi_and_clahe, to_bool, from_bool),
  };
  return table;
}

#undef RADCLS_FIELD

[[noreturn]] void unknown_key(const std::string& key) {
  std::string msg = "unknown config key '" + key + "'; valid keys:";
  for (const auto& k : config_keys()) msg += " " + k;
  throw ConfigError(msg);
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : train_table()) keys.emplace_back(e.key);
  for (const auto& e : model_table())
    if (std::string(e.key) != "model.dropout_p") keys.emplace_back(e.key);
  return keys;
}

void apply_model_entry(ModelConfig& m, const std::string& key, const std::string& value) {
  for (const auto& e : model_table())
    if (key == e.key) return e.set(m, key, trim(value));
  throw ConfigError("unknown model config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> model_config_entries(const ModelConfig& m) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : model_table()) out.emplace_back(e.key, e.get(m));
  return out;
}

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  for (const auto& e : train_table()) {
    if (key == e.key) {
      e.set(cfg.train, key, v);
      if (key == "dropout_p") cfg.model.dropout_p = cfg.train.dropout_p;
      return;
    }
  }
  if (key != "model.dropout_p") {
    for (const auto& e : model_table())
      if (key == e.key) return e.set(cfg.model, key, v);
  }
  unknown_key(key);
}

std::string get_config_entry(const RunConfig& cfg, const std::string& key) {
  for (const auto& e : train_table())
    if (key == e.key) return e.get(cfg.train);
  for (const auto& e : model_table())
    if (key == e.key) return e.get(cfg.model);
  unknown_key(key);
}

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value, got '" + line + "'");
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

void apply_config_text(RunConfig& cfg, const std::string& text) {
  for (const auto& [k, v] : parse_key_values(text)) apply_config_entry(cfg, k, v);
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str());
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : config_keys()) out += k + "=" + get_config_entry(cfg, k) + "\n";
  return out;
}

}  // namespace radcls
