#include "tconst/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tconst/errors.hpp"

namespace tconst {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid config: " + msg); };
  if (d_model == 0) fail("d_model must be positive");
  if (d_model % 2 != 0) fail("d_model must be even (sinusoidal positions)");
  if (vocab == 0) fail("vocab must be positive");
  if (n_heads == 0 || d_model % n_heads != 0) fail("n_heads must divide d_model");
  if (history_window == 0) fail("history_window must be >= 1");
  if (gen_window == 0) fail("gen_window must be >= 1");
  if (n_blocks == 0) fail("n_blocks must be >= 1");
  if (n_layers_baseline == 0) fail("n_layers_baseline must be >= 1");
  if (ffn_mult == 0) fail("ffn_mult must be >= 1");
}

ModelConfig toy_config() {
  ModelConfig c;
  c.name = "toy";
  return c;
}

ModelConfig paper_base_config() {
  ModelConfig c;
  c.name = "paper-41m-base";
  c.d_model = 432;
  c.vocab = 50257;
  c.n_heads = 12;
  c.ctx_layers = 2;
  c.history_window = 256;
  c.gen_window = 256;
  c.n_blocks = 2;
  c.n_layers_baseline = 8;
  return c;
}

ModelConfig paper_tconst_config() {
  ModelConfig c = paper_base_config();
  c.name = "paper-41m-tconst-2k-512-0.5";
  const VariantName v = parse_variant_name("TConstFormer 2K-512-0.5");
  c.history_window = *v.history_window;
  c.gen_window = *v.gen_window;
  return c;
}

ModelConfig preset(std::string_view name) {
  if (name == "toy") return toy_config();
  if (name == "paper-41m-base") return paper_base_config();
  if (name == "paper-41m-tconst-2k-512-0.5") return paper_tconst_config();
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

std::vector<std::string> preset_names() {
  return {"toy", "paper-41m-base", "paper-41m-tconst-2k-512-0.5"};
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::size_t parse_size(std::string_view key, std::string_view value) {
  std::size_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + std::string(key) + "': expected an unsigned integer, got '" +
                      std::string(value) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected a boolean, got '" +
                    std::string(value) + "'");
}

// Accepts "512", "2K", "1k".
std::optional<std::size_t> parse_length(std::string_view s) {
  std::size_t scale = 1;
  if (!s.empty() && (s.back() == 'K' || s.back() == 'k')) {
    scale = 1024;
    s.remove_suffix(1);
  }
  if (s.empty()) return std::nullopt;
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v == 0) return std::nullopt;
  return v * scale;
}

}  // namespace

ModelConfig parse_config_text(std::string_view text) {
  ModelConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string_view key = trim(view.substr(0, eq));
    const std::string_view value = trim(view.substr(eq + 1));
    if (key == "preset") {
      cfg = preset(value);
    } else if (key == "name") {
      cfg.name = std::string(value);
    } else if (key == "d_model") {
      cfg.d_model = parse_size(key, value);
    } else if (key == "vocab") {
      cfg.vocab = parse_size(key, value);
    } else if (key == "n_heads") {
      cfg.n_heads = parse_size(key, value);
    } else if (key == "ctx_layers") {
      cfg.ctx_layers = parse_size(key, value);
    } else if (key == "history_window") {
      cfg.history_window = parse_size(key, value);
    } else if (key == "gen_window") {
      cfg.gen_window = parse_size(key, value);
    } else if (key == "n_blocks") {
      cfg.n_blocks = parse_size(key, value);
    } else if (key == "n_layers_baseline") {
      cfg.n_layers_baseline = parse_size(key, value);
    } else if (key == "ffn_mult") {
      cfg.ffn_mult = parse_size(key, value);
    } else if (key == "tie_embeddings") {
      cfg.tie_embeddings = parse_bool(key, value);
    } else if (key == "final_restore") {
      cfg.final_restore = parse_bool(key, value);
    } else if (key == "variant") {
      const VariantName v = parse_variant_name(value);
      if (v.family != ModelFamily::TConstFormer) {
        throw ConfigError("config key 'variant' needs a TConstFormer name");
      }
      cfg.history_window = *v.history_window;
      cfg.gen_window = *v.gen_window;
    } else {
      throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" +
                        std::string(key) + "'");
    }
  }
  cfg.validate();
  return cfg;
}

ModelConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file '" + path + "'");
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

VariantName parse_variant_name(std::string_view text) {
  const std::string_view s = trim(text);
  const auto space = s.find(' ');
  if (space == std::string_view::npos) {
    throw ParseError("variant name '" + std::string(text) + "': expected '<family> <spec>'");
  }
  const std::string_view family = s.substr(0, space);
  const std::string_view spec = trim(s.substr(space + 1));
  VariantName out;
  if (family == "Base") {
    out.family = ModelFamily::Base;
    const auto len = parse_length(spec);
    if (!len) throw ParseError("variant name '" + std::string(text) + "': bad training length");
    out.train_len = *len;
    return out;
  }
  if (family != "TConstFormer") {
    throw ParseError("variant name '" + std::string(text) + "': unknown family");
  }
  out.family = ModelFamily::TConstFormer;
  const auto d1 = spec.find('-');
  const auto d2 = d1 == std::string_view::npos ? d1 : spec.find('-', d1 + 1);
  if (d2 == std::string_view::npos) {
    throw ParseError("variant name '" + std::string(text) + "': expected XXX-YYY-ZZZ");
  }
  const auto train = parse_length(spec.substr(0, d1));
  const auto total = parse_length(spec.substr(d1 + 1, d2 - d1 - 1));
  const std::string ratio_text(spec.substr(d2 + 1));
  double ratio = 0.0;
  std::size_t consumed = 0;
  try {
    ratio = std::stod(ratio_text, &consumed);
  } catch (const std::exception&) {
    consumed = 0;
  }
  if (!train || !total || consumed != ratio_text.size() || !(ratio > 0.0 && ratio < 1.0)) {
    throw ParseError("variant name '" + std::string(text) + "': malformed window fields");
  }
  const auto woh = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(*total) + 0.5));
  if (woh == 0 || woh >= *total) {
    throw ParseError("variant name '" + std::string(text) + "': ratio leaves an empty window");
  }
  out.train_len = *train;
  out.w_total = *total;
  out.ratio = ratio;
  out.history_window = woh;
  out.gen_window = *total - woh;
  return out;
}

}  // namespace tconst
