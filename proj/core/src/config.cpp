#include "wmnet/config.hpp"

#include <fstream>
#include <sstream>

namespace wmnet {

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      const char* ws = " \t\r\n";
      const size_t b = s.find_first_not_of(ws);
      if (b == std::string::npos) return std::string();
      const size_t e = s.find_last_not_of(ws);
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    WMNET_CHECK(eq != std::string::npos,
                "config: expected key=value at line " + std::to_string(lineno));
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream f(path);
  WMNET_CHECK(f.good(), "config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_kv_text(ss.str());
}

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw ValidationError("config: bad boolean for " + key + ": " + v);
}

std::array<int, 4> parse_widths(const std::string& v) {
  std::array<int, 4> w{};
  std::istringstream is(v);
  std::string tok;
  int i = 0;
  while (std::getline(is, tok, ',')) {
    WMNET_CHECK(i < 4, "config: widths needs exactly 4 entries");
    w[static_cast<size_t>(i++)] = std::stoi(tok);
  }
  WMNET_CHECK(i == 4, "config: widths needs exactly 4 entries");
  return w;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
  ExperimentConfig c;
  for (const auto& [k, v] : parse_kv_text(text)) {
    if (k == "wunet") c.wunet = parse_bool(v, k);
    else if (k == "sawf") c.sawf = parse_bool(v, k);
    else if (k == "cfm") c.cfm = parse_bool(v, k);
    else if (k == "xattn") c.xattn = parse_bool(v, k);
    else if (k == "w1_init") c.w1_init = std::stod(v);
    else if (k == "w2_init") c.w2_init = std::stod(v);
    else if (k == "widths") c.widths = parse_widths(v);
    else if (k == "head_width") c.head_width = std::stoi(v);
    else if (k == "epochs") c.epochs = std::stoi(v);
    else if (k == "batch") c.batch = std::stoi(v);
    else if (k == "lr") c.lr = std::stod(v);
    else if (k == "momentum") c.momentum = std::stod(v);
    else if (k == "grad_clip") c.grad_clip = std::stod(v);
    else if (k == "seed") c.seed = static_cast<unsigned>(std::stoul(v));
    else if (k == "seeds") c.seeds = std::stoi(v);
    else if (k == "eval_every") c.eval_every = std::stoi(v);
    else if (k == "threads") c.threads = std::stoi(v);
    else if (k == "data") c.data = v;
    else if (k == "out") c.out = v;
    else if (k == "conf_thresh") c.conf_thresh = std::stod(v);
    else throw ValidationError("config: unknown key: " + k);
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  WMNET_CHECK(f.good(), "config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_text(ss.str());
}

std::string ExperimentConfig::resolved_text() const {
  std::ostringstream os;
  os << "wunet=" << (wunet ? "on" : "off") << "\n"
     << "sawf=" << (sawf ? "on" : "off") << "\n"
     << "cfm=" << (cfm ? "on" : "off") << "\n"
     << "xattn=" << (xattn ? "on" : "off") << "\n"
     << "w1_init=" << w1_init << "\n"
     << "w2_init=" << w2_init << "\n"
     << "widths=" << widths[0] << "," << widths[1] << "," << widths[2] << "," << widths[3]
     << "\n"
     << "head_width=" << head_width << "\n"
     << "epochs=" << epochs << "\n"
     << "batch=" << batch << "\n"
     << "lr=" << lr << "\n"
     << "momentum=" << momentum << "\n"
     << "grad_clip=" << grad_clip << "\n"
     << "seed=" << seed << "\n"
     << "seeds=" << seeds << "\n"
     << "eval_every=" << eval_every << "\n"
     << "threads=" << threads << "\n"
     << "data=" << data << "\n"
     << "out=" << out << "\n"
     << "conf_thresh=" << conf_thresh << "\n";
  return os.str();
}

std::string config_hash_of(const std::string& text) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

std::string ExperimentConfig::hash() const { return config_hash_of(resolved_text()); }

ModelConfig ExperimentConfig::model_config() const {
  ModelConfig m;
  m.use_wunet = wunet;
  m.use_sawf = sawf;
  m.use_cfm = cfm;
  m.use_xattn = xattn;
  m.w1_init = w1_init;
  m.w2_init = w2_init;
  m.widths = widths;
  m.head_width = head_width;
  m.init_seed = seed;
  m.validate();
  return m;
}

void ExperimentConfig::validate() const {
  WMNET_CHECK(epochs >= 1 && batch >= 1, "config: epochs and batch must be positive");
  WMNET_CHECK(lr > 0, "config: lr must be positive");
  WMNET_CHECK(seeds >= 1, "config: seeds must be positive");
  WMNET_CHECK(eval_every >= 1, "config: eval_every must be positive");
  model_config();  // validates flag consistency
}

}  // namespace wmnet
