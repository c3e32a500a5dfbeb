#include "qdet/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace qdet {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& path,
                    const std::set<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key()))
      throw ConfigError(path + "/" + it.key(), "unknown field");
  }
}

double need_number(const json& obj, const std::string& path,
                   const std::string& key) {
  if (!obj.contains(key)) throw ConfigError(path + "/" + key, "missing field");
  if (!obj[key].is_number())
    throw ConfigError(path + "/" + key, "expected a number");
  return obj[key].get<double>();
}

std::vector<double> need_array(const json& obj, const std::string& path,
                               const std::string& key) {
  if (!obj.contains(key)) throw ConfigError(path + "/" + key, "missing field");
  if (!obj[key].is_array())
    throw ConfigError(path + "/" + key, "expected an array");
  std::vector<double> v;
  for (const auto& e : obj[key]) {
    if (!e.is_number()) throw ConfigError(path + "/" + key, "expected numbers");
    v.push_back(e.get<double>());
  }
  return v;
}

}  // namespace

Setup parse_setup(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("/", std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("/", "expected an object");
  reject_unknown(root, "", {"model", "prior", "penalty"});

  Setup s;

  if (!root.contains("model")) throw ConfigError("/model", "missing field");
  {
    const json& m = root["model"];
    if (!m.is_object()) throw ConfigError("/model", "expected an object");
    if (!m.contains("family")) throw ConfigError("/model/family", "missing field");
    const std::string family = m["family"].get<std::string>();
    if (family == "eta_sigmoid") {
      reject_unknown(m, "/model", {"family", "eta0", "eta1", "s0", "s1", "z"});
      s.model = DiffusionModel::eta_sigmoid(
          need_number(m, "/model", "eta0"), need_number(m, "/model", "eta1"),
          need_number(m, "/model", "s0"), need_number(m, "/model", "s1"),
          need_number(m, "/model", "z"));
    } else if (family == "tabulated") {
      reject_unknown(m, "/model", {"family", "x", "mu0", "mu1", "sigma", "z"});
      CoeffTable t;
      t.x = need_array(m, "/model", "x");
      t.mu0 = need_array(m, "/model", "mu0");
      t.mu1 = need_array(m, "/model", "mu1");
      t.sigma = need_array(m, "/model", "sigma");
      s.model = DiffusionModel::tabulated(std::move(t),
                                          need_number(m, "/model", "z"));
    } else {
      throw ConfigError("/model/family", "expected eta_sigmoid or tabulated");
    }
  }

  if (!root.contains("prior")) throw ConfigError("/prior", "missing field");
  {
    const json& p = root["prior"];
    if (!p.is_object()) throw ConfigError("/prior", "expected an object");
    reject_unknown(p, "/prior", {"pi", "lambda"});
    s.prior.pi = need_number(p, "/prior", "pi");
    s.prior.lambda = need_number(p, "/prior", "lambda");
    if (!(s.prior.pi >= 0.0 && s.prior.pi < 1.0))
      throw ConfigError("/prior/pi", "must lie in [0,1)");
    if (!(s.prior.lambda > 0.0))
      throw ConfigError("/prior/lambda", "must be positive");
  }

  if (!root.contains("penalty")) throw ConfigError("/penalty", "missing field");
  {
    const json& p = root["penalty"];
    if (!p.is_object()) throw ConfigError("/penalty", "expected an object");
    if (!p.contains("kind")) throw ConfigError("/penalty/kind", "missing field");
    const std::string kind = p["kind"].get<std::string>();
    if (kind == "linear") {
      reject_unknown(p, "/penalty", {"kind", "c"});
      s.penalty = PenaltySpec::linear(need_number(p, "/penalty", "c"));
    } else if (kind == "exponential") {
      reject_unknown(p, "/penalty", {"kind", "c", "alpha"});
      s.penalty = PenaltySpec::exponential(need_number(p, "/penalty", "c"),
                                           need_number(p, "/penalty", "alpha"));
    } else {
      throw ConfigError("/penalty/kind", "expected linear or exponential");
    }
  }

  return s;
}

Setup load_setup(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("/", "cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_setup(ss.str());
}

std::string canonical_config(const Setup& s) {
  json root;
  if (s.model.family() == Family::EtaSigmoid) {
    root["model"] = {{"family", "eta_sigmoid"}, {"eta0", s.model.eta0()},
                     {"eta1", s.model.eta1()},  {"s0", s.model.s0()},
                     {"s1", s.model.s1()},      {"z", s.model.z()}};
  } else {
    const CoeffTable& t = s.model.table();
    root["model"] = {{"family", "tabulated"}, {"x", t.x},       {"mu0", t.mu0},
                     {"mu1", t.mu1},          {"sigma", t.sigma}, {"z", s.model.z()}};
  }
  root["prior"] = {{"pi", s.prior.pi}, {"lambda", s.prior.lambda}};
  if (s.penalty.kind == PenaltySpec::Kind::Linear)
    root["penalty"] = {{"kind", "linear"}, {"c", s.penalty.c}};
  else
    root["penalty"] = {{"kind", "exponential"},
                       {"c", s.penalty.c},
                       {"alpha", s.penalty.alpha}};
  return root.dump();  // nlohmann objects iterate in sorted key order
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace qdet
