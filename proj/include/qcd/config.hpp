#pragma once

#include <qcd/boundedness.hpp>
#include <qcd/box.hpp>
#include <qcd/distributions.hpp>
#include <qcd/error.hpp>
#include <qcd/mcusum.hpp>
#include <qcd/montecarlo.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace qcd {

/// Schema violation; `path` locates the offending field, e.g. "sets[1].lower[0]".
class ConfigError : public InputError {
 public:
  ConfigError(std::string path, const std::string& message)
      : InputError(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

enum class Family { gaussian, categorical };
enum class AlgorithmKind { mcusum, glr };
enum class PairSource { robust, oracle, explicit_pairs };

struct AlgorithmSpec {
  std::string id;
  AlgorithmKind kind = AlgorithmKind::mcusum;
  PairSource pairs = PairSource::robust;  // mcusum only
  std::size_t window = 0;                 // glr only
  std::optional<double> gamma;            // exactly one of gamma / h
  std::optional<double> h;

  bool operator==(const AlgorithmSpec&) const = default;
};

struct ExperimentConfig {
  Family family = Family::gaussian;
  std::size_t dimension = 0;  // vector length, or alphabet size for categorical
  std::vector<BoxSet> sets;   // gaussian only; sets[0] is the pre-change set
  std::vector<Distribution> lfds;
  std::optional<UpsilonSet> robust_pairs;
  std::optional<UpsilonSet> explicit_pairs;
  std::vector<AlgorithmSpec> algorithms;
  std::uint64_t runs = 500;
  std::uint64_t master_seed = 1;
  std::vector<GridPoint> sweep;
  std::string output = "out";
  double tolerance = 0.25;
  std::optional<std::uint64_t> cap;  // false-metric budget; default 20 * gamma

  bool operator==(const ExperimentConfig&) const = default;

  int num_types() const { return static_cast<int>(lfds.size()) - 1; }

  /// The boxes and LFDs with the robust pairs (explicit pairs if no robust ones).
  UncertaintyModel model() const {
    if (family != Family::gaussian) throw ConfigError("family", "boundedness checks need the gaussian family");
    if (!robust_pairs && !explicit_pairs) throw ConfigError("pairs", "needs pairs.robust or pairs.explicit");
    std::vector<GaussianId> g;
    for (const auto& d : lfds) g.push_back(std::get<GaussianId>(d));
    return {sets, robust_pairs ? *robust_pairs : *explicit_pairs, g};
  }

  const AlgorithmSpec& algorithm(const std::string& id) const {
    for (const auto& a : algorithms)
      if (a.id == id) return a;
    throw ConfigError("algorithms", "no algorithm with id '" + id + "'");
  }
};

/// phi-grid used when a gaussian two-type config has no "sweep":
/// phi in {0.4, ..., 0.8} for type 1 and {1.5, ..., 2.0} for type 2, mean = phi * 1.
inline std::vector<GridPoint> default_sweep(std::size_t dimension) {
  std::vector<GridPoint> out;
  for (int k = 4; k <= 8; ++k) out.push_back({1, Vector(dimension, k / 10.0)});
  for (int k = 15; k <= 20; ++k) out.push_back({2, Vector(dimension, k / 10.0)});
  return out;
}

namespace detail {

using json = nlohmann::json;

inline std::string at_key(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}
inline std::string at_index(const std::string& path, std::size_t n) {
  return path + "[" + std::to_string(n) + "]";
}

inline void only_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(at_key(path, key), "unknown field");
  }
}

inline const json& require(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) throw ConfigError(at_key(path, key), "missing required field");
  return obj.at(key);
}

inline double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(path, "expected a finite number");
  return x;
}

inline std::uint64_t count(const json& v, const std::string& path, std::uint64_t min) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    throw ConfigError(path, "expected a non-negative integer");
  const auto n = v.get<std::uint64_t>();
  if (n < min) throw ConfigError(path, "must be >= " + std::to_string(min));
  return n;
}

inline std::string text(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected a string");
  return v.get<std::string>();
}

inline Vector vector_of(const json& v, const std::string& path, std::size_t size) {
  if (!v.is_array()) throw ConfigError(path, "expected an array");
  if (v.size() != size) throw ConfigError(path, "expected " + std::to_string(size) + " entries");
  Vector out;
  for (std::size_t n = 0; n < v.size(); ++n) out.push_back(number(v[n], at_index(path, n)));
  return out;
}

/// Bounds: numbers, or null for an absent (infinite) bound.
inline Vector bounds_of(const json& v, const std::string& path, std::size_t size, double absent) {
  if (!v.is_array()) throw ConfigError(path, "expected an array");
  if (v.size() != size) throw ConfigError(path, "expected " + std::to_string(size) + " entries");
  Vector out;
  for (std::size_t n = 0; n < v.size(); ++n) {
    if (!v[n].is_null() && !v[n].is_number())
      throw ConfigError(at_index(path, n), "expected a number or null (absent bound)");
    out.push_back(v[n].is_null() ? absent : number(v[n], at_index(path, n)));
  }
  return out;
}

inline Distribution distribution_of(const json& v, const std::string& path, Family family,
                                    std::size_t dimension) {
  Vector x = vector_of(v, path, dimension);
  try {
    if (family == Family::gaussian) return GaussianId(std::move(x));
    return Categorical(std::move(x));
  } catch (const InputError& e) {
    throw ConfigError(path, e.what());
  }
}

inline json distribution_json(const Distribution& d) {
  if (const auto* g = std::get_if<GaussianId>(&d)) return g->mean();
  return std::get<Categorical>(d).probs();
}

inline json bounds_json(const Vector& v) {
  json out = json::array();
  for (double x : v) out.push_back(std::isinf(x) ? json(nullptr) : json(x));
  return out;
}

inline UpsilonSet pairs_of(const json& v, const std::string& path, Family family,
                           std::size_t dimension, int types) {
  if (!v.is_array()) throw ConfigError(path, "expected an array of pairs");
  UpsilonSet out(types);
  for (std::size_t n = 0; n < v.size(); ++n) {
    const std::string p = at_index(path, n);
    only_keys(v[n], p, {"i", "j", "null", "alt"});
    const auto i = static_cast<int>(count(require(v[n], p, "i"), at_key(p, "i"), 0));
    const auto j = static_cast<int>(count(require(v[n], p, "j"), at_key(p, "j"), 1));
    if (i > types || j > types || i == j) throw ConfigError(p, "pair index out of range");
    if (out.contains(i, j)) throw ConfigError(p, "duplicate pair");
    out.set(i, j,
            DistPair(distribution_of(require(v[n], p, "null"), at_key(p, "null"), family, dimension),
                     distribution_of(require(v[n], p, "alt"), at_key(p, "alt"), family, dimension)));
  }
  if (!out.complete()) throw ConfigError(path, "every (i, j) with i != j, j >= 1 needs a pair");
  return out;
}

inline json pairs_json(const UpsilonSet& u) {
  json out = json::array();
  for (const auto& [i, j] : u.keys()) {
    const auto& p = u.at(i, j);
    out.push_back({{"i", i}, {"j", j}, {"null", distribution_json(p.null_dist)},
                   {"alt", distribution_json(p.alt_dist)}});
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& root) {
  using detail::at_index;
  using detail::at_key;
  using detail::require;
  detail::only_keys(root, "", {"family", "dimension", "categories", "sets", "lfds", "pairs", "algorithms",
                              "runs", "master_seed", "sweep", "output", "calibration"});
  ExperimentConfig c;

  const std::string family = root.contains("family") ? detail::text(root["family"], "family") : "gaussian";
  if (family == "gaussian")
    c.family = Family::gaussian;
  else if (family == "categorical")
    c.family = Family::categorical;
  else
    throw ConfigError("family", "expected \"gaussian\" or \"categorical\"");
  const char* size_key = c.family == Family::gaussian ? "dimension" : "categories";
  c.dimension = detail::count(require(root, "", size_key), size_key, c.family == Family::gaussian ? 1 : 2);

  const auto& lfds = require(root, "", "lfds");
  if (!lfds.is_array() || lfds.size() < 2) throw ConfigError("lfds", "expected an array of at least 2 entries");
  for (std::size_t n = 0; n < lfds.size(); ++n)
    c.lfds.push_back(detail::distribution_of(lfds[n], at_index("lfds", n), c.family, c.dimension));
  const int types = c.num_types();

  if (c.family == Family::gaussian) {
    const auto& sets = require(root, "", "sets");
    if (!sets.is_array() || sets.size() != lfds.size())
      throw ConfigError("sets", "expected one box per lfd (" + std::to_string(lfds.size()) + ")");
    for (std::size_t n = 0; n < sets.size(); ++n) {
      const std::string p = at_index("sets", n);
      detail::only_keys(sets[n], p, {"lower", "upper"});
      const auto lo = detail::bounds_of(require(sets[n], p, "lower"), at_key(p, "lower"), c.dimension, -kInf);
      const auto hi = detail::bounds_of(require(sets[n], p, "upper"), at_key(p, "upper"), c.dimension, kInf);
      try {
        c.sets.emplace_back(lo, hi);
      } catch (const InputError& e) {
        throw ConfigError(p, e.what());
      }
    }
  } else if (root.contains("sets")) {
    throw ConfigError("sets", "uncertainty boxes apply to the gaussian family only");
  }

  if (root.contains("pairs")) {
    const auto& pairs = root["pairs"];
    detail::only_keys(pairs, "pairs", {"robust", "explicit"});
    if (pairs.contains("robust"))
      c.robust_pairs = detail::pairs_of(pairs["robust"], "pairs.robust", c.family, c.dimension, types);
    if (pairs.contains("explicit"))
      c.explicit_pairs = detail::pairs_of(pairs["explicit"], "pairs.explicit", c.family, c.dimension, types);
  }

  const auto& algs = require(root, "", "algorithms");
  if (!algs.is_array() || algs.empty()) throw ConfigError("algorithms", "expected a non-empty array");
  for (std::size_t n = 0; n < algs.size(); ++n) {
    const std::string p = at_index("algorithms", n);
    detail::only_keys(algs[n], p, {"id", "type", "pair_source", "window", "gamma", "h"});
    AlgorithmSpec a;
    a.id = detail::text(require(algs[n], p, "id"), at_key(p, "id"));
    if (a.id.empty()) throw ConfigError(at_key(p, "id"), "must not be empty");
    for (const auto& prior : c.algorithms)
      if (prior.id == a.id) throw ConfigError(at_key(p, "id"), "duplicate id '" + a.id + "'");
    const auto type = detail::text(require(algs[n], p, "type"), at_key(p, "type"));
    if (type == "mcusum") {
      a.kind = AlgorithmKind::mcusum;
      if (algs[n].contains("window")) throw ConfigError(at_key(p, "window"), "only glr takes a window");
      const auto src = detail::text(require(algs[n], p, "pair_source"), at_key(p, "pair_source"));
      if (src == "robust")
        a.pairs = PairSource::robust;
      else if (src == "oracle")
        a.pairs = PairSource::oracle;
      else if (src == "explicit")
        a.pairs = PairSource::explicit_pairs;
      else
        throw ConfigError(at_key(p, "pair_source"), "expected robust, oracle or explicit");
      if (a.pairs == PairSource::robust && !c.robust_pairs)
        throw ConfigError(at_key(p, "pair_source"), "pairs.robust is missing");
      if (a.pairs == PairSource::explicit_pairs && !c.explicit_pairs)
        throw ConfigError(at_key(p, "pair_source"), "pairs.explicit is missing");
    } else if (type == "glr") {
      a.kind = AlgorithmKind::glr;
      if (c.family != Family::gaussian) throw ConfigError(at_key(p, "type"), "glr needs the gaussian family");
      if (algs[n].contains("pair_source")) throw ConfigError(at_key(p, "pair_source"), "only mcusum takes pairs");
      a.window = detail::count(require(algs[n], p, "window"), at_key(p, "window"), 1);
    } else {
      throw ConfigError(at_key(p, "type"), "expected mcusum or glr");
    }
    const bool has_gamma = algs[n].contains("gamma"), has_h = algs[n].contains("h");
    if (has_gamma == has_h) throw ConfigError(p, "exactly one of gamma and h is required");
    if (has_gamma) {
      a.gamma = detail::number(algs[n]["gamma"], at_key(p, "gamma"));
      if (!(*a.gamma > 1.0)) throw ConfigError(at_key(p, "gamma"), "must exceed 1");
    } else {
      a.h = detail::number(algs[n]["h"], at_key(p, "h"));
      if (!(*a.h > 0.0)) throw ConfigError(at_key(p, "h"), "must be positive");
    }
    c.algorithms.push_back(std::move(a));
  }

  if (root.contains("runs")) c.runs = detail::count(root["runs"], "runs", 2);
  if (root.contains("master_seed")) c.master_seed = detail::count(root["master_seed"], "master_seed", 0);
  if (root.contains("output")) c.output = detail::text(root["output"], "output");

  if (root.contains("calibration")) {
    const auto& cal = root["calibration"];
    detail::only_keys(cal, "calibration", {"tolerance", "cap"});
    if (cal.contains("tolerance")) {
      c.tolerance = detail::number(cal["tolerance"], "calibration.tolerance");
      if (!(c.tolerance > 0.0)) throw ConfigError("calibration.tolerance", "must be positive");
    }
    if (cal.contains("cap") && !cal["cap"].is_null()) c.cap = detail::count(cal["cap"], "calibration.cap", 1);
  }

  if (root.contains("sweep")) {
    if (c.family != Family::gaussian) throw ConfigError("sweep", "sweeps apply to the gaussian family only");
    const auto& sw = root["sweep"];
    if (!sw.is_array()) throw ConfigError("sweep", "expected an array");
    for (std::size_t n = 0; n < sw.size(); ++n) {
      const std::string p = at_index("sweep", n);
      detail::only_keys(sw[n], p, {"type", "mean"});
      GridPoint g;
      g.type = static_cast<int>(detail::count(require(sw[n], p, "type"), at_key(p, "type"), 1));
      if (g.type > types) throw ConfigError(at_key(p, "type"), "change type out of range");
      g.mean = detail::vector_of(require(sw[n], p, "mean"), at_key(p, "mean"), c.dimension);
      c.sweep.push_back(std::move(g));
    }
  } else if (c.family == Family::gaussian && types == 2) {
    c.sweep = default_sweep(c.dimension);
  }
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(root);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

inline nlohmann::json serialize_config(const ExperimentConfig& c) {
  using nlohmann::json;
  json root;
  root["family"] = c.family == Family::gaussian ? "gaussian" : "categorical";
  root[c.family == Family::gaussian ? "dimension" : "categories"] = c.dimension;
  if (c.family == Family::gaussian) {
    json sets = json::array();
    for (const auto& b : c.sets)
      sets.push_back({{"lower", detail::bounds_json(b.lower())}, {"upper", detail::bounds_json(b.upper())}});
    root["sets"] = sets;
  }
  json lfds = json::array();
  for (const auto& d : c.lfds) lfds.push_back(detail::distribution_json(d));
  root["lfds"] = lfds;
  if (c.robust_pairs || c.explicit_pairs) {
    json pairs = json::object();
    if (c.robust_pairs) pairs["robust"] = detail::pairs_json(*c.robust_pairs);
    if (c.explicit_pairs) pairs["explicit"] = detail::pairs_json(*c.explicit_pairs);
    root["pairs"] = pairs;
  }
  json algs = json::array();
  for (const auto& a : c.algorithms) {
    json j{{"id", a.id}};
    if (a.kind == AlgorithmKind::mcusum) {
      j["type"] = "mcusum";
      j["pair_source"] = a.pairs == PairSource::robust   ? "robust"
                         : a.pairs == PairSource::oracle ? "oracle"
                                                         : "explicit";
    } else {
      j["type"] = "glr";
      j["window"] = a.window;
    }
    if (a.gamma) j["gamma"] = *a.gamma;
    if (a.h) j["h"] = *a.h;
    algs.push_back(j);
  }
  root["algorithms"] = algs;
  root["runs"] = c.runs;
  root["master_seed"] = c.master_seed;
  root["output"] = c.output;
  root["calibration"] = {{"tolerance", c.tolerance}, {"cap", c.cap ? json(*c.cap) : json(nullptr)}};
  if (c.family == Family::gaussian) {
    json sweep = json::array();
    for (const auto& g : c.sweep) sweep.push_back({{"type", g.type}, {"mean", g.mean}});
    root["sweep"] = sweep;
  }
  return root;
}

}  // namespace qcd
