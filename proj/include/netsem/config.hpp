#pragma once

// On-disk JSON run configuration. Every object is checked against a fixed
// key set; unknown keys and wrong types are schema errors.
//
//   {
//     "seed": 20240101,
//     "dgp":         { "communities_T": 10, "lambda_T": 0.3, "rho": 0.8, ... },
//     "montecarlo":  { "regimes": ["weak"], "rho_grid": [0.4, 0.6, 0.8], "replications": 500, ... },
//     "estimate":    { "modes": ["2sls", "2sls-ec"], "iv_depth": 3, ... },
//     "equilibrium": { "network": "dir", "abilities": "file.csv", "lambda_T": 0.1, ... }
//   }

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "netsem/dgp.hpp"
#include "netsem/estimators.hpp"
#include "netsem/io.hpp"
#include "netsem/montecarlo.hpp"

namespace netsem {

struct EquilibriumConfig {
  std::filesystem::path network;
  std::filesystem::path abilities;
  GameParameters params;
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  DgpConfig dgp;
  McConfig mc;
  std::vector<EstimatorMode> estimate_modes{EstimatorMode::tsls, EstimatorMode::tsls_ec};
  EstimateOptions estimate;
  /// Set when the estimate section names a normalization explicitly.
  std::optional<Normalization> estimate_normalization;
  std::optional<EquilibriumConfig> equilibrium;
  std::optional<std::filesystem::path> data;
  std::optional<std::filesystem::path> out;
  /// The parsed document, echoed into outputs.
  nlohmann::json source;

  std::uint64_t require_seed() const {
    if (!seed) throw SchemaError("config: 'seed' is required");
    return *seed;
  }
};

namespace detail {

using nlohmann::json;

inline void check_keys(const json& obj, std::string_view where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw SchemaError(std::string(where) + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!ok.count(it.key())) throw SchemaError(std::string(where) + ": unknown key '" + it.key() + "'");
}

template <class T>
T get_as(const json& obj, const char* key, std::string_view where) {
  const json& v = obj.at(key);
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw SchemaError("");
    } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_integer()) throw SchemaError("");
      if constexpr (std::is_unsigned_v<T>)
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) throw SchemaError("");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw SchemaError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw SchemaError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw SchemaError(std::string(where) + "." + key + ": wrong type (" + v.type_name() + ")");
  }
}

template <class T>
void read_opt(const json& obj, const char* key, std::string_view where, T& out) {
  if (obj.contains(key)) out = get_as<T>(obj, key, where);
}

inline void read_pair(const json& obj, const char* key, std::string_view where, std::array<double, 2>& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw SchemaError(std::string(where) + "." + key + ": expected an array of two numbers");
  out = {v[0].get<double>(), v[1].get<double>()};
}

inline std::vector<double> number_list(const json& v, std::string_view what) {
  if (!v.is_array()) throw SchemaError(std::string(what) + ": expected an array");
  std::vector<double> out;
  for (const json& e : v) {
    if (!e.is_number()) throw SchemaError(std::string(what) + ": expected numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

inline std::vector<std::string> string_list(const json& v, std::string_view what) {
  if (!v.is_array()) throw SchemaError(std::string(what) + ": expected an array");
  std::vector<std::string> out;
  for (const json& e : v) {
    if (!e.is_string()) throw SchemaError(std::string(what) + ": expected strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

template <class F>
auto as_schema(std::string_view where, F&& f) {
  try {
    return f();
  } catch (const DomainError& e) {
    throw SchemaError(std::string(where) + ": " + e.what());
  }
}

inline void read_dgp(const json& j, DgpConfig& d) {
  constexpr std::string_view w = "dgp";
  check_keys(j, w,
             {"communities_T", "communities_S", "community_size_T", "community_size_S", "lambda_T", "lambda_S",
              "lambda_TS", "lambda_ST", "gamma_T", "gamma_S", "tau_T", "tau_S", "rho", "kappa_levels",
              "normalization", "covariate_sd", "uniform_low", "uniform_high", "similarity_covariate",
              "cross_link_probability"});
  read_opt(j, "communities_T", w, d.n_communities_T);
  read_opt(j, "communities_S", w, d.n_communities_S);
  read_opt(j, "community_size_T", w, d.community_size_T);
  read_opt(j, "community_size_S", w, d.community_size_S);
  read_opt(j, "lambda_T", w, d.lambda_T);
  read_opt(j, "lambda_S", w, d.lambda_S);
  read_opt(j, "lambda_TS", w, d.lambda_TS);
  read_opt(j, "lambda_ST", w, d.lambda_ST);
  read_pair(j, "gamma_T", w, d.gamma_T);
  read_pair(j, "gamma_S", w, d.gamma_S);
  read_pair(j, "tau_T", w, d.tau_T);
  read_pair(j, "tau_S", w, d.tau_S);
  read_opt(j, "rho", w, d.rho);
  if (j.contains("kappa_levels")) d.kappa_levels = number_list(j["kappa_levels"], "dgp.kappa_levels");
  if (j.contains("normalization"))
    d.normalization = as_schema("dgp.normalization",
                                [&] { return parse_normalization(get_as<std::string>(j, "normalization", w)); });
  read_opt(j, "covariate_sd", w, d.covariate_sd);
  read_opt(j, "uniform_low", w, d.uniform_low);
  read_opt(j, "uniform_high", w, d.uniform_high);
  if (j.contains("similarity_covariate")) {
    const Index c = get_as<Index>(j, "similarity_covariate", w);
    if (c < 1 || c > 2) throw SchemaError("dgp.similarity_covariate: must be 1 or 2");
    d.similarity_column = c - 1;
  }
  read_opt(j, "cross_link_probability", w, d.cross_link_probability);
}

inline std::vector<EstimatorMode> read_modes(const json& v, std::string_view what) {
  std::vector<EstimatorMode> out;
  for (const std::string& s : string_list(v, what))
    out.push_back(as_schema(what, [&] { return parse_mode(s); }));
  if (out.empty()) throw SchemaError(std::string(what) + ": at least one mode required");
  return out;
}

}  // namespace detail

/// Byte offset -> "line L, column C" (1-based).
inline std::string line_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t k = 0; k < byte && k < text.size(); ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

/// Parses and validates a config document. Relative paths resolve against
/// `base_dir`.
inline RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {}) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
    std::string msg = e.what();
    if (auto p = msg.find("parse error"); p != std::string::npos) msg = msg.substr(p);
    throw SchemaError("malformed JSON at " + line_column(text, at) + ": " + msg);
  }
  detail::check_keys(j, "config", {"seed", "dgp", "montecarlo", "estimate", "equilibrium", "data", "out"});
  RunConfig rc;
  rc.source = j;
  if (j.contains("seed")) rc.seed = detail::get_as<std::uint64_t>(j, "seed", "config");
  if (j.contains("dgp")) detail::read_dgp(j["dgp"], rc.dgp);
  if (rc.seed) rc.dgp.seed = *rc.seed;
  detail::as_schema("dgp", [&] {
    rc.dgp.validate();
    return 0;
  });

  if (j.contains("estimate")) {
    const json& e = j["estimate"];
    constexpr std::string_view w = "estimate";
    detail::check_keys(e, w, {"modes", "iv_depth", "instrument_subset", "per_community_logit", "normalization"});
    if (e.contains("modes")) rc.estimate_modes = detail::read_modes(e["modes"], "estimate.modes");
    detail::read_opt(e, "iv_depth", w, rc.estimate.depth);
    if (rc.estimate.depth < 1) throw SchemaError("estimate.iv_depth: must be >= 1");
    if (e.contains("instrument_subset"))
      rc.estimate.subset = detail::string_list(e["instrument_subset"], "estimate.instrument_subset");
    detail::read_opt(e, "per_community_logit", w, rc.estimate.per_community_logit);
    if (e.contains("normalization"))
      rc.estimate_normalization = detail::as_schema(
          "estimate.normalization", [&] { return parse_normalization(detail::get_as<std::string>(e, "normalization", w)); });
  }
  rc.estimate.normalization = rc.estimate_normalization.value_or(rc.dgp.normalization);
  rc.estimate.similarity_column = rc.dgp.similarity_column;

  rc.mc.base = rc.dgp;
  rc.mc.estimate = rc.estimate;
  rc.mc.modes = rc.estimate_modes;
  if (rc.seed) rc.mc.master_seed = *rc.seed;
  if (j.contains("montecarlo")) {
    const json& m = j["montecarlo"];
    constexpr std::string_view w = "montecarlo";
    detail::check_keys(m, w, {"regimes", "rho_grid", "replications", "modes", "jobs"});
    if (m.contains("regimes")) {
      rc.mc.regimes.clear();
      for (const std::string& s : detail::string_list(m["regimes"], "montecarlo.regimes"))
        rc.mc.regimes.push_back(detail::as_schema("montecarlo.regimes", [&] { return parse_regime(s); }));
    }
    if (m.contains("rho_grid")) rc.mc.rho_grid = detail::number_list(m["rho_grid"], "montecarlo.rho_grid");
    detail::read_opt(m, "replications", w, rc.mc.replications);
    if (m.contains("modes")) rc.mc.modes = detail::read_modes(m["modes"], "montecarlo.modes");
    detail::read_opt(m, "jobs", w, rc.mc.jobs);
    detail::as_schema("montecarlo", [&] {
      rc.mc.validate();
      return 0;
    });
  }

  if (j.contains("equilibrium")) {
    const json& q = j["equilibrium"];
    constexpr std::string_view w = "equilibrium";
    detail::check_keys(q, w, {"network", "abilities", "lambda_T", "lambda_S", "beta"});
    EquilibriumConfig ec;
    if (!q.contains("network") || !q.contains("abilities"))
      throw SchemaError("equilibrium: 'network' and 'abilities' are required");
    ec.network = base_dir / detail::get_as<std::string>(q, "network", w);
    ec.abilities = base_dir / detail::get_as<std::string>(q, "abilities", w);
    detail::read_opt(q, "lambda_T", w, ec.params.lambda_T);
    detail::read_opt(q, "lambda_S", w, ec.params.lambda_S);
    detail::read_opt(q, "beta", w, ec.params.beta);
    detail::as_schema("equilibrium", [&] {
      ec.params.validate(ParameterMode::game);
      return 0;
    });
    rc.equilibrium = std::move(ec);
  }
  if (j.contains("data")) rc.data = base_dir / detail::get_as<std::string>(j, "data", "config");
  if (j.contains("out")) rc.out = base_dir / detail::get_as<std::string>(j, "out", "config");
  return rc;
}

inline RunConfig load_run_config(const std::filesystem::path& file) {
  return parse_run_config(io::read_text(file), file.parent_path());
}

}  // namespace netsem
