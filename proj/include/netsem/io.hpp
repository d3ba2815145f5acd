#pragma once

// CSV and JSON artifacts: datasets, estimates, Monte Carlo reports.
//
// Doubles are written with %.17g so every file round-trips exactly.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "netsem/dgp.hpp"
#include "netsem/estimators.hpp"
#include "netsem/game.hpp"
#include "netsem/montecarlo.hpp"

namespace netsem::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// Low-level CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name, const fs::path& file) const {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return k;
    throw SchemaError(file.string() + ": missing column '" + std::string(name) + "'");
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline CsvTable read_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw SchemaError("cannot open " + file.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(file.string() + ": empty file");
  t.header = split_csv_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.header.size())
      throw SchemaError(file.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(t.header.size()) + " fields, found " + std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline double parse_double(const std::string& s, const fs::path& file) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw SchemaError(file.string() + ": not a number: '" + s + "'");
  return v;
}

inline Index parse_index(const std::string& s, const fs::path& file) {
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size() || v < 0)
    throw SchemaError(file.string() + ": not a non-negative integer: '" + s + "'");
  return static_cast<Index>(v);
}

inline void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw SchemaError("cannot write " + file.string());
  out << text;
}

inline std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw SchemaError("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Networks and node tables

/// Nonzero entries as `community,src,dst,weight`; community is the source
/// node's community in `rows_part`.
inline std::string edge_list_csv(const Matrix& g, const CommunityPartition& rows_part) {
  std::string s = "community,src,dst,weight\n";
  for (Index i = 0; i < g.rows(); ++i)
    for (Index j = 0; j < g.cols(); ++j)
      if (g(i, j) != 0.0)
        s += std::to_string(rows_part.community_of(i)) + "," + std::to_string(i) + "," +
             std::to_string(j) + "," + fmt(g(i, j)) + "\n";
  return s;
}

inline Matrix read_edge_list(const fs::path& file, Index rows, Index cols) {
  const CsvTable t = read_csv(file);
  const std::size_t cs = t.column("src", file), cd = t.column("dst", file), cw = t.column("weight", file);
  t.column("community", file);
  Matrix g = Matrix::Zero(rows, cols);
  for (const auto& r : t.rows) {
    const Index i = parse_index(r[cs], file), j = parse_index(r[cd], file);
    if (i >= rows || j >= cols)
      throw SchemaError(file.string() + ": edge (" + r[cs] + "," + r[cd] + ") outside " +
                        std::to_string(rows) + "x" + std::to_string(cols));
    g(i, j) = parse_double(r[cw], file);
  }
  return g;
}

/// `node,community,<columns...>` with one row per node.
inline std::string node_table_csv(const CommunityPartition& part, const std::vector<std::string>& names,
                                  const Matrix& values) {
  std::string s = "node,community";
  for (const auto& n : names) s += "," + n;
  s += "\n";
  for (Index i = 0; i < values.rows(); ++i) {
    s += std::to_string(i) + "," + std::to_string(part.community_of(i));
    for (Index c = 0; c < values.cols(); ++c) s += "," + fmt(values(i, c));
    s += "\n";
  }
  return s;
}

struct NodeTable {
  CommunityPartition partition;
  Matrix values;
};

/// Reads a node table; nodes must be listed 0..n-1 with nondecreasing
/// community ids 0..C-1, which defines the partition.
inline NodeTable read_node_table(const fs::path& file, const std::vector<std::string>& names) {
  const CsvTable t = read_csv(file);
  const std::size_t cn = t.column("node", file), cc = t.column("community", file);
  std::vector<std::size_t> cols;
  for (const auto& n : names) cols.push_back(t.column(n, file));
  if (t.rows.empty()) throw SchemaError(file.string() + ": no rows");
  std::vector<Index> sizes;
  Matrix v(static_cast<Index>(t.rows.size()), static_cast<Index>(names.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (parse_index(t.rows[r][cn], file) != static_cast<Index>(r))
      throw SchemaError(file.string() + ": nodes must be listed in order 0..n-1");
    const Index c = parse_index(t.rows[r][cc], file);
    if (c == static_cast<Index>(sizes.size())) sizes.push_back(0);
    if (c + 1 != static_cast<Index>(sizes.size()))
      throw SchemaError(file.string() + ": community ids must be contiguous and nondecreasing");
    ++sizes.back();
    for (std::size_t k = 0; k < cols.size(); ++k)
      v(static_cast<Index>(r), static_cast<Index>(k)) = parse_double(t.rows[r][cols[k]], file);
  }
  return {CommunityPartition(sizes), v};
}

// ---------------------------------------------------------------------------
// Dataset directories

inline json truth_json(const TrueParameters& t) {
  return json{{"lambda_T", t.lambdas.lambda_T},   {"lambda_S", t.lambdas.lambda_S},
              {"lambda_TS", t.lambdas.lambda_TS}, {"lambda_ST", t.lambdas.lambda_ST},
              {"gamma_T", {t.gamma_T[0], t.gamma_T[1]}}, {"gamma_S", {t.gamma_S[0], t.gamma_S[1]}}};
}

/// Network files, covariates, outcomes, latent draws and truth.json.
/// `config_echo` is written verbatim as config.json.
inline void write_dataset(const fs::path& dir, const SimulatedDataset& d, const json& config_echo) {
  fs::create_directories(dir);
  const CommunityPartition& pT = d.net.partition_T();
  const CommunityPartition& pS = d.net.partition_S();
  write_text(dir / "g_T.csv", edge_list_csv(d.net.g_T(), pT));
  write_text(dir / "g_S.csv", edge_list_csv(d.net.g_S(), pS));
  write_text(dir / "g_TS.csv", edge_list_csv(d.net.g_TS(), pT));
  write_text(dir / "g_ST.csv", edge_list_csv(d.net.g_ST(), pS));
  write_text(dir / "x_T.csv", node_table_csv(pT, {"x1", "x2"}, d.features_T));
  write_text(dir / "x_S.csv", node_table_csv(pS, {"x1", "x2"}, d.features_S));
  write_text(dir / "y_T.csv", node_table_csv(pT, {"y"}, d.y_T));
  write_text(dir / "y_S.csv", node_table_csv(pS, {"y"}, d.y_S));
  auto latent = [](const Vector& mu, const Vector& nu, const Vector& u, const Vector& k, const Vector& e) {
    Matrix m(nu.size(), 5);
    m << mu, nu, u, k, e;
    return m;
  };
  write_text(dir / "latent_T.csv",
             node_table_csv(pT, {"mu", "nu", "u", "kappa", "eps"},
                            latent(broadcast(d.mu_T, pT), d.nu_T, d.u_T, d.kappa_T, d.eps_T)));
  write_text(dir / "latent_S.csv",
             node_table_csv(pS, {"mu", "nu", "u", "kappa", "eps"},
                            latent(broadcast(d.mu_S, pS), d.nu_S, d.u_S, d.kappa_S, d.eps_S)));
  json truth = truth_json(d.truth);
  truth["seed"] = d.config.seed;
  truth["structural_residual"] = d.structural_residual;
  truth["spectral_margin"] = d.spectral_margin;
  write_text(dir / "truth.json", truth.dump(2) + "\n");
  write_text(dir / "config.json", config_echo.dump(2) + "\n");
}

inline void require_file(const fs::path& f) {
  if (!fs::exists(f)) throw SchemaError("missing dataset file " + f.string());
}

/// Reads what estimation needs: networks, covariates, outcomes.
inline EstimationData read_dataset(const fs::path& dir) {
  for (const char* f : {"x_T.csv", "x_S.csv", "y_T.csv", "y_S.csv", "g_T.csv", "g_S.csv", "g_TS.csv", "g_ST.csv"})
    require_file(dir / f);
  NodeTable xT = read_node_table(dir / "x_T.csv", {"x1", "x2"});
  NodeTable xS = read_node_table(dir / "x_S.csv", {"x1", "x2"});
  NodeTable yT = read_node_table(dir / "y_T.csv", {"y"});
  NodeTable yS = read_node_table(dir / "y_S.csv", {"y"});
  if (!(yT.partition == xT.partition) || !(yS.partition == xS.partition))
    throw SchemaError(dir.string() + ": outcome and covariate tables disagree on communities");
  const Index nT = xT.partition.total(), nS = xS.partition.total();
  Matrix gT = read_edge_list(dir / "g_T.csv", nT, nT);
  Matrix gS = read_edge_list(dir / "g_S.csv", nS, nS);
  Matrix gTS = read_edge_list(dir / "g_TS.csv", nT, nS);
  Matrix gST = read_edge_list(dir / "g_ST.csv", nS, nT);
  const bool binary = ((gT.array() == 0.0) || (gT.array() == 1.0)).all() &&
                      ((gS.array() == 0.0) || (gS.array() == 1.0)).all() &&
                      ((gTS.array() == 0.0) || (gTS.array() == 1.0)).all() &&
                      ((gST.array() == 0.0) || (gST.array() == 1.0)).all();
  LayeredNetwork net(std::move(gT), std::move(gS), std::move(gTS), std::move(gST), xT.partition,
                     xS.partition, binary ? NetworkKind::binary : NetworkKind::probabilistic);
  return EstimationData{std::move(net), std::move(xT.values), std::move(xS.values), yT.values.col(0),
                        yS.values.col(0)};
}

// ---------------------------------------------------------------------------
// Dyads and logit fits

inline std::string dyads_csv(const DyadDataset& d) {
  std::string s = "community,i,j,label";
  for (Index f = 0; f < d.features.cols(); ++f) s += ",f" + std::to_string(f + 1);
  s += "\n";
  for (Index r = 0; r < d.rows(); ++r) {
    const auto k = static_cast<std::size_t>(r);
    s += std::to_string(d.community[k]) + "," + std::to_string(d.i[k]) + "," + std::to_string(d.j[k]) + "," +
         fmt(d.label(r));
    for (Index f = 0; f < d.features.cols(); ++f) s += "," + fmt(d.features(r, f));
    s += "\n";
  }
  return s;
}

inline DyadDataset read_dyads(const fs::path& file) {
  const CsvTable t = read_csv(file);
  const std::size_t cc = t.column("community", file), ci = t.column("i", file), cj = t.column("j", file),
                    cl = t.column("label", file);
  std::vector<std::size_t> feats;
  for (Index f = 1;; ++f) {
    const std::string name = "f" + std::to_string(f);
    if (std::find(t.header.begin(), t.header.end(), name) == t.header.end()) break;
    feats.push_back(t.column(name, file));
  }
  DyadDataset d;
  const auto n = static_cast<Index>(t.rows.size());
  d.features.resize(n, static_cast<Index>(feats.size()));
  d.label.resize(n);
  for (Index r = 0; r < n; ++r) {
    const auto& row = t.rows[static_cast<std::size_t>(r)];
    d.community.push_back(parse_index(row[cc], file));
    d.i.push_back(parse_index(row[ci], file));
    d.j.push_back(parse_index(row[cj], file));
    if (d.i.back() >= d.j.back()) throw SchemaError(file.string() + ": dyads need i < j");
    d.label(r) = parse_double(row[cl], file);
    if (d.label(r) != 0.0 && d.label(r) != 1.0) throw SchemaError(file.string() + ": labels must be 0 or 1");
    for (std::size_t f = 0; f < feats.size(); ++f) d.features(r, static_cast<Index>(f)) = parse_double(row[feats[f]], file);
  }
  return d;
}

inline json logit_json(const LogitFit& f) {
  json vcov = json::array();
  for (Index r = 0; r < f.covariance.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < f.covariance.cols(); ++c) row.push_back(f.covariance(r, c));
    vcov.push_back(row);
  }
  return json{{"coefficients", std::vector<double>(f.coefficients.data(), f.coefficients.data() + f.coefficients.size())},
              {"vcov", vcov},
              {"loglik", f.loglik},
              {"loglik_null", f.loglik_null},
              {"pseudo_r2", f.pseudo_r2},
              {"aic", f.aic},
              {"converged", f.converged},
              {"iters", f.iterations}};
}

// ---------------------------------------------------------------------------
// Equilibrium inputs and outputs

struct GameInput {
  LayeredNetwork net;
  AgentAbilities alpha;
};

/// Abilities table `node,layer,community,alpha`, nodes numbered per layer.
/// Network files g_T.csv, g_S.csv, g_TS.csv, g_ST.csv live in `dir`.
inline GameInput read_game_input(const fs::path& dir, const fs::path& abilities) {
  const CsvTable t = read_csv(abilities);
  const std::size_t cn = t.column("node", abilities), cl = t.column("layer", abilities),
                    cc = t.column("community", abilities), ca = t.column("alpha", abilities);
  std::vector<Index> sizes[2];
  std::vector<double> alpha[2];
  for (const auto& r : t.rows) {
    int l;
    if (r[cl] == "T") l = 0;
    else if (r[cl] == "S") l = 1;
    else throw SchemaError(abilities.string() + ": layer must be T or S, found '" + r[cl] + "'");
    if (parse_index(r[cn], abilities) != static_cast<Index>(alpha[l].size()))
      throw SchemaError(abilities.string() + ": nodes of each layer must be listed in order 0..n-1");
    const Index c = parse_index(r[cc], abilities);
    if (c == static_cast<Index>(sizes[l].size())) sizes[l].push_back(0);
    if (c + 1 != static_cast<Index>(sizes[l].size()))
      throw SchemaError(abilities.string() + ": community ids must be contiguous and nondecreasing");
    ++sizes[l].back();
    alpha[l].push_back(parse_double(r[ca], abilities));
  }
  if (alpha[0].empty() || alpha[1].empty())
    throw SchemaError(abilities.string() + ": both layers need at least one node");
  CommunityPartition pT(sizes[0]), pS(sizes[1]);
  const Index nT = pT.total(), nS = pS.total();
  for (const char* f : {"g_T.csv", "g_S.csv", "g_TS.csv", "g_ST.csv"}) require_file(dir / f);
  LayeredNetwork net(read_edge_list(dir / "g_T.csv", nT, nT), read_edge_list(dir / "g_S.csv", nS, nS),
                     read_edge_list(dir / "g_TS.csv", nT, nS), read_edge_list(dir / "g_ST.csv", nS, nT),
                     pT, pS, NetworkKind::probabilistic);
  AgentAbilities a{Eigen::Map<Vector>(alpha[0].data(), nT), Eigen::Map<Vector>(alpha[1].data(), nS)};
  a.validate(net);
  return {std::move(net), std::move(a)};
}

inline std::string effort_csv(const EquilibriumResult& r) {
  std::string s = "node,layer,effort\n";
  for (Index i = 0; i < r.y_T.size(); ++i) s += std::to_string(i) + ",T," + fmt(r.y_T(i)) + "\n";
  for (Index i = 0; i < r.y_S.size(); ++i) s += std::to_string(i) + ",S," + fmt(r.y_S(i)) + "\n";
  return s;
}

inline json stability_json(const EquilibriumResult& r) {
  return json{{"stable", r.stability.stable},
              {"margin", r.stability.margin},
              {"radius_T", r.stability.radius_T},
              {"radius_S", r.stability.radius_S},
              {"residual_norm", r.residual_norm},
              {"warnings", r.warnings}};
}

// ---------------------------------------------------------------------------
// Estimates

inline std::string estimates_csv_header() {
  return "mode,equation,param,estimate,robust_se,oir_stat,oir_df,oir_p,cd_F,n,K\n";
}

inline std::string estimates_csv_rows(const EstimateResult& r) {
  std::string s;
  for (std::size_t p = 0; p < r.parameter_names.size(); ++p)
    s += std::string(mode_name(r.mode)) + "," + std::string(layer_name(r.equation)) + "," +
         r.parameter_names[p] + "," + fmt(r.delta(static_cast<Index>(p))) + "," +
         fmt(r.robust_se(static_cast<Index>(p))) + "," + fmt(r.oir_stat) + "," + std::to_string(r.oir_df) +
         "," + fmt(r.oir_pvalue) + "," + fmt(r.cragg_donald_F) + "," + std::to_string(r.n) + "," +
         std::to_string(r.instrument_count) + "\n";
  return s;
}

inline std::string summary_csv_header() { return "mode,equation,oir_stat,oir_df,oir_p,cd_F,cd_capped,n,K,dropped\n"; }

inline std::string summary_csv_row(const EstimateResult& r) {
  return std::string(mode_name(r.mode)) + "," + std::string(layer_name(r.equation)) + "," + fmt(r.oir_stat) +
         "," + std::to_string(r.oir_df) + "," + fmt(r.oir_pvalue) + "," + fmt(r.cragg_donald_F) + "," +
         (r.cragg_donald_capped ? "1" : "0") + "," + std::to_string(r.n) + "," +
         std::to_string(r.instrument_count) + "," + std::to_string(r.dropped_instruments.size()) + "\n";
}

inline json estimate_json(const EstimateResult& r) {
  json params = json::array();
  for (std::size_t p = 0; p < r.parameter_names.size(); ++p)
    params.push_back({{"param", r.parameter_names[p]},
                      {"estimate", r.delta(static_cast<Index>(p))},
                      {"robust_se", r.robust_se(static_cast<Index>(p))}});
  json j{{"mode", mode_name(r.mode)},
         {"equation", layer_name(r.equation)},
         {"parameters", params},
         {"oir", {{"stat", r.oir_stat}, {"df", r.oir_df}, {"p", r.oir_pvalue}}},
         {"cragg_donald", {{"F", r.cragg_donald_F}, {"capped", r.cragg_donald_capped}}},
         {"n", r.n},
         {"instrument_count", r.instrument_count},
         {"instruments", r.instruments},
         {"dropped_instruments", r.dropped_instruments}};
  if (std::isnan(r.oir_stat)) j["oir"] = nullptr;
  if (r.logit) {
    j["logit"] = logit_json(*r.logit);
  }
  return j;
}

// ---------------------------------------------------------------------------
// Monte Carlo reports

inline std::string report_csv(const McReport& r) {
  std::string s = "regime,rho,mode,param,bias,rmse,ese,n_ok,n_fail\n";
  for (const McCell& c : r.cells)
    s += std::string(regime_name(c.regime)) + "," + fmt(c.rho) + "," + std::string(mode_name(c.mode)) + "," +
         c.param + "," + fmt(c.bias) + "," + fmt(c.rmse) + "," + fmt(c.ese) + "," + std::to_string(c.n_ok) +
         "," + std::to_string(c.n_fail) + "\n";
  return s;
}

/// Deterministic content only; wall time goes to a separate run file.
inline json report_json(const McReport& r) {
  json cells = json::array();
  for (const McCell& c : r.cells)
    cells.push_back({{"regime", regime_name(c.regime)},
                     {"rho", c.rho},
                     {"mode", mode_name(c.mode)},
                     {"param", c.param},
                     {"bias", c.bias},
                     {"rmse", c.rmse},
                     {"ese", c.ese},
                     {"n_ok", c.n_ok},
                     {"n_fail", c.n_fail}});
  return json{{"metadata",
               {{"master_seed", r.master_seed},
                {"config_hash", hex64(r.config_hash)},
                {"replications", r.replications}}},
              {"cells", cells}};
}

inline std::vector<ReferenceCell> read_reference(const fs::path& file) {
  const CsvTable t = read_csv(file);
  const std::size_t cr = t.column("regime", file), crho = t.column("rho", file), cm = t.column("mode", file),
                    cp = t.column("param", file), cb = t.column("bias", file), crm = t.column("rmse", file),
                    ce = t.column("ese", file);
  std::vector<ReferenceCell> out;
  for (const auto& r : t.rows) {
    try {
      parse_mode(r[cm]);
      parse_regime(r[cr]);
    } catch (const DomainError& e) {
      throw SchemaError(file.string() + ": " + e.what());
    }
    out.push_back({r[cr], parse_double(r[crho], file), r[cm], r[cp], parse_double(r[cb], file),
                   parse_double(r[crm], file), parse_double(r[ce], file)});
  }
  return out;
}

inline std::string deviation_csv(const std::vector<Deviation>& devs) {
  std::string s = "regime,rho,mode,param,bias,ref_bias,d_bias,d_rmse,d_ese,pass\n";
  for (const Deviation& d : devs)
    s += std::string(regime_name(d.ours.regime)) + "," + fmt(d.ours.rho) + "," +
         std::string(mode_name(d.ours.mode)) + "," + d.ours.param + "," + fmt(d.ours.bias) + "," +
         fmt(d.reference.bias) + "," + fmt(d.d_bias) + "," + fmt(d.d_rmse) + "," + fmt(d.d_ese) + "," +
         (d.pass ? "pass" : "fail") + "\n";
  return s;
}

/// FNV-1a over every regular file under `dir` (sorted relative paths).
inline std::uint64_t directory_hash(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += f.generic_string() + '\0' + read_text(dir / f) + '\0';
  return fnv1a64(all);
}

}  // namespace netsem::io
