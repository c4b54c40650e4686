#pragma once
// Artifact I/O.
//
// Text tables are TSV with one leading meta line
//   # epr-table v1 kind=<kind> config_hash=<hex> seed=<u64> [k=v ...]
// followed by a column-header line; numeric fields use 17 significant digits
// so a write->read round trip is bit exact.  Replicate and chain archives are
// raw little-endian float64 column-major blobs described by a JSON manifest.
// Wall-clock measurements always live in their own timing files so that every
// other artifact is byte-reproducible.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "epr/assembly.hpp"
#include "epr/data.hpp"
#include "epr/engine.hpp"
#include "epr/errors.hpp"
#include "epr/mcmc.hpp"
#include "epr/sim.hpp"

namespace epr::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(where + ": cannot parse number '" + s + "'");
  }
}

// FNV-1a hash of the canonical (sorted-key) config dump.
inline std::string config_hash(const json& cfg) {
  const std::string dump = cfg.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct TableMeta {
  std::string kind;
  std::string config_hash = "0000000000000000";
  std::uint64_t seed = 0;
  std::map<std::string, std::string> extra;
};

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline void write_meta(std::ofstream& f, const TableMeta& m) {
  f << "# epr-table v1 kind=" << m.kind << " config_hash=" << m.config_hash << " seed=" << m.seed;
  for (const auto& [k, v] : m.extra) f << ' ' << k << '=' << v;
  f << '\n';
}

struct Table {
  TableMeta meta;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name, const std::string& file) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw DataError(file + ": missing column '" + name + "'");
  }
};

inline Table read_table(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path.string());
  Table t;
  std::string line;
  if (!std::getline(f, line) || line.rfind("# epr-table v1 ", 0) != 0)
    throw DataError(path.string() + ": missing 'epr-table v1' meta line");
  for (const std::string& tok : split(line.substr(15), ' ')) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    const std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
    if (k == "kind")
      t.meta.kind = v;
    else if (k == "config_hash")
      t.meta.config_hash = v;
    else if (k == "seed")
      t.meta.seed = std::stoull(v);
    else
      t.meta.extra[k] = v;
  }
  if (!std::getline(f, line)) throw DataError(path.string() + ": missing header line");
  t.header = split(line, '\t');
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto cells = split(line, '\t');
    if (cells.size() != t.header.size())
      throw DataError(path.string() + ": row has " + std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline void write_bin(const fs::path& path, const Mat& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
}

inline Mat read_bin(const fs::path& path, Eigen::Index rows, Eigen::Index cols) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  Mat m(rows, cols);
  f.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (f.gcount() != static_cast<std::streamsize>(sizeof(double) * m.size()))
    throw DataError(path.string() + ": truncated binary block");
  return m;
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f << j.dump(2) << '\n';
}

inline json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// dataset + truth tables

inline void write_dataset(const fs::path& dir, const MultiTypeDataset& d, TableMeta meta) {
  fs::create_directories(dir);
  {
    meta.kind = "grid";
    meta.extra["cell_area"] = fmt17(d.grid.cell_area);
    meta.extra["n_cells"] = std::to_string(d.grid.size());
    std::ofstream f(dir / "grid.tsv");
    detail::write_meta(f, meta);
    f << "cell_id\tx\ty\n";
    for (int i = 0; i < d.grid.size(); ++i)
      f << i << '\t' << fmt17(d.grid.centers(i, 0)) << '\t' << fmt17(d.grid.centers(i, 1)) << '\n';
    meta.extra.clear();
  }
  {
    meta.kind = "points";
    meta.extra["n1"] = std::to_string(d.n1());
    meta.extra["n1_star"] = std::to_string(d.n1s());
    meta.extra["p1"] = std::to_string(d.p1());
    meta.extra["p3"] = std::to_string(d.p3());
    std::ofstream f(dir / "points.tsv");
    detail::write_meta(f, meta);
    f << "point_id\tx\ty\tz3\tz1\tsigma2_1";
    for (int j = 0; j < d.p1(); ++j) f << "\tx1_" << j;
    for (int j = 0; j < d.p3(); ++j) f << "\tx3_" << j;
    f << '\n';
    int fire = 0;
    for (int i = 0; i < d.n1(); ++i) {
      f << i << '\t' << fmt17(d.points(i, 0)) << '\t' << fmt17(d.points(i, 1)) << '\t'
        << static_cast<int>(d.z3[i]);
      if (d.z3[i] == 1.0) {
        f << '\t' << fmt17(d.z1[fire]) << '\t' << fmt17(d.sigma2_1[fire]);
        ++fire;
      } else {
        f << "\tNA\tNA";  // zero-inflation: magnitude undefined off the fire set
      }
      for (int j = 0; j < d.p1(); ++j) f << '\t' << fmt17(d.x1(i, j));
      for (int j = 0; j < d.p3(); ++j) f << '\t' << fmt17(d.x3(i, j));
      f << '\n';
    }
    meta.extra.clear();
  }
  {
    meta.kind = "regions";
    meta.extra["n2"] = std::to_string(d.n2());
    meta.extra["p2"] = std::to_string(d.p2());
    std::ofstream f(dir / "regions.tsv");
    detail::write_meta(f, meta);
    f << "region_id\tz2\tsigma2_2";
    for (int j = 0; j < d.p2(); ++j) f << "\tx2_" << j;
    f << "\tcells\n";
    for (int k = 0; k < d.n2(); ++k) {
      f << d.regions[k].id << '\t' << fmt17(d.z2[k]) << '\t' << fmt17(d.sigma2_2[k]);
      for (int j = 0; j < d.p2(); ++j) f << '\t' << fmt17(d.x2(k, j));
      f << '\t';
      for (std::size_t c = 0; c < d.regions[k].cells.size(); ++c) {
        if (c) f << ',';
        f << d.regions[k].cells[c];
      }
      f << '\n';
    }
  }
}

inline MultiTypeDataset read_dataset(const fs::path& dir) {
  MultiTypeDataset d;
  {
    const auto t = detail::read_table(dir / "grid.tsv");
    const int n = static_cast<int>(t.rows.size());
    const auto it = t.meta.extra.find("cell_area");
    if (it == t.meta.extra.end()) throw DataError("grid.tsv: missing cell_area in meta line");
    d.grid.cell_area = parse_double(it->second, "grid.tsv meta");
    const auto n_decl = t.meta.extra.find("n_cells");
    if (n_decl != t.meta.extra.end() && std::stoi(n_decl->second) != n)
      throw DataError("grid.tsv: declared n_cells " + n_decl->second + " != " + std::to_string(n) + " rows");
    d.grid.centers.resize(n, 2);
    const int cx = t.col("x", "grid.tsv"), cy = t.col("y", "grid.tsv");
    for (int i = 0; i < n; ++i) {
      d.grid.centers(i, 0) = parse_double(t.rows[i][cx], "grid.tsv");
      d.grid.centers(i, 1) = parse_double(t.rows[i][cy], "grid.tsv");
    }
  }
  {
    const auto t = detail::read_table(dir / "points.tsv");
    const int n = static_cast<int>(t.rows.size());
    const auto decl = t.meta.extra.find("n1");
    if (decl != t.meta.extra.end() && std::stoi(decl->second) != n)
      throw DataError("points.tsv: declared n1 " + decl->second + " != " + std::to_string(n) + " rows");
    std::vector<int> c1, c3;
    for (std::size_t j = 0; j < t.header.size(); ++j) {
      if (t.header[j].rfind("x1_", 0) == 0) c1.push_back(static_cast<int>(j));
      if (t.header[j].rfind("x3_", 0) == 0) c3.push_back(static_cast<int>(j));
    }
    d.points.resize(n, 2);
    d.z3.resize(n);
    d.x1.resize(n, static_cast<int>(c1.size()));
    d.x3.resize(n, static_cast<int>(c3.size()));
    const int cx = t.col("x", "points.tsv"), cy = t.col("y", "points.tsv");
    const int cz3 = t.col("z3", "points.tsv"), cz1 = t.col("z1", "points.tsv");
    const int cs1 = t.col("sigma2_1", "points.tsv");
    std::vector<double> z1v, s1v;
    for (int i = 0; i < n; ++i) {
      const auto& row = t.rows[i];
      d.points(i, 0) = parse_double(row[cx], "points.tsv");
      d.points(i, 1) = parse_double(row[cy], "points.tsv");
      d.z3[i] = parse_double(row[cz3], "points.tsv");
      if (d.z3[i] == 1.0) {
        if (row[cz1] == "NA" || row[cs1] == "NA")
          throw DataError("points.tsv: z1 must be observed where z3 = 1 (row " + std::to_string(i) + ")");
        d.fire_index.push_back(i);
        z1v.push_back(parse_double(row[cz1], "points.tsv"));
        s1v.push_back(parse_double(row[cs1], "points.tsv"));
      } else if (row[cz1] != "NA") {
        throw DataError("points.tsv: z1 must be NA where z3 = 0 (row " + std::to_string(i) + ")");
      }
      for (std::size_t j = 0; j < c1.size(); ++j) d.x1(i, j) = parse_double(row[c1[j]], "points.tsv");
      for (std::size_t j = 0; j < c3.size(); ++j) d.x3(i, j) = parse_double(row[c3[j]], "points.tsv");
    }
    d.z1 = Eigen::Map<Vec>(z1v.data(), static_cast<Eigen::Index>(z1v.size()));
    d.sigma2_1 = Eigen::Map<Vec>(s1v.data(), static_cast<Eigen::Index>(s1v.size()));
  }
  {
    const auto t = detail::read_table(dir / "regions.tsv");
    const int n = static_cast<int>(t.rows.size());
    std::vector<int> c2;
    for (std::size_t j = 0; j < t.header.size(); ++j)
      if (t.header[j].rfind("x2_", 0) == 0) c2.push_back(static_cast<int>(j));
    d.z2.resize(n);
    d.sigma2_2.resize(n);
    d.x2.resize(n, static_cast<int>(c2.size()));
    const int cid = t.col("region_id", "regions.tsv"), cz = t.col("z2", "regions.tsv");
    const int cs = t.col("sigma2_2", "regions.tsv"), cc = t.col("cells", "regions.tsv");
    for (int k = 0; k < n; ++k) {
      const auto& row = t.rows[k];
      ArealRegion reg;
      reg.id = row[cid];
      d.z2[k] = parse_double(row[cz], "regions.tsv");
      d.sigma2_2[k] = parse_double(row[cs], "regions.tsv");
      for (std::size_t j = 0; j < c2.size(); ++j) d.x2(k, j) = parse_double(row[c2[j]], "regions.tsv");
      for (const std::string& tok : detail::split(row[cc], ','))
        if (!tok.empty()) reg.cells.push_back(std::stoi(tok));
      d.regions.push_back(std::move(reg));
    }
  }
  d.validate();
  return d;
}

inline void write_truth(const fs::path& dir, const SimTruth& truth, TableMeta meta) {
  fs::create_directories(dir);
  {
    meta.kind = "truth_points";
    std::ofstream f(dir / "truth_points.tsv");
    detail::write_meta(f, meta);
    f << "point_id\ty1\ty3\tprob3\tdelta1\tdelta3\n";
    for (int i = 0; i < truth.y1.size(); ++i)
      f << i << '\t' << fmt17(truth.y1[i]) << '\t' << fmt17(truth.y3[i]) << '\t' << fmt17(truth.prob3[i])
        << '\t' << fmt17(truth.delta1[i]) << '\t' << fmt17(truth.delta3[i]) << '\n';
  }
  {
    meta.kind = "truth_regions";
    std::ofstream f(dir / "truth_regions.tsv");
    detail::write_meta(f, meta);
    f << "region_index\ty2\tdelta2\n";
    for (int j = 0; j < truth.y2.size(); ++j)
      f << j << '\t' << fmt17(truth.y2[j]) << '\t' << fmt17(truth.delta2[j]) << '\n';
  }
  {
    meta.kind = "truth_effects";
    std::ofstream f(dir / "truth_effects.tsv");
    detail::write_meta(f, meta);
    f << "name\tvalue\n";
    for (int j = 0; j < truth.beta.size(); ++j) f << "beta_" << j << '\t' << fmt17(truth.beta[j]) << '\n';
    for (int j = 0; j < truth.eta.size(); ++j) f << "eta_" << j << '\t' << fmt17(truth.eta[j]) << '\n';
  }
}

struct TruthTables {
  Vec y1, y3, prob3, delta1, delta3;  // points
  Vec y2, delta2;                     // regions
  Vec beta, eta;
};

inline TruthTables read_truth(const fs::path& dir) {
  TruthTables out;
  {
    const auto t = detail::read_table(dir / "truth_points.tsv");
    const int n = static_cast<int>(t.rows.size());
    out.y1.resize(n);
    out.y3.resize(n);
    out.prob3.resize(n);
    out.delta1.resize(n);
    out.delta3.resize(n);
    const int cy1 = t.col("y1", "truth_points.tsv"), cy3 = t.col("y3", "truth_points.tsv");
    const int cp = t.col("prob3", "truth_points.tsv");
    const int cd1 = t.col("delta1", "truth_points.tsv"), cd3 = t.col("delta3", "truth_points.tsv");
    for (int i = 0; i < n; ++i) {
      out.y1[i] = parse_double(t.rows[i][cy1], "truth_points.tsv");
      out.y3[i] = parse_double(t.rows[i][cy3], "truth_points.tsv");
      out.prob3[i] = parse_double(t.rows[i][cp], "truth_points.tsv");
      out.delta1[i] = parse_double(t.rows[i][cd1], "truth_points.tsv");
      out.delta3[i] = parse_double(t.rows[i][cd3], "truth_points.tsv");
    }
  }
  {
    const auto t = detail::read_table(dir / "truth_regions.tsv");
    const int n = static_cast<int>(t.rows.size());
    out.y2.resize(n);
    out.delta2.resize(n);
    const int cy = t.col("y2", "truth_regions.tsv"), cd = t.col("delta2", "truth_regions.tsv");
    for (int j = 0; j < n; ++j) {
      out.y2[j] = parse_double(t.rows[j][cy], "truth_regions.tsv");
      out.delta2[j] = parse_double(t.rows[j][cd], "truth_regions.tsv");
    }
  }
  {
    const auto t = detail::read_table(dir / "truth_effects.tsv");
    std::vector<double> beta, eta;
    const int cn = t.col("name", "truth_effects.tsv"), cv = t.col("value", "truth_effects.tsv");
    for (const auto& row : t.rows) {
      if (row[cn].rfind("beta_", 0) == 0) beta.push_back(parse_double(row[cv], "truth_effects.tsv"));
      if (row[cn].rfind("eta_", 0) == 0) eta.push_back(parse_double(row[cv], "truth_effects.tsv"));
    }
    out.beta = Eigen::Map<Vec>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    out.eta = Eigen::Map<Vec>(eta.data(), static_cast<Eigen::Index>(eta.size()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// fit archives

inline json dims_to_json(const ModelDims& d) {
  return json{{"n1_star", d.n1s}, {"n2", d.n2}, {"n1", d.n1},
              {"p1", d.p1},       {"p2", d.p2}, {"p3", d.p3}, {"r", d.r}};
}

inline ModelDims dims_from_json(const json& j) {
  ModelDims d;
  d.n1s = j.at("n1_star").get<int>();
  d.n2 = j.at("n2").get<int>();
  d.n1 = j.at("n1").get<int>();
  d.p1 = j.at("p1").get<int>();
  d.p2 = j.at("p2").get<int>();
  d.p3 = j.at("p3").get<int>();
  d.r = j.at("r").get<int>();
  return d;
}

inline json knots_to_json(const BoundingBox& box, const KnotSet& k1, const KnotSet& k3) {
  return json{{"box", {box.x0, box.y0, box.x1, box.y1}},
              {"r", k1.size()},
              {"r3", k3.size()},
              {"bandwidth", k1.bandwidth},
              {"bandwidth3", k3.bandwidth}};
}

struct ArchiveKnots {
  KnotSet k1, k2, k3;
};

inline ArchiveKnots knots_from_json(const json& j) {
  const auto& b = j.at("box");
  const BoundingBox box{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
  ArchiveKnots a;
  a.k1 = select_knots(box, j.at("r").get<int>());
  a.k1.bandwidth = j.at("bandwidth").get<double>();
  a.k2 = a.k1;
  a.k3 = select_knots(box, j.at("r3").get<int>());
  a.k3.bandwidth = j.at("bandwidth3").get<double>();
  return a;
}

inline void write_replicates(const fs::path& dir, const PosteriorReplicates& reps,
                             const BoundingBox& box, const KnotSet& k1, const KnotSet& k3,
                             double alpha_xi, const std::string& cfg_hash) {
  fs::create_directories(dir);
  json man;
  man["format"] = "epr-archive";
  man["version"] = 1;
  man["kind"] = "epr";
  man["config_hash"] = cfg_hash;
  man["seed"] = reps.seed;
  man["dims"] = dims_to_json(reps.dims);
  man["knots"] = knots_to_json(box, k1, k3);
  man["alpha_xi"] = alpha_xi;
  man["n_reps"] = reps.n_reps();
  auto block = [&](const char* file, const Mat& m) {
    return json{{"file", file},
                {"rows", m.rows()},
                {"cols", m.cols()},
                {"layout", "column-major"},
                {"dtype", "float64-le"}};
  };
  man["zeta"] = block("zeta.bin", reps.zeta);
  man["q"] = block("q.bin", reps.q);
  man["theta"] = block("theta.bin", reps.theta);
  detail::write_json(dir / "manifest.json", man);
  detail::write_bin(dir / "zeta.bin", reps.zeta);
  detail::write_bin(dir / "q.bin", reps.q);
  detail::write_bin(dir / "theta.bin", reps.theta);
}

struct ReplicateArchive {
  PosteriorReplicates reps;
  ArchiveKnots knots;
  double alpha_xi = 1.0;
  std::string config_hash;
};

inline ReplicateArchive read_replicates(const fs::path& dir) {
  const json man = detail::read_json(dir / "manifest.json");
  if (man.value("kind", "") != "epr") throw DataError(dir.string() + ": not an exact-replicate archive");
  ReplicateArchive a;
  a.reps.dims = dims_from_json(man.at("dims"));
  a.reps.seed = man.at("seed").get<std::uint64_t>();
  a.knots = knots_from_json(man.at("knots"));
  a.alpha_xi = man.at("alpha_xi").get<double>();
  a.config_hash = man.value("config_hash", "");
  auto load = [&](const json& b) {
    return detail::read_bin(dir / b.at("file").get<std::string>(), b.at("rows").get<Eigen::Index>(),
                            b.at("cols").get<Eigen::Index>());
  };
  a.reps.zeta = load(man.at("zeta"));
  a.reps.q = load(man.at("q"));
  a.reps.theta = load(man.at("theta"));
  if (a.reps.zeta.cols() != a.reps.dims.zeta_dim() || a.reps.q.cols() != a.reps.dims.n())
    throw DataError(dir.string() + ": archive blocks inconsistent with dims");
  return a;
}

inline void write_chains(const fs::path& dir, const ChainOutput& out, const BoundingBox& box,
                         const KnotSet& k1, const KnotSet& k3, double alpha_xi,
                         const std::string& cfg_hash) {
  fs::create_directories(dir);
  json man;
  man["format"] = "epr-archive";
  man["version"] = 1;
  man["kind"] = "mcmc";
  man["config_hash"] = cfg_hash;
  man["seed"] = out.seed;
  man["dims"] = dims_to_json(out.dims);
  man["knots"] = knots_to_json(box, k1, k3);
  man["alpha_xi"] = alpha_xi;
  man["chains"] = out.n_chains();
  man["iters"] = out.iters();
  man["burnin"] = out.burnin;
  man["params"] = out.param_names;
  man["chains_file"] = {{"file", "chains.bin"},
                        {"rows", out.iters()},
                        {"cols", out.n_params()},
                        {"layout", "column-major, chain blocks concatenated"},
                        {"dtype", "float64-le"}};
  detail::write_json(dir / "manifest.json", man);
  std::ofstream f(dir / "chains.bin", std::ios::binary);
  if (!f) throw DataError("cannot open chains.bin for writing");
  for (const Mat& ch : out.chains)
    f.write(reinterpret_cast<const char*>(ch.data()), static_cast<std::streamsize>(sizeof(double) * ch.size()));
  // per-parameter convergence table, plot ready
  std::ofstream g(dir / "gr.tsv");
  TableMeta meta;
  meta.kind = "gelman_rubin";
  meta.config_hash = cfg_hash;
  meta.seed = out.seed;
  detail::write_meta(g, meta);
  g << "param\tpsrf\tpsrf_upper\n";
  if (out.n_chains() >= 2)
    for (int j = 0; j < out.n_params(); ++j) {
      const GelmanRubin gr = gelman_rubin(out, j);
      g << out.param_names[j] << '\t' << fmt17(gr.point) << '\t' << fmt17(gr.upper) << '\n';
    }
}

struct ChainArchive {
  ChainOutput out;
  ArchiveKnots knots;
  double alpha_xi = 1.0;
  std::string config_hash;
};

inline ChainArchive read_chains(const fs::path& dir) {
  const json man = detail::read_json(dir / "manifest.json");
  if (man.value("kind", "") != "mcmc") throw DataError(dir.string() + ": not a chain archive");
  ChainArchive a;
  a.out.dims = dims_from_json(man.at("dims"));
  a.out.seed = man.at("seed").get<std::uint64_t>();
  a.out.burnin = man.at("burnin").get<int>();
  a.out.param_names = man.at("params").get<std::vector<std::string>>();
  a.knots = knots_from_json(man.at("knots"));
  a.alpha_xi = man.at("alpha_xi").get<double>();
  a.config_hash = man.value("config_hash", "");
  const int chains = man.at("chains").get<int>();
  const int iters = man.at("iters").get<int>();
  const int k = static_cast<int>(a.out.param_names.size());
  std::ifstream f(dir / "chains.bin", std::ios::binary);
  if (!f) throw DataError("cannot open chains.bin");
  for (int c = 0; c < chains; ++c) {
    Mat ch(iters, k);
    f.read(reinterpret_cast<char*>(ch.data()), static_cast<std::streamsize>(sizeof(double) * ch.size()));
    if (f.gcount() != static_cast<std::streamsize>(sizeof(double) * ch.size()))
      throw DataError("chains.bin: truncated");
    a.out.chains.push_back(std::move(ch));
  }
  return a;
}

inline void write_timing(const fs::path& dir, double seconds, const json& extra = json::object()) {
  json t = extra;
  t["seconds"] = seconds;
  detail::write_json(dir / "timing.json", t);
}

// ---------------------------------------------------------------------------
// predictions, scores, comparison report

inline void write_surface(const fs::path& dir, const PredictionSurface& s, const TableMeta& base) {
  fs::create_directories(dir);
  auto write_block = [&](const char* file, const char* kind, const char* id_col, const SurfaceBlock& b) {
    std::ofstream f(dir / file);
    TableMeta meta = base;
    meta.kind = kind;
    meta.extra["level"] = fmt17(s.level);
    detail::write_meta(f, meta);
    f << id_col << "\tmean\tlo\tmed\thi\n";
    for (std::size_t i = 0; i < b.ids.size(); ++i)
      f << b.ids[i] << '\t' << fmt17(b.mean[i]) << '\t' << fmt17(b.lo[i]) << '\t' << fmt17(b.med[i]) << '\t'
        << fmt17(b.hi[i]) << '\n';
  };
  write_block("pred_points_y1.tsv", "pred_y1", "point_id", s.y1);
  write_block("pred_regions_y2.tsv", "pred_y2", "region_id", s.y2);
  write_block("pred_points_y3.tsv", "pred_y3_prob", "point_id", s.y3);
}

inline void write_roc(const fs::path& path, const RocResult& roc, const TableMeta& base) {
  std::ofstream f(path);
  TableMeta meta = base;
  meta.kind = "roc";
  meta.extra["auc"] = fmt17(roc.auc);
  detail::write_meta(f, meta);
  f << "threshold\tfpr\ttpr\n";
  for (const RocPoint& p : roc.curve)
    f << (std::isinf(p.threshold) ? std::string("inf") : fmt17(p.threshold)) << '\t' << fmt17(p.fpr) << '\t'
      << fmt17(p.tpr) << '\n';
}

inline void write_comparison(const fs::path& dir, const ComparisonReport& rep, const std::string& cfg_hash) {
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "raw_scores.csv");
    f << "replicate,method,mspe_y1,crps_y1,mspe_y2,crps_y2,hd_sum_y3,hd_mean_y3,mse_effects\n";
    auto line = [&](int t, const char* method, const CompareMetrics& m) {
      f << t << ',' << method << ',' << fmt17(m.mspe_y1) << ',' << fmt17(m.crps_y1) << ',' << fmt17(m.mspe_y2)
        << ',' << fmt17(m.crps_y2) << ',' << fmt17(m.hd_sum_y3) << ',' << fmt17(m.hd_mean_y3) << ','
        << fmt17(m.mse_effects) << '\n';
    };
    for (const auto& row : rep.rows) {
      line(row.replicate, "epr", row.epr);
      line(row.replicate, "mcmc", row.mcmc);
    }
  }
  {
    // CPU columns live apart from the score table: they vary run to run
    std::ofstream f(dir / "timing.csv");
    f << "replicate,method,seconds\n";
    for (const auto& row : rep.rows) {
      f << row.replicate << ",epr," << fmt17(row.epr.seconds) << '\n';
      f << row.replicate << ",mcmc," << fmt17(row.mcmc.seconds) << '\n';
    }
  }
  json j;
  j["config_hash"] = cfg_hash;
  j["discrepancy"] = rep.config.discrepancy;
  j["replicates"] = static_cast<int>(rep.rows.size());
  const char* metrics[] = {"mspe_y1", "crps_y1", "mspe_y2", "crps_y2", "hd_sum_y3", "hd_mean_y3", "mse_effects"};
  for (const char* method : {"epr", "mcmc"})
    for (const char* metric : metrics) {
      const MetricSummary s = rep.summary(method, metric);
      j[method][metric] = {{"mean", s.mean}, {"sd", s.sd}};
    }
  detail::write_json(dir / "report.json", j);
}

// ---------------------------------------------------------------------------
// configuration: one JSON document drives every subcommand; unknown keys are
// rejected so typos fail loudly instead of silently using defaults.

struct AppConfig {
  std::uint64_t seed = 1;
  int threads = 1;
  SimConfig sim;
  HyperState hyper;          // hyper for standalone fits
  bool hyper_given = false;  // when set in config, the harness fits use it too
  int epr_reps = 1000;
  McmcConfig mcmc;
  int model_r = 50, model_r3 = 25;  // knot counts for fitting external datasets
  double score_level = 0.95;
  json raw = json::object();
  std::string hash = "0000000000000000";
};

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw ConfigError("config: unknown key '" + key + "' in " + where);
  }
}

inline PriorSpec parse_prior(const json& j, const std::string& where) {
  reject_unknown(j, {"family", "value", "lower", "upper", "shape", "rate"}, where);
  PriorSpec p;
  const std::string fam = j.at("family").get<std::string>();
  if (fam == "point-mass") {
    p.family = PriorSpec::Family::point_mass;
    p.a = j.at("value").get<double>();
  } else if (fam == "log-uniform") {
    p.family = PriorSpec::Family::log_uniform;
    p.a = j.at("lower").get<double>();
    p.b = j.at("upper").get<double>();
  } else if (fam == "inv-gamma") {
    p.family = PriorSpec::Family::inv_gamma_variance;
    p.a = j.at("shape").get<double>();
    p.b = j.at("rate").get<double>();
  } else {
    throw ConfigError("config: unknown prior family '" + fam + "' in " + where);
  }
  return p;
}

inline Eigen::VectorXd parse_vector(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError("config: " + where + " must be an array");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

}  // namespace detail

inline AppConfig parse_config(const json& j) {
  AppConfig c;
  // threads is an execution detail: results are thread-count invariant, so it
  // stays out of the recorded config and its hash
  c.raw = j;
  c.raw.erase("threads");
  c.hash = config_hash(c.raw);
  detail::reject_unknown(j, {"seed", "threads", "sim", "hyper", "epr", "mcmc", "model", "score"}, "top level");
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("threads")) c.threads = j.at("threads").get<int>();
  if (j.contains("sim")) {
    const json& s = j.at("sim");
    detail::reject_unknown(s,
                           {"nx", "ny", "regions", "r", "r3", "replicates", "discrepancy", "sigma2_1", "sigma2_2",
                            "sigma_xi_gen", "epr_reps", "crps_thin", "beta1", "beta2", "beta3"},
                           "sim");
    if (s.contains("nx")) c.sim.nx = s.at("nx").get<int>();
    if (s.contains("ny")) c.sim.ny = s.at("ny").get<int>();
    if (s.contains("regions")) c.sim.n_regions = s.at("regions").get<int>();
    if (s.contains("r")) c.sim.r = s.at("r").get<int>();
    if (s.contains("r3")) c.sim.r3 = s.at("r3").get<int>();
    if (s.contains("replicates")) c.sim.n_replicates = s.at("replicates").get<int>();
    if (s.contains("discrepancy")) c.sim.discrepancy = s.at("discrepancy").get<bool>();
    if (s.contains("sigma2_1")) c.sim.sigma2_1 = s.at("sigma2_1").get<double>();
    if (s.contains("sigma2_2")) c.sim.sigma2_2 = s.at("sigma2_2").get<double>();
    if (s.contains("sigma_xi_gen")) c.sim.sigma_xi_gen = s.at("sigma_xi_gen").get<double>();
    if (s.contains("epr_reps")) c.sim.epr_reps = s.at("epr_reps").get<int>();
    if (s.contains("crps_thin")) c.sim.crps_thin = s.at("crps_thin").get<int>();
    if (s.contains("beta1")) c.sim.beta1 = detail::parse_vector(s.at("beta1"), "sim.beta1");
    if (s.contains("beta2")) c.sim.beta2 = detail::parse_vector(s.at("beta2"), "sim.beta2");
    if (s.contains("beta3")) c.sim.beta3 = detail::parse_vector(s.at("beta3"), "sim.beta3");
  }
  if (j.contains("hyper")) {
    const json& h = j.at("hyper");
    detail::reject_unknown(h, {"alpha_xi", "sigma_beta", "sigma_eta", "sigma_xi"}, "hyper");
    if (h.contains("alpha_xi")) c.hyper.alpha_xi = h.at("alpha_xi").get<double>();
    if (h.contains("sigma_beta")) c.hyper.prior_sigma_beta = detail::parse_prior(h.at("sigma_beta"), "hyper.sigma_beta");
    if (h.contains("sigma_eta")) c.hyper.prior_sigma_eta = detail::parse_prior(h.at("sigma_eta"), "hyper.sigma_eta");
    if (h.contains("sigma_xi")) c.hyper.prior_sigma_xi = detail::parse_prior(h.at("sigma_xi"), "hyper.sigma_xi");
    c.hyper_given = true;
    c.sim.fit_hyper = c.hyper;
  }
  if (j.contains("epr")) {
    detail::reject_unknown(j.at("epr"), {"reps"}, "epr");
    if (j.at("epr").contains("reps")) c.epr_reps = j.at("epr").at("reps").get<int>();
  }
  if (j.contains("mcmc")) {
    const json& m = j.at("mcmc");
    detail::reject_unknown(m,
                           {"chains", "iters", "burnin", "target_accept", "adapt_batch", "ig_shape", "ig_rate",
                            "fix_variances", "init_sigma2_beta", "init_sigma2_eta", "init_sigma2_xi"},
                           "mcmc");
    if (m.contains("chains")) c.mcmc.chains = m.at("chains").get<int>();
    if (m.contains("iters")) c.mcmc.iters = m.at("iters").get<int>();
    if (m.contains("burnin")) c.mcmc.burnin = m.at("burnin").get<int>();
    if (m.contains("target_accept")) c.mcmc.target_accept = m.at("target_accept").get<double>();
    if (m.contains("adapt_batch")) c.mcmc.adapt_batch = m.at("adapt_batch").get<int>();
    if (m.contains("ig_shape")) c.mcmc.ig_shape = m.at("ig_shape").get<double>();
    if (m.contains("ig_rate")) c.mcmc.ig_rate = m.at("ig_rate").get<double>();
    if (m.contains("fix_variances")) c.mcmc.fix_variances = m.at("fix_variances").get<bool>();
    if (m.contains("init_sigma2_beta")) c.mcmc.init_sigma2_beta = m.at("init_sigma2_beta").get<double>();
    if (m.contains("init_sigma2_eta")) c.mcmc.init_sigma2_eta = m.at("init_sigma2_eta").get<double>();
    if (m.contains("init_sigma2_xi")) c.mcmc.init_sigma2_xi = m.at("init_sigma2_xi").get<double>();
    c.sim.mcmc = c.mcmc;
  }
  if (j.contains("model")) {
    detail::reject_unknown(j.at("model"), {"r", "r3"}, "model");
    if (j.at("model").contains("r")) c.model_r = j.at("model").at("r").get<int>();
    if (j.at("model").contains("r3")) c.model_r3 = j.at("model").at("r3").get<int>();
  }
  if (j.contains("score")) {
    detail::reject_unknown(j.at("score"), {"level"}, "score");
    if (j.at("score").contains("level")) c.score_level = j.at("score").at("level").get<double>();
  }
  c.sim.seed = c.seed;
  c.sim.threads = c.threads;
  c.mcmc.seed = c.seed;
  return c;
}

inline AppConfig load_config(const std::string& path) {
  if (path.empty()) return parse_config(json::object());
  return parse_config(detail::read_json(path));
}

}  // namespace epr::io
