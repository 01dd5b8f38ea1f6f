#include "ug2/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ug2/rng.hpp"

namespace ug2 {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- CsrGraph ----

CsrGraph CsrGraph::from_edges(
    uint32_t num_nodes, const std::vector<std::pair<uint32_t, uint32_t>>& edges) {
  std::vector<std::pair<uint32_t, uint32_t>> dir;
  dir.reserve(edges.size() * 2);
  for (auto [u, v] : edges) {
    if (u >= num_nodes || v >= num_nodes)
      throw FormatError("edge (" + std::to_string(u) + "," + std::to_string(v) +
                        ") references node >= " + std::to_string(num_nodes));
    if (u == v) continue;  // strip self-loops
    dir.emplace_back(u, v);
    dir.emplace_back(v, u);
  }
  std::sort(dir.begin(), dir.end());
  dir.erase(std::unique(dir.begin(), dir.end()), dir.end());

  CsrGraph g;
  g.num_nodes = num_nodes;
  g.offsets.assign(num_nodes + 1, 0);
  for (auto& [u, v] : dir) g.offsets[u + 1]++;
  for (uint32_t i = 0; i < num_nodes; ++i) g.offsets[i + 1] += g.offsets[i];
  g.targets.resize(dir.size());
  std::vector<uint64_t> cursor(g.offsets.begin(), g.offsets.end() - 1);
  for (auto& [u, v] : dir) g.targets[cursor[u]++] = v;
  return g;
}

std::vector<std::pair<uint32_t, uint32_t>> CsrGraph::edge_list() const {
  std::vector<std::pair<uint32_t, uint32_t>> out;
  out.reserve(undirected_edge_count());
  for (uint32_t u = 0; u < num_nodes; ++u)
    for (uint32_t v : neighbors(u))
      if (u < v) out.emplace_back(u, v);
  return out;
}

void CsrGraph::validate() const {
  if (offsets.size() != size_t(num_nodes) + 1 || offsets[0] != 0 ||
      offsets[num_nodes] != targets.size())
    throw ValidationError("CSR offsets corrupt");
  for (uint32_t i = 0; i < num_nodes; ++i)
    if (offsets[i + 1] < offsets[i]) throw ValidationError("CSR offsets not monotone");
  for (uint32_t t : targets)
    if (t >= num_nodes) throw ValidationError("CSR target out of range");
  // symmetry + no self-loops
  for (uint32_t u = 0; u < num_nodes; ++u) {
    for (uint32_t v : neighbors(u)) {
      if (v == u) throw ValidationError("self-loop stored at node " + std::to_string(u));
      auto nb = neighbors(v);
      if (std::find(nb.begin(), nb.end(), u) == nb.end())
        throw ValidationError("asymmetric edge " + std::to_string(u) + "-" +
                              std::to_string(v));
    }
  }
}

void FeatureMatrix::validate() const {
  if (size_t(rows) * cols != data.size())
    throw ValidationError("feature matrix size mismatch");
  for (float v : data)
    if (!std::isfinite(v)) throw ValidationError("non-finite feature value");
}

void MultimodalGraph::validate() const {
  graph.validate();
  if (modalities.empty()) throw ValidationError("graph has no modalities");
  for (const auto& m : modalities) {
    if (m.presence.size() != graph.num_nodes)
      throw ValidationError("presence mask length mismatch for modality " + m.name);
    if (const auto* fm = std::get_if<FeatureMatrix>(&m.raw)) {
      if (fm->rows != graph.num_nodes)
        throw ValidationError("feature rows mismatch for modality " + m.name);
      fm->validate();
    } else {
      if (std::get<std::vector<std::string>>(m.raw).size() != graph.num_nodes)
        throw ValidationError("text row count mismatch for modality " + m.name);
    }
  }
  for (uint32_t v = 0; v < graph.num_nodes; ++v) {
    bool any = false;
    for (const auto& m : modalities) any = any || m.presence[v] != 0;
    if (!any)
      throw ValidationError("node " + std::to_string(v) + " has no modality");
  }
  if (!labels.empty()) {
    if (labels.size() != graph.num_nodes)
      throw ValidationError("label count mismatch");
    for (int32_t y : labels)
      if (y < 0 || y >= num_classes)
        throw ValidationError("label " + std::to_string(y) + " outside [0," +
                              std::to_string(num_classes) + ")");
  }
}

// ---- .mmgf ----

namespace {

constexpr char kMagic[4] = {'M', 'M', 'G', 'F'};

template <typename T>
void put_u32(std::ostream& os, T v) {
  uint32_t x = uint32_t(v);
  unsigned char b[4] = {static_cast<unsigned char>(x & 0xff),
                        static_cast<unsigned char>((x >> 8) & 0xff),
                        static_cast<unsigned char>((x >> 16) & 0xff),
                        static_cast<unsigned char>((x >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw FormatError(path + ": truncated header");
  return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
         (uint32_t(b[3]) << 24);
}

}  // namespace

FeatureMatrix read_mmgf(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open feature file " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path + ": bad magic (want MMGF)");
  uint32_t version = get_u32(is, path);
  if (version != 1)
    throw FormatError(path + ": unsupported version " + std::to_string(version));
  FeatureMatrix fm;
  fm.rows = get_u32(is, path);
  fm.cols = get_u32(is, path);
  fm.data.resize(size_t(fm.rows) * fm.cols);
  // f32 little-endian payload; this code assumes a little-endian host.
  if (!is.read(reinterpret_cast<char*>(fm.data.data()),
               std::streamsize(fm.data.size() * sizeof(float))))
    throw FormatError(path + ": truncated payload");
  fm.validate();
  return fm;
}

void write_mmgf(const std::string& path, const FeatureMatrix& fm) {
  fm.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write feature file " + path);
  os.write(kMagic, 4);
  put_u32(os, 1u);
  put_u32(os, fm.rows);
  put_u32(os, fm.cols);
  os.write(reinterpret_cast<const char*>(fm.data.data()),
           std::streamsize(fm.data.size() * sizeof(float)));
  if (!os) throw IoError("short write to " + path);
}

// ---- edge list ----

std::pair<uint32_t, std::vector<std::pair<uint32_t, uint32_t>>> read_edge_list(
    const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open edge list " + path);
  std::string line;
  if (!std::getline(is, line) || line.rfind("#nodes=", 0) != 0)
    throw FormatError(path + ":1: expected '#nodes=<N>' header");
  uint32_t n = 0;
  try {
    n = uint32_t(std::stoul(line.substr(7)));
  } catch (const std::exception&) {
    throw FormatError(path + ":1: cannot parse node count");
  }
  std::vector<std::pair<uint32_t, uint32_t>> edges;
  size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    uint64_t u, v;
    if (!(ls >> u >> v))
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected 'src<TAB>dst'");
    if (u >= n || v >= n)
      throw FormatError(path + ":" + std::to_string(lineno) + ": node id " +
                        std::to_string(std::max(u, v)) + " >= declared count " +
                        std::to_string(n));
    edges.emplace_back(uint32_t(u), uint32_t(v));
  }
  return {n, std::move(edges)};
}

void write_edge_list(const std::string& path, const CsrGraph& g) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write edge list " + path);
  os << "#nodes=" << g.num_nodes << "\n";
  for (auto [u, v] : g.edge_list()) os << u << "\t" << v << "\n";
  if (!os) throw IoError("short write to " + path);
}

// ---- manifest / labels / splits ----

namespace {

std::vector<uint8_t> read_presence(const std::string& path, uint32_t n) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open presence file " + path);
  std::vector<uint8_t> mask(n);
  if (!is.read(reinterpret_cast<char*>(mask.data()), std::streamsize(n)))
    throw FormatError(path + ": expected " + std::to_string(n) + " bytes");
  for (uint8_t b : mask)
    if (b > 1) throw FormatError(path + ": presence bytes must be 0/1");
  return mask;
}

std::vector<std::string> read_text_lines(const std::string& path, uint32_t n) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open text feature file " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) lines.push_back(line);
  if (lines.size() != n)
    throw FormatError(path + ": expected " + std::to_string(n) + " lines, got " +
                      std::to_string(lines.size()));
  return lines;
}

bool has_mmgf_magic(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open feature file " + path);
  char magic[4];
  return bool(is.read(magic, 4)) && std::memcmp(magic, kMagic, 4) == 0;
}

std::string resolve(const fs::path& base, const std::string& p) {
  fs::path fp(p);
  return fp.is_absolute() ? fp.string() : (base / fp).string();
}

std::vector<int32_t> read_labels(const std::string& path, uint32_t n) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open label file " + path);
  std::vector<int32_t> labels;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    labels.push_back(int32_t(std::stol(line)));
  }
  if (labels.size() != n)
    throw FormatError(path + ": expected " + std::to_string(n) + " labels, got " +
                      std::to_string(labels.size()));
  return labels;
}

Splits read_splits(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open splits file " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  Splits s;
  for (auto [key, dst] : {std::pair{"train", &s.train}, {"val", &s.val},
                          {"test", &s.test}}) {
    if (!j.contains(key)) throw FormatError(path + ": missing '" + key + "'");
    for (const auto& v : j.at(key)) dst->push_back(v.get<uint32_t>());
  }
  return s;
}

}  // namespace

MultimodalGraph load_graph(const std::string& edge_path,
                           const std::string& manifest_path) {
  auto [n, edges] = read_edge_list(edge_path);

  std::ifstream is(manifest_path);
  if (!is) throw IoError("cannot open manifest " + manifest_path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw FormatError(manifest_path + ": " + std::string(e.what()));
  }

  MultimodalGraph g;
  g.graph = CsrGraph::from_edges(n, edges);
  const fs::path base = fs::path(manifest_path).parent_path();
  try {
    g.domain_id = j.at("domain_id").get<std::string>();
    for (const auto& jm : j.at("modalities")) {
      ModalityData m;
      m.name = jm.at("name").get<std::string>();
      const std::string feat = resolve(base, jm.at("features").get<std::string>());
      m.raw = has_mmgf_magic(feat) ? RawFeatures(read_mmgf(feat))
                                   : RawFeatures(read_text_lines(feat, n));
      m.presence = read_presence(resolve(base, jm.at("presence").get<std::string>()), n);
      g.modalities.push_back(std::move(m));
    }
    if (j.contains("labels") && !j.at("labels").is_null()) {
      g.labels = read_labels(resolve(base, j.at("labels").get<std::string>()), n);
      g.num_classes = g.labels.empty()
                          ? 0
                          : *std::max_element(g.labels.begin(), g.labels.end()) + 1;
    }
    if (j.contains("splits") && !j.at("splits").is_null())
      g.splits = read_splits(resolve(base, j.at("splits").get<std::string>()));
  } catch (const json::exception& e) {
    throw FormatError(manifest_path + ": " + std::string(e.what()));
  }
  g.validate();
  return g;
}

std::pair<std::string, std::string> write_graph(const MultimodalGraph& g,
                                                const std::string& dir) {
  g.validate();
  fs::create_directories(dir);
  const fs::path base(dir);

  const std::string edge_path = (base / "edges.txt").string();
  write_edge_list(edge_path, g.graph);

  json manifest;
  manifest["domain_id"] = g.domain_id;
  manifest["modalities"] = json::array();
  for (const auto& m : g.modalities) {
    const std::string feat_name = "feat_" + m.name;
    std::string feat_file;
    if (const auto* fm = std::get_if<FeatureMatrix>(&m.raw)) {
      feat_file = feat_name + ".mmgf";
      write_mmgf((base / feat_file).string(), *fm);
    } else {
      feat_file = feat_name + ".txt";
      std::ofstream os(base / feat_file);
      for (const auto& line : std::get<std::vector<std::string>>(m.raw))
        os << line << "\n";
      if (!os) throw IoError("short write to " + feat_file);
    }
    const std::string pres_file = "presence_" + m.name + ".bin";
    {
      std::ofstream os(base / pres_file, std::ios::binary);
      os.write(reinterpret_cast<const char*>(m.presence.data()),
               std::streamsize(m.presence.size()));
      if (!os) throw IoError("short write to " + pres_file);
    }
    manifest["modalities"].push_back(
        {{"name", m.name}, {"features", feat_file}, {"presence", pres_file}});
  }
  if (g.has_labels()) {
    std::ofstream os(base / "labels.txt");
    for (int32_t y : g.labels) os << y << "\n";
    if (!os) throw IoError("short write to labels.txt");
    manifest["labels"] = "labels.txt";
  } else {
    manifest["labels"] = nullptr;
  }
  if (!g.splits.empty()) {
    json js = {{"train", g.splits.train}, {"val", g.splits.val}, {"test", g.splits.test}};
    std::ofstream os(base / "splits.json");
    os << js.dump(2) << "\n";
    if (!os) throw IoError("short write to splits.json");
    manifest["splits"] = "splits.json";
  } else {
    manifest["splits"] = nullptr;
  }

  const std::string manifest_path = (base / "manifest.json").string();
  {
    std::ofstream os(manifest_path);
    os << manifest.dump(2) << "\n";
    if (!os) throw IoError("short write to manifest.json");
  }
  return {edge_path, manifest_path};
}

// ---- synthetic generator ----

void SynthConfig::validate() const {
  if (num_communities < 2) throw ValidationError("num_communities must be >= 2");
  if (!(p_in > p_out)) throw ValidationError("p_in must exceed p_out");
  if (p_in < 0 || p_in > 1 || p_out < 0 || p_out > 1)
    throw ValidationError("edge probabilities must be in [0,1]");
  if (p_missing < 0 || p_missing >= 1)
    throw ValidationError("p_missing must be in [0,1)");
  if (num_nodes < num_communities)
    throw ValidationError("need at least one node per community");
  if (dims.empty()) throw ValidationError("need at least one modality");
  if (noise_sigma < 0) throw ValidationError("noise_sigma must be >= 0");
}

MultimodalGraph synth_mmg(const SynthConfig& cfg) {
  cfg.validate();
  const uint32_t n = cfg.num_nodes, c = cfg.num_communities;

  MultimodalGraph g;
  g.domain_id = "synth";
  g.labels.resize(n);
  for (uint32_t i = 0; i < n; ++i)
    g.labels[i] = int32_t((uint64_t(i) * c) / n);  // contiguous balanced blocks
  g.num_classes = int32_t(c);

  // topology
  {
    Rng rng(mix_seed(cfg.seed, 0x1000));
    std::vector<std::pair<uint32_t, uint32_t>> edges;
    for (uint32_t i = 0; i < n; ++i) {
      for (uint32_t j = i + 1; j < n; ++j) {
        const double p = g.labels[i] == g.labels[j] ? cfg.p_in : cfg.p_out;
        if (rng.bernoulli(p)) edges.emplace_back(i, j);
      }
    }
    g.graph = CsrGraph::from_edges(n, edges);
  }

  // features: unit-norm community means + iid Gaussian noise
  for (size_t w = 0; w < cfg.dims.size(); ++w) {
    const uint32_t d = cfg.dims[w];
    if (d == 0) throw ValidationError("modality dims must be positive");
    Rng rng(mix_seed(cfg.seed, 0x2000 + w));
    std::vector<std::vector<double>> means(c, std::vector<double>(d));
    for (uint32_t k = 0; k < c; ++k) {
      double sq = 0.0;
      for (double& v : means[k]) {
        v = rng.normal();
        sq += v * v;
      }
      const double inv = 1.0 / std::max(std::sqrt(sq), 1e-12);
      for (double& v : means[k]) v *= inv;
    }
    ModalityData m;
    m.name = "mod" + std::to_string(w);
    m.presence.assign(n, 1);
    if (w > 0 && cfg.p_missing > 0) {
      for (uint32_t i = 0; i < n; ++i)
        if (rng.bernoulli(cfg.p_missing)) m.presence[i] = 0;
    }
    FeatureMatrix fm;
    fm.rows = n;
    fm.cols = d;
    fm.data.assign(size_t(n) * d, 0.0f);
    for (uint32_t i = 0; i < n; ++i) {
      if (!m.presence[i]) continue;
      const auto& mu = means[size_t(g.labels[i])];
      for (uint32_t k = 0; k < d; ++k)
        fm.data[size_t(i) * d + k] =
            float(mu[k] + cfg.noise_sigma * rng.normal());
    }
    m.raw = std::move(fm);
    g.modalities.push_back(std::move(m));
  }

  // per-class splits: train_per_class, then val_per_class, rest test
  {
    Rng rng(mix_seed(cfg.seed, 0x3000));
    std::vector<std::vector<uint32_t>> per_class(c);
    for (uint32_t i = 0; i < n; ++i) per_class[size_t(g.labels[i])].push_back(i);
    for (auto& ids : per_class) {
      rng.shuffle(ids);
      for (size_t i = 0; i < ids.size(); ++i) {
        if (i < cfg.train_per_class)
          g.splits.train.push_back(ids[i]);
        else if (i < size_t(cfg.train_per_class) + cfg.val_per_class)
          g.splits.val.push_back(ids[i]);
        else
          g.splits.test.push_back(ids[i]);
      }
    }
    std::sort(g.splits.train.begin(), g.splits.train.end());
    std::sort(g.splits.val.begin(), g.splits.val.end());
    std::sort(g.splits.test.begin(), g.splits.test.end());
  }

  g.validate();
  return g;
}

}  // namespace ug2
