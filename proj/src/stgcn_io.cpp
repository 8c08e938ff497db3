#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "rted/stgcn.hpp"

namespace rted::stgcn {

namespace {

constexpr const char* kFormat = "rted-stgcn-weights";
constexpr int kVersion = 1;

using nlohmann::json;

json hyper_to_json(const Hyperparameters& h) {
  return {{"window", h.window},           {"kernel", h.kernel},         {"st_blocks", h.st_blocks},
          {"st_channels", h.st_channels}, {"st_out", h.st_out},         {"ec_layers", h.ec_layers},
          {"ec_channels", h.ec_channels}, {"edge_hidden", h.edge_hidden}, {"ec_out", h.ec_out},
          {"fa_hidden", h.fa_hidden},     {"cheb_k", h.cheb_k},         {"bid_segments", h.bid_segments},
          {"tder_slots", h.tder_slots},   {"gen_slots", h.gen_slots},   {"dera_slots", h.dera_slots},
          {"edge_width", h.edge_width}};
}

Hyperparameters hyper_from_json(const json& j) {
  Hyperparameters h;
  auto get = [&](const char* key, int& out) {
    if (!j.contains(key)) throw FormatError(std::string("manifest hyperparameters lack ") + key);
    out = j.at(key).get<int>();
  };
  get("window", h.window);
  get("kernel", h.kernel);
  get("st_blocks", h.st_blocks);
  if (!j.contains("st_channels")) throw FormatError("manifest hyperparameters lack st_channels");
  h.st_channels = j.at("st_channels").get<std::vector<int>>();
  get("st_out", h.st_out);
  get("ec_layers", h.ec_layers);
  get("ec_channels", h.ec_channels);
  get("edge_hidden", h.edge_hidden);
  get("ec_out", h.ec_out);
  get("fa_hidden", h.fa_hidden);
  get("cheb_k", h.cheb_k);
  get("bid_segments", h.bid_segments);
  get("tder_slots", h.tder_slots);
  get("gen_slots", h.gen_slots);
  get("dera_slots", h.dera_slots);
  get("edge_width", h.edge_width);
  return h;
}

json stats_to_json(const FeatureStats& s) { return {{"mean", s.mean}, {"std", s.std}}; }

FeatureStats stats_from_json(const json& j, const char* what) {
  if (!j.contains(what)) throw FormatError(std::string("manifest normalization lacks ") + what);
  const auto& e = j.at(what);
  return {e.at("mean").get<std::vector<double>>(), e.at("std").get<std::vector<double>>()};
}

std::uint32_t crc_of(const std::vector<unsigned char>& bytes, std::size_t offset, std::size_t len) {
  uLong c = crc32(0L, Z_NULL, 0);
  c = crc32(c, bytes.data() + offset, static_cast<uInt>(len));
  return static_cast<std::uint32_t>(c);
}

void put_f32(std::vector<unsigned char>& out, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
  unsigned char b[4];
  std::memcpy(b, &u, 4);
  out.insert(out.end(), b, b + 4);
}

float get_f32(const unsigned char* p) {
  std::uint32_t u;
  std::memcpy(&u, p, 4);
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

}  // namespace

void save_model(const Model& m, const std::string& manifest_path, const std::string& payload_name) {
  m.check();
  namespace fs = std::filesystem;
  const fs::path manifest(manifest_path);
  const std::string payload = payload_name.empty() ? manifest.stem().string() + ".bin" : payload_name;
  std::vector<unsigned char> bytes;
  json tensors = json::array();
  for (const auto& [name, shape] : tensor_specs(m.hyper)) {
    const auto& t = m.tensor(name);
    const std::size_t offset = bytes.size();
    for (double x : t.data) put_f32(bytes, static_cast<float>(x));
    tensors.push_back({{"name", name},
                       {"shape", shape},
                       {"dtype", "f32"},
                       {"offset", offset},
                       {"crc32", crc_of(bytes, offset, bytes.size() - offset)}});
  }
  json j{{"format", kFormat},
         {"version", kVersion},
         {"payload", payload},
         {"payload_bytes", bytes.size()},
         {"hyperparameters", hyper_to_json(m.hyper)},
         {"normalization",
          {{"load_der", stats_to_json(m.norm.load_der)},
           {"gen", stats_to_json(m.norm.gen)},
           {"edge", stats_to_json(m.norm.edge)}}},
         {"tensors", tensors}};
  const fs::path payload_path = manifest.parent_path() / payload;
  std::ofstream pout(payload_path, std::ios::binary);
  if (!pout) throw std::runtime_error("cannot write " + payload_path.string());
  pout.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  std::ofstream mout(manifest);
  if (!mout) throw std::runtime_error("cannot write " + manifest_path);
  mout << j.dump(2) << "\n";
}

Model load_model(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream min(manifest_path);
  if (!min) throw std::runtime_error("cannot read " + manifest_path);
  json j;
  try {
    j = json::parse(min);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("weight manifest is not valid JSON: ") + e.what());
  }
  if (!j.contains("format") || j.at("format") != kFormat) throw FormatError("not an ST-GCN weight manifest");
  if (!j.contains("version")) throw FormatError("weight manifest has no version");
  const int version = j.at("version").get<int>();
  if (version != kVersion) throw FormatError("unsupported weight file version " + std::to_string(version));

  Model m;
  m.hyper = hyper_from_json(j.at("hyperparameters"));
  const auto& nj = j.at("normalization");
  m.norm = {stats_from_json(nj, "load_der"), stats_from_json(nj, "gen"), stats_from_json(nj, "edge")};

  const fs::path payload = fs::path(manifest_path).parent_path() / j.at("payload").get<std::string>();
  std::ifstream pin(payload, std::ios::binary);
  if (!pin) throw std::runtime_error("cannot read weight payload " + payload.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(pin)), std::istreambuf_iterator<char>());
  if (j.contains("payload_bytes") && j.at("payload_bytes").get<std::size_t>() != bytes.size())
    throw FormatError("weight payload size differs from the manifest");

  for (const auto& e : j.at("tensors")) {
    const auto name = e.at("name").get<std::string>();
    if (e.at("dtype") != "f32") throw FormatError("tensor " + name + " has unsupported dtype");
    Tensor t;
    t.shape = e.at("shape").get<std::vector<std::size_t>>();
    const auto offset = e.at("offset").get<std::size_t>();
    const std::size_t len = 4 * t.size();
    if (offset + len > bytes.size()) throw FormatError("tensor " + name + " runs past the payload");
    if (crc_of(bytes, offset, len) != e.at("crc32").get<std::uint32_t>())
      throw FormatError("checksum mismatch in tensor " + name);
    t.data.resize(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) t.data[k] = get_f32(bytes.data() + offset + 4 * k);
    if (!m.tensors.emplace(name, std::move(t)).second) throw FormatError("duplicate tensor " + name);
  }
  const auto specs = tensor_specs(m.hyper);
  if (m.tensors.size() != specs.size()) throw FormatError("weight file has unexpected tensors");
  m.check();
  return m;
}

ParityFixture load_parity_fixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read fixture " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(std::string("fixture is not valid JSON: ") + e.what());
  }
  auto mat = [](const json& g) {
    const auto v = g.get<std::vector<std::vector<double>>>();
    Mat m(static_cast<Eigen::Index>(v.size()), v.empty() ? 0 : static_cast<Eigen::Index>(v[0].size()));
    for (std::size_t r = 0; r < v.size(); ++r) {
      if (v[r].size() != static_cast<std::size_t>(m.cols())) throw FormatError("ragged matrix in fixture");
      for (std::size_t c = 0; c < v[r].size(); ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[r][c];
    }
    return m;
  };
  ParityFixture f;
  try {
    const auto& w = j.at("window");
    for (const auto& t : w.at("load_der")) f.window.load_der.push_back(mat(t));
    f.window.gen = mat(w.at("gen"));
    for (const auto& e : w.at("edges")) f.window.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    f.window.edge_attr = mat(w.at("edge_attr"));
    f.window.tder_node = w.at("tder_node").get<std::vector<int>>();
    if (j.contains("model"))
      f.model_path = (std::filesystem::path(path).parent_path() / j.at("model").get<std::string>()).string();
    if (j.contains("expected")) f.expected = j.at("expected").get<std::vector<double>>();
    f.tolerance = j.value("tolerance", 1e-5);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed fixture: ") + e.what());
  }
  return f;
}

}  // namespace rted::stgcn
