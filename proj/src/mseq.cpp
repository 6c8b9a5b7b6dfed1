#include "ast/mseq.hpp"

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ast/error.hpp"

namespace ast {

namespace {

uint32_t crc32_of(const char* data, size_t n) {
  return static_cast<uint32_t>(::crc32(0L, reinterpret_cast<const Bytef*>(data),
                                       static_cast<uInt>(n)));
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void BlobWriter::set(const std::string& key, const std::string& value) {
  kv_.emplace_back(key, value);
}
void BlobWriter::set_int(const std::string& key, int64_t v) { set(key, std::to_string(v)); }
void BlobWriter::set_double(const std::string& key, double v) { set(key, fmt_double(v)); }

void BlobWriter::add_f32(const std::string& name, const Tensor<float>& t) {
  Blob b;
  b.name = name;
  b.dtype = 'f';
  b.rows = t.rows();
  b.cols = t.cols();
  b.bytes.resize(t.data.size() * sizeof(float));
  std::memcpy(b.bytes.data(), t.data.data(), b.bytes.size());
  b.crc = crc32_of(b.bytes.data(), b.bytes.size());
  blobs_.push_back(std::move(b));
}

void BlobWriter::add_i32(const std::string& name, const std::vector<int32_t>& v, int64_t cols) {
  Blob b;
  b.name = name;
  b.dtype = 'i';
  require(cols > 0 && static_cast<int64_t>(v.size()) % cols == 0, "save", "bad i32 blob shape");
  b.rows = static_cast<int64_t>(v.size()) / cols;
  b.cols = cols;
  b.bytes.resize(v.size() * sizeof(int32_t));
  std::memcpy(b.bytes.data(), v.data(), b.bytes.size());
  b.crc = crc32_of(b.bytes.data(), b.bytes.size());
  blobs_.push_back(std::move(b));
}

void BlobWriter::write(const std::string& dir, const std::string& manifest_name,
                       const std::string& data_name) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  int64_t total = 0;
  for (const auto& b : blobs_) total += static_cast<int64_t>(b.bytes.size());

  std::ostringstream man;
  for (const auto& [k, v] : kv_) man << k << ": " << v << "\n";
  man << "data_file: " << data_name << "\n";
  man << "data_bytes: " << total << "\n";
  int64_t offset = 0;
  for (const auto& b : blobs_) {
    char crc_hex[16];
    std::snprintf(crc_hex, sizeof crc_hex, "%08x", b.crc);
    man << "blob." << b.name << ": offset " << offset << " dtype " << (b.dtype == 'f' ? "f32" : "i32")
        << " rows " << b.rows << " cols " << b.cols << " crc32 " << crc_hex << "\n";
    offset += static_cast<int64_t>(b.bytes.size());
  }

  const std::string man_path = dir + "/" + manifest_name;
  std::ofstream mf(man_path, std::ios::binary | std::ios::trunc);
  require(mf.good(), "save", "unwritable path " + man_path);
  mf << man.str();
  require(mf.good(), "save", "write failed: " + man_path);

  const std::string data_path = dir + "/" + data_name;
  std::ofstream df(data_path, std::ios::binary | std::ios::trunc);
  require(df.good(), "save", "unwritable path " + data_path);
  for (const auto& b : blobs_) df.write(b.bytes.data(), static_cast<std::streamsize>(b.bytes.size()));
  require(df.good(), "save", "write failed: " + data_path);
}

BlobReader::BlobReader(const std::string& dir, const std::string& manifest_name) {
  const std::string man_path = dir + "/" + manifest_name;
  std::ifstream mf(man_path, std::ios::binary);
  require(mf.good(), "load", "missing file " + man_path);
  std::string line;
  while (std::getline(mf, line)) {
    if (line.empty()) continue;
    const size_t sep = line.find(": ");
    require(sep != std::string::npos, "load", "malformed manifest line: " + line);
    const std::string key = line.substr(0, sep);
    const std::string value = line.substr(sep + 2);
    if (key.rfind("blob.", 0) == 0) {
      std::istringstream ss(value);
      std::string w_offset, w_dtype, w_rows, w_cols, w_crc, dtype, crc_hex;
      BlobRef r{};
      ss >> w_offset >> r.offset >> w_dtype >> dtype >> w_rows >> r.rows >> w_cols >> r.cols >>
          w_crc >> crc_hex;
      require(!ss.fail() && w_offset == "offset" && w_dtype == "dtype" && w_rows == "rows" &&
                  w_cols == "cols" && w_crc == "crc32",
              "load", "malformed blob declaration: " + line);
      require(dtype == "f32" || dtype == "i32", "load", "unknown dtype " + dtype);
      r.dtype = dtype[0] == 'f' ? 'f' : 'i';
      r.crc = static_cast<uint32_t>(std::stoul(crc_hex, nullptr, 16));
      blobs_[key.substr(5)] = r;
    } else {
      kv_[key] = value;
    }
  }

  const std::string data_path = dir + "/" + get("data_file");
  std::ifstream df(data_path, std::ios::binary);
  require(df.good(), "load", "missing file " + data_path);
  df.seekg(0, std::ios::end);
  const int64_t size = static_cast<int64_t>(df.tellg());
  require(size == get_int("data_bytes"), "load", "data file size does not match manifest");
  df.seekg(0);
  data_.resize(static_cast<size_t>(size));
  df.read(data_.data(), size);
  require(df.good(), "load", "short read on " + data_path);

  for (const auto& [name, r] : blobs_) {
    const int64_t bytes = r.rows * r.cols * 4;
    require(r.offset >= 0 && r.offset + bytes <= size, "load", "blob out of bounds: " + name);
    require(crc32_of(data_.data() + r.offset, static_cast<size_t>(bytes)) == r.crc, "load",
            "checksum mismatch in blob " + name);
  }
}

bool BlobReader::has(const std::string& key) const { return kv_.count(key) > 0; }

const std::string& BlobReader::get(const std::string& key) const {
  auto it = kv_.find(key);
  require(it != kv_.end(), "load", "manifest key missing: " + key);
  return it->second;
}

int64_t BlobReader::get_int(const std::string& key) const { return std::stoll(get(key)); }
double BlobReader::get_double(const std::string& key) const { return std::stod(get(key)); }
bool BlobReader::has_blob(const std::string& name) const { return blobs_.count(name) > 0; }

const BlobReader::BlobRef& BlobReader::ref(const std::string& name) const {
  auto it = blobs_.find(name);
  require(it != blobs_.end(), "load", "blob missing: " + name);
  return it->second;
}

Tensor<float> BlobReader::read_f32(const std::string& name) const {
  const BlobRef& r = ref(name);
  require(r.dtype == 'f', "load", "blob " + name + " is not f32");
  Tensor<float> t({r.rows, r.cols});
  std::memcpy(t.data.data(), data_.data() + r.offset, t.data.size() * sizeof(float));
  return t;
}

std::vector<int32_t> BlobReader::read_i32(const std::string& name) const {
  const BlobRef& r = ref(name);
  require(r.dtype == 'i', "load", "blob " + name + " is not i32");
  std::vector<int32_t> v(static_cast<size_t>(r.rows * r.cols));
  std::memcpy(v.data(), data_.data() + r.offset, v.size() * sizeof(int32_t));
  return v;
}

int64_t BlobReader::blob_rows(const std::string& name) const { return ref(name).rows; }

std::string schema_to_string(const std::vector<Field>& fs) {
  std::string s;
  for (size_t i = 0; i < fs.size(); ++i) {
    if (i) s += " ";
    s += field_name(fs[i]);
  }
  return s.empty() ? "-" : s;
}

std::vector<Field> schema_from_string(const std::string& s) {
  std::vector<Field> fs;
  if (s == "-") return fs;
  std::istringstream ss(s);
  std::string name;
  while (ss >> name) fs.push_back(parse_field(name));
  return fs;
}

void save_dataset(const SequenceDataset& ds, const std::string& dir) {
  require(!ds.seqs.empty(), "save", "empty sequence list");
  validate_dataset(ds);
  BlobWriter w;
  w.set_int("mseq_version", 1);
  w.set("schema.regime", ds.schema.regime == Regime::QuasiStatic ? "quasi_static" : "dynamic");
  w.set_int("schema.history", ds.schema.history);
  w.set("schema.mesh_input", schema_to_string(ds.schema.mesh_input));
  w.set("schema.elem_input", schema_to_string(ds.schema.elem_input));
  w.set("schema.mesh_target", schema_to_string(ds.schema.mesh_target));
  w.set("schema.elem_target", schema_to_string(ds.schema.elem_target));
  {
    std::string box;
    for (int a = 0; a < 3; ++a) box += fmt_double(ds.domain_box.lo[a]) + " ";
    for (int a = 0; a < 3; ++a) box += fmt_double(ds.domain_box.hi[a]) + (a < 2 ? " " : "");
    w.set("domain_box", box);
  }
  w.set_double("margin", ds.margin);
  w.set_int("sequences", static_cast<int64_t>(ds.seqs.size()));
  for (size_t i = 0; i < ds.seqs.size(); ++i) {
    const Sequence& s = ds.seqs[i];
    const std::string p = "seq." + std::to_string(i) + ".";
    w.set_int(p + "frames", s.n_frames);
    w.set_int(p + "mesh_nodes", s.n_mesh);
    w.set_int(p + "elem_nodes", s.n_elem);
    w.set_int(p + "m2m_edges", static_cast<int64_t>(s.m2m_send.size()));
    w.set_int(p + "e2m_edges", static_cast<int64_t>(s.e2m_send.size()));
    const std::string b = "seq" + std::to_string(i) + ".";
    w.add_f32(b + "positions", s.positions);
    w.add_i32(b + "node_type", s.node_type, 1);
    std::vector<int32_t> m2m(s.m2m_send.size() * 2), e2m(s.e2m_send.size() * 2);
    for (size_t e = 0; e < s.m2m_send.size(); ++e) {
      m2m[2 * e] = s.m2m_send[e];
      m2m[2 * e + 1] = s.m2m_recv[e];
    }
    for (size_t e = 0; e < s.e2m_send.size(); ++e) {
      e2m[2 * e] = s.e2m_send[e];
      e2m[2 * e + 1] = s.e2m_recv[e];
    }
    w.add_i32(b + "m2m", m2m, 2);
    w.add_i32(b + "e2m", e2m, 2);
    if (!s.mesh_material.data.empty()) w.add_f32(b + "mesh_material", s.mesh_material);
    if (!s.elem_material.data.empty()) w.add_f32(b + "elem_material", s.elem_material);
    if (!s.stress.data.empty()) w.add_f32(b + "stress", s.stress);
  }
  w.write(dir, "manifest.mseq", "data.bin");
}

SequenceDataset load_dataset(const std::string& dir) {
  BlobReader r(dir, "manifest.mseq");
  require(r.get_int("mseq_version") == 1, "load", "unsupported mseq version");
  SequenceDataset ds;
  const std::string regime = r.get("schema.regime");
  require(regime == "quasi_static" || regime == "dynamic", "load", "unknown regime " + regime);
  ds.schema.regime = regime == "quasi_static" ? Regime::QuasiStatic : Regime::Dynamic;
  ds.schema.history = static_cast<int32_t>(r.get_int("schema.history"));
  ds.schema.mesh_input = schema_from_string(r.get("schema.mesh_input"));
  ds.schema.elem_input = schema_from_string(r.get("schema.elem_input"));
  ds.schema.mesh_target = schema_from_string(r.get("schema.mesh_target"));
  ds.schema.elem_target = schema_from_string(r.get("schema.elem_target"));
  {
    std::istringstream ss(r.get("domain_box"));
    for (int a = 0; a < 3; ++a) ss >> ds.domain_box.lo[a];
    for (int a = 0; a < 3; ++a) ss >> ds.domain_box.hi[a];
    require(!ss.fail(), "load", "malformed domain_box");
  }
  ds.margin = r.get_double("margin");
  const int64_t n_seq = r.get_int("sequences");
  require(n_seq > 0, "load", "empty sequence list");
  for (int64_t i = 0; i < n_seq; ++i) {
    const std::string p = "seq." + std::to_string(i) + ".";
    const std::string b = "seq" + std::to_string(i) + ".";
    Sequence s;
    s.n_frames = r.get_int(p + "frames");
    s.n_mesh = r.get_int(p + "mesh_nodes");
    s.n_elem = r.get_int(p + "elem_nodes");
    s.positions = r.read_f32(b + "positions");
    require(s.positions.rows() == s.n_frames * s.n_mesh, "load",
            "topology mismatch: positions rows != frames * mesh_nodes in seq " + std::to_string(i));
    s.node_type = r.read_i32(b + "node_type");
    auto edges = r.read_i32(b + "m2m");
    require(static_cast<int64_t>(edges.size()) == 2 * r.get_int(p + "m2m_edges"), "load",
            "m2m edge count mismatch");
    for (size_t e = 0; e + 1 < edges.size(); e += 2) {
      s.m2m_send.push_back(edges[e]);
      s.m2m_recv.push_back(edges[e + 1]);
    }
    edges = r.read_i32(b + "e2m");
    require(static_cast<int64_t>(edges.size()) == 2 * r.get_int(p + "e2m_edges"), "load",
            "e2m edge count mismatch");
    for (size_t e = 0; e + 1 < edges.size(); e += 2) {
      s.e2m_send.push_back(edges[e]);
      s.e2m_recv.push_back(edges[e + 1]);
    }
    if (r.has_blob(b + "mesh_material")) s.mesh_material = r.read_f32(b + "mesh_material");
    if (r.has_blob(b + "elem_material")) s.elem_material = r.read_f32(b + "elem_material");
    if (r.has_blob(b + "stress")) s.stress = r.read_f32(b + "stress");
    ds.seqs.push_back(std::move(s));
  }
  validate_dataset(ds);
  return ds;
}

}  // namespace ast
