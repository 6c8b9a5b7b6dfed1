#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ast/heterograph.hpp"
#include "ast/tensor.hpp"

namespace ast {

// Manifest + single binary data file, shared by MSEQ datasets and model
// checkpoints. The manifest is UTF-8 "key: value" lines; blobs are declared
// as "blob.<name>: offset <o> dtype <f32|i32> rows <r> cols <c> crc32 <hex>"
// and stored little-endian, row-major, back to back in the data file.
class BlobWriter {
 public:
  void set(const std::string& key, const std::string& value);
  void set_int(const std::string& key, int64_t v);
  void set_double(const std::string& key, double v);
  void add_f32(const std::string& name, const Tensor<float>& t);
  void add_i32(const std::string& name, const std::vector<int32_t>& v, int64_t cols);
  // Writes <dir>/<manifest_name> and <dir>/<data_name>; creates dir.
  void write(const std::string& dir, const std::string& manifest_name,
             const std::string& data_name) const;

 private:
  struct Blob {
    std::string name;
    char dtype;  // 'f' or 'i'
    int64_t rows, cols;
    std::vector<char> bytes;
    uint32_t crc;
  };
  std::vector<std::pair<std::string, std::string>> kv_;
  std::vector<Blob> blobs_;
};

class BlobReader {
 public:
  // Reads <dir>/<manifest_name>, opens the declared data file, checks sizes
  // and per-blob CRC32.
  BlobReader(const std::string& dir, const std::string& manifest_name);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool has_blob(const std::string& name) const;
  Tensor<float> read_f32(const std::string& name) const;
  std::vector<int32_t> read_i32(const std::string& name) const;
  int64_t blob_rows(const std::string& name) const;

 private:
  struct BlobRef {
    int64_t offset, rows, cols;
    char dtype;
    uint32_t crc;
  };
  const BlobRef& ref(const std::string& name) const;
  std::map<std::string, std::string> kv_;
  std::map<std::string, BlobRef> blobs_;
  std::vector<char> data_;
};

// MSEQ dataset I/O. save writes <dir>/manifest.mseq + <dir>/data.bin;
// load validates all invariants before returning.
void save_dataset(const SequenceDataset& ds, const std::string& dir);
SequenceDataset load_dataset(const std::string& dir);

std::string schema_to_string(const std::vector<Field>& fs);
std::vector<Field> schema_from_string(const std::string& s);

}  // namespace ast
