#include "ddcsp/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace ddcsp {

namespace {

constexpr char kMagic[4] = {'D', 'D', 'C', 'P'};
constexpr uint32_t kVersion = 1;     // format version, bump on layout change
constexpr uint64_t kMaxElems = 1u << 28;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(void* dst, size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in_.gcount()) != n) throw CheckpointError("truncated file");
  }
  uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
  }
  uint64_t u64() {
    unsigned char b[8];
    bytes(b, 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
  }
  uint8_t u8() {
    unsigned char b;
    bytes(&b, 1);
    return b;
  }
  std::string string() {
    const uint32_t len = u32();
    if (len > (1u << 24)) throw CheckpointError("string length out of bounds");
    std::string s(len, '\0');
    if (len) bytes(s.data(), len);
    return s;
  }

 private:
  std::istream& in_;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError(path + ": cannot open for writing");
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_string(out, ckpt.model_kind);
  put_string(out, ckpt.config);
  put_u32(out, static_cast<uint32_t>(ckpt.arrays.size()));
  std::vector<float> raw;
  for (const auto& [name, mat] : ckpt.arrays) {
    put_string(out, name);
    out.put(0);  // dtype f32
    out.put(2);  // rank: everything here is a matrix
    put_u64(out, static_cast<uint64_t>(mat.rows()));
    put_u64(out, static_cast<uint64_t>(mat.cols()));
    raw.resize(static_cast<size_t>(mat.size()));
    for (Eigen::Index r = 0; r < mat.rows(); ++r) {
      for (Eigen::Index c = 0; c < mat.cols(); ++c) {
        raw[static_cast<size_t>(r * mat.cols() + c)] = mat(r, c);
      }
    }
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size() * sizeof(float)));
  }
  if (!out) throw CheckpointError(path + ": write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(path + ": cannot open");
  Reader rd(in);
  char magic[4];
  rd.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError(path + ": bad magic");
  const uint32_t version = rd.u32();
  if (version != kVersion) {
    throw CheckpointError(path + ": unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.model_kind = rd.string();
  ckpt.config = rd.string();
  const uint32_t count = rd.u32();
  if (count > (1u << 20)) throw CheckpointError(path + ": array count out of bounds");
  ckpt.arrays.reserve(count);
  std::vector<float> raw;
  for (uint32_t a = 0; a < count; ++a) {
    std::string name = rd.string();
    const uint8_t dtype = rd.u8();
    if (dtype != 0) throw CheckpointError(path + ": unsupported dtype tag");
    const uint8_t rank = rd.u8();
    if (rank != 2) throw CheckpointError(path + ": unsupported rank");
    const uint64_t rows = rd.u64();
    const uint64_t cols = rd.u64();
    if (rows == 0 || cols == 0 || rows * cols > kMaxElems) {
      throw CheckpointError(path + ": array dims out of bounds");
    }
    raw.resize(rows * cols);
    rd.bytes(raw.data(), raw.size() * sizeof(float));
    DenseMatrix<float> mat(rows, cols);
    for (uint64_t r = 0; r < rows; ++r) {
      for (uint64_t c = 0; c < cols; ++c) {
        mat(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = raw[r * cols + c];
      }
    }
    ckpt.arrays.emplace_back(std::move(name), std::move(mat));
  }
  return ckpt;
}

Checkpoint checkpoint_from_params(const ParamStore<float>& store, const std::string& model_kind,
                                  const std::string& config) {
  Checkpoint ckpt;
  ckpt.model_kind = model_kind;
  ckpt.config = config;
  for (const auto& [name, entry] : store.params) ckpt.arrays.emplace_back(name, entry.value);
  return ckpt;
}

void params_from_checkpoint(const Checkpoint& ckpt, ParamStore<float>& store) {
  for (const auto& [name, mat] : ckpt.arrays) {
    auto it = store.params.find(name);
    if (it == store.params.end()) throw CheckpointError("unexpected array: " + name);
    if (it->second.value.rows() != mat.rows() || it->second.value.cols() != mat.cols()) {
      throw CheckpointError("shape mismatch for array: " + name);
    }
    it->second.value = mat;
  }
  if (ckpt.arrays.size() != store.params.size()) {
    throw CheckpointError("array count does not match model");
  }
}

}  // namespace ddcsp
