#include "ainv/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "ainv/error.hpp"

namespace ainv {

namespace {

constexpr char kMagic[4] = {'A', 'I', 'N', 'V'};
constexpr uint32_t kVersion = 1;
constexpr uint8_t kDtypeF32 = 0;

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(os, v);
}

struct Reader {
  std::ifstream in;
  uint64_t offset = 0;

  explicit Reader(const std::string& path) : in(path, std::ios::binary) {
    if (!in) throw FormatError("checkpoint: cannot open '" + path + "'");
  }

  void read(void* dst, size_t n, const char* what) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n)
      throw FormatError("checkpoint: truncated while reading " +
                        std::string(what) + " at offset " +
                        std::to_string(offset));
    offset += n;
  }

  uint32_t u32(const char* what) {
    unsigned char b[4];
    read(b, 4, what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
  }

  uint8_t u8(const char* what) {
    unsigned char b;
    read(&b, 1, what);
    return b;
  }
};

}  // namespace

void save_checkpoint(
    const std::string& path,
    const std::vector<std::pair<std::string, const Tensor*>>& entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("checkpoint: cannot write '" + path + "'");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<uint32_t>(entries.size()));
  for (const auto& [name, tensor] : entries) {
    put_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(static_cast<char>(kDtypeF32));
    os.put(static_cast<char>(tensor->rank()));
    for (int i = 0; i < tensor->rank(); ++i)
      put_u32(os, static_cast<uint32_t>(tensor->dim(i)));
    for (const float f : tensor->data) put_f32(os, f);
  }
  if (!os) throw FormatError("checkpoint: write failed for '" + path + "'");
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.read(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic at offset 0 in '" + path + "'");
  const uint32_t version = r.u32("version");
  if (version != kVersion)
    throw FormatError("checkpoint: unsupported version " +
                      std::to_string(version) + " at offset 4");
  const uint32_t count = r.u32("entry count");

  std::map<std::string, Tensor> out;
  for (uint32_t e = 0; e < count; ++e) {
    const uint32_t name_len = r.u32("name length");
    if (name_len > 4096)
      throw FormatError("checkpoint: implausible name length at offset " +
                        std::to_string(r.offset - 4));
    std::string name(name_len, '\0');
    r.read(name.data(), name_len, "name");
    const uint8_t dtype = r.u8("dtype");
    if (dtype != kDtypeF32)
      throw FormatError("checkpoint: unknown dtype code " +
                        std::to_string(dtype) + " at offset " +
                        std::to_string(r.offset - 1));
    const uint8_t rank = r.u8("rank");
    std::vector<int64_t> dims;
    int64_t numel = 1;
    for (uint8_t i = 0; i < rank; ++i) {
      const uint32_t d = r.u32("dimension");
      if (d == 0)
        throw FormatError("checkpoint: zero dimension at offset " +
                          std::to_string(r.offset - 4));
      dims.push_back(static_cast<int64_t>(d));
      numel *= d;
    }
    std::vector<float> data(static_cast<size_t>(numel));
    r.read(data.data(), static_cast<size_t>(numel) * 4, "tensor data");
    out.emplace(std::move(name), Tensor(std::move(dims), std::move(data)));
  }
  return out;
}

}  // namespace ainv
