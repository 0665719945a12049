#include "ainv/dataio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "ainv/error.hpp"
#include "ainv/rng.hpp"

namespace ainv {

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

void normalize_epoch(Tensor& X) {
  require_rank(X, 2, "normalize_epoch");
  if (!X.all_finite())
    throw ArgumentError("normalize_epoch: input contains non-finite values");
  const int64_t channels = X.dim(0), samples = X.dim(1);
  for (int64_t c = 0; c < channels; ++c) {
    float* row = X.ptr() + c * samples;
    double sum = 0, max_in = 0;
    for (int64_t t = 0; t < samples; ++t) {
      sum += static_cast<double>(row[t]);
      max_in = std::max(max_in, std::fabs(static_cast<double>(row[t])));
    }
    double mean = sum / static_cast<double>(samples);
    // An already-centered channel keeps its exact bits: residual means below
    // float rounding are treated as zero, making the map idempotent.
    if (std::fabs(mean) <= 1e-7 * max_in) mean = 0.0;
    if (mean != 0.0) {
      for (int64_t t = 0; t < samples; ++t)
        row[t] = static_cast<float>(static_cast<double>(row[t]) - mean);
    }
    float max_abs = 0.0f;
    for (int64_t t = 0; t < samples; ++t)
      max_abs = std::max(max_abs, std::fabs(row[t]));
    if (max_abs == 0.0f) continue;  // constant channel -> all zero
    if (max_abs != 1.0f) {
      for (int64_t t = 0; t < samples; ++t) row[t] /= max_abs;
    }
  }
}

void normalize_dataset(Dataset& ds) {
  if (ds.header.normalized) return;
  for (auto& rec : ds.records) normalize_epoch(rec.signal);
  ds.header.normalized = true;
}

// ---------------------------------------------------------------------------
// file format
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'E', 'E', 'G', 'B'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  put_u32(os, static_cast<uint32_t>(v));
  put_u32(os, static_cast<uint32_t>(v >> 32));
}

void put_u16(std::ostream& os, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
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
    if (!in) throw FormatError("dataset: cannot open '" + path + "'");
  }

  void read(void* dst, size_t n, const char* what) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n)
      throw FormatError("dataset: truncated while reading " +
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

  uint64_t u64(const char* what) {
    const uint64_t lo = u32(what);
    const uint64_t hi = u32(what);
    return lo | (hi << 32);
  }

  uint16_t u16(const char* what) {
    unsigned char b[2];
    read(b, 2, what);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
  }

  uint8_t u8(const char* what) {
    unsigned char b;
    read(&b, 1, what);
    return b;
  }

  float f32(const char* what) {
    const uint32_t v = u32(what);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }
};

void check_header(const DatasetHeader& h) {
  if (h.channels < 1 || h.samples < 1 || h.subjects < 1 || h.sessions < 1)
    throw ConfigError("dataset header fields must be positive");
  if (h.subjects > 65535 || h.sessions > 65535)
    throw ConfigError("dataset: subject/session cardinality exceeds u16");
}

}  // namespace

void write_dataset(const std::string& path, const Dataset& ds) {
  check_header(ds.header);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("dataset: cannot write '" + path + "'");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<uint32_t>(ds.header.channels));
  put_u32(os, static_cast<uint32_t>(ds.header.samples));
  put_u32(os, static_cast<uint32_t>(ds.header.subjects));
  put_u32(os, static_cast<uint32_t>(ds.header.sessions));
  put_f32(os, ds.header.sample_rate_hz);
  put_u64(os, ds.records.size());
  os.put(ds.header.normalized ? '\1' : '\0');

  const int64_t numel =
      static_cast<int64_t>(ds.header.channels) * ds.header.samples;
  for (const auto& rec : ds.records) {
    if (rec.subject < 0 || rec.subject >= ds.header.subjects ||
        rec.session < 0 || rec.session >= ds.header.sessions)
      throw FormatError("dataset: record label out of declared range");
    if (rec.signal.numel() != numel)
      throw DimensionError("dataset: record signal shape mismatch");
    put_u16(os, static_cast<uint16_t>(rec.subject));
    put_u16(os, static_cast<uint16_t>(rec.session));
    os.write(reinterpret_cast<const char*>(rec.signal.ptr()),
             static_cast<std::streamsize>(numel) * 4);
  }
  if (!os) throw FormatError("dataset: write failed for '" + path + "'");
}

Dataset read_dataset(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.read(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("dataset: bad magic at offset 0 in '" + path + "'");
  const uint32_t version = r.u32("version");
  if (version != kVersion)
    throw FormatError("dataset: unsupported version " +
                      std::to_string(version) + " at offset 4");

  Dataset ds;
  ds.header.channels = static_cast<int>(r.u32("channel count"));
  ds.header.samples = static_cast<int>(r.u32("sample count"));
  ds.header.subjects = static_cast<int>(r.u32("subject count"));
  ds.header.sessions = static_cast<int>(r.u32("session count"));
  ds.header.sample_rate_hz = r.f32("sample rate");
  const uint64_t n_epochs = r.u64("epoch count");
  ds.header.normalized = r.u8("normalized flag") != 0;
  check_header(ds.header);

  const int64_t numel =
      static_cast<int64_t>(ds.header.channels) * ds.header.samples;
  ds.records.reserve(n_epochs);
  for (uint64_t i = 0; i < n_epochs; ++i) {
    EpochRecord rec;
    rec.subject = r.u16("subject label");
    rec.session = r.u16("session label");
    if (rec.subject >= ds.header.subjects)
      throw FormatError("dataset: subject ID out of range at offset " +
                        std::to_string(r.offset - 4));
    if (rec.session >= ds.header.sessions)
      throw FormatError("dataset: session ID out of range at offset " +
                        std::to_string(r.offset - 2));
    std::vector<float> data(static_cast<size_t>(numel));
    r.read(data.data(), static_cast<size_t>(numel) * 4, "epoch payload");
    rec.signal = Tensor({ds.header.channels, ds.header.samples},
                        std::move(data));
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// splits
// ---------------------------------------------------------------------------

namespace {

Dataset subset(const Dataset& ds, const std::vector<size_t>& indices) {
  Dataset out;
  out.header = ds.header;
  out.records.reserve(indices.size());
  for (const size_t i : indices) out.records.push_back(ds.records[i]);
  return out;
}

// Proportional allocation; the train share absorbs the rounding remainder.
std::array<size_t, 3> allocate(size_t n, double val_frac, double test_frac) {
  const auto n_test = static_cast<size_t>(
      std::llround(test_frac * static_cast<double>(n)));
  const auto n_val = static_cast<size_t>(
      std::llround(val_frac * static_cast<double>(n)));
  if (n_test + n_val > n) return {0, std::min(n_val, n), n - std::min(n_val, n)};
  return {n - n_val - n_test, n_val, n_test};
}

}  // namespace

WithinSessionSplit split_within_session(const Dataset& ds, int session,
                                        uint64_t seed) {
  std::vector<std::vector<size_t>> per_subject(
      static_cast<size_t>(ds.header.subjects));
  bool session_seen = false;
  for (size_t i = 0; i < ds.records.size(); ++i) {
    if (ds.records[i].session != session) continue;
    session_seen = true;
    per_subject[static_cast<size_t>(ds.records[i].subject)].push_back(i);
  }
  if (!session_seen)
    throw ArgumentError("split_within_session: session " +
                        std::to_string(session) + " has no epochs");

  const Rng root = Rng(seed).substream("split_within");
  std::vector<size_t> train_idx, val_idx, test_idx;
  for (size_t s = 0; s < per_subject.size(); ++s) {
    auto& idx = per_subject[s];
    if (idx.empty()) continue;
    Rng rng = root.substream(static_cast<uint64_t>(s));
    rng.shuffle(idx);
    const auto [n_train, n_val, n_test] = allocate(idx.size(), 0.10, 0.20);
    train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + n_train);
    val_idx.insert(val_idx.end(), idx.begin() + n_train,
                   idx.begin() + n_train + n_val);
    test_idx.insert(test_idx.end(), idx.begin() + n_train + n_val, idx.end());
  }
  return {subset(ds, train_idx), subset(ds, val_idx), subset(ds, test_idx)};
}

LosoSplit split_loso(const Dataset& ds, int test_session, uint64_t seed) {
  if (ds.header.sessions < 2)
    throw ArgumentError("split_loso: needs at least 2 sessions");
  if (test_session < 0 || test_session >= ds.header.sessions)
    throw ArgumentError("split_loso: unknown session " +
                        std::to_string(test_session));

  LosoSplit out;
  int next_label = 0;
  for (int r = 0; r < ds.header.sessions; ++r)
    if (r != test_session) out.session_label_map[r] = next_label++;

  // (subject, session) strata over the non-test pool.
  std::map<std::pair<int, int>, std::vector<size_t>> strata;
  std::vector<size_t> test_idx;
  for (size_t i = 0; i < ds.records.size(); ++i) {
    const auto& rec = ds.records[i];
    if (rec.session == test_session)
      test_idx.push_back(i);
    else
      strata[{rec.subject, rec.session}].push_back(i);
  }

  const Rng root = Rng(seed).substream("split_loso");
  std::vector<size_t> train_idx, val_idx;
  for (auto& [key, idx] : strata) {
    Rng rng = root.substream(static_cast<uint64_t>(key.first))
                  .substream(static_cast<uint64_t>(key.second));
    rng.shuffle(idx);
    const auto n_val = static_cast<size_t>(
        std::llround(0.20 * static_cast<double>(idx.size())));
    const size_t n_train = idx.size() - n_val;
    train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + n_train);
    val_idx.insert(val_idx.end(), idx.begin() + n_train, idx.end());
  }

  out.train = subset(ds, train_idx);
  out.val = subset(ds, val_idx);
  out.test = subset(ds, test_idx);
  return out;
}

}  // namespace ainv
