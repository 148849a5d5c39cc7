// SPDX-License-Identifier: Apache-2.0
//
// Canonical binary cache of an ingested dataset. Little-endian layout:
//
//   "HARCACHE" u32 version
//   str id, f64 rate, u64 channels, u64 window, u64 step, i64 null_class
//   u64 classes, then one str per class name
//   three splits (train, validation, test), each:
//     u64 recordings, then per recording:
//       str subject, str run, str provenance, f64 rate, u64 length,
//       length×channels f64 samples (row-major), length i32 labels
//
// where str is a u64 byte count followed by the bytes. Writing the same
// splits twice yields identical files.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "har/data/recording.hpp"
#include "har/errors.hpp"

namespace har {

static_assert(std::endian::native == std::endian::little,
              "the cache format is defined little-endian");

inline constexpr char kCacheMagic[8] = {'H', 'A', 'R', 'C', 'A', 'C', 'H', 'E'};
inline constexpr std::uint32_t kCacheVersion = 1;

namespace detail {

class CacheWriter {
 public:
  explicit CacheWriter(std::ostream& out) : out_(out) {}
  template <typename V>
  void pod(const V& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint64_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  template <typename V>
  void array(const std::vector<V>& v) {
    out_.write(reinterpret_cast<const char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(V)));
  }

 private:
  std::ostream& out_;
};

class CacheReader {
 public:
  explicit CacheReader(std::istream& in) : in_(in) {}
  template <typename V>
  V pod() {
    V v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    check();
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > (1u << 20)) throw DataError("cache: implausible string length");
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  template <typename V>
  std::vector<V> array(std::uint64_t n) {
    if (n > std::numeric_limits<std::uint32_t>::max() * 16ull) {
      throw DataError("cache: implausible array length");
    }
    std::vector<V> v(n);
    in_.read(reinterpret_cast<char*>(v.data()),
             static_cast<std::streamsize>(n * sizeof(V)));
    check();
    return v;
  }

 private:
  void check() {
    if (!in_) throw DataError("cache: truncated file");
  }
  std::istream& in_;
};

}  // namespace detail

inline void write_cache(std::ostream& out, const DatasetSplits& d) {
  detail::CacheWriter w(out);
  out.write(kCacheMagic, sizeof kCacheMagic);
  w.pod(kCacheVersion);
  w.str(d.id);
  w.pod(d.rate);
  w.pod(static_cast<std::uint64_t>(d.channels));
  w.pod(static_cast<std::uint64_t>(d.window));
  w.pod(static_cast<std::uint64_t>(d.step));
  w.pod(static_cast<std::int64_t>(d.null_class));
  w.pod(static_cast<std::uint64_t>(d.class_names.size()));
  for (const auto& n : d.class_names) w.str(n);
  d.for_each_split([&](const char*, const std::vector<RawRecording>& recs) {
    w.pod(static_cast<std::uint64_t>(recs.size()));
    for (const auto& r : recs) {
      r.validate();
      w.str(r.subject);
      w.str(r.run);
      w.str(r.provenance);
      w.pod(r.rate);
      w.pod(static_cast<std::uint64_t>(r.length()));
      w.array(r.samples);
      std::vector<std::int32_t> labels(r.labels.begin(), r.labels.end());
      w.array(labels);
    }
  });
  if (!out) throw DataError("cache: write failed");
}

inline DatasetSplits read_cache(std::istream& in) {
  char magic[sizeof kCacheMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCacheMagic, sizeof magic) != 0) {
    throw DataError("cache: not a dataset cache");
  }
  detail::CacheReader r(in);
  if (r.pod<std::uint32_t>() != kCacheVersion) {
    throw DataError("cache: unsupported version");
  }
  DatasetSplits d;
  d.id = r.str();
  d.rate = r.pod<double>();
  d.channels = r.pod<std::uint64_t>();
  d.window = r.pod<std::uint64_t>();
  d.step = r.pod<std::uint64_t>();
  d.null_class = static_cast<int>(r.pod<std::int64_t>());
  const auto classes = r.pod<std::uint64_t>();
  if (classes > 4096) throw DataError("cache: implausible class count");
  for (std::uint64_t c = 0; c < classes; ++c) d.class_names.push_back(r.str());
  d.for_each_split([&](const char*, std::vector<RawRecording>& recs) {
    const auto n = r.pod<std::uint64_t>();
    for (std::uint64_t k = 0; k < n; ++k) {
      RawRecording rec;
      rec.subject = r.str();
      rec.run = r.str();
      rec.provenance = r.str();
      rec.rate = r.pod<double>();
      rec.channels = d.channels;
      const auto len = r.pod<std::uint64_t>();
      rec.samples = r.array<double>(len * d.channels);
      for (std::int32_t l : r.array<std::int32_t>(len)) {
        if (l < 0 || static_cast<std::uint64_t>(l) >= classes) {
          throw DataError("cache: label out of range in " + rec.describe());
        }
        rec.labels.push_back(static_cast<std::size_t>(l));
      }
      recs.push_back(std::move(rec));
    }
  });
  return d;
}

inline void save_cache(const std::filesystem::path& file, const DatasetSplits& d) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cache: cannot write " + file.string());
  write_cache(out, d);
}

inline DatasetSplits load_cache(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cache: cannot read " + file.string());
  return read_cache(in);
}

}  // namespace har
