#include "evalign/dataset_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include <json.hpp>

#include "evalign/error.hpp"

namespace evalign::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

class Writer {
 public:
  explicit Writer(std::size_t reserve) { buf_.reserve(reserve); }

  void bytes(const char* s, std::size_t n) { buf_.insert(buf_.end(), s, s + n); }

  template <typename T>
  void le(T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf_.push_back(static_cast<std::uint8_t>(u & 0xFF));
      u = static_cast<U>(u >> 8);
    }
  }

  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }

  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }

  template <typename T>
  T le(const char* what) {
    need(sizeof(T), what);
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u = static_cast<decltype(u)>(u | (static_cast<decltype(u)>(bytes_[pos_ + i]) << (8 * i)));
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  float f32(const char* what) { return std::bit_cast<float>(le<std::uint32_t>(what)); }

  void magic(const char (&expected)[5]) {
    need(4, "magic");
    if (std::memcmp(bytes_.data(), expected, 4) != 0) {
      throw FormatError(std::string("bad magic, expected \"") + expected + "\"", 0);
    }
    pos_ = 4;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("truncated file while reading ") + what, bytes_.size());
    }
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

// ---------------------------------------------------------------------------
// Events

std::vector<std::uint8_t> encode_events(const events::EventStream& stream) {
  if (stream.width > 0xFFFF || stream.height > 0xFFFF) {
    throw ArgumentError("sensor geometry exceeds 16 bits");
  }
  if (!stream.valid()) throw ArgumentError("event stream is unsorted or out of bounds");
  Writer w(kEventHeaderSize + kEventRecordSize * stream.events.size());
  w.bytes("EVZ1", 4);
  w.le<std::uint16_t>(1);
  w.le<std::uint16_t>(static_cast<std::uint16_t>(stream.width));
  w.le<std::uint16_t>(static_cast<std::uint16_t>(stream.height));
  w.le<std::uint16_t>(0);
  w.le<std::uint32_t>(stream.duration_us);
  w.le<std::uint64_t>(stream.events.size());
  for (const auto& e : stream.events) {
    w.le<std::uint32_t>(e.t);
    w.le<std::uint16_t>(e.x);
    w.le<std::uint16_t>(e.y);
    w.le<std::uint8_t>(e.polarity > 0 ? 1 : 0);
    w.le<std::uint8_t>(0);
    w.le<std::uint16_t>(0);
  }
  return w.take();
}

events::EventStream decode_events(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.magic("EVZ1");
  const auto version = r.le<std::uint16_t>("version");
  if (version != 1) throw FormatError("unsupported event file version", 4);
  events::EventStream s;
  s.width = r.le<std::uint16_t>("width");
  s.height = r.le<std::uint16_t>("height");
  if (r.le<std::uint16_t>("reserved") != 0) throw FormatError("reserved header field not zero", 10);
  s.duration_us = r.le<std::uint32_t>("duration");
  const auto count = r.le<std::uint64_t>("count");

  const std::uint64_t payload = bytes.size() - kEventHeaderSize;
  if (count > payload / kEventRecordSize) {
    throw FormatError("truncated file: header declares " + std::to_string(count) + " events",
                      bytes.size());
  }
  if (payload != count * kEventRecordSize) {
    throw FormatError("trailing bytes after event records", kEventHeaderSize + count * kEventRecordSize);
  }

  s.events.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    events::Event e;
    e.t = r.le<std::uint32_t>("t");
    e.x = r.le<std::uint16_t>("x");
    e.y = r.le<std::uint16_t>("y");
    const auto pol = r.le<std::uint8_t>("polarity");
    const auto pad0 = r.le<std::uint8_t>("pad");
    const auto pad1 = r.le<std::uint16_t>("pad");
    if (pol > 1) throw FormatError("polarity byte must be 0 or 1", at + 8);
    if (pad0 != 0 || pad1 != 0) throw FormatError("record padding not zero", at + 9);
    e.polarity = pol ? 1 : -1;
    if (e.x >= s.width || e.y >= s.height) throw FormatError("event coordinate out of bounds", at);
    if (e.t > s.duration_us) throw FormatError("event timestamp beyond duration", at);
    if (!s.events.empty() && events::event_less(e, s.events.back())) {
      throw FormatError("event records are not sorted", at);
    }
    s.events.push_back(e);
  }
  return s;
}

void write_events(const events::EventStream& stream, const fs::path& path) {
  write_file(path, encode_events(stream));
}

events::EventStream read_events(const fs::path& path) {
  const auto bytes = read_file(path);
  return decode_events(bytes);
}

// ---------------------------------------------------------------------------
// Embeddings

std::vector<std::uint8_t> encode_embeddings(const align::EmbeddingBatch& batch) {
  if (batch.dim() > 0xFFFFFFFFull) throw ArgumentError("embedding dimension exceeds 32 bits");
  Writer w(kEmbeddingHeaderSize + 4 * batch.values().size());
  w.bytes("EMB1", 4);
  w.le<std::uint16_t>(1);
  w.le<std::uint16_t>(0);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(batch.dim()));
  w.le<std::uint64_t>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto row = batch.row(i);
    const double len = align::norm(row);
    // Rows already unit up to f32 storage error are written as they are, so
    // that rewriting a file read back from disk reproduces it bit for bit.
    if (std::isfinite(len) && std::abs(len - 1.0) <= kStoredUnitTolerance) {
      for (double v : row) w.f32(static_cast<float>(v));
    } else {
      for (double v : align::normalized(row)) w.f32(static_cast<float>(v));
    }
  }
  return w.take();
}

align::EmbeddingBatch decode_embeddings(std::span<const std::uint8_t> bytes, align::Role role) {
  Reader r(bytes);
  r.magic("EMB1");
  if (r.le<std::uint16_t>("version") != 1) throw FormatError("unsupported embedding file version", 4);
  if (r.le<std::uint16_t>("reserved") != 0) throw FormatError("reserved header field not zero", 6);
  const auto dim = r.le<std::uint32_t>("dim");
  const auto count = r.le<std::uint64_t>("count");
  if (dim == 0) throw FormatError("embedding dimension is zero", 8);

  const std::uint64_t payload = bytes.size() - kEmbeddingHeaderSize;
  const std::uint64_t row_bytes = 4ull * dim;
  if (count > payload / row_bytes) {
    throw FormatError("truncated file: header declares " + std::to_string(count) + " rows",
                      bytes.size());
  }
  if (payload != count * row_bytes) {
    throw FormatError("trailing bytes after embedding rows", kEmbeddingHeaderSize + count * row_bytes);
  }

  std::vector<double> values;
  values.reserve(count * dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    double sq = 0.0;
    for (std::uint32_t k = 0; k < dim; ++k) {
      const double v = r.f32("embedding value");
      values.push_back(v);
      sq += v * v;
    }
    const double n = std::sqrt(sq);
    if (!(std::abs(n - 1.0) <= 1e-4)) {
      throw IntegrityError("embedding row " + std::to_string(i) + " at byte offset " +
                           std::to_string(at) + " has norm " + std::to_string(n));
    }
  }
  return align::EmbeddingBatch(role, dim, std::move(values));
}

void write_embeddings(const align::EmbeddingBatch& batch, const fs::path& path) {
  write_file(path, encode_embeddings(batch));
}

align::EmbeddingBatch read_embeddings(const fs::path& path, align::Role role) {
  const auto bytes = read_file(path);
  return decode_embeddings(bytes, role);
}

// ---------------------------------------------------------------------------
// Manifest

std::string manifest_to_json(const Manifest& manifest) {
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    json j = {{"event_file", e.event_file},
              {"source_image", e.source_image},
              {"class_id", e.class_id},
              {"class_name", e.class_name}};
    if (e.image_embedding) {
      j["image_embedding_ref"] = {{"file", e.image_embedding->file},
                                  {"row", e.image_embedding->row}};
    } else {
      j["image_embedding_ref"] = nullptr;
    }
    entries.push_back(std::move(j));
  }
  json doc = {{"format", "evalign-manifest"},
              {"version", 1},
              {"dataset", manifest.dataset},
              {"seed", manifest.seed},
              {"config", json::parse(manifest.config_json)},
              {"entries", std::move(entries)}};
  return doc.dump(2) + "\n";
}

Manifest manifest_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what(), e.byte);
  }
  try {
    if (doc.at("format").get<std::string>() != "evalign-manifest" ||
        doc.at("version").get<int>() != 1) {
      throw FormatError("unsupported manifest format/version", 0);
    }
    Manifest m;
    m.dataset = doc.at("dataset").get<std::string>();
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.config_json = doc.at("config").dump();
    std::set<std::size_t> ids;
    for (const auto& j : doc.at("entries")) {
      ManifestEntry e;
      e.event_file = j.at("event_file").get<std::string>();
      e.source_image = j.at("source_image").get<std::string>();
      e.class_id = j.at("class_id").get<std::size_t>();
      e.class_name = j.at("class_name").get<std::string>();
      const auto& ref = j.at("image_embedding_ref");
      if (!ref.is_null()) {
        e.image_embedding = EmbeddingRef{ref.at("file").get<std::string>(),
                                         ref.at("row").get<std::size_t>()};
      }
      ids.insert(e.class_id);
      m.entries.push_back(std::move(e));
    }
    if (!ids.empty() && (*ids.begin() != 0 || *ids.rbegin() + 1 != ids.size())) {
      throw FormatError("class ids are not dense from 0", 0);
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest schema violation: ") + e.what(), 0);
  }
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  const std::string text = manifest_to_json(manifest);
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

Manifest read_manifest(const fs::path& path) {
  const auto bytes = read_file(path);
  Manifest m = manifest_from_json(std::string(bytes.begin(), bytes.end()));
  const fs::path base = path.parent_path();
  for (const auto& e : m.entries) {
    if (!fs::exists(base / e.event_file)) throw IoError("manifest references missing " + e.event_file);
    if (e.image_embedding && !fs::exists(base / e.image_embedding->file)) {
      throw IoError("manifest references missing " + e.image_embedding->file);
    }
  }
  return m;
}

PairedBatch load_paired_batch(const Manifest& manifest, const fs::path& base_dir,
                              std::span<const std::size_t> indices) {
  std::map<std::string, align::EmbeddingBatch> cache;
  std::optional<std::size_t> dim;
  std::vector<repr::EventFrame> frames;
  std::vector<double> values;
  std::vector<std::size_t> class_ids;
  for (std::size_t idx : indices) {
    if (idx >= manifest.entries.size()) throw ArgumentError("manifest index out of range");
    const auto& e = manifest.entries[idx];
    if (!e.image_embedding) throw ArgumentError("entry " + e.event_file + " has no image embedding");
    const fs::path event_path = base_dir / e.event_file;
    const fs::path emb_path = base_dir / e.image_embedding->file;
    if (!fs::exists(event_path)) throw IoError("missing event file " + event_path.string());
    if (!fs::exists(emb_path)) throw IoError("missing embedding file " + emb_path.string());

    auto it = cache.find(e.image_embedding->file);
    if (it == cache.end()) {
      it = cache.emplace(e.image_embedding->file, read_embeddings(emb_path)).first;
    }
    const auto& batch = it->second;
    if (dim && *dim != batch.dim()) throw ArgumentError("embedding dimension mismatch across entries");
    dim = batch.dim();
    if (e.image_embedding->row >= batch.size()) {
      throw ArgumentError("embedding row out of range for " + e.image_embedding->file);
    }
    const auto row = batch.row(e.image_embedding->row);
    values.insert(values.end(), row.begin(), row.end());
    frames.push_back(repr::to_event_frame(read_events(event_path)));
    class_ids.push_back(e.class_id);
  }
  if (!dim) throw ArgumentError("no entries selected");
  return PairedBatch{std::move(frames), align::EmbeddingBatch(align::Role::Image, *dim, std::move(values)),
                     std::move(class_ids)};
}

}  // namespace evalign::io
