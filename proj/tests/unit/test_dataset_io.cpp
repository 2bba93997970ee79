#include <gtest/gtest.h>

#include <cstring>
#include <functional>
#include <numeric>
#include <json.hpp>

#include "evalign/dataset_io.hpp"
#include "evalign/error.hpp"
#include "evalign/world.hpp"
#include "test_support.hpp"

namespace evalign::io {
namespace {

using events::EventStream;
using testing::TempDir;

EventStream random_stream(Rng& rng) {
  const std::size_t w = 1 + rng.index(300), h = 1 + rng.index(300);
  EventStream s{w, h, static_cast<std::uint32_t>(rng.index(1u << 31)), {}};
  const std::size_t n = rng.index(500);
  for (std::size_t i = 0; i < n; ++i) {
    s.events.push_back({static_cast<std::uint32_t>(rng.index(std::uint64_t{s.duration_us} + 1)),
                        static_cast<std::uint16_t>(rng.index(w)), static_cast<std::uint16_t>(rng.index(h)),
                        static_cast<std::int8_t>(rng.index(2) ? 1 : -1)});
  }
  std::sort(s.events.begin(), s.events.end(), events::event_less);
  return s;
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t offset_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.offset();
  }
  ADD_FAILURE() << "expected FormatError";
  return ~0ull;
}

TEST(EventFile, EmptyStreamIsHeaderOnly) {
  const EventStream s{4, 3, 1000, {}};
  const auto bytes = encode_events(s);
  ASSERT_EQ(bytes.size(), kEventHeaderSize);
  EXPECT_EQ(std::memcmp(bytes.data(), "EVZ1", 4), 0);
  EXPECT_EQ(decode_events(bytes), s);
}

TEST(EventFile, LayoutOfOneRecord) {
  const EventStream s{300, 200, 70000, {{65537, 258, 3, 1}}};
  const auto b = encode_events(s);
  ASSERT_EQ(b.size(), kEventHeaderSize + kEventRecordSize);
  EXPECT_EQ(b[4], 1);  // version
  EXPECT_EQ(b[6] | (b[7] << 8), 300);
  EXPECT_EQ(b[8] | (b[9] << 8), 200);
  EXPECT_EQ(b[12] | (b[13] << 8) | (b[14] << 16), 70000);
  EXPECT_EQ(b[16], 1);  // count
  const std::uint8_t* r = b.data() + kEventHeaderSize;
  EXPECT_EQ(r[0] | (r[1] << 8) | (r[2] << 16), 65537);
  EXPECT_EQ(r[4] | (r[5] << 8), 258);
  EXPECT_EQ(r[6] | (r[7] << 8), 3);
  EXPECT_EQ(r[8], 1);
  EXPECT_EQ(r[9] | r[10] | r[11], 0);
}

TEST(EventFile, RandomRoundTripsAreBitExact) {
  Rng rng(1);
  TempDir dir("evz");
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_stream(rng);
    const auto bytes = encode_events(s);
    EXPECT_EQ(bytes.size(), kEventHeaderSize + kEventRecordSize * s.events.size());
    ASSERT_EQ(decode_events(bytes), s);
    write_events(s, dir / "a.evz");
    ASSERT_EQ(read_events(dir / "a.evz"), s);
    EXPECT_EQ(testing::read_bytes(dir / "a.evz"), bytes);
  }
}

TEST(EventFile, BadMagicReportedAtOffsetZero) {
  auto b = encode_events({2, 2, 10, {{1, 1, 1, 1}}});
  std::memcpy(b.data(), "XXXX", 4);
  EXPECT_EQ(offset_of([&] { decode_events(b); }), 0u);
}

TEST(EventFile, TruncationIsLocated) {
  const auto b = encode_events({2, 2, 10, {{1, 1, 1, 1}, {2, 0, 0, -1}}});
  for (std::size_t len : {std::size_t{0}, std::size_t{3}, std::size_t{10}, std::size_t{23}}) {
    std::vector<std::uint8_t> cut(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(len));
    EXPECT_THROW(decode_events(cut), FormatError) << len;
  }
  std::vector<std::uint8_t> cut(b.begin(), b.end() - 5);
  EXPECT_EQ(offset_of([&] { decode_events(cut); }), cut.size());
}

TEST(EventFile, HugeCountDoesNotAllocate) {
  auto b = encode_events({2, 2, 10, {}});
  for (int i = 0; i < 8; ++i) b[16 + i] = 0xff;
  EXPECT_THROW(decode_events(b), FormatError);
}

TEST(EventFile, TrailingBytesRejected) {
  auto b = encode_events({2, 2, 10, {{1, 1, 1, 1}}});
  b.push_back(0);
  EXPECT_EQ(offset_of([&] { decode_events(b); }), kEventHeaderSize + kEventRecordSize);
}

TEST(EventFile, RecordDefectsAreLocated) {
  const EventStream s{4, 4, 100, {{1, 1, 1, 1}, {5, 2, 2, -1}}};
  const std::size_t second = kEventHeaderSize + kEventRecordSize;

  auto unsorted = encode_events(s);
  put_u32(unsorted, second, 0);  // t goes backwards
  EXPECT_EQ(offset_of([&] { decode_events(unsorted); }), second);

  auto out_of_bounds = encode_events(s);
  out_of_bounds[second + 4] = 9;  // x = 9 on a 4-wide sensor
  EXPECT_EQ(offset_of([&] { decode_events(out_of_bounds); }), second);

  auto late = encode_events(s);
  put_u32(late, second, 101);
  EXPECT_EQ(offset_of([&] { decode_events(late); }), second);

  auto polarity = encode_events(s);
  polarity[second + 8] = 2;
  EXPECT_EQ(offset_of([&] { decode_events(polarity); }), second + 8);

  auto pad = encode_events(s);
  pad[second + 10] = 1;
  EXPECT_THROW(decode_events(pad), FormatError);

  auto version = encode_events(s);
  version[4] = 2;
  EXPECT_EQ(offset_of([&] { decode_events(version); }), 4u);
}

TEST(EventFile, MissingFileIsIoError) {
  TempDir dir("evz");
  EXPECT_THROW(read_events(dir / "none.evz"), IoError);
}

TEST(EmbeddingFile, SingleUnitVector) {
  const auto batch = align::EmbeddingBatch::from_rows(align::Role::Image, {{1, 0, 0, 0}});
  const auto bytes = encode_embeddings(batch);
  EXPECT_EQ(bytes.size(), kEmbeddingHeaderSize + 16);
  EXPECT_EQ(std::memcmp(bytes.data(), "EMB1", 4), 0);
  EXPECT_EQ(decode_embeddings(bytes), batch);
}

TEST(EmbeddingFile, ZeroRowRejectedByWriter) {
  const auto batch = align::EmbeddingBatch::from_rows(align::Role::Image, {{1, 0}, {0, 0}});
  EXPECT_THROW(encode_embeddings(batch), ArgumentError);
}

TEST(EmbeddingFile, ThousandRandomRowsRoundTripExactly) {
  Rng rng(2);
  const auto batch = testing::random_batch(rng, align::Role::Text, 1000, 24);
  const auto bytes = encode_embeddings(batch);
  const auto back = decode_embeddings(bytes, align::Role::Text);
  ASSERT_EQ(back.size(), 1000u);
  ASSERT_EQ(back.dim(), 24u);
  EXPECT_EQ(back.role(), align::Role::Text);
  double max_err = 0.0;
  for (std::size_t i = 0; i < batch.values().size(); ++i) {
    const float narrowed = static_cast<float>(batch.values()[i]);
    max_err = std::max(max_err, std::abs(back.values()[i] - static_cast<double>(narrowed)));
  }
  EXPECT_EQ(max_err, 0.0);
  EXPECT_EQ(encode_embeddings(back), bytes);
  EXPECT_TRUE(back.is_normalized(1e-5));
}

TEST(EmbeddingFile, WriterNormalizesRows) {
  const auto batch = align::EmbeddingBatch::from_rows(align::Role::Image, {{3, 4}});
  const auto back = decode_embeddings(encode_embeddings(batch));
  EXPECT_FLOAT_EQ(static_cast<float>(back.row(0)[0]), 0.6f);
  EXPECT_FLOAT_EQ(static_cast<float>(back.row(0)[1]), 0.8f);
}

TEST(EmbeddingFile, StoredRowsAreAFixedPoint) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    const auto batch = testing::random_batch(rng, align::Role::Image, 1 + rng.index(20), 1 + rng.index(200));
    const auto stored = decode_embeddings(encode_embeddings(batch));
    const auto bytes = encode_embeddings(stored);
    EXPECT_EQ(decode_embeddings(bytes), stored);
    EXPECT_EQ(encode_embeddings(decode_embeddings(bytes)), bytes);
  }
  // Just outside the tolerance the writer renormalizes.
  const auto off = align::EmbeddingBatch::from_rows(align::Role::Image, {{1.0 + 1e-3, 0.0}});
  EXPECT_EQ(decode_embeddings(encode_embeddings(off)).row(0)[0], 1.0);
}

TEST(EmbeddingFile, NonUnitRowIsIntegrityError) {
  auto bytes = encode_embeddings(align::EmbeddingBatch::from_rows(align::Role::Image, {{1, 0}, {0, 1}}));
  const float big = 1.1f;
  std::memcpy(bytes.data() + kEmbeddingHeaderSize + 8, &big, 4);
  EXPECT_THROW(decode_embeddings(bytes), IntegrityError);
}

TEST(EmbeddingFile, CorruptionIsLocated) {
  const auto good = encode_embeddings(align::EmbeddingBatch::from_rows(align::Role::Image, {{1, 0}, {0, 1}}));
  auto magic = good;
  magic[0] = 'X';
  EXPECT_EQ(offset_of([&] { decode_embeddings(magic); }), 0u);
  std::vector<std::uint8_t> cut(good.begin(), good.end() - 1);
  EXPECT_EQ(offset_of([&] { decode_embeddings(cut); }), cut.size());
  std::vector<std::uint8_t> header_only(good.begin(), good.begin() + 12);
  EXPECT_THROW(decode_embeddings(header_only), FormatError);
  auto extra = good;
  extra.push_back(0);
  EXPECT_THROW(decode_embeddings(extra), FormatError);
}

Manifest sample_manifest() {
  Manifest m;
  m.dataset = "demo";
  m.seed = 9;
  m.config_json = R"({"a":1})";
  m.entries.push_back({"e0.evz", "img0.png", 0, "cat", EmbeddingRef{"emb.emb", 0}});
  m.entries.push_back({"e1.evz", "img1.png", 1, "dog", std::nullopt});
  return m;
}

TEST(Manifest, JsonRoundTrip) {
  const auto m = sample_manifest();
  EXPECT_EQ(manifest_from_json(manifest_to_json(m)), m);
  const auto doc = nlohmann::json::parse(manifest_to_json(m));
  EXPECT_EQ(doc["entries"][1]["image_embedding_ref"], nullptr);
  EXPECT_EQ(doc["config"]["a"], 1);
}

TEST(Manifest, SchemaViolationsRejected) {
  auto m = sample_manifest();
  m.entries[1].class_id = 2;  // ids 0 and 2: not dense
  EXPECT_THROW(manifest_from_json(manifest_to_json(m)), FormatError);
  EXPECT_THROW(manifest_from_json("{"), FormatError);
  EXPECT_THROW(manifest_from_json(R"({"format":"other","version":1})"), FormatError);
  auto doc = nlohmann::json::parse(manifest_to_json(sample_manifest()));
  doc["entries"][0].erase("class_id");
  EXPECT_THROW(manifest_from_json(doc.dump()), FormatError);
}

TEST(Manifest, ReadChecksReferencedFiles) {
  TempDir dir("man");
  const auto m = sample_manifest();
  write_manifest(m, dir / "manifest.json");
  EXPECT_THROW(read_manifest(dir / "manifest.json"), IoError);
  write_events({1, 1, 1, {}}, dir / "e0.evz");
  write_events({1, 1, 1, {}}, dir / "e1.evz");
  EXPECT_THROW(read_manifest(dir / "manifest.json"), IoError);
  write_embeddings(align::EmbeddingBatch::from_rows(align::Role::Image, {{1, 0}}), dir / "emb.emb");
  EXPECT_EQ(read_manifest(dir / "manifest.json"), m);
}

class PairedBatchTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("paired");
    train::WorldSpec spec;
    spec.n_train_classes = 4;
    spec.n_test_classes = 2;
    spec.train_per_class = 3;
    spec.calibration_per_class = 2;
    spec.test_per_class = 2;
    spec.pool_per_class = 2;
    spec.image_size = 16;
    spec.feature_size = 4;
    world_ = new train::SyntheticWorld(train::generate_world(spec));
    manifest_ = new Manifest(train::write_world(*world_, dir_->path()));
  }
  static void TearDownTestSuite() {
    delete manifest_;
    delete world_;
    delete dir_;
  }
  static TempDir* dir_;
  static train::SyntheticWorld* world_;
  static Manifest* manifest_;
};
TempDir* PairedBatchTest::dir_ = nullptr;
train::SyntheticWorld* PairedBatchTest::world_ = nullptr;
Manifest* PairedBatchTest::manifest_ = nullptr;

TEST_F(PairedBatchTest, ManifestOnDiskMatchesReturnedManifest) {
  EXPECT_EQ(read_manifest(dir_->path() / "manifest.json"), *manifest_);
}

TEST_F(PairedBatchTest, SingletonBatch) {
  const std::size_t idx[] = {0};
  const auto b = load_paired_batch(*manifest_, dir_->path(), idx);
  EXPECT_EQ(b.frames.size(), 1u);
  EXPECT_EQ(b.images.size(), 1u);
  EXPECT_EQ(b.class_ids.size(), 1u);
}

TEST_F(PairedBatchTest, ShuffledIndicesPermuteConsistently) {
  const std::size_t fwd[] = {0, 1, 2, 3, 4};
  const std::size_t rev[] = {4, 3, 2, 1, 0};
  const auto a = load_paired_batch(*manifest_, dir_->path(), fwd);
  const auto b = load_paired_batch(*manifest_, dir_->path(), rev);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(a.frames[i], b.frames[4 - i]);
    EXPECT_EQ(a.class_ids[i], b.class_ids[4 - i]);
    EXPECT_TRUE(std::equal(a.images.row(i).begin(), a.images.row(i).end(), b.images.row(4 - i).begin()));
  }
}

TEST_F(PairedBatchTest, PairingMatchesGeneratorGroundTruth) {
  std::vector<std::size_t> all(manifest_->entries.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto b = load_paired_batch(*manifest_, dir_->path(), all);
  std::vector<const train::Sample*> truth;
  for (auto split : {train::Split::Train, train::Split::Calibration, train::Split::Test}) {
    for (const auto& s : world_->samples(split)) truth.push_back(&s);
  }
  ASSERT_EQ(truth.size(), all.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    EXPECT_EQ(b.class_ids[i], truth[i]->class_id);
    EXPECT_EQ(b.frames[i], repr::to_event_frame(truth[i]->events));
    for (std::size_t k = 0; k < b.images.dim(); ++k) {
      EXPECT_NEAR(b.images.row(i)[k], truth[i]->image_embedding[k], 1e-6);
    }
  }
}

TEST_F(PairedBatchTest, BadIndexAndMissingFiles) {
  const std::size_t bad[] = {100000};
  EXPECT_THROW(load_paired_batch(*manifest_, dir_->path(), bad), ArgumentError);
  const std::size_t ok[] = {0};
  TempDir empty("empty");
  EXPECT_THROW(load_paired_batch(*manifest_, empty.path(), ok), IoError);
  Manifest no_ref = *manifest_;
  no_ref.entries[0].image_embedding.reset();
  EXPECT_THROW(load_paired_batch(no_ref, dir_->path(), ok), ArgumentError);
}

}  // namespace
}  // namespace evalign::io
