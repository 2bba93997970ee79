#include "evalign/encoder.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string_view>

#include "evalign/error.hpp"
#include "evalign/random.hpp"

namespace evalign::train {

Encoder::Encoder(EncoderShape shape, std::vector<double> params)
    : shape_(shape), params_(std::move(params)) {
  if (shape_.input == 0 || shape_.hidden == 0 || shape_.output < 2) {
    throw ArgumentError("encoder needs positive input/hidden sizes and output >= 2");
  }
  if (params_.size() != shape_.parameter_count()) {
    throw ArgumentError("parameter vector does not match encoder shape");
  }
}

Encoder Encoder::initialize(EncoderShape shape, std::uint64_t seed) {
  std::vector<double> params(shape.parameter_count(), 0.0);
  Rng rng(seed);
  const double std1 = std::sqrt(2.0 / static_cast<double>(shape.input + shape.hidden));
  const double std2 = std::sqrt(2.0 / static_cast<double>(shape.hidden + shape.output));
  std::size_t pos = 0;
  for (std::size_t i = 0; i < shape.hidden * shape.input; ++i) params[pos++] = std1 * rng.normal();
  pos += shape.hidden;
  for (std::size_t i = 0; i < shape.output * shape.hidden; ++i) params[pos++] = std2 * rng.normal();
  // Non-zero output bias keeps an all-zero feature (no events) off the
  // origin, where normalization is undefined.
  for (std::size_t i = 0; i < shape.output; ++i) params[pos++] = 0.1 * rng.normal();
  return Encoder(shape, std::move(params));
}

align::EmbeddingBatch Encoder::forward_raw(const std::vector<std::vector<double>>& features,
                                           Tape& tape) const {
  const std::size_t n = features.size();
  const std::size_t in = shape_.input, hid = shape_.hidden, out = shape_.output;
  tape.n = n;
  tape.inputs.resize(n * in);
  tape.hidden.resize(n * hid);
  std::vector<double> raw(n * out);
  const auto W1 = w1(), B1 = b1(), W2 = w2(), B2 = b2();
  for (std::size_t s = 0; s < n; ++s) {
    if (features[s].size() != in) throw ArgumentError("feature length does not match encoder input");
    std::copy(features[s].begin(), features[s].end(), tape.inputs.begin() + s * in);
    const double* x = features[s].data();
    double* h = tape.hidden.data() + s * hid;
    for (std::size_t j = 0; j < hid; ++j) {
      double acc = B1[j];
      const double* w = W1.data() + j * in;
      for (std::size_t i = 0; i < in; ++i) acc += w[i] * x[i];
      h[j] = std::tanh(acc);
    }
    double* y = raw.data() + s * out;
    for (std::size_t k = 0; k < out; ++k) {
      double acc = B2[k];
      const double* w = W2.data() + k * hid;
      for (std::size_t j = 0; j < hid; ++j) acc += w[j] * h[j];
      y[k] = acc;
    }
  }
  return align::EmbeddingBatch(align::Role::Event, out, std::move(raw));
}

std::vector<double> Encoder::backward(const Tape& tape, std::span<const double> grad_raw) const {
  const std::size_t in = shape_.input, hid = shape_.hidden, out = shape_.output;
  if (grad_raw.size() != tape.n * out) throw ArgumentError("gradient shape mismatch");
  std::vector<double> grad(params_.size(), 0.0);
  double* gW1 = grad.data();
  double* gB1 = gW1 + hid * in;
  double* gW2 = gB1 + hid;
  double* gB2 = gW2 + out * hid;
  const auto W2 = w2();
  std::vector<double> dh(hid);
  for (std::size_t s = 0; s < tape.n; ++s) {
    const double* x = tape.inputs.data() + s * in;
    const double* h = tape.hidden.data() + s * hid;
    const double* g = grad_raw.data() + s * out;
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t k = 0; k < out; ++k) {
      gB2[k] += g[k];
      double* row = gW2 + k * hid;
      const double* w = W2.data() + k * hid;
      for (std::size_t j = 0; j < hid; ++j) {
        row[j] += g[k] * h[j];
        dh[j] += w[j] * g[k];
      }
    }
    for (std::size_t j = 0; j < hid; ++j) {
      const double dz = dh[j] * (1.0 - h[j] * h[j]);
      gB1[j] += dz;
      double* row = gW1 + j * in;
      for (std::size_t i = 0; i < in; ++i) row[i] += dz * x[i];
    }
  }
  return grad;
}

align::Embedding Encoder::encode(std::span<const double> feature) const {
  Tape tape;
  const auto raw = forward_raw({std::vector<double>(feature.begin(), feature.end())}, tape);
  return align::normalized(raw.row(0));
}

align::EmbeddingBatch Encoder::encode(const std::vector<std::vector<double>>& features) const {
  Tape tape;
  return forward_raw(features, tape).normalized();
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& buf, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf.push_back(static_cast<std::uint8_t>(value & 0xFF));
    value = static_cast<T>(value >> 8);
  }
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t at) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value = static_cast<T>(value | (static_cast<T>(bytes[at + i]) << (8 * i)));
  }
  return value;
}

constexpr std::size_t kHeader = 20;

}  // namespace

std::vector<std::uint8_t> encode_encoder(const Encoder& encoder) {
  std::vector<std::uint8_t> buf;
  buf.reserve(kHeader + 8 * encoder.parameters().size());
  for (char c : std::string_view("ENC1")) buf.push_back(static_cast<std::uint8_t>(c));
  put_le<std::uint16_t>(buf, 1);
  put_le<std::uint16_t>(buf, 0);
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(encoder.shape().input));
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(encoder.shape().hidden));
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(encoder.shape().output));
  for (double p : encoder.parameters()) put_le<std::uint64_t>(buf, std::bit_cast<std::uint64_t>(p));
  return buf;
}

Encoder decode_encoder(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "ENC1", 4) != 0) {
    throw FormatError("bad magic, expected \"ENC1\"", 0);
  }
  if (bytes.size() < kHeader) throw FormatError("truncated encoder header", bytes.size());
  if (get_le<std::uint16_t>(bytes, 4) != 1) throw FormatError("unsupported encoder version", 4);
  EncoderShape shape{get_le<std::uint32_t>(bytes, 8), get_le<std::uint32_t>(bytes, 12),
                     get_le<std::uint32_t>(bytes, 16)};
  const std::uint64_t expected = kHeader + 8ull * shape.parameter_count();
  if (bytes.size() != expected) throw FormatError("encoder payload size mismatch", bytes.size());
  std::vector<double> params(shape.parameter_count());
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, kHeader + 8 * i));
  }
  return Encoder(shape, std::move(params));
}

void write_encoder(const Encoder& encoder, const std::filesystem::path& path) {
  const auto bytes = encode_encoder(encoder);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Encoder read_encoder(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                        std::istreambuf_iterator<char>()};
  return decode_encoder(bytes);
}

}  // namespace evalign::train
