#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "evalign/alignment.hpp"

namespace evalign::train {

struct EncoderShape {
  std::size_t input = 0;
  std::size_t hidden = 0;
  std::size_t output = 0;

  std::size_t parameter_count() const { return hidden * input + hidden + output * hidden + output; }
  friend bool operator==(const EncoderShape&, const EncoderShape&) = default;
};

/// Two affine layers with tanh between and a final l2 normalization:
///   e = normalize(W2 tanh(W1 x + b1) + b2)
/// Parameters live in one flat vector laid out as [W1, b1, W2, b2], with
/// the weight matrices row-major (output-major).
class Encoder {
 public:
  Encoder(EncoderShape shape, std::vector<double> params);

  /// Xavier-normal weights, zero hidden bias and a small random output
  /// bias, drawn from `seed`.
  static Encoder initialize(EncoderShape shape, std::uint64_t seed);

  const EncoderShape& shape() const noexcept { return shape_; }
  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }

  /// Cached activations of a batched forward pass.
  struct Tape {
    std::vector<double> inputs;  // n x input
    std::vector<double> hidden;  // n x hidden, post-tanh
    std::size_t n = 0;
  };

  /// Pre-normalization outputs (role Event) for a batch of feature rows;
  /// fills `tape` for `backward`.
  align::EmbeddingBatch forward_raw(const std::vector<std::vector<double>>& features,
                                    Tape& tape) const;

  /// Parameter gradient given dL/d(raw output), row-major n x output.
  std::vector<double> backward(const Tape& tape, std::span<const double> grad_raw) const;

  /// Unit-norm embedding of one feature vector.
  align::Embedding encode(std::span<const double> feature) const;
  /// Unit-norm embeddings (role Event) for a batch.
  align::EmbeddingBatch encode(const std::vector<std::vector<double>>& features) const;

  friend bool operator==(const Encoder&, const Encoder&) = default;

 private:
  std::span<const double> w1() const { return {params_.data(), shape_.hidden * shape_.input}; }
  std::span<const double> b1() const {
    return {params_.data() + shape_.hidden * shape_.input, shape_.hidden};
  }
  std::span<const double> w2() const {
    return {params_.data() + shape_.hidden * shape_.input + shape_.hidden,
            shape_.output * shape_.hidden};
  }
  std::span<const double> b2() const {
    return {params_.data() + params_.size() - shape_.output, shape_.output};
  }

  EncoderShape shape_;
  std::vector<double> params_;
};

// Encoder file, little-endian: "ENC1", u16 version = 1, u16 reserved = 0,
// u32 input, u32 hidden, u32 output, then parameter_count f64 values.
std::vector<std::uint8_t> encode_encoder(const Encoder& encoder);
Encoder decode_encoder(std::span<const std::uint8_t> bytes);
void write_encoder(const Encoder& encoder, const std::filesystem::path& path);
Encoder read_encoder(const std::filesystem::path& path);

}  // namespace evalign::train
