#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "semhpo/autograd.hpp"
#include "semhpo/corpus.hpp"

namespace semhpo {

using nn::Matrix;
using nn::RowVector;

/// Shapes of the encoder E, generator G and latent classifier D.
struct ModelConfig {
  int vocab_size = 0;
  int window = 32;
  int layers = 6;
  int hidden = 768;
  int intermediate = 3072;
  int heads = 12;
  int categories = 24;
  int latent_dim = 1536;
  std::vector<int> conv_widths{8, 4, 2};
  std::vector<int> conv_channels{4, 8, 16};

  /// Full-size network.
  static ModelConfig full(int vocab_size, int categories = 24);
  /// Desk-scale network: 2 layers, hidden 64, latent 32.
  static ModelConfig small(int vocab_size, int categories);
  /// Gradient-check network: hidden 8, window 8.
  static ModelConfig tiny(int vocab_size, int categories);

  /// Throws ConfigError when a shape invariant fails.
  void validate() const;
  /// Length of each signal after the classifier's pooling stages.
  int classifier_output_length() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Named parameter tensors; gradients live in a parallel array of the same
/// shapes. Names are prefixed "encoder.", "generator." or "classifier.".
class Parameters {
public:
  std::size_t add(const std::string& name, Matrix value);
  std::size_t size() const noexcept { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Matrix& value(std::size_t i) { return values_[i]; }
  const Matrix& value(std::size_t i) const { return values_[i]; }
  const Matrix& operator[](const std::string& name) const;
  Matrix& operator[](const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index(const std::string& name) const;
  std::size_t scalar_count() const;

  /// Zeroed tensors shaped like the parameters.
  std::vector<Matrix> zeros_like() const;

private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::map<std::string, std::size_t> index_;
};

/// Per-fragment composition produced by E: z* = sum_j alpha_j z^(j).
struct LatentComposition {
  RowVector alpha;    // length M, in (0, 1)
  Matrix components;  // M x latent_dim, row j is z^(j)
  RowVector composite;
};

struct ClassProbabilities {
  RowVector probs;
};

class Model {
public:
  Model() = default;
  /// Normal(0, 0.02) weights, zero biases, unit layer-norm gains.
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  Parameters& params() noexcept { return params_; }
  const Parameters& params() const noexcept { return params_; }

  LatentComposition encode(const Fragment& fragment) const;
  /// Teacher-forced reconstruction of target from z*: row t is a
  /// distribution over the vocabulary for position t (window rows).
  Matrix generate(const RowVector& composite, const Fragment& target) const;
  ClassProbabilities classify_latent(const RowVector& z) const;

private:
  ModelConfig config_;
  Parameters params_;
};

/// Graph-level building blocks shared by inference and training.
namespace graph {

/// Binds every parameter into g. grads may be null (inference) or a buffer
/// array aligned with params.
class Binder {
public:
  Binder(nn::Graph& g, const Parameters& params, std::vector<Matrix>* grads);
  nn::Var operator()(const std::string& name);
  nn::Graph& graph() { return g_; }

private:
  nn::Graph& g_;
  const Parameters& params_;
  std::vector<Matrix>* grads_;
};

struct EncoderOutput {
  nn::Var pooled;      // 1 x hidden
  nn::Var alpha;       // 1 x M
  nn::Var components;  // M x latent_dim
  nn::Var composite;   // 1 x latent_dim
};

/// Validates ids against the vocabulary and the fragment length against
/// the window; throws InputError.
void check_fragment(const ModelConfig& config, const Fragment& fragment);

/// Runs E over the first true_length tokens. An empty fragment pools to a
/// zero vector so the heads return their biases.
EncoderOutput encode(Binder& bind, const ModelConfig& config, const Fragment& fragment);

/// G's logits for the first `length` target positions (length x vocab).
nn::Var generator_logits(Binder& bind, const ModelConfig& config, nn::Var composite, std::span<const int> target,
                         int length);

/// D's logits for each row of latents (n x latent_dim -> n x M).
nn::Var classifier_logits(Binder& bind, const ModelConfig& config, nn::Var latents);

}  // namespace graph

/// Binary checkpoint: magic, version, JSON header (config, vocabulary hash,
/// seed, tensor shapes) and little-endian float64 tensor data.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  Model model;
  std::uint64_t vocabulary_hash = 0;
  std::uint64_t seed = 0;
};

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt);
/// Throws ParseError on a corrupt file and DataError when expected_vocab_hash
/// is nonzero and differs from the stored hash.
Checkpoint load_checkpoint(std::istream& in, std::uint64_t expected_vocab_hash = 0);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path, std::uint64_t expected_vocab_hash = 0);

}  // namespace semhpo
