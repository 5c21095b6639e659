#include "semhpo/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>

#include "semhpo/error.hpp"
#include "semhpo/hash.hpp"

namespace semhpo {

using nn::Graph;
using nn::Var;

ModelConfig ModelConfig::full(int vocab_size, int categories) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.categories = categories;
  return c;
}

ModelConfig ModelConfig::small(int vocab_size, int categories) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.categories = categories;
  c.layers = 2;
  c.hidden = 64;
  c.intermediate = 256;
  c.heads = 4;
  c.latent_dim = 32;
  return c;
}

ModelConfig ModelConfig::tiny(int vocab_size, int categories) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.categories = categories;
  c.window = 8;
  c.layers = 1;
  c.hidden = 8;
  c.intermediate = 16;
  c.heads = 2;
  c.latent_dim = 8;
  c.conv_widths = {4, 2, 2};
  c.conv_channels = {2, 3, 4};
  return c;
}

void ModelConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("model config: " + what);
  };
  check(vocab_size > 2, "vocab_size must exceed the two reserved ids");
  check(window >= 1, "window must be positive");
  check(layers >= 1, "layers must be positive");
  check(hidden >= 1 && heads >= 1, "hidden and heads must be positive");
  check(hidden % heads == 0, "hidden must be divisible by heads");
  check(intermediate >= 1, "intermediate must be positive");
  check(categories >= 1, "categories must be positive");
  check(latent_dim >= 1, "latent_dim must be positive");
  check(!conv_widths.empty() && conv_widths.size() == conv_channels.size(),
        "conv widths and channels must be non-empty and equally long");
  for (std::size_t s = 0; s < conv_widths.size(); ++s) {
    check(conv_widths[s] >= 1 && conv_channels[s] >= 1, "conv widths and channels must be positive");
  }
  check(classifier_output_length() >= 1, "latent_dim too short for the classifier's pooling stages");
}

int ModelConfig::classifier_output_length() const {
  int len = latent_dim;
  for (std::size_t s = 0; s < conv_widths.size(); ++s) len /= 2;
  return len;
}

std::size_t Parameters::add(const std::string& name, Matrix value) {
  if (index_.count(name)) throw ConfigError("duplicate parameter " + name);
  index_.emplace(name, values_.size());
  names_.push_back(name);
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::size_t Parameters::index(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return it->second;
}

const Matrix& Parameters::operator[](const std::string& name) const { return values_[index(name)]; }
Matrix& Parameters::operator[](const std::string& name) { return values_[index(name)]; }

std::size_t Parameters::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

std::vector<Matrix> Parameters::zeros_like() const {
  std::vector<Matrix> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.push_back(Matrix::Zero(v.rows(), v.cols()));
  return out;
}

namespace {

class Initializer {
public:
  Initializer(Parameters& p, std::uint64_t seed) : p_(p), rng_(seed) {}

  void weight(const std::string& name, int rows, int cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal_(rng_);
    p_.add(name, std::move(m));
  }
  void bias(const std::string& name, int cols) { p_.add(name, Matrix::Zero(1, cols)); }
  void dense(const std::string& prefix, int in, int out) {
    weight(prefix + ".weight", in, out);
    bias(prefix + ".bias", out);
  }
  void norm(const std::string& prefix, int cols) {
    p_.add(prefix + ".gain", Matrix::Ones(1, cols));
    bias(prefix + ".bias", cols);
  }
  void attention(const std::string& prefix, int hidden) {
    for (const char* part : {"query", "key", "value", "output"}) dense(prefix + "." + part, hidden, hidden);
  }

private:
  Parameters& p_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 0.02};
};

std::string layer_prefix(const char* stack, int l) { return std::string(stack) + ".layer" + std::to_string(l); }

}  // namespace

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const auto& c = config_;
  Initializer init(params_, seed);

  init.weight("encoder.word_embedding", c.vocab_size, c.hidden);
  init.weight("encoder.position_embedding", c.window, c.hidden);
  init.norm("encoder.embedding_norm", c.hidden);
  for (int l = 0; l < c.layers; ++l) {
    const auto p = layer_prefix("encoder", l);
    init.attention(p + ".attention", c.hidden);
    init.norm(p + ".attention_norm", c.hidden);
    init.dense(p + ".ffn.in", c.hidden, c.intermediate);
    init.dense(p + ".ffn.out", c.intermediate, c.hidden);
    init.norm(p + ".ffn_norm", c.hidden);
  }
  init.dense("encoder.alpha", c.hidden, c.categories);
  init.dense("encoder.latent", c.hidden, c.categories * c.latent_dim);

  init.weight("generator.word_embedding", c.vocab_size, c.hidden);
  init.weight("generator.position_embedding", c.window, c.hidden);
  init.weight("generator.start", 1, c.hidden);
  init.norm("generator.embedding_norm", c.hidden);
  init.dense("generator.memory", c.latent_dim, 2 * c.hidden);
  for (int l = 0; l < c.layers; ++l) {
    const auto p = layer_prefix("generator", l);
    init.attention(p + ".self_attention", c.hidden);
    init.norm(p + ".self_attention_norm", c.hidden);
    init.attention(p + ".cross_attention", c.hidden);
    init.norm(p + ".cross_attention_norm", c.hidden);
    init.dense(p + ".ffn.in", c.hidden, c.intermediate);
    init.dense(p + ".ffn.out", c.intermediate, c.hidden);
    init.norm(p + ".ffn_norm", c.hidden);
  }
  init.weight("generator.output.weight", c.vocab_size, c.hidden);
  init.bias("generator.output.bias", c.vocab_size);

  int in_channels = 1;
  for (std::size_t s = 0; s < c.conv_widths.size(); ++s) {
    init.dense("classifier.conv" + std::to_string(s), c.conv_widths[s] * in_channels, c.conv_channels[s]);
    in_channels = c.conv_channels[s];
  }
  init.dense("classifier.dense", c.classifier_output_length() * in_channels, c.categories);
}

namespace graph {

Binder::Binder(Graph& g, const Parameters& params, std::vector<Matrix>* grads)
    : g_(g), params_(params), grads_(grads) {
  if (grads_ && grads_->size() != params_.size()) throw InputError("gradient buffers do not match parameters");
}

Var Binder::operator()(const std::string& name) {
  const auto i = params_.index(name);
  return g_.parameter(params_.value(i), grads_ ? &(*grads_)[i] : nullptr);
}

namespace {

Var dense(Binder& bind, Var x, const std::string& prefix) {
  auto& g = bind.graph();
  return g.add_row(g.matmul(x, bind(prefix + ".weight")), bind(prefix + ".bias"));
}

Var norm(Binder& bind, Var x, const std::string& prefix) {
  return bind.graph().layer_norm(x, bind(prefix + ".gain"), bind(prefix + ".bias"));
}

Var attention(Binder& bind, const ModelConfig& c, Var queries, Var memory, const std::string& prefix, bool causal) {
  auto& g = bind.graph();
  const Var q = dense(bind, queries, prefix + ".query");
  const Var k = dense(bind, memory, prefix + ".key");
  const Var v = dense(bind, memory, prefix + ".value");
  const int head_dim = c.hidden / c.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(c.heads));
  for (int h = 0; h < c.heads; ++h) {
    const Var qh = g.slice_cols(q, h * head_dim, head_dim);
    const Var kh = g.slice_cols(k, h * head_dim, head_dim);
    const Var vh = g.slice_cols(v, h * head_dim, head_dim);
    const Var weights = g.softmax_rows(g.scale(g.matmul_nt(qh, kh), scale), causal);
    heads.push_back(g.matmul(weights, vh));
  }
  const Var joined = c.heads == 1 ? heads.front() : g.concat_cols(heads);
  return dense(bind, joined, prefix + ".output");
}

Var feed_forward(Binder& bind, Var x, const std::string& prefix) {
  return dense(bind, bind.graph().gelu(dense(bind, x, prefix + ".in")), prefix + ".out");
}

}  // namespace

void check_fragment(const ModelConfig& config, const Fragment& fragment) {
  if (static_cast<int>(fragment.token_ids.size()) != config.window) {
    throw InputError("fragment length " + std::to_string(fragment.token_ids.size()) + " != window " +
                     std::to_string(config.window));
  }
  if (fragment.true_length < 0 || fragment.true_length > config.window) {
    throw InputError("fragment true_length out of range");
  }
  for (int id : fragment.token_ids) {
    if (id < 0 || id >= config.vocab_size) throw InputError("token id " + std::to_string(id) + " out of range");
  }
}

EncoderOutput encode(Binder& bind, const ModelConfig& c, const Fragment& fragment) {
  check_fragment(c, fragment);
  auto& g = bind.graph();
  const int n = fragment.true_length;
  EncoderOutput out;
  if (n == 0) {
    out.pooled = g.constant(Matrix::Zero(1, c.hidden));
  } else {
    // Restricting the stack to the first n positions is the same as masking
    // PAD keys and PAD pooling slots.
    const std::span<const int> ids(fragment.token_ids.data(), static_cast<std::size_t>(n));
    Var x = g.add(g.gather_rows(bind("encoder.word_embedding"), ids),
                  g.slice_rows(bind("encoder.position_embedding"), 0, n));
    x = norm(bind, x, "encoder.embedding_norm");
    for (int l = 0; l < c.layers; ++l) {
      const auto p = layer_prefix("encoder", l);
      x = norm(bind, g.add(x, attention(bind, c, x, x, p + ".attention", false)), p + ".attention_norm");
      x = norm(bind, g.add(x, feed_forward(bind, x, p + ".ffn")), p + ".ffn_norm");
    }
    out.pooled = g.mean_rows(x);
  }
  out.alpha = g.sigmoid(dense(bind, out.pooled, "encoder.alpha"));
  out.components = g.reshape(dense(bind, out.pooled, "encoder.latent"), c.categories, c.latent_dim);
  out.composite = g.matmul(out.alpha, out.components);
  return out;
}

Var generator_logits(Binder& bind, const ModelConfig& c, Var composite, std::span<const int> target, int length) {
  auto& g = bind.graph();
  if (g.rows(composite) != 1 || g.cols(composite) != c.latent_dim) throw InputError("composite must be 1 x latent_dim");
  if (length < 1 || length > c.window || static_cast<int>(target.size()) < length) {
    throw InputError("generator length out of range");
  }
  // Teacher forcing: position t sees the learned start vector then tokens
  // 0..t-1 of the target.
  Var inputs = bind("generator.start");
  if (length > 1) {
    const Var shifted = g.gather_rows(bind("generator.word_embedding"), target.subspan(0, static_cast<std::size_t>(length - 1)));
    const Var parts[] = {inputs, shifted};
    inputs = g.concat_rows(parts);
  }
  Var x = g.add(inputs, g.slice_rows(bind("generator.position_embedding"), 0, length));
  x = norm(bind, x, "generator.embedding_norm");
  const Var memory = g.reshape(dense(bind, composite, "generator.memory"), 2, c.hidden);
  for (int l = 0; l < c.layers; ++l) {
    const auto p = layer_prefix("generator", l);
    x = norm(bind, g.add(x, attention(bind, c, x, x, p + ".self_attention", true)), p + ".self_attention_norm");
    x = norm(bind, g.add(x, attention(bind, c, x, memory, p + ".cross_attention", false)), p + ".cross_attention_norm");
    x = norm(bind, g.add(x, feed_forward(bind, x, p + ".ffn")), p + ".ffn_norm");
  }
  return g.add_row(g.matmul_nt(x, bind("generator.output.weight")), bind("generator.output.bias"));
}

Var classifier_logits(Binder& bind, const ModelConfig& c, Var latents) {
  auto& g = bind.graph();
  if (g.cols(latents) != c.latent_dim) throw InputError("classifier input must have latent_dim columns");
  const auto n = g.rows(latents);
  Eigen::Index length = c.latent_dim;
  Var x = g.reshape(latents, n * length, 1);
  for (std::size_t s = 0; s < c.conv_widths.size(); ++s) {
    const auto p = "classifier.conv" + std::to_string(s);
    const Var patches = g.im2col(x, n, length, c.conv_widths[s]);
    x = g.relu(dense(bind, patches, p));
    x = g.max_pool2(x, n, length);
    length /= 2;
  }
  x = g.reshape(x, n, length * g.cols(x));
  return dense(bind, x, "classifier.dense");
}

}  // namespace graph

LatentComposition Model::encode(const Fragment& fragment) const {
  Graph g;
  graph::Binder bind(g, params_, nullptr);
  const auto out = graph::encode(bind, config_, fragment);
  LatentComposition lc;
  lc.alpha = g.value(out.alpha);
  lc.components = g.value(out.components);
  lc.composite = g.value(out.composite);
  return lc;
}

Matrix Model::generate(const RowVector& composite, const Fragment& target) const {
  graph::check_fragment(config_, target);
  if (composite.size() != config_.latent_dim) throw InputError("composite dimension mismatch");
  Graph g;
  graph::Binder bind(g, params_, nullptr);
  const Var z = g.constant(composite);
  const Var logits = graph::generator_logits(bind, config_, z, target.token_ids, config_.window);
  return g.value(g.softmax_rows(logits));
}

ClassProbabilities Model::classify_latent(const RowVector& z) const {
  if (z.size() != config_.latent_dim) throw InputError("latent dimension mismatch");
  Graph g;
  graph::Binder bind(g, params_, nullptr);
  const Var logits = graph::classifier_logits(bind, config_, g.constant(z));
  return {g.value(g.softmax_rows(logits))};
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'E', 'M', 'H', 'P', 'O', 'C', 'K'};

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},     {"window", c.window},       {"layers", c.layers},
          {"hidden", c.hidden},             {"intermediate", c.intermediate}, {"heads", c.heads},
          {"categories", c.categories},     {"latent_dim", c.latent_dim},     {"conv_widths", c.conv_widths},
          {"conv_channels", c.conv_channels}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.window = j.at("window").get<int>();
  c.layers = j.at("layers").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.intermediate = j.at("intermediate").get<int>();
  c.heads = j.at("heads").get<int>();
  c.categories = j.at("categories").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.conv_widths = j.at("conv_widths").get<std::vector<int>>();
  c.conv_channels = j.at("conv_channels").get<std::vector<int>>();
  return c;
}

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ParseError("checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const auto& params = ckpt.model.params();
  nlohmann::json header;
  header["version"] = Checkpoint::kVersion;
  header["config"] = config_to_json(ckpt.model.config());
  header["vocabulary_hash"] = hex64(ckpt.vocabulary_hash);
  header["seed"] = ckpt.seed;
  auto& tensors = header["tensors"] = nlohmann::json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    tensors.push_back({{"name", params.name(i)}, {"rows", params.value(i).rows()}, {"cols", params.value(i).cols()}});
  }
  const auto text = header.dump();
  out.write(kMagic, sizeof kMagic);
  write_pod<std::uint32_t>(out, Checkpoint::kVersion);
  write_pod<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& v = params.value(i);
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) throw Error("failed writing checkpoint");
}

Checkpoint load_checkpoint(std::istream& in, std::uint64_t expected_vocab_hash) {
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw ParseError("not a checkpoint file");
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != Checkpoint::kVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = read_pod<std::uint64_t>(in);
  if (header_len > (1u << 26)) throw ParseError("checkpoint header too large");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) throw ParseError("checkpoint truncated");

  Checkpoint ckpt;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    ckpt.vocabulary_hash = std::stoull(header.at("vocabulary_hash").get<std::string>(), nullptr, 16);
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    if (header.at("version").get<std::uint32_t>() != version) throw ParseError("checkpoint version fields disagree");
    ckpt.model = Model(config_from_json(header.at("config")), 0);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  if (expected_vocab_hash != 0 && expected_vocab_hash != ckpt.vocabulary_hash) {
    throw DataError("checkpoint vocabulary hash " + hex64(ckpt.vocabulary_hash) + " does not match vocabulary " +
                    hex64(expected_vocab_hash));
  }
  auto& params = ckpt.model.params();
  const auto& tensors = header.at("tensors");
  if (tensors.size() != params.size()) throw ParseError("checkpoint tensor count does not match its config");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& v = params.value(i);
    if (tensors[i].at("name") != params.name(i) || tensors[i].at("rows") != v.rows() || tensors[i].at("cols") != v.cols()) {
      throw ParseError("checkpoint tensor " + params.name(i) + " has unexpected name or shape");
    }
    if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)))) {
      throw ParseError("checkpoint truncated in tensor " + params.name(i));
    }
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path);
  save_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path, std::uint64_t expected_vocab_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("missing checkpoint " + path);
  return load_checkpoint(in, expected_vocab_hash);
}

}  // namespace semhpo
