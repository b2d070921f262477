#include "lnsr/encoder.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lnsr/errors.hpp"
#include "lnsr/ops.hpp"

namespace lnsr {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void EncoderConfig::validate() const {
  std::vector<std::string> bad;
  if (vocab_size < 1) bad.emplace_back("vocab_size must be >= 1");
  if (embed_dim < 1) bad.emplace_back("embed_dim must be >= 1");
  if (num_layers < 1) bad.emplace_back("num_layers must be >= 1");
  if (num_heads < 1) bad.emplace_back("num_heads must be >= 1");
  if (ffn_dim < 1) bad.emplace_back("ffn_dim must be >= 1");
  if (max_seq_len < 1) bad.emplace_back("max_seq_len must be >= 1");
  if (!regression && num_classes < 2) bad.emplace_back("num_classes must be >= 2");
  if (num_heads >= 1 && embed_dim % num_heads != 0) {
    bad.emplace_back("num_heads (" + std::to_string(num_heads) + ") must divide embed_dim (" +
                     std::to_string(embed_dim) + ")");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) bad.emplace_back("dropout_rate must lie in [0, 1)");
  if (!(init_std > 0.0)) bad.emplace_back("init_std must be > 0");
  if (!bad.empty()) {
    std::string msg = "invalid encoder config:";
    for (const auto& b : bad) msg += " " + b + ";";
    throw ValidationError(msg);
  }
}

namespace {

Tensor gaussian(Shape shape, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, std);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = nd(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor constant(Shape shape, double value) { return Tensor::filled(std::move(shape), value, true); }

}  // namespace

EncoderModel::EncoderModel(EncoderConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(init_seed);
  const auto d = config_.embed_dim, f = config_.ffn_dim;
  const double s = config_.init_std;
  token_embedding = gaussian({config_.vocab_size, d}, s, rng);
  position_embedding = gaussian({config_.max_seq_len, d}, s, rng);
  blocks.resize(config_.num_layers);
  for (auto& b : blocks) {
    b.ln1_gain = constant({d}, 1.0);
    b.ln1_bias = constant({d}, 0.0);
    b.wq = gaussian({d, d}, s, rng);
    b.bq = constant({d}, 0.0);
    b.wk = gaussian({d, d}, s, rng);
    b.bk = constant({d}, 0.0);
    b.wv = gaussian({d, d}, s, rng);
    b.bv = constant({d}, 0.0);
    b.wo = gaussian({d, d}, s, rng);
    b.bo = constant({d}, 0.0);
    b.ln2_gain = constant({d}, 1.0);
    b.ln2_bias = constant({d}, 0.0);
    b.w1 = gaussian({d, f}, s, rng);
    b.b1 = constant({f}, 0.0);
    b.w2 = gaussian({f, d}, s, rng);
    b.b2 = constant({d}, 0.0);
  }
  final_ln_gain = constant({d}, 1.0);
  final_ln_bias = constant({d}, 0.0);
  head_weight = gaussian({d, config_.output_dim()}, s, rng);
  head_bias = constant({config_.output_dim()}, 0.0);
}

EncoderModel build_encoder(const EncoderConfig& config, std::uint64_t init_seed) {
  return EncoderModel(config, init_seed);
}

std::vector<Tensor> EncoderModel::parameters() const {
  std::vector<Tensor> p{token_embedding, position_embedding};
  for (const auto& b : blocks) {
    p.insert(p.end(), {b.ln1_gain, b.ln1_bias, b.wq, b.bq, b.wk, b.bk, b.wv, b.bv, b.wo, b.bo,
                       b.ln2_gain, b.ln2_bias, b.w1, b.b1, b.w2, b.b2});
  }
  p.insert(p.end(), {final_ln_gain, final_ln_bias, head_weight, head_bias});
  return p;
}

std::vector<std::string> EncoderModel::parameter_names() const {
  std::vector<std::string> n{"token_embedding", "position_embedding"};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto pre = "block" + std::to_string(i + 1) + ".";
    for (const char* s : {"ln1_gain", "ln1_bias", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
                          "ln2_gain", "ln2_bias", "w1", "b1", "w2", "b2"}) {
      n.push_back(pre + s);
    }
  }
  n.insert(n.end(), {"final_ln_gain", "final_ln_bias", "head_weight", "head_bias"});
  return n;
}

std::size_t EncoderModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

void EncoderModel::make_blocks_passthrough() {
  for (auto& b : blocks) {
    for (Tensor* t : {&b.wo, &b.bo, &b.w2, &b.b2}) {
      for (auto& v : t->mutable_data()) v = 0.0;
    }
  }
}

EncoderModel EncoderModel::clone() const {
  EncoderModel m = *this;
  auto copy = [](Tensor& t) { t = Tensor::from(t.shape(), {t.data().begin(), t.data().end()}, true); };
  copy(m.token_embedding);
  copy(m.position_embedding);
  for (auto& b : m.blocks) {
    for (Tensor* t : {&b.ln1_gain, &b.ln1_bias, &b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv, &b.wo,
                      &b.bo, &b.ln2_gain, &b.ln2_bias, &b.w1, &b.b1, &b.w2, &b.b2}) {
      copy(*t);
    }
  }
  copy(m.final_ln_gain);
  copy(m.final_ln_bias);
  copy(m.head_weight);
  copy(m.head_bias);
  return m;
}

Tensor ActivationTrace::layer_input(std::size_t layer) const {
  if (layer >= inputs.size()) throw ContractError("layer_input: layer out of range");
  return inputs[layer];
}

namespace {

Tensor attention(const BlockParams& p, const Tensor& h, std::size_t heads,
                 std::span<const std::uint8_t> key_mask) {
  const auto d = h.cols();
  const auto dh = d / heads;
  auto q = add_row(matmul(h, p.wq), p.bq);
  auto k = add_row(matmul(h, p.wk), p.bk);
  auto v = add_row(matmul(h, p.wv), p.bv);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> ctx;
  ctx.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i) {
    auto qh = slice_cols(q, i * dh, dh);
    auto kh = slice_cols(k, i * dh, dh);
    auto vh = slice_cols(v, i * dh, dh);
    auto scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    ctx.push_back(matmul(softmax_rows(scores, key_mask), vh));
  }
  auto joined = heads == 1 ? ctx.front() : concat_cols(ctx);
  return add_row(matmul(joined, p.wo), p.bo);
}

Tensor block_forward(const BlockParams& p, const Tensor& x, std::size_t heads,
                     std::span<const std::uint8_t> key_mask, double drop, std::mt19937_64* rng) {
  auto a = attention(p, layer_norm_rows(x, p.ln1_gain, p.ln1_bias), heads, key_mask);
  if (drop > 0.0) a = dropout(a, drop, *rng);
  auto x1 = add(x, a);
  auto h2 = layer_norm_rows(x1, p.ln2_gain, p.ln2_bias);
  auto f = add_row(matmul(gelu(add_row(matmul(h2, p.w1), p.b1)), p.w2), p.b2);
  if (drop > 0.0) f = dropout(f, drop, *rng);
  return add(x1, f);
}

}  // namespace

ForwardResult forward_with_taps(const EncoderModel& model, std::span<const std::size_t> tokens,
                                const std::optional<Injection>& injection,
                                const ForwardOptions& options) {
  const auto& cfg = model.config();
  const auto M = cfg.max_seq_len, d = cfg.embed_dim, L = cfg.num_layers;
  if (tokens.empty() || tokens.size() > M) {
    throw ContractError("sequence length " + std::to_string(tokens.size()) + " outside [1, " +
                        std::to_string(M) + "]");
  }
  if (options.dropout_rate > 0.0 && options.rng == nullptr) {
    throw ContractError("dropout requested without an rng");
  }
  if (injection) {
    if (injection->layer > L) {
      throw ContractError("injection layer " + std::to_string(injection->layer) + " outside [0, " +
                          std::to_string(L) + "]");
    }
    if (injection->noise.shape() != Shape{M, d}) {
      throw ShapeError("injection noise " + shape_str(injection->noise.shape()) + " must be " +
                       shape_str({M, d}));
    }
  }

  std::vector<std::size_t> ids(tokens.begin(), tokens.end());
  ids.resize(M, 0);
  std::vector<std::uint8_t> valid(M, 0);
  std::fill_n(valid.begin(), tokens.size(), 1);
  std::vector<double> valid_f(valid.begin(), valid.end());

  ForwardResult out;
  auto& trace = out.trace;
  trace.valid = valid;
  trace.layers.reserve(L + 1);
  trace.inputs.reserve(L + 1);

  auto maybe_inject = [&](Tensor x, std::size_t layer) {
    if (injection && injection->layer == layer) {
      trace.injected_layer = layer;
      trace.injected_noise = injection->noise;
      x = add(x, mask_rows(injection->noise, valid_f));
    }
    trace.inputs.push_back(x);
    return x;
  };

  auto x = maybe_inject(embedding(model.token_embedding, ids), 0);
  x = add(x, model.position_embedding);
  trace.layers.push_back(x);
  for (std::size_t r = 1; r <= L; ++r) {
    auto in = maybe_inject(x, r);
    x = block_forward(model.blocks[r - 1], in, cfg.num_heads, valid, options.dropout_rate, options.rng);
    trace.layers.push_back(x);
  }

  auto pooled = mean_rows_masked(layer_norm_rows(x, model.final_ln_gain, model.final_ln_bias), valid);
  auto logits = add_row(matmul(pooled, model.head_weight), model.head_bias);
  out.logits = logits.reshape({cfg.output_dim()});
  return out;
}

void save_checkpoint(const EncoderModel& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  const auto& c = model.config();
  std::ostringstream hdr;
  hdr.precision(17);
  hdr << "LNSR1\n"
      << c.vocab_size << ' ' << c.embed_dim << ' ' << c.num_layers << ' ' << c.num_heads << ' '
      << c.ffn_dim << ' ' << c.max_seq_len << ' ' << c.num_classes << ' ' << (c.regression ? 1 : 0)
      << ' ' << c.dropout_rate << ' ' << (c.dropout_in_perturbed ? 1 : 0) << ' ' << c.init_std << '\n';
  const auto h = hdr.str();
  os.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& p : model.parameters()) {
    auto d = p.data();
    os.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size_bytes()));
  }
  if (!os) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

EncoderModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  std::string magic, line;
  std::getline(is, magic);
  if (magic != "LNSR1") throw ValidationError("not an LNSR1 checkpoint: " + path.string());
  std::getline(is, line);
  std::istringstream fields(line);
  EncoderConfig c;
  int regression = 0, drop_perturbed = 0;
  fields >> c.vocab_size >> c.embed_dim >> c.num_layers >> c.num_heads >> c.ffn_dim >>
      c.max_seq_len >> c.num_classes >> regression >> c.dropout_rate >> drop_perturbed >> c.init_std;
  if (!fields) throw ValidationError("malformed checkpoint header in " + path.string());
  c.regression = regression != 0;
  c.dropout_in_perturbed = drop_perturbed != 0;
  EncoderModel m(c, 0);
  for (auto& p : m.parameters()) {
    auto d = p.mutable_data();
    is.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(d.size_bytes()));
    if (!is) throw ValidationError("truncated checkpoint: " + path.string());
  }
  return m;
}

}  // namespace lnsr
