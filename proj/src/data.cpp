#include "lnsr/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "lnsr/errors.hpp"
#include "lnsr/manifold.hpp"

namespace lnsr {

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
}

std::size_t Vocabulary::add(const std::string& token) {
  auto [it, inserted] = ids_.emplace(token, tokens_.size());
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::size_t Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(std::size_t id) const {
  if (id >= tokens_.size()) throw IndexError("vocabulary id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

namespace {

struct RawLine {
  std::size_t line_no;
  std::string label;
  std::vector<std::string> words;
};

std::vector<RawLine> read_lines(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open dataset file: " + path.string());
  std::vector<RawLine> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(is, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ValidationError(path.string() + ":" + std::to_string(no) + ": expected 'label<TAB>text'");
    }
    RawLine r{no, line.substr(0, tab), {}};
    std::istringstream ws(line.substr(tab + 1));
    for (std::string w; ws >> w;) r.words.push_back(w);
    if (r.words.empty()) throw ValidationError(path.string() + ":" + std::to_string(no) + ": empty text");
    out.push_back(std::move(r));
  }
  if (out.empty()) throw ValidationError("dataset file is empty: " + path.string());
  return out;
}

Target parse_label(const RawLine& r, bool regression, const std::filesystem::path& path) {
  const auto& s = r.label;
  const char* end = s.data() + s.size();
  auto fail = [&]() -> Target {
    throw ValidationError(path.string() + ":" + std::to_string(r.line_no) + ": unparseable label '" + s + "'");
  };
  if (regression) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end || !std::isfinite(v)) return fail();
    return v;
  }
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) return fail();
  return v;
}

Example encode(const RawLine& r, const Vocabulary& vocab, Target target, std::size_t max_len) {
  Example ex;
  ex.length = std::min(r.words.size(), max_len);
  ex.ids.assign(max_len, kPadId);
  for (std::size_t i = 0; i < ex.length; ++i) ex.ids[i] = vocab.id(r.words[i]);
  ex.target = target;
  return ex;
}

TextDataset build(const std::vector<RawLine>& lines, Vocabulary vocab, std::size_t num_classes, Split split,
                  const TsvOptions& opt, const std::filesystem::path& path) {
  require(opt.max_seq_len >= 1, "load_tsv: max_seq_len must be >= 1");
  TextDataset ds;
  ds.vocab = std::move(vocab);
  ds.regression = opt.regression;
  ds.split = split;
  ds.max_seq_len = opt.max_seq_len;
  std::size_t max_label = 0;
  for (const auto& r : lines) {
    auto t = parse_label(r, opt.regression, path);
    if (!opt.regression) max_label = std::max(max_label, std::get<std::size_t>(t));
    ds.examples.push_back(encode(r, ds.vocab, t, opt.max_seq_len));
  }
  if (!opt.regression) ds.num_classes = std::max({num_classes, max_label + 1, std::size_t{2}});
  return ds;
}

}  // namespace

TextDataset load_tsv(const std::filesystem::path& path, const TsvOptions& options) {
  const auto lines = read_lines(path);
  Vocabulary vocab;
  for (const auto& r : lines)
    for (const auto& w : r.words) vocab.add(w);
  return build(lines, std::move(vocab), 0, Split::train, options, path);
}

TextDataset load_tsv(const std::filesystem::path& path, const Vocabulary& frozen, std::size_t num_classes,
                     const TsvOptions& options) {
  return build(read_lines(path), frozen, num_classes, Split::dev, options, path);
}

void SynthClassificationParams::validate() const {
  if (n_per_class < 1 || num_classes < 2 || seq_len < 1) {
    throw ValidationError("synth: n_per_class >= 1, num_classes >= 2 and seq_len >= 1 are required");
  }
  if (vocab_size < 2 + 2 * num_classes) {
    throw ValidationError("synth: vocab_size must be at least 2 + 2*num_classes");
  }
  if (!(margin > 0.0 && margin <= 1.0)) throw ValidationError("synth: margin must lie in (0, 1]");
}

std::pair<TextDataset, TextDataset> synth_classification(const SynthClassificationParams& p) {
  p.validate();
  std::mt19937_64 rng(p.seed);
  // Content ids are 2..V-1. Each class owns a disjoint signature block in
  // the first half of the content range; the second half is shared filler.
  const std::size_t content = p.vocab_size - 2;
  const std::size_t block = std::max<std::size_t>(1, content / (2 * p.num_classes));
  std::uniform_int_distribution<std::size_t> any_token(2, p.vocab_size - 1);
  std::uniform_int_distribution<std::size_t> in_block(0, block - 1);
  std::bernoulli_distribution from_signature(p.margin);
  std::uniform_int_distribution<std::size_t> length_dist(std::max<std::size_t>(1, p.seq_len / 2), p.seq_len);

  Vocabulary vocab;
  for (std::size_t i = 2; i < p.vocab_size; ++i) vocab.add("t" + std::to_string(i));

  std::set<std::vector<std::size_t>> seen;
  auto make_split = [&](std::size_t per_class, Split split) {
    TextDataset ds;
    ds.vocab = vocab;
    ds.num_classes = p.num_classes;
    ds.split = split;
    ds.max_seq_len = p.seq_len;
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t c = 0; c < p.num_classes; ++c) {
        for (int attempt = 0;; ++attempt) {
          if (attempt > 1000) throw ValidationError("synth: cannot generate enough distinct sequences");
          Example ex;
          ex.length = p.variable_length ? length_dist(rng) : p.seq_len;
          ex.ids.assign(p.seq_len, kPadId);
          for (std::size_t t = 0; t < ex.length; ++t) {
            ex.ids[t] = from_signature(rng) ? 2 + c * block + in_block(rng) : any_token(rng);
          }
          ex.target = c;
          if (!seen.insert(ex.ids).second) continue;
          ds.examples.push_back(std::move(ex));
          break;
        }
      }
    }
    return ds;
  };
  auto train = make_split(p.n_per_class, Split::train);
  auto dev = make_split(p.dev_per_class.value_or(p.n_per_class), Split::dev);
  return {std::move(train), std::move(dev)};
}

SyntheticManifoldSet synth_manifold(std::size_t n, std::size_t d, std::size_t k_true, double curvature,
                                    std::uint64_t seed) {
  require(k_true >= 1 && k_true < d, "synth_manifold: need 1 <= k_true < d");
  require(n >= 1, "synth_manifold: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(-1.0, 1.0);

  std::vector<std::vector<double>> raw(k_true, std::vector<double>(d));
  for (auto& c : raw)
    for (auto& v : c) v = nd(rng);
  auto tangent = gram_schmidt(raw).basis;
  require(tangent.size() == k_true, "synth_manifold: random tangent frame is rank deficient");

  std::vector<std::vector<double>> bend(k_true, std::vector<double>(d));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (auto& c : bend)
    for (auto& v : c) v = nd(rng) * inv_sqrt_d;
  std::vector<double> center(d);
  for (auto& v : center) v = nd(rng);

  std::vector<double> pts(n * d);
  std::vector<double> u(k_true);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : u) v = ud(rng);
    double* x = pts.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) x[j] = center[j];
    for (std::size_t a = 0; a < k_true; ++a) {
      for (std::size_t j = 0; j < d; ++j) x[j] += u[a] * tangent[a][j];
      if (curvature != 0.0) {
        for (std::size_t j = 0; j < d; ++j) x[j] += curvature * u[a] * u[a] * bend[a][j];
      }
    }
  }
  SyntheticManifoldSet s;
  s.points = Tensor::from({n, d}, std::move(pts));
  s.intrinsic_dim = k_true;
  s.curvature = curvature;
  s.tangent = std::move(tangent);
  std::ostringstream desc;
  desc << "box[-1,1]^" << k_true << " -> R^" << d << ", linear + " << curvature << " * quadratic bend";
  s.description = desc.str();
  return s;
}

}  // namespace lnsr
