#include "lnsr/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "lnsr/errors.hpp"
#include "lnsr/noise.hpp"

namespace lnsr {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Removes the components of v along each (unit) basis vector, twice.
void project_out(std::vector<double>& v, const std::vector<std::vector<double>>& basis) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& q : basis) {
      const double c = dot(v, q);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * q[i];
    }
  }
}

}  // namespace

NeighborIndex::NeighborIndex(const Tensor& vectors)
    : NeighborIndex({vectors.data().begin(), vectors.data().end()}, vectors.rows(), vectors.cols()) {}

NeighborIndex::NeighborIndex(std::vector<double> values, std::size_t n, std::size_t d)
    : values_(std::move(values)), n_(n), d_(d) {
  require(n_ >= 2, "build_index: need at least 2 vectors, got " + std::to_string(n_));
  require(d_ >= 1, "build_index: zero-dimensional vectors");
  if (values_.size() != n_ * d_) throw ShapeError("build_index: value count differs from N*d");
}

NeighborIndex build_index(const Tensor& vectors) {
  if (vectors.ndim() != 2) throw ShapeError("build_index expects an [N x d] matrix");
  return NeighborIndex(vectors);
}

std::vector<Neighbor> NeighborIndex::knn(std::span<const double> query, std::size_t k,
                                         bool exclude_exact_match) const {
  if (query.size() != d_) throw ShapeError("knn: query dimension differs from index");
  const std::size_t available = n_ - (exclude_exact_match ? 1 : 0);
  require(k >= 1 && k <= available, "knn: k=" + std::to_string(k) + " exceeds the " +
                                        std::to_string(available) + " available rows");
  std::vector<Neighbor> all;
  all.reserve(n_);
  bool skipped = !exclude_exact_match;
  for (std::size_t i = 0; i < n_; ++i) {
    auto r = row(i);
    double dist = 0.0;
    bool identical = true;
    for (std::size_t j = 0; j < d_; ++j) {
      const double diff = r[j] - query[j];
      identical = identical && diff == 0.0;
      dist += diff * diff;
    }
    if (!skipped && identical) {
      skipped = true;
      continue;
    }
    all.push_back({i, dist});
  }
  // Without an exact match to skip, one extra candidate remains; harmless.
  auto less = [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.row < b.row);
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), less);
  all.resize(k);
  return all;
}

void NeighborIndex::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open index snapshot for writing: " + path.string());
  os << "KNN1\n" << n_ << ' ' << d_ << '\n';
  os.write(reinterpret_cast<const char*>(values_.data()),
           static_cast<std::streamsize>(values_.size() * sizeof(double)));
  if (!os) throw std::runtime_error("failed writing index snapshot: " + path.string());
}

NeighborIndex NeighborIndex::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open index snapshot: " + path.string());
  std::string magic, line;
  std::getline(is, magic);
  if (magic != "KNN1") throw ValidationError("not a KNN1 snapshot: " + path.string());
  std::getline(is, line);
  std::istringstream hs(line);
  std::size_t n = 0, d = 0;
  hs >> n >> d;
  if (!hs) throw ValidationError("malformed KNN1 header in " + path.string());
  std::vector<double> values(n * d);
  is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!is) throw ValidationError("truncated KNN1 snapshot: " + path.string());
  return NeighborIndex(std::move(values), n, d);
}

OrthoBasis gram_schmidt(const std::vector<std::vector<double>>& diffs, std::vector<double> origin) {
  OrthoBasis out;
  out.origin = std::move(origin);
  out.source_count = diffs.size();
  for (const auto& d : diffs) {
    const double n0 = norm(d);
    if (n0 == 0.0) continue;
    std::vector<double> v = d;
    project_out(v, out.basis);
    const double n1 = norm(v);
    if (n1 < kGramSchmidtDropTol * n0) continue;
    for (auto& x : v) x /= n1;
    out.basis.push_back(std::move(v));
  }
  if (out.basis.empty()) {
    throw DegenerateNeighborhood("gram_schmidt: all " + std::to_string(diffs.size()) +
                                 " difference vectors are zero or dependent");
  }
  return out;
}

OrthoBasis neighborhood_basis(const NeighborIndex& index, std::span<const double> x, std::size_t k,
                              bool exclude_exact_match) {
  auto nbrs = index.knn(x, k, exclude_exact_match);
  std::vector<std::vector<double>> diffs;
  diffs.reserve(nbrs.size());
  for (const auto& nb : nbrs) {
    auto r = index.row(nb.row);
    std::vector<double> d(x.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = r[i] - x[i];
    diffs.push_back(std::move(d));
  }
  return gram_schmidt(diffs, {x.begin(), x.end()});
}

void draw_inmanifold(std::span<double> out, const OrthoBasis& basis, double sigma, std::mt19937_64& rng) {
  require(!basis.basis.empty(), "sample_inmanifold_noise: empty basis");
  require(sigma > 0.0, "sample_inmanifold_noise: sigma must be > 0");
  const auto d = out.size();
  if (basis.basis.front().size() != d) throw ShapeError("draw_inmanifold: output dimension differs from basis");
  std::normal_distribution<double> nd(0.0, sigma);
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& q : basis.basis) {
    const double c = nd(rng);
    const double* qp = q.data();
    for (std::size_t i = 0; i < d; ++i) out[i] += c * qp[i];
  }
}

Tensor sample_inmanifold_noise(std::span<const double> x, const OrthoBasis& basis, double sigma,
                               std::mt19937_64& rng, std::optional<double> mix_ratio) {
  require(!basis.basis.empty(), "sample_inmanifold_noise: empty basis");
  const auto d = basis.basis.front().size();
  if (!x.empty() && x.size() != d) throw ShapeError("sample_inmanifold_noise: x dimension differs from basis");
  std::vector<double> eps(d);
  draw_inmanifold(eps, basis, sigma, rng);
  auto out = Tensor::vector(std::move(eps));
  if (mix_ratio) {
    if (norm(out.data()) == 0.0) return Tensor::zeros({d});
    out = rescale_relative(out, Tensor::vector({x.begin(), x.end()}), *mix_ratio);
  }
  return out;
}

double lle_reconstruction_error(std::span<const double> x,
                                const std::vector<std::vector<double>>& neighbors) {
  require(!neighbors.empty(), "lle_reconstruction_error: need at least one neighbor");
  // Orthonormal basis of span(neighbors); the least-squares residual is the
  // component of x orthogonal to that span.
  std::vector<std::vector<double>> q;
  for (const auto& n : neighbors) {
    if (n.size() != x.size()) throw ShapeError("lle_reconstruction_error: neighbor dimension mismatch");
    const double n0 = norm(n);
    if (n0 == 0.0) continue;
    std::vector<double> v = n;
    project_out(v, q);
    const double n1 = norm(v);
    if (n1 <= 1e-12 * n0) continue;
    for (auto& e : v) e /= n1;
    q.push_back(std::move(v));
  }
  std::vector<double> r(x.begin(), x.end());
  project_out(r, q);
  return dot(r, r);
}

InManifoldSampler::InManifoldSampler(const Tensor& embedding_table, std::size_t k)
    : index_(embedding_table), k_(k) {
  if (index_.size() < k_ + 1) {
    throw ValidationError("in-manifold noise needs vocabulary >= k+1 (" + std::to_string(k_ + 1) +
                          "), got " + std::to_string(index_.size()));
  }
}

const OrthoBasis& InManifoldSampler::basis_for(std::size_t token_id) {
  if (token_id >= index_.size()) throw IndexError("token id outside the neighbor index");
  auto it = cache_.find(token_id);
  if (it == cache_.end()) {
    std::optional<OrthoBasis> b;
    try {
      b = neighborhood_basis(index_, index_.row(token_id), k_, true);
    } catch (const DegenerateNeighborhood&) {
      b.reset();
    }
    it = cache_.emplace(token_id, std::move(b)).first;
  }
  if (!it->second) throw DegenerateNeighborhood("token " + std::to_string(token_id) + " has a degenerate neighborhood");
  return *it->second;
}

Tensor InManifoldSampler::sample(std::span<const std::size_t> ids, const Tensor& activation, double sigma,
                                 std::optional<double> mix_ratio, std::mt19937_64& rng) {
  const auto m = activation.rows(), d = activation.cols();
  if (d != index_.dim()) throw ShapeError("in-manifold sampler: activation width differs from index");
  if (ids.size() > m) throw ShapeError("in-manifold sampler: more ids than activation rows");
  std::vector<double> out(m * d, 0.0);
  auto act = activation.data();
  for (std::size_t t = 0; t < ids.size(); ++t) {
    std::span<const double> x(act.data() + t * d, d);
    Tensor eps;
    try {
      eps = sample_inmanifold_noise(x, basis_for(ids[t]), sigma, rng, mix_ratio);
    } catch (const DegenerateNeighborhood&) {
      if (fallbacks_++ == 0) {
        std::cerr << "warning: degenerate neighborhood for token " << ids[t]
                  << "; falling back to standard Gaussian noise\n";
      }
      eps = sample_standard_noise({d}, sigma, rng);
      if (mix_ratio) eps = rescale_relative(eps, Tensor::vector({x.begin(), x.end()}), *mix_ratio);
    }
    std::copy(eps.data().begin(), eps.data().end(), out.begin() + static_cast<std::ptrdiff_t>(t * d));
  }
  return Tensor::from({m, d}, std::move(out));
}

}  // namespace lnsr
