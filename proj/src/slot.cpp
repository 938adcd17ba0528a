#include "latprobe/slot.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "latprobe/errors.hpp"
#include "latprobe/rng.hpp"

namespace latprobe::slot {

namespace {

using json = nlohmann::ordered_json;

void softmax_inplace(std::span<double> x) {
  const double top = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double& v : x) {
    v = std::exp(v - top);
    sum += v;
  }
  for (double& v : x) v /= sum;
}

// m (r x c) times vector of length c
Vector apply(const Matrix& m, std::span<const double> x) {
  Vector out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = dot(m.row(i), x);
  return out;
}

void need(bool ok, const char* what) {
  if (!ok) throw Error(ErrorKind::DimensionMismatch, what);
}

bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

Matrix gaussian(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(c)));
  for (double& v : m.data()) v = nd(rng);
  return m;
}

// Named matrices in serialization order.
std::vector<std::pair<const char*, Matrix*>> fields(SlotParams& p, Matrix& pool_query) {
  return {{"slot_queries", &p.slot_queries}, {"key", &p.key},           {"value", &p.value},
          {"w_mu", &p.w_mu},                 {"w_logvar", &p.w_logvar}, {"pool_query", &pool_query},
          {"pool_key", &p.pool_key}};
}

}  // namespace

void SlotParams::validate() const {
  need(slot_queries.rows() > 0, "need at least one slot");
  need(slot_queries.cols() == key.rows(), "slot query width differs from key rows");
  need(value.cols() == key.cols(), "value and key act on different hidden sizes");
  need(w_mu.cols() == value.rows() && w_logvar.cols() == value.rows(), "posterior maps expect slot_dim inputs");
  need(w_mu.rows() == w_logvar.rows(), "mean and log-variance maps differ in latent size");
  need(pool_key.cols() == w_mu.rows() && pool_key.rows() == pool_query.size(), "pooling projection shape");
  if (!(temperature > 0.0)) throw Error(ErrorKind::InvalidArgument, "temperature must be positive");
  if (!(confidence_weight >= 0.0)) throw Error(ErrorKind::InvalidArgument, "confidence weight must be >= 0");
  for (const Matrix* m : {&slot_queries, &key, &value, &w_mu, &w_logvar, &pool_key})
    if (!all_finite(m->data())) throw Error(ErrorKind::InvalidArgument, "non-finite slot parameter");
  if (!all_finite(pool_query)) throw Error(ErrorKind::InvalidArgument, "non-finite slot parameter");
}

SlotParams random_params(const Shape& s, std::uint64_t seed, double temperature, double confidence_weight) {
  Rng rng = make_rng(seed);
  SlotParams p;
  p.slot_queries = gaussian(s.slots, s.attn, rng);
  p.key = gaussian(s.attn, s.hidden, rng);
  p.value = gaussian(s.slot_dim, s.hidden, rng);
  p.w_mu = gaussian(s.latent, s.slot_dim, rng);
  p.w_logvar = gaussian(s.latent, s.slot_dim, rng);
  const Matrix q = gaussian(1, s.pool_dim, rng);
  p.pool_query.assign(q.data().begin(), q.data().end());
  p.pool_key = gaussian(s.pool_dim, s.latent, rng);
  p.temperature = temperature;
  p.confidence_weight = confidence_weight;
  return p;
}

SlotAttention slot_pool(const Matrix& states, const std::vector<bool>& mask, const SlotParams& p) {
  need(states.cols() == p.hidden(), "token states have the wrong hidden size");
  need(mask.empty() || mask.size() == states.rows(), "mask length differs from token count");
  std::vector<std::size_t> keep;
  for (std::size_t t = 0; t < states.rows(); ++t)
    if (mask.empty() || mask[t]) keep.push_back(t);
  if (keep.empty()) throw Error(ErrorKind::AllMasked, "every token position is masked");

  std::vector<Vector> keys, values;
  for (auto t : keep) {
    keys.push_back(apply(p.key, states.row(t)));
    values.push_back(apply(p.value, states.row(t)));
  }
  SlotAttention out{Matrix(p.slots(), states.rows()), Matrix(p.slots(), p.value.rows())};
  Vector logits(keep.size());
  for (std::size_t k = 0; k < p.slots(); ++k) {
    for (std::size_t i = 0; i < keep.size(); ++i) logits[i] = dot(p.slot_queries.row(k), keys[i]);
    softmax_inplace(logits);
    auto s = out.slots.row(k);
    for (std::size_t i = 0; i < keep.size(); ++i) {
      out.weights(k, keep[i]) = logits[i];
      for (std::size_t j = 0; j < s.size(); ++j) s[j] += logits[i] * values[i][j];
    }
  }
  return out;
}

SlotPosteriors slot_posteriors(const Matrix& slots, const SlotParams& p) {
  need(slots.cols() == p.w_mu.cols(), "slot vectors have the wrong width");
  const std::size_t k = slots.rows(), d = p.latent();
  SlotPosteriors out{Matrix(k, d), Matrix(k, d), Matrix(k, d)};
  for (std::size_t s = 0; s < k; ++s) {
    const auto mu = apply(p.w_mu, slots.row(s));
    const auto lv = apply(p.w_logvar, slots.row(s));
    for (std::size_t j = 0; j < d; ++j) {
      out.mu(s, j) = mu[j];
      out.log_var(s, j) = lv[j];
      out.var(s, j) = std::max(std::exp(lv[j]), kVarianceFloor);
    }
  }
  return out;
}

Posterior confidence_combine(const SlotPosteriors& sp, const SlotParams& p) {
  const std::size_t k = sp.mu.rows(), d = sp.mu.cols();
  if (k == 0) throw Error(ErrorKind::InvalidArgument, "need at least one slot posterior");
  need(d == p.pool_key.cols(), "slot posterior width differs from pooling projection");
  Posterior out;
  out.confidence.resize(k);
  out.weights.resize(k);
  for (std::size_t s = 0; s < k; ++s) {
    // -log sum_j exp(log var_j), evaluated stably
    const auto var = sp.var.row(s);
    double top = -std::numeric_limits<double>::infinity();
    for (double v : var) top = std::max(top, std::log(v));
    double sum = 0.0;
    for (double v : var) sum += std::exp(std::log(v) - top);
    out.confidence[s] = -(top + std::log(sum));
    const double attn = dot(p.pool_query, apply(p.pool_key, sp.mu.row(s)));
    out.weights[s] = attn / p.temperature + p.confidence_weight * out.confidence[s];
  }
  softmax_inplace(out.weights);
  out.mu.assign(d, 0.0);
  out.var.assign(d, 0.0);
  for (std::size_t s = 0; s < k; ++s)
    for (std::size_t j = 0; j < d; ++j) {
      out.mu[j] += out.weights[s] * sp.mu(s, j);
      out.var[j] += out.weights[s] * sp.var(s, j);
    }
  return out;
}

Posterior encode(const Matrix& states, const std::vector<bool>& mask, const SlotParams& p) {
  p.validate();
  const auto att = slot_pool(states, mask, p);
  return confidence_combine(slot_posteriors(att.slots, p), p);
}

Vector reparameterize(const Posterior& post, std::span<const double> eps) {
  need(eps.size() == post.mu.size(), "noise has the wrong dimension");
  if (!all_finite(eps)) throw Error(ErrorKind::NonFiniteInput, "noise must be finite");
  Vector z(post.mu.size());
  for (std::size_t j = 0; j < z.size(); ++j) z[j] = post.mu[j] + std::sqrt(post.var[j]) * eps[j];
  return z;
}

double kl_to_standard_normal(std::span<const double> mu, std::span<const double> var) {
  need(mu.size() == var.size(), "mean and variance differ in length");
  double kl = 0.0;
  for (std::size_t j = 0; j < mu.size(); ++j) {
    if (!(var[j] > 0.0) || !std::isfinite(var[j]))
      throw Error(ErrorKind::NonPositiveVariance, "variance must be positive and finite");
    kl += mu[j] * mu[j] + var[j] - std::log(var[j]) - 1.0;
  }
  return 0.5 * kl;
}

double beta_at(std::size_t epoch, std::size_t cycle, double max_beta) {
  if (cycle == 0) throw Error(ErrorKind::InvalidArgument, "cycle length must be positive");
  return static_cast<double>(epoch % cycle) / static_cast<double>(cycle) * max_beta;
}

void save_params(const SlotParams& p, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little, "parameter files are little-endian");
  p.validate();
  SlotParams copy = p;
  Matrix pq(1, p.pool_query.size());
  std::copy(p.pool_query.begin(), p.pool_query.end(), pq.data().begin());
  json h;
  h["format"] = "latprobe-slot";
  h["version"] = 1;
  h["temperature"] = p.temperature;
  h["confidence_weight"] = p.confidence_weight;
  json shapes = json::object();
  for (auto [name, m] : fields(copy, pq)) shapes[name] = {m->rows(), m->cols()};
  h["shapes"] = shapes;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << h.dump() << '\n';
  for (auto [name, m] : fields(copy, pq))
    out.write(reinterpret_cast<const char*>(m->data().data()), static_cast<std::streamsize>(m->data().size() * sizeof(double)));
  if (!out) throw Error(ErrorKind::IoError, "short write to " + path.string());
}

SlotParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  json h;
  try {
    h = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::IoError, "bad slot parameter header in " + path.string() + ": " + e.what());
  }
  if (h.value("format", "") != "latprobe-slot")
    throw Error(ErrorKind::IoError, path.string() + " is not a slot parameter file");
  SlotParams p;
  Matrix pq;
  p.temperature = h.at("temperature").get<double>();
  p.confidence_weight = h.at("confidence_weight").get<double>();
  for (auto [name, m] : fields(p, pq)) {
    const auto& s = h.at("shapes").at(name);
    *m = Matrix(s[0].get<std::size_t>(), s[1].get<std::size_t>());
    in.read(reinterpret_cast<char*>(m->data().data()), static_cast<std::streamsize>(m->data().size() * sizeof(double)));
    if (!in) throw Error(ErrorKind::IoError, "truncated slot parameter payload in " + path.string());
  }
  p.pool_query.assign(pq.data().begin(), pq.data().end());
  p.validate();
  return p;
}

}  // namespace latprobe::slot
