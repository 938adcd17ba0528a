#include "latprobe/mlp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "json.hpp"
#include "latprobe/errors.hpp"
#include "latprobe/kernels.hpp"
#include "latprobe/rng.hpp"

namespace latprobe::mlp {

namespace {

using json = nlohmann::ordered_json;

std::vector<std::size_t> usable_rows(const Matrix& z, std::span<const double> y, std::span<const std::size_t> rows) {
  std::vector<std::size_t> out;
  out.reserve(rows.size());
  for (auto r : rows) {
    if (!std::isfinite(y[r])) continue;
    const auto zr = z.row(r);
    if (std::all_of(zr.begin(), zr.end(), [](double v) { return std::isfinite(v); })) out.push_back(r);
  }
  return out;
}

double score(const MlpModel& m, const Matrix& z, std::span<const double> y, std::span<const std::size_t> rows) {
  const auto use = usable_rows(z, y, rows);
  if (use.size() < 2) return std::nan("");
  Vector truth(use.size());
  for (std::size_t i = 0; i < use.size(); ++i) truth[i] = y[use[i]];
  try {
    return stats::r2(truth, m.predict_rows(z, use));
  } catch (const Error&) {
    return std::nan("");
  }
}

Layer init_layer(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Layer l{Matrix(out, in), Vector(out)};
  for (double& w : l.weight.data()) w = u(rng);
  for (double& b : l.bias) b = u(rng);
  return l;
}

// x (B x in) -> x W^T + b
Matrix affine(const Matrix& x, const Layer& l) {
  Matrix h = kernels::par::matmul(x, l.weight.transposed());
  for (std::size_t i = 0; i < h.rows(); ++i) {
    auto r = h.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += l.bias[j];
  }
  return h;
}

void relu(Matrix& h) {
  for (double& v : h.data()) v = v > 0.0 ? v : 0.0;
}

// zeroes gradient entries whose activation was clipped
void relu_backward(Matrix& grad, const Matrix& act) {
  auto g = grad.data();
  const auto a = act.data();
  for (std::size_t i = 0; i < g.size(); ++i)
    if (a[i] <= 0.0) g[i] = 0.0;
}

struct Adam {
  std::vector<Layer> m, v;
  std::size_t t = 0;
};

Layer zeros_like(const Layer& l) { return {Matrix(l.weight.rows(), l.weight.cols()), Vector(l.bias.size(), 0.0)}; }

void adamw_update(std::span<double> p, std::span<const double> g, std::span<double> m, std::span<double> v,
                  const TrainOptions& o, double bc1, double bc2) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] -= o.learning_rate * o.weight_decay * p[i];
    m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
    v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
    const double mh = m[i] / bc1;
    const double vh = v[i] / bc2;
    p[i] -= o.learning_rate * mh / (std::sqrt(vh) + o.adam_eps);
  }
}

Vector column_sums(const Matrix& a) {
  Vector s(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto r = a.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) s[j] += r[j];
  }
  return s;
}

// One minibatch step; returns the batch loss.
double train_step(std::vector<Layer>& layers, Adam& adam, const Matrix& x, std::span<const double> t,
                  const TrainOptions& o) {
  const std::size_t n = x.rows();
  Matrix h1 = affine(x, layers[0]);
  relu(h1);
  Matrix h2 = affine(h1, layers[1]);
  relu(h2);
  const Matrix out = affine(h2, layers[2]);

  double loss = 0.0;
  Matrix d_out(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double e = out(i, 0) - t[i];
    loss += e * e;
    d_out(i, 0) = 2.0 * e / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) return loss;

  std::vector<Layer> grads(3);
  grads[2] = {kernels::par::matmul_tn(d_out, h2), column_sums(d_out)};
  Matrix d_h2 = kernels::par::matmul(d_out, layers[2].weight);
  relu_backward(d_h2, h2);
  grads[1] = {kernels::par::matmul_tn(d_h2, h1), column_sums(d_h2)};
  Matrix d_h1 = kernels::par::matmul(d_h2, layers[1].weight);
  relu_backward(d_h1, h1);
  grads[0] = {kernels::par::matmul_tn(d_h1, x), column_sums(d_h1)};

  ++adam.t;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(adam.t));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(adam.t));
  for (std::size_t l = 0; l < 3; ++l) {
    adamw_update(layers[l].weight.data(), grads[l].weight.data(), adam.m[l].weight.data(), adam.v[l].weight.data(),
                 o, bc1, bc2);
    adamw_update(layers[l].bias, grads[l].bias, adam.m[l].bias, adam.v[l].bias, o, bc1, bc2);
  }
  return loss;
}

std::string log_text(const std::vector<EpochRecord>& log) {
  std::ostringstream s;
  for (const auto& e : log) s << " [epoch " << e.epoch << " loss " << e.train_loss << " val_r2 " << e.val_r2 << "]";
  return s.str();
}

json vec_json(const Vector& v) { return json(v); }

Vector vec_from(const json& j) { return j.get<Vector>(); }

}  // namespace

double MlpModel::forward_standardized(std::span<const double> zs) const {
  if (zs.size() != dim()) throw Error(ErrorKind::DimensionMismatch, "mlp input has the wrong dimension");
  Vector a(zs.begin(), zs.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    Vector next(L.bias);
    for (std::size_t o = 0; o < next.size(); ++o) next[o] += dot(L.weight.row(o), a);
    if (l + 1 < layers.size())
      for (double& v : next) v = v > 0.0 ? v : 0.0;
    a = std::move(next);
  }
  return a[0];
}

double MlpModel::predict(std::span<const double> z) const {
  return y_scaler.mean + y_scaler.scale * forward_standardized(x_scaler.transform_point(z));
}

Vector MlpModel::predict_rows(const Matrix& z, std::span<const std::size_t> rows) const {
  Matrix h = x_scaler.transform_rows(z, rows);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = affine(h, layers[l]);
    if (l + 1 < layers.size()) relu(h);
  }
  Vector out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = y_scaler.mean + y_scaler.scale * h(i, 0);
  return out;
}

MlpModel train_mlp(const Matrix& z, std::span<const double> y, const stats::SplitAssignment& split,
                   const std::string& target, const TrainOptions& opts) {
  if (y.size() != z.rows()) throw Error(ErrorKind::DimensionMismatch, "target length differs from latent rows");
  if (opts.hidden == 0 || opts.batch_size == 0 || opts.max_epochs == 0 || opts.min_epochs > opts.max_epochs)
    throw Error(ErrorKind::InvalidArgument, "invalid mlp training options");
  const auto train = usable_rows(z, y, split.train);
  const auto val = usable_rows(z, y, split.val);
  if (train.size() < 2 * opts.hidden)
    throw Error(ErrorKind::TooFewRows, "mlp needs at least 2 x hidden width training rows");
  const double y0 = y[train.front()];
  if (std::all_of(train.begin(), train.end(), [&](std::size_t r) { return y[r] == y0; }))
    throw Error(ErrorKind::ZeroVarianceTarget, target + " is constant on training rows");

  MlpModel m;
  m.target = target;
  m.x_scaler = stats::Standardizer::fit(z, train);
  m.y_scaler = stats::ScalarStandardizer::fit(y, train);
  m.split_fingerprint = split.fingerprint();

  Rng rng = make_rng(opts.seed + seed_offset::mlp);
  const std::size_t d = z.cols();
  m.layers.push_back(init_layer(d, opts.hidden, rng));
  m.layers.push_back(init_layer(opts.hidden, opts.hidden, rng));
  m.layers.push_back(init_layer(opts.hidden, 1, rng));

  const Matrix xs = m.x_scaler.transform(z);
  Vector ts(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) ts[i] = (y[i] - m.y_scaler.mean) / m.y_scaler.scale;

  Adam adam;
  for (const auto& l : m.layers) {
    adam.m.push_back(zeros_like(l));
    adam.v.push_back(zeros_like(l));
  }

  std::vector<Layer> best = m.layers;
  double best_val = -std::numeric_limits<double>::infinity();
  double reference = -std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::vector<std::size_t> order = train;

  for (std::size_t epoch = 1; epoch <= opts.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t lo = 0; lo < order.size(); lo += opts.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + opts.batch_size);
      const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
      const Matrix xb = xs.select_rows(idx);
      Vector tb(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) tb[i] = ts[idx[i]];
      const double loss = train_step(m.layers, adam, xb, tb, opts);
      if (!std::isfinite(loss)) {
        m.log.push_back({epoch, loss, std::nan("")});
        throw Error(ErrorKind::NonFiniteLoss, target + ": loss diverged;" + log_text(m.log));
      }
      loss_sum += loss * static_cast<double>(idx.size());
    }
    const double val_r2 = score(m, z, y, val);
    m.log.push_back({epoch, loss_sum / static_cast<double>(order.size()), val_r2});

    if (std::isfinite(val_r2) && val_r2 > best_val) {
      best_val = val_r2;
      best = m.layers;
      m.best_epoch = epoch;
    }
    if (std::isfinite(val_r2) && val_r2 > reference + opts.min_improvement) {
      reference = val_r2;
      stale = 0;
    } else {
      ++stale;
    }
    if (epoch >= opts.min_epochs && stale >= opts.patience) break;
  }
  if (m.best_epoch == 0) m.best_epoch = m.log.size();
  else m.layers = std::move(best);

  m.r2 = {score(m, z, y, split.train), score(m, z, y, split.val), score(m, z, y, split.test)};
  return m;
}

Vector gradient(const MlpModel& model, std::span<const double> zs) {
  if (zs.size() != model.dim()) throw Error(ErrorKind::DimensionMismatch, "mlp input has the wrong dimension");
  const std::size_t depth = model.layers.size();
  std::vector<Vector> pre(depth);
  Vector a(zs.begin(), zs.end());
  for (std::size_t l = 0; l < depth; ++l) {
    const auto& L = model.layers[l];
    pre[l] = L.bias;
    for (std::size_t o = 0; o < pre[l].size(); ++o) pre[l][o] += dot(L.weight.row(o), a);
    a = pre[l];
    if (l + 1 < depth)
      for (double& v : a) v = v > 0.0 ? v : 0.0;
  }
  Vector g(1, 1.0);
  for (std::size_t l = depth; l-- > 0;) {
    const auto& W = model.layers[l].weight;
    if (l + 1 < depth)
      for (std::size_t o = 0; o < g.size(); ++o)
        if (pre[l][o] <= 0.0) g[o] = 0.0;
    Vector back(W.cols(), 0.0);
    for (std::size_t o = 0; o < W.rows(); ++o) {
      if (g[o] == 0.0) continue;
      const auto row = W.row(o);
      for (std::size_t i = 0; i < back.size(); ++i) back[i] += g[o] * row[i];
    }
    g = std::move(back);
  }
  return g;
}

SteeringPath local_steer(const MlpModel& model, std::span<const double> start_standardized, double step,
                         std::size_t steps, int sign) {
  if (!(step > 0.0)) throw Error(ErrorKind::InvalidArgument, "steering step must be positive");
  if (sign != 1 && sign != -1) throw Error(ErrorKind::InvalidArgument, "steering sign must be +1 or -1");
  SteeringPath p;
  p.target = model.target;
  p.step = step;
  p.sign = sign;
  Vector cur(start_standardized.begin(), start_standardized.end());
  auto record = [&](const Vector& zs) {
    p.standardized.push_back(zs);
    p.raw.push_back(model.x_scaler.inverse_point(zs));
    p.predicted.push_back(model.y_scaler.mean + model.y_scaler.scale * model.forward_standardized(zs));
  };
  record(cur);
  for (std::size_t k = 0; k < steps; ++k) {
    const Vector g = gradient(model, cur);
    const double n = norm2(g);
    if (n < kVanishingGradient) {
      p.vanishing_gradient = true;
      break;
    }
    for (std::size_t j = 0; j < cur.size(); ++j) cur[j] += step * sign * g[j] / (n + kSteerNormFloor);
    record(cur);
  }
  return p;
}

std::string regime_label(double delta, double linear_r2) {
  if (delta < 0.12 && linear_r2 >= 0.4) return "globally-linear candidate";
  if (delta >= 0.25) return "nonlinear structure";
  return "intermediate";
}

DeltaR2 delta_r2(const probe::ProbeModel& linear, const MlpModel& model) {
  if (linear.split_fingerprint != model.split_fingerprint)
    throw Error(ErrorKind::SplitMismatch, "linear probe and mlp were fitted on different splits");
  DeltaR2 d;
  d.target = model.target;
  d.linear_r2 = linear.r2.test;
  d.mlp_r2 = model.r2.test;
  d.delta = d.mlp_r2 - d.linear_r2;
  d.regime = regime_label(d.delta, d.linear_r2);
  return d;
}

void save(const MlpModel& model, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little, "parameter files are little-endian");
  json h;
  h["format"] = "latprobe-mlp";
  h["version"] = 1;
  h["target"] = model.target;
  json shapes = json::array();
  for (const auto& l : model.layers) shapes.push_back({l.weight.rows(), l.weight.cols()});
  h["layers"] = shapes;
  h["x_mean"] = vec_json(model.x_scaler.mean);
  h["x_scale"] = vec_json(model.x_scaler.scale);
  h["y_mean"] = model.y_scaler.mean;
  h["y_scale"] = model.y_scaler.scale;
  h["best_epoch"] = model.best_epoch;
  h["split_fingerprint"] = model.split_fingerprint;
  h["r2"] = {{"train", model.r2.train}, {"val", model.r2.val}, {"test", model.r2.test}};
  json log = json::array();
  for (const auto& e : model.log) log.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_r2", e.val_r2}});
  h["log"] = log;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << h.dump() << '\n';
  for (const auto& l : model.layers) {
    out.write(reinterpret_cast<const char*>(l.weight.data().data()),
              static_cast<std::streamsize>(l.weight.data().size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(l.bias.data()), static_cast<std::streamsize>(l.bias.size() * sizeof(double)));
  }
  if (!out) throw Error(ErrorKind::IoError, "short write to " + path.string());
}

MlpModel load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  json h;
  try {
    h = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::IoError, "bad mlp header in " + path.string() + ": " + e.what());
  }
  if (h.value("format", "") != "latprobe-mlp") throw Error(ErrorKind::IoError, path.string() + " is not an mlp file");
  MlpModel m;
  m.target = h.at("target").get<std::string>();
  m.x_scaler.mean = vec_from(h.at("x_mean"));
  m.x_scaler.scale = vec_from(h.at("x_scale"));
  m.y_scaler.mean = h.at("y_mean").get<double>();
  m.y_scaler.scale = h.at("y_scale").get<double>();
  m.best_epoch = h.at("best_epoch").get<std::size_t>();
  m.split_fingerprint = h.at("split_fingerprint").get<std::uint64_t>();
  const auto& r = h.at("r2");
  auto num = [](const json& j) { return j.is_null() ? std::nan("") : j.get<double>(); };
  m.r2 = {num(r.at("train")), num(r.at("val")), num(r.at("test"))};
  for (const auto& e : h.at("log")) m.log.push_back({e.at("epoch").get<std::size_t>(), num(e.at("train_loss")), num(e.at("val_r2"))});
  for (const auto& s : h.at("layers")) {
    Layer l{Matrix(s[0].get<std::size_t>(), s[1].get<std::size_t>()), Vector(s[0].get<std::size_t>())};
    in.read(reinterpret_cast<char*>(l.weight.data().data()),
            static_cast<std::streamsize>(l.weight.data().size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(l.bias.data()), static_cast<std::streamsize>(l.bias.size() * sizeof(double)));
    if (!in) throw Error(ErrorKind::IoError, "truncated parameter payload in " + path.string());
    m.layers.push_back(std::move(l));
  }
  if (m.layers.size() != 3 || m.x_scaler.mean.size() != m.dim())
    throw Error(ErrorKind::IoError, "inconsistent mlp shapes in " + path.string());
  return m;
}

}  // namespace latprobe::mlp
