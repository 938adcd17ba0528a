#pragma once

// Forward pass of the multi-slot pooled Gaussian posterior.
//
//   slot attention   a_kt = softmax_t(q_k . K h_t) over unmasked t,  s_k = sum_t a_kt V h_t
//   slot posteriors  mu_k = W_mu s_k,  log var_k = W_logvar s_k
//   confidence       c_k = -log sum_j var_kj
//   slot weights     w_k = softmax_k(q . P mu_k / tau + lambda c_k)
//   posterior        mu = sum_k w_k mu_k,  var = sum_k w_k var_k
//
// P is a separate projection from the attention key matrix K.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "latprobe/matrix.hpp"

namespace latprobe::slot {

struct SlotParams {
  Matrix slot_queries;  // slots x attn
  Matrix key;           // attn x hidden
  Matrix value;         // slot_dim x hidden
  Matrix w_mu;          // latent x slot_dim
  Matrix w_logvar;      // latent x slot_dim
  Vector pool_query;    // pool_dim
  Matrix pool_key;      // pool_dim x latent
  double temperature = 1.0;
  double confidence_weight = 1.0;

  std::size_t slots() const { return slot_queries.rows(); }
  std::size_t hidden() const { return key.cols(); }
  std::size_t latent() const { return w_mu.rows(); }
  /// Throws DimensionMismatch or InvalidArgument (temperature <= 0,
  /// confidence weight < 0, non-finite entries).
  void validate() const;
};

struct Shape {
  std::size_t slots = 8;
  std::size_t hidden = 32;
  std::size_t attn = 16;
  std::size_t slot_dim = 32;
  std::size_t latent = 16;
  std::size_t pool_dim = 16;
};

/// Gaussian entries scaled by 1/sqrt(fan_in).
SlotParams random_params(const Shape& shape, std::uint64_t seed, double temperature = 1.0,
                         double confidence_weight = 1.0);

inline constexpr double kVarianceFloor = 1e-12;

struct SlotAttention {
  Matrix weights;  // slots x T, zero at masked positions
  Matrix slots;    // slots x slot_dim
};

/// `mask[t]` true keeps position t; an empty mask keeps all. Throws AllMasked.
SlotAttention slot_pool(const Matrix& states, const std::vector<bool>& mask, const SlotParams& p);

struct SlotPosteriors {
  Matrix mu;       // slots x latent
  Matrix log_var;  // slots x latent
  Matrix var;      // exp(log_var), floored at kVarianceFloor
};

SlotPosteriors slot_posteriors(const Matrix& slots, const SlotParams& p);

struct Posterior {
  Vector mu;
  Vector var;
  Vector confidence;  // c_k
  Vector weights;     // w_k
};

Posterior confidence_combine(const SlotPosteriors& sp, const SlotParams& p);

/// Attention, slot posteriors and combination in one call.
Posterior encode(const Matrix& states, const std::vector<bool>& mask, const SlotParams& p);

/// mu + sqrt(var) * eps.
Vector reparameterize(const Posterior& post, std::span<const double> eps);

/// KL(N(mu, diag var) || N(0, I)). Throws NonPositiveVariance.
double kl_to_standard_normal(std::span<const double> mu, std::span<const double> var);

/// (epoch % cycle) / cycle * max_beta.
double beta_at(std::size_t epoch, std::size_t cycle = 15, double max_beta = 0.03);

/// JSON header line with shapes and scalars, then float64 payload in field
/// order.
void save_params(const SlotParams& p, const std::filesystem::path& path);
SlotParams load_params(const std::filesystem::path& path);

}  // namespace latprobe::slot
