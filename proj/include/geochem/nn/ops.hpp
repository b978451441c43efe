#pragma once

#include <cstdint>
#include <vector>

#include "geochem/nn/tensor.hpp"
#include "geochem/random.hpp"

namespace geochem::nn {

// Differentiable primitives. Shape problems throw ConfigError naming the op.

/// a[..., k] x w[k, m] -> [..., m]
Tensor matmul(const Tensor& a, const Tensor& w);

/// Elementwise, `b` either matches `a` or matches a trailing suffix of its shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor square(const Tensor& a);
Tensor exp(const Tensor& a);

/// Exact GELU: x * Phi(x).
Tensor gelu(const Tensor& a);

/// Softmax over the last axis.
Tensor softmax(const Tensor& a);

/// Normalizes the last axis to zero mean and unit variance, then applies the
/// per-feature gain and bias.
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-9);

/// Rows of `table[V, d]` gathered by `ids`; output shape is prefix + [d] where
/// prefix has ids.size() elements in total.
Tensor embedding(const Tensor& table, const std::vector<std::size_t>& ids, Shape prefix);

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Mean of squared differences; gradients flow into both operands.
Tensor mse(const Tensor& prediction, const Tensor& target);

/// Multiplies by a fixed elementwise mask (same shape as `a`).
Tensor mul_constant(const Tensor& a, const std::vector<double>& mask);

/// Inverted dropout with a fresh mask drawn from `rng`; identity when rate is 0.
Tensor dropout(const Tensor& a, double rate, Rng& rng);

/// Multi-head scaled dot-product attention on projected inputs q, k, v of
/// shape [B, S, d]. Heads split the last axis into `heads` blocks of d/heads.
/// `key_mask` (B*S entries, 1 = attend) hides padded keys; empty means all
/// keys are visible. Keys are reduced in a content-determined order, so the
/// output for a query does not depend on how the key tokens are arranged.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 const std::vector<std::uint8_t>& key_mask = {});

}  // namespace geochem::nn
