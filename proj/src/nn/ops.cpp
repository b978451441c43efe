#include "geochem/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "geochem/error.hpp"

namespace geochem::nn {

namespace {

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
    throw ConfigError(std::string(op) + ": " + detail);
}

bool is_suffix(const Shape& full, const Shape& tail) {
    if (tail.size() > full.size()) return false;
    return std::equal(tail.rbegin(), tail.rend(), full.rbegin());
}

void check_broadcast(const char* op, const Tensor& a, const Tensor& b) {
    if (!is_suffix(a.shape(), b.shape())) {
        shape_error(op, "cannot broadcast " + shape_string(b.shape()) + " onto " + shape_string(a.shape()));
    }
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& w) {
    if (w.rank() != 2 || a.rank() < 1 || a.shape().back() != w.dim(0)) {
        shape_error("matmul", shape_string(a.shape()) + " x " + shape_string(w.shape()));
    }
    const std::size_t k = w.dim(0);
    const std::size_t m = w.dim(1);
    const std::size_t n = a.numel() / k;
    std::vector<double> out(n * m, 0.0);
    const double* A = a.data().data();
    const double* W = w.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        double* o = out.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            const double* wr = W + p * m;
            for (std::size_t j = 0; j < m; ++j) o[j] += av * wr[j];
        }
    }
    Shape shape = a.shape();
    shape.back() = m;
    return make_result("matmul", std::move(shape), std::move(out), {a, w}, [n, k, m](Node& self) {
        Node& pa = parent(self, 0);
        Node& pw = parent(self, 1);
        const double* G = self.grad.data();
        if (pa.requires_grad) {
            double* dA = pa.grad_buffer().data();
            const double* W = pw.data.data();
            for (std::size_t i = 0; i < n; ++i) {
                const double* g = G + i * m;
                for (std::size_t p = 0; p < k; ++p) {
                    const double* wr = W + p * m;
                    double s = 0.0;
                    for (std::size_t j = 0; j < m; ++j) s += g[j] * wr[j];
                    dA[i * k + p] += s;
                }
            }
        }
        if (pw.requires_grad) {
            double* dW = pw.grad_buffer().data();
            const double* A = pa.data.data();
            for (std::size_t i = 0; i < n; ++i) {
                const double* g = G + i * m;
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = A[i * k + p];
                    double* dw = dW + p * m;
                    for (std::size_t j = 0; j < m; ++j) dw[j] += av * g[j];
                }
            }
        }
    });
}

namespace {

enum class Binary { Add, Sub, Mul };

Tensor binary(const char* op, Binary kind, const Tensor& a, const Tensor& b) {
    check_broadcast(op, a, b);
    const std::size_t n = a.numel();
    const std::size_t nb = b.numel();
    std::vector<double> out(n);
    const auto& A = a.data();
    const auto& B = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double bv = B[i % nb];
        out[i] = kind == Binary::Add ? A[i] + bv : kind == Binary::Sub ? A[i] - bv : A[i] * bv;
    }
    return make_result(op, a.shape(), std::move(out), {a, b}, [kind, n, nb](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        const auto& G = self.grad;
        if (pa.requires_grad) {
            auto& dA = pa.grad_buffer();
            for (std::size_t i = 0; i < n; ++i) dA[i] += kind == Binary::Mul ? G[i] * pb.data[i % nb] : G[i];
        }
        if (pb.requires_grad) {
            auto& dB = pb.grad_buffer();
            for (std::size_t i = 0; i < n; ++i) {
                const double g = kind == Binary::Add ? G[i] : kind == Binary::Sub ? -G[i] : G[i] * pa.data[i];
                dB[i % nb] += g;
            }
        }
    });
}

template <typename Fwd, typename Deriv>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Deriv deriv) {
    std::vector<double> out(a.numel());
    const auto& A = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(A[i]);
    return make_result(op, a.shape(), std::move(out), {a}, [deriv](Node& self) {
        Node& pa = parent(self, 0);
        auto& dA = pa.grad_buffer();
        for (std::size_t i = 0; i < dA.size(); ++i) dA[i] += self.grad[i] * deriv(pa.data[i], self.data[i]);
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", Binary::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", Binary::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", Binary::Mul, a, b); }

Tensor scale(const Tensor& a, double factor) {
    return unary("scale", a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
    return unary("add_scalar", a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& a) {
    return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor exp(const Tensor& a) {
    return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor gelu(const Tensor& a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    return unary(
        "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
        [inv_sqrt_2pi](double x, double) {
            const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            return cdf + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
        });
}

Tensor softmax(const Tensor& a) {
    if (a.rank() < 1) shape_error("softmax", "needs at least one axis");
    const std::size_t d = a.shape().back();
    const std::size_t rows = a.numel() / d;
    std::vector<double> out(a.numel());
    const auto& A = a.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = A.data() + r * d;
        double* y = out.data() + r * d;
        const double m = *std::max_element(x, x + d);
        double z = 0.0;
        for (std::size_t j = 0; j < d; ++j) z += (y[j] = std::exp(x[j] - m));
        for (std::size_t j = 0; j < d; ++j) y[j] /= z;
    }
    return make_result("softmax", a.shape(), std::move(out), {a}, [rows, d](Node& self) {
        auto& dA = parent(self, 0).grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.data.data() + r * d;
            const double* g = self.grad.data() + r * d;
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += g[j] * y[j];
            for (std::size_t j = 0; j < d; ++j) dA[r * d + j] += y[j] * (g[j] - dot);
        }
    });
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
    const std::size_t d = a.shape().back();
    if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
        shape_error("layer_norm", "gain/bias must have shape [" + std::to_string(d) + "]");
    }
    const std::size_t rows = a.numel() / d;
    std::vector<double> out(a.numel());
    std::vector<double> xhat(a.numel());
    std::vector<double> inv(rows);
    const auto& A = a.data();
    const auto& Gn = gain.data();
    const auto& Bs = bias.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = A.data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += x[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= static_cast<double>(d);
        inv[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (x[j] - mu) * inv[r];
            xhat[r * d + j] = h;
            out[r * d + j] = h * Gn[j] + Bs[j];
        }
    }
    return make_result("layer_norm", a.shape(), std::move(out), {a, gain, bias},
                       [rows, d, xhat = std::move(xhat), inv = std::move(inv)](Node& self) {
                           Node& pa = parent(self, 0);
                           Node& pg = parent(self, 1);
                           Node& pb = parent(self, 2);
                           const auto& G = self.grad;
                           if (pg.requires_grad) {
                               auto& dG = pg.grad_buffer();
                               for (std::size_t i = 0; i < G.size(); ++i) dG[i % d] += G[i] * xhat[i];
                           }
                           if (pb.requires_grad) {
                               auto& dB = pb.grad_buffer();
                               for (std::size_t i = 0; i < G.size(); ++i) dB[i % d] += G[i];
                           }
                           if (pa.requires_grad) {
                               auto& dA = pa.grad_buffer();
                               std::vector<double> dh(d);
                               for (std::size_t r = 0; r < rows; ++r) {
                                   double m1 = 0.0, m2 = 0.0;
                                   for (std::size_t j = 0; j < d; ++j) {
                                       dh[j] = G[r * d + j] * pg.data[j];
                                       m1 += dh[j];
                                       m2 += dh[j] * xhat[r * d + j];
                                   }
                                   m1 /= static_cast<double>(d);
                                   m2 /= static_cast<double>(d);
                                   for (std::size_t j = 0; j < d; ++j) {
                                       dA[r * d + j] += inv[r] * (dh[j] - m1 - xhat[r * d + j] * m2);
                                   }
                               }
                           }
                       });
}

Tensor embedding(const Tensor& table, const std::vector<std::size_t>& ids, Shape prefix) {
    if (table.rank() != 2) shape_error("embedding", "table must be 2-D, got " + shape_string(table.shape()));
    if (shape_numel(prefix) != ids.size()) shape_error("embedding", "prefix shape does not match id count");
    const std::size_t vocab = table.dim(0);
    const std::size_t d = table.dim(1);
    std::vector<double> out(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= vocab) shape_error("embedding", "id " + std::to_string(ids[i]) + " out of range");
        std::copy_n(table.data().data() + ids[i] * d, d, out.data() + i * d);
    }
    prefix.push_back(d);
    return make_result("embedding", std::move(prefix), std::move(out), {table}, [ids, d](Node& self) {
        auto& dT = parent(self, 0).grad_buffer();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            for (std::size_t j = 0; j < d; ++j) dT[ids[i] * d + j] += self.grad[i * d + j];
        }
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        shape_error("reshape", shape_string(a.shape()) + " -> " + shape_string(shape));
    }
    return make_result("reshape", std::move(shape), a.data(), {a}, [](Node& self) {
        auto& dA = parent(self, 0).grad_buffer();
        for (std::size_t i = 0; i < dA.size(); ++i) dA[i] += self.grad[i];
    });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) shape_error("concat", "no inputs");
    const Shape& ref = parts.front().shape();
    if (axis >= ref.size()) shape_error("concat", "axis out of range");
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
    for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == ref.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == ref[i];
        if (!ok) shape_error("concat", shape_string(s) + " incompatible with " + shape_string(ref));
        widths.push_back(s[axis] * inner);
        total += s[axis];
    }
    const std::size_t row = total * inner;
    std::vector<double> out(outer * row);
    for (std::size_t o = 0; o < outer; ++o) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            std::copy_n(parts[p].data().data() + o * widths[p], widths[p], out.data() + o * row + offset);
            offset += widths[p];
        }
    }
    Shape shape = ref;
    shape[axis] = total;
    return make_result("concat", std::move(shape), std::move(out), parts, [outer, row, widths](Node& self) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < widths.size(); ++p) {
            Node& pp = parent(self, p);
            if (pp.requires_grad) {
                auto& dP = pp.grad_buffer();
                for (std::size_t o = 0; o < outer; ++o) {
                    for (std::size_t j = 0; j < widths[p]; ++j) dP[o * widths[p] + j] += self.grad[o * row + offset + j];
                }
            }
            offset += widths[p];
        }
    });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
    const Shape& s = a.shape();
    if (axis >= s.size() || start + length > s[axis] || length == 0) {
        shape_error("slice", "range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                                 ") invalid for axis " + std::to_string(axis) + " of " + shape_string(s));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t src_row = s[axis] * inner;
    const std::size_t dst_row = length * inner;
    const std::size_t first = start * inner;
    std::vector<double> out(outer * dst_row);
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(a.data().data() + o * src_row + first, dst_row, out.data() + o * dst_row);
    }
    Shape shape = s;
    shape[axis] = length;
    return make_result("slice", std::move(shape), std::move(out), {a}, [outer, src_row, dst_row, first](Node& self) {
        auto& dA = parent(self, 0).grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t j = 0; j < dst_row; ++j) dA[o * src_row + first + j] += self.grad[o * dst_row + j];
        }
    });
}

Tensor sum(const Tensor& a) {
    const double total = std::accumulate(a.data().begin(), a.data().end(), 0.0);
    return make_result("sum", {1}, {total}, {a}, [](Node& self) {
        auto& dA = parent(self, 0).grad_buffer();
        for (auto& g : dA) g += self.grad[0];
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor mse(const Tensor& prediction, const Tensor& target) {
    if (prediction.shape() != target.shape()) {
        shape_error("mse", shape_string(prediction.shape()) + " vs " + shape_string(target.shape()));
    }
    const std::size_t n = prediction.numel();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = prediction.data()[i] - target.data()[i];
        total += r * r;
    }
    return make_result("mse", {1}, {total / static_cast<double>(n)}, {prediction, target}, [n](Node& self) {
        Node& pp = parent(self, 0);
        Node& pt = parent(self, 1);
        const double coef = 2.0 * self.grad[0] / static_cast<double>(n);
        if (pp.requires_grad) {
            auto& dP = pp.grad_buffer();
            for (std::size_t i = 0; i < n; ++i) dP[i] += coef * (pp.data[i] - pt.data[i]);
        }
        if (pt.requires_grad) {
            auto& dT = pt.grad_buffer();
            for (std::size_t i = 0; i < n; ++i) dT[i] -= coef * (pp.data[i] - pt.data[i]);
        }
    });
}

Tensor mul_constant(const Tensor& a, const std::vector<double>& mask) {
    if (mask.size() != a.numel()) shape_error("mul_constant", "mask length does not match " + shape_string(a.shape()));
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * mask[i];
    return make_result("mul_constant", a.shape(), std::move(out), {a}, [mask](Node& self) {
        auto& dA = parent(self, 0).grad_buffer();
        for (std::size_t i = 0; i < dA.size(); ++i) dA[i] += self.grad[i] * mask[i];
    });
}

Tensor dropout(const Tensor& a, double rate, Rng& rng) {
    if (rate <= 0.0) return a;
    if (rate >= 1.0) shape_error("dropout", "rate must be below 1");
    std::vector<double> mask(a.numel());
    const double keep = 1.0 / (1.0 - rate);
    for (auto& m : mask) m = rng.uniform() < rate ? 0.0 : keep;
    return mul_constant(a, mask);
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 const std::vector<std::uint8_t>& key_mask) {
    if (q.rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape()) {
        shape_error("attention", "q, k, v must share a [B, S, d] shape; got " + shape_string(q.shape()) + ", " +
                                     shape_string(k.shape()) + ", " + shape_string(v.shape()));
    }
    const std::size_t B = q.dim(0), S = q.dim(1), d = q.dim(2);
    if (heads == 0 || d % heads != 0) shape_error("attention", "width " + std::to_string(d) + " not divisible by heads");
    if (!key_mask.empty() && key_mask.size() != B * S) shape_error("attention", "key mask length mismatch");
    const std::size_t dh = d / heads;
    const double scl = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto& Q = q.data();
    const auto& K = k.data();
    const auto& V = v.data();

    // Canonical key order per batch item: lexicographic on the (k, v) rows.
    std::vector<std::size_t> order;
    std::vector<std::size_t> order_offset(B + 1, 0);
    order.reserve(B * S);
    for (std::size_t b = 0; b < B; ++b) {
        const std::size_t begin = order.size();
        for (std::size_t j = 0; j < S; ++j) {
            if (key_mask.empty() || key_mask[b * S + j]) order.push_back(j);
        }
        std::sort(order.begin() + static_cast<std::ptrdiff_t>(begin), order.end(), [&](std::size_t x, std::size_t y) {
            const double* kx = K.data() + (b * S + x) * d;
            const double* ky = K.data() + (b * S + y) * d;
            for (std::size_t c = 0; c < d; ++c) {
                if (kx[c] != ky[c]) return kx[c] < ky[c];
            }
            const double* vx = V.data() + (b * S + x) * d;
            const double* vy = V.data() + (b * S + y) * d;
            for (std::size_t c = 0; c < d; ++c) {
                if (vx[c] != vy[c]) return vx[c] < vy[c];
            }
            return false;
        });
        order_offset[b + 1] = order.size();
    }

    std::vector<double> out(B * S * d, 0.0);
    std::vector<double> probs(B * heads * S * S, 0.0);
    std::vector<double> scores(S);
    for (std::size_t b = 0; b < B; ++b) {
        const std::size_t* ob = order.data() + order_offset[b];
        const std::size_t n_keys = order_offset[b + 1] - order_offset[b];
        if (n_keys == 0) continue;
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t col = h * dh;
            for (std::size_t i = 0; i < S; ++i) {
                const double* qi = Q.data() + (b * S + i) * d + col;
                double m = -std::numeric_limits<double>::infinity();
                for (std::size_t t = 0; t < n_keys; ++t) {
                    const double* kj = K.data() + (b * S + ob[t]) * d + col;
                    double s = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
                    scores[t] = s * scl;
                    m = std::max(m, scores[t]);
                }
                double z = 0.0;
                for (std::size_t t = 0; t < n_keys; ++t) z += (scores[t] = std::exp(scores[t] - m));
                double* p = probs.data() + ((b * heads + h) * S + i) * S;
                double* oi = out.data() + (b * S + i) * d + col;
                for (std::size_t t = 0; t < n_keys; ++t) {
                    const double w = scores[t] / z;
                    p[ob[t]] = w;
                    const double* vj = V.data() + (b * S + ob[t]) * d + col;
                    for (std::size_t c = 0; c < dh; ++c) oi[c] += w * vj[c];
                }
            }
        }
    }

    return make_result("attention", q.shape(), std::move(out), {q, k, v},
                       [B, S, d, heads, dh, scl, probs = std::move(probs)](Node& self) {
                           Node& pq = parent(self, 0);
                           Node& pk = parent(self, 1);
                           Node& pv = parent(self, 2);
                           std::vector<double> scratch_q(pq.requires_grad ? 0 : B * S * d);
                           std::vector<double> scratch_k(pk.requires_grad ? 0 : B * S * d);
                           std::vector<double> scratch_v(pv.requires_grad ? 0 : B * S * d);
                           double* dQ = pq.requires_grad ? pq.grad_buffer().data() : scratch_q.data();
                           double* dK = pk.requires_grad ? pk.grad_buffer().data() : scratch_k.data();
                           double* dV = pv.requires_grad ? pv.grad_buffer().data() : scratch_v.data();
                           const double* Q = pq.data.data();
                           const double* K = pk.data.data();
                           const double* V = pv.data.data();
                           const double* G = self.grad.data();
                           std::vector<double> dp(S);
                           for (std::size_t b = 0; b < B; ++b) {
                               for (std::size_t h = 0; h < heads; ++h) {
                                   const std::size_t col = h * dh;
                                   for (std::size_t i = 0; i < S; ++i) {
                                       const double* p = probs.data() + ((b * heads + h) * S + i) * S;
                                       const double* gi = G + (b * S + i) * d + col;
                                       double weighted = 0.0;
                                       for (std::size_t j = 0; j < S; ++j) {
                                           if (p[j] == 0.0) {
                                               dp[j] = 0.0;
                                               continue;
                                           }
                                           const double* vj = V + (b * S + j) * d + col;
                                           double* dvj = dV + (b * S + j) * d + col;
                                           double s = 0.0;
                                           for (std::size_t c = 0; c < dh; ++c) {
                                               s += gi[c] * vj[c];
                                               dvj[c] += p[j] * gi[c];
                                           }
                                           dp[j] = s;
                                           weighted += p[j] * s;
                                       }
                                       const double* qi = Q + (b * S + i) * d + col;
                                       double* dqi = dQ + (b * S + i) * d + col;
                                       for (std::size_t j = 0; j < S; ++j) {
                                           if (p[j] == 0.0) continue;
                                           const double ds = p[j] * (dp[j] - weighted) * scl;
                                           const double* kj = K + (b * S + j) * d + col;
                                           double* dkj = dK + (b * S + j) * d + col;
                                           for (std::size_t c = 0; c < dh; ++c) {
                                               dqi[c] += ds * kj[c];
                                               dkj[c] += ds * qi[c];
                                           }
                                       }
                                   }
                               }
                           }
                       });
}

}  // namespace geochem::nn
