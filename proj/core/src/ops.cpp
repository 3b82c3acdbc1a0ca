#include "mhri/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "mhri/errors.hpp"

namespace mhri {

using detail::TensorNode;

namespace {

void require_2d(const Tensor& t, const char* op) {
    if (t.ndim() != 2) {
        throw DimensionError(std::string(op) + ": expected a 2-D tensor, got " + t.shape_str());
    }
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    if (a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: inner dimensions disagree: " + a.shape_str() + " vs " +
                             b.shape_str());
    }
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    auto out = detail::make_result({m, n}, {a.node(), b.node()});

    const double* ad = a.data();
    const double* bd = b.data();
    double* od = out->data.data();
    for (int i = 0; i < m; ++i) {
        double* orow = od + static_cast<size_t>(i) * n;
        const double* arow = ad + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = bd + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }

    if (out->requires_grad) {
        TensorNode* an = a.node().get();
        TensorNode* bn = b.node().get();
        TensorNode* on = out.get();
        out->backward_fn = [an, bn, on, m, k, n]() {
            const double* g = on->grad.data();
            if (an->requires_grad) {
                // dA = dC * B^T
                double* da = an->grad.data();
                const double* bd = bn->data.data();
                for (int i = 0; i < m; ++i) {
                    const double* grow = g + static_cast<size_t>(i) * n;
                    double* darow = da + static_cast<size_t>(i) * k;
                    for (int kk = 0; kk < k; ++kk) {
                        const double* brow = bd + static_cast<size_t>(kk) * n;
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        darow[kk] += acc;
                    }
                }
            }
            if (bn->requires_grad) {
                // dB = A^T * dC
                double* db = bn->grad.data();
                const double* ad = an->data.data();
                for (int i = 0; i < m; ++i) {
                    const double* grow = g + static_cast<size_t>(i) * n;
                    const double* arow = ad + static_cast<size_t>(i) * k;
                    for (int kk = 0; kk < k; ++kk) {
                        const double av = arow[kk];
                        double* dbrow = db + static_cast<size_t>(kk) * n;
                        for (int j = 0; j < n; ++j) dbrow[j] += av * grow[j];
                    }
                }
            }
        };
    }
    return Tensor(out);
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("add: shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    }
    auto out = detail::make_result(a.shape(), {a.node(), b.node()});
    const size_t n = out->numel();
    for (size_t i = 0; i < n; ++i) out->data[i] = a.data()[i] + b.data()[i];
    if (out->requires_grad) {
        TensorNode* an = a.node().get();
        TensorNode* bn = b.node().get();
        TensorNode* on = out.get();
        out->backward_fn = [an, bn, on, n]() {
            if (an->requires_grad)
                for (size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i];
            if (bn->requires_grad)
                for (size_t i = 0; i < n; ++i) bn->grad[i] += on->grad[i];
        };
    }
    return Tensor(out);
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    require_2d(x, "add_bias");
    const int rows = x.dim(0), cols = x.dim(1);
    if (bias.numel() != cols) {
        throw DimensionError("add_bias: bias length " + bias.shape_str() +
                             " does not match row width of " + x.shape_str());
    }
    auto out = detail::make_result(x.shape(), {x.node(), bias.node()});
    const double* xd = x.data();
    const double* bd = bias.data();
    for (int i = 0; i < rows; ++i) {
        const size_t off = static_cast<size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) out->data[off + j] = xd[off + j] + bd[j];
    }
    if (out->requires_grad) {
        TensorNode* xn = x.node().get();
        TensorNode* bn = bias.node().get();
        TensorNode* on = out.get();
        out->backward_fn = [xn, bn, on, rows, cols]() {
            if (xn->requires_grad) {
                const size_t n = on->grad.size();
                for (size_t i = 0; i < n; ++i) xn->grad[i] += on->grad[i];
            }
            if (bn->requires_grad) {
                for (int i = 0; i < rows; ++i) {
                    const size_t off = static_cast<size_t>(i) * cols;
                    for (int j = 0; j < cols; ++j) bn->grad[j] += on->grad[off + j];
                }
            }
        };
    }
    return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("mul: shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    }
    auto out = detail::make_result(a.shape(), {a.node(), b.node()});
    const size_t n = out->numel();
    for (size_t i = 0; i < n; ++i) out->data[i] = a.data()[i] * b.data()[i];
    if (out->requires_grad) {
        TensorNode* an = a.node().get();
        TensorNode* bn = b.node().get();
        TensorNode* on = out.get();
        out->backward_fn = [an, bn, on, n]() {
            if (an->requires_grad)
                for (size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i] * bn->data[i];
            if (bn->requires_grad)
                for (size_t i = 0; i < n; ++i) bn->grad[i] += on->grad[i] * an->data[i];
        };
    }
    return Tensor(out);
}

Tensor mul_scalar(const Tensor& a, double s) {
    auto out = detail::make_result(a.shape(), {a.node()});
    const size_t n = out->numel();
    for (size_t i = 0; i < n; ++i) out->data[i] = a.data()[i] * s;
    if (out->requires_grad) {
        TensorNode* an = a.node().get();
        TensorNode* on = out.get();
        out->backward_fn = [an, on, s, n]() {
            for (size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i] * s;
        };
    }
    return Tensor(out);
}

Tensor sum(const Tensor& a) {
    auto out = detail::make_result({1}, {a.node()});
    double acc = 0.0;
    const size_t n = a.node()->numel();
    for (size_t i = 0; i < n; ++i) acc += a.data()[i];
    out->data[0] = acc;
    if (out->requires_grad) {
        TensorNode* an = a.node().get();
        TensorNode* on = out.get();
        out->backward_fn = [an, on, n]() {
            const double g = on->grad[0];
            for (size_t i = 0; i < n; ++i) an->grad[i] += g;
        };
    }
    return Tensor(out);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no tensors given");
    const int rows = parts[0].dim(0);
    int cols = 0;
    std::vector<std::shared_ptr<TensorNode>> parents;
    for (const Tensor& p : parts) {
        require_2d(p, "concat_cols");
        if (p.dim(0) != rows) {
            throw DimensionError("concat_cols: row count mismatch: " + parts[0].shape_str() +
                                 " vs " + p.shape_str());
        }
        cols += p.dim(1);
        parents.push_back(p.node());
    }
    auto out = detail::make_result({rows, cols}, std::move(parents));
    int col_off = 0;
    for (const Tensor& p : parts) {
        const int w = p.dim(1);
        for (int i = 0; i < rows; ++i) {
            const double* src = p.data() + static_cast<size_t>(i) * w;
            double* dst = out->data.data() + static_cast<size_t>(i) * cols + col_off;
            std::copy(src, src + w, dst);
        }
        col_off += w;
    }
    if (out->requires_grad) {
        std::vector<TensorNode*> ps;
        std::vector<int> widths;
        for (const Tensor& p : parts) {
            ps.push_back(p.node().get());
            widths.push_back(p.dim(1));
        }
        TensorNode* on = out.get();
        out->backward_fn = [ps, widths, on, rows, cols]() {
            int off = 0;
            for (size_t pi = 0; pi < ps.size(); ++pi) {
                const int w = widths[pi];
                if (ps[pi]->requires_grad) {
                    for (int i = 0; i < rows; ++i) {
                        const double* g = on->grad.data() + static_cast<size_t>(i) * cols + off;
                        double* dst = ps[pi]->grad.data() + static_cast<size_t>(i) * w;
                        for (int j = 0; j < w; ++j) dst[j] += g[j];
                    }
                }
                off += w;
            }
        };
    }
    return Tensor(out);
}

Tensor slice_rows(const Tensor& t, int r0, int r1) {
    require_2d(t, "slice_rows");
    if (r0 < 0 || r1 <= r0 || r1 > t.dim(0)) {
        throw ContractError("slice_rows: range [" + std::to_string(r0) + ", " + std::to_string(r1) +
                            ") invalid for " + t.shape_str());
    }
    const int cols = t.dim(1);
    auto out = detail::make_result({r1 - r0, cols}, {t.node()});
    const double* src = t.data() + static_cast<size_t>(r0) * cols;
    std::copy(src, src + static_cast<size_t>(r1 - r0) * cols, out->data.data());
    if (out->requires_grad) {
        TensorNode* tn = t.node().get();
        TensorNode* on = out.get();
        out->backward_fn = [tn, on, r0, cols]() {
            const size_t n = on->grad.size();
            double* dst = tn->grad.data() + static_cast<size_t>(r0) * cols;
            for (size_t i = 0; i < n; ++i) dst[i] += on->grad[i];
        };
    }
    return Tensor(out);
}

Tensor softmax(const Tensor& x, int axis) {
    if (x.ndim() == 1) {
        if (axis != 0 && axis != -1) {
            throw ContractError("softmax: axis " + std::to_string(axis) + " invalid for 1-D input");
        }
    } else if (x.ndim() == 2) {
        if (axis < 0) axis += 2;
        if (axis != 0 && axis != 1) throw ContractError("softmax: axis out of range for 2-D input");
    } else {
        throw DimensionError("softmax: expected 1-D or 2-D input, got " + x.shape_str());
    }

    // Treat the input as `slices` independent softmaxes of length `len`,
    // elements spaced by `stride`.
    int slices, len;
    size_t slice_off, stride;
    if (x.ndim() == 1) {
        slices = 1;
        len = x.dim(0);
        slice_off = 0;
        stride = 1;
    } else if (axis == 1) {
        slices = x.dim(0);
        len = x.dim(1);
        slice_off = static_cast<size_t>(x.dim(1));
        stride = 1;
    } else {
        slices = x.dim(1);
        len = x.dim(0);
        slice_off = 1;
        stride = static_cast<size_t>(x.dim(1));
    }

    auto out = detail::make_result(x.shape(), {x.node()});
    const double* xd = x.data();
    double* od = out->data.data();
    for (int s = 0; s < slices; ++s) {
        const size_t base = s * slice_off;
        double mx = xd[base];
        for (int i = 1; i < len; ++i) mx = std::max(mx, xd[base + i * stride]);
        double denom = 0.0;
        for (int i = 0; i < len; ++i) {
            double e = std::exp(xd[base + i * stride] - mx);
            od[base + i * stride] = e;
            denom += e;
        }
        for (int i = 0; i < len; ++i) od[base + i * stride] /= denom;
    }

    if (out->requires_grad) {
        TensorNode* xn = x.node().get();
        TensorNode* on = out.get();
        out->backward_fn = [xn, on, slices, len, slice_off, stride]() {
            for (int s = 0; s < slices; ++s) {
                const size_t base = s * slice_off;
                double dot = 0.0;
                for (int i = 0; i < len; ++i) {
                    const size_t idx = base + i * stride;
                    dot += on->grad[idx] * on->data[idx];
                }
                for (int i = 0; i < len; ++i) {
                    const size_t idx = base + i * stride;
                    xn->grad[idx] += on->data[idx] * (on->grad[idx] - dot);
                }
            }
        };
    }
    return Tensor(out);
}

Tensor sigmoid(const Tensor& x) {
    auto out = detail::make_result(x.shape(), {x.node()});
    const size_t n = out->numel();
    for (size_t i = 0; i < n; ++i) out->data[i] = stable_sigmoid(x.data()[i]);
    if (out->requires_grad) {
        TensorNode* xn = x.node().get();
        TensorNode* on = out.get();
        out->backward_fn = [xn, on, n]() {
            for (size_t i = 0; i < n; ++i) {
                const double y = on->data[i];
                xn->grad[i] += on->grad[i] * y * (1.0 - y);
            }
        };
    }
    return Tensor(out);
}

Tensor gelu(const Tensor& x) {
    auto out = detail::make_result(x.shape(), {x.node()});
    const size_t n = out->numel();
    for (size_t i = 0; i < n; ++i) {
        const double v = x.data()[i];
        const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
        out->data[i] = 0.5 * v * (1.0 + t);
    }
    if (out->requires_grad) {
        TensorNode* xn = x.node().get();
        TensorNode* on = out.get();
        out->backward_fn = [xn, on, n]() {
            for (size_t i = 0; i < n; ++i) {
                const double v = xn->data[i];
                const double inner = kGeluC * (v + kGeluA * v * v * v);
                const double t = std::tanh(inner);
                const double dinner = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
                const double dy = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * dinner;
                xn->grad[i] += on->grad[i] * dy;
            }
        };
    }
    return Tensor(out);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require_2d(x, "layer_norm");
    const int rows = x.dim(0), d = x.dim(1);
    if (d < 2) {
        throw ConfigError("layer_norm: row width must be >= 2, got " + std::to_string(d));
    }
    if (gain.numel() != d || bias.numel() != d) {
        throw DimensionError("layer_norm: gain/bias length must match row width " +
                             std::to_string(d));
    }
    auto out = detail::make_result(x.shape(), {x.node(), gain.node(), bias.node()});
    const double* xd = x.data();
    const double* gd = gain.data();
    const double* bd = bias.data();
    for (int i = 0; i < rows; ++i) {
        const size_t off = static_cast<size_t>(i) * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += xd[off + j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xd[off + j] - mean;
            var += c * c;
        }
        var /= d;
        const double rstd = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < d; ++j) {
            out->data[off + j] = (xd[off + j] - mean) * rstd * gd[j] + bd[j];
        }
    }
    if (out->requires_grad) {
        TensorNode* xn = x.node().get();
        TensorNode* gn = gain.node().get();
        TensorNode* bn = bias.node().get();
        TensorNode* on = out.get();
        out->backward_fn = [xn, gn, bn, on, rows, d, eps]() {
            for (int i = 0; i < rows; ++i) {
                const size_t off = static_cast<size_t>(i) * d;
                double mean = 0.0;
                for (int j = 0; j < d; ++j) mean += xn->data[off + j];
                mean /= d;
                double var = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double c = xn->data[off + j] - mean;
                    var += c * c;
                }
                var /= d;
                const double rstd = 1.0 / std::sqrt(var + eps);

                // dnorm = dy * gain; reduce to the two row statistics.
                double dnorm_mean = 0.0, dnorm_norm_mean = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double norm = (xn->data[off + j] - mean) * rstd;
                    const double dnorm = on->grad[off + j] * gn->data[j];
                    dnorm_mean += dnorm;
                    dnorm_norm_mean += dnorm * norm;
                }
                dnorm_mean /= d;
                dnorm_norm_mean /= d;

                for (int j = 0; j < d; ++j) {
                    const double norm = (xn->data[off + j] - mean) * rstd;
                    const double dnorm = on->grad[off + j] * gn->data[j];
                    if (xn->requires_grad) {
                        xn->grad[off + j] += (dnorm - dnorm_mean - norm * dnorm_norm_mean) * rstd;
                    }
                    if (gn->requires_grad) gn->grad[j] += on->grad[off + j] * norm;
                    if (bn->requires_grad) bn->grad[j] += on->grad[off + j];
                }
            }
        };
    }
    return Tensor(out);
}

Tensor dropout(const Tensor& x, double p, bool training, RngStream& rng) {
    if (p < 0.0 || p >= 1.0) {
        throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(p));
    }
    if (!training || p == 0.0) return x;
    const size_t n = x.node()->numel();
    std::vector<uint8_t> keep(n);
    for (size_t i = 0; i < n; ++i) keep[i] = rng.uniform() >= p ? 1 : 0;
    const double scale = 1.0 / (1.0 - p);
    auto out = detail::make_result(x.shape(), {x.node()});
    for (size_t i = 0; i < n; ++i) out->data[i] = keep[i] ? x.data()[i] * scale : 0.0;
    if (out->requires_grad) {
        TensorNode* xn = x.node().get();
        TensorNode* on = out.get();
        out->backward_fn = [xn, on, keep = std::move(keep), scale, n]() {
            for (size_t i = 0; i < n; ++i) {
                if (keep[i]) xn->grad[i] += on->grad[i] * scale;
            }
        };
    }
    return Tensor(out);
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, int n_heads,
                        const std::vector<uint8_t>& valid, double self_bias,
                        AttentionTrace* trace) {
    require_2d(q, "causal_attention");
    if (q.shape() != k.shape() || q.shape() != v.shape()) {
        throw DimensionError("causal_attention: q/k/v shapes disagree: " + q.shape_str() + ", " +
                             k.shape_str() + ", " + v.shape_str());
    }
    const int n = q.dim(0), d = q.dim(1);
    if (n_heads <= 0 || d % n_heads != 0) {
        throw ConfigError("causal_attention: width " + std::to_string(d) +
                          " not divisible by n_heads " + std::to_string(n_heads));
    }
    if (static_cast<int>(valid.size()) != n) {
        throw ContractError("causal_attention: valid mask length " + std::to_string(valid.size()) +
                            " does not match sequence length " + std::to_string(n));
    }
    const int dh = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    auto out = detail::make_result({n, d}, {q.node(), k.node(), v.node()});

    // Weights are kept for the backward pass: [head][query][key], zero
    // everywhere a key is not attended.
    auto weights = std::make_shared<std::vector<double>>(
        static_cast<size_t>(n_heads) * n * n, 0.0);
    const double* qd = q.data();
    const double* kd = k.data();
    const double* vd = v.data();
    double* od = out->data.data();

    std::vector<double> logits(static_cast<size_t>(n));
    for (int h = 0; h < n_heads; ++h) {
        const int col = h * dh;
        for (int i = 0; i < n; ++i) {
            const double* qrow = qd + static_cast<size_t>(i) * d + col;
            double mx = -std::numeric_limits<double>::infinity();
            bool any = false;
            for (int j = 0; j <= i; ++j) {
                if (!valid[j]) continue;
                const double* krow = kd + static_cast<size_t>(j) * d + col;
                double dot = 0.0;
                for (int c = 0; c < dh; ++c) dot += qrow[c] * krow[c];
                logits[j] = dot * scale + (j == i ? self_bias : 0.0);
                mx = std::max(mx, logits[j]);
                any = true;
            }
            const bool self_only = !any;
            if (self_only) {
                // A query with no attendable keys (a padded position before
                // any real one) falls back to itself.
                const double* krow = kd + static_cast<size_t>(i) * d + col;
                double dot = 0.0;
                for (int c = 0; c < dh; ++c) dot += qrow[c] * krow[c];
                logits[i] = dot * scale;
                mx = logits[i];
            }
            double denom = 0.0;
            double* wrow = weights->data() + (static_cast<size_t>(h) * n + i) * n;
            auto each_key = [&](auto&& fn) {
                if (self_only) {
                    fn(i);
                } else {
                    for (int j = 0; j <= i; ++j)
                        if (valid[j]) fn(j);
                }
            };
            each_key([&](int j) {
                wrow[j] = std::exp(logits[j] - mx);
                denom += wrow[j];
            });
            each_key([&](int j) { wrow[j] /= denom; });
            double* orow = od + static_cast<size_t>(i) * d + col;
            for (int c = 0; c < dh; ++c) orow[c] = 0.0;
            each_key([&](int j) {
                const double w = wrow[j];
                const double* vrow = vd + static_cast<size_t>(j) * d + col;
                for (int c = 0; c < dh; ++c) orow[c] += w * vrow[c];
            });
        }
    }

    if (trace) {
        trace->n_heads = n_heads;
        trace->seq_len = n;
        trace->weights = *weights;
    }

    if (out->requires_grad) {
        TensorNode* qn = q.node().get();
        TensorNode* kn = k.node().get();
        TensorNode* vn = v.node().get();
        TensorNode* on = out.get();
        std::vector<uint8_t> vmask = valid;
        out->backward_fn = [qn, kn, vn, on, weights, vmask = std::move(vmask), n, d, dh, n_heads,
                            scale]() {
            std::vector<double> dlogit(static_cast<size_t>(n));
            for (int h = 0; h < n_heads; ++h) {
                const int col = h * dh;
                for (int i = 0; i < n; ++i) {
                    const double* wrow = weights->data() + (static_cast<size_t>(h) * n + i) * n;
                    const double* grow = on->grad.data() + static_cast<size_t>(i) * d + col;
                    bool any = false;
                    for (int j = 0; j <= i; ++j)
                        if (vmask[j]) { any = true; break; }
                    auto each_key = [&](auto&& fn) {
                        if (!any) {
                            fn(i);
                        } else {
                            for (int j = 0; j <= i; ++j)
                                if (vmask[j]) fn(j);
                        }
                    };
                    // dv and d(weight)
                    double dot = 0.0;
                    each_key([&](int j) {
                        const double* vrow = vn->data.data() + static_cast<size_t>(j) * d + col;
                        double dw = 0.0;
                        for (int c = 0; c < dh; ++c) dw += grow[c] * vrow[c];
                        dlogit[j] = dw;
                        dot += dw * wrow[j];
                        if (vn->requires_grad) {
                            double* dvrow = vn->grad.data() + static_cast<size_t>(j) * d + col;
                            const double w = wrow[j];
                            for (int c = 0; c < dh; ++c) dvrow[c] += w * grow[c];
                        }
                    });
                    // softmax jacobian, then into q and k
                    const double* qrow = qn->data.data() + static_cast<size_t>(i) * d + col;
                    double* dqrow = qn->grad.data() + static_cast<size_t>(i) * d + col;
                    each_key([&](int j) {
                        const double dl = wrow[j] * (dlogit[j] - dot) * scale;
                        const double* krow = kn->data.data() + static_cast<size_t>(j) * d + col;
                        if (qn->requires_grad) {
                            for (int c = 0; c < dh; ++c) dqrow[c] += dl * krow[c];
                        }
                        if (kn->requires_grad) {
                            double* dkrow = kn->grad.data() + static_cast<size_t>(j) * d + col;
                            for (int c = 0; c < dh; ++c) dkrow[c] += dl * qrow[c];
                        }
                    });
                }
            }
        };
    }
    return Tensor(out);
}

Tensor masked_cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                            const std::vector<uint8_t>& mask) {
    require_2d(logits, "masked_cross_entropy");
    const int n = logits.dim(0), c = logits.dim(1);
    if (static_cast<int>(targets.size()) != n || static_cast<int>(mask.size()) != n) {
        throw ContractError("masked_cross_entropy: targets/mask length must equal row count " +
                            std::to_string(n));
    }
    int count = 0;
    for (int i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        if (targets[i] < 0 || targets[i] >= c) {
            throw LabelError("masked_cross_entropy: target " + std::to_string(targets[i]) +
                             " out of range [0, " + std::to_string(c) + ") at position " +
                             std::to_string(i));
        }
        ++count;
    }
    auto out = detail::make_result({1}, {logits.node()});
    if (count == 0) {
        // All positions masked: zero loss, and the absent backward_fn means a
        // zero gradient contribution.
        return Tensor(out);
    }

    // Keep per-row softmax for the backward pass.
    auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(n) * c, 0.0);
    const double* ld = logits.data();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        const size_t off = static_cast<size_t>(i) * c;
        double mx = ld[off];
        for (int j = 1; j < c; ++j) mx = std::max(mx, ld[off + j]);
        double denom = 0.0;
        for (int j = 0; j < c; ++j) {
            const double e = std::exp(ld[off + j] - mx);
            (*probs)[off + j] = e;
            denom += e;
        }
        for (int j = 0; j < c; ++j) (*probs)[off + j] /= denom;
        acc += std::log(denom) + mx - ld[off + targets[i]];
    }
    out->data[0] = acc / count;

    if (out->requires_grad) {
        TensorNode* ln = logits.node().get();
        TensorNode* on = out.get();
        std::vector<int> tgt = targets;
        std::vector<uint8_t> msk = mask;
        out->backward_fn = [ln, on, probs, tgt = std::move(tgt), msk = std::move(msk), n, c,
                            count]() {
            const double g = on->grad[0] / count;
            for (int i = 0; i < n; ++i) {
                if (!msk[i]) continue;
                const size_t off = static_cast<size_t>(i) * c;
                for (int j = 0; j < c; ++j) {
                    ln->grad[off + j] += g * ((*probs)[off + j] - (j == tgt[i] ? 1.0 : 0.0));
                }
            }
        };
    }
    return Tensor(out);
}

Tensor masked_bce_with_logits(const Tensor& logits, const std::vector<double>& targets,
                              const std::vector<uint8_t>& pair_mask) {
    require_2d(logits, "masked_bce_with_logits");
    const size_t n = static_cast<size_t>(logits.numel());
    if (targets.size() != n || pair_mask.size() != n) {
        throw ContractError("masked_bce_with_logits: targets/mask size must equal logit count " +
                            std::to_string(n));
    }
    size_t count = 0;
    for (size_t i = 0; i < n; ++i)
        if (pair_mask[i]) ++count;
    auto out = detail::make_result({1}, {logits.node()});
    if (count == 0) return Tensor(out);

    const double* ld = logits.data();
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        if (!pair_mask[i]) continue;
        const double z = ld[i];
        acc += std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
    }
    out->data[0] = acc / static_cast<double>(count);

    if (out->requires_grad) {
        TensorNode* ln = logits.node().get();
        TensorNode* on = out.get();
        std::vector<double> tgt = targets;
        std::vector<uint8_t> msk = pair_mask;
        out->backward_fn = [ln, on, tgt = std::move(tgt), msk = std::move(msk), n, count]() {
            const double g = on->grad[0] / static_cast<double>(count);
            for (size_t i = 0; i < n; ++i) {
                if (!msk[i]) continue;
                ln->grad[i] += g * (stable_sigmoid(ln->data[i]) - tgt[i]);
            }
        };
    }
    return Tensor(out);
}

namespace {

// Shared forward/backward for row-wise KL against constant priors.
Tensor kl_rows_impl(const Tensor& probs, const std::vector<double>& priors,
                    const std::vector<uint8_t>& row_mask, double floor, int n, int c) {
    int count = 0;
    for (int i = 0; i < n; ++i)
        if (row_mask[i]) ++count;
    auto out = detail::make_result({1}, {probs.node()});
    if (count == 0) return Tensor(out);

    const double* pd = probs.data();
    // Rows whose rounding residue went negative are clamped to zero and
    // excluded from the gradient.
    auto clamped = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(n), 0);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!row_mask[i]) continue;
        const size_t off = static_cast<size_t>(i) * c;
        double row = 0.0;
        for (int j = 0; j < c; ++j) {
            const double p = pd[off + j];
            if (p > 0.0) row += p * std::log(p / std::max(priors[off + j], floor));
        }
        if (row < 0.0) {
            (*clamped)[i] = 1;
            row = 0.0;
        }
        acc += row;
    }
    out->data[0] = acc / count;

    if (out->requires_grad) {
        TensorNode* pn = probs.node().get();
        TensorNode* on = out.get();
        std::vector<double> q = priors;
        std::vector<uint8_t> msk = row_mask;
        out->backward_fn = [pn, on, q = std::move(q), msk = std::move(msk), clamped, floor, n, c,
                            count]() {
            const double g = on->grad[0] / count;
            for (int i = 0; i < n; ++i) {
                if (!msk[i] || (*clamped)[i]) continue;
                const size_t off = static_cast<size_t>(i) * c;
                for (int j = 0; j < c; ++j) {
                    const double p = pn->data[off + j];
                    if (p > 0.0) {
                        pn->grad[off + j] += g * (std::log(p / std::max(q[off + j], floor)) + 1.0);
                    }
                }
            }
        };
    }
    return Tensor(out);
}

}  // namespace

Tensor kl_divergence(const Tensor& p, const Dist& q, double floor) {
    if (p.ndim() != 1 && !(p.ndim() == 2 && p.dim(0) == 1)) {
        throw DimensionError("kl_divergence: expected a probability vector, got " + p.shape_str());
    }
    if (static_cast<size_t>(p.numel()) != q.size()) {
        throw DimensionError("kl_divergence: length mismatch, " + std::to_string(p.numel()) +
                             " vs " + std::to_string(q.size()));
    }
    if (floor <= 0.0) throw ConfigError("kl_divergence: floor must be positive");
    return kl_rows_impl(p, q.probs(), {1}, floor, 1, p.numel());
}

Tensor kl_to_prior_rows(const Tensor& probs, const std::vector<double>& priors,
                        const std::vector<uint8_t>& row_mask, double floor) {
    require_2d(probs, "kl_to_prior_rows");
    const int n = probs.dim(0), c = probs.dim(1);
    if (priors.size() != static_cast<size_t>(probs.numel())) {
        throw DimensionError("kl_to_prior_rows: prior buffer size " + std::to_string(priors.size()) +
                             " does not match " + probs.shape_str());
    }
    if (static_cast<int>(row_mask.size()) != n) {
        throw ContractError("kl_to_prior_rows: row mask length must equal row count");
    }
    if (floor <= 0.0) throw ConfigError("kl_to_prior_rows: floor must be positive");
    return kl_rows_impl(probs, priors, row_mask, floor, n, c);
}

}  // namespace mhri
