#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mhri/dist.hpp"
#include "mhri/rng.hpp"
#include "mhri/tensor.hpp"

namespace mhri {

// Differentiable operation set. Every op validates its operands, computes
// the forward value eagerly and, when any operand requires gradients, wires
// a backward closure into the graph. Backward accumulation follows the
// loop order written here, which fixes the reduction order and keeps
// repeated runs bit-identical.

/// [m×k] x [k×n] -> [m×n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Elementwise sum of same-shape tensors.
Tensor add(const Tensor& a, const Tensor& b);

/// Adds a length-d bias vector to every row of an [N×d] tensor.
Tensor add_bias(const Tensor& x, const Tensor& bias);

/// Elementwise (Hadamard) product of same-shape tensors.
Tensor mul(const Tensor& a, const Tensor& b);

Tensor mul_scalar(const Tensor& a, double s);

/// Sum of all elements -> scalar.
Tensor sum(const Tensor& a);

/// Column-wise concatenation of 2-D tensors with equal row counts.
Tensor concat_cols(const std::vector<Tensor>& parts);

/// Rows [r0, r1) of a 2-D tensor.
Tensor slice_rows(const Tensor& t, int r0, int r1);

/// Max-subtracted softmax over the given axis (0 or 1 for 2-D input; a 1-D
/// input is one slice). Every output slice sums to 1 within 1e-9.
Tensor softmax(const Tensor& x, int axis);

Tensor sigmoid(const Tensor& x);

/// Gaussian error linear unit, tanh approximation.
Tensor gelu(const Tensor& x);

/// Per-row normalization of an [N×d] tensor to zero mean / unit variance,
/// then elementwise gain and bias. Requires d >= 2.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Inverted dropout: identity when not training or p == 0; otherwise keeps
/// entries with probability 1-p and rescales by 1/(1-p).
Tensor dropout(const Tensor& x, double p, bool training, RngStream& rng);

/// Per-head attention weights captured during a forward pass.
struct AttentionTrace {
    int n_heads = 0;
    int seq_len = 0;
    std::vector<double> weights;  // [n_heads * N * N], zero where not attended
    double weight(int head, int query, int key) const {
        return weights[(static_cast<size_t>(head) * seq_len + query) * seq_len + key];
    }
};

/// Multi-head scaled dot-product attention with a causal structure: query
/// position i attends to key positions j <= i whose `valid[j]` flag is set
/// (falling back to {i} itself when none are). Invalid keys receive exactly
/// zero weight and are skipped in every reduction, so appending padded
/// positions never perturbs the outputs at real positions. `self_bias` is
/// added to the logit of the j == i key, biasing rows toward their own
/// position without removing any key from reach.
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, int n_heads,
                        const std::vector<uint8_t>& valid, double self_bias = 0.0,
                        AttentionTrace* trace = nullptr);

/// Mean over unmasked positions of -log softmax(logits)[target]. Masked
/// positions contribute exactly zero to the value and the gradient; if every
/// position is masked the result is 0 with zero gradient.
Tensor masked_cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                            const std::vector<uint8_t>& mask);

/// Mean binary cross-entropy (from logits) over the entries whose pair_mask
/// flag is set. Numerically stable for large |logit|.
Tensor masked_bce_with_logits(const Tensor& logits, const std::vector<double>& targets,
                              const std::vector<uint8_t>& pair_mask);

/// KL(p || q) for a 1-D probability tensor p against a constant prior q,
/// with q floored and 0*ln(0/q) := 0. Differentiable w.r.t. p only; the
/// result is clamped at >= 0 against rounding residue.
Tensor kl_divergence(const Tensor& p, const Dist& q, double floor = 1e-6);

/// Mean over mask-selected rows of KL(probs_row || prior_row), priors given
/// as a constant row-major [N×C] buffer. Each row is clamped at >= 0.
Tensor kl_to_prior_rows(const Tensor& probs, const std::vector<double>& priors,
                        const std::vector<uint8_t>& row_mask, double floor = 1e-6);

}  // namespace mhri
