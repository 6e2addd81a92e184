#pragma once

#include <functional>
#include <span>
#include <vector>

#include "hardneg/tensor.hpp"

namespace hardneg {

/// Rows whose norm is at or below this are rejected by l2_normalize_rows.
inline constexpr double kNormEpsilon = 1e-12;

/// log(sum(exp(v))) with a max shift. Throws DomainError on empty input.
double stable_logsumexp(std::span<const double> values);

/// exp(v - logsumexp(v)).
std::vector<double> softmax(std::span<const double> values);

/// Scales every row to unit Euclidean norm. Throws DegenerateEmbeddingError
/// naming the first row whose norm is <= kNormEpsilon.
Tensor l2_normalize_rows(const Tensor& m);

/// Vector-Jacobian product of l2_normalize_rows. `input` is the
/// pre-normalization matrix, `output` its normalized rows.
Tensor l2_normalize_rows_backward(const Tensor& input, const Tensor& output,
                                  const Tensor& grad_output);

/// Entry (k, n) = <a_k, b_n>. Inputs are expected to be row-normalized.
Tensor cosine_similarity_matrix(const Tensor& a, const Tensor& b);

// Dense products on rank-2 tensors.
Tensor matmul(const Tensor& a, const Tensor& b);         // a * b
Tensor matmul_transpose_b(const Tensor& a, const Tensor& b);  // a * b^T
Tensor matmul_transpose_a(const Tensor& a, const Tensor& b);  // a^T * b
Tensor transpose(const Tensor& m);

double dot(std::span<const double> a, std::span<const double> b);

struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step = 0;
    ParamSet first_moment;
    ParamSet second_moment;
};

/// Bias-corrected Adam update in place. Moments are created lazily on the
/// first call; afterwards grads and moments must match the parameter layout.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state);

using ScalarObjective = std::function<double(const ParamSet&)>;

/// Central differences (f(x+h) - f(x-h)) / 2h for every scalar in params.
/// Throws OracleError when f is not finite at a probe point.
ParamSet finite_diff_grad(const ScalarObjective& f, const ParamSet& params, double h = 1e-5);

/// max_i |a_i - b_i| / max(max_i |b_i|, floor). Used to compare an analytic
/// gradient `a` against the oracle `b`.
double max_relative_error(const ParamSet& a, const ParamSet& b, double floor = 1e-8);

}  // namespace hardneg
