#include "hardneg/numcore.hpp"

#include <algorithm>
#include <cmath>

#include "hardneg/errors.hpp"

namespace hardneg {

double stable_logsumexp(std::span<const double> values) {
    if (values.empty()) throw DomainError("logsumexp of an empty vector");
    const double top = *std::max_element(values.begin(), values.end());
    if (!std::isfinite(top)) throw DomainError("logsumexp of a non-finite vector");
    double acc = 0.0;
    for (double v : values) acc += std::exp(v - top);
    return top + std::log(acc);
}

std::vector<double> softmax(std::span<const double> values) {
    const double lse = stable_logsumexp(values);
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = std::exp(values[i] - lse);
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

Tensor l2_normalize_rows(const Tensor& m) {
    if (m.rank() != 2) throw ShapeError("l2_normalize_rows expects a matrix");
    Tensor out = m;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = out.row(r);
        const double norm = std::sqrt(dot(row, row));
        if (!(norm > kNormEpsilon)) throw DegenerateEmbeddingError(r, norm);
        for (double& v : row) v /= norm;
    }
    return out;
}

Tensor l2_normalize_rows_backward(const Tensor& input, const Tensor& output,
                                  const Tensor& grad_output) {
    if (!input.same_shape(output) || !input.same_shape(grad_output)) {
        throw ShapeError("l2_normalize_rows_backward shape mismatch");
    }
    Tensor grad(input.shape());
    for (std::size_t r = 0; r < input.rows(); ++r) {
        const double norm = std::sqrt(dot(input.row(r), input.row(r)));
        const double proj = dot(output.row(r), grad_output.row(r));
        for (std::size_t c = 0; c < input.cols(); ++c) {
            grad(r, c) = (grad_output(r, c) - output(r, c) * proj) / norm;
        }
    }
    return grad;
}

Tensor cosine_similarity_matrix(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
        throw ShapeError("cosine_similarity_matrix: incompatible shapes " +
                         shape_string(a.shape()) + " and " + shape_string(b.shape()));
    }
    return matmul_transpose_b(a, b);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
    }
    Tensor out({a.rows(), b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

Tensor matmul_transpose_b(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
        throw ShapeError("matmul_transpose_b: incompatible shapes " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
    }
    Tensor out({a.rows(), b.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
    }
    return out;
}

Tensor matmul_transpose_a(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows()) {
        throw ShapeError("matmul_transpose_a: incompatible shapes " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
    }
    Tensor out({a.cols(), b.cols()});
    for (std::size_t k = 0; k < a.rows(); ++k) {
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aki * b(k, j);
        }
    }
    return out;
}

Tensor transpose(const Tensor& m) {
    Tensor out({m.cols(), m.rows()});
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
    }
    return out;
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state) {
    if (!params.same_layout(grads)) throw ShapeError("adam_step: gradients do not match params");
    if (state.first_moment.empty()) {
        state.first_moment = params.zeros_like();
        state.second_moment = params.zeros_like();
    } else if (!params.same_layout(state.first_moment) ||
               !params.same_layout(state.second_moment)) {
        throw ShapeError("adam_step: optimizer state does not match params");
    }
    ++state.step;
    const double correction1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double correction2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

    auto g = grads.begin();
    auto m = state.first_moment.begin();
    auto v = state.second_moment.begin();
    for (auto p = params.begin(); p != params.end(); ++p, ++g, ++m, ++v) {
        auto& pd = p->second.data();
        const auto& gd = g->second.data();
        auto& md = m->second.data();
        auto& vd = v->second.data();
        for (std::size_t i = 0; i < pd.size(); ++i) {
            md[i] = state.beta1 * md[i] + (1.0 - state.beta1) * gd[i];
            vd[i] = state.beta2 * vd[i] + (1.0 - state.beta2) * gd[i] * gd[i];
            const double m_hat = md[i] / correction1;
            const double v_hat = vd[i] / correction2;
            pd[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

ParamSet finite_diff_grad(const ScalarObjective& f, const ParamSet& params, double h) {
    if (!(h > 0.0)) throw DomainError("finite_diff_grad needs h > 0");
    ParamSet probe = params;
    ParamSet grad = params.zeros_like();
    auto gi = grad.begin();
    for (auto pi = probe.begin(); pi != probe.end(); ++pi, ++gi) {
        auto& values = pi->second.data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double original = values[i];
            values[i] = original + h;
            const double up = f(probe);
            values[i] = original - h;
            const double down = f(probe);
            values[i] = original;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw OracleError("objective not finite while probing '" + pi->first + "'[" +
                                  std::to_string(i) + "]");
            }
            gi->second.data()[i] = (up - down) / (2.0 * h);
        }
    }
    return grad;
}

double max_relative_error(const ParamSet& a, const ParamSet& b, double floor) {
    if (!a.same_layout(b)) throw ShapeError("max_relative_error: layouts differ");
    const auto fa = a.flatten();
    const auto fb = b.flatten();
    double diff = 0.0;
    double scale = floor;
    for (std::size_t i = 0; i < fa.size(); ++i) {
        diff = std::max(diff, std::abs(fa[i] - fb[i]));
        scale = std::max(scale, std::abs(fb[i]));
    }
    return diff / scale;
}

}  // namespace hardneg
