#pragma once

#include "tslt/matrix.hpp"
#include "tslt/random.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace tslt {

enum class Mode { train, infer };
enum class Activation { none, relu };

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

/// y = act(x · Wᵀ + b). Weights are stored (out × in), bias as a 1 × out row.
struct DenseLayer {
    Matrix weights;
    Matrix bias;
    Activation activation = Activation::none;

    std::size_t in_features() const noexcept { return weights.cols(); }
    std::size_t out_features() const noexcept { return weights.rows(); }
    bool operator==(const DenseLayer&) const = default;
};

DenseLayer make_dense(std::size_t in, std::size_t out, Activation activation);

struct DenseCache {
    Matrix input;
    Matrix output;
};

Matrix dense_forward(const DenseLayer& layer, const Matrix& x, DenseCache* cache = nullptr);
/// Writes weight/bias gradients into `grads` and returns the input gradient.
/// The ReLU derivative at exactly zero is taken as zero.
Matrix dense_backward(const DenseLayer& layer, const DenseCache& cache, const Matrix& upstream, DenseLayer& grads);

// ---------------------------------------------------------------------------
// Layer normalization over the feature (last) axis
// ---------------------------------------------------------------------------

struct LayerNormLayer {
    Matrix gamma;
    Matrix beta;
    double epsilon = 1e-3;

    std::size_t features() const noexcept { return gamma.cols(); }
    bool operator==(const LayerNormLayer&) const = default;
};

LayerNormLayer make_layernorm(std::size_t features, double epsilon = 1e-3);

struct LayerNormCache {
    Matrix normalized;
    std::vector<double> inv_std;
};

Matrix layernorm_forward(const LayerNormLayer& layer, const Matrix& h, LayerNormCache* cache = nullptr);
Matrix layernorm_backward(const LayerNormLayer& layer, const LayerNormCache& cache, const Matrix& upstream,
                          LayerNormLayer& grads);

// ---------------------------------------------------------------------------
// Multi-head self-attention
// ---------------------------------------------------------------------------

/// Self-attention with query/key/value/output projections, each with a bias.
///
/// Inputs are stacks of sequences: a (n·seq_len × model_dim) matrix holds n
/// sequences of seq_len rows each. Every sequence attends only to itself.
/// Projection weights follow the dense convention (out × in):
///   query/key/value: (heads·key_dim × model_dim), output: (model_dim × heads·key_dim).
struct MhaLayer {
    std::size_t heads = 2;
    std::size_t key_dim = 4;
    std::size_t seq_len = 16;
    Matrix query_weights, query_bias;
    Matrix key_weights, key_bias;
    Matrix value_weights, value_bias;
    Matrix output_weights, output_bias;

    std::size_t model_dim() const noexcept { return output_weights.rows(); }
    std::size_t projected_dim() const noexcept { return heads * key_dim; }
    bool operator==(const MhaLayer&) const = default;
};

MhaLayer make_mha(std::size_t model_dim, std::size_t heads, std::size_t key_dim, std::size_t seq_len);

struct MhaCache {
    Matrix input;
    Matrix query;
    Matrix key;
    Matrix value;
    /// (n·heads·seq_len × seq_len): attention rows of sequence s, head h start at (s·heads + h)·seq_len.
    Matrix attention;
    Matrix context;
};

Matrix mha_forward(const MhaLayer& layer, const Matrix& h, MhaCache* cache = nullptr);
Matrix mha_backward(const MhaLayer& layer, const MhaCache& cache, const Matrix& upstream, MhaLayer& grads);

// ---------------------------------------------------------------------------
// Global average pooling over the sequence axis
// ---------------------------------------------------------------------------

/// (n·seq_len × f) → (n × f)
Matrix global_average_pool(const Matrix& h, std::size_t seq_len);
/// (n × f) → (n·seq_len × f), each row receiving upstream / seq_len.
Matrix global_average_pool_backward(const Matrix& upstream, std::size_t seq_len);

// ---------------------------------------------------------------------------
// Dropout (inverted)
// ---------------------------------------------------------------------------

struct DropoutSpec {
    double rate = 0.3;
    bool operator==(const DropoutSpec&) const = default;
};

/// Train mode zeroes each entry with probability `rate` and scales survivors
/// by 1/(1-rate); `mask` receives the per-entry multiplier. Infer mode returns
/// the input unchanged, leaves `mask` empty and draws nothing from `rng`.
Matrix dropout_apply(const DropoutSpec& spec, const Matrix& x, Mode mode, RandSource* rng, Matrix* mask);
Matrix dropout_backward(const Matrix& mask, const Matrix& upstream);

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

struct BatchNormLayer {
    Matrix gamma;
    Matrix beta;
    Matrix running_mean;
    Matrix running_var;
    double momentum = 0.99;
    double epsilon = 1e-3;

    std::size_t features() const noexcept { return gamma.cols(); }
    bool operator==(const BatchNormLayer&) const = default;
};

BatchNormLayer make_batchnorm(std::size_t features);

struct BatchNormCache {
    Matrix normalized;
    std::vector<double> inv_std;
    Mode mode = Mode::infer;
};

/// Train mode normalizes with batch statistics (population variance) and
/// folds them into the running statistics with `momentum`.
Matrix batchnorm_forward(BatchNormLayer& layer, const Matrix& x, Mode mode, BatchNormCache* cache = nullptr);
/// Inference-only path using the running statistics.
Matrix batchnorm_forward(const BatchNormLayer& layer, const Matrix& x);
/// Fills gamma/beta in `grads`; running statistics there are left untouched.
Matrix batchnorm_backward(const BatchNormLayer& layer, const BatchNormCache& cache, const Matrix& upstream,
                          BatchNormLayer& grads);

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

struct LossResult {
    double loss = 0.0;
    /// d loss / d logits = (softmax(logits) - onehot) / n
    Matrix grad;
};

LossResult softmax_cross_entropy(const Matrix& logits, const Matrix& onehot);
/// Mean of -log(p_true + 1e-12) over rows of a probability matrix.
double cross_entropy_from_probs(const Matrix& probs, std::span<const int> labels);
Matrix one_hot(std::span<const int> labels, std::size_t classes);

}  // namespace tslt
