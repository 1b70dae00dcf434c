#pragma once

#include "tslt/gradcheck.hpp"
#include "tslt/layers.hpp"
#include "tslt/matrix.hpp"
#include "tslt/random.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace tslt {

enum class Architecture : std::uint8_t { tslt = 0, mlp = 1 };

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& name);

// Fixed geometry of the transformer graph. Only the input width and the class
// count vary between datasets.
inline constexpr std::size_t kBottleneckWidth = 128;
inline constexpr std::size_t kSeqLen = 16;
inline constexpr std::size_t kModelDim = 8;
inline constexpr std::size_t kHeads = 2;
inline constexpr std::size_t kKeyDim = 4;
inline constexpr std::size_t kHiddenWidth = 64;
inline constexpr double kDropoutRate = 0.3;

static_assert(kSeqLen * kModelDim == kBottleneckWidth);
static_assert(kHeads * kKeyDim == kModelDim);

inline constexpr std::size_t kMlpWidths[3] = {512, 256, 128};

// ---------------------------------------------------------------------------
// Transformer
// ---------------------------------------------------------------------------

/// Dense(128, relu) → reshape (16, 8) → LayerNorm → 2-head self-attention →
/// average pool over the 16 steps → Dense(64, relu) → dropout → Dense(K) → softmax.
struct TsltParams {
    std::size_t input_dim = 0;
    std::size_t num_classes = 0;
    DenseLayer dense1;
    LayerNormLayer layernorm;
    MhaLayer mha;
    DenseLayer dense2;
    DenseLayer output;
    DropoutSpec dropout{kDropoutRate};

    bool operator==(const TsltParams&) const = default;
};

/// Uniform Glorot weights from `seed`, zero biases, unit gamma, zero beta.
TsltParams build_tslt(std::size_t input_dim, std::size_t num_classes, std::uint64_t seed);
/// Same shapes as build_tslt with every tensor zero; used for gradients.
TsltParams zeros_like(const TsltParams& p);

struct TsltCache {
    Mode mode = Mode::infer;
    std::size_t batch = 0;
    DenseCache dense1;
    /// h1 viewed as (batch·16 × 8), row-major: h1[16i + j] of one sample lands on step i, feature j.
    Matrix sequence;
    LayerNormCache layernorm;
    MhaCache mha;
    Matrix attended;
    Matrix pooled;
    DenseCache dense2;
    Matrix dropout_mask;
    DenseCache output;
    Matrix probs;
};

/// Returns (n × K) class probabilities. Train mode requires `rng` for dropout.
Matrix tslt_forward(const TsltParams& p, const Matrix& x, Mode mode, RandSource* rng, TsltCache* cache);
/// Gradient of mean cross-entropy w.r.t. every trainable tensor.
TsltParams tslt_backward(const TsltParams& p, const TsltCache& cache, const Matrix& onehot);

/// Row-major (n × 128) → (n·16 × 8) and back; both are pure relabelings of the buffer.
Matrix reshape_to_sequence(const Matrix& h1);
Matrix flatten_sequence(const Matrix& sequence);

// ---------------------------------------------------------------------------
// MLP baseline
// ---------------------------------------------------------------------------

/// Three blocks of Dense(relu) → [BatchNorm] → dropout with widths 512/256/128
/// (no batchnorm in the third), then Dense(K) → softmax.
struct MlpParams {
    std::size_t input_dim = 0;
    std::size_t num_classes = 0;
    DenseLayer dense1;
    BatchNormLayer norm1;
    DenseLayer dense2;
    BatchNormLayer norm2;
    DenseLayer dense3;
    DenseLayer output;
    DropoutSpec dropout{kDropoutRate};

    bool operator==(const MlpParams&) const = default;
};

MlpParams build_mlp(std::size_t input_dim, std::size_t num_classes, std::uint64_t seed);
MlpParams zeros_like(const MlpParams& p);

struct MlpCache {
    Mode mode = Mode::infer;
    std::size_t batch = 0;
    DenseCache dense1;
    BatchNormCache norm1;
    Matrix mask1;
    DenseCache dense2;
    BatchNormCache norm2;
    Matrix mask2;
    DenseCache dense3;
    Matrix mask3;
    DenseCache output;
    Matrix probs;
};

/// Train mode updates the batchnorm running statistics in `p`.
Matrix mlp_forward(MlpParams& p, const Matrix& x, Mode mode, RandSource* rng, MlpCache* cache);
/// Inference with the stored running statistics.
Matrix mlp_forward(const MlpParams& p, const Matrix& x);
MlpParams mlp_backward(const MlpParams& p, const MlpCache& cache, const Matrix& onehot);

// ---------------------------------------------------------------------------
// Architecture-independent access
// ---------------------------------------------------------------------------

using ModelParams = std::variant<TsltParams, MlpParams>;

Architecture architecture(const ModelParams& params);
std::size_t input_dim(const ModelParams& params);
std::size_t num_classes(const ModelParams& params);
ModelParams build_model(Architecture arch, std::size_t input_dim, std::size_t num_classes, std::uint64_t seed);
ModelParams zeros_like(const ModelParams& params);

/// Every tensor updated by the optimizer, in a fixed order.
std::vector<TensorRef> trainable_tensors(TsltParams& p);
std::vector<TensorRef> trainable_tensors(MlpParams& p);
std::vector<TensorRef> trainable_tensors(ModelParams& p);
/// Trainable tensors plus non-trainable state (batchnorm running statistics).
std::vector<TensorRef> stored_tensors(ModelParams& p);

/// Inference-mode probabilities, evaluated in blocks of `block_rows`.
Matrix predict_proba(const ModelParams& params, const Matrix& x, std::size_t block_rows = 2048);

/// Rounds every stored tensor to 32-bit precision, matching the bundle encoding.
void quantize_to_float(ModelParams& params);

// ---------------------------------------------------------------------------
// Parameter accounting
// ---------------------------------------------------------------------------

struct LayerRow {
    std::string name;
    std::string type;
    std::string output_shape;
    std::string activation;
    std::size_t params = 0;
    /// Closed form as published in the reference layer table, if any.
    std::string formula;
    /// Count stated by the reference layer table where it differs from ours.
    std::optional<std::size_t> reference_params;
};

struct ParamTable {
    std::vector<LayerRow> rows;
    std::size_t total = 0;
};

/// Per-layer counts derived by enumerating stored trainable tensors.
ParamTable count_params(const TsltParams& p);
ParamTable count_params(const MlpParams& p);
ParamTable count_params(const ModelParams& p);
std::string format_param_table(const ParamTable& table);

}  // namespace tslt
