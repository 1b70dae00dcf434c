#pragma once

#include "tslt/gradcheck.hpp"
#include "tslt/models.hpp"
#include "tslt/preprocess.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace tslt {

struct TrainConfig {
    std::size_t batch_size = 128;
    std::size_t max_epochs = 50;
    std::size_t patience = 5;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
    double validation_fraction = 0.1;
    std::uint64_t seed = 7;

    void validate() const;
};

struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    std::uint64_t t = 0;
};

/// One bias-corrected Adam update. The step counter is advanced before the
/// update; moments are created on first use. A non-finite gradient aborts with
/// the offending tensor's name before anything is modified.
void adam_step(std::span<const TensorRef> params, std::span<const TensorRef> grads, AdamState& state,
               const TrainConfig& cfg);

/// Patience tracker on validation loss with a strict-improvement rule.
class EarlyStopping {
public:
    enum class Decision { proceed, stop };

    struct Update {
        Decision decision = Decision::proceed;
        /// The caller should snapshot weights when this is set.
        bool improved = false;
    };

    explicit EarlyStopping(std::size_t patience);

    Update update(double val_loss);

    double best_loss() const noexcept { return best_loss_; }
    std::size_t stale_count() const noexcept { return stale_; }
    /// 0-based index of the best update so far.
    std::size_t best_index() const noexcept { return best_index_; }

private:
    std::size_t patience_;
    double best_loss_ = std::numeric_limits<double>::infinity();
    std::size_t stale_ = 0;
    std::size_t seen_ = 0;
    std::size_t best_index_ = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    /// 0-based index into `epochs` of the restored weights.
    std::size_t best_epoch = 0;
    /// "early_stopping" or "max_epochs".
    std::string stop_reason;

    double best_val_loss() const { return epochs.at(best_epoch).val_loss; }
};

/// JSON array of {epoch, train_loss, train_acc, val_loss, val_acc}.
nlohmann::json history_to_json(const TrainHistory& history);

struct TrainResult {
    ModelParams model;
    TrainHistory history;
};

struct BatchSlice {
    std::size_t start = 0;
    std::size_t rows = 0;
};

/// Consecutive slices covering [0, rows) exactly once; the final partial batch
/// is kept. With `avoid_singleton`, a trailing one-row batch is merged into the
/// previous one (batch normalization needs two rows).
std::vector<BatchSlice> plan_minibatches(std::size_t rows, std::size_t batch_size, bool avoid_singleton);

/// Called after every epoch; purely observational.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch Adam with a stratified validation carve-out and early stopping.
/// The returned model holds the weights of the best validation epoch.
TrainResult train(Architecture arch, const FeatureMatrix& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

struct LossAccuracy {
    double loss = 0.0;
    double accuracy = 0.0;
};

/// Inference-mode mean cross-entropy and accuracy.
LossAccuracy evaluate_loss(const ModelParams& params, const FeatureMatrix& data);

}  // namespace tslt
