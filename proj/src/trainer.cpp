#include "tslt/trainer.hpp"

#include "tslt/dataset.hpp"
#include "tslt/error.hpp"
#include "tslt/layers.hpp"
#include "tslt/metrics.hpp"
#include "tslt/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tslt {

void TrainConfig::validate() const {
    if (batch_size < 1) {
        throw Error("batch_size must be at least 1");
    }
    if (patience < 1) {
        throw Error("patience must be at least 1");
    }
    if (max_epochs < 1) {
        throw Error("max_epochs must be at least 1");
    }
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
        throw Error("validation_fraction must lie in (0, 1)");
    }
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw Error("learning_rate must be a finite non-negative number");
    }
}

void adam_step(std::span<const TensorRef> params, std::span<const TensorRef> grads, AdamState& state,
               const TrainConfig& cfg) {
    if (params.size() != grads.size()) {
        throw ShapeError("adam_step got " + std::to_string(params.size()) + " parameters and " +
                         std::to_string(grads.size()) + " gradients");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Matrix& p = *params[i].value;
        const Matrix& g = *grads[i].value;
        if (p.rows() != g.rows() || p.cols() != g.cols()) {
            throw ShapeError("gradient for " + params[i].name + " has shape " + shape_string(g) +
                             ", parameter has " + shape_string(p));
        }
        if (!all_finite(g)) {
            throw NumericError("non-finite gradient in tensor " + params[i].name + " at step " +
                               std::to_string(state.t + 1));
        }
    }
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.value->rows(), p.value->cols());
            state.v.emplace_back(p.value->rows(), p.value->cols());
        }
    } else if (state.m.size() != params.size()) {
        throw ShapeError("Adam state tracks " + std::to_string(state.m.size()) + " tensors, got " +
                         std::to_string(params.size()));
    }

    ++state.t;
    const double t = static_cast<double>(state.t);
    const double correction1 = 1.0 - std::pow(cfg.beta1, t);
    const double correction2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto theta = params[i].value->values();
        const auto g = grads[i].value->values();
        auto m = state.m[i].values();
        auto v = state.v[i].values();
        for (std::size_t j = 0; j < theta.size(); ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double m_hat = m[j] / correction1;
            const double v_hat = v[j] / correction2;
            theta[j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
        }
    }
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
    if (patience < 1) {
        throw Error("patience must be at least 1");
    }
}

EarlyStopping::Update EarlyStopping::update(double val_loss) {
    Update u;
    if (val_loss < best_loss_) {
        best_loss_ = val_loss;
        best_index_ = seen_;
        stale_ = 0;
        u.improved = true;
    } else {
        ++stale_;
    }
    ++seen_;
    u.decision = stale_ >= patience_ ? Decision::stop : Decision::proceed;
    return u;
}

nlohmann::json history_to_json(const TrainHistory& history) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : history.epochs) {
        out.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"train_acc", e.train_acc},
                       {"val_loss", e.val_loss},
                       {"val_acc", e.val_acc}});
    }
    return out;
}

LossAccuracy evaluate_loss(const ModelParams& params, const FeatureMatrix& data) {
    const Matrix probs = predict_proba(params, data.x);
    LossAccuracy r;
    r.loss = cross_entropy_from_probs(probs, data.y);
    const auto predicted = argmax_labels(probs);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        hits += predicted[i] == data.y[i] ? 1 : 0;
    }
    r.accuracy = static_cast<double>(hits) / static_cast<double>(data.y.size());
    return r;
}

std::vector<BatchSlice> plan_minibatches(std::size_t rows, std::size_t batch_size, bool avoid_singleton) {
    if (batch_size < 1) {
        throw Error("batch_size must be at least 1");
    }
    std::vector<BatchSlice> batches;
    for (std::size_t start = 0; start < rows; start += batch_size) {
        batches.push_back({start, std::min(batch_size, rows - start)});
    }
    if (avoid_singleton && batches.size() > 1 && batches.back().rows == 1) {
        batches.pop_back();
        batches.back().rows += 1;
    }
    return batches;
}

namespace {

struct BatchOutcome {
    double loss = 0.0;
    std::size_t hits = 0;
};

BatchOutcome train_batch(ModelParams& model, AdamState& adam, const Matrix& x, std::span<const int> y,
                         RandSource& dropout_rng, const TrainConfig& cfg) {
    const std::size_t k = num_classes(model);
    const Matrix onehot = one_hot(y, k);
    Matrix probs;
    ModelParams grads = std::visit(
        [&](auto& p) -> ModelParams {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, TsltParams>) {
                TsltCache cache;
                probs = tslt_forward(p, x, Mode::train, &dropout_rng, &cache);
                return tslt_backward(p, cache, onehot);
            } else {
                MlpCache cache;
                probs = mlp_forward(p, x, Mode::train, &dropout_rng, &cache);
                return mlp_backward(p, cache, onehot);
            }
        },
        model);

    BatchOutcome out;
    out.loss = cross_entropy_from_probs(probs, y);
    const auto predicted = argmax_labels(probs);
    for (std::size_t i = 0; i < y.size(); ++i) {
        out.hits += predicted[i] == y[i] ? 1 : 0;
    }
    if (!std::isfinite(out.loss)) {
        return out;
    }
    auto params = trainable_tensors(model);
    auto grad_refs = trainable_tensors(grads);
    adam_step(params, grad_refs, adam, cfg);
    return out;
}

}  // namespace

TrainResult train(Architecture arch, const FeatureMatrix& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    const std::size_t k = data.num_classes();
    if (k < 2) {
        throw DataError("training needs at least 2 classes");
    }
    if (data.y.size() != data.size() || data.size() == 0) {
        throw DataError("training data needs one label per row");
    }
    const auto present = class_counts(data);
    if (std::count_if(present.begin(), present.end(), [](std::size_t c) { return c > 0; }) < 2) {
        throw DataError("training data contains fewer than 2 distinct classes");
    }

    const auto split = stratified_split_indices(data.y, k, cfg.validation_fraction, derive_seed(cfg.seed, 1));
    if (split.test.empty() || split.train.empty()) {
        throw DataError("not enough rows for a validation carve-out");
    }
    const FeatureMatrix train_set = subset(data, split.train);
    const FeatureMatrix val_set = subset(data, split.test);

    TrainResult result;
    result.model = build_model(arch, data.x.cols(), k, derive_seed(cfg.seed, 2));
    RandSource shuffle_rng(derive_seed(cfg.seed, 3));
    RandSource dropout_rng(derive_seed(cfg.seed, 4));
    AdamState adam;
    EarlyStopping stopper(cfg.patience);
    ModelParams best = result.model;

    const std::size_t n = train_set.size();
    const std::size_t d = train_set.x.cols();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    if (arch == Architecture::mlp && (n < 2 || cfg.batch_size < 2)) {
        throw DataError("the MLP needs batches of at least 2 rows for batch normalization");
    }
    const auto batches = plan_minibatches(n, cfg.batch_size, arch == Architecture::mlp);

    result.history.stop_reason = "max_epochs";
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        std::size_t hits = 0;
        for (std::size_t batch_index = 0; batch_index < batches.size(); ++batch_index) {
            const auto [start, rows] = batches[batch_index];
            Matrix x(rows, d);
            std::vector<int> y(rows);
            for (std::size_t i = 0; i < rows; ++i) {
                const std::size_t src = order[start + i];
                std::copy(train_set.x.row(src).begin(), train_set.x.row(src).end(), x.row(i).begin());
                y[i] = train_set.y[src];
            }
            const BatchOutcome b = train_batch(result.model, adam, x, y, dropout_rng, cfg);
            if (!std::isfinite(b.loss)) {
                throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(batch_index + 1));
            }
            loss_sum += b.loss * static_cast<double>(rows);
            hits += b.hits;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(n);
        rec.train_acc = static_cast<double>(hits) / static_cast<double>(n);
        const LossAccuracy val = evaluate_loss(result.model, val_set);
        if (!std::isfinite(val.loss)) {
            throw NumericError("training diverged: non-finite validation loss at epoch " + std::to_string(epoch));
        }
        rec.val_loss = val.loss;
        rec.val_acc = val.accuracy;
        result.history.epochs.push_back(rec);
        if (on_epoch) {
            on_epoch(rec);
        }

        const auto u = stopper.update(val.loss);
        if (u.improved) {
            best = result.model;
            result.history.best_epoch = epoch - 1;
        }
        if (u.decision == EarlyStopping::Decision::stop) {
            result.history.stop_reason = "early_stopping";
            break;
        }
    }
    result.model = std::move(best);
    return result;
}

}  // namespace tslt
