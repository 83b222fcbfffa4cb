#include "hibrids/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace hibrids {

TrainingDiverged::TrainingDiverged(int step, double loss)
    : std::runtime_error("training diverged at step " + std::to_string(step) + " (loss " + std::to_string(loss) + ")"),
      step_(step) {}

double gradient_norm(const Model& model) {
    double sq = 0.0;
    model.for_each_parameter([&](const std::string&, const Tensor& t) { sq += t.grad.squaredNorm(); });
    for (const auto* table : {model.encoder_bias(), model.decoder_bias()}) {
        if (!table) continue;
        for (double g : table->grads()) sq += g * g;
    }
    return std::sqrt(sq);
}

void sgd_step(Model& model, double learning_rate, double max_grad_norm) {
    double scale = learning_rate;
    if (max_grad_norm > 0.0) {
        const double norm = gradient_norm(model);
        if (norm > max_grad_norm) scale *= max_grad_norm / norm;
    }
    model.for_each_parameter([&](const std::string&, Tensor& t) { t.value -= scale * t.grad; });
    for (auto* table : {model.encoder_bias(), model.decoder_bias()}) {
        if (!table) continue;
        auto v = table->values();
        auto g = table->grads();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= scale * g[i];
    }
}

std::vector<double> train_toy(Model& model, std::span<const EncodedSample> data, const TrainOptions& options,
                              const std::function<void(int, double)>& on_step) {
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(std::max(options.steps, 0)));
    if (data.empty()) return trace;

    const std::size_t batch = options.batch_size == 0 ? data.size() : std::min(options.batch_size, data.size());
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(options.seed);
    std::size_t cursor = data.size();
    std::vector<EncodedSample> minibatch;

    for (int step = 0; step < options.steps; ++step) {
        double loss = 0.0;
        if (batch == data.size()) {
            loss = model.loss_and_gradients(data);
        } else {
            minibatch.clear();
            for (std::size_t k = 0; k < batch; ++k) {
                if (cursor == order.size()) {
                    std::shuffle(order.begin(), order.end(), rng);
                    cursor = 0;
                }
                minibatch.push_back(data[order[cursor++]]);
            }
            loss = model.loss_and_gradients(minibatch);
        }
        if (!std::isfinite(loss)) throw TrainingDiverged(step, loss);
        trace.push_back(loss);
        if (on_step) on_step(step, loss);
        sgd_step(model, options.learning_rate, options.max_grad_norm);
    }
    return trace;
}

double token_accuracy(const Model& model, std::span<const EncodedSample> data) {
    std::size_t correct = 0;
    std::size_t total = 0;
    for (const auto& s : data) {
        std::vector<int> input{Vocabulary::kBos};
        input.insert(input.end(), s.target.begin(), s.target.end());
        std::vector<int> gold(s.target.begin(), s.target.end());
        gold.push_back(Vocabulary::kEos);
        const Eigen::MatrixXd logits = model.forward(s.tree, s.source, input);
        for (std::size_t t = 0; t < gold.size(); ++t) {
            Eigen::Index best = 0;
            logits.row(static_cast<Eigen::Index>(t)).maxCoeff(&best);
            correct += (best == gold[t]) ? 1 : 0;
            ++total;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace hibrids
