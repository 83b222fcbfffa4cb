#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "hibrids/model.hpp"

namespace hibrids {

struct TrainOptions {
    int steps = 100;
    double learning_rate = 0.1;
    std::size_t batch_size = 0;  // 0 = full batch
    double max_grad_norm = 0.0;  // 0 = no clipping
    std::uint64_t seed = 1;      // minibatch order
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(int step, double loss);
    int step() const { return step_; }

private:
    int step_;
};

/// Plain SGD. Returns the loss measured before each update.
std::vector<double> train_toy(Model& model, std::span<const EncodedSample> data, const TrainOptions& options,
                              const std::function<void(int, double)>& on_step = {});

/// p <- p - lr * g for every parameter and bias entry; optional global-norm clip.
void sgd_step(Model& model, double learning_rate, double max_grad_norm = 0.0);

double gradient_norm(const Model& model);

/// Teacher-forced argmax accuracy over target tokens plus EOS.
double token_accuracy(const Model& model, std::span<const EncodedSample> data);

}  // namespace hibrids
