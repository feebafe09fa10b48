#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vtc/tensor.hpp"

namespace vtc {

// Classical SGD with momentum: v <- mu*v + g; p <- p - lr*v.
struct OptimizerState {
    std::map<std::string, std::vector<double>> velocity;
    double momentum = 0.9;
    double learning_rate = 1e-3;

    static OptimizerState init(const std::vector<std::pair<std::string, Tensor*>>& params,
                               double momentum, double learning_rate);
};

// Applies one step to every listed parameter and zeroes its grad. When
// `quantize_f32` is set, parameters and velocities are rounded through binary32
// afterwards so float32 checkpoints reproduce the exact training trajectory.
void sgd_momentum_step(const std::vector<std::pair<std::string, Tensor*>>& params,
                       OptimizerState& state, bool quantize_f32);

}  // namespace vtc
