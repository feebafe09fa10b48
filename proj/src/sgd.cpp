#include "vtc/sgd.hpp"

#include "vtc/util.hpp"

namespace vtc {

OptimizerState OptimizerState::init(const std::vector<std::pair<std::string, Tensor*>>& params,
                                    double momentum, double learning_rate) {
    if (momentum < 0.0 || momentum >= 1.0) fail("momentum must be in [0, 1), got ", momentum);
    if (learning_rate <= 0.0) fail("learning rate must be positive, got ", learning_rate);
    OptimizerState st;
    st.momentum = momentum;
    st.learning_rate = learning_rate;
    for (const auto& [name, t] : params)
        st.velocity.emplace(name, std::vector<double>(t->values.size(), 0.0));
    return st;
}

void sgd_momentum_step(const std::vector<std::pair<std::string, Tensor*>>& params,
                       OptimizerState& state, bool quantize_f32) {
    if (state.velocity.size() != params.size())
        fail("optimizer state holds ", state.velocity.size(), " velocity buffers for ", params.size(),
             " parameters");
    for (const auto& [name, t] : params) {
        auto it = state.velocity.find(name);
        if (it == state.velocity.end()) fail("no velocity buffer for parameter '", name, "'");
        std::vector<double>& v = it->second;
        if (v.size() != t->values.size())
            fail("velocity buffer for '", name, "' has ", v.size(), " entries, parameter has ",
                 t->values.size());
        if (t->grad.size() != t->values.size())
            fail("missing grad on tracked parameter '", name, "'");
        const double mu = state.momentum, lr = state.learning_rate;
        for (size_t i = 0; i < v.size(); ++i) {
            v[i] = mu * v[i] + t->grad[i];
            t->values[i] -= lr * v[i];
            if (quantize_f32) {
                v[i] = round_f32(v[i]);
                t->values[i] = round_f32(t->values[i]);
            }
        }
        t->zero_grad();
    }
}

}  // namespace vtc
