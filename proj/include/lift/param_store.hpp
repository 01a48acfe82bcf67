#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lift/tensor.hpp"

namespace lift {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Named trainable parameters plus their Adam moment buffers. Iteration is
// always in sorted name order, which keeps training and serialization
// deterministic.
class ParamStore {
public:
    // Registers a tensor as a parameter (requires_grad is forced on).
    Tensor add(const std::string& name, Tensor tensor);

    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) > 0; }
    std::size_t size() const { return params_.size(); }
    std::vector<std::string> names() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    // Allocate and zero-fill every parameter's gradient buffer.
    void zero_grads();

    // Standard Adam with bias correction; gradients are zeroed afterwards.
    // A parameter whose gradient buffer was never allocated raises
    // MissingGradError naming it.
    void adam_step(const AdamConfig& config);

    std::int64_t step_count() const { return step_count_; }

    // FNV hash over names and exact value bit patterns; used to verify
    // frozen parameter sets.
    std::uint64_t value_checksum() const;

    // Binary checkpoint, little-endian: magic "LIFTPARM", version u32,
    // count u32, then per parameter (sorted by name): name length u32,
    // UTF-8 name, rank u32, dims u32[], float64 data.
    void save(const std::string& path) const;
    std::vector<std::uint8_t> serialize() const;
    static ParamStore load(const std::string& path);
    static ParamStore deserialize(const std::vector<std::uint8_t>& bytes);

private:
    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
    };
    std::map<std::string, Tensor> params_;
    std::map<std::string, Moments> moments_;
    std::int64_t step_count_ = 0;
};

// Compares reverse-mode gradients of a scalar-valued forward function
// against central finite differences, parameter by parameter.
struct GradCheckReport {
    struct Entry {
        std::string name;
        double max_rel_err = 0.0;
    };
    std::vector<Entry> entries;
    double tolerance = 0.0;
    bool passed = false;
    std::string worst_param;
    double worst_err = 0.0;
};

GradCheckReport grad_check(const std::function<Tensor()>& forward, ParamStore& params,
                           double tolerance, double step = 1e-5);

}  // namespace lift
