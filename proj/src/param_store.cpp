#include "lift/param_store.hpp"

#include <cmath>

#include "lift/bytes.hpp"

namespace lift {

Tensor ParamStore::add(const std::string& name, Tensor tensor) {
    if (params_.count(name)) throw Error("ParamStore: duplicate parameter " + name);
    tensor.node()->requires_grad = true;
    tensor.node()->track = true;
    params_.emplace(name, tensor);
    Moments mom;
    mom.m.assign(tensor.values().size(), 0.0);
    mom.v.assign(tensor.values().size(), 0.0);
    moments_.emplace(name, std::move(mom));
    return tensor;
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("ParamStore: unknown parameter " + name);
    return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("ParamStore: unknown parameter " + name);
    return it->second;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, t] : params_) out.push_back(name);
    return out;
}

void ParamStore::zero_grads() {
    for (auto& [name, t] : params_) t.zero_grad();
}

void ParamStore::adam_step(const AdamConfig& config) {
    for (const auto& [name, t] : params_)
        if (!t.has_grad()) throw MissingGradError("adam_step: no gradient for parameter " + name);

    ++step_count_;
    const double bc1 = 1.0 - std::pow(config.beta1, double(step_count_));
    const double bc2 = 1.0 - std::pow(config.beta2, double(step_count_));

    for (auto& [name, t] : params_) {
        auto& mom = moments_.at(name);
        auto& values = t.raw_values();
        auto& grad = t.node()->grad;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double g = grad[i];
            mom.m[i] = config.beta1 * mom.m[i] + (1.0 - config.beta1) * g;
            mom.v[i] = config.beta2 * mom.v[i] + (1.0 - config.beta2) * g * g;
            const double m_hat = mom.m[i] / bc1;
            const double v_hat = mom.v[i] / bc2;
            values[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
        }
        std::fill(grad.begin(), grad.end(), 0.0);
    }
}

std::uint64_t ParamStore::value_checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [name, t] : params_) {
        mix(name.data(), name.size());
        mix(t.values().data(), t.values().size() * sizeof(double));
    }
    return h;
}

std::vector<std::uint8_t> ParamStore::serialize() const {
    ByteWriter w;
    w.put_str("LIFTPARM");
    w.put_u32(1);  // version
    w.put_u32(std::uint32_t(params_.size()));
    for (const auto& [name, t] : params_) {
        w.put_u32(std::uint32_t(name.size()));
        w.put_str(name);
        w.put_u32(std::uint32_t(t.shape().size()));
        for (int d : t.shape()) w.put_u32(std::uint32_t(d));
        for (double v : t.values()) w.put_f64(v);
    }
    return w.take();
}

void ParamStore::save(const std::string& path) const { write_file_bytes(path, serialize()); }

ParamStore ParamStore::deserialize(const std::vector<std::uint8_t>& bytes) {
    ParamStore store;
    try {
        ByteReader r(bytes);
        if (r.get_str(8) != "LIFTPARM") throw CheckpointError("checkpoint: bad magic");
        const auto version = r.get_u32();
        if (version != 1) throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
        const auto count = r.get_u32();
        for (std::uint32_t i = 0; i < count; ++i) {
            const auto name_len = r.get_u32();
            const std::string name = r.get_str(name_len);
            const auto rank = r.get_u32();
            std::vector<int> shape;
            std::int64_t numel = 1;
            for (std::uint32_t d = 0; d < rank; ++d) {
                shape.push_back(int(r.get_u32()));
                numel *= shape.back();
            }
            std::vector<double> values(static_cast<std::size_t>(numel));
            for (auto& v : values) v = r.get_f64();
            store.add(name, Tensor::from(std::move(shape), std::move(values)));
        }
        if (!r.exhausted()) throw CheckpointError("checkpoint: trailing bytes");
    } catch (const ByteReader::Truncated&) {
        throw CheckpointError("checkpoint: truncated file");
    }
    return store;
}

ParamStore ParamStore::load(const std::string& path) { return deserialize(read_file_bytes(path)); }

GradCheckReport grad_check(const std::function<Tensor()>& forward, ParamStore& params,
                           double tolerance, double step) {
    GradCheckReport report;
    report.tolerance = tolerance;

    params.zero_grads();
    Tensor loss = forward();
    backward(loss);

    std::map<std::string, std::vector<double>> analytic;
    for (const auto& name : params.names()) analytic[name] = params.get(name).grad();

    for (const auto& name : params.names()) {
        auto& values = params.get(name).raw_values();
        double max_err = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            double f_plus, f_minus;
            {
                NoGradGuard guard;
                values[i] = saved + step;
                f_plus = forward().item();
                values[i] = saved - step;
                f_minus = forward().item();
            }
            values[i] = saved;
            const double fd = (f_plus - f_minus) / (2.0 * step);
            const double ad = analytic[name][i];
            // guarded denominator so finite-difference noise on near-zero
            // gradients does not dominate
            const double err = std::fabs(ad - fd) / std::max({std::fabs(ad), std::fabs(fd), 1e-4});
            max_err = std::max(max_err, err);
        }
        report.entries.push_back({name, max_err});
        if (max_err > report.worst_err) {
            report.worst_err = max_err;
            report.worst_param = name;
        }
    }
    report.passed = report.worst_err < tolerance;
    params.zero_grads();
    return report;
}

}  // namespace lift
