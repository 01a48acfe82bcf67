#include "lift/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace lift {

namespace {

thread_local int g_no_grad_depth = 0;

constexpr double kBceEps = 1e-12;

std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out + "]";
}

std::int64_t shape_numel(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

[[noreturn]] void shape_fail(const std::string& op, const std::vector<int>& a) {
    throw ShapeError(op + ": bad shape " + shape_str(a));
}

[[noreturn]] void shape_fail(const std::string& op, const std::vector<int>& a, const std::vector<int>& b) {
    throw ShapeError(op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

// Row/col view of a rank-1 or rank-2 tensor; rank-1 is treated as one row.
void as_matrix(const std::string& op, const Tensor& t, int& rows, int& cols) {
    if (t.rank() == 1) {
        rows = 1;
        cols = t.dim(0);
    } else if (t.rank() == 2) {
        rows = t.dim(0);
        cols = t.dim(1);
    } else {
        shape_fail(op, t.shape());
    }
}

}  // namespace

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool NoGradGuard::active() { return g_no_grad_depth > 0; }

int Tensor::rows() const {
    int r, c;
    as_matrix("rows", *this, r, c);
    return r;
}

int Tensor::cols() const {
    int r, c;
    as_matrix("cols", *this, r, c);
    return c;
}

double Tensor::item() const {
    if (numel() != 1) throw NotScalarError("item: tensor has " + std::to_string(numel()) + " elements");
    return node_->values[0];
}

const std::vector<double>& Tensor::grad() const {
    if (node_->grad.empty()) throw MissingGradError("grad: no gradient populated");
    return node_->grad;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return from(std::move(shape), {}, requires_grad);
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
    auto node = std::make_shared<detail::Node>();
    const auto n = shape_numel(shape);
    if (values.empty()) values.assign(std::size_t(n), 0.0);
    if (std::int64_t(values.size()) != n)
        throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
    node->op = "leaf";
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->requires_grad = requires_grad && !NoGradGuard::active();
    node->track = node->requires_grad;
    return Tensor(node);
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::uniform(std::vector<int> shape, double lo, double hi, Rng& rng, bool requires_grad) {
    std::vector<double> values(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : values) v = rng.uniform(lo, hi);
    return from(std::move(shape), std::move(values), requires_grad);
}

Tensor make_op(const std::string& name, std::vector<int> shape, std::vector<double> values,
               const std::vector<Tensor>& inputs, std::function<void(detail::Node&)> backward_fn) {
    auto node = std::make_shared<detail::Node>();
    if (std::int64_t(values.size()) != shape_numel(shape))
        throw ShapeError(name + ": " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
    node->op = name;
    node->shape = std::move(shape);
    node->values = std::move(values);

    bool track = false;
    if (!NoGradGuard::active()) {
        for (const auto& in : inputs)
            if (in.node()->track) track = true;
    }
    if (track) {
        node->track = true;
        for (const auto& in : inputs) node->inputs.push_back(in.node());
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(node);
}

void backward(const Tensor& loss) {
    if (loss.numel() != 1)
        throw NotScalarError("backward: loss has " + std::to_string(loss.numel()) + " elements");

    auto root = loss.node();
    if (!root->track) return;  // no parameters reachable

    // Iterative post-order DFS over the tracked subgraph.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            detail::Node* child = node->inputs[next++].get();
            if (child->track && !visited.count(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* node = *it;
        if (node->backward_fn) {
            node->ensure_grad();
            node->backward_fn(*node);
        }
    }
}

// --- ops ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_fail("matmul", a.shape(), b.shape());
    const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
    std::vector<double> out(std::size_t(n) * std::size_t(m), 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (int i = 0; i < n; ++i)
        for (int p = 0; p < k; ++p) {
            const double aip = av[std::size_t(i) * std::size_t(k) + std::size_t(p)];
            if (aip == 0.0) continue;
            const double* brow = &bv[std::size_t(p) * std::size_t(m)];
            double* orow = &out[std::size_t(i) * std::size_t(m)];
            for (int j = 0; j < m; ++j) orow[j] += aip * brow[j];
        }
    return make_op("matmul", {n, m}, std::move(out), {a, b}, [n, k, m](detail::Node& node) {
        auto& na = *node.inputs[0];
        auto& nb = *node.inputs[1];
        const auto& g = node.grad;
        if (na.track) {
            na.ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (int j = 0; j < m; ++j)
                        acc += g[std::size_t(i) * std::size_t(m) + std::size_t(j)] *
                               nb.values[std::size_t(p) * std::size_t(m) + std::size_t(j)];
                    na.grad[std::size_t(i) * std::size_t(k) + std::size_t(p)] += acc;
                }
        }
        if (nb.track) {
            nb.ensure_grad();
            for (int p = 0; p < k; ++p)
                for (int i = 0; i < n; ++i) {
                    const double aip = na.values[std::size_t(i) * std::size_t(k) + std::size_t(p)];
                    if (aip == 0.0) continue;
                    const double* grow = &g[std::size_t(i) * std::size_t(m)];
                    double* brow = &nb.grad[std::size_t(p) * std::size_t(m)];
                    for (int j = 0; j < m; ++j) brow[j] += aip * grow[j];
                }
        }
    });
}

namespace {

Tensor elementwise_binary(const std::string& name, const Tensor& a, const Tensor& b,
                          double (*fwd)(double, double),
                          double (*dfda)(double, double),
                          double (*dfdb)(double, double)) {
    if (a.shape() != b.shape()) shape_fail(name, a.shape(), b.shape());
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a.values()[i], b.values()[i]);
    return make_op(name, a.shape(), std::move(out), {a, b}, [dfda, dfdb](detail::Node& node) {
        auto& na = *node.inputs[0];
        auto& nb = *node.inputs[1];
        if (na.track) {
            na.ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i)
                na.grad[i] += node.grad[i] * dfda(na.values[i], nb.values[i]);
        }
        if (nb.track) {
            nb.ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i)
                nb.grad[i] += node.grad[i] * dfdb(na.values[i], nb.values[i]);
        }
    });
}

Tensor elementwise_unary(const std::string& name, const Tensor& x,
                         double (*fwd)(double), double (*dfdx)(double)) {
    std::vector<double> out(x.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x.values()[i]);
    return make_op(name, x.shape(), std::move(out), {x}, [dfdx](detail::Node& node) {
        auto& nx = *node.inputs[0];
        if (!nx.track) return;
        nx.ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i)
            nx.grad[i] += node.grad[i] * dfdx(nx.values[i]);
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * factor;
    return make_op("scale", a.shape(), std::move(out), {a}, [factor](detail::Node& node) {
        auto& nx = *node.inputs[0];
        if (!nx.track) return;
        nx.ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i) nx.grad[i] += node.grad[i] * factor;
    });
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
    int rows, cols;
    as_matrix("add_row_bias", x, rows, cols);
    if (bias.numel() != cols) shape_fail("add_row_bias", x.shape(), bias.shape());
    std::vector<double> out(x.values().size());
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            out[std::size_t(i) * std::size_t(cols) + std::size_t(j)] =
                x.values()[std::size_t(i) * std::size_t(cols) + std::size_t(j)] + bias.values()[std::size_t(j)];
    return make_op("add_row_bias", x.shape(), std::move(out), {x, bias}, [rows, cols](detail::Node& node) {
        auto& nx = *node.inputs[0];
        auto& nb = *node.inputs[1];
        if (nx.track) {
            nx.ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i) nx.grad[i] += node.grad[i];
        }
        if (nb.track) {
            nb.ensure_grad();
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j)
                    nb.grad[std::size_t(j)] += node.grad[std::size_t(i) * std::size_t(cols) + std::size_t(j)];
        }
    });
}

Tensor row_scale(const Tensor& x, const Tensor& gains) {
    int rows, cols;
    as_matrix("row_scale", x, rows, cols);
    if (gains.numel() != cols) shape_fail("row_scale", x.shape(), gains.shape());
    std::vector<double> out(x.values().size());
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            out[std::size_t(i) * std::size_t(cols) + std::size_t(j)] =
                x.values()[std::size_t(i) * std::size_t(cols) + std::size_t(j)] * gains.values()[std::size_t(j)];
    return make_op("row_scale", x.shape(), std::move(out), {x, gains}, [rows, cols](detail::Node& node) {
        auto& nx = *node.inputs[0];
        auto& ng = *node.inputs[1];
        if (nx.track) {
            nx.ensure_grad();
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j)
                    nx.grad[std::size_t(i) * std::size_t(cols) + std::size_t(j)] +=
                        node.grad[std::size_t(i) * std::size_t(cols) + std::size_t(j)] * ng.values[std::size_t(j)];
        }
        if (ng.track) {
            ng.ensure_grad();
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j)
                    ng.grad[std::size_t(j)] +=
                        node.grad[std::size_t(i) * std::size_t(cols) + std::size_t(j)] *
                        nx.values[std::size_t(i) * std::size_t(cols) + std::size_t(j)];
        }
    });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");

    int rows0, cols0;
    as_matrix("concat", parts[0], rows0, cols0);
    int total = 0;
    for (const auto& p : parts) {
        int r, c;
        as_matrix("concat", p, r, c);
        if (axis == 0 && c != cols0) shape_fail("concat", parts[0].shape(), p.shape());
        if (axis == 1 && r != rows0) shape_fail("concat", parts[0].shape(), p.shape());
        total += axis == 0 ? r : c;
    }

    const int out_rows = axis == 0 ? total : rows0;
    const int out_cols = axis == 0 ? cols0 : total;
    std::vector<double> out(std::size_t(out_rows) * std::size_t(out_cols));
    std::vector<int> offsets;
    int offset = 0;
    for (const auto& p : parts) {
        int r, c;
        as_matrix("concat", p, r, c);
        offsets.push_back(offset);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) {
                const int oi = axis == 0 ? offset + i : i;
                const int oj = axis == 0 ? j : offset + j;
                out[std::size_t(oi) * std::size_t(out_cols) + std::size_t(oj)] =
                    p.values()[std::size_t(i) * std::size_t(c) + std::size_t(j)];
            }
        offset += axis == 0 ? r : c;
    }

    return make_op("concat", {out_rows, out_cols}, std::move(out), parts,
                   [axis, out_cols, offsets](detail::Node& node) {
                       for (std::size_t pi = 0; pi < node.inputs.size(); ++pi) {
                           auto& in = *node.inputs[pi];
                           if (!in.track) continue;
                           in.ensure_grad();
                           int r = 1, c = int(in.values.size());
                           if (in.shape.size() == 2) {
                               r = in.shape[0];
                               c = in.shape[1];
                           }
                           const int off = offsets[pi];
                           for (int i = 0; i < r; ++i)
                               for (int j = 0; j < c; ++j) {
                                   const int oi = axis == 0 ? off + i : i;
                                   const int oj = axis == 0 ? j : off + j;
                                   in.grad[std::size_t(i) * std::size_t(c) + std::size_t(j)] +=
                                       node.grad[std::size_t(oi) * std::size_t(out_cols) + std::size_t(oj)];
                               }
                       }
                   });
}

Tensor transpose(const Tensor& x) {
    if (x.rank() != 2) shape_fail("transpose", x.shape());
    const int r = x.dim(0), c = x.dim(1);
    std::vector<double> out(x.values().size());
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            out[std::size_t(j) * std::size_t(r) + std::size_t(i)] =
                x.values()[std::size_t(i) * std::size_t(c) + std::size_t(j)];
    return make_op("transpose", {c, r}, std::move(out), {x}, [r, c](detail::Node& node) {
        auto& nx = *node.inputs[0];
        if (!nx.track) return;
        nx.ensure_grad();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
                nx.grad[std::size_t(i) * std::size_t(c) + std::size_t(j)] +=
                    node.grad[std::size_t(j) * std::size_t(r) + std::size_t(i)];
    });
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& row_ids) {
    int rows, cols;
    as_matrix("gather_rows", x, rows, cols);
    for (int id : row_ids)
        if (id < 0 || id >= rows)
            throw ShapeError("gather_rows: row " + std::to_string(id) + " out of " + std::to_string(rows));
    std::vector<double> out(row_ids.size() * std::size_t(cols));
    for (std::size_t i = 0; i < row_ids.size(); ++i)
        std::copy_n(&x.values()[std::size_t(row_ids[i]) * std::size_t(cols)], cols, &out[i * std::size_t(cols)]);
    return make_op("gather_rows", {int(row_ids.size()), cols}, std::move(out), {x},
                   [row_ids, cols](detail::Node& node) {
                       auto& nx = *node.inputs[0];
                       if (!nx.track) return;
                       nx.ensure_grad();
                       for (std::size_t i = 0; i < row_ids.size(); ++i)
                           for (int j = 0; j < cols; ++j)
                               nx.grad[std::size_t(row_ids[i]) * std::size_t(cols) + std::size_t(j)] +=
                                   node.grad[i * std::size_t(cols) + std::size_t(j)];
                   });
}

Tensor slice_cols(const Tensor& x, int begin, int end) {
    int rows, cols;
    as_matrix("slice_cols", x, rows, cols);
    if (begin < 0 || end > cols || begin >= end) shape_fail("slice_cols", x.shape());
    const int width = end - begin;
    std::vector<double> out(std::size_t(rows) * std::size_t(width));
    for (int i = 0; i < rows; ++i)
        std::copy_n(&x.values()[std::size_t(i) * std::size_t(cols) + std::size_t(begin)], width,
                    &out[std::size_t(i) * std::size_t(width)]);
    return make_op("slice_cols", {rows, width}, std::move(out), {x},
                   [rows, cols, begin, width](detail::Node& node) {
                       auto& nx = *node.inputs[0];
                       if (!nx.track) return;
                       nx.ensure_grad();
                       for (int i = 0; i < rows; ++i)
                           for (int j = 0; j < width; ++j)
                               nx.grad[std::size_t(i) * std::size_t(cols) + std::size_t(begin + j)] +=
                                   node.grad[std::size_t(i) * std::size_t(width) + std::size_t(j)];
                   });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    if (table.rank() != 2) shape_fail("embedding_lookup", table.shape());
    const int vocab = table.dim(0), width = table.dim(1);
    for (int id : ids)
        if (id < 0 || id >= vocab)
            throw VocabError("embedding_lookup: id " + std::to_string(id) + " outside vocabulary of " +
                             std::to_string(vocab));
    std::vector<double> out(ids.size() * std::size_t(width));
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy_n(&table.values()[std::size_t(ids[i]) * std::size_t(width)], width,
                    &out[i * std::size_t(width)]);
    return make_op("embedding_lookup", {int(ids.size()), width}, std::move(out), {table},
                   [ids, width](detail::Node& node) {
                       auto& nt = *node.inputs[0];
                       if (!nt.track) return;
                       nt.ensure_grad();
                       for (std::size_t i = 0; i < ids.size(); ++i)
                           for (int j = 0; j < width; ++j)
                               nt.grad[std::size_t(ids[i]) * std::size_t(width) + std::size_t(j)] +=
                                   node.grad[i * std::size_t(width) + std::size_t(j)];
                   });
}

Tensor softmax_rows(const Tensor& x) {
    int rows, cols;
    as_matrix("softmax", x, rows, cols);
    std::vector<double> out(x.values().size());
    for (int i = 0; i < rows; ++i) {
        const double* row = &x.values()[std::size_t(i) * std::size_t(cols)];
        double* orow = &out[std::size_t(i) * std::size_t(cols)];
        double mx = row[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        for (int j = 0; j < cols; ++j) orow[j] /= sum;
    }
    std::vector<double> saved = out;
    return make_op("softmax", x.shape(), std::move(out), {x},
                   [rows, cols, saved = std::move(saved)](detail::Node& node) {
                       auto& nx = *node.inputs[0];
                       if (!nx.track) return;
                       nx.ensure_grad();
                       for (int i = 0; i < rows; ++i) {
                           const double* y = &saved[std::size_t(i) * std::size_t(cols)];
                           const double* gy = &node.grad[std::size_t(i) * std::size_t(cols)];
                           double dot = 0.0;
                           for (int j = 0; j < cols; ++j) dot += y[j] * gy[j];
                           double* gx = &nx.grad[std::size_t(i) * std::size_t(cols)];
                           for (int j = 0; j < cols; ++j) gx[j] += y[j] * (gy[j] - dot);
                       }
                   });
}

Tensor layer_norm_rows(const Tensor& x, double eps) {
    int rows, cols;
    as_matrix("layer_norm", x, rows, cols);
    std::vector<double> out(x.values().size());
    std::vector<double> inv_std(static_cast<std::size_t>(rows));
    for (int i = 0; i < rows; ++i) {
        const double* row = &x.values()[std::size_t(i) * std::size_t(cols)];
        double mean = 0.0;
        for (int j = 0; j < cols; ++j) mean += row[j];
        mean /= cols;
        double var = 0.0;
        for (int j = 0; j < cols; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= cols;
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[std::size_t(i)] = inv;
        double* orow = &out[std::size_t(i) * std::size_t(cols)];
        for (int j = 0; j < cols; ++j) orow[j] = (row[j] - mean) * inv;
    }
    std::vector<double> saved = out;
    return make_op("layer_norm", x.shape(), std::move(out), {x},
                   [rows, cols, saved = std::move(saved), inv_std = std::move(inv_std)](detail::Node& node) {
                       auto& nx = *node.inputs[0];
                       if (!nx.track) return;
                       nx.ensure_grad();
                       for (int i = 0; i < rows; ++i) {
                           const double* y = &saved[std::size_t(i) * std::size_t(cols)];
                           const double* gy = &node.grad[std::size_t(i) * std::size_t(cols)];
                           double mean_gy = 0.0, mean_gyy = 0.0;
                           for (int j = 0; j < cols; ++j) {
                               mean_gy += gy[j];
                               mean_gyy += gy[j] * y[j];
                           }
                           mean_gy /= cols;
                           mean_gyy /= cols;
                           double* gx = &nx.grad[std::size_t(i) * std::size_t(cols)];
                           const double inv = inv_std[std::size_t(i)];
                           for (int j = 0; j < cols; ++j)
                               gx[j] += inv * (gy[j] - mean_gy - y[j] * mean_gyy);
                       }
                   });
}

Tensor gelu(const Tensor& x) {
    return elementwise_unary(
        "gelu", x,
        [](double v) { return 0.5 * v * (1.0 + std::erf(v * 0.7071067811865476)); },
        [](double v) {
            const double phi = std::exp(-0.5 * v * v) * 0.3989422804014327;  // N(0,1) density
            return 0.5 * (1.0 + std::erf(v * 0.7071067811865476)) + v * phi;
        });
}

Tensor sigmoid(const Tensor& x) {
    return elementwise_unary(
        "sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double v) {
            const double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 - s);
        });
}

Tensor tanh(const Tensor& x) {
    return elementwise_unary(
        "tanh", x, [](double v) { return std::tanh(v); },
        [](double v) {
            const double t = std::tanh(v);
            return 1.0 - t * t;
        });
}

Tensor bce_loss(const Tensor& probs, const std::vector<double>& targets) {
    if (std::size_t(probs.numel()) != targets.size())
        throw ShapeError("bce_loss: " + std::to_string(probs.numel()) + " probabilities vs " +
                         std::to_string(targets.size()) + " targets");
    const auto n = targets.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = std::clamp(probs.values()[i], kBceEps, 1.0 - kBceEps);
        total += -(targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p));
    }
    return make_op("bce_loss", {1}, {total / double(n)}, {probs}, [targets, n](detail::Node& node) {
        auto& np = *node.inputs[0];
        if (!np.track) return;
        np.ensure_grad();
        const double g = node.grad[0] / double(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double raw = np.values[i];
            if (raw <= kBceEps || raw >= 1.0 - kBceEps) continue;  // clamp region: flat
            np.grad[i] += g * (raw - targets[i]) / (raw * (1.0 - raw));
        }
    });
}

Tensor mean_all(const Tensor& x) {
    const auto n = double(x.numel());
    double total = 0.0;
    for (double v : x.values()) total += v;
    return make_op("mean", {1}, {total / n}, {x}, [n](detail::Node& node) {
        auto& nx = *node.inputs[0];
        if (!nx.track) return;
        nx.ensure_grad();
        const double g = node.grad[0] / n;
        for (auto& gv : nx.grad) gv += g;
    });
}

Tensor sum_all(const Tensor& x) {
    double total = 0.0;
    for (double v : x.values()) total += v;
    return make_op("sum", {1}, {total}, {x}, [](detail::Node& node) {
        auto& nx = *node.inputs[0];
        if (!nx.track) return;
        nx.ensure_grad();
        for (auto& gv : nx.grad) gv += node.grad[0];
    });
}

Tensor pairwise_inner_products(const Tensor& rows, int field_count, int embed_dim) {
    int n, cols;
    as_matrix("pairwise_inner_products", rows, n, cols);
    if (cols != field_count * embed_dim) shape_fail("pairwise_inner_products", rows.shape());
    const int n_pairs = field_count * (field_count - 1) / 2;
    std::vector<double> out(std::size_t(n) * std::size_t(n_pairs), 0.0);
    for (int r = 0; r < n; ++r) {
        const double* row = &rows.values()[std::size_t(r) * std::size_t(cols)];
        double* orow = &out[std::size_t(r) * std::size_t(n_pairs)];
        int p = 0;
        for (int a = 0; a < field_count; ++a)
            for (int b = a + 1; b < field_count; ++b, ++p) {
                double dot = 0.0;
                for (int j = 0; j < embed_dim; ++j)
                    dot += row[a * embed_dim + j] * row[b * embed_dim + j];
                orow[p] = dot;
            }
    }
    return make_op("pairwise_inner_products", {n, n_pairs}, std::move(out), {rows},
                   [n, cols, field_count, embed_dim, n_pairs](detail::Node& node) {
                       auto& nx = *node.inputs[0];
                       if (!nx.track) return;
                       nx.ensure_grad();
                       for (int r = 0; r < n; ++r) {
                           const double* row = &nx.values[std::size_t(r) * std::size_t(cols)];
                           double* grow = &nx.grad[std::size_t(r) * std::size_t(cols)];
                           const double* gout = &node.grad[std::size_t(r) * std::size_t(n_pairs)];
                           int p = 0;
                           for (int a = 0; a < field_count; ++a)
                               for (int b = a + 1; b < field_count; ++b, ++p) {
                                   const double g = gout[p];
                                   if (g == 0.0) continue;
                                   for (int j = 0; j < embed_dim; ++j) {
                                       grow[a * embed_dim + j] += g * row[b * embed_dim + j];
                                       grow[b * embed_dim + j] += g * row[a * embed_dim + j];
                                   }
                               }
                       }
                   });
}

}  // namespace lift
