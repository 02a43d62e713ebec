#pragma once

// Reverse-mode differentiation over n-d arrays: every op records a node with
// a backprop closure; Tensor::backward() walks the tape in reverse
// topological order. Templated on the scalar type; float is the training
// substrate, double backs the finite-difference gradient checks.

#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "microevo/kernels.hpp"

namespace microevo::nn {

template <typename T>
struct Node {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad;  // allocated on first use
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backprop;

    size_t numel() const { return data.size(); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
    }
};

inline size_t shape_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
}

template <typename T>
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        auto n = std::make_shared<Node<T>>();
        n->shape = std::move(shape);
        n->data.assign(shape_numel(n->shape), T(0));
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }
    static Tensor from(std::vector<int> shape, std::vector<T> data,
                       bool requires_grad = false) {
        if (data.size() != shape_numel(shape))
            throw std::invalid_argument("Tensor::from: data size does not match shape");
        auto n = std::make_shared<Node<T>>();
        n->shape = std::move(shape);
        n->data = std::move(data);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    std::vector<T>& data() { return node_->data; }
    const std::vector<T>& data() const { return node_->data; }
    std::vector<T>& grad() { node_->ensure_grad(); return node_->grad; }
    size_t numel() const { return node_->numel(); }
    bool requires_grad() const { return node_->requires_grad; }
    std::shared_ptr<Node<T>> node() const { return node_; }

    T item() const {
        if (node_->data.size() != 1)
            throw std::invalid_argument("Tensor::item: not a scalar");
        return node_->data[0];
    }

    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }

    // Reverse pass from this scalar; accumulates into .grad of every
    // requires_grad node reachable through the tape.
    void backward() const {
        if (node_->data.size() != 1)
            throw std::invalid_argument("backward: root must be scalar");
        std::vector<Node<T>*> order;
        std::unordered_set<Node<T>*> seen;
        std::vector<std::pair<Node<T>*, size_t>> stack{{node_.get(), 0}};
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, idx] = stack.back();
            if (idx < n->parents.size()) {
                Node<T>* p = n->parents[idx++].get();
                if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        node_->ensure_grad();
        node_->grad[0] += T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it)
            if ((*it)->backprop) (*it)->backprop(**it);
    }

  private:
    std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
std::shared_ptr<Node<T>> make_result(std::vector<int> shape,
                                     std::vector<std::shared_ptr<Node<T>>> parents) {
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->data.assign(shape_numel(n->shape), T(0));
    for (const auto& p : parents)
        if (p->requires_grad) n->requires_grad = true;
    n->parents = std::move(parents);
    return n;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace detail

// --- elementwise -----------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "add");
    auto n = detail::make_result<T>(a.shape(), {a.node(), b.node()});
    const size_t m = n->numel();
    for (size_t i = 0; i < m; ++i) n->data[i] = a.data()[i] + b.data()[i];
    if (n->requires_grad)
        n->backprop = [](Node<T>& self) {
            for (int k = 0; k < 2; ++k) {
                auto& p = self.parents[k];
                if (!p->requires_grad) continue;
                p->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
            }
        };
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "sub");
    auto n = detail::make_result<T>(a.shape(), {a.node(), b.node()});
    const size_t m = n->numel();
    for (size_t i = 0; i < m; ++i) n->data[i] = a.data()[i] - b.data()[i];
    if (n->requires_grad)
        n->backprop = [](Node<T>& self) {
            auto& a = self.parents[0];
            auto& b = self.parents[1];
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) b->grad[i] -= self.grad[i];
            }
        };
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "mul");
    auto n = detail::make_result<T>(a.shape(), {a.node(), b.node()});
    const size_t m = n->numel();
    for (size_t i = 0; i < m; ++i) n->data[i] = a.data()[i] * b.data()[i];
    if (n->requires_grad)
        n->backprop = [](Node<T>& self) {
            auto& a = self.parents[0];
            auto& b = self.parents[1];
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i)
                    a->grad[i] += self.grad[i] * b->data[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i)
                    b->grad[i] += self.grad[i] * a->data[i];
            }
        };
    return Tensor<T>(n);
}

// alpha*x + beta, elementwise.
template <typename T>
Tensor<T> affine(const Tensor<T>& x, T alpha, T beta) {
    auto n = detail::make_result<T>(x.shape(), {x.node()});
    const size_t m = n->numel();
    for (size_t i = 0; i < m; ++i) n->data[i] = alpha * x.data()[i] + beta;
    if (n->requires_grad)
        n->backprop = [alpha](Node<T>& self) {
            auto& p = self.parents[0];
            p->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += alpha * self.grad[i];
        };
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T alpha) { return affine(x, alpha, T(0)); }
template <typename T>
Tensor<T> one_minus(const Tensor<T>& x) { return affine(x, T(-1), T(1)); }

// --- per-channel broadcast over (N, C, spatial...) -------------------------

namespace detail {
template <typename T>
void channel_geometry(const Tensor<T>& x, const Tensor<T>& c, size_t& n_batch,
                      size_t& n_ch, size_t& spatial, const char* op) {
    if (x.shape().size() < 2 || c.shape().size() != 1 || c.shape()[0] != x.shape()[1])
        throw std::invalid_argument(std::string(op) + ": expects (N,C,...) and (C)");
    n_batch = static_cast<size_t>(x.shape()[0]);
    n_ch = static_cast<size_t>(x.shape()[1]);
    spatial = x.numel() / (n_batch * n_ch);
}
}  // namespace detail

template <typename T>
Tensor<T> mul_channel(const Tensor<T>& x, const Tensor<T>& c) {
    size_t nb, nc, sp;
    detail::channel_geometry(x, c, nb, nc, sp, "mul_channel");
    auto n = detail::make_result<T>(x.shape(), {x.node(), c.node()});
    for (size_t b = 0; b < nb; ++b)
        for (size_t k = 0; k < nc; ++k) {
            const T cv = c.data()[k];
            const size_t off = (b * nc + k) * sp;
            for (size_t i = 0; i < sp; ++i) n->data[off + i] = cv * x.data()[off + i];
        }
    if (n->requires_grad)
        n->backprop = [nb, nc, sp](Node<T>& self) {
            auto& x = self.parents[0];
            auto& c = self.parents[1];
            if (x->requires_grad) {
                x->ensure_grad();
                for (size_t b = 0; b < nb; ++b)
                    for (size_t k = 0; k < nc; ++k) {
                        const T cv = c->data[k];
                        const size_t off = (b * nc + k) * sp;
                        for (size_t i = 0; i < sp; ++i)
                            x->grad[off + i] += cv * self.grad[off + i];
                    }
            }
            if (c->requires_grad) {
                c->ensure_grad();
                for (size_t b = 0; b < nb; ++b)
                    for (size_t k = 0; k < nc; ++k) {
                        const size_t off = (b * nc + k) * sp;
                        T acc = T(0);
                        for (size_t i = 0; i < sp; ++i)
                            acc += x->data[off + i] * self.grad[off + i];
                        c->grad[k] += acc;
                    }
            }
        };
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> add_channel(const Tensor<T>& x, const Tensor<T>& c) {
    size_t nb, nc, sp;
    detail::channel_geometry(x, c, nb, nc, sp, "add_channel");
    auto n = detail::make_result<T>(x.shape(), {x.node(), c.node()});
    for (size_t b = 0; b < nb; ++b)
        for (size_t k = 0; k < nc; ++k) {
            const T cv = c.data()[k];
            const size_t off = (b * nc + k) * sp;
            for (size_t i = 0; i < sp; ++i) n->data[off + i] = x.data()[off + i] + cv;
        }
    if (n->requires_grad)
        n->backprop = [nb, nc, sp](Node<T>& self) {
            auto& x = self.parents[0];
            auto& c = self.parents[1];
            if (x->requires_grad) {
                x->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) x->grad[i] += self.grad[i];
            }
            if (c->requires_grad) {
                c->ensure_grad();
                for (size_t b = 0; b < nb; ++b)
                    for (size_t k = 0; k < nc; ++k) {
                        const size_t off = (b * nc + k) * sp;
                        T acc = T(0);
                        for (size_t i = 0; i < sp; ++i) acc += self.grad[off + i];
                        c->grad[k] += acc;
                    }
            }
        };
    return Tensor<T>(n);
}

// --- activations ------------------------------------------------------------

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    auto n = detail::make_result<T>(x.shape(), {x.node()});
    const size_t m = n->numel();
    for (size_t i = 0; i < m; ++i) n->data[i] = T(1) / (T(1) + std::exp(-x.data()[i]));
    if (n->requires_grad)
        n->backprop = [](Node<T>& self) {
            auto& p = self.parents[0];
            p->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) {
                const T y = self.data[i];
                p->grad[i] += self.grad[i] * y * (T(1) - y);
            }
        };
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> tanh_act(const Tensor<T>& x) {
    auto n = detail::make_result<T>(x.shape(), {x.node()});
    const size_t m = n->numel();
    for (size_t i = 0; i < m; ++i) n->data[i] = std::tanh(x.data()[i]);
    if (n->requires_grad)
        n->backprop = [](Node<T>& self) {
            auto& p = self.parents[0];
            p->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) {
                const T y = self.data[i];
                p->grad[i] += self.grad[i] * (T(1) - y * y);
            }
        };
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    auto n = detail::make_result<T>(x.shape(), {x.node()});
    const size_t m = n->numel();
    for (size_t i = 0; i < m; ++i) n->data[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
    if (n->requires_grad)
        n->backprop = [](Node<T>& self) {
            auto& p = self.parents[0];
            p->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                if (p->data[i] > T(0)) p->grad[i] += self.grad[i];
        };
    return Tensor<T>(n);
}

// Exact Heaviside forward (fires at u >= threshold); rectangular surrogate of
// the stated width in the backward pass.
template <typename T>
Tensor<T> spike(const Tensor<T>& u, T threshold, T surrogate_width) {
    auto n = detail::make_result<T>(u.shape(), {u.node()});
    const size_t m = n->numel();
    for (size_t i = 0; i < m; ++i)
        n->data[i] = u.data()[i] >= threshold ? T(1) : T(0);
    if (n->requires_grad)
        n->backprop = [threshold, surrogate_width](Node<T>& self) {
            auto& p = self.parents[0];
            p->ensure_grad();
            const T half = surrogate_width / T(2);
            const T g = T(1) / surrogate_width;
            for (size_t i = 0; i < self.grad.size(); ++i)
                if (std::abs(p->data[i] - threshold) <= half)
                    p->grad[i] += self.grad[i] * g;
        };
    return Tensor<T>(n);
}

// --- shape ops ---------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int> new_shape) {
    if (shape_numel(new_shape) != x.numel())
        throw std::invalid_argument("reshape: element count mismatch");
    auto n = detail::make_result<T>(std::move(new_shape), {x.node()});
    n->data = x.data();
    if (n->requires_grad)
        n->backprop = [](Node<T>& self) {
            auto& p = self.parents[0];
            p->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        };
    return Tensor<T>(n);
}

// Contiguous slice along one dimension.
template <typename T>
Tensor<T> narrow(const Tensor<T>& x, int dim, int start, int len) {
    const auto& shp = x.shape();
    if (dim < 0 || dim >= static_cast<int>(shp.size()) || start < 0 ||
        start + len > shp[dim])
        throw std::invalid_argument("narrow: bad dim/range");
    size_t outer = 1, inner = 1;
    for (int d = 0; d < dim; ++d) outer *= static_cast<size_t>(shp[d]);
    for (size_t d = dim + 1; d < shp.size(); ++d) inner *= static_cast<size_t>(shp[d]);
    std::vector<int> out_shape = shp;
    out_shape[dim] = len;

    auto n = detail::make_result<T>(out_shape, {x.node()});
    const size_t full = static_cast<size_t>(shp[dim]) * inner;
    const size_t part = static_cast<size_t>(len) * inner;
    for (size_t o = 0; o < outer; ++o)
        std::copy_n(x.data().begin() + o * full + start * inner, part,
                    n->data.begin() + o * part);
    if (n->requires_grad)
        n->backprop = [outer, inner, full, part, start](Node<T>& self) {
            auto& p = self.parents[0];
            p->ensure_grad();
            for (size_t o = 0; o < outer; ++o)
                for (size_t i = 0; i < part; ++i)
                    p->grad[o * full + start * inner + i] += self.grad[o * part + i];
        };
    return Tensor<T>(n);
}

// Concatenate along one dimension; all other dims must match.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int dim) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const auto& ref = parts[0].shape();
    if (dim < 0 || dim >= static_cast<int>(ref.size()))
        throw std::invalid_argument("concat: bad dim");
    std::vector<int> out_shape = ref;
    out_shape[dim] = 0;
    for (const auto& p : parts) {
        if (p.shape().size() != ref.size())
            throw std::invalid_argument("concat: rank mismatch");
        for (size_t d = 0; d < ref.size(); ++d)
            if (static_cast<int>(d) != dim && p.shape()[d] != ref[d])
                throw std::invalid_argument("concat: shape mismatch");
        out_shape[dim] += p.shape()[dim];
    }
    size_t outer = 1, inner = 1;
    for (int d = 0; d < dim; ++d) outer *= static_cast<size_t>(ref[d]);
    for (size_t d = dim + 1; d < ref.size(); ++d) inner *= static_cast<size_t>(ref[d]);

    std::vector<std::shared_ptr<Node<T>>> parents;
    std::vector<size_t> widths;  // per-part slab size along dim*inner
    for (const auto& p : parts) {
        parents.push_back(p.node());
        widths.push_back(static_cast<size_t>(p.shape()[dim]) * inner);
    }
    auto n = detail::make_result<T>(out_shape, std::move(parents));
    const size_t total = static_cast<size_t>(out_shape[dim]) * inner;
    for (size_t o = 0; o < outer; ++o) {
        size_t off = 0;
        for (size_t k = 0; k < parts.size(); ++k) {
            std::copy_n(parts[k].data().begin() + o * widths[k], widths[k],
                        n->data.begin() + o * total + off);
            off += widths[k];
        }
    }
    if (n->requires_grad)
        n->backprop = [outer, total, widths](Node<T>& self) {
            for (size_t o = 0; o < outer; ++o) {
                size_t off = 0;
                for (size_t k = 0; k < self.parents.size(); ++k) {
                    auto& p = self.parents[k];
                    if (p->requires_grad) {
                        p->ensure_grad();
                        for (size_t i = 0; i < widths[k]; ++i)
                            p->grad[o * widths[k] + i] +=
                                self.grad[o * total + off + i];
                    }
                    off += widths[k];
                }
            }
        };
    return Tensor<T>(n);
}

// --- reductions / loss -------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    auto n = detail::make_result<T>({1}, {x.node()});
    T acc = T(0);
    for (T v : x.data()) acc += v;
    n->data[0] = acc;
    if (n->requires_grad)
        n->backprop = [](Node<T>& self) {
            auto& p = self.parents[0];
            p->ensure_grad();
            for (size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += self.grad[0];
        };
    return Tensor<T>(n);
}

// Mean of squared differences over all elements; gradient 2*(pred-target)/N.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    detail::check_same_shape(pred, target, "mse_loss");
    auto n = detail::make_result<T>({1}, {pred.node(), target.node()});
    const size_t m = pred.numel();
    T acc = T(0);
    for (size_t i = 0; i < m; ++i) {
        const T d = pred.data()[i] - target.data()[i];
        acc += d * d;
    }
    n->data[0] = acc / static_cast<T>(m);
    if (n->requires_grad)
        n->backprop = [m](Node<T>& self) {
            auto& p = self.parents[0];
            auto& t = self.parents[1];
            const T s = self.grad[0] * T(2) / static_cast<T>(m);
            if (p->requires_grad) {
                p->ensure_grad();
                for (size_t i = 0; i < m; ++i)
                    p->grad[i] += s * (p->data[i] - t->data[i]);
            }
            if (t->requires_grad) {
                t->ensure_grad();
                for (size_t i = 0; i < m; ++i)
                    t->grad[i] -= s * (p->data[i] - t->data[i]);
            }
        };
    return Tensor<T>(n);
}

// --- dense -------------------------------------------------------------------

// x: (B, in), w: (out, in), bias: (out) optional -> (B, out)
template <typename T>
Tensor<T> matmul_dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias) {
    if (x.shape().size() != 2 || w.shape().size() != 2 || x.shape()[1] != w.shape()[1])
        throw std::invalid_argument("matmul_dense: shape mismatch");
    const int B = x.shape()[0], in = x.shape()[1], out = w.shape()[0];
    if (bias && (bias->shape().size() != 1 || bias->shape()[0] != out))
        throw std::invalid_argument("matmul_dense: bias shape mismatch");

    std::vector<std::shared_ptr<Node<T>>> parents{x.node(), w.node()};
    if (bias) parents.push_back(bias->node());
    auto n = detail::make_result<T>({B, out}, std::move(parents));
    for (int b = 0; b < B; ++b) {
        const T* xr = x.data().data() + static_cast<size_t>(b) * in;
        T* yr = n->data.data() + static_cast<size_t>(b) * out;
        for (int o = 0; o < out; ++o) {
            const T* wr = w.data().data() + static_cast<size_t>(o) * in;
            T acc = bias ? bias->data()[o] : T(0);
            for (int i = 0; i < in; ++i) acc += wr[i] * xr[i];
            yr[o] = acc;
        }
    }
    const bool has_bias = bias != nullptr;
    if (n->requires_grad)
        n->backprop = [B, in, out, has_bias](Node<T>& self) {
            auto& x = self.parents[0];
            auto& w = self.parents[1];
            if (x->requires_grad) {
                x->ensure_grad();
                for (int b = 0; b < B; ++b) {
                    const T* gy = self.grad.data() + static_cast<size_t>(b) * out;
                    T* gx = x->grad.data() + static_cast<size_t>(b) * in;
                    for (int o = 0; o < out; ++o) {
                        const T g = gy[o];
                        const T* wr = w->data.data() + static_cast<size_t>(o) * in;
                        for (int i = 0; i < in; ++i) gx[i] += g * wr[i];
                    }
                }
            }
            if (w->requires_grad) {
                w->ensure_grad();
                for (int b = 0; b < B; ++b) {
                    const T* gy = self.grad.data() + static_cast<size_t>(b) * out;
                    const T* xr = x->data.data() + static_cast<size_t>(b) * in;
                    for (int o = 0; o < out; ++o) {
                        const T g = gy[o];
                        T* gw = w->grad.data() + static_cast<size_t>(o) * in;
                        for (int i = 0; i < in; ++i) gw[i] += g * xr[i];
                    }
                }
            }
            if (has_bias && self.parents[2]->requires_grad) {
                auto& bias = self.parents[2];
                bias->ensure_grad();
                for (int b = 0; b < B; ++b)
                    for (int o = 0; o < out; ++o)
                        bias->grad[o] += self.grad[static_cast<size_t>(b) * out + o];
            }
        };
    return Tensor<T>(n);
}

// --- conv2d / deconv2d --------------------------------------------------------

// x: (N, C_in, H, W), w: (C_out, C_in, KH, KW), bias optional (C_out).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 int stride, int pad, int dilation = 1) {
    if (x.shape().size() != 4 || w.shape().size() != 4 || x.shape()[1] != w.shape()[1])
        throw std::invalid_argument("conv2d: shape mismatch");
    if (dilation < 1) throw std::invalid_argument("conv2d: dilation must be >= 1");
    const int N = x.shape()[0], C_in = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const int C_out = w.shape()[0], KH = w.shape()[2], KW = w.shape()[3];
    const int EKH = (KH - 1) * dilation + 1, EKW = (KW - 1) * dilation + 1;
    if (H + 2 * pad < EKH || W + 2 * pad < EKW)
        throw std::invalid_argument("conv2d: spatial dims smaller than kernel");
    const int OH = (H + 2 * pad - EKH) / stride + 1;
    const int OW = (W + 2 * pad - EKW) / stride + 1;

    std::vector<std::shared_ptr<Node<T>>> parents{x.node(), w.node()};
    if (bias) parents.push_back(bias->node());
    auto n = detail::make_result<T>({N, C_out, OH, OW}, std::move(parents));
    kernels::conv2d_forward(x.data().data(), w.data().data(),
                            bias ? bias->data().data() : nullptr, n->data.data(),
                            N, C_in, H, W, C_out, KH, KW, stride, pad, dilation);
    const bool has_bias = bias != nullptr;
    if (n->requires_grad)
        n->backprop = [=](Node<T>& self) {
            auto& x = self.parents[0];
            auto& w = self.parents[1];
            if (x->requires_grad) {
                x->ensure_grad();
                kernels::conv2d_backward_input(self.grad.data(), w->data.data(),
                                               x->grad.data(), N, C_in, H, W,
                                               C_out, KH, KW, stride, pad,
                                               dilation);
            }
            const bool want_w = w->requires_grad;
            const bool want_b = has_bias && self.parents[2]->requires_grad;
            if (want_w || want_b) {
                w->ensure_grad();
                if (has_bias) self.parents[2]->ensure_grad();
                kernels::conv2d_backward_weights(
                    x->data.data(), self.grad.data(), w->grad.data(),
                    want_b ? self.parents[2]->grad.data() : nullptr, N, C_in, H,
                    W, C_out, KH, KW, stride, pad, dilation);
            }
        };
    return Tensor<T>(n);
}

// Transposed conv. x: (N, C_in, H, W), w: (C_in, C_out, KH, KW).
// OH = (H-1)*stride - 2*pad + (KH-1)*dilation + 1 + output_pad (output_pad < stride).
template <typename T>
Tensor<T> deconv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                   int stride, int pad, int output_pad, int dilation = 1) {
    if (x.shape().size() != 4 || w.shape().size() != 4 || x.shape()[1] != w.shape()[0])
        throw std::invalid_argument("deconv2d: shape mismatch");
    if (output_pad < 0 || output_pad >= stride)
        throw std::invalid_argument("deconv2d: need 0 <= output_pad < stride");
    if (dilation < 1) throw std::invalid_argument("deconv2d: dilation must be >= 1");
    const int N = x.shape()[0], C_in = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const int C_out = w.shape()[1], KH = w.shape()[2], KW = w.shape()[3];
    const int OH = (H - 1) * stride - 2 * pad + (KH - 1) * dilation + 1 + output_pad;
    const int OW = (W - 1) * stride - 2 * pad + (KW - 1) * dilation + 1 + output_pad;
    if (OH < 1 || OW < 1) throw std::invalid_argument("deconv2d: empty output");
    if (bias && (bias->shape().size() != 1 || bias->shape()[0] != C_out))
        throw std::invalid_argument("deconv2d: bias shape mismatch");

    std::vector<std::shared_ptr<Node<T>>> parents{x.node(), w.node()};
    if (bias) parents.push_back(bias->node());
    auto n = detail::make_result<T>({N, C_out, OH, OW}, std::move(parents));
    // Forward is the adjoint of conv2d mapping (N,C_out,OH,OW)->(N,C_in,H,W).
    kernels::conv2d_backward_input(x.data().data(), w.data().data(), n->data.data(),
                                   N, C_out, OH, OW, C_in, KH, KW, stride, pad,
                                   dilation);
    if (bias) {
        const size_t plane = static_cast<size_t>(OH) * OW;
        for (int b = 0; b < N; ++b)
            for (int c = 0; c < C_out; ++c) {
                T* p = n->data.data() + (static_cast<size_t>(b) * C_out + c) * plane;
                const T bv = bias->data()[c];
                for (size_t i = 0; i < plane; ++i) p[i] += bv;
            }
    }
    const bool has_bias = bias != nullptr;
    if (n->requires_grad)
        n->backprop = [=](Node<T>& self) {
            auto& x = self.parents[0];
            auto& w = self.parents[1];
            if (x->requires_grad) {
                x->ensure_grad();
                // conv2d_forward overwrites its output; stage and accumulate
                // so grads from shared-weight reuse elsewhere survive.
                std::vector<T> tmp(x->grad.size());
                kernels::conv2d_forward(self.grad.data(), w->data.data(),
                                        static_cast<const T*>(nullptr),
                                        tmp.data(), N, C_out, OH, OW, C_in, KH,
                                        KW, stride, pad, dilation);
                for (size_t i = 0; i < tmp.size(); ++i) x->grad[i] += tmp[i];
            }
            if (w->requires_grad) {
                w->ensure_grad();
                kernels::conv2d_backward_weights(
                    self.grad.data(), x->data.data(), w->grad.data(),
                    static_cast<T*>(nullptr), N, C_out, OH, OW, C_in, KH, KW,
                    stride, pad, dilation);
            }
            if (has_bias && self.parents[2]->requires_grad) {
                auto& bias = self.parents[2];
                bias->ensure_grad();
                const size_t plane = static_cast<size_t>(OH) * OW;
                for (int b = 0; b < N; ++b)
                    for (int c = 0; c < C_out; ++c) {
                        const T* g = self.grad.data() +
                                     (static_cast<size_t>(b) * C_out + c) * plane;
                        T acc = T(0);
                        for (size_t i = 0; i < plane; ++i) acc += g[i];
                        bias->grad[c] += acc;
                    }
            }
        };
    return Tensor<T>(n);
}

}  // namespace microevo::nn

#include "microevo/tensor3d.hpp"
