#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "r2s/common.hpp"
#include "r2s/nn_ops.hpp"
#include "r2s/tensor.hpp"

namespace r2s {

// Reverse-mode graph node. Graphs are built per forward pass and freed when
// the last Var goes out of scope.
template <typename T>
struct NodeT {
  TensorT<T> value;
  TensorT<T> grad;
  bool requires_grad = false;
  bool is_param = false;
  std::string name;
  std::vector<std::shared_ptr<NodeT>> parents;
  std::function<void(NodeT&)> backward_fn;
  std::uint64_t visit_epoch = 0;

  void ensure_grad() {
    if (grad.size() != value.size()) grad = TensorT<T>(value.shape());
  }
  void zero_grad() {
    if (grad.size() > 0) grad.fill(T(0));
  }
};

template <typename T>
using VarT = std::shared_ptr<NodeT<T>>;

using Node = NodeT<float>;
using Var = VarT<float>;

template <typename T>
VarT<T> make_leaf(TensorT<T> value, bool requires_grad = false, std::string name = {}) {
  auto node = std::make_shared<NodeT<T>>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->name = std::move(name);
  return node;
}

template <typename T>
VarT<T> make_param(TensorT<T> value, std::string name) {
  auto node = make_leaf(std::move(value), true, std::move(name));
  node->is_param = true;
  return node;
}

template <typename T>
VarT<T> make_constant(TensorT<T> value) {
  return make_leaf(std::move(value), false);
}

namespace ad {

template <typename T>
VarT<T> make_op(TensorT<T> value, std::vector<VarT<T>> parents, std::function<void(NodeT<T>&)> backward) {
  auto node = std::make_shared<NodeT<T>>();
  node->value = std::move(value);
  node->parents = std::move(parents);
  for (const auto& p : node->parents) {
    if (p->requires_grad) {
      node->requires_grad = true;
      break;
    }
  }
  if (node->requires_grad) node->backward_fn = std::move(backward);
  return node;
}

template <typename T>
void check_same_shape(const VarT<T>& a, const VarT<T>& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw ShapeError(std::string(op) + ": shape mismatch " + a->value.shape_str() + " vs " + b->value.shape_str());
}

// ---- arithmetic ----

template <typename T>
VarT<T> add(VarT<T> a, VarT<T> b) {
  check_same_shape(a, b, "add");
  TensorT<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return make_op<T>(std::move(out), {a, b}, [](NodeT<T>& self) {
    for (int p = 0; p < 2; ++p) {
      auto& par = self.parents[static_cast<std::size_t>(p)];
      if (!par->requires_grad) continue;
      par->ensure_grad();
      for (std::int64_t i = 0; i < self.grad.size(); ++i) par->grad[i] += self.grad[i];
    }
  });
}

template <typename T>
VarT<T> sub(VarT<T> a, VarT<T> b) {
  check_same_shape(a, b, "sub");
  TensorT<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
  return make_op<T>(std::move(out), {a, b}, [](NodeT<T>& self) {
    auto& a_ = self.parents[0];
    auto& b_ = self.parents[1];
    if (a_->requires_grad) {
      a_->ensure_grad();
      for (std::int64_t i = 0; i < self.grad.size(); ++i) a_->grad[i] += self.grad[i];
    }
    if (b_->requires_grad) {
      b_->ensure_grad();
      for (std::int64_t i = 0; i < self.grad.size(); ++i) b_->grad[i] -= self.grad[i];
    }
  });
}

template <typename T>
VarT<T> mul(VarT<T> a, VarT<T> b) {
  check_same_shape(a, b, "mul");
  TensorT<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return make_op<T>(std::move(out), {a, b}, [](NodeT<T>& self) {
    auto& a_ = self.parents[0];
    auto& b_ = self.parents[1];
    if (a_->requires_grad) {
      a_->ensure_grad();
      for (std::int64_t i = 0; i < self.grad.size(); ++i) a_->grad[i] += self.grad[i] * b_->value[i];
    }
    if (b_->requires_grad) {
      b_->ensure_grad();
      for (std::int64_t i = 0; i < self.grad.size(); ++i) b_->grad[i] += self.grad[i] * a_->value[i];
    }
  });
}

template <typename T>
VarT<T> scale(VarT<T> x, T c) {
  TensorT<T> out(x->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = x->value[i] * c;
  return make_op<T>(std::move(out), {x}, [c](NodeT<T>& self) {
    auto& x_ = self.parents[0];
    x_->ensure_grad();
    for (std::int64_t i = 0; i < self.grad.size(); ++i) x_->grad[i] += self.grad[i] * c;
  });
}

template <typename T>
VarT<T> add_const(VarT<T> x, T c) {
  TensorT<T> out(x->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = x->value[i] + c;
  return make_op<T>(std::move(out), {x}, [](NodeT<T>& self) {
    auto& x_ = self.parents[0];
    x_->ensure_grad();
    for (std::int64_t i = 0; i < self.grad.size(); ++i) x_->grad[i] += self.grad[i];
  });
}

// ---- elementwise nonlinearities ----

template <typename T>
VarT<T> relu(VarT<T> x) {
  TensorT<T> out(x->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = x->value[i] > T(0) ? x->value[i] : T(0);
  return make_op<T>(std::move(out), {x}, [](NodeT<T>& self) {
    auto& x_ = self.parents[0];
    x_->ensure_grad();
    for (std::int64_t i = 0; i < self.grad.size(); ++i)
      if (x_->value[i] > T(0)) x_->grad[i] += self.grad[i];
  });
}

template <typename T>
VarT<T> leaky_relu(VarT<T> x, T slope) {
  TensorT<T> out(x->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = x->value[i] > T(0) ? x->value[i] : slope * x->value[i];
  return make_op<T>(std::move(out), {x}, [slope](NodeT<T>& self) {
    auto& x_ = self.parents[0];
    x_->ensure_grad();
    for (std::int64_t i = 0; i < self.grad.size(); ++i) x_->grad[i] += self.grad[i] * (x_->value[i] > T(0) ? T(1) : slope);
  });
}

template <typename T>
VarT<T> tanh_(VarT<T> x) {
  TensorT<T> out(x->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x->value[i]);
  return make_op<T>(std::move(out), {x}, [](NodeT<T>& self) {
    auto& x_ = self.parents[0];
    x_->ensure_grad();
    for (std::int64_t i = 0; i < self.grad.size(); ++i) {
      const T y = self.value[i];
      x_->grad[i] += self.grad[i] * (T(1) - y * y);
    }
  });
}

template <typename T>
VarT<T> exp_(VarT<T> x) {
  TensorT<T> out(x->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(x->value[i]);
  return make_op<T>(std::move(out), {x}, [](NodeT<T>& self) {
    auto& x_ = self.parents[0];
    x_->ensure_grad();
    for (std::int64_t i = 0; i < self.grad.size(); ++i) x_->grad[i] += self.grad[i] * self.value[i];
  });
}

template <typename T>
VarT<T> abs_(VarT<T> x) {
  TensorT<T> out(x->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::abs(x->value[i]);
  return make_op<T>(std::move(out), {x}, [](NodeT<T>& self) {
    auto& x_ = self.parents[0];
    x_->ensure_grad();
    for (std::int64_t i = 0; i < self.grad.size(); ++i) {
      const T v = x_->value[i];
      if (v > T(0)) x_->grad[i] += self.grad[i];
      else if (v < T(0)) x_->grad[i] -= self.grad[i];
    }
  });
}

template <typename T>
VarT<T> emin(VarT<T> a, VarT<T> b) {
  check_same_shape(a, b, "emin");
  TensorT<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::min(a->value[i], b->value[i]);
  return make_op<T>(std::move(out), {a, b}, [](NodeT<T>& self) {
    auto& a_ = self.parents[0];
    auto& b_ = self.parents[1];
    for (std::int64_t i = 0; i < self.grad.size(); ++i) {
      if (a_->value[i] <= b_->value[i]) {
        if (a_->requires_grad) {
          a_->ensure_grad();
          a_->grad[i] += self.grad[i];
        }
      } else if (b_->requires_grad) {
        b_->ensure_grad();
        b_->grad[i] += self.grad[i];
      }
    }
  });
}

// Clamp with scalar bounds; gradient passes inside [lo, hi].
template <typename T>
VarT<T> clamp(VarT<T> x, T lo, T hi) {
  TensorT<T> out(x->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::min(hi, std::max(lo, x->value[i]));
  return make_op<T>(std::move(out), {x}, [lo, hi](NodeT<T>& self) {
    auto& x_ = self.parents[0];
    x_->ensure_grad();
    for (std::int64_t i = 0; i < self.grad.size(); ++i) {
      const T v = x_->value[i];
      if (v >= lo && v <= hi) x_->grad[i] += self.grad[i];
    }
  });
}

// ---- shape ops ----

template <typename T>
VarT<T> reshape(VarT<T> x, std::vector<int> shape) {
  TensorT<T> out = x->value.reshaped(std::move(shape));
  return make_op<T>(std::move(out), {x}, [](NodeT<T>& self) {
    auto& x_ = self.parents[0];
    x_->ensure_grad();
    for (std::int64_t i = 0; i < self.grad.size(); ++i) x_->grad[i] += self.grad[i];
  });
}

// (F) -> (rows, F), replicated.
template <typename T>
VarT<T> expand_rows(VarT<T> v, int rows) {
  const int f = static_cast<int>(v->value.size());
  TensorT<T> out({rows, f});
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < f; ++j) out[static_cast<std::int64_t>(r) * f + j] = v->value[j];
  return make_op<T>(std::move(out), {v}, [rows, f](NodeT<T>& self) {
    auto& v_ = self.parents[0];
    v_->ensure_grad();
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < f; ++j) v_->grad[j] += self.grad[static_cast<std::int64_t>(r) * f + j];
  });
}

// (N, F) -> (N), summed over the second axis.
template <typename T>
VarT<T> row_sum(VarT<T> x) {
  const int n = x->value.dim(0);
  const int f = x->value.dim(1);
  TensorT<T> out({n});
  for (int r = 0; r < n; ++r) {
    T s = T(0);
    for (int j = 0; j < f; ++j) s += x->value[static_cast<std::int64_t>(r) * f + j];
    out[r] = s;
  }
  return make_op<T>(std::move(out), {x}, [n, f](NodeT<T>& self) {
    auto& x_ = self.parents[0];
    x_->ensure_grad();
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < f; ++j) x_->grad[static_cast<std::int64_t>(r) * f + j] += self.grad[r];
  });
}

template <typename T>
VarT<T> sum_all(VarT<T> x) {
  double s = 0.0;
  for (std::int64_t i = 0; i < x->value.size(); ++i) s += static_cast<double>(x->value[i]);
  TensorT<T> out({1});
  out[0] = static_cast<T>(s);
  return make_op<T>(std::move(out), {x}, [](NodeT<T>& self) {
    auto& x_ = self.parents[0];
    x_->ensure_grad();
    const T g = self.grad[0];
    for (std::int64_t i = 0; i < x_->grad.size(); ++i) x_->grad[i] += g;
  });
}

template <typename T>
VarT<T> mean_all(VarT<T> x) {
  const std::int64_t n = x->value.size();
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) s += static_cast<double>(x->value[i]);
  TensorT<T> out({1});
  out[0] = static_cast<T>(s / static_cast<double>(n));
  return make_op<T>(std::move(out), {x}, [n](NodeT<T>& self) {
    auto& x_ = self.parents[0];
    x_->ensure_grad();
    const T g = self.grad[0] / static_cast<T>(n);
    for (std::int64_t i = 0; i < x_->grad.size(); ++i) x_->grad[i] += g;
  });
}

// ---- structured layers ----

template <typename T>
VarT<T> conv2d(VarT<T> x, VarT<T> w, VarT<T> b, int stride, int pad) {
  const ConvDims d = conv_dims(x->value, w->value, stride, pad);
  TensorT<T> out({d.n, d.c_out, d.oh, d.ow});
  conv2d_forward(x->value, w->value, b->value, d, out);
  return make_op<T>(std::move(out), {x, w, b}, [d](NodeT<T>& self) {
    auto& x_ = self.parents[0];
    auto& w_ = self.parents[1];
    auto& b_ = self.parents[2];
    if (x_->requires_grad) {
      x_->ensure_grad();
      conv2d_backward_input(w_->value, self.grad, d, x_->grad);
    }
    if (w_->requires_grad) {
      w_->ensure_grad();
      b_->ensure_grad();
      conv2d_backward_params(x_->value, self.grad, d, w_->grad, b_->grad);
    }
  });
}

template <typename T>
VarT<T> linear(VarT<T> x, VarT<T> w, VarT<T> b) {
  if (x->value.rank() != 2 || w->value.rank() != 2 || x->value.dim(1) != w->value.dim(1))
    throw ShapeError("linear: input " + x->value.shape_str() + " weight " + w->value.shape_str());
  TensorT<T> out({x->value.dim(0), w->value.dim(0)});
  linear_forward(x->value, w->value, b->value, out);
  return make_op<T>(std::move(out), {x, w, b}, [](NodeT<T>& self) {
    auto& x_ = self.parents[0];
    auto& w_ = self.parents[1];
    auto& b_ = self.parents[2];
    TensorT<T>* dx = nullptr;
    TensorT<T>* dw = nullptr;
    TensorT<T>* db = nullptr;
    if (x_->requires_grad) {
      x_->ensure_grad();
      dx = &x_->grad;
    }
    if (w_->requires_grad) {
      w_->ensure_grad();
      b_->ensure_grad();
      dw = &w_->grad;
      db = &b_->grad;
    }
    linear_backward(x_->value, w_->value, self.grad, dx, dw, db);
  });
}

template <typename T>
VarT<T> upsample2(VarT<T> x) {
  if (x->value.rank() != 4) throw ShapeError("upsample2 expects 4-d input");
  const int n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  TensorT<T> out({n, c, 2 * h, 2 * w});
  const std::int64_t planes = static_cast<std::int64_t>(n) * c;
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    const T* src = x->value.data() + pl * h * w;
    T* dst = out.data() + pl * 4 * h * w;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        const T v = src[static_cast<std::int64_t>(y) * w + xx];
        T* d0 = dst + (static_cast<std::int64_t>(2 * y) * 2 * w + 2 * xx);
        d0[0] = v;
        d0[1] = v;
        d0[2 * w] = v;
        d0[2 * w + 1] = v;
      }
  }
  return make_op<T>(std::move(out), {x}, [n, c, h, w](NodeT<T>& self) {
    auto& x_ = self.parents[0];
    x_->ensure_grad();
    const std::int64_t planes = static_cast<std::int64_t>(n) * c;
    for (std::int64_t pl = 0; pl < planes; ++pl) {
      T* dst = x_->grad.data() + pl * h * w;
      const T* g = self.grad.data() + pl * 4 * h * w;
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          const T* g0 = g + (static_cast<std::int64_t>(2 * y) * 2 * w + 2 * xx);
          dst[static_cast<std::int64_t>(y) * w + xx] += g0[0] + g0[1] + g0[2 * w] + g0[2 * w + 1];
        }
    }
  });
}

}  // namespace ad

// Runs reverse-mode accumulation from a scalar loss. Parameter gradients are
// checked for NaN/Inf afterwards.
template <typename T>
void backward(const VarT<T>& loss) {
  if (loss->value.size() != 1) throw ShapeError("backward expects a scalar loss, got " + loss->value.shape_str());
  static std::uint64_t epoch_counter = 0;
  const std::uint64_t epoch = ++epoch_counter;

  // Topological order by iterative DFS; parent order fixes the ordering.
  std::vector<NodeT<T>*> order;
  std::vector<std::pair<NodeT<T>*, std::size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  loss->visit_epoch = epoch;
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      NodeT<T>* parent = node->parents[idx++].get();
      if (parent->visit_epoch != epoch && parent->requires_grad) {
        parent->visit_epoch = epoch;
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss->ensure_grad();
  loss->grad.fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT<T>* node = *it;
    if (node->backward_fn && node->grad.size() == node->value.size()) node->backward_fn(*node);
  }
  for (NodeT<T>* node : order) {
    if (node->is_param && node->grad.size() > 0 && !all_finite(node->grad))
      throw NumericFaultError("non-finite gradient in parameter '" + node->name + "'");
  }
}

}  // namespace r2s
