#ifndef ZSNMT_GRAPH_HPP
#define ZSNMT_GRAPH_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_map>
#include <utility>
#include <vector>

#include "zsnmt/kernels.hpp"
#include "zsnmt/rng.hpp"
#include "zsnmt/tensor.hpp"

namespace zsnmt {

// Reverse-mode tape. Operations append nodes and record closures that add
// into parent gradients; backward() replays the tape in reverse creation
// order. Leaf nodes alias external parameter tensors and accumulate their
// gradients in place, where the optimizer picks them up.
//
// alloc() may grow the node vector, so ops read dimensions first, allocate,
// and only then take data pointers.
template <typename T>
class Graph {
public:
    using Id = int;

    Id leaf(Tensor<T>& param) {
        param.ensure_grad();
        Node n;
        n.ext = &param;
        n.needs_grad = true;
        return push(std::move(n));
    }

    Id input(Tensor<T> value) {
        Node n;
        n.own = std::move(value);
        n.needs_grad = false;
        return push(std::move(n));
    }

    // Read-only view of an external tensor; never receives gradient.
    Id constant(const Tensor<T>& value) {
        Node n;
        n.cext = &value;
        n.needs_grad = false;
        return push(std::move(n));
    }

    const Tensor<T>& val(Id id) const { return nodes_[id].v(); }
    Tensor<T>& grad_of(Id id) { return nodes_[id].g(); }

    // ----------------------------- operations -----------------------------

    // rows of `a` (all dims but last collapsed) times matrix w [K,N]
    Id matmul(Id a, Id w) {
        check(val(w).rank() == 2 && val(a).shape.back() == val(w).dim(0), "matmul shape mismatch");
        const int m = static_cast<int>(val(a).lead());
        const int k = val(w).dim(0), n = val(w).dim(1);
        auto shape = val(a).shape;
        shape.back() = n;
        Id out = alloc(std::move(shape), {a, w});
        kernels::matmul_nn(vals(a), vals(w), vals(out), m, k, n);
        on_backward(out, [=, this] {
            if (needs(a)) kernels::matmul_nt<T, true>(grads(out), vals(w), grads(a), m, n, k);
            if (needs(w)) kernels::matmul_tn<T, true>(vals(a), grads(out), grads(w), m, k, n);
        });
        return out;
    }

    // rows of `a` times w^T where w is [N,K]; used for the tied output projection
    Id matmul_nt(Id a, Id w) {
        check(val(w).rank() == 2 && val(a).shape.back() == val(w).dim(1),
              "matmul_nt shape mismatch");
        const int m = static_cast<int>(val(a).lead());
        const int k = val(w).dim(1), n = val(w).dim(0);
        auto shape = val(a).shape;
        shape.back() = n;
        Id out = alloc(std::move(shape), {a, w});
        kernels::matmul_nt(vals(a), vals(w), vals(out), m, k, n);
        on_backward(out, [=, this] {
            if (needs(a)) kernels::matmul_nn<T, true>(grads(out), vals(w), grads(a), m, n, k);
            if (needs(w)) kernels::matmul_tn<T, true>(grads(out), vals(a), grads(w), m, n, k);
        });
        return out;
    }

    // batched matmul on [..,M,K] x [..,K,N]; leading dims must match
    Id bmm(Id a, Id b) {
        const int m = val(a).dim(val(a).rank() - 2), k = val(a).shape.back();
        const int n = val(b).shape.back();
        const int groups = static_cast<int>(val(a).numel() / (std::int64_t(m) * k));
        check(val(b).numel() == std::int64_t(groups) * k * n, "bmm shape mismatch");
        auto shape = val(a).shape;
        shape.back() = n;
        Id out = alloc(std::move(shape), {a, b});
        kernels::bmm_nn(vals(a), vals(b), vals(out), groups, m, k, n);
        on_backward(out, [=, this] {
            if (needs(a)) kernels::bmm_nt<T, true>(grads(out), vals(b), grads(a), groups, m, n, k);
            if (needs(b)) kernels::bmm_tn<T, true>(vals(a), grads(out), grads(b), groups, m, k, n);
        });
        return out;
    }

    // batched matmul with transposed second factor: [..,M,K] x [..,N,K]^T
    Id bmm_nt(Id a, Id b) {
        const int m = val(a).dim(val(a).rank() - 2), k = val(a).shape.back();
        const int n = val(b).dim(val(b).rank() - 2);
        const int groups = static_cast<int>(val(a).numel() / (std::int64_t(m) * k));
        check(val(b).numel() == std::int64_t(groups) * n * k, "bmm_nt shape mismatch");
        auto shape = val(a).shape;
        shape.back() = n;
        Id out = alloc(std::move(shape), {a, b});
        kernels::bmm_nt(vals(a), vals(b), vals(out), groups, m, k, n);
        on_backward(out, [=, this] {
            if (needs(a)) kernels::bmm_nn<T, true>(grads(out), vals(b), grads(a), groups, m, n, k);
            if (needs(b)) kernels::bmm_tn<T, true>(grads(out), vals(a), grads(b), groups, m, n, k);
        });
        return out;
    }

    Id add(Id a, Id b) {
        check(val(a).numel() == val(b).numel(), "add shape mismatch");
        const std::int64_t n = val(a).numel();
        Id out = alloc(val(a).shape, {a, b});
        kernels::add(vals(a), vals(b), vals(out), n);
        on_backward(out, [=, this] {
            if (needs(a)) kernels::acc(grads(a), grads(out), n);
            if (needs(b)) kernels::acc(grads(b), grads(out), n);
        });
        return out;
    }

    Id add_bias(Id a, Id bias) {
        check(val(bias).rank() == 1 && val(bias).dim(0) == val(a).shape.back(),
              "add_bias shape mismatch");
        const int rows = static_cast<int>(val(a).lead());
        const int cols = val(a).shape.back();
        Id out = alloc(val(a).shape, {a, bias});
        kernels::add_bias(vals(a), vals(bias), vals(out), rows, cols);
        on_backward(out, [=, this] {
            if (needs(a)) kernels::acc(grads(a), grads(out), std::int64_t(rows) * cols);
            if (needs(bias)) kernels::bias_backward(grads(out), grads(bias), rows, cols);
        });
        return out;
    }

    Id scale(Id a, T s) {
        const std::int64_t n = val(a).numel();
        Id out = alloc(val(a).shape, {a});
        kernels::scale(vals(a), s, vals(out), n);
        on_backward(out, [=, this] {
            if (needs(a)) kernels::scale<T, true>(grads(out), s, grads(a), n);
        });
        return out;
    }

    Id relu(Id a) {
        const std::int64_t n = val(a).numel();
        Id out = alloc(val(a).shape, {a});
        kernels::relu(vals(a), vals(out), n);
        on_backward(out, [=, this] {
            if (needs(a)) kernels::relu_backward(vals(a), grads(out), grads(a), n);
        });
        return out;
    }

    Id reshape(Id a, std::vector<int> shape) {
        Tensor<T> probe(shape);
        const std::int64_t n = val(a).numel();
        check(probe.numel() == n, "reshape element count mismatch");
        Id out = alloc(std::move(shape), {a});
        std::copy(vals(a), vals(a) + n, vals(out));
        on_backward(out, [=, this] {
            if (needs(a)) kernels::acc(grads(a), grads(out), n);
        });
        return out;
    }

    // [B,S,H,D] -> [B,H,S,D]
    Id transpose_0213(Id a) {
        check(val(a).rank() == 4, "transpose_0213 needs rank 4");
        const int b = val(a).dim(0), s = val(a).dim(1), h = val(a).dim(2), d = val(a).dim(3);
        Id out = alloc({b, h, s, d}, {a});
        kernels::transpose_0213(vals(a), vals(out), b, s, h, d);
        on_backward(out, [=, this] {
            if (needs(a)) kernels::transpose_0213_backward(grads(out), grads(a), b, s, h, d);
        });
        return out;
    }

    // lookup rows of `table` [V,D]; output shaped `out_shape`, scaled
    Id embed(Id table, std::vector<int> ids, std::vector<int> out_shape, T scale) {
        check(val(table).rank() == 2, "embedding table must be rank 2");
        const int v = val(table).dim(0), d = val(table).dim(1);
        for (int t : ids) check(t >= 0 && t < v, "token id outside embedding table");
        Tensor<T> probe(out_shape);
        check(probe.numel() == static_cast<std::int64_t>(ids.size()) * d, "embed shape mismatch");
        Id out = alloc(std::move(out_shape), {table});
        auto ids_ptr = std::make_shared<std::vector<int>>(std::move(ids));
        const std::int64_t rows = static_cast<std::int64_t>(ids_ptr->size());
        kernels::embed_gather(vals(table), ids_ptr->data(), vals(out), rows, d, scale);
        on_backward(out, [=, this] {
            if (needs(table))
                kernels::embed_scatter(grads(out), ids_ptr->data(), grads(table), rows, d, scale);
        });
        return out;
    }

    // softmax over last axis of scores [B,H,Tq,Tk] restricted by mask [B,Tq,Tk]
    Id attn_softmax(Id scores, Id mask) {
        check(val(scores).rank() == 4, "attn_softmax needs rank-4 scores");
        const int b = val(scores).dim(0), h = val(scores).dim(1);
        const int tq = val(scores).dim(2), tk = val(scores).dim(3);
        check(val(mask).numel() == std::int64_t(b) * tq * tk, "attention mask shape mismatch");
        Id out = alloc(val(scores).shape, {scores, mask});
        kernels::attn_softmax(vals(scores), vals(mask), vals(out), b, h, tq, tk);
        on_backward(out, [=, this] {
            if (needs(scores))
                kernels::softmax_backward(vals(out), grads(out), grads(scores),
                                          std::int64_t(b) * h * tq, tk);
        });
        return out;
    }

    Id layernorm(Id x, Id gain, Id bias, T eps = T(1e-5)) {
        const int cols = val(x).shape.back();
        const std::int64_t rows = val(x).lead();
        check(val(gain).numel() == cols && val(bias).numel() == cols, "layernorm param mismatch");
        Id out = alloc(val(x).shape, {x, gain, bias});
        auto rstd = std::make_shared<std::vector<T>>(rows);
        auto mean = std::make_shared<std::vector<T>>(rows);
        kernels::layernorm(vals(x), vals(gain), vals(bias), vals(out), rstd->data(), mean->data(),
                           rows, cols, eps);
        on_backward(out, [=, this] {
            if (needs(x))
                kernels::layernorm_backward_x(vals(x), vals(gain), grads(out), rstd->data(),
                                              mean->data(), grads(x), rows, cols);
            if (needs(gain) || needs(bias))
                kernels::layernorm_backward_params(vals(x), grads(out), rstd->data(), mean->data(),
                                                   grads(gain), grads(bias), rows, cols);
        });
        return out;
    }

    // Inverted dropout; identity when not training or rate == 0. The mask is
    // drawn serially from `rng` so the stream is consumption-order stable.
    Id dropout(Id a, T rate, Rng& rng, bool train) {
        if (!train || rate <= T(0)) return a;
        const std::int64_t n = val(a).numel();
        auto mask = std::make_shared<std::vector<T>>(n);
        const T inv = T(1) / (T(1) - rate);
        for (std::int64_t i = 0; i < n; ++i)
            (*mask)[i] = (rng.real01() < static_cast<double>(rate)) ? T(0) : inv;
        Id out = alloc(val(a).shape, {a});
        const T* src = vals(a);
        T* dst = vals(out);
        for (std::int64_t i = 0; i < n; ++i) dst[i] = src[i] * (*mask)[i];
        on_backward(out, [=, this] {
            if (!needs(a)) return;
            T* da = grads(a);
            const T* g = grads(out);
            for (std::int64_t i = 0; i < n; ++i) da[i] += g[i] * (*mask)[i];
        });
        return out;
    }

    // label-smoothed mean token cross entropy -> scalar node
    Id cross_entropy(Id logits, std::vector<int> targets, std::vector<T> weights, T smoothing) {
        const int vocab = val(logits).shape.back();
        const std::int64_t rows = val(logits).lead();
        check(static_cast<std::int64_t>(targets.size()) == rows, "cross_entropy target count");
        check(static_cast<std::int64_t>(weights.size()) == rows, "cross_entropy weight count");
        for (int t : targets) check(t >= 0 && t < vocab, "target id outside vocabulary");
        Id out = alloc({1}, {logits});
        auto probs = std::make_shared<std::vector<T>>(rows * vocab);
        auto row_loss = std::make_shared<std::vector<T>>(rows);
        auto tgt = std::make_shared<std::vector<int>>(std::move(targets));
        auto w = std::make_shared<std::vector<T>>(std::move(weights));
        vals(out)[0] = kernels::cross_entropy_forward(vals(logits), tgt->data(), w->data(),
                                                      smoothing, probs->data(), row_loss->data(),
                                                      rows, vocab);
        on_backward(out, [=, this] {
            if (needs(logits))
                kernels::cross_entropy_backward(probs->data(), tgt->data(), w->data(), smoothing,
                                                grads(out)[0], grads(logits), rows, vocab);
        });
        return out;
    }

    // ------------------------------ backward ------------------------------

    void backward(Id loss) {
        check(loss >= 0 && loss < static_cast<Id>(nodes_.size()), "backward on detached graph");
        check(val(loss).numel() == 1, "backward needs a scalar loss");
        for (auto& n : nodes_)
            if (n.needs_grad) n.g().ensure_grad();
        grad_of(loss).grad[0] = T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
            if (it->backward_fn && it->needs_grad) it->backward_fn();
    }

    // Drop all nodes but keep their buffers for the next step. Reused value
    // buffers carry stale contents; every op fully overwrites its output.
    void reset() {
        for (auto& n : nodes_) {
            recycle(n.own.data);
            recycle(n.own.grad);
        }
        nodes_.clear();
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> own;
        Tensor<T>* ext = nullptr;
        const Tensor<T>* cext = nullptr;
        bool needs_grad = false;
        std::function<void()> backward_fn;

        const Tensor<T>& v() const { return cext ? *cext : (ext ? *ext : own); }
        Tensor<T>& g() {
            if (cext) throw InternalError("constant node has no gradient storage");
            return ext ? *ext : own;
        }
    };

    Id push(Node n) {
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size() - 1);
    }

    Id alloc(std::vector<int> shape, std::initializer_list<Id> parents) {
        Node n;
        n.own.shape = std::move(shape);
        const std::int64_t count = n.own.numel();
        n.own.data = take(count, false);
        for (Id p : parents) n.needs_grad |= nodes_[p].needs_grad;
        if (n.needs_grad) n.own.grad = take(count, true);
        return push(std::move(n));
    }

    std::vector<T> take(std::int64_t count, bool zeroed) {
        auto& bucket = pool_[count];
        if (bucket.empty()) return std::vector<T>(count, T(0));
        std::vector<T> out = std::move(bucket.back());
        bucket.pop_back();
        if (zeroed) std::fill(out.begin(), out.end(), T(0));
        return out;
    }

    void recycle(std::vector<T>& buf) {
        if (buf.empty()) return;
        pool_[static_cast<std::int64_t>(buf.size())].push_back(std::move(buf));
        buf.clear();
    }

    void on_backward(Id id, std::function<void()> fn) {
        if (nodes_[id].needs_grad) nodes_[id].backward_fn = std::move(fn);
    }

    bool needs(Id id) const { return nodes_[id].needs_grad; }
    // data pointers are stable across node-vector growth (heap-backed), but
    // Tensor references are not; always address through ids
    T* vals(Id id) { return const_cast<T*>(nodes_[id].v().data.data()); }
    T* grads(Id id) {
        nodes_[id].g().ensure_grad();
        return nodes_[id].g().grad.data();
    }

    static void check(bool ok, const char* msg) {
        if (!ok) throw InternalError(msg);
    }

    std::vector<Node> nodes_;
    std::unordered_map<std::int64_t, std::vector<std::vector<T>>> pool_;
};

}  // namespace zsnmt

#endif
