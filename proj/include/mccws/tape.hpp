#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "mccws/random.hpp"
#include "mccws/tensor.hpp"

namespace mccws {

class Tape;

// Handle to a value recorded on a Tape. Only meaningful for that tape.
class Var {
 public:
  Var() = default;
  std::size_t id() const { return id_; }
  bool valid() const { return id_ != kInvalid; }

 private:
  friend class Tape;
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  explicit Var(std::size_t id) : id_(id) {}
  std::size_t id_ = kInvalid;
};

// Parameter gradients produced by Tape::backward.
class Gradients {
 public:
  const Tensor* find(const Parameter& p) const;
  // Zeros of the parameter's shape when it did not take part in the loss.
  Tensor get(const Parameter& p) const;
  void accumulate(const Parameter& p, const Tensor& g);
  std::size_t size() const { return grads_.size(); }

 private:
  std::unordered_map<const Parameter*, Tensor> grads_;
};

enum class Reduction { Mean, Sum };

// Records operations in execution order; backward walks the record in
// reverse, which is a reverse topological order because every op only reads
// earlier entries. All ops work on 2-D tensors.
class Tape {
 public:
  // With record_grad == false no backward closures are kept (inference).
  explicit Tape(bool record_grad = true) : record_grad_(record_grad) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf bound to `p`. Repeated calls for the same parameter share one node.
  Var param(const Parameter& p);

  const Tensor& value(Var v) const;
  // Valid after backward().
  const Tensor& grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);     // [m x k] . [k x n]
  Var matmul_nt(Var a, Var b);  // [m x k] . [n x k]^T
  // x . W^T + b for W stored as [out x in] and b as [1 x out].
  Var linear(Var x, Var weight, Var bias);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var add_row(Var x, Var row);  // adds a [1 x n] row to every row of x
  Var scale(Var x, Real factor);
  Var one_minus(Var x);
  Var sum(Var x);

  Var tanh(Var x);
  Var sigmoid(Var x);
  Var gelu(Var x);

  // Row-wise softmax (the last axis). Columns >= valid_cols are masked out
  // and receive probability 0.
  Var softmax(Var x, std::size_t valid_cols = std::numeric_limits<std::size_t>::max());
  Var layer_norm(Var x, Var gain, Var bias, Real eps);
  // Inverted dropout. Identity when !training or p == 0.
  Var dropout(Var x, Real p, bool training, Rng& rng);
  Var embedding(Var table, std::span<const int> ids);
  // -log softmax(logits)[target] over rows with mask[t] != 0, averaged or
  // summed. An empty mask means every row counts.
  Var cross_entropy(Var logits, std::span<const int> targets,
                    std::span<const std::uint8_t> mask = {},
                    Reduction reduction = Reduction::Mean);

  Var slice_rows(Var x, std::size_t begin, std::size_t end);
  Var slice_cols(Var x, std::size_t begin, std::size_t end);
  Var concat_cols(std::span<const Var> parts);

  // Requires a 1x1 loss.
  Gradients backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    const Parameter* param = nullptr;
    bool requires_grad = false;
    std::function<void(std::vector<Node>&, std::size_t)> backward;
  };
  using BackwardFn = std::function<void(std::vector<Node>&, std::size_t)>;

  Var push(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var push(Tensor value, std::span<const Var> inputs, BackwardFn fn);
  const Node& node(Var v) const;

  bool record_grad_;
  bool backward_done_ = false;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

// Plain (tape-free) kernels shared by the tape and by tests.
namespace kernels {
// out += a . b
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& out);
// out += a . b^T
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& out);
// out += a^T . b
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& out);
}  // namespace kernels

}  // namespace mccws
