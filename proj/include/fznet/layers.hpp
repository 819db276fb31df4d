#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fznet/rng.hpp"
#include "fznet/tensor.hpp"

namespace fznet {

// A named trainable array living outside any tape. Each forward pass binds
// parameters onto a fresh tape as requires_grad leaves.
struct Param {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

// Ordered collection of parameters; order is the serialization order.
class ParamStore {
  public:
    Param& add(std::string name, Shape shape, std::vector<double> values);
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    std::vector<Param>& params() { return params_; }
    const std::vector<Param>& params() const { return params_; }
    std::size_t total_values() const;

  private:
    std::vector<Param> params_;
    std::map<std::string, std::size_t> index_;
};

// Tape-bound views of layer parameters.
struct BoundDense {
    Tensor W;  // [out,in]
    Tensor b;  // [out]
};
struct BoundLstm {
    Tensor W_x;  // [4H, d_in]
    Tensor W_h;  // [4H, H]
    Tensor b;    // [4H], gate block order (input, forget, cell-candidate, output)
    int hidden;
};
struct BoundAttention {
    Tensor W;  // [a, d]
    Tensor b;  // [a]
    Tensor v;  // [a]
};

// Binding of a whole ParamStore onto one tape.
class BoundParams {
  public:
    BoundParams(Tape& tape, const ParamStore& store);
    // Bind pre-existing tape leaves (gradient-checking path).
    explicit BoundParams(std::vector<std::pair<std::string, Tensor>> entries);
    Tensor at(const std::string& name) const;
    BoundDense dense(const std::string& prefix) const;
    BoundLstm lstm(const std::string& prefix, int hidden) const;
    BoundAttention attention(const std::string& prefix) const;
    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

  private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::map<std::string, std::size_t> index_;
};

enum class Activation { Relu, Identity };

Tensor dense_forward(Tape& tape, const BoundDense& p, Tensor x, Activation act);

// One LSTM step. Gates: i,f,o sigmoid, candidate g tanh;
// c_t = f*c_prev + i*g; h_t = o*tanh(c_t).
std::pair<Tensor, Tensor> lstm_step(Tape& tape, const BoundLstm& p, Tensor x_t, Tensor h_prev,
                                    Tensor c_prev);

// Bidirectional pass over x [T,d] from zero initial states; output [T,2H]
// with [h_fwd ; h_bwd] per timestep.
Tensor blstm_forward(Tape& tape, const BoundLstm& fwd, const BoundLstm& bwd, Tensor x);

Tensor stacked_blstm_forward(Tape& tape, const std::vector<std::pair<BoundLstm, BoundLstm>>& layers,
                             Tensor x);

// Additive attention: e_t = v' tanh(W h_t + b), weights = softmax(e),
// context = sum_t weights_t h_t.
struct AttentionOut {
    Tensor context;  // [d]
    Tensor weights;  // [T]
};
AttentionOut attention_forward(Tape& tape, const BoundAttention& p, Tensor H);

// Glorot-uniform initializers. Biases zero except the LSTM forget-gate slice,
// which is 1.
void init_dense(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng);
void init_lstm(ParamStore& store, const std::string& prefix, int d_in, int hidden, Rng& rng);
void init_attention(ParamStore& store, const std::string& prefix, int d, int attn_size, Rng& rng);

double glorot_bound(int fan_in, int fan_out);

}  // namespace fznet
