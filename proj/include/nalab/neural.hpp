#pragma once

// Small differentiable building blocks with hand-written reverse-mode
// gradients: affine layers, rectifier MLPs, an LSTM cell with a scalar head,
// Adam, a central-difference gradient checker and a text checkpoint format.
//
// Batches are row-major: one sample per row.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nalab/core.hpp"

namespace nalab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ParamTensor {
  ParamTensor() = default;
  ParamTensor(std::string name, Eigen::Index rows, Eigen::Index cols);

  std::string name;
  Matrix value;
  Matrix grad;
  // Bumped on every in-place update; caches remember it to detect staleness.
  std::uint64_t generation = 0;

  Eigen::Index size() const { return value.size(); }
};

using ParamRefs = std::vector<ParamTensor*>;
using ConstParamRefs = std::vector<const ParamTensor*>;

void zero_grad(const ParamRefs& params);
std::size_t parameter_count(const ConstParamRefs& params);
// FNV-1a over names, shapes and raw value bytes.
std::uint64_t checksum(const ConstParamRefs& params);
// Shape-checked value copy; gradients are left untouched.
void copy_values(const ConstParamRefs& from, const ParamRefs& to);
std::uint64_t generation_sum(const ConstParamRefs& params);

// Uniform double in [0, 1) built from raw generator output.
double uniform01(Rng& rng);
void init_uniform(ParamTensor& tensor, double bound, Rng& rng);

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng);

  int in() const { return static_cast<int>(weight.value.cols()); }
  int out() const { return static_cast<int>(weight.value.rows()); }

  Matrix forward(const Matrix& x) const;
  // Accumulates dW = dy^T x and db = sum(dy); returns dx.
  Matrix backward(const Matrix& x, const Matrix& dy);

  void collect(ParamRefs& out);
  void collect(ConstParamRefs& out) const;

  ParamTensor weight;  // out x in
  ParamTensor bias;    // out x 1
};

struct MlpCache {
  std::vector<Matrix> inputs;  // input of each layer
  std::vector<Matrix> pre;     // pre-activation output of each layer
  std::uint64_t generation = 0;
  bool valid = false;
};

// Affine layers with a rectifier between consecutive layers (none at the end).
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, const std::vector<int>& sizes, Rng& rng);

  int input_size() const { return layers_.front().in(); }
  int output_size() const { return layers_.back().out(); }

  Matrix forward(const Matrix& x, MlpCache* cache = nullptr) const;
  Vector forward(const Vector& x) const;
  // Returns the gradient w.r.t. the input batch; parameter grads accumulate.
  Matrix backward(const MlpCache& cache, const Matrix& upstream);

  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }

  ParamRefs params();
  ConstParamRefs params() const;

 private:
  std::vector<Linear> layers_;
};

struct RecurrentState {
  Vector hidden;
  Vector cell;

  static RecurrentState zeros(int hidden_size);
};

struct LstmStepCache {
  Vector input, h_prev, c_prev;
  Vector i, f, g, o, c, tanh_c, h;
  std::uint64_t generation = 0;
};

// Gated recurrent cell (input, forget, candidate, output gates) with a linear
// scalar read-out of the new hidden state.
class LstmCell {
 public:
  struct StepResult {
    double output = 0.0;
    RecurrentState next;
    LstmStepCache cache;
  };

  LstmCell() = default;
  LstmCell(const std::string& name, int input_size, int hidden_size, Rng& rng);

  int input_size() const { return static_cast<int>(w_input.value.cols()); }
  int hidden_size() const { return static_cast<int>(w_hidden.value.cols()); }

  StepResult step(const Vector& input, const RecurrentState& state) const;

  // Backpropagates one step given d(loss)/d(output) and the gradient flowing
  // into the next state. Returns d/d(input) and d/d(previous state).
  std::pair<Vector, RecurrentState> backward_step(const LstmStepCache& cache, double d_output,
                                                  const RecurrentState& d_next);

  ParamRefs params();
  ConstParamRefs params() const;

  ParamTensor w_input;   // 4H x in
  ParamTensor w_hidden;  // 4H x H
  ParamTensor bias;      // 4H x 1
  ParamTensor head_w;    // 1 x H
  ParamTensor head_b;    // 1 x 1
};

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  std::uint64_t step = 0;
  AdamConfig config;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig config, const ConstParamRefs& params);

  // Bias-corrected adaptive-moment step. Throws TrainingFault naming the first
  // parameter with a non-finite gradient. Gradients are zeroed afterwards.
  void update(const ParamRefs& params);

  OptimizerState& state() { return state_; }
  const OptimizerState& state() const { return state_; }

 private:
  OptimizerState state_;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = 0;
  std::size_t checked = 0;
  bool passed = false;
};

// `loss` evaluates the model; when its argument is true it must also run the
// backward pass (accumulating into the grad fields). Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, denominator_floor).
GradCheckReport grad_check(const std::function<double(bool)>& loss, const ParamRefs& params,
                           double tolerance, double perturbation = 1e-5,
                           double denominator_floor = 1e-6);

// Text checkpoint: header, then each tensor as "tensor <name> <rows> <cols>"
// followed by its values as hexadecimal floats (bit-exact), then optional
// optimizer state. Tensor order is the order of `params`.
void save_checkpoint(std::ostream& out, const ConstParamRefs& params,
                     const OptimizerState* optimizer);
// Names and shapes must match `params`; throws StructuralError otherwise.
void load_checkpoint(std::istream& in, const ParamRefs& params, OptimizerState* optimizer);

}  // namespace nalab
