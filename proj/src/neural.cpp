#include "nalab/neural.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <utility>

#include "nalab/errors.hpp"

namespace nalab {

ParamTensor::ParamTensor(std::string n, Eigen::Index rows, Eigen::Index cols)
    : name(std::move(n)), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

void zero_grad(const ParamRefs& params) {
  for (auto* p : params) p->grad.setZero();
}

std::size_t parameter_count(const ConstParamRefs& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += static_cast<std::size_t>(p->size());
  return n;
}

std::uint64_t checksum(const ConstParamRefs& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto* p : params) {
    mix(p->name.data(), p->name.size());
    const Eigen::Index shape[2] = {p->value.rows(), p->value.cols()};
    mix(shape, sizeof(shape));
    mix(p->value.data(), static_cast<std::size_t>(p->value.size()) * sizeof(double));
  }
  return h;
}

void copy_values(const ConstParamRefs& from, const ParamRefs& to) {
  if (from.size() != to.size()) throw StructuralError("copy_values: tensor count mismatch");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i]->value.rows() != to[i]->value.rows() ||
        from[i]->value.cols() != to[i]->value.cols()) {
      throw StructuralError("copy_values: shape mismatch for " + to[i]->name);
    }
    to[i]->value = from[i]->value;
    ++to[i]->generation;
  }
}

std::uint64_t generation_sum(const ConstParamRefs& params) {
  std::uint64_t g = 0;
  for (const auto* p : params) g += p->generation;
  return g;
}

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void init_uniform(ParamTensor& tensor, double bound, Rng& rng) {
  for (Eigen::Index i = 0; i < tensor.value.size(); ++i) {
    tensor.value.data()[i] = (2.0 * uniform01(rng) - 1.0) * bound;
  }
  ++tensor.generation;
}

// ---------------------------------------------------------------------------

Linear::Linear(const std::string& name, int in, int out, Rng& rng)
    : weight(name + ".weight", out, in), bias(name + ".bias", out, 1) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  init_uniform(weight, bound, rng);
  init_uniform(bias, bound, rng);
}

Matrix Linear::forward(const Matrix& x) const {
  if (x.cols() != in()) {
    throw StructuralError(weight.name + ": input width " + std::to_string(x.cols()) +
                          " != " + std::to_string(in()));
  }
  Matrix y = x * weight.value.transpose();
  y.rowwise() += bias.value.col(0).transpose();
  return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& dy) {
  weight.grad.noalias() += dy.transpose() * x;
  bias.grad.col(0) += dy.colwise().sum().transpose();
  return dy * weight.value;
}

void Linear::collect(ParamRefs& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

void Linear::collect(ConstParamRefs& out) const {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ---------------------------------------------------------------------------

Mlp::Mlp(const std::string& name, const std::vector<int>& sizes, Rng& rng) {
  if (sizes.size() < 2) throw StructuralError("Mlp needs at least input and output sizes");
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    layers_.emplace_back(name + ".l" + std::to_string(i), sizes[i], sizes[i + 1], rng);
  }
}

Matrix Mlp::forward(const Matrix& x, MlpCache* cache) const {
  if (x.cols() != input_size()) {
    throw StructuralError("mlp: input width " + std::to_string(x.cols()) + " != " +
                          std::to_string(input_size()));
  }
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
    cache->generation = generation_sum(params());
    cache->valid = true;
  }
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Matrix z = layers_[i].forward(h);
    if (cache) {
      cache->inputs.push_back(h);
      cache->pre.push_back(z);
    }
    h = i + 1 < layers_.size() ? Matrix(z.cwiseMax(0.0)) : std::move(z);
  }
  return h;
}

Vector Mlp::forward(const Vector& x) const {
  return forward(Matrix(x.transpose())).row(0).transpose();
}

Matrix Mlp::backward(const MlpCache& cache, const Matrix& upstream) {
  if (!cache.valid || cache.inputs.size() != layers_.size() ||
      cache.generation != generation_sum(std::as_const(*this).params())) {
    throw LifecycleError("mlp: backward with a stale or foreign cache");
  }
  Matrix g = upstream;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    if (k + 1 < layers_.size()) {
      g = g.cwiseProduct((cache.pre[k].array() > 0.0).cast<double>().matrix());
    }
    g = layers_[k].backward(cache.inputs[k], g);
  }
  return g;
}

ParamRefs Mlp::params() {
  ParamRefs out;
  for (auto& l : layers_) l.collect(out);
  return out;
}

ConstParamRefs Mlp::params() const {
  ConstParamRefs out;
  for (const auto& l : layers_) l.collect(out);
  return out;
}

// ---------------------------------------------------------------------------

RecurrentState RecurrentState::zeros(int hidden_size) {
  return {Vector::Zero(hidden_size), Vector::Zero(hidden_size)};
}

namespace {

Vector sigmoid(const Vector& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

}  // namespace

LstmCell::LstmCell(const std::string& name, int input_size, int hidden_size, Rng& rng)
    : w_input(name + ".w_input", 4 * hidden_size, input_size),
      w_hidden(name + ".w_hidden", 4 * hidden_size, hidden_size),
      bias(name + ".bias", 4 * hidden_size, 1),
      head_w(name + ".head_w", 1, hidden_size),
      head_b(name + ".head_b", 1, 1) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_size));
  init_uniform(w_input, bound, rng);
  init_uniform(w_hidden, bound, rng);
  init_uniform(bias, bound, rng);
  init_uniform(head_w, bound, rng);
  init_uniform(head_b, bound, rng);
}

LstmCell::StepResult LstmCell::step(const Vector& input, const RecurrentState& state) const {
  const int H = hidden_size();
  if (input.size() != input_size()) {
    throw StructuralError("lstm: input length " + std::to_string(input.size()) + " != " +
                          std::to_string(input_size()));
  }
  if (state.hidden.size() != H || state.cell.size() != H) {
    throw StructuralError("lstm: recurrent state size mismatch");
  }
  const Vector a = w_input.value * input + w_hidden.value * state.hidden + bias.value.col(0);
  StepResult r;
  auto& c = r.cache;
  c.input = input;
  c.h_prev = state.hidden;
  c.c_prev = state.cell;
  c.i = sigmoid(a.segment(0, H));
  c.f = sigmoid(a.segment(H, H));
  c.g = a.segment(2 * H, H).array().tanh().matrix();
  c.o = sigmoid(a.segment(3 * H, H));
  c.c = c.f.cwiseProduct(state.cell) + c.i.cwiseProduct(c.g);
  c.tanh_c = c.c.array().tanh().matrix();
  c.h = c.o.cwiseProduct(c.tanh_c);
  c.generation = generation_sum(params());
  r.output = head_w.value.row(0).dot(c.h) + head_b.value(0, 0);
  r.next = {c.h, c.c};
  return r;
}

std::pair<Vector, RecurrentState> LstmCell::backward_step(const LstmStepCache& c,
                                                          double d_output,
                                                          const RecurrentState& d_next) {
  if (c.generation != generation_sum(std::as_const(*this).params())) {
    throw LifecycleError("lstm: backward with a stale cache");
  }
  const int H = hidden_size();
  head_w.grad.row(0) += d_output * c.h.transpose();
  head_b.grad(0, 0) += d_output;
  const Vector dh = d_next.hidden + d_output * head_w.value.row(0).transpose();
  const Vector d_o = dh.cwiseProduct(c.tanh_c);
  const Vector dc =
      d_next.cell +
      dh.cwiseProduct(c.o).cwiseProduct((1.0 - c.tanh_c.array().square()).matrix());
  Vector da(4 * H);
  da.segment(0, H) = dc.cwiseProduct(c.g).cwiseProduct((c.i.array() * (1.0 - c.i.array())).matrix());
  da.segment(H, H) =
      dc.cwiseProduct(c.c_prev).cwiseProduct((c.f.array() * (1.0 - c.f.array())).matrix());
  da.segment(2 * H, H) = dc.cwiseProduct(c.i).cwiseProduct((1.0 - c.g.array().square()).matrix());
  da.segment(3 * H, H) = d_o.cwiseProduct((c.o.array() * (1.0 - c.o.array())).matrix());
  w_input.grad.noalias() += da * c.input.transpose();
  w_hidden.grad.noalias() += da * c.h_prev.transpose();
  bias.grad.col(0) += da;
  RecurrentState d_prev{w_hidden.value.transpose() * da, dc.cwiseProduct(c.f)};
  Vector d_input = w_input.value.transpose() * da;
  return {std::move(d_input), std::move(d_prev)};
}

ParamRefs LstmCell::params() { return {&w_input, &w_hidden, &bias, &head_w, &head_b}; }

ConstParamRefs LstmCell::params() const {
  return {&w_input, &w_hidden, &bias, &head_w, &head_b};
}

// ---------------------------------------------------------------------------

Adam::Adam(AdamConfig config, const ConstParamRefs& params) {
  if (!(config.beta1 > 0.0 && config.beta1 < 1.0 && config.beta2 > 0.0 && config.beta2 < 1.0)) {
    throw ConfigError("adam: betas must lie in (0, 1)");
  }
  if (!(config.learning_rate > 0.0) || !(config.epsilon > 0.0)) {
    throw ConfigError("adam: learning rate and epsilon must be positive");
  }
  state_.config = config;
  for (const auto* p : params) {
    state_.first_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    state_.second_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::update(const ParamRefs& params) {
  if (params.size() != state_.first_moment.size()) {
    throw StructuralError("adam: parameter list does not match optimizer state");
  }
  for (const auto* p : params) {
    if (!p->grad.allFinite()) throw TrainingFault("non-finite gradient in parameter " + p->name);
  }
  const auto& cfg = state_.config;
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    Matrix& m = state_.first_moment[k];
    Matrix& v = state_.second_moment[k];
    if (m.rows() != p->grad.rows() || m.cols() != p->grad.cols()) {
      throw StructuralError("adam: moment shape mismatch for " + p->name);
    }
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * p->grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * p->grad.cwiseAbs2();
    p->value.array() -= cfg.learning_rate * (m.array() / c1) /
                        ((v.array() / c2).sqrt() + cfg.epsilon);
    p->grad.setZero();
    ++p->generation;
  }
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(const std::function<double(bool)>& loss, const ParamRefs& params,
                           double tolerance, double perturbation, double denominator_floor) {
  zero_grad(params);
  loss(true);
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const auto* p : params) analytic.push_back(p->grad);
  zero_grad(params);

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double saved = x;
      x = saved + perturbation;
      const double up = loss(false);
      x = saved - perturbation;
      const double down = loss(false);
      x = saved;
      const double numeric = (up - down) / (2.0 * perturbation);
      const double a = analytic[k].data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), denominator_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_relative_error || !std::isfinite(rel)) {
        report.max_relative_error = rel;
        report.worst_param = p->name;
        report.worst_index = i;
      }
    }
  }
  zero_grad(params);
  report.passed = std::isfinite(report.max_relative_error) && report.max_relative_error < tolerance;
  return report;
}

// ---------------------------------------------------------------------------

namespace {

void write_values(std::ostream& out, const Matrix& m) {
  char buf[64];
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%a", m.data()[i]);
    if (i) out << ' ';
    out << buf;
  }
  out << '\n';
}

void read_values(std::istream& in, Matrix& m, const std::string& what) {
  std::string token;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (!(in >> token)) throw StructuralError("checkpoint: truncated values for " + what);
    char* end = nullptr;
    m.data()[i] = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') {
      throw StructuralError("checkpoint: bad number '" + token + "' in " + what);
    }
  }
}

void expect(std::istream& in, const std::string& word) {
  std::string token;
  if (!(in >> token) || token != word) {
    throw StructuralError("checkpoint: expected '" + word + "', got '" + token + "'");
  }
}

}  // namespace

void save_checkpoint(std::ostream& out, const ConstParamRefs& params,
                     const OptimizerState* optimizer) {
  out << "nalab-checkpoint 1\n";
  out << "tensors " << params.size() << '\n';
  for (const auto* p : params) {
    out << "tensor " << p->name << ' ' << p->value.rows() << ' ' << p->value.cols() << '\n';
    write_values(out, p->value);
  }
  if (optimizer) {
    char buf[64];
    out << "optimizer " << optimizer->step;
    for (double v : {optimizer->config.learning_rate, optimizer->config.beta1,
                     optimizer->config.beta2, optimizer->config.epsilon}) {
      std::snprintf(buf, sizeof(buf), "%a", v);
      out << ' ' << buf;
    }
    out << '\n';
    for (std::size_t k = 0; k < optimizer->first_moment.size(); ++k) {
      out << "moments " << params[k]->name << '\n';
      write_values(out, optimizer->first_moment[k]);
      write_values(out, optimizer->second_moment[k]);
    }
  } else {
    out << "optimizer none\n";
  }
  out << "end\n";
}

void load_checkpoint(std::istream& in, const ParamRefs& params, OptimizerState* optimizer) {
  expect(in, "nalab-checkpoint");
  int version = 0;
  if (!(in >> version) || version != 1) throw StructuralError("checkpoint: unsupported version");
  expect(in, "tensors");
  std::size_t count = 0;
  in >> count;
  if (count != params.size()) {
    throw StructuralError("checkpoint: holds " + std::to_string(count) + " tensors, expected " +
                          std::to_string(params.size()));
  }
  for (auto* p : params) {
    expect(in, "tensor");
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    in >> name >> rows >> cols;
    if (name != p->name || rows != p->value.rows() || cols != p->value.cols()) {
      throw StructuralError("checkpoint: tensor " + name + " does not match " + p->name);
    }
    read_values(in, p->value, name);
    ++p->generation;
  }
  expect(in, "optimizer");
  std::string token;
  in >> token;
  if (token != "none") {
    OptimizerState loaded;
    loaded.step = std::stoull(token);
    Matrix cfg(4, 1);
    read_values(in, cfg, "optimizer config");
    loaded.config = {cfg(0), cfg(1), cfg(2), cfg(3)};
    for (auto* p : params) {
      expect(in, "moments");
      std::string name;
      in >> name;
      if (name != p->name) throw StructuralError("checkpoint: moments for unexpected " + name);
      Matrix m(p->value.rows(), p->value.cols());
      Matrix v(p->value.rows(), p->value.cols());
      read_values(in, m, name);
      read_values(in, v, name);
      loaded.first_moment.push_back(std::move(m));
      loaded.second_moment.push_back(std::move(v));
    }
    if (optimizer) *optimizer = std::move(loaded);
  }
  expect(in, "end");
}

}  // namespace nalab
