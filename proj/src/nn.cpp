#include "mpgnn/nn.hpp"

#include <cmath>

#include "mpgnn/errors.hpp"
#include "mpgnn/rng.hpp"

namespace mpgnn {

std::size_t ParamSet::add(std::string name, int rows, int cols) {
  if (find(name)) throw ContractViolation("duplicate parameter name " + name);
  params_.push_back({std::move(name), Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)});
  return params_.size() - 1;
}

std::size_t ParamSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

std::optional<std::size_t> ParamSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  return std::nullopt;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

bool ParamSet::grads_finite() const {
  for (const auto& p : params_)
    if (!p.grad.allFinite()) return false;
  return true;
}

void ParamSet::init(std::uint64_t seed) {
  for (auto& p : params_) {
    p.grad.setZero();
    const bool is_weight = p.name.size() >= 2 && p.name.compare(p.name.size() - 2, 2, ".W") == 0;
    if (!is_weight) {
      p.value.setZero();
      continue;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(p.value.rows()));
    Rng rng(derive_seed(seed, p.name));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = rng.uniform(-bound, bound);
  }
}

void ParamSet::set_zero() {
  for (auto& p : params_) {
    p.value.setZero();
    p.grad.setZero();
  }
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.params_.size() != b.params_.size()) return false;
  for (std::size_t i = 0; i < a.params_.size(); ++i) {
    const auto& x = a.params_[i];
    const auto& y = b.params_[i];
    if (x.name != y.name || x.value.rows() != y.value.rows() || x.value.cols() != y.value.cols() ||
        x.value != y.value)
      return false;
  }
  return true;
}

void softmax_rows(Matrix& z) {
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

void sigmoid_inplace(Matrix& z) {
  z = (1.0 / (1.0 + (-z.array()).exp())).matrix();
}

Mlp::Mlp(ParamSet& params, const std::string& prefix, std::vector<int> widths, Activation output)
    : widths_(std::move(widths)), output_(output) {
  if (widths_.size() < 2) throw ContractViolation("an MLP needs at least input and output widths");
  first_param_ = params.size();
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const std::string base = prefix + ".fc" + std::to_string(l);
    params.add(base + ".W", widths_[l], widths_[l + 1]);
    params.add(base + ".b", 1, widths_[l + 1]);
  }
}

Matrix Mlp::run(const ParamSet& params, const Matrix& x, MlpCache* cache) const {
  if (x.cols() != input_width())
    throw ContractViolation("MLP input width " + std::to_string(x.cols()) + ", expected " +
                            std::to_string(input_width()));
  if (cache) {
    cache->inputs.resize(layer_count());
    cache->pre.resize(layer_count());
  }
  Matrix a = x;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const auto& w = params[weight_index(l)].value;
    const auto& b = params[bias_index(l)].value;
    Matrix z = a * w;
    z.rowwise() += b.row(0);
    if (cache) {
      cache->inputs[l] = std::move(a);
      cache->pre[l] = z;
    }
    if (l + 1 < layer_count()) {
      a = z.cwiseMax(kLeakySlope * z);
    } else {
      a = std::move(z);
      if (output_ == Activation::Softmax) softmax_rows(a);
      if (output_ == Activation::Sigmoid) sigmoid_inplace(a);
    }
  }
  if (cache) {
    cache->output = a;
    cache->recorded = true;
  }
  return a;
}

Matrix Mlp::forward(const ParamSet& params, const Matrix& x) const { return run(params, x, nullptr); }

Matrix Mlp::forward(const ParamSet& params, const Matrix& x, MlpCache& cache) const {
  return run(params, x, &cache);
}

Matrix Mlp::backward(ParamSet& params, const MlpCache& cache, const Matrix& d_output) const {
  if (!cache.recorded) throw StateError("MLP backward called without a recorded forward pass");
  if (d_output.rows() != cache.output.rows() || d_output.cols() != cache.output.cols())
    throw ContractViolation("MLP backward: gradient shape does not match output");

  Matrix dz;
  switch (output_) {
    case Activation::None:
      dz = d_output;
      break;
    case Activation::Sigmoid:
      dz = (d_output.array() * cache.output.array() * (1.0 - cache.output.array())).matrix();
      break;
    case Activation::Softmax: {
      const Vector dot = (d_output.array() * cache.output.array()).rowwise().sum();
      dz = (cache.output.array() * (d_output.colwise() - dot).array()).matrix();
      break;
    }
  }

  for (std::size_t l = layer_count(); l-- > 0;) {
    auto& w = params[weight_index(l)];
    auto& b = params[bias_index(l)];
    w.grad.noalias() += cache.inputs[l].transpose() * dz;
    b.grad.row(0) += dz.colwise().sum();
    Matrix da = dz * w.value.transpose();
    if (l == 0) return da;
    const auto& pre = cache.pre[l - 1];
    dz = (pre.array() > 0.0).select(da.array(), kLeakySlope * da.array()).matrix();
  }
  return dz;  // unreachable: layer_count() >= 1
}

Adam::Adam(const ParamSet& params, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& p : params) {
    m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

void Adam::step(ParamSet& params) {
  if (params.size() != m_.size()) throw ContractViolation("optimizer/parameter set mismatch");
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -=
        cfg_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.epsilon);
    p.grad.setZero();
  }
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json values = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.size(); ++i) values.push_back(m.data()[i]);
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", std::move(values)}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& values = j.at("values");
  if (static_cast<Eigen::Index>(values.size()) != rows * cols)
    throw ContractViolation("matrix value count does not match its shape");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = values[static_cast<std::size_t>(i)].get<double>();
  return m;
}

nlohmann::json Adam::to_json() const {
  nlohmann::json j = {{"lr", cfg_.lr},
                      {"beta1", cfg_.beta1},
                      {"beta2", cfg_.beta2},
                      {"epsilon", cfg_.epsilon},
                      {"steps", steps_}};
  auto& m = j["m"] = nlohmann::json::array();
  auto& v = j["v"] = nlohmann::json::array();
  for (std::size_t i = 0; i < m_.size(); ++i) {
    m.push_back(matrix_to_json(m_[i]));
    v.push_back(matrix_to_json(v_[i]));
  }
  return j;
}

Adam Adam::from_json(const nlohmann::json& j, const ParamSet& params) {
  AdamConfig cfg;
  cfg.lr = j.at("lr").get<double>();
  cfg.beta1 = j.at("beta1").get<double>();
  cfg.beta2 = j.at("beta2").get<double>();
  cfg.epsilon = j.at("epsilon").get<double>();
  Adam a(params, cfg);
  a.steps_ = j.at("steps").get<long long>();
  const auto& m = j.at("m");
  const auto& v = j.at("v");
  if (m.size() != params.size() || v.size() != params.size())
    throw ContractViolation("optimizer state does not match the parameter set");
  for (std::size_t i = 0; i < params.size(); ++i) {
    a.m_[i] = matrix_from_json(m[i]);
    a.v_[i] = matrix_from_json(v[i]);
    if (a.m_[i].rows() != params[i].value.rows() || a.m_[i].cols() != params[i].value.cols() ||
        a.v_[i].rows() != params[i].value.rows() || a.v_[i].cols() != params[i].value.cols())
      throw ContractViolation("optimizer moment shape mismatch for " + params[i].name);
  }
  return a;
}

nlohmann::json params_to_json(const ParamSet& params) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : params) {
    auto j = matrix_to_json(p.value);
    j["name"] = p.name;
    arr.push_back(std::move(j));
  }
  return arr;
}

void params_from_json(const nlohmann::json& j, ParamSet& params) {
  if (j.size() != params.size())
    throw ContractViolation("checkpoint has " + std::to_string(j.size()) + " arrays, model has " +
                            std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = j[i];
    auto& p = params[i];
    if (entry.at("name").get<std::string>() != p.name)
      throw ContractViolation("checkpoint array " + std::to_string(i) + " is '" +
                              entry.at("name").get<std::string>() + "', expected '" + p.name + "'");
    Matrix m = matrix_from_json(entry);
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols())
      throw ContractViolation("shape mismatch for " + p.name + ": checkpoint " +
                              std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                              ", model " + std::to_string(p.value.rows()) + "x" +
                              std::to_string(p.value.cols()));
    p.value = std::move(m);
    p.grad.setZero();
  }
}

}  // namespace mpgnn
