#include "twinbox/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace twinbox::nnet {

ParamRef make_param_ref(const std::string& name, Mat& value, Mat& grad) {
  return ParamRef{name, Eigen::Map<Vec>(value.data(), value.size()),
                  Eigen::Map<Vec>(grad.data(), grad.size())};
}

void init_uniform(Mat& m, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      m(r, c) = rng.uniform(-bound, bound);
    }
  }
}

// --------------------------------------------------------------------------- Linear

Linear::Linear(int in, int out)
    : weight(Mat::Zero(out, in)),
      bias(Mat::Zero(out, 1)),
      grad_weight(Mat::Zero(out, in)),
      grad_bias(Mat::Zero(out, 1)) {}

void Linear::init(Rng& rng) {
  init_uniform(weight, in_dim(), rng);
  init_uniform(bias, in_dim(), rng);
}

Mat Linear::apply(const Mat& x) const {
  if (x.rows() != weight.cols()) throw std::invalid_argument("Linear: input shape mismatch");
  Mat y = weight * x;
  y.colwise() += bias.col(0);
  return y;
}

Mat Linear::grad_input(const Mat& dy) const { return weight.transpose() * dy; }

void Linear::accumulate(const Mat& x, const Mat& dy) {
  grad_weight.noalias() += dy * x.transpose();
  grad_bias.col(0).noalias() += dy.rowwise().sum();
}

Mat Linear::forward(const Mat& x) {
  x_cache_ = x;
  return apply(x);
}

Mat Linear::backward(const Mat& dy) {
  accumulate(x_cache_, dy);
  return grad_input(dy);
}

void Linear::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back(make_param_ref(prefix + ".weight", weight, grad_weight));
  out.push_back(make_param_ref(prefix + ".bias", bias, grad_bias));
}

void Linear::zero_grad() {
  grad_weight.setZero();
  grad_bias.setZero();
}

// --------------------------------------------------------------------------- ReLU / Dropout

Mat ReLU::forward(const Mat& x) {
  mask_ = (x.array() > 0.0).cast<double>();
  return x.cwiseMax(0.0);
}

Mat ReLU::backward(const Mat& dy) const { return dy.cwiseProduct(mask_); }

Mat Dropout::sample_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Mat mask(rows, cols);
  const double keep_scale = 1.0 / (1.0 - p);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      mask(r, c) = rng.uniform() < p ? 0.0 : keep_scale;
    }
  }
  return mask;
}

Mat Dropout::forward(const Mat& x, bool training, Rng* rng) {
  if (!training || p_ <= 0.0) {
    mask_ = Mat::Ones(x.rows(), x.cols());
    return x;
  }
  if (rng == nullptr) throw std::invalid_argument("Dropout: training forward needs an Rng");
  mask_ = sample_mask(x.rows(), x.cols(), p_, *rng);
  return x.cwiseProduct(mask_);
}

Mat Dropout::backward(const Mat& dy) const { return dy.cwiseProduct(mask_); }

// --------------------------------------------------------------------------- LstmLayer

LstmLayer::LstmLayer(int in, int hidden) : in_(in), hidden_(hidden) {
  const auto zero_w = Mat::Zero(hidden, hidden + in);
  const auto zero_b = Mat::Zero(hidden, 1);
  w_forget = zero_w;
  w_input = zero_w;
  w_cell = zero_w;
  w_output = zero_w;
  b_forget = zero_b;
  b_input = zero_b;
  b_cell = zero_b;
  b_output = zero_b;
  gw_forget = zero_w;
  gw_input = zero_w;
  gw_cell = zero_w;
  gw_output = zero_w;
  gb_forget = zero_b;
  gb_input = zero_b;
  gb_cell = zero_b;
  gb_output = zero_b;
}

void LstmLayer::init(Rng& rng) {
  const int fan_in = hidden_ + in_;
  init_uniform(w_forget, fan_in, rng);
  init_uniform(w_input, fan_in, rng);
  init_uniform(w_cell, fan_in, rng);
  init_uniform(w_output, fan_in, rng);
  init_uniform(b_forget, fan_in, rng);
  init_uniform(b_input, fan_in, rng);
  init_uniform(b_cell, fan_in, rng);
  init_uniform(b_output, fan_in, rng);
}

namespace {

inline Mat sigmoid(const Mat& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

inline Mat gate(const Mat& w, const Mat& z, const Mat& b) {
  Mat pre = w * z;
  pre.colwise() += b.col(0);
  return pre;
}

}  // namespace

std::vector<Mat> LstmLayer::forward(const std::vector<Mat>& xs) {
  if (xs.empty()) throw std::invalid_argument("LstmLayer: empty input sequence");
  const Eigen::Index batch = xs.front().cols();
  const int steps = static_cast<int>(xs.size());
  z_.assign(steps, Mat());
  f_.assign(steps, Mat());
  i_.assign(steps, Mat());
  cbar_.assign(steps, Mat());
  o_.assign(steps, Mat());
  c_.assign(steps, Mat());
  c_prev_.assign(steps, Mat());
  tanh_c_.assign(steps, Mat());

  Mat h = Mat::Zero(hidden_, batch);
  Mat c = Mat::Zero(hidden_, batch);
  std::vector<Mat> hs(steps);
  for (int t = 0; t < steps; ++t) {
    if (xs[t].rows() != in_ || xs[t].cols() != batch) {
      throw std::invalid_argument("LstmLayer: input shape mismatch at step " + std::to_string(t));
    }
    Mat z(hidden_ + in_, batch);
    z.topRows(hidden_) = h;
    z.bottomRows(in_) = xs[t];
    c_prev_[t] = c;
    f_[t] = sigmoid(gate(w_forget, z, b_forget));
    i_[t] = sigmoid(gate(w_input, z, b_input));
    cbar_[t] = gate(w_cell, z, b_cell).array().tanh().matrix();
    c = f_[t].cwiseProduct(c) + i_[t].cwiseProduct(cbar_[t]);
    o_[t] = sigmoid(gate(w_output, z, b_output));
    tanh_c_[t] = c.array().tanh().matrix();
    h = o_[t].cwiseProduct(tanh_c_[t]);
    z_[t] = std::move(z);
    c_[t] = c;
    hs[t] = h;
  }
  return hs;
}

std::vector<Mat> LstmLayer::backward(const std::vector<Mat>& dhs) {
  const int steps = static_cast<int>(z_.size());
  if (static_cast<int>(dhs.size()) != steps) {
    throw std::invalid_argument("LstmLayer: gradient sequence length mismatch");
  }
  const Eigen::Index batch = z_.front().cols();
  std::vector<Mat> dxs(steps);
  Mat dh_next = Mat::Zero(hidden_, batch);
  Mat dc_next = Mat::Zero(hidden_, batch);
  for (int t = steps - 1; t >= 0; --t) {
    const Mat dh = dhs[t] + dh_next;
    const Mat& f = f_[t];
    const Mat& i = i_[t];
    const Mat& cb = cbar_[t];
    const Mat& o = o_[t];
    const Mat& th = tanh_c_[t];

    const Mat do_pre =
        dh.cwiseProduct(th).cwiseProduct(o).cwiseProduct((1.0 - o.array()).matrix());
    const Mat dc =
        dc_next + dh.cwiseProduct(o).cwiseProduct((1.0 - th.array().square()).matrix());
    const Mat df_pre = dc.cwiseProduct(c_prev_[t])
                           .cwiseProduct(f)
                           .cwiseProduct((1.0 - f.array()).matrix());
    const Mat di_pre =
        dc.cwiseProduct(cb).cwiseProduct(i).cwiseProduct((1.0 - i.array()).matrix());
    const Mat dcb_pre = dc.cwiseProduct(i).cwiseProduct((1.0 - cb.array().square()).matrix());
    dc_next = dc.cwiseProduct(f);

    const Mat& z = z_[t];
    gw_forget.noalias() += df_pre * z.transpose();
    gw_input.noalias() += di_pre * z.transpose();
    gw_cell.noalias() += dcb_pre * z.transpose();
    gw_output.noalias() += do_pre * z.transpose();
    gb_forget.col(0).noalias() += df_pre.rowwise().sum();
    gb_input.col(0).noalias() += di_pre.rowwise().sum();
    gb_cell.col(0).noalias() += dcb_pre.rowwise().sum();
    gb_output.col(0).noalias() += do_pre.rowwise().sum();

    Mat dz = w_forget.transpose() * df_pre;
    dz.noalias() += w_input.transpose() * di_pre;
    dz.noalias() += w_cell.transpose() * dcb_pre;
    dz.noalias() += w_output.transpose() * do_pre;
    dh_next = dz.topRows(hidden_);
    dxs[t] = dz.bottomRows(in_);
  }
  return dxs;
}

void LstmLayer::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back(make_param_ref(prefix + ".w_forget", w_forget, gw_forget));
  out.push_back(make_param_ref(prefix + ".w_input", w_input, gw_input));
  out.push_back(make_param_ref(prefix + ".w_cell", w_cell, gw_cell));
  out.push_back(make_param_ref(prefix + ".w_output", w_output, gw_output));
  out.push_back(make_param_ref(prefix + ".b_forget", b_forget, gb_forget));
  out.push_back(make_param_ref(prefix + ".b_input", b_input, gb_input));
  out.push_back(make_param_ref(prefix + ".b_cell", b_cell, gb_cell));
  out.push_back(make_param_ref(prefix + ".b_output", b_output, gb_output));
}

void LstmLayer::zero_grad() {
  gw_forget.setZero();
  gw_input.setZero();
  gw_cell.setZero();
  gw_output.setZero();
  gb_forget.setZero();
  gb_input.setZero();
  gb_cell.setZero();
  gb_output.setZero();
}

// --------------------------------------------------------------------------- MlpNet

MlpNet::MlpNet(int in, int hidden, int out, double dropout_p, std::uint64_t seed)
    : l1_(in, hidden), l2_(hidden, hidden), l3_(hidden, out), d1_(dropout_p), d2_(dropout_p) {
  Rng rng(seed);
  l1_.init(rng);
  l2_.init(rng);
  l3_.init(rng);
}

Mat MlpNet::forward(const Mat& x, bool training, Rng* rng) {
  Mat h = d1_.forward(r1_.forward(l1_.forward(x)), training, rng);
  h = d2_.forward(r2_.forward(l2_.forward(h)), training, rng);
  return l3_.forward(h);
}

Mat MlpNet::backward(const Mat& dy) {
  Mat d = l3_.backward(dy);
  d = l2_.backward(r2_.backward(d2_.backward(d)));
  d = l1_.backward(r1_.backward(d1_.backward(d)));
  return d;
}

std::vector<ParamRef> MlpNet::params() {
  std::vector<ParamRef> out;
  l1_.collect("l1", out);
  l2_.collect("l2", out);
  l3_.collect("l3", out);
  return out;
}

void MlpNet::zero_grad() {
  l1_.zero_grad();
  l2_.zero_grad();
  l3_.zero_grad();
}

std::int64_t MlpNet::param_count() {
  std::int64_t n = 0;
  for (const auto& p : params()) n += p.value.size();
  return n;
}

// --------------------------------------------------------------------------- LstmNet

LstmNet::LstmNet(int in, int hidden, int out, double dropout_p, std::uint64_t seed)
    : lstm1_(in, hidden),
      lstm2_(hidden, hidden),
      lstm3_(hidden, hidden),
      mid1_(hidden, hidden),
      mid2_(hidden, hidden),
      head_(hidden, out),
      dropout_p_(dropout_p) {
  Rng rng(seed);
  lstm1_.init(rng);
  mid1_.init(rng);
  lstm2_.init(rng);
  mid2_.init(rng);
  lstm3_.init(rng);
  head_.init(rng);
}

Mat LstmNet::forward(const std::vector<Mat>& xs, bool training, Rng* rng) {
  if (xs.empty()) throw std::invalid_argument("LstmNet: empty input sequence");
  steps_ = static_cast<int>(xs.size());
  const bool drop = training && dropout_p_ > 0.0;
  if (drop && rng == nullptr) throw std::invalid_argument("LstmNet: training forward needs an Rng");

  h1_ = lstm1_.forward(xs);
  a1_.assign(steps_, Mat());
  m1_.assign(steps_, Mat());
  std::vector<Mat> x2(steps_);
  for (int t = 0; t < steps_; ++t) {
    a1_[t] = mid1_.apply(h1_[t]);
    if (drop) {
      m1_[t] = Dropout::sample_mask(a1_[t].rows(), a1_[t].cols(), dropout_p_, *rng);
      x2[t] = a1_[t].cwiseProduct(m1_[t]);
    } else {
      x2[t] = a1_[t];
    }
  }

  h2_ = lstm2_.forward(x2);
  a2_.assign(steps_, Mat());
  m2_.assign(steps_, Mat());
  std::vector<Mat> x3(steps_);
  for (int t = 0; t < steps_; ++t) {
    a2_[t] = mid2_.apply(h2_[t]);
    if (drop) {
      m2_[t] = Dropout::sample_mask(a2_[t].rows(), a2_[t].cols(), dropout_p_, *rng);
      x3[t] = a2_[t].cwiseProduct(m2_[t]);
    } else {
      x3[t] = a2_[t];
    }
  }

  h3_ = lstm3_.forward(x3);
  head_in_ = h3_.back();
  return head_.apply(head_in_);
}

void LstmNet::backward(const Mat& dy) {
  const Eigen::Index batch = dy.cols();
  head_.accumulate(head_in_, dy);

  std::vector<Mat> dh3(steps_, Mat::Zero(lstm3_.hidden_dim(), batch));
  dh3.back() = head_.grad_input(dy);
  std::vector<Mat> dx3 = lstm3_.backward(dh3);

  std::vector<Mat> dh2(steps_);
  for (int t = 0; t < steps_; ++t) {
    Mat da2 = m2_[t].size() ? dx3[t].cwiseProduct(m2_[t]) : dx3[t];
    mid2_.accumulate(h2_[t], da2);
    dh2[t] = mid2_.grad_input(da2);
  }
  std::vector<Mat> dx2 = lstm2_.backward(dh2);

  std::vector<Mat> dh1(steps_);
  for (int t = 0; t < steps_; ++t) {
    Mat da1 = m1_[t].size() ? dx2[t].cwiseProduct(m1_[t]) : dx2[t];
    mid1_.accumulate(h1_[t], da1);
    dh1[t] = mid1_.grad_input(da1);
  }
  lstm1_.backward(dh1);
}

std::vector<ParamRef> LstmNet::params() {
  std::vector<ParamRef> out;
  lstm1_.collect("lstm1", out);
  mid1_.collect("mid1", out);
  lstm2_.collect("lstm2", out);
  mid2_.collect("mid2", out);
  lstm3_.collect("lstm3", out);
  head_.collect("head", out);
  return out;
}

void LstmNet::zero_grad() {
  lstm1_.zero_grad();
  mid1_.zero_grad();
  lstm2_.zero_grad();
  mid2_.zero_grad();
  lstm3_.zero_grad();
  head_.zero_grad();
}

std::int64_t LstmNet::param_count() {
  std::int64_t n = 0;
  for (const auto& p : params()) n += p.value.size();
  return n;
}

// --------------------------------------------------------------------------- loss

double mse_loss(const Mat& pred, const Mat& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw std::invalid_argument("mse_loss: shape mismatch");
  }
  return (pred - target).array().square().mean();
}

Mat mse_grad(const Mat& pred, const Mat& target) {
  return 2.0 / static_cast<double>(pred.size()) * (pred - target);
}

// --------------------------------------------------------------------------- Adam

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::vector<ParamRef>& params) {
  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.push_back(Vec::Zero(p.value.size()));
      v_.push_back(Vec::Zero(p.value.size()));
    }
  }
  if (m_.size() != params.size()) throw std::logic_error("Adam: parameter set changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * p.grad;
    v_[k] = beta2_ * v_[k].array() + (1.0 - beta2_) * p.grad.array().square();
    const Vec m_hat = m_[k] / bc1;
    const Vec v_hat = v_[k] / bc2;
    p.value.array() -= lr_ * m_hat.array() / (v_hat.array().sqrt() + eps_);
  }
}

// --------------------------------------------------------------------------- Standardizer

Standardizer Standardizer::fit(const Mat& samples) {
  if (samples.cols() < 1) throw std::invalid_argument("Standardizer: no samples");
  Standardizer s;
  s.mean = samples.rowwise().mean();
  Mat centered = samples.colwise() - s.mean;
  s.sd = (centered.array().square().rowwise().mean()).sqrt();
  for (Eigen::Index i = 0; i < s.sd.size(); ++i) {
    if (s.sd[i] < 1e-12) s.sd[i] = 1.0;  // constant feature
  }
  return s;
}

Standardizer Standardizer::identity(int dims) {
  Standardizer s;
  s.mean = Vec::Zero(dims);
  s.sd = Vec::Ones(dims);
  return s;
}

Mat Standardizer::transform(const Mat& x) const {
  return ((x.colwise() - mean).array().colwise() / sd.array()).matrix();
}

Mat Standardizer::inverse(const Mat& x) const {
  return ((x.array().colwise() * sd.array()).colwise() + mean.array()).matrix();
}

double Standardizer::transform_one(int feature, double v) const {
  return (v - mean[feature]) / sd[feature];
}

double Standardizer::inverse_one(int feature, double v) const {
  return v * sd[feature] + mean[feature];
}

// --------------------------------------------------------------------------- fit

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || patience < 1) {
    throw std::invalid_argument("TrainConfig: epochs, batch_size and patience must be >= 1");
  }
  if (!(learning_rate >= 0)) throw std::invalid_argument("TrainConfig: bad learning rate");
}

TrainResult fit(TrainProblem& problem, const TrainConfig& cfg) {
  cfg.validate();
  if (problem.train_size() == 0) throw std::invalid_argument("fit: empty training set");

  Rng rng(cfg.rng_seed);
  Adam opt(cfg.learning_rate);
  TrainResult result;
  result.best_val = std::numeric_limits<double>::infinity();

  std::vector<int> order(problem.train_size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<Vec> best_params;
  int stall = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the run's own stream.
    for (int k = static_cast<int>(order.size()) - 1; k > 0; --k) {
      std::swap(order[k], order[rng.uniform_int(0, k)]);
    }

    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<int> idx(order.begin() + start, order.begin() + stop);
      problem.zero_grad();
      const double loss = problem.train_batch(idx, rng);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("fit: non-finite training loss at epoch " +
                                 std::to_string(epoch));
      }
      auto params = problem.params();
      opt.step(params);
      epoch_loss += loss * static_cast<double>(idx.size());
      seen += idx.size();
    }
    epoch_loss /= static_cast<double>(seen);

    const double val = problem.validation_loss();
    if (!std::isfinite(val)) {
      throw std::runtime_error("fit: non-finite validation loss at epoch " +
                               std::to_string(epoch));
    }
    result.train_loss.push_back(epoch_loss);
    result.val_loss.push_back(val);
    result.epochs_run = epoch + 1;

    if (result.best_val - val > cfg.min_delta) {
      result.best_val = val;
      result.best_epoch = epoch;
      stall = 0;
      best_params.clear();
      for (const auto& p : problem.params()) best_params.emplace_back(p.value);
    } else {
      ++stall;
      if (stall >= cfg.patience) break;
    }
  }

  if (!best_params.empty()) {
    auto params = problem.params();
    for (std::size_t k = 0; k < params.size(); ++k) params[k].value = best_params[k];
  }
  return result;
}

// --------------------------------------------------------------------------- gradient check

double finite_difference_check(const std::function<double()>& loss_fn,
                               std::vector<ParamRef> params, double h) {
  double worst = 0.0;
  for (auto& p : params) {
    for (Eigen::Index k = 0; k < p.value.size(); ++k) {
      const double saved = p.value[k];
      p.value[k] = saved + h;
      const double plus = loss_fn();
      p.value[k] = saved - h;
      const double minus = loss_fn();
      p.value[k] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double analytic = p.grad[k];
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      worst = std::max(worst, std::abs(numeric - analytic) / scale);
    }
  }
  return worst;
}

}  // namespace twinbox::nnet
