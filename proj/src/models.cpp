#include "twinbox/models.hpp"

#include "twinbox/thermal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace twinbox::models {

using nnet::Mat;
using nnet::Vec;

// --------------------------------------------------------------------------- Predictor

Trajectory Predictor::rollout(std::span<const Sample> history,
                              std::span<const ControlInput> schedule) const {
  if (schedule.empty()) throw std::invalid_argument("rollout: empty schedule");
  if (static_cast<int>(history.size()) < lookback()) {
    throw std::invalid_argument("rollout: history shorter than lookback");
  }
  std::vector<Sample> window(history.end() - lookback(), history.end());
  Trajectory out;
  out.dt = dt();
  out.samples.reserve(schedule.size());
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    const ControlInput& u = schedule[k];
    ThermalState next(0.0, 0.0);
    try {
      next = predict_step(window, u);
    } catch (const std::domain_error& e) {
      throw std::runtime_error("rollout: prediction left the sanity band at step " +
                               std::to_string(k) + ": " + e.what());
    }
    out.samples.push_back(Sample{next, u});
    window.back().control = u;
    window.erase(window.begin());
    window.push_back(Sample{next, u});
  }
  return out;
}

std::size_t Predictor::checkpoint_bytes() const {
  std::ostringstream ss;
  save(ss);
  return ss.str().size();
}

std::unique_ptr<Predictor> load_predictor(std::istream& in) {
  ckpt::Reader reader(in);
  if (reader.kind() == "linear") return ArxPredictor::load(reader);
  if (reader.kind() == "pbm") return PbmPredictor::load(reader);
  if (reader.kind() == "lstm") return LstmPredictor::load(reader);
  if (reader.kind() == "ham") return HamPredictor::load(reader);
  throw std::runtime_error("load_predictor: unknown checkpoint kind " + reader.kind());
}

std::unique_ptr<Predictor> load_predictor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return load_predictor(in);
}

// --------------------------------------------------------------------------- ARX

double ArxModel::predict(const Eigen::VectorXd& x_lags, const Eigen::VectorXd& uh_lags,
                         const Eigen::VectorXd& uf_lags) const {
  if (x_lags.size() != a.size() || uh_lags.size() != b_h.size() || uf_lags.size() != b_f.size()) {
    throw std::invalid_argument("ArxModel: lag vector length mismatch");
  }
  return a.dot(x_lags) + b_h.dot(uh_lags) + b_f.dot(uf_lags);
}

Eigen::VectorXd ArxModel::simulate(const Eigen::VectorXd& x_hist, const Eigen::VectorXd& uh_hist,
                                   const Eigen::VectorXd& uf_hist, const Eigen::VectorXd& u,
                                   int steps) const {
  // Histories are newest-first and at least (p-1)/(q-1) long: position 0 is
  // the value at the current time t.
  if (u.size() != 2 * steps) throw std::invalid_argument("ArxModel::simulate: bad input length");
  std::vector<double> x(x_hist.data(), x_hist.data() + x_hist.size());
  std::vector<double> uh(uh_hist.data(), uh_hist.data() + uh_hist.size());
  std::vector<double> uf(uf_hist.data(), uf_hist.data() + uf_hist.size());
  Eigen::VectorXd out(steps);
  for (int k = 0; k < steps; ++k) {
    // The input applied over [t+k, t+k+1) becomes the newest input lag.
    uh.insert(uh.begin(), u[k]);
    uf.insert(uf.begin(), u[steps + k]);
    double next = 0.0;
    for (int i = 0; i < p(); ++i) next += a[i] * x[i];
    for (int j = 0; j < q(); ++j) next += b_h[j] * uh[j] + b_f[j] * uf[j];
    x.insert(x.begin(), next);
    out[k] = next;
  }
  return out;
}

ArxModel fit_arx(const WindowedDataset& ds, int p, int q, double ridge) {
  if (ds.horizon != 1) throw std::invalid_argument("fit_arx: requires horizon 1 windows");
  if (p <= 0) p = ds.lookback;
  if (q <= 0) q = ds.lookback;
  if (p < 1 || q < 1) throw std::invalid_argument("fit_arx: p and q must be >= 1");
  if (p > ds.lookback || q > ds.lookback) {
    throw std::invalid_argument("fit_arx: p and q cannot exceed the window lookback");
  }
  const int n_params = p + 2 * q;
  const int n = static_cast<int>(ds.pairs.size());
  if (n < n_params) {
    throw std::invalid_argument("fit_arx: " + std::to_string(n) + " pairs for " +
                                std::to_string(n_params) + " coefficients");
  }

  Mat regressors(n, n_params);
  Vec targets(n);
  for (int r = 0; r < n; ++r) {
    const WindowPair& pair = ds.pairs[r];
    const auto& w = pair.window;
    const int last = static_cast<int>(w.size()) - 1;
    for (int i = 0; i < p; ++i) regressors(r, i) = w[last - i].state.t_inside;
    for (int j = 0; j < q; ++j) {
      regressors(r, p + j) = w[last - j].control.heater_duty;
      regressors(r, p + q + j) = w[last - j].control.fan();
    }
    targets[r] = pair.target.t_inside;
  }

  Vec coeffs;
  if (ridge == 0.0) {
    Eigen::ColPivHouseholderQR<Mat> qr(regressors);
    qr.setThreshold(1e-10);
    if (qr.rank() < n_params) {
      throw std::runtime_error("fit_arx: rank-deficient regressor matrix (rank " +
                               std::to_string(qr.rank()) + " of " + std::to_string(n_params) +
                               " columns); inputs lack excitation");
    }
    coeffs = qr.solve(targets);
  } else {
    Mat gram = regressors.transpose() * regressors;
    gram.diagonal().array() += ridge;
    coeffs = gram.ldlt().solve(regressors.transpose() * targets);
  }
  if (!coeffs.allFinite()) throw std::runtime_error("fit_arx: non-finite coefficients");

  ArxModel model;
  model.a = coeffs.segment(0, p);
  model.b_h = coeffs.segment(p, q);
  model.b_f = coeffs.segment(p + q, q);
  return model;
}

ArxPredictor::ArxPredictor(ArxModel model, double dt) : model_(std::move(model)), dt_(dt) {
  if (model_.p() < 1 || model_.q() < 1) throw std::invalid_argument("ArxPredictor: empty model");
}

int ArxPredictor::lookback() const { return std::max(model_.p(), model_.q()); }

ThermalState ArxPredictor::predict_step(std::span<const Sample> history,
                                        const ControlInput& u_next) const {
  const int need = lookback();
  if (static_cast<int>(history.size()) < need) {
    throw std::invalid_argument("ArxPredictor: history shorter than lookback");
  }
  const auto recent = history.last(need);
  const int last = need - 1;
  Vec x_lags(model_.p()), uh_lags(model_.q()), uf_lags(model_.q());
  for (int i = 0; i < model_.p(); ++i) x_lags[i] = recent[last - i].state.t_inside;
  uh_lags[0] = u_next.heater_duty;
  uf_lags[0] = u_next.fan();
  for (int j = 1; j < model_.q(); ++j) {
    uh_lags[j] = recent[last - j].control.heater_duty;
    uf_lags[j] = recent[last - j].control.fan();
  }
  const double t_next = model_.predict(x_lags, uh_lags, uf_lags);
  return ThermalState(t_next, recent.back().state.t_ambient);
}

void ArxPredictor::save(std::ostream& out) const {
  ckpt::Writer w(out, "linear");
  w.meta("dt", dt_);
  w.tensor("a", model_.a);
  w.tensor("b_h", model_.b_h);
  w.tensor("b_f", model_.b_f);
}

std::unique_ptr<ArxPredictor> ArxPredictor::load(const ckpt::Reader& reader) {
  ArxModel m;
  m.a = reader.tensor("a");
  m.b_h = reader.tensor("b_h");
  m.b_f = reader.tensor("b_f");
  return std::make_unique<ArxPredictor>(std::move(m), reader.meta_double("dt"));
}

// --------------------------------------------------------------------------- PBM

PbmPredictor::PbmPredictor(PlantParams params, double dt, ode::IntegratorConfig ode_cfg)
    : params_(params), dt_(dt), ode_cfg_(ode_cfg) {
  params_.validate();
}

ThermalState PbmPredictor::predict_step(std::span<const Sample> history,
                                        const ControlInput& u_next) const {
  if (history.empty()) throw std::invalid_argument("PbmPredictor: empty history");
  const ThermalState& now = history.back().state;
  const double t_next =
      thermal_step(now.t_inside, now.t_ambient, u_next, params_, dt_, 0.0, ode_cfg_);
  return ThermalState(t_next, now.t_ambient);
}

void PbmPredictor::save(std::ostream& out) const {
  ckpt::Writer w(out, "pbm");
  w.meta("dt", dt_);
  w.meta("h_max", params_.h_max);
  w.meta("f_max", params_.f_max);
  w.meta("volume", params_.volume);
  w.meta("rho", params_.rho);
  w.meta("cp", params_.cp);
}

std::unique_ptr<PbmPredictor> PbmPredictor::load(const ckpt::Reader& reader) {
  PlantParams p;
  p.h_max = reader.meta_double("h_max");
  p.f_max = reader.meta_double("f_max");
  p.volume = reader.meta_double("volume");
  p.rho = reader.meta_double("rho");
  p.cp = reader.meta_double("cp");
  return std::make_unique<PbmPredictor>(p, reader.meta_double("dt"));
}

// --------------------------------------------------------------------------- features

Mat window_features(std::span<const Sample> window, const ControlInput& u_next) {
  Mat feats(4, static_cast<Eigen::Index>(window.size()));
  for (std::size_t k = 0; k < window.size(); ++k) {
    const bool newest = k + 1 == window.size();
    const ControlInput& u = newest ? u_next : window[k].control;
    feats(0, k) = window[k].state.t_inside;
    feats(1, k) = window[k].state.t_ambient;
    feats(2, k) = u.heater_duty;
    feats(3, k) = u.fan();
  }
  return feats;
}

// --------------------------------------------------------------------------- LSTM

namespace {

// Training problem over precomputed standardized sequences.
class LstmProblem : public nnet::TrainProblem {
 public:
  LstmProblem(nnet::LstmNet& net, std::vector<Mat> train_seqs, Vec train_targets,
              std::vector<Mat> val_seqs, Vec val_targets, int steps)
      : net_(net),
        train_seqs_(std::move(train_seqs)),
        train_targets_(std::move(train_targets)),
        val_seqs_(std::move(val_seqs)),
        val_targets_(std::move(val_targets)),
        steps_(steps) {}

  std::size_t train_size() const override { return train_seqs_.size(); }

  double train_batch(const std::vector<int>& idx, Rng& rng) override {
    const auto [xs, y] = gather(train_seqs_, train_targets_, idx);
    const Mat pred = net_.forward(xs, true, &rng);
    const double loss = nnet::mse_loss(pred, y);
    net_.backward(nnet::mse_grad(pred, y));
    return loss;
  }

  double validation_loss() override {
    std::vector<int> all(val_seqs_.size());
    std::iota(all.begin(), all.end(), 0);
    const auto [xs, y] = gather(val_seqs_, val_targets_, all);
    return nnet::mse_loss(net_.forward(xs, false), y);
  }

  std::vector<nnet::ParamRef> params() override { return net_.params(); }
  void zero_grad() override { net_.zero_grad(); }

 private:
  std::pair<std::vector<Mat>, Mat> gather(const std::vector<Mat>& seqs, const Vec& targets,
                                          const std::vector<int>& idx) const {
    std::vector<Mat> xs(steps_, Mat(4, idx.size()));
    Mat y(1, idx.size());
    for (std::size_t col = 0; col < idx.size(); ++col) {
      const Mat& seq = seqs[idx[col]];
      for (int t = 0; t < steps_; ++t) xs[t].col(col) = seq.col(t);
      y(0, col) = targets[idx[col]];
    }
    return {std::move(xs), std::move(y)};
  }

  nnet::LstmNet& net_;
  std::vector<Mat> train_seqs_;
  Vec train_targets_;
  std::vector<Mat> val_seqs_;
  Vec val_targets_;
  int steps_;
};

}  // namespace

LstmPredictor::LstmPredictor(int lookback, int hidden, double dropout_p, std::uint64_t seed,
                             double dt)
    : lookback_(lookback),
      dt_(dt),
      net_(4, hidden, 1, dropout_p, seed),
      in_std_(nnet::Standardizer::identity(4)),
      out_std_(nnet::Standardizer::identity(1)) {
  if (lookback < 1) throw std::invalid_argument("LstmPredictor: lookback must be >= 1");
}

nnet::TrainConfig LstmPredictor::default_train_config() {
  nnet::TrainConfig cfg;
  cfg.epochs = 5000;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 40;
  cfg.min_delta = 5e-4;
  cfg.patience = 10;
  return cfg;
}

nnet::TrainResult LstmPredictor::train(const WindowedDataset& train_ds,
                                       const WindowedDataset& val_ds,
                                       const nnet::TrainConfig& cfg) {
  if (train_ds.pairs.empty() || val_ds.pairs.empty()) {
    throw std::invalid_argument("LstmPredictor::train: empty dataset");
  }
  if (train_ds.lookback != lookback_) {
    throw std::invalid_argument("LstmPredictor::train: window lookback mismatch");
  }

  auto features_of = [&](const WindowedDataset& ds) {
    std::vector<Mat> seqs;
    seqs.reserve(ds.pairs.size());
    for (const auto& pair : ds.pairs) {
      seqs.push_back(window_features(pair.window, pair.window.back().control));
    }
    return seqs;
  };
  std::vector<Mat> train_seqs = features_of(train_ds);
  std::vector<Mat> val_seqs = features_of(val_ds);

  // Standardization statistics from the training split only.
  Mat stacked(4, static_cast<Eigen::Index>(train_seqs.size()) * lookback_);
  for (std::size_t k = 0; k < train_seqs.size(); ++k) {
    stacked.middleCols(static_cast<Eigen::Index>(k) * lookback_, lookback_) = train_seqs[k];
  }
  in_std_ = nnet::Standardizer::fit(stacked);

  Vec train_targets(train_ds.pairs.size());
  for (std::size_t k = 0; k < train_ds.pairs.size(); ++k) {
    train_targets[k] = train_ds.pairs[k].target.t_inside;
  }
  Mat target_row = train_targets.transpose();
  out_std_ = nnet::Standardizer::fit(target_row);

  for (auto& seq : train_seqs) seq = in_std_.transform(seq);
  for (auto& seq : val_seqs) seq = in_std_.transform(seq);
  for (Eigen::Index k = 0; k < train_targets.size(); ++k) {
    train_targets[k] = out_std_.transform_one(0, train_targets[k]);
  }
  Vec val_targets(val_ds.pairs.size());
  for (std::size_t k = 0; k < val_ds.pairs.size(); ++k) {
    val_targets[k] = out_std_.transform_one(0, val_ds.pairs[k].target.t_inside);
  }

  LstmProblem problem(net_, std::move(train_seqs), std::move(train_targets),
                      std::move(val_seqs), std::move(val_targets), lookback_);
  nnet::TrainResult result = nnet::fit(problem, cfg);
  trained_ = true;
  return result;
}

ThermalState LstmPredictor::predict_step(std::span<const Sample> history,
                                         const ControlInput& u_next) const {
  if (!trained_) throw std::logic_error("LstmPredictor: predict before train");
  if (static_cast<int>(history.size()) < lookback_) {
    throw std::invalid_argument("LstmPredictor: history shorter than lookback");
  }
  const auto recent = history.last(lookback_);
  const Mat feats = in_std_.transform(window_features(recent, u_next));
  std::vector<Mat> xs(lookback_);
  for (int t = 0; t < lookback_; ++t) xs[t] = feats.col(t);
  const Mat out = net_.forward(xs, false);
  const double t_next = out_std_.inverse_one(0, out(0, 0));
  return ThermalState(t_next, recent.back().state.t_ambient);
}

void LstmPredictor::save(std::ostream& out) const {
  ckpt::Writer w(out, "lstm");
  w.meta("dt", dt_);
  w.meta("lookback", lookback_);
  w.meta("trained", trained_ ? 1 : 0);
  w.tensor("in_mean", in_std_.mean);
  w.tensor("in_sd", in_std_.sd);
  w.tensor("out_mean", out_std_.mean);
  w.tensor("out_sd", out_std_.sd);
  for (const auto& p : net_.params()) {
    Mat flat = p.value;
    w.tensor(p.name, flat);
  }
}

std::unique_ptr<LstmPredictor> LstmPredictor::load(const ckpt::Reader& reader) {
  auto model = std::make_unique<LstmPredictor>(reader.meta_int("lookback"), 64, 0.2, 0,
                                               reader.meta_double("dt"));
  model->in_std_.mean = reader.tensor("in_mean");
  model->in_std_.sd = reader.tensor("in_sd");
  model->out_std_.mean = reader.tensor("out_mean");
  model->out_std_.sd = reader.tensor("out_sd");
  for (auto& p : model->net_.params()) {
    const Mat& t = reader.tensor(p.name);
    if (t.size() != p.value.size()) {
      throw std::runtime_error("lstm checkpoint: shape mismatch for " + p.name);
    }
    p.value = Eigen::Map<const Vec>(t.data(), t.size());
  }
  model->trained_ = reader.meta_int("trained") != 0;
  return model;
}

// --------------------------------------------------------------------------- HAM

namespace {

class MlpProblem : public nnet::TrainProblem {
 public:
  MlpProblem(nnet::MlpNet& net, Mat train_x, Mat train_y, Mat val_x, Mat val_y)
      : net_(net),
        train_x_(std::move(train_x)),
        train_y_(std::move(train_y)),
        val_x_(std::move(val_x)),
        val_y_(std::move(val_y)) {}

  std::size_t train_size() const override { return train_x_.cols(); }

  double train_batch(const std::vector<int>& idx, Rng& rng) override {
    Mat x(train_x_.rows(), idx.size());
    Mat y(train_y_.rows(), idx.size());
    for (std::size_t col = 0; col < idx.size(); ++col) {
      x.col(col) = train_x_.col(idx[col]);
      y.col(col) = train_y_.col(idx[col]);
    }
    const Mat pred = net_.forward(x, true, &rng);
    const double loss = nnet::mse_loss(pred, y);
    net_.backward(nnet::mse_grad(pred, y));
    return loss;
  }

  double validation_loss() override {
    return nnet::mse_loss(net_.forward(val_x_, false), val_y_);
  }

  std::vector<nnet::ParamRef> params() override { return net_.params(); }
  void zero_grad() override { net_.zero_grad(); }

 private:
  nnet::MlpNet& net_;
  Mat train_x_, train_y_, val_x_, val_y_;
};

}  // namespace

HamPredictor::HamPredictor(PlantParams params, int hidden, double dropout_p, std::uint64_t seed,
                           double dt, ode::IntegratorConfig ode_cfg)
    : params_(params),
      dt_(dt),
      ode_cfg_(ode_cfg),
      net_(4, hidden, 1, dropout_p, seed),
      in_std_(nnet::Standardizer::identity(4)),
      out_std_(nnet::Standardizer::identity(1)) {
  params_.validate();
}

nnet::TrainConfig HamPredictor::default_train_config() {
  nnet::TrainConfig cfg;
  cfg.epochs = 1000;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 64;
  cfg.min_delta = 5e-4;
  cfg.patience = 10;
  return cfg;
}

nnet::TrainResult HamPredictor::train(const WindowedDataset& train_ds,
                                      const WindowedDataset& val_ds,
                                      const nnet::TrainConfig& cfg) {
  if (train_ds.pairs.empty() || val_ds.pairs.empty()) {
    throw std::invalid_argument("HamPredictor::train: empty dataset");
  }
  if (train_ds.horizon != 1) {
    throw std::invalid_argument("HamPredictor::train: requires horizon 1 windows");
  }
  if (std::abs(train_ds.dt - dt_) > 1e-9) {
    throw std::invalid_argument("HamPredictor::train: dataset dt differs from model dt");
  }

  // Features (T_hat, T_amb, H, F) and residual-rate targets from the newest
  // window sample and its measured successor.
  auto build = [&](const WindowedDataset& ds, Mat& x, Mat& y) {
    const Eigen::Index n = static_cast<Eigen::Index>(ds.pairs.size());
    x.resize(4, n);
    y.resize(1, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto& pair = ds.pairs[k];
      const Sample& newest = pair.window.back();
      const ControlInput& u = newest.control;
      const double t_hat = thermal_step(newest.state.t_inside, newest.state.t_ambient, u,
                                        params_, dt_, 0.0, ode_cfg_);
      x(0, k) = t_hat;
      x(1, k) = newest.state.t_ambient;
      x(2, k) = u.heater_duty * params_.h_max;
      x(3, k) = u.fan() * params_.f_max;
      y(0, k) = (pair.target.t_inside - t_hat) / dt_;
    }
  };
  Mat train_x, train_y, val_x, val_y;
  build(train_ds, train_x, train_y);
  build(val_ds, val_x, val_y);

  in_std_ = nnet::Standardizer::fit(train_x);
  out_std_ = nnet::Standardizer::fit(train_y);

  MlpProblem problem(net_, in_std_.transform(train_x), out_std_.transform(train_y),
                     in_std_.transform(val_x), out_std_.transform(val_y));
  nnet::TrainResult result = nnet::fit(problem, cfg);
  trained_ = true;

  // One-step validation accuracy with and without the learned correction.
  double corrected = 0.0, uncorrected = 0.0;
  for (const auto& pair : val_ds.pairs) {
    const Sample& newest = pair.window.back();
    const ThermalState pred = predict_step(pair.window, newest.control);
    const double t_hat = thermal_step(newest.state.t_inside, newest.state.t_ambient,
                                      newest.control, params_, dt_, 0.0, ode_cfg_);
    corrected += std::abs(pred.t_inside - pair.target.t_inside);
    uncorrected += std::abs(t_hat - pair.target.t_inside);
  }
  corrected_val_mae_ = corrected / static_cast<double>(val_ds.pairs.size());
  uncorrected_val_mae_ = uncorrected / static_cast<double>(val_ds.pairs.size());
  return result;
}

void HamPredictor::zero_residual() {
  for (auto& p : net_.params()) p.value.setZero();
  in_std_ = nnet::Standardizer::identity(4);
  out_std_ = nnet::Standardizer::identity(1);
  trained_ = true;
}

double HamPredictor::residual_rate(double t_hat, double t_ambient, const ControlInput& u) const {
  Mat x(4, 1);
  x << t_hat, t_ambient, u.heater_duty * params_.h_max, u.fan() * params_.f_max;
  const Mat out = net_.forward(in_std_.transform(x), false);
  return out_std_.inverse_one(0, out(0, 0));
}

ThermalState HamPredictor::predict_step(std::span<const Sample> history,
                                        const ControlInput& u_next) const {
  if (!trained_) throw std::logic_error("HamPredictor: predict before train");
  if (history.empty()) throw std::invalid_argument("HamPredictor: empty history");
  const ThermalState& now = history.back().state;
  const double t_hat =
      thermal_step(now.t_inside, now.t_ambient, u_next, params_, dt_, 0.0, ode_cfg_);
  const double r = residual_rate(t_hat, now.t_ambient, u_next);
  const double t_next =
      thermal_step(now.t_inside, now.t_ambient, u_next, params_, dt_, r, ode_cfg_);
  return ThermalState(t_next, now.t_ambient);
}

void HamPredictor::save(std::ostream& out) const {
  ckpt::Writer w(out, "ham");
  w.meta("dt", dt_);
  w.meta("trained", trained_ ? 1 : 0);
  w.meta("h_max", params_.h_max);
  w.meta("f_max", params_.f_max);
  w.meta("volume", params_.volume);
  w.meta("rho", params_.rho);
  w.meta("cp", params_.cp);
  w.tensor("in_mean", in_std_.mean);
  w.tensor("in_sd", in_std_.sd);
  w.tensor("out_mean", out_std_.mean);
  w.tensor("out_sd", out_std_.sd);
  for (const auto& p : net_.params()) {
    Mat flat = p.value;
    w.tensor(p.name, flat);
  }
}

std::unique_ptr<HamPredictor> HamPredictor::load(const ckpt::Reader& reader) {
  PlantParams params;
  params.h_max = reader.meta_double("h_max");
  params.f_max = reader.meta_double("f_max");
  params.volume = reader.meta_double("volume");
  params.rho = reader.meta_double("rho");
  params.cp = reader.meta_double("cp");
  auto model = std::make_unique<HamPredictor>(params, 64, 0.2, 0, reader.meta_double("dt"));
  model->in_std_.mean = reader.tensor("in_mean");
  model->in_std_.sd = reader.tensor("in_sd");
  model->out_std_.mean = reader.tensor("out_mean");
  model->out_std_.sd = reader.tensor("out_sd");
  for (auto& p : model->net_.params()) {
    const Mat& t = reader.tensor(p.name);
    if (t.size() != p.value.size()) {
      throw std::runtime_error("ham checkpoint: shape mismatch for " + p.name);
    }
    p.value = Eigen::Map<const Vec>(t.data(), t.size());
  }
  model->trained_ = reader.meta_int("trained") != 0;
  return model;
}

std::unique_ptr<HamPredictor> train_ham(const PlantParams& params,
                                        const WindowedDataset& train_ds,
                                        const WindowedDataset& val_ds,
                                        const nnet::TrainConfig& cfg,
                                        nnet::TrainResult* result) {
  auto model = std::make_unique<HamPredictor>(params, 64, 0.2, cfg.rng_seed, train_ds.dt);
  nnet::TrainResult r = model->train(train_ds, val_ds, cfg);
  if (result != nullptr) *result = r;
  return model;
}

}  // namespace twinbox::models
