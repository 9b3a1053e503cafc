#ifndef TWINBOX_NNET_HPP
#define TWINBOX_NNET_HPP

#include "twinbox/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace twinbox::nnet {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Flat view onto one parameter block and its gradient. The order returned by
// a network's params() is stable, which is what the optimizer keys its state
// on.
struct ParamRef {
  std::string name;
  Eigen::Map<Vec> value;
  Eigen::Map<Vec> grad;
};

ParamRef make_param_ref(const std::string& name, Mat& value, Mat& grad);

// Fills with U(-1/sqrt(fan_in), +1/sqrt(fan_in)).
void init_uniform(Mat& m, int fan_in, Rng& rng);

// ---------------------------------------------------------------------------
// Layers. All activations flow as (features x batch) matrices.

class Linear {
 public:
  Linear(int in, int out);
  void init(Rng& rng);

  // Stateless paths, used where the caller keeps its own per-step caches.
  Mat apply(const Mat& x) const;
  Mat grad_input(const Mat& dy) const;
  void accumulate(const Mat& x, const Mat& dy);

  // Stateful convenience for plain feed-forward stacks.
  Mat forward(const Mat& x);
  Mat backward(const Mat& dy);

  void collect(const std::string& prefix, std::vector<ParamRef>& out);
  void zero_grad();
  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }

  Mat weight, bias;  // bias is (out x 1)
  Mat grad_weight, grad_bias;

 private:
  Mat x_cache_;
};

class ReLU {
 public:
  Mat forward(const Mat& x);
  Mat backward(const Mat& dy) const;

 private:
  Mat mask_;
};

// Inverted dropout: scales kept units by 1/(1-p) during training, identity in
// evaluation mode.
class Dropout {
 public:
  explicit Dropout(double p) : p_(p) {}
  Mat forward(const Mat& x, bool training, Rng* rng);
  Mat backward(const Mat& dy) const;
  Mat take_mask() { return std::move(mask_); }
  void set_mask(Mat m) { mask_ = std::move(m); }
  static Mat sample_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng);
  double p() const { return p_; }

 private:
  double p_;
  Mat mask_;
};

// One recurrent cell layer: four gates over the concatenated [h_prev; x]
// input, hidden and cell state seeded at zero. forward caches everything
// needed for backpropagation through time.
class LstmLayer {
 public:
  LstmLayer(int in, int hidden);
  void init(Rng& rng);

  // xs[t] is (in x batch); returns the hidden state per step (hidden x batch).
  std::vector<Mat> forward(const std::vector<Mat>& xs);
  // dhs[t] is the gradient wrt the step-t hidden state; returns dx per step.
  std::vector<Mat> backward(const std::vector<Mat>& dhs);

  void collect(const std::string& prefix, std::vector<ParamRef>& out);
  void zero_grad();
  int in_dim() const { return in_; }
  int hidden_dim() const { return hidden_; }

  Mat w_forget, w_input, w_cell, w_output;  // (hidden x (hidden+in))
  Mat b_forget, b_input, b_cell, b_output;  // (hidden x 1)
  Mat gw_forget, gw_input, gw_cell, gw_output;
  Mat gb_forget, gb_input, gb_cell, gb_output;

 private:
  int in_, hidden_;
  // Per-step caches from the last forward pass.
  std::vector<Mat> z_, f_, i_, cbar_, o_, c_, c_prev_, tanh_c_;
};

// ---------------------------------------------------------------------------
// The two fixed architectures.

// Linear -> ReLU -> Dropout -> Linear -> ReLU -> Dropout -> Linear.
class MlpNet {
 public:
  MlpNet(int in, int hidden, int out, double dropout_p, std::uint64_t seed);

  Mat forward(const Mat& x, bool training = false, Rng* rng = nullptr);
  Mat backward(const Mat& dy);

  std::vector<ParamRef> params();
  void zero_grad();
  int input_dim() const { return l1_.in_dim(); }
  int output_dim() const { return l3_.out_dim(); }
  std::int64_t param_count();

 private:
  Linear l1_, l2_, l3_;
  ReLU r1_, r2_;
  Dropout d1_, d2_;
};

// LSTM -> Linear -> Dropout -> LSTM -> Linear -> Dropout -> LSTM -> Linear,
// with the final Linear applied to the last hidden state only.
class LstmNet {
 public:
  LstmNet(int in, int hidden, int out, double dropout_p, std::uint64_t seed);

  // xs[t] is (in x batch); returns (out x batch) read off the last step.
  Mat forward(const std::vector<Mat>& xs, bool training = false, Rng* rng = nullptr);
  void backward(const Mat& dy);

  std::vector<ParamRef> params();
  void zero_grad();
  int input_dim() const { return lstm1_.in_dim(); }
  int output_dim() const { return head_.out_dim(); }
  std::int64_t param_count();

 private:
  LstmLayer lstm1_, lstm2_, lstm3_;
  Linear mid1_, mid2_, head_;
  double dropout_p_;
  // Caches from the last forward pass.
  std::vector<Mat> h1_, a1_, m1_, h2_, a2_, m2_, h3_;
  Mat head_in_;
  int steps_ = 0;
};

// ---------------------------------------------------------------------------
// Loss, optimizer, trainer.

double mse_loss(const Mat& pred, const Mat& target);
Mat mse_grad(const Mat& pred, const Mat& target);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::vector<ParamRef>& params);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Vec> m_, v_;
};

// Per-feature affine normalization fitted on training data only.
struct Standardizer {
  Vec mean;
  Vec sd;

  static Standardizer fit(const Mat& samples);  // (features x n)
  static Standardizer identity(int dims);
  Mat transform(const Mat& x) const;
  Mat inverse(const Mat& x) const;
  double transform_one(int feature, double v) const;
  double inverse_one(int feature, double v) const;
};

struct TrainConfig {
  int epochs = 1000;
  double learning_rate = 1e-3;
  int batch_size = 64;
  double min_delta = 5e-4;
  int patience = 10;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct TrainResult {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = -1;
  double best_val = 0.0;
  int epochs_run = 0;
};

// What fit() needs from a concrete model: minibatch forward/backward on the
// training set and a full-pass validation loss in evaluation mode.
class TrainProblem {
 public:
  virtual ~TrainProblem() = default;
  virtual std::size_t train_size() const = 0;
  // Accumulates gradients for the given pair indices; returns the batch loss.
  virtual double train_batch(const std::vector<int>& idx, Rng& rng) = 0;
  virtual double validation_loss() = 0;
  virtual std::vector<ParamRef> params() = 0;
  virtual void zero_grad() = 0;
};

// Minibatch Adam with early stopping: stops once the validation loss has
// failed to improve by min_delta for `patience` consecutive epochs, and
// restores the parameters of the best validation epoch. Throws on NaN loss.
TrainResult fit(TrainProblem& problem, const TrainConfig& cfg);

// Central finite differences (step h) against the analytic gradients already
// accumulated in `params`. `loss_fn` must recompute the loss deterministically
// without touching the gradients. Returns the largest relative error.
double finite_difference_check(const std::function<double()>& loss_fn,
                               std::vector<ParamRef> params, double h = 1e-5);

}  // namespace twinbox::nnet

#endif  // TWINBOX_NNET_HPP
