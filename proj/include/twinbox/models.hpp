#ifndef TWINBOX_MODELS_HPP
#define TWINBOX_MODELS_HPP

#include "twinbox/checkpoint.hpp"
#include "twinbox/core.hpp"
#include "twinbox/integrate.hpp"
#include "twinbox/nnet.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace twinbox::models {

// Common one-step / rollout contract for all four predictors.
//
// History convention: `history` holds the last lookback() samples, oldest
// first. The control stored in the newest sample is ignored; `u_next` is the
// input applied over the interval being predicted. This matches the training
// windows, where the newest window sample carries the control that produced
// the target.
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual std::string name() const = 0;
  virtual int lookback() const = 0;
  virtual double dt() const { return kDefaultDt; }

  virtual ThermalState predict_step(std::span<const Sample> history,
                                    const ControlInput& u_next) const = 0;

  // Closed-loop autoregressive rollout: from step 1 on, the model consumes
  // its own predictions. Throws with the step index if a prediction leaves
  // the temperature sanity band.
  Trajectory rollout(std::span<const Sample> history,
                     std::span<const ControlInput> schedule) const;

  virtual void save(std::ostream& out) const = 0;

  // Serialized checkpoint size; the memory metric reported by the harness.
  std::size_t checkpoint_bytes() const;
};

std::unique_ptr<Predictor> load_predictor(std::istream& in);
std::unique_ptr<Predictor> load_predictor_file(const std::string& path);

// --------------------------------------------------------------------------- ARX

// x_{t+1} = sum_i a_i x_{t-i+1} + sum_j bh_j uh_{t-j+1} + sum_j bf_j uf_{t-j+1}
struct ArxModel {
  Eigen::VectorXd a;    // a_1 (newest lag) .. a_p
  Eigen::VectorXd b_h;  // b_1 (newest input) .. b_q
  Eigen::VectorXd b_f;

  int p() const { return static_cast<int>(a.size()); }
  int q() const { return static_cast<int>(b_h.size()); }

  // One-step evaluation; lag vectors are ordered newest first.
  double predict(const Eigen::VectorXd& x_lags, const Eigen::VectorXd& uh_lags,
                 const Eigen::VectorXd& uf_lags) const;

  // Multi-step rollout on raw (possibly unquantized) inputs, used by the MPC
  // relaxation. u is laid out as [uh_0..uh_{N-1}, uf_0..uf_{N-1}].
  Eigen::VectorXd simulate(const Eigen::VectorXd& x_hist, const Eigen::VectorXd& uh_hist,
                           const Eigen::VectorXd& uf_hist, const Eigen::VectorXd& u,
                           int steps) const;
};

// Ordinary least squares on the one-step regression form; `ridge` adds a
// small Tikhonov term for conditioning. With ridge == 0 a rank-deficient
// regressor is rejected instead. p and q default to the window lookback.
ArxModel fit_arx(const WindowedDataset& ds, int p = -1, int q = -1, double ridge = 1e-8);

class ArxPredictor : public Predictor {
 public:
  ArxPredictor(ArxModel model, double dt = kDefaultDt);

  std::string name() const override { return "linear"; }
  int lookback() const override;
  double dt() const override { return dt_; }
  ThermalState predict_step(std::span<const Sample> history,
                            const ControlInput& u_next) const override;
  void save(std::ostream& out) const override;
  static std::unique_ptr<ArxPredictor> load(const ckpt::Reader& reader);

  const ArxModel& model() const { return model_; }

 private:
  ArxModel model_;
  double dt_;
};

// --------------------------------------------------------------------------- PBM

// The idealized energy balance integrated over one interval; has no trained
// parameters and ignores all history but the newest state.
class PbmPredictor : public Predictor {
 public:
  explicit PbmPredictor(PlantParams params, double dt = kDefaultDt,
                        ode::IntegratorConfig ode_cfg = {});

  std::string name() const override { return "pbm"; }
  int lookback() const override { return 1; }
  double dt() const override { return dt_; }
  ThermalState predict_step(std::span<const Sample> history,
                            const ControlInput& u_next) const override;
  void save(std::ostream& out) const override;
  static std::unique_ptr<PbmPredictor> load(const ckpt::Reader& reader);

  const PlantParams& params() const { return params_; }
  const ode::IntegratorConfig& ode_cfg() const { return ode_cfg_; }

 private:
  PlantParams params_;
  double dt_;
  ode::IntegratorConfig ode_cfg_;
};

// --------------------------------------------------------------------------- LSTM

// Stacked recurrent network over per-step features (T, T_amb, u_h, u_f),
// standardized with training-set statistics, predicting the next temperature.
class LstmPredictor : public Predictor {
 public:
  LstmPredictor(int lookback = 10, int hidden = 64, double dropout_p = 0.2,
                std::uint64_t seed = 0, double dt = kDefaultDt);

  static nnet::TrainConfig default_train_config();

  nnet::TrainResult train(const WindowedDataset& train_ds, const WindowedDataset& val_ds,
                          const nnet::TrainConfig& cfg);

  std::string name() const override { return "lstm"; }
  int lookback() const override { return lookback_; }
  double dt() const override { return dt_; }
  ThermalState predict_step(std::span<const Sample> history,
                            const ControlInput& u_next) const override;
  void save(std::ostream& out) const override;
  static std::unique_ptr<LstmPredictor> load(const ckpt::Reader& reader);

  bool trained() const { return trained_; }
  nnet::LstmNet& net() { return net_; }

 private:
  int lookback_;
  double dt_;
  mutable nnet::LstmNet net_;
  nnet::Standardizer in_std_;
  nnet::Standardizer out_std_;
  bool trained_ = false;
};

// --------------------------------------------------------------------------- HAM

// Idealized model plus a learned corrective source term: the uncorrected step
// gives T_hat, a small dense net maps (T_hat, T_amb, H, F) to a rate
// correction r (K/s), and the step is solved again with r added to the
// right-hand side.
class HamPredictor : public Predictor {
 public:
  HamPredictor(PlantParams params, int hidden = 64, double dropout_p = 0.2,
               std::uint64_t seed = 0, double dt = kDefaultDt,
               ode::IntegratorConfig ode_cfg = {});

  static nnet::TrainConfig default_train_config();

  // Residual targets are (measured_next - uncorrected_next) / dt.
  nnet::TrainResult train(const WindowedDataset& train_ds, const WindowedDataset& val_ds,
                          const nnet::TrainConfig& cfg);

  // Marks the model trained with an all-zero correction; equals the pure
  // idealized model on every input.
  void zero_residual();

  // Correction rate for one input vector, K/s.
  double residual_rate(double t_hat, double t_ambient, const ControlInput& u) const;

  // Validation diagnostics from the last train() call.
  double corrected_val_mae() const { return corrected_val_mae_; }
  double uncorrected_val_mae() const { return uncorrected_val_mae_; }

  std::string name() const override { return "ham"; }
  int lookback() const override { return 1; }
  double dt() const override { return dt_; }
  ThermalState predict_step(std::span<const Sample> history,
                            const ControlInput& u_next) const override;
  void save(std::ostream& out) const override;
  static std::unique_ptr<HamPredictor> load(const ckpt::Reader& reader);

  bool trained() const { return trained_; }
  const PlantParams& params() const { return params_; }

 private:
  PlantParams params_;
  double dt_;
  ode::IntegratorConfig ode_cfg_;
  mutable nnet::MlpNet net_;
  nnet::Standardizer in_std_;
  nnet::Standardizer out_std_;
  bool trained_ = false;
  double corrected_val_mae_ = 0.0;
  double uncorrected_val_mae_ = 0.0;
};

// Trains the corrective term against the given windows and returns the full
// hybrid model.
std::unique_ptr<HamPredictor> train_ham(const PlantParams& params,
                                        const WindowedDataset& train_ds,
                                        const WindowedDataset& val_ds,
                                        const nnet::TrainConfig& cfg,
                                        nnet::TrainResult* result = nullptr);

// Per-step feature assembly shared by the LSTM path and its tests: rows are
// (T, T_amb, u_h, u_f); the newest column carries u_next.
nnet::Mat window_features(std::span<const Sample> window, const ControlInput& u_next);

}  // namespace twinbox::models

#endif  // TWINBOX_MODELS_HPP
