#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "guard/safe_algos.hpp"

namespace guard::algo {

namespace {

Vector clip_unit(const Vector& a) { return a.cwiseMax(-1.0).cwiseMin(1.0); }

template <typename LossGrad>
FitReport descend(Vector params, const nn::FitOptions& options, LossGrad&& loss_grad,
                  const std::function<void(const Vector&)>& store) {
  if (options.iters < 0 || !(options.lr > 0.0)) throw std::invalid_argument("fit options");
  FitReport report;
  nn::Adam adam(params.size(), options.lr);
  Vector grad(params.size());
  for (int it = 0; it < options.iters; ++it) {
    const double loss = loss_grad(grad);
    num::require_finite(loss, "regression loss");
    report.losses.push_back(loss);
    params -= options.optimizer == nn::Optimizer::kAdam ? adam.step(grad) : Vector(options.lr * grad);
    store(params);
  }
  const double final_loss = loss_grad(grad);
  num::require_finite(final_loss, "regression loss");
  report.losses.push_back(final_loss);
  return report;
}

}  // namespace

// ------------------------------------------------------------ safety layer --

SafetyLayerModel::SafetyLayerModel(int obs_dim, int act_dim, num::RngStream& rng,
                                   const std::vector<int>& hidden)
    : net_(nn::Mlp::architecture(obs_dim, hidden, act_dim + 1), rng), act_dim_(act_dim) {
  const int last = net_.num_layers() - 1;
  net_.weight(last).setZero();
  net_.bias(last).setZero();
}

SafetyLayerModel::Prediction SafetyLayerModel::predict(const Vector& obs) const {
  const Vector out = net_.forward(obs);
  return {out.head(act_dim_), out[act_dim_]};
}

double SafetyLayerModel::loss(const Matrix& obs, const Matrix& actions, const Vector& cost_delta,
                              Vector* grad) const {
  const Index n = cost_delta.size();
  if (obs.cols() != n || actions.cols() != n || actions.rows() != act_dim_ || n == 0) {
    throw std::invalid_argument("SafetyLayerModel::loss: dataset shapes disagree");
  }
  nn::Mlp::Tape tape;
  const Matrix out = net_.forward(obs, tape);
  const Vector pred =
      (out.topRows(act_dim_).cwiseProduct(actions)).colwise().sum().transpose() + out.row(act_dim_).transpose();
  const Vector resid = pred - cost_delta;
  if (grad != nullptr) {
    grad->setZero(net_.num_params());
    const Vector scale = (2.0 / static_cast<double>(n)) * resid;
    Matrix grad_out(act_dim_ + 1, n);
    grad_out.topRows(act_dim_) = actions * scale.asDiagonal();
    grad_out.row(act_dim_) = scale.transpose();
    net_.backward(tape, grad_out, *grad, false);
  }
  return resid.squaredNorm() / static_cast<double>(n);
}

void SafetyDataset::append(const SafetyDataset& more, std::size_t capacity) {
  const Index keep_old = std::max<Index>(0, std::min<Index>(size(), static_cast<Index>(capacity) - more.size()));
  const Index take_new = std::min<Index>(more.size(), static_cast<Index>(capacity));
  const Index total = keep_old + take_new;
  auto join_cols = [&](const Matrix& a, const Matrix& b, Index rows) {
    Matrix m(rows, total);
    if (keep_old > 0) m.leftCols(keep_old) = a.rightCols(keep_old);
    m.rightCols(take_new) = b.rightCols(take_new);
    return m;
  };
  auto join_vec = [&](const Vector& a, const Vector& b) {
    Vector v(total);
    if (keep_old > 0) v.head(keep_old) = a.tail(keep_old);
    v.tail(take_new) = b.tail(take_new);
    return v;
  };
  observations = join_cols(observations, more.observations, more.observations.rows());
  actions = join_cols(actions, more.actions, more.actions.rows());
  prev_costs = join_vec(prev_costs, more.prev_costs);
  next_costs = join_vec(next_costs, more.next_costs);
}

FitReport safety_layer_fit(SafetyLayerModel& model, const SafetyDataset& data,
                           const nn::FitOptions& options) {
  const Vector delta = data.next_costs - data.prev_costs;
  return descend(
      model.net().flat(), options,
      [&](Vector& grad) { return model.loss(data.observations, data.actions, delta, &grad); },
      [&](const Vector& p) { model.net().set_flat(p); });
}

Vector safety_layer_project(const Vector& a_ref, const Vector& g, double c_prev, double d) {
  if (g.size() != a_ref.size()) throw std::invalid_argument("safety_layer_project: length mismatch");
  const double gg = g.squaredNorm();
  if (gg == 0.0) return clip_unit(a_ref);
  const double excess = g.dot(a_ref) + c_prev - d;
  return clip_unit(a_ref - std::max(0.0, excess / gg) * g);
}

// --------------------------------------------------------------------- USL --

UslResult usl_correct(const Vector& a_ref, const CostQFn& q_cost, double d, double eta, int iters) {
  if (!(eta > 0.0) || iters < 1) throw std::invalid_argument("usl_correct: need eta > 0 and iters >= 1");
  UslResult out{a_ref, 0};
  Vector grad(a_ref.size());
  double q = q_cost(out.action, grad);
  while (q > d && out.iterations < iters) {
    num::require_finite(grad, "cost Q action gradient");
    const double z = grad.norm() + 1e-8;
    out.action = clip_unit(out.action - (eta / z) * grad);
    ++out.iterations;
    q = q_cost(out.action, grad);
  }
  return out;
}

CostQFn cost_q_function(const nn::ScalarNet& qc_net, const Vector& obs) {
  return [&qc_net, obs](const Vector& action, Vector& grad) {
    Vector input(obs.size() + action.size());
    input << obs, action;
    double value = 0.0;
    const Vector full = qc_net.input_gradient(input, &value);
    grad = full.tail(action.size());
    return value;
  };
}

FitReport usl_fit_qc(nn::ScalarNet& qc_net, const Matrix& obs, const Matrix& actions,
                     const Vector& targets, const nn::FitOptions& options) {
  if (obs.cols() != actions.cols() || targets.size() != obs.cols()) {
    throw std::invalid_argument("usl_fit_qc: batch shapes disagree");
  }
  Matrix inputs(obs.rows() + actions.rows(), obs.cols());
  inputs << obs, actions;
  return descend(
      qc_net.flat(), options,
      [&](Vector& grad) {
        double mse = 0.0;
        grad = qc_net.mse_gradient(inputs, targets, &mse);
        return mse;
      },
      [&](const Vector& p) { qc_net.set_flat(p); });
}

}  // namespace guard::algo
