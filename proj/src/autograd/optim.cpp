#include "protofuse/autograd/optim.hpp"

#include <cmath>
#include <numbers>

namespace protofuse::ag {

double ComponentRates::rate_for(const std::string& name) const {
  if (name.rfind("joint.", 0) == 0) return attention;
  if (name.rfind("head.", 0) == 0) return head;
  return encoder;
}

void AdamW::step(ParamStore& params, const RateFn& lr_for) {
  for (auto& [name, var] : params.entries()) {
    if (!var.has_grad()) continue;
    const double lr = lr_for(name);
    Matrix& p = var.mutable_value();
    const Matrix& g = var.node()->grad;
    auto& slot = slots_[name];
    if (slot.m.rows() != p.rows() || slot.m.cols() != p.cols()) {
      Matrix m = Matrix::Zero(p.rows(), p.cols());
      Matrix v = Matrix::Zero(p.rows(), p.cols());
      if (slot.m.cols() == p.cols() && slot.m.rows() <= p.rows()) {
        m.topRows(slot.m.rows()) = slot.m;
        v.topRows(slot.v.rows()) = slot.v;
      }
      slot.m = std::move(m);
      slot.v = std::move(v);
    }
    ++slot.step;
    slot.m = cfg_.beta1 * slot.m + (1.0 - cfg_.beta1) * g;
    slot.v = cfg_.beta2 * slot.v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(slot.step));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(slot.step));
    p *= (1.0 - lr * cfg_.weight_decay);
    p.array() -= lr * (slot.m.array() / bc1) / ((slot.v.array() / bc2).sqrt() + cfg_.eps);
  }
}

void sgd_step(ParamStore& params, const RateFn& lr_for) {
  for (auto& [name, var] : params.entries()) {
    if (!var.has_grad()) continue;
    var.mutable_value() -= lr_for(name) * var.node()->grad;
  }
}

double cosine_annealing(double peak, double floor, std::size_t step, std::size_t total) {
  if (total == 0) return peak;
  const double t = static_cast<double>(std::min(step, total)) / static_cast<double>(total);
  return floor + (peak - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace protofuse::ag
