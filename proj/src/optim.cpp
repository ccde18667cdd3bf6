#include "dgerc/optim.hpp"

#include <cmath>

namespace dgerc {

template <std::floating_point T>
Adam<T>::Adam(ParamStore<T>& store, AdamOptions opt) : store_(&store), opt_(opt) {
  for (const auto* p : store.all()) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

template <std::floating_point T>
void Adam<T>::step() {
  ++t_;
  const double b1 = opt_.beta1, b2 = opt_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  auto params = store_->all();
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& w = params[k]->value.values();
    const auto& g = params[k]->grad.values();
    auto& m = m_[k].values();
    auto& v = v_[k].values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g[i]) + opt_.weight_decay * static_cast<double>(w[i]);
      const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
      const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double step = opt_.lr * (mi / c1) / (std::sqrt(vi / c2) + opt_.eps);
      w[i] = static_cast<T>(static_cast<double>(w[i]) - step);
    }
  }
}

template <std::floating_point T>
void Adam<T>::restore(std::uint64_t steps, std::vector<Tensor<T>> m, std::vector<Tensor<T>> v) {
  if (m.size() != m_.size() || v.size() != v_.size())
    throw ConfigError("optimizer state has " + std::to_string(m.size()) + " tensors, model has " +
                      std::to_string(m_.size()));
  for (std::size_t k = 0; k < m.size(); ++k)
    if (m[k].shape() != m_[k].shape() || v[k].shape() != v_[k].shape())
      throw ConfigError("optimizer moment shape mismatch at tensor " + std::to_string(k));
  t_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

template class Adam<float>;
template class Adam<double>;

}  // namespace dgerc
