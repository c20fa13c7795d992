#pragma once

#include <span>
#include <vector>

#include "iogvqa/dataset.hpp"

namespace iog {

struct LossWeights {
  double alpha1 = 0.5;
  double alpha2 = 0.3;
  double distill_v = 0.5;
  double distill_q = 0.5;
  std::vector<double> class_weights;

  void validate() const;
};

struct LossBundle {
  double wce = 0.0;
  double distill = 0.0;
  double gan = 0.0;
  double total = 0.0;
  // gan components
  double l_d = 0.0;
  double l_g = 0.0;
  double l_qv = 0.0;
  double l_vq = 0.0;
};

/// -sum_i w_i [y_i log p_i + (1 - y_i) log(1 - p_i)]
double weighted_cross_entropy(std::span<const double> y_true, std::span<const double> y_pred,
                              std::span<const double> w);

/// sum_i p_i log(p_i / q_i), 0 log 0 = 0, q clamped at 1e-9.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// distill_v KL(p_t_v || p_s) + distill_q KL(p_t_q || p_s)
double distill_loss(std::span<const double> p_t_v, std::span<const double> p_t_q, std::span<const double> p_s,
                    const LossWeights& weights);

/// l_gan + alpha1 l_wce + alpha2 l_distill
double total_loss(double l_gan, double l_wce, double l_distill, double alpha1, double alpha2);

/// Fills `total` from the other fields.
LossBundle make_bundle(double wce, double distill, double l_d, double l_g, double l_qv, double l_vq,
                       double lambda1, double lambda2, double alpha1, double alpha2);

/// Inverse answer frequency (best answer per instance), normalised to mean 1
/// and clipped to [0.1, 10]. Unseen answers take the upper clip.
std::vector<double> class_weights(const Dataset& train);

}  // namespace iog
