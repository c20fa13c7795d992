#pragma once

#include <span>
#include <string>

#include "iogvqa/autograd.hpp"
#include "iogvqa/layers.hpp"

// Feature-level adversarial debiasing: feature transformers between the
// question and visual spaces, a generator of disturbance features, and a
// discriminator between real and disturbed visual features.

namespace iog {

/// Discriminator outputs are clamped to [kDiscEps, 1 - kDiscEps] before any log.
inline constexpr double kDiscEps = 1e-7;

struct GanDims {
  std::size_t visual_dim = 0;
  std::size_t question_dim = 0;
  std::size_t noise_dim = 2048;
  std::size_t hidden = 1024;
};

class FeatureGan {
 public:
  FeatureGan() = default;
  FeatureGan(const std::string& name, const GanDims& dims, Rng& rng);

  const GanDims& dims() const { return dims_; }

  /// V3' = T_{q->v}(V3)
  Var transform_q_to_v(Tape& t, Var v3);
  /// V1' = T_{v->q}(V1)
  Var transform_v_to_q(Tape& t, Var v1);
  /// V2 = V1 + tanh(ELU([noise ; V3'] W1 + b1) W2 + b2)
  Var generate(Tape& t, Var noise, Var v3_prime, Var v1);
  /// Clamped D(x) in (0, 1), one row per sample.
  Var discriminate(Tape& t, Var feature);

  /// Square transformers start as the identity map (zero bias).
  void set_identity_transformers();

  ParamList transformer_parameters();
  ParamList generator_parameters();
  ParamList discriminator_parameters();
  ParamList parameters();

  Linear t_qv, t_vq;
  Linear gen_in, gen_out;
  Linear disc_hidden, disc_out;

 private:
  GanDims dims_;
};

/// -mean(log d)
double generator_loss(std::span<const double> d_of_v2);
/// -mean(log d_real) - mean(log(1 - d_fake))
double discriminator_loss(std::span<const double> d_real, std::span<const double> d_fake);
/// {mean ||v1 - T_qv(v3)||^2, mean ||v3 - T_vq(v1)||^2} from precomputed transforms.
struct TransformerLosses {
  double q_to_v = 0.0;
  double v_to_q = 0.0;
};
TransformerLosses transformer_losses(const Matrix& v1, const Matrix& v3, const Matrix& v3_prime,
                                     const Matrix& v1_prime);
/// L_D + L_G + lambda1 L_qv + lambda2 L_vq
double gan_total_loss(double l_d, double l_g, double l_qv, double l_vq, double lambda1, double lambda2);

namespace ag {
Var generator_loss(Var d_of_v2);
Var discriminator_loss(Var d_real, Var d_fake);
}  // namespace ag

}  // namespace iog
