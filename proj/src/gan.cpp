#include "iogvqa/gan.hpp"

#include <cmath>

#include "iogvqa/errors.hpp"

namespace iog {

FeatureGan::FeatureGan(const std::string& name, const GanDims& dims, Rng& rng)
    : t_qv(name + ".t_qv", dims.question_dim, dims.visual_dim, rng),
      t_vq(name + ".t_vq", dims.visual_dim, dims.question_dim, rng),
      gen_in(name + ".gen_in", dims.noise_dim + dims.visual_dim, dims.hidden, rng),
      gen_out(name + ".gen_out", dims.hidden, dims.visual_dim, rng),
      disc_hidden(name + ".disc_hidden", dims.visual_dim, dims.hidden, rng),
      disc_out(name + ".disc_out", dims.hidden, 1, rng),
      dims_(dims) {}

Var FeatureGan::transform_q_to_v(Tape& t, Var v3) {
  if (v3.cols() != dims_.question_dim) throw ShapeError("T_q->v: input width mismatch");
  return t_qv(t, v3);
}

Var FeatureGan::transform_v_to_q(Tape& t, Var v1) {
  if (v1.cols() != dims_.visual_dim) throw ShapeError("T_v->q: input width mismatch");
  return t_vq(t, v1);
}

Var FeatureGan::generate(Tape& t, Var noise, Var v3_prime, Var v1) {
  if (noise.cols() != dims_.noise_dim) throw ShapeError("generator: noise width mismatch");
  if (v3_prime.cols() != dims_.visual_dim || v1.cols() != dims_.visual_dim)
    throw ShapeError("generator: feature width mismatch");
  if (noise.rows() != v3_prime.rows() || v1.rows() != v3_prime.rows())
    throw ShapeError("generator: batch size mismatch");
  const Var parts[] = {noise, v3_prime};
  Var h = ag::elu(gen_in(t, ag::concat_cols(parts)));
  return ag::add(v1, ag::tanh(gen_out(t, h)));
}

Var FeatureGan::discriminate(Tape& t, Var feature) {
  if (feature.cols() != dims_.visual_dim) throw ShapeError("discriminator: input width mismatch");
  Var logit = disc_out(t, ag::elu(disc_hidden(t, feature)));
  return ag::clamp(ag::sigmoid(logit), kDiscEps, 1.0 - kDiscEps);
}

void FeatureGan::set_identity_transformers() {
  if (dims_.visual_dim != dims_.question_dim) throw ShapeError("identity transformers need square maps");
  t_qv.weight.value = Matrix::identity(dims_.visual_dim);
  t_vq.weight.value = Matrix::identity(dims_.visual_dim);
  t_qv.bias.value.fill(0.0);
  t_vq.bias.value.fill(0.0);
}

ParamList FeatureGan::transformer_parameters() {
  ParamList p;
  t_qv.collect(p);
  t_vq.collect(p);
  return p;
}

ParamList FeatureGan::generator_parameters() {
  ParamList p;
  gen_in.collect(p);
  gen_out.collect(p);
  return p;
}

ParamList FeatureGan::discriminator_parameters() {
  ParamList p;
  disc_hidden.collect(p);
  disc_out.collect(p);
  return p;
}

ParamList FeatureGan::parameters() {
  ParamList p = transformer_parameters();
  for (Parameter* x : generator_parameters()) p.push_back(x);
  for (Parameter* x : discriminator_parameters()) p.push_back(x);
  return p;
}

double generator_loss(std::span<const double> d) {
  if (d.empty()) throw ValidationError("generator_loss: empty batch");
  double s = 0.0;
  for (double x : d) s += std::log(x);
  return -s / static_cast<double>(d.size());
}

double discriminator_loss(std::span<const double> d_real, std::span<const double> d_fake) {
  if (d_real.empty() || d_fake.empty()) throw ValidationError("discriminator_loss: empty batch");
  double r = 0.0, f = 0.0;
  for (double x : d_real) r += std::log(x);
  for (double x : d_fake) f += std::log(1.0 - x);
  return -r / static_cast<double>(d_real.size()) - f / static_cast<double>(d_fake.size());
}

TransformerLosses transformer_losses(const Matrix& v1, const Matrix& v3, const Matrix& v3_prime,
                                     const Matrix& v1_prime) {
  if (!v1.same_shape(v3_prime) || !v3.same_shape(v1_prime) || v1.rows() != v3.rows() || v1.rows() == 0)
    throw ShapeError("transformer_losses: shape mismatch");
  auto mean_sq = [](const Matrix& a, const Matrix& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.rows());
  };
  return {mean_sq(v1, v3_prime), mean_sq(v3, v1_prime)};
}

double gan_total_loss(double l_d, double l_g, double l_qv, double l_vq, double lambda1, double lambda2) {
  return l_d + l_g + lambda1 * l_qv + lambda2 * l_vq;
}

namespace ag {

Var generator_loss(Var d_of_v2) { return scale(mean(log(d_of_v2)), -1.0); }

Var discriminator_loss(Var d_real, Var d_fake) {
  Tape& t = *d_real.tape;
  Var ones = t.constant(Matrix(d_fake.rows(), d_fake.cols(), 1.0));
  Var real_term = mean(log(d_real));
  Var fake_term = mean(log(sub(ones, d_fake)));
  return scale(add(real_term, fake_term), -1.0);
}

}  // namespace ag
}  // namespace iog
