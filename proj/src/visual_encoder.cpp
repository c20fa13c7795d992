#include "iogvqa/visual_encoder.hpp"

#include <cmath>

#include "iogvqa/errors.hpp"

namespace iog {

std::vector<long> ObjectBatch::owner() const {
  std::vector<long> out(objects.rows());
  for (std::size_t i = 0; i + 1 < offsets.size(); ++i)
    for (std::size_t r = offsets[i]; r < offsets[i + 1]; ++r) out[r] = static_cast<long>(i);
  return out;
}

ObjectBatch make_object_batch(std::span<const ObjectSet* const> sets) {
  if (sets.empty()) throw ValidationError("object batch: no instances");
  const std::size_t dim = sets[0]->dim();
  std::size_t total = 0;
  for (const ObjectSet* s : sets) {
    if (s->count() == 0) throw ValidationError("object batch: instance without objects");
    if (s->dim() != dim || s->global.size() != dim) throw ShapeError("object batch: inconsistent feature width");
    total += s->count();
  }
  ObjectBatch b;
  b.objects = Matrix(total, dim);
  b.globals = Matrix(sets.size(), dim);
  b.offsets.push_back(0);
  std::size_t row = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const ObjectSet& s = *sets[i];
    for (std::size_t r = 0; r < s.count(); ++r, ++row)
      for (std::size_t d = 0; d < dim; ++d) b.objects(row, d) = s.objects(r, d);
    for (std::size_t d = 0; d < dim; ++d) b.globals(i, d) = s.global[d];
    b.offsets.push_back(row);
  }
  return b;
}

ObjectBatch make_object_batch(const ObjectSet& set) {
  const ObjectSet* p = &set;
  return make_object_batch(std::span<const ObjectSet* const>(&p, 1));
}

VisualEncoder::VisualEncoder(const std::string& name, const VisualEncoderDims& dims, Rng& rng) : dims_(dims) {
  query = Parameter(name + ".query", glorot(dims.object_dim, dims.attention_d, rng));
  key = Parameter(name + ".key", glorot(dims.object_dim, dims.attention_d, rng));
  value = Parameter(name + ".value", glorot(dims.object_dim, dims.object_dim, rng));
  conv = Linear(name + ".conv", dims.object_dim, dims.hidden, rng);
  proj = Linear(name + ".proj", dims.hidden, dims.hidden, rng);
}

Var VisualEncoder::interact(Tape& t, Var objects, std::span<const std::size_t> offsets,
                            std::vector<Matrix>* weights) {
  if (objects.cols() != dims_.object_dim)
    throw ShapeError("interact: object width " + std::to_string(objects.cols()) + ", expected " +
                     std::to_string(dims_.object_dim));
  Var q = ag::matmul(objects, t.param(query));
  Var k = ag::matmul(objects, t.param(key));
  Var v = ag::matmul(objects, t.param(value));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dims_.attention_d));
  return ag::grouped_attention(q, k, v, offsets, scale, weights);
}

Var VisualEncoder::fuse_global(Tape& t, Var regions, Var globals, std::span<const std::size_t> offsets,
                               std::vector<Matrix>* weights) {
  (void)t;
  if (globals.cols() != dims_.object_dim || regions.cols() != dims_.object_dim)
    throw ShapeError("fuse_global: feature width mismatch");
  if (offsets.size() != globals.rows() + 1 || offsets.back() != regions.rows())
    throw ShapeError("fuse_global: offsets do not match regions/globals");
  std::vector<long> owner(regions.rows());
  for (std::size_t i = 0; i + 1 < offsets.size(); ++i)
    for (std::size_t r = offsets[i]; r < offsets[i + 1]; ++r) owner[r] = static_cast<long>(i);
  const Var parts[] = {regions, ag::gather_rows(globals, owner)};
  Var spliced = ag::concat_cols(parts);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dims_.attention_d));
  return ag::grouped_attention(spliced, spliced, regions, offsets, scale, weights);
}

Var VisualEncoder::project(Tape& t, Var fused, std::span<const std::size_t> offsets) {
  if (fused.cols() != dims_.object_dim) throw ShapeError("project: feature width mismatch");
  Var per_object = ag::elu(conv(t, fused));
  Var pooled = ag::segment_mean(per_object, offsets);
  return ag::elu(proj(t, pooled));
}

Var VisualEncoder::encode(Tape& t, const ObjectBatch& batch) {
  Var objects = t.constant(batch.objects);
  Var globals = t.constant(batch.globals);
  Var regions = interact(t, objects, batch.offsets);
  Var fused = fuse_global(t, regions, globals, batch.offsets);
  return project(t, fused, batch.offsets);
}

ParamList VisualEncoder::parameters() {
  ParamList out{&query, &key, &value};
  conv.collect(out);
  proj.collect(out);
  return out;
}

}  // namespace iog
