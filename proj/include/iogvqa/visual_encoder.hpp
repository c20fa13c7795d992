#pragma once

#include <span>
#include <string>
#include <vector>

#include "iogvqa/autograd.hpp"
#include "iogvqa/dataset.hpp"
#include "iogvqa/layers.hpp"

// Object Interaction Self-Attention (OISA): objects exchange information by
// scaled dot-product attention, are re-attended together with the global
// feature, then a pointwise 1-D convolution + ELU, mean pooling over objects
// and an ELU projection give the visual feature F_V.

namespace iog {

struct ObjectBatch {
  Matrix objects;                    // all objects of the batch, concatenated
  Matrix globals;                    // one row per instance
  std::vector<std::size_t> offsets;  // instance i owns objects [offsets[i], offsets[i+1])

  std::size_t instances() const { return globals.rows(); }
  /// Instance index of every object row.
  std::vector<long> owner() const;
};

ObjectBatch make_object_batch(std::span<const ObjectSet* const> sets);
ObjectBatch make_object_batch(const ObjectSet& set);

struct VisualEncoderDims {
  std::size_t object_dim = 0;
  std::size_t attention_d = 64;
  std::size_t hidden = 1024;
};

class VisualEncoder {
 public:
  VisualEncoder() = default;
  VisualEncoder(const std::string& name, const VisualEncoderDims& dims, Rng& rng);

  const VisualEncoderDims& dims() const { return dims_; }

  /// F_R: every object attends over the objects of its own instance.
  Var interact(Tape& t, Var objects, std::span<const std::size_t> offsets, std::vector<Matrix>* weights = nullptr);
  /// F^_R = softmax([F_R ; F_G] [F_R ; F_G]^T / sqrt(d)) F_R per instance.
  Var fuse_global(Tape& t, Var regions, Var globals, std::span<const std::size_t> offsets,
                  std::vector<Matrix>* weights = nullptr);
  /// F_V (instances x hidden).
  Var project(Tape& t, Var fused, std::span<const std::size_t> offsets);
  Var encode(Tape& t, const ObjectBatch& batch);

  ParamList parameters();

  Parameter query;  // object_dim x attention_d
  Parameter key;
  Parameter value;  // object_dim x object_dim
  Linear conv;      // width-1 convolution over the object axis: object_dim -> hidden
  Linear proj;      // hidden -> hidden

 private:
  VisualEncoderDims dims_;
};

}  // namespace iog
