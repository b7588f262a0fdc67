#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adafuse/experts.hpp"
#include "adafuse/params.hpp"
#include "adafuse/rng.hpp"
#include "adafuse/tape.hpp"

namespace adafuse {

inline constexpr std::size_t kHiddenWidth = 64;

/// affine(in->64) relu [dropout] affine(64->out) softmax.
class TwoLayerHead {
 public:
  TwoLayerHead() = default;
  TwoLayerHead(std::size_t input_dim, std::size_t output_dim, Params params,
               double dropout_rate = 0.5);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return output_dim_; }
  double dropout_rate() const { return dropout_rate_; }
  void set_dropout_rate(double rate);
  Params& params() { return params_; }
  const Params& params() const { return params_; }

  /// [D] -> [out] or [B,D] -> [B,out]; the softmax output.
  Var forward(Tape& tape, Var input, bool training, Rng& rng) const;

 protected:
  std::size_t input_dim_ = 0;
  std::size_t output_dim_ = 0;
  Params params_;
  double dropout_rate_ = 0.5;
};

/// Maps r(x) to expert weights g on the simplex.
class GatingNet : public TwoLayerHead {
 public:
  using TwoLayerHead::TwoLayerHead;
  std::size_t expert_count() const { return output_dim_; }
};

/// Late-fusion classifier on r(x).
class LateFusionHead : public TwoLayerHead {
 public:
  using TwoLayerHead::TwoLayerHead;
  std::size_t classes() const { return output_dim_; }
};

GatingNet build_gate(std::size_t input_dim, std::size_t experts, Rng& rng);
GatingNet zero_gate(std::size_t input_dim, std::size_t experts);
LateFusionHead build_late_head(std::size_t input_dim, std::size_t classes, Rng& rng);
LateFusionHead zero_late_head(std::size_t input_dim, std::size_t classes);

// --- Fusion rules on plain tensors ------------------------------------------

/// Stacks feature maps along the filter axis and flattens: length sum Nh_i*Hh*Wh.
Tensor concat_features(std::span<const ExpertOutput> outputs);

/// Tape form for [B,Nh,Hh,Wh] / [Nh,Hh,Wh] maps or already-flat [B,D] rows.
Var concat_features(Tape& tape, std::span<const Var> features);

Tensor gate_forward(const GatingNet& gate, const Tensor& r, bool training, Rng& rng);

/// F = sum_i g_i f_i. g and every f_i must be probability vectors (tolerance 1e-6).
Tensor mode_combine(const Tensor& g, std::span<const Tensor> posteriors);

/// F = (1/M) sum_i f_i.
Tensor average_fusion(std::span<const Tensor> posteriors);

/// F = f_argmax(g), ties to the lowest index.
Tensor switch_fusion(const Tensor& g, std::span<const Tensor> posteriors);

Tensor late_fusion_forward(const LateFusionHead& head, const Tensor& r, bool training, Rng& rng);

/// One pass of a multi-channel expert over stacked modalities.
Tensor channel_fusion_forward(const ExpertNet& net, const Tensor& stacked);

// --- Fused model ---------------------------------------------------------------

enum class Scheme { mode, average, switching, late, channel };

std::string scheme_name(Scheme s);
Scheme parse_scheme(std::string_view name);

/// A fusion scheme over per-modality experts.
///
/// mode/switch need `gate`; late needs `late_head`; channel needs
/// `channel_net` plus `channel_order` (experts may then be empty).
struct FusedModel {
  Scheme scheme = Scheme::average;
  std::vector<ExpertNet> experts;
  std::optional<GatingNet> gate;
  std::optional<LateFusionHead> late_head;
  std::optional<ExpertNet> channel_net;
  std::vector<Modality> channel_order;

  /// Throws ConfigError when scheme parameters are missing or inconsistent.
  void validate() const;
  std::vector<Modality> modalities() const;
  std::size_t classes() const;
  std::size_t feature_dim() const;
};

/// Per-modality expert inputs for one window ([C,H,W]) or a batch ([B,C,H,W]).
class WindowBatch {
 public:
  void set(ModalityId id, Tensor t) { inputs_[static_cast<std::size_t>(id)] = std::move(t); }
  bool has(ModalityId id) const { return inputs_[static_cast<std::size_t>(id)].has_value(); }
  /// Throws InputError naming the modality when absent.
  const Tensor& get(ModalityId id) const;
  /// Channel-stacked input in the given order.
  Tensor stacked(std::span<const Modality> order) const;

 private:
  std::array<std::optional<Tensor>, kModalityCount> inputs_;
};

struct FusedOutput {
  Tensor fused;                       // [C] or [B,C]
  std::optional<Tensor> gate;         // [M] or [B,M] for mode/switch
  std::vector<ExpertOutput> experts;  // per expert, in model order
};

/// Runs every expert of `model` on `window`.
std::vector<ExpertOutput> run_experts(const FusedModel& model, const WindowBatch& window,
                                      bool training, Rng& rng);

/// Applies the model's scheme to precomputed expert outputs. For the channel
/// scheme `window` supplies the stacked input; otherwise it is unused.
FusedOutput fuse(const FusedModel& model, std::vector<ExpertOutput> experts,
                 const WindowBatch& window, bool training, Rng& rng);

FusedOutput fused_forward(const FusedModel& model, const WindowBatch& window, bool training,
                          Rng& rng);

}  // namespace adafuse
