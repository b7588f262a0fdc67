#include "adafuse/fusion.hpp"

#include <cmath>

#include "adafuse/error.hpp"
#include "adafuse/ops.hpp"

namespace adafuse {

namespace {

constexpr double kSimplexTolerance = 1e-6;

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Params head_params(std::size_t in, std::size_t out, Rng* rng) {
  Params p;
  p.add("fc1.weight", rng ? he_normal({in, kHiddenWidth}, in, *rng) : Tensor({in, kHiddenWidth}));
  p.add("fc1.bias", Tensor({kHiddenWidth}));
  p.add("fc2.weight",
        rng ? he_normal({kHiddenWidth, out}, kHiddenWidth, *rng) : Tensor({kHiddenWidth, out}));
  p.add("fc2.bias", Tensor({out}));
  return p;
}

struct RowView {
  std::size_t rows, cols;
};

RowView rows_of(const Tensor& t, const char* what) {
  if (t.rank() == 1) return {1, t.dim(0)};
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  throw DimensionError(std::string(what) + ": expected [K] or [B,K], got " + shape_string(t.shape()));
}

void require_simplex_rows(const Tensor& t, const char* what) {
  const RowView r = rows_of(t, what);
  for (std::size_t b = 0; b < r.rows; ++b) {
    double sum = 0.0;
    for (std::size_t j = 0; j < r.cols; ++j) {
      const double v = t[b * r.cols + j];
      if (!(v >= -kSimplexTolerance)) {
        throw InputError(std::string(what) + ": negative weight " + std::to_string(v));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance) {
      throw InputError(std::string(what) + ": row " + std::to_string(b) + " sums to " +
                       std::to_string(sum));
    }
  }
}

void check_posteriors(std::span<const Tensor> fs, const char* what) {
  if (fs.empty()) throw InputError(std::string(what) + ": no posteriors");
  for (const auto& f : fs) {
    if (f.shape() != fs[0].shape()) {
      throw DimensionError(std::string(what) + ": posterior shapes differ " +
                           shape_string(f.shape()) + " vs " + shape_string(fs[0].shape()));
    }
    require_simplex_rows(f, what);
  }
}

void check_gate_against(const Tensor& g, std::span<const Tensor> fs, const char* what) {
  check_posteriors(fs, what);
  require_simplex_rows(g, what);
  const RowView gr = rows_of(g, what);
  const RowView fr = rows_of(fs[0], what);
  if (gr.cols != fs.size() || gr.rows != fr.rows || g.rank() != fs[0].rank()) {
    throw DimensionError(std::string(what) + ": gate " + shape_string(g.shape()) + " for " +
                         std::to_string(fs.size()) + " posteriors of shape " +
                         shape_string(fs[0].shape()));
  }
}

}  // namespace

// --- heads --------------------------------------------------------------------

TwoLayerHead::TwoLayerHead(std::size_t input_dim, std::size_t output_dim, Params params,
                           double dropout_rate)
    : input_dim_(input_dim), output_dim_(output_dim), params_(std::move(params)) {
  set_dropout_rate(dropout_rate);
  if (params_.at("fc1.weight").shape() != Shape{input_dim_, kHiddenWidth} ||
      params_.at("fc1.bias").shape() != Shape{kHiddenWidth} ||
      params_.at("fc2.weight").shape() != Shape{kHiddenWidth, output_dim_} ||
      params_.at("fc2.bias").shape() != Shape{output_dim_}) {
    throw ConfigError("two-layer head parameters do not match " + std::to_string(input_dim_) +
                      " -> 64 -> " + std::to_string(output_dim_));
  }
}

void TwoLayerHead::set_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("head dropout rate must lie in [0,1)");
  dropout_rate_ = rate;
}

Var TwoLayerHead::forward(Tape& tape, Var input, bool training, Rng& rng) const {
  const Tensor& x = tape.value(input);
  const std::size_t width = x.rank() == 1 ? x.dim(0) : (x.rank() == 2 ? x.dim(1) : 0);
  if (width != input_dim_) {
    throw DimensionError("head expects input width " + std::to_string(input_dim_) + ", got " +
                         shape_string(x.shape()));
  }
  Var h = affine(tape, input, tape.parameter(params_, "fc1.weight"), tape.parameter(params_, "fc1.bias"));
  h = relu(tape, h);
  h = dropout(tape, h, dropout_rate_, rng, training);
  Var logits = affine(tape, h, tape.parameter(params_, "fc2.weight"), tape.parameter(params_, "fc2.bias"));
  return softmax(tape, logits);
}

GatingNet build_gate(std::size_t input_dim, std::size_t experts, Rng& rng) {
  return GatingNet(input_dim, experts, head_params(input_dim, experts, &rng));
}

GatingNet zero_gate(std::size_t input_dim, std::size_t experts) {
  return GatingNet(input_dim, experts, head_params(input_dim, experts, nullptr));
}

LateFusionHead build_late_head(std::size_t input_dim, std::size_t classes, Rng& rng) {
  return LateFusionHead(input_dim, classes, head_params(input_dim, classes, &rng));
}

LateFusionHead zero_late_head(std::size_t input_dim, std::size_t classes) {
  return LateFusionHead(input_dim, classes, head_params(input_dim, classes, nullptr));
}

// --- tensor-level fusion rules -------------------------------------------------

Tensor concat_features(std::span<const ExpertOutput> outputs) {
  if (outputs.empty()) throw InputError("concat_features: no expert outputs");
  Tape tape;
  std::vector<Var> vars;
  for (const auto& o : outputs) vars.push_back(tape.constant(o.features));
  return tape.value(concat_features(tape, vars));
}

Var concat_features(Tape& tape, std::span<const Var> features) {
  if (features.empty()) throw InputError("concat_features: no feature maps");
  const Shape first = tape.value(features[0]).shape();
  std::vector<Var> rows;
  for (Var f : features) {
    const Shape s = tape.value(f).shape();
    if (s.size() >= 3) {
      // Maps must agree on (Hh, Wh) and on batch layout.
      if (s.size() != first.size() || s[s.size() - 1] != first[first.size() - 1] ||
          s[s.size() - 2] != first[first.size() - 2] || (s.size() == 4 && s[0] != first[0])) {
        throw DimensionError("concat_features: feature map " + shape_string(s) +
                             " does not align with " + shape_string(first));
      }
      const std::size_t batch = s.size() == 4 ? s[0] : 1;
      const std::size_t flat = tape.value(f).size() / batch;
      rows.push_back(reshape(tape, f, s.size() == 4 ? Shape{batch, flat} : Shape{flat}));
    } else {
      rows.push_back(f);
    }
  }
  return concat_columns(tape, rows);
}

Tensor gate_forward(const GatingNet& gate, const Tensor& r, bool training, Rng& rng) {
  Tape tape;
  return tape.value(gate.forward(tape, tape.constant(r), training, rng));
}

Tensor mode_combine(const Tensor& g, std::span<const Tensor> posteriors) {
  check_gate_against(g, posteriors, "mode_combine");
  const RowView fr = rows_of(posteriors[0], "mode_combine");
  const std::size_t m = posteriors.size();
  Tensor out(posteriors[0].shape());
  for (std::size_t b = 0; b < fr.rows; ++b) {
    for (std::size_t i = 0; i < m; ++i) {
      const double gi = g[b * m + i];
      for (std::size_t c = 0; c < fr.cols; ++c) out[b * fr.cols + c] += gi * posteriors[i][b * fr.cols + c];
    }
  }
  return out;
}

Tensor average_fusion(std::span<const Tensor> posteriors) {
  check_posteriors(posteriors, "average_fusion");
  const double w = 1.0 / static_cast<double>(posteriors.size());
  Tensor out(posteriors[0].shape());
  for (const auto& f : posteriors) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += w * f[k];
  }
  return out;
}

Tensor switch_fusion(const Tensor& g, std::span<const Tensor> posteriors) {
  check_gate_against(g, posteriors, "switch_fusion");
  const RowView fr = rows_of(posteriors[0], "switch_fusion");
  const std::size_t m = posteriors.size();
  Tensor out(posteriors[0].shape());
  for (std::size_t b = 0; b < fr.rows; ++b) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < m; ++i) {
      if (g[b * m + i] > g[b * m + best]) best = i;
    }
    for (std::size_t c = 0; c < fr.cols; ++c) out[b * fr.cols + c] = posteriors[best][b * fr.cols + c];
  }
  return out;
}

Tensor late_fusion_forward(const LateFusionHead& head, const Tensor& r, bool training, Rng& rng) {
  Tape tape;
  return tape.value(head.forward(tape, tape.constant(r), training, rng));
}

Tensor channel_fusion_forward(const ExpertNet& net, const Tensor& stacked) {
  const std::size_t c = stacked.rank() == 3 ? stacked.dim(0) : (stacked.rank() == 4 ? stacked.dim(1) : 0);
  if (c != net.input_size().channels) {
    throw DimensionError("channel fusion: stacked input has " + std::to_string(c) +
                         " channels, network expects " + std::to_string(net.input_size().channels));
  }
  Rng unused(0);
  return expert_forward(net, stacked, false, unused).posterior;
}

// --- fused model ---------------------------------------------------------------

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::mode: return "mode";
    case Scheme::average: return "average";
    case Scheme::switching: return "switch";
    case Scheme::late: return "late";
    case Scheme::channel: return "channel";
  }
  return "?";
}

Scheme parse_scheme(std::string_view name) {
  if (name == "mode") return Scheme::mode;
  if (name == "average") return Scheme::average;
  if (name == "switch") return Scheme::switching;
  if (name == "late") return Scheme::late;
  if (name == "channel") return Scheme::channel;
  throw ConfigError("unknown fusion scheme '" + std::string(name) + "'");
}

void FusedModel::validate() const {
  if (scheme == Scheme::channel) {
    if (!channel_net) throw ConfigError("channel scheme needs a channel network");
    std::size_t c = 0;
    for (const auto& m : channel_order) c += m.channels;
    if (channel_order.empty() || c != channel_net->input_size().channels) {
      throw ConfigError("channel order '" + join_modalities(channel_order) + "' provides " +
                        std::to_string(c) + " channels, network expects " +
                        std::to_string(channel_net->input_size().channels));
    }
    return;
  }
  if (experts.empty()) throw ConfigError(scheme_name(scheme) + " scheme needs at least one expert");
  for (std::size_t i = 0; i < experts.size(); ++i) {
    if (experts[i].classes() != experts[0].classes()) {
      throw ConfigError("experts disagree on class count");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (experts[j].modality() == experts[i].modality()) {
        throw ConfigError("two experts for modality " + modality_name(experts[i].modality().id));
      }
    }
  }
  const bool needs_gate = scheme == Scheme::mode || scheme == Scheme::switching;
  if (needs_gate != gate.has_value()) {
    throw ConfigError(scheme_name(scheme) + (needs_gate ? " scheme needs a gate" : " scheme takes no gate"));
  }
  if (gate && (gate->input_dim() != feature_dim() || gate->expert_count() != experts.size())) {
    throw ConfigError("gate dimensions do not match the experts");
  }
  if ((scheme == Scheme::late) != late_head.has_value()) {
    throw ConfigError(scheme == Scheme::late ? "late scheme needs a fusion head"
                                             : scheme_name(scheme) + " scheme takes no fusion head");
  }
  if (late_head && (late_head->input_dim() != feature_dim() || late_head->classes() != classes())) {
    throw ConfigError("late fusion head dimensions do not match the experts");
  }
}

std::vector<Modality> FusedModel::modalities() const {
  if (scheme == Scheme::channel) return channel_order;
  std::vector<Modality> out;
  for (const auto& e : experts) out.push_back(e.modality());
  return out;
}

std::size_t FusedModel::classes() const {
  if (scheme == Scheme::channel && channel_net) return channel_net->classes();
  return experts.empty() ? 0 : experts[0].classes();
}

std::size_t FusedModel::feature_dim() const {
  std::size_t d = 0;
  for (const auto& e : experts) d += e.feature_shape().flat();
  return d;
}

const Tensor& WindowBatch::get(ModalityId id) const {
  const auto& t = inputs_[static_cast<std::size_t>(id)];
  if (!t) throw InputError("window is missing modality '" + modality_name(id) + "'");
  return *t;
}

Tensor WindowBatch::stacked(std::span<const Modality> order) const {
  if (order.empty()) throw InputError("stacked: empty channel order");
  const Tensor& first = get(order[0].id);
  const bool batched = first.rank() == 4;
  const std::size_t batch = batched ? first.dim(0) : 1;
  const std::size_t plane = first.dim(first.rank() - 1) * first.dim(first.rank() - 2);
  std::size_t channels = 0;
  for (const auto& m : order) {
    const Tensor& t = get(m.id);
    if (t.rank() != first.rank() || t.dim(t.rank() - 1) != first.dim(first.rank() - 1) ||
        t.dim(t.rank() - 2) != first.dim(first.rank() - 2) || (batched && t.dim(0) != batch)) {
      throw DimensionError("stacked: modality " + modality_name(m.id) + " has shape " +
                           shape_string(t.shape()));
    }
    channels += t.dim(batched ? 1 : 0);
  }
  std::vector<double> data;
  data.reserve(batch * channels * plane);
  for (std::size_t b = 0; b < batch; ++b) {
    for (const auto& m : order) {
      const Tensor& t = get(m.id);
      const std::size_t per = t.size() / batch;
      data.insert(data.end(), t.values().begin() + static_cast<std::ptrdiff_t>(b * per),
                  t.values().begin() + static_cast<std::ptrdiff_t>((b + 1) * per));
    }
  }
  const std::size_t h = first.dim(first.rank() - 2), w = first.dim(first.rank() - 1);
  return batched ? Tensor({batch, channels, h, w}, std::move(data))
                 : Tensor({channels, h, w}, std::move(data));
}

std::vector<ExpertOutput> run_experts(const FusedModel& model, const WindowBatch& window,
                                      bool training, Rng& rng) {
  std::vector<ExpertOutput> out;
  out.reserve(model.experts.size());
  for (const auto& e : model.experts) {
    Tape tape;
    const ExpertVars v = expert_forward(tape, e, tape.constant(window.get(e.modality().id)), training, rng);
    // The head sees dropout(h) in training; report that map so r(x) matches it.
    const Tensor& h = tape.value(v.features);
    out.push_back({tape.value(v.head_input).reshaped(h.shape()), tape.value(v.posterior)});
  }
  return out;
}

FusedOutput fuse(const FusedModel& model, std::vector<ExpertOutput> experts,
                 const WindowBatch& window, bool training, Rng& rng) {
  FusedOutput out;
  std::vector<Tensor> posts;
  for (const auto& e : experts) posts.push_back(e.posterior);
  switch (model.scheme) {
    case Scheme::average:
      out.fused = average_fusion(posts);
      break;
    case Scheme::mode:
    case Scheme::switching: {
      const Tensor r = concat_features(experts);
      Tensor g = gate_forward(*model.gate, r, training, rng);
      out.fused = model.scheme == Scheme::mode ? mode_combine(g, posts) : switch_fusion(g, posts);
      out.gate = std::move(g);
      break;
    }
    case Scheme::late:
      out.fused = late_fusion_forward(*model.late_head, concat_features(experts), training, rng);
      break;
    case Scheme::channel: {
      const Tensor stacked = window.stacked(model.channel_order);
      out.fused = expert_forward(*model.channel_net, stacked, training, rng).posterior;
      break;
    }
  }
  out.experts = std::move(experts);
  return out;
}

FusedOutput fused_forward(const FusedModel& model, const WindowBatch& window, bool training,
                          Rng& rng) {
  model.validate();
  return fuse(model, run_experts(model, window, training, rng), window, training, rng);
}

}  // namespace adafuse
