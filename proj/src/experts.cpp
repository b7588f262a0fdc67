#include "adafuse/experts.hpp"

#include <cmath>

#include "adafuse/error.hpp"
#include "adafuse/ops.hpp"

namespace adafuse {

namespace {

struct ConvSpec {
  const char* name;
  std::size_t out, kernel, pad;
};

constexpr ConvSpec kConvs[] = {{"conv1", 16, 5, 2}, {"conv2", 32, 5, 2}, {"conv3", 64, 3, 1}};

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace

ExpertNet::ExpertNet(Modality modality, InputSize input, std::size_t classes, Params params,
                     double dropout_rate)
    : modality_(modality), input_(input), classes_(classes), params_(std::move(params)) {
  set_dropout_rate(dropout_rate);
  if (input_.height % 8 != 0 || input_.width % 8 != 0 || input_.height == 0 || input_.width == 0) {
    throw ConfigError("expert input " + std::to_string(input_.height) + "x" +
                      std::to_string(input_.width) + " is not divisible by 8");
  }
  std::size_t c_in = input_.channels;
  for (const auto& conv : kConvs) {
    const std::string n = conv.name;
    if (params_.at(n + ".weight").shape() != Shape{conv.out, c_in, conv.kernel, conv.kernel} ||
        params_.at(n + ".bias").shape() != Shape{conv.out}) {
      throw ConfigError("expert parameter shapes do not match the architecture at " + n);
    }
    c_in = conv.out;
  }
  if (params_.at("fc.weight").shape() != Shape{feature_shape().flat(), classes_} ||
      params_.at("fc.bias").shape() != Shape{classes_}) {
    throw ConfigError("expert classifier shape does not match " + std::to_string(classes_) +
                      " classes");
  }
}

FeatureShape ExpertNet::feature_shape() const {
  return {kConvs[2].out, input_.height / 8, input_.width / 8};
}

void ExpertNet::set_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("expert dropout rate must lie in [0,1)");
  dropout_rate_ = rate;
}

ExpertNet build_expert(Modality modality, InputSize input, std::size_t classes, Rng& rng) {
  if (input.height == 0 || input.width == 0 || input.height % 8 != 0 || input.width % 8 != 0) {
    throw ConfigError("expert input " + std::to_string(input.height) + "x" +
                      std::to_string(input.width) + " is not divisible by 8");
  }
  if (input.channels != modality.channels) {
    throw ConfigError("expert input has " + std::to_string(input.channels) + " channels but " +
                      modality_name(modality.id) + " provides " + std::to_string(modality.channels));
  }
  if (classes < 2) throw ConfigError("expert needs at least two classes");
  Params p;
  std::size_t c_in = input.channels;
  for (const auto& conv : kConvs) {
    const std::string n = conv.name;
    p.add(n + ".weight", he_normal({conv.out, c_in, conv.kernel, conv.kernel},
                                   c_in * conv.kernel * conv.kernel, rng));
    p.add(n + ".bias", Tensor({conv.out}));
    c_in = conv.out;
  }
  const std::size_t flat = c_in * (input.height / 8) * (input.width / 8);
  p.add("fc.weight", he_normal({flat, classes}, flat, rng));
  p.add("fc.bias", Tensor({classes}));
  return ExpertNet(modality, input, classes, std::move(p));
}

Var expert_trunk(Tape& tape, const ExpertNet& net, Var x) {
  const Shape& s = tape.value(x).shape();
  const InputSize& in = net.input_size();
  const bool single = s == Shape{in.channels, in.height, in.width};
  const bool batch = s.size() == 4 && s[1] == in.channels && s[2] == in.height && s[3] == in.width;
  if (!single && !batch) {
    throw DimensionError("expert (" + modality_name(net.modality().id) + ") expects input [" +
                         std::to_string(in.channels) + "," + std::to_string(in.height) + "," +
                         std::to_string(in.width) + "], got " + shape_string(s));
  }
  Var h = x;
  for (const auto& conv : kConvs) {
    const std::string n = conv.name;
    h = conv2d(tape, h, tape.parameter(net.params(), n + ".weight"),
               tape.parameter(net.params(), n + ".bias"), 1, conv.pad);
    h = relu(tape, h);
    h = maxpool2d(tape, h, 2, 2);
  }
  return h;
}

std::pair<Var, Var> expert_head(Tape& tape, const ExpertNet& net, Var features, bool training,
                                Rng& rng) {
  const Shape& s = tape.value(features).shape();
  const bool single = s.size() == 3;
  const std::size_t rows = single ? 1 : s[0];
  const std::size_t flat = net.feature_shape().flat();
  if (tape.value(features).size() != rows * flat) {
    throw DimensionError("expert head expects " + std::to_string(flat) + " features per sample, got " +
                         shape_string(s));
  }
  Var v = reshape(tape, features, {rows, flat});
  v = dropout(tape, v, net.dropout_rate(), rng, training);
  Var logits = affine(tape, v, tape.parameter(net.params(), "fc.weight"),
                      tape.parameter(net.params(), "fc.bias"));
  Var post = softmax(tape, logits);
  if (single) post = reshape(tape, post, {net.classes()});
  return {v, post};
}

ExpertVars expert_forward(Tape& tape, const ExpertNet& net, Var x, bool training, Rng& rng) {
  const Var features = expert_trunk(tape, net, x);
  const auto [head_input, posterior] = expert_head(tape, net, features, training, rng);
  return {features, head_input, posterior};
}

ExpertOutput expert_forward(const ExpertNet& net, const Tensor& x, bool training, Rng& rng) {
  Tape tape;
  const ExpertVars v = expert_forward(tape, net, tape.constant(x), training, rng);
  return {tape.value(v.features), tape.value(v.posterior)};
}

}  // namespace adafuse
