/**
 * Copyright 2026 The ASQ Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "asq/model.hpp"

#include <cmath>

#include "asq/rng.hpp"

namespace asq::model {

std::string_view arch_name(Arch arch) { return arch == Arch::tinynet ? "tinynet" : "resnet20"; }

Arch parse_arch(std::string_view name) {
  if (name == "tinynet") return Arch::tinynet;
  if (name == "resnet20") return Arch::resnet20;
  fail(ErrorKind::invalid_argument, "unknown architecture '" + std::string(name) + "' (expected tinynet, resnet20)");
}

Tensor BatchNorm::forward(const Tensor& x, bool batch_stats) {
  if (batch_stats) return ops::batchnorm_train(x, gamma, beta, running_mean, running_var);
  return ops::batchnorm_inference(x, running_mean, running_var, gamma, beta);
}

namespace {

qat::QLayer make_conv(const std::string& name, std::int64_t cin, std::int64_t cout, std::int64_t k, std::int64_t stride,
                      std::uint64_t seed) {
  qat::QLayer l;
  l.name = name;
  l.kind = qat::LayerKind::conv2d;
  l.geometry = {stride, k / 2};
  Rng rng(derive_seed(seed, name));
  const double sd = std::sqrt(2.0 / static_cast<double>(cin * k * k));
  l.weight = Tensor(Shape{cout, cin, k, k});
  for (auto& v : l.weight.data()) v = normal(rng, 0.0, sd);
  l.weight.set_requires_grad(true);
  return l;
}

qat::QLayer make_linear(const std::string& name, std::int64_t in, std::int64_t out, std::uint64_t seed) {
  qat::QLayer l;
  l.name = name;
  l.kind = qat::LayerKind::linear;
  Rng rng(derive_seed(seed, name));
  const double sd = std::sqrt(1.0 / static_cast<double>(in));
  l.weight = Tensor(Shape{out, in});
  for (auto& v : l.weight.data()) v = normal(rng, 0.0, sd);
  l.weight.set_requires_grad(true);
  l.bias = Tensor(Shape{out});
  l.bias.set_requires_grad(true);
  return l;
}

BatchNorm make_bn(const std::string& name, std::int64_t c) {
  BatchNorm bn{name, Tensor(Shape{c}, 1.0), Tensor(Shape{c}), Tensor(Shape{c}), Tensor(Shape{c}, 1.0)};
  bn.gamma.set_requires_grad(true);
  bn.beta.set_requires_grad(true);
  return bn;
}

std::string block_prefix(int stage, int block) {
  return "layer" + std::to_string(stage) + "." + std::to_string(block) + ".";
}

void check_spec(const ModelSpec& spec) {
  if (spec.in_channels < 1 || spec.classes < 2 || spec.width < 1)
    fail(ErrorKind::invalid_argument, "model needs in_channels >= 1, classes >= 2, width >= 1");
  if (spec.image_size < 8) fail(ErrorKind::invalid_argument, "model needs image_size >= 8");
}

double meta(const std::vector<NamedTensor>& state, const std::string& key) {
  return find_tensor(state, "meta." + key)[0];
}

}  // namespace

Model make_float_model(const ModelSpec& spec, std::uint64_t seed) {
  check_spec(spec);
  Model m;
  m.spec = spec;
  m.policy.scheme = qat::Scheme::float_model;
  const auto w = spec.width;
  if (spec.arch == Arch::tinynet) {
    const std::int64_t chans[5] = {spec.in_channels, w, 2 * w, 2 * w, 4 * w};
    for (int i = 0; i < 4; ++i) {
      m.layers.push_back(make_conv("conv" + std::to_string(i + 1), chans[i], chans[i + 1], 3, i == 0 ? 1 : 2, seed));
      m.norms.push_back(make_bn("bn" + std::to_string(i + 1), chans[i + 1]));
    }
    m.layers.push_back(make_linear("fc", 4 * w, spec.classes, seed));
  } else {
    m.layers.push_back(make_conv("conv1", spec.in_channels, w, 3, 1, seed));
    m.norms.push_back(make_bn("bn1", w));
    std::int64_t cin = w;
    for (int stage = 1; stage <= 3; ++stage) {
      const std::int64_t cout = w << (stage - 1);
      for (int block = 0; block < 3; ++block) {
        const auto p = block_prefix(stage, block);
        const std::int64_t stride = (stage > 1 && block == 0) ? 2 : 1;
        m.layers.push_back(make_conv(p + "conv1", cin, cout, 3, stride, seed));
        m.norms.push_back(make_bn(p + "bn1", cout));
        m.layers.push_back(make_conv(p + "conv2", cout, cout, 3, 1, seed));
        m.norms.push_back(make_bn(p + "bn2", cout));
        cin = cout;
      }
    }
    m.layers.push_back(make_linear("fc", 4 * w, spec.classes, seed));
  }
  return m;
}

Tensor Model::check(const Tensor& t, const std::string& name) {
  if (check_finite_ && nonfinite_.empty() && !t.all_finite()) nonfinite_ = name;
  return t;
}

Tensor Model::forward(const Tensor& x, bool training, std::vector<Tensor>* block_outputs) {
  if (x.rank() != 4 || x.dim(1) != spec.in_channels)
    fail(ErrorKind::dimension, "model expects [N x " + std::to_string(spec.in_channels) + " x H x W] input, got " +
                                   shape_str(x.shape()));
  const bool batch_stats = training && bn_batch_stats;
  auto conv_bn = [&](std::size_t li, std::size_t bi, const Tensor& in) {
    Tensor y = check(layers[li].forward(in, training), layers[li].name);
    return check(norms[bi].forward(y, batch_stats), norms[bi].name);
  };
  if (block_outputs) block_outputs->clear();
  Tensor h;
  if (spec.arch == Arch::tinynet) {
    h = x;
    for (std::size_t i = 0; i < 4; ++i) {
      h = ops::relu(conv_bn(i, i, h));
      if (block_outputs) block_outputs->push_back(h.detach());
    }
  } else {
    h = ops::relu(conv_bn(0, 0, x));
    std::size_t li = 1;
    for (int stage = 1; stage <= 3; ++stage)
      for (int block = 0; block < 3; ++block) {
        const Tensor in = h;
        Tensor y = ops::relu(conv_bn(li, li, in));
        y = conv_bn(li + 1, li + 1, y);
        const std::int64_t cout = layers[li + 1].weight.dim(0);
        const std::int64_t stride = layers[li].geometry.stride;
        const Tensor shortcut = (stride == 1 && in.dim(1) == cout) ? in : ops::shortcut_pad(in, stride, cout);
        h = ops::relu(ops::add(y, shortcut));
        if (block_outputs) block_outputs->push_back(h.detach());
        li += 2;
      }
  }
  return check(layers.back().forward(ops::global_avg_pool(h), training), layers.back().name);
}

void Model::calibrate(const Tensor& x) {
  NoGradGuard ng;
  const bool saved = bn_batch_stats;
  bn_batch_stats = false;
  forward(x, true);
  bn_batch_stats = saved;
}

std::string Model::first_nonfinite_layer(const Tensor& x) {
  NoGradGuard ng;
  for (const auto& l : layers) {
    for (const auto& p : l.parameters())
      if (!p.tensor.all_finite()) return l.name;
  }
  check_finite_ = true;
  nonfinite_.clear();
  try {
    forward(x, false);
  } catch (...) {
    check_finite_ = false;
    throw;
  }
  check_finite_ = false;
  return nonfinite_;
}

std::vector<qat::Param> Model::parameters() const {
  std::vector<qat::Param> out;
  for (const auto& l : layers)
    for (auto& p : l.parameters()) out.push_back(std::move(p));
  for (const auto& bn : norms) {
    out.push_back({bn.name + ".gamma", bn.gamma, qat::ParamRole::norm});
    out.push_back({bn.name + ".beta", bn.beta, qat::ParamRole::norm});
  }
  return out;
}

std::vector<NamedTensor> Model::state() const {
  std::vector<NamedTensor> out{
      {"meta.arch", Tensor::scalar(static_cast<double>(spec.arch))},
      {"meta.in_channels", Tensor::scalar(static_cast<double>(spec.in_channels))},
      {"meta.classes", Tensor::scalar(static_cast<double>(spec.classes))},
      {"meta.width", Tensor::scalar(static_cast<double>(spec.width))},
      {"meta.image_size", Tensor::scalar(static_cast<double>(spec.image_size))},
      {"meta.scheme", Tensor::scalar(static_cast<double>(policy.scheme))},
      {"meta.bits", Tensor::scalar(policy.bits)},
      {"meta.first_last_bits", Tensor::scalar(policy.first_last_bits)},
      {"meta.dequant_mode", Tensor::scalar(static_cast<double>(policy.dequant_mode))},
      {"meta.full_levels", Tensor::scalar(policy.full_levels ? 1.0 : 0.0)},
      {"meta.grad_scale", Tensor::scalar(policy.grad_scale ? 1.0 : 0.0)},
      {"meta.adapter_depth", Tensor::scalar(policy.adapter_depth)},
      {"meta.adapter_hidden", Tensor::scalar(policy.adapter_hidden)},
      {"meta.output_map", Tensor::scalar(static_cast<double>(policy.output_map))},
  };
  for (const auto& l : layers)
    for (auto& nt : l.state()) out.push_back(std::move(nt));
  for (const auto& bn : norms) {
    out.push_back({bn.name + ".gamma", bn.gamma});
    out.push_back({bn.name + ".beta", bn.beta});
    out.push_back({bn.name + ".running_mean", bn.running_mean});
    out.push_back({bn.name + ".running_var", bn.running_var});
  }
  return out;
}

qat::QLayer& Model::layer(std::string_view name) {
  for (auto& l : layers)
    if (l.name == name) return l;
  fail(ErrorKind::invalid_argument, "unknown layer '" + std::string(name) + "'");
}

const qat::QLayer& Model::layer(std::string_view name) const { return const_cast<Model*>(this)->layer(name); }

std::int64_t Model::block_count() const { return spec.arch == Arch::tinynet ? 4 : 9; }

void Model::reset_beta_stats() {
  for (auto& l : layers) {
    l.beta_sum = 0.0;
    l.beta_count = 0;
  }
}

ModelSpec read_spec(const std::vector<NamedTensor>& state) {
  ModelSpec s;
  const double arch = meta(state, "arch");
  if (arch != 0.0 && arch != 1.0) fail(ErrorKind::checkpoint, "checkpoint names an unknown architecture");
  s.arch = static_cast<Arch>(static_cast<int>(arch));
  s.in_channels = static_cast<std::int64_t>(meta(state, "in_channels"));
  s.classes = static_cast<std::int64_t>(meta(state, "classes"));
  s.width = static_cast<std::int64_t>(meta(state, "width"));
  s.image_size = static_cast<std::int64_t>(meta(state, "image_size"));
  return s;
}

qat::QuantPolicy read_policy(const std::vector<NamedTensor>& state) {
  qat::QuantPolicy p;
  const int scheme = static_cast<int>(meta(state, "scheme"));
  if (scheme < 0 || scheme > static_cast<int>(qat::Scheme::pot_weights))
    fail(ErrorKind::checkpoint, "checkpoint names an unknown scheme");
  p.scheme = static_cast<qat::Scheme>(scheme);
  p.bits = static_cast<int>(meta(state, "bits"));
  p.first_last_bits = static_cast<int>(meta(state, "first_last_bits"));
  p.dequant_mode = static_cast<quant::DequantMode>(static_cast<int>(meta(state, "dequant_mode")));
  p.full_levels = meta(state, "full_levels") != 0.0;
  p.grad_scale = meta(state, "grad_scale") != 0.0;
  p.adapter_depth = static_cast<int>(meta(state, "adapter_depth"));
  p.adapter_hidden = static_cast<int>(meta(state, "adapter_hidden"));
  p.output_map = static_cast<adapter::OutputMap>(static_cast<int>(meta(state, "output_map")));
  return p;
}

namespace {

void copy_into(const std::vector<NamedTensor>& src, const std::string& name, Tensor dst) {
  const Tensor& t = find_tensor(src, name);
  if (t.shape() != dst.shape())
    fail(ErrorKind::checkpoint,
         "tensor '" + name + "' has shape " + shape_str(t.shape()) + ", expected " + shape_str(dst.shape()));
  std::copy(t.data().begin(), t.data().end(), dst.data().begin());
}

void configure_all(Model& m, const qat::QuantPolicy& policy, std::uint64_t seed) {
  m.policy = policy;
  m.bn_batch_stats = policy.scheme == qat::Scheme::float_model;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const bool edge = i == 0 || i + 1 == m.layers.size();
    qat::configure_layer(m.layers[i], policy, edge, i != 0, derive_seed(seed, m.layers[i].name + ".adapter"));
  }
}

}  // namespace

Model build_model(const ModelSpec& spec, const qat::QuantPolicy& policy, const std::vector<NamedTensor>& float_ckpt,
                  std::uint64_t seed) {
  if (try_find_tensor(float_ckpt, "meta.arch")) {
    const auto ck = read_spec(float_ckpt);
    if (ck.arch != spec.arch || ck.width != spec.width || ck.in_channels != spec.in_channels ||
        ck.classes != spec.classes)
      fail(ErrorKind::checkpoint, "float checkpoint describes a different architecture");
  }
  Model m = make_float_model(spec, seed);
  for (auto& l : m.layers) {
    copy_into(float_ckpt, l.name + ".weight", l.weight);
    if (l.bias.defined()) copy_into(float_ckpt, l.name + ".bias", l.bias);
  }
  for (auto& bn : m.norms) {
    copy_into(float_ckpt, bn.name + ".gamma", bn.gamma);
    copy_into(float_ckpt, bn.name + ".beta", bn.beta);
    copy_into(float_ckpt, bn.name + ".running_mean", bn.running_mean);
    copy_into(float_ckpt, bn.name + ".running_var", bn.running_var);
  }
  configure_all(m, policy, seed);
  return m;
}

Model load_model(const std::vector<NamedTensor>& state) {
  const auto spec = read_spec(state);
  const auto policy = read_policy(state);
  Model m = make_float_model(spec, 0);
  configure_all(m, policy, 0);
  for (auto& l : m.layers) l.load_state(state);
  for (auto& bn : m.norms) {
    copy_into(state, bn.name + ".gamma", bn.gamma);
    copy_into(state, bn.name + ".beta", bn.beta);
    copy_into(state, bn.name + ".running_mean", bn.running_mean);
    copy_into(state, bn.name + ".running_var", bn.running_var);
  }
  return m;
}

}  // namespace asq::model
