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

#include "asq/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "asq/ops.hpp"

namespace asq::train {

Tensor Dataset::gather(std::span<const std::int64_t> idx) const {
  Shape shape = images.shape();
  const std::int64_t per = images.numel() / shape[0];
  shape[0] = static_cast<std::int64_t>(idx.size());
  std::vector<double> out(static_cast<std::size_t>(shape[0] * per));
  const auto& src = images.storage();
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(src.begin() + idx[i] * per, per, out.begin() + static_cast<std::int64_t>(i) * per);
  return Tensor(std::move(shape), std::move(out));
}

std::vector<int> Dataset::gather_labels(std::span<const std::int64_t> idx) const {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(labels[static_cast<std::size_t>(i)]);
  return out;
}

Normalization Normalization::idx_default() { return {{0.1307}, {0.3081}}; }
Normalization Normalization::cifar_default() { return {{0.4914, 0.4822, 0.4465}, {0.2470, 0.2435, 0.2616}}; }

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::dataset_missing, "cannot open dataset file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::filesystem::path& path) {
  if (off + 4 > b.size())
    fail(ErrorKind::format, path.string() + ": truncated header at byte offset " + std::to_string(off));
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

void check_norm(const Normalization& norm, std::int64_t channels) {
  if (static_cast<std::int64_t>(norm.mean.size()) != channels ||
      static_cast<std::int64_t>(norm.stddev.size()) != channels)
    fail(ErrorKind::invalid_argument, "normalisation needs one mean/std per channel");
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const Normalization& norm,
                 std::int64_t limit) {
  check_norm(norm, 1);
  const auto ib = read_file(images);
  const auto lb = read_file(labels);
  if (be32(ib, 0, images) != 0x00000803u)
    fail(ErrorKind::format, images.string() + ": bad IDX image magic at byte offset 0");
  if (be32(lb, 0, labels) != 0x00000801u)
    fail(ErrorKind::format, labels.string() + ": bad IDX label magic at byte offset 0");
  const std::int64_t n = be32(ib, 4, images), rows = be32(ib, 8, images), cols = be32(ib, 12, images);
  const std::int64_t nl = be32(lb, 4, labels);
  if (nl != n)
    fail(ErrorKind::format, labels.string() + ": label count " + std::to_string(nl) + " differs from image count " +
                                std::to_string(n) + " (byte offset 4)");
  const std::int64_t pixels = rows * cols;
  if (static_cast<std::int64_t>(ib.size()) < 16 + n * pixels)
    fail(ErrorKind::format, images.string() + ": truncated pixel data at byte offset " + std::to_string(ib.size()));
  if (static_cast<std::int64_t>(lb.size()) < 8 + n)
    fail(ErrorKind::format, labels.string() + ": truncated label data at byte offset " + std::to_string(lb.size()));
  const std::int64_t count = limit >= 0 ? std::min(limit, n) : n;
  Dataset d;
  d.images = Tensor(Shape{count, 1, rows, cols});
  d.labels.resize(static_cast<std::size_t>(count));
  int max_label = 0;
  for (std::int64_t i = 0; i < count; ++i) {
    for (std::int64_t j = 0; j < pixels; ++j)
      d.images[i * pixels + j] = (ib[static_cast<std::size_t>(16 + i * pixels + j)] / 255.0 - norm.mean[0]) / norm.stddev[0];
    d.labels[static_cast<std::size_t>(i)] = lb[static_cast<std::size_t>(8 + i)];
    max_label = std::max(max_label, d.labels[static_cast<std::size_t>(i)]);
  }
  d.classes = std::max(2, max_label + 1);
  return d;
}

Dataset load_cifar_binary(const std::vector<std::filesystem::path>& files, const Normalization& norm,
                          std::int64_t limit) {
  check_norm(norm, 3);
  constexpr std::int64_t record = 3073, plane = 1024;
  std::vector<double> pixels;
  std::vector<int> labels;
  for (const auto& f : files) {
    const auto b = read_file(f);
    if (b.size() % record != 0)
      fail(ErrorKind::format, f.string() + ": truncated record at byte offset " +
                                  std::to_string(b.size() / record * record));
    for (std::size_t r = 0; r < b.size() / record; ++r) {
      if (limit >= 0 && static_cast<std::int64_t>(labels.size()) >= limit) break;
      const std::size_t off = r * record;
      if (b[off] > 9) fail(ErrorKind::format, f.string() + ": label byte out of range at byte offset " + std::to_string(off));
      labels.push_back(b[off]);
      for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t j = 0; j < plane; ++j)
          pixels.push_back((b[off + 1 + static_cast<std::size_t>(c * plane + j)] / 255.0 - norm.mean[c]) / norm.stddev[c]);
    }
  }
  Dataset d;
  const auto n = static_cast<std::int64_t>(labels.size());
  d.images = Tensor(Shape{n, 3, 32, 32}, std::move(pixels));
  d.labels = std::move(labels);
  d.classes = 10;
  return d;
}

Dataset synth_dataset(const SynthSpec& spec, std::uint64_t prototype_seed, std::uint64_t sample_seed) {
  if (spec.samples < 1 || spec.classes < 2 || spec.channels < 1 || spec.size < 1)
    fail(ErrorKind::invalid_argument, "synthetic dataset needs samples >= 1, classes >= 2, channels >= 1, size >= 1");
  const std::int64_t c = spec.channels, s = spec.size, per = c * s * s;
  std::vector<double> protos(static_cast<std::size_t>(spec.classes * per));
  Rng prng(derive_seed(prototype_seed, "synthetic-prototypes"));
  for (std::int64_t k = 0; k < spec.classes; ++k)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      // Three random plane waves per channel.
      double fx[3], fy[3], ph[3], amp[3];
      for (int w = 0; w < 3; ++w) {
        fx[w] = uniform(prng, -0.8, 0.8);
        fy[w] = uniform(prng, -0.8, 0.8);
        ph[w] = uniform(prng, 0.0, 2.0 * std::numbers::pi);
        amp[w] = uniform(prng, 0.3, 1.0);
      }
      for (std::int64_t y = 0; y < s; ++y)
        for (std::int64_t x = 0; x < s; ++x) {
          double v = 0.0;
          for (int w = 0; w < 3; ++w) v += amp[w] * std::sin(fx[w] * static_cast<double>(x) + fy[w] * static_cast<double>(y) + ph[w]);
          protos[static_cast<std::size_t>(k * per + (ch * s + y) * s + x)] = v;
        }
    }
  Dataset d;
  d.classes = spec.classes;
  d.images = Tensor(Shape{spec.samples, c, s, s});
  d.labels.resize(static_cast<std::size_t>(spec.samples));
  Rng srng(derive_seed(sample_seed, "synthetic-samples"));
  for (std::int64_t i = 0; i < spec.samples; ++i) {
    const auto label = static_cast<int>(i % spec.classes);
    d.labels[static_cast<std::size_t>(i)] = label;
    for (std::int64_t j = 0; j < per; ++j)
      d.images[i * per + j] = protos[static_cast<std::size_t>(label * per + j)] + normal(srng, 0.0, spec.noise);
  }
  return d;
}

Dataset take(const Dataset& d, std::int64_t begin, std::int64_t count) {
  if (begin < 0 || count < 0 || begin + count > d.size())
    fail(ErrorKind::invalid_argument, "dataset slice out of range");
  std::vector<std::int64_t> idx(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = begin + i;
  return {d.gather(idx), d.gather_labels(idx), d.classes};
}

double cosine_lr(std::int64_t t, std::int64_t total, double lr0) {
  if (total < 1 || t < 0 || t > total)
    fail(ErrorKind::invalid_argument, "cosine_lr needs 0 <= t <= T, got t=" + std::to_string(t) + " T=" +
                                          std::to_string(total));
  return lr0 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(total))) / 2.0;
}

void sgd_step(const std::vector<qat::Param>& params, SgdState& state, double lr, double momentum,
              double weight_decay) {
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    auto t = p.tensor;
    auto& v = state.velocity[p.name];
    if (v.empty()) v.assign(static_cast<std::size_t>(t.numel()), 0.0);
    if (v.size() != static_cast<std::size_t>(t.numel()))
      fail(ErrorKind::dimension, "optimizer state for '" + p.name + "' has the wrong size");
    const bool decay = p.role != qat::ParamRole::quant_step && p.role != qat::ParamRole::adapter_bias;
    const double wd = decay ? weight_decay : 0.0;
    auto data = t.data();
    auto grad = t.grad();
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = momentum * v[i] + grad[i] + wd * data[i];
      data[i] = data[i] - lr * v[i];
    }
    if (p.role == qat::ParamRole::quant_step)
      for (auto& x : data) x = std::max(x, kStepFloor);
  }
}

Tensor augment(const Tensor& batch, Rng& rng, bool crop, bool flip) {
  if (!crop && !flip) return batch;
  const auto n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  constexpr std::int64_t pad = 4;
  Tensor out(batch.shape());
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t dy = 0, dx = 0;
    if (crop) {
      dy = std::uniform_int_distribution<std::int64_t>(0, 2 * pad)(rng) - pad;
      dx = std::uniform_int_distribution<std::int64_t>(0, 2 * pad)(rng) - pad;
    }
    const bool mirror = flip && std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
          const std::int64_t sx0 = mirror ? w - 1 - x : x;
          const std::int64_t sy = y + dy, sx = sx0 + dx;
          const std::int64_t o = ((i * c + ch) * h + y) * w + x;
          out[o] = (sy < 0 || sy >= h || sx < 0 || sx >= w) ? 0.0 : batch[((i * c + ch) * h + sy) * w + sx];
        }
  }
  return out;
}

namespace {

struct Tally {
  double loss = 0.0;
  std::int64_t correct1 = 0, correct5 = 0, count = 0;

  void add(const Tensor& logits, std::span<const int> labels, double batch_loss) {
    const auto n = logits.dim(0), k = logits.dim(1);
    loss += batch_loss * static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i) {
      const double* row = logits.storage().data() + i * k;
      const int y = labels[static_cast<std::size_t>(i)];
      // Rank of the true class: classes strictly better, plus ties at lower index.
      std::int64_t rank = 0;
      for (std::int64_t j = 0; j < k; ++j)
        if (row[j] > row[y] || (row[j] == row[y] && j < y)) ++rank;
      correct1 += rank == 0;
      correct5 += rank < 5;
    }
    count += n;
  }

  EvalResult result(std::int64_t classes) const {
    EvalResult r;
    r.loss = loss / static_cast<double>(count);
    r.top1 = static_cast<double>(correct1) / static_cast<double>(count);
    if (classes >= 5) r.top5 = static_cast<double>(correct5) / static_cast<double>(count);
    return r;
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void History::write_csv(std::ostream& os) const {
  os << "epoch,split,loss,top1,top5,lr";
  for (const auto& l : beta_layers) os << ",mean_beta_" << l;
  os << '\n';
  for (const auto& r : rows) {
    auto line = [&](const char* split, const EvalResult& e, bool betas) {
      os << r.epoch << ',' << split << ',' << fmt(e.loss) << ',' << fmt(e.top1) << ',' << (e.top5 ? fmt(*e.top5) : "")
         << ',' << fmt(r.lr);
      for (double b : r.mean_beta) os << ',' << (betas ? fmt(b) : "");
      os << '\n';
    };
    line("train", r.train, true);
    if (r.test) line("test", *r.test, false);
  }
}

Tensor predict(model::Model& m, const Tensor& images, std::int64_t batch_size) {
  NoGradGuard ng;
  const auto n = images.dim(0);
  std::vector<double> out;
  std::int64_t classes = 0;
  Dataset view{images, std::vector<int>(static_cast<std::size_t>(n), 0), 0};
  for (std::int64_t b = 0; b < n; b += batch_size) {
    std::vector<std::int64_t> idx;
    for (std::int64_t i = b; i < std::min(n, b + batch_size); ++i) idx.push_back(i);
    const Tensor logits = m.forward(view.gather(idx), false);
    classes = logits.dim(1);
    out.insert(out.end(), logits.storage().begin(), logits.storage().end());
  }
  return Tensor(Shape{n, classes}, std::move(out));
}

EvalResult score_logits(const Tensor& logits, std::span<const int> labels, std::int64_t classes) {
  if (logits.rank() != 2 || logits.dim(0) != static_cast<std::int64_t>(labels.size()))
    fail(ErrorKind::dimension, "logits " + shape_str(logits.shape()) + " do not match " + std::to_string(labels.size()) +
                                   " labels");
  if (labels.empty()) fail(ErrorKind::invalid_argument, "cannot score an empty batch");
  Tally tally;
  tally.add(logits, labels, ops::cross_entropy(logits, labels).item());
  return tally.result(classes);
}

EvalResult evaluate(model::Model& m, const Dataset& data, std::int64_t batch_size) {
  if (data.size() == 0) fail(ErrorKind::invalid_argument, "cannot evaluate on an empty dataset");
  NoGradGuard ng;
  Tally tally;
  for (std::int64_t b = 0; b < data.size(); b += batch_size) {
    std::vector<std::int64_t> idx;
    for (std::int64_t i = b; i < std::min(data.size(), b + batch_size); ++i) idx.push_back(i);
    const auto labels = data.gather_labels(idx);
    const Tensor logits = m.forward(data.gather(idx), false);
    tally.add(logits, labels, ops::cross_entropy(logits, labels).item());
  }
  return tally.result(data.classes);
}

History train(model::Model& m, const Dataset& train_data, const Dataset* test_data, const TrainConfig& config) {
  if (config.epochs < 1 || config.batch_size < 1 || !(config.lr0 > 0.0))
    fail(ErrorKind::invalid_argument, "training needs epochs >= 1, batch_size >= 1, lr0 > 0");
  if (train_data.size() == 0) fail(ErrorKind::invalid_argument, "cannot train on an empty dataset");

  History history;
  std::vector<qat::QLayer*> asq_layers;
  for (auto& l : m.layers)
    if (l.act_quantizer == qat::ActQuantizer::asq) {
      asq_layers.push_back(&l);
      history.beta_layers.push_back(l.name);
    }

  std::vector<qat::Param> params;
  for (auto& p : m.parameters()) {
    const bool adapter_param = p.role == qat::ParamRole::adapter_weight || p.role == qat::ParamRole::adapter_bias;
    if (config.freeze_adapter && adapter_param) continue;
    params.push_back(p);
  }

  Rng order_rng(derive_seed(config.seed, "data-order"));
  Rng aug_rng(derive_seed(config.seed, "augmentation"));
  SgdState sgd;
  const std::int64_t n = train_data.size();
  const std::int64_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::int64_t total = config.epochs * steps_per_epoch;
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::int64_t t = 0;

  for (std::int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    for (std::int64_t i = n - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(std::uniform_int_distribution<std::int64_t>(0, i)(order_rng))]);
    m.reset_beta_stats();
    Tally tally;
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = cosine_lr(t, total, config.lr0);
    for (std::int64_t b = 0; b < n; b += config.batch_size) {
      const std::span<const std::int64_t> idx(order.data() + b, static_cast<std::size_t>(std::min(config.batch_size, n - b)));
      const Tensor x = augment(train_data.gather(idx), aug_rng, config.augment_crop, config.augment_flip);
      const auto labels = train_data.gather_labels(idx);
      const double lr = cosine_lr(t, total, config.lr0);
      const Tensor logits = m.forward(x, true);
      const Tensor loss = ops::cross_entropy(logits, labels);
      if (!std::isfinite(loss.item())) {
        const auto where = m.first_nonfinite_layer(x);
        fail(ErrorKind::numeric, "non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(t) +
                                     "; first offending layer: " + (where.empty() ? "(loss)" : where));
      }
      tally.add(logits.detach(), labels, loss.item());
      for (auto& p : params)
        if (p.tensor.has_grad()) p.tensor.zero_grad();
      backward(loss);
      {
        NoGradGuard ng;
        sgd_step(params, sgd, lr, config.momentum, config.weight_decay);
      }
      ++t;
    }
    rec.train = tally.result(train_data.classes);
    for (const auto* l : asq_layers)
      rec.mean_beta.push_back(l->beta_count ? l->beta_sum / static_cast<double>(l->beta_count) : 0.0);
    if (test_data) rec.test = evaluate(m, *test_data, config.eval_batch_size);
    history.rows.push_back(std::move(rec));
  }
  if (!config.checkpoint.empty()) save_checkpoint(config.checkpoint, m.state());
  return history;
}

}  // namespace asq::train
