#include "pfl/model.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "pfl/errors.hpp"
#include "pfl/rng.hpp"

namespace pfl {

std::string_view to_string(Intention i) {
  switch (i) {
    case Intention::kLaneKeep: return "lane_keep";
    case Intention::kLeftLaneChange: return "left_lane_change";
    case Intention::kRightLaneChange: return "right_lane_change";
  }
  return "?";
}

void ModelConfig::validate() const {
  std::vector<std::string> violated;
  auto check = [&](bool ok, const char* what) {
    if (!ok) violated.emplace_back(what);
  };
  check(feature_dim > 0, "feature_dim > 0");
  check(blocks == kNumBlocks, "blocks == 3");
  check(embed_dim > 0, "embed_dim > 0");
  check(heads > 0, "heads > 0");
  check(heads > 0 && embed_dim % heads == 0, "embed_dim mod heads == 0");
  check(latent_tokens > 0, "latent_tokens > 0");
  check(ff_dim > 0, "ff_dim > 0");
  check(classes == kNumClasses, "classes == 3");
  check(work_slots > 0, "work_slots > 0");
  check(long_slots > 0, "long_slots > 0");
  if (!violated.empty()) {
    std::string msg = "invalid model config:";
    for (const auto& v : violated) msg += " [" + v + "]";
    throw ConfigError(msg);
  }
}

ModelConfig ModelConfig::for_memory(const MemoryConfig& memory, std::size_t feature_dim) {
  ModelConfig cfg;
  cfg.feature_dim = feature_dim;
  cfg.work_slots = memory.work_slots();
  cfg.long_slots = memory.long_slots();
  return cfg;
}

Intention argmax(const Tensor& logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return static_cast<Intention>(best);
}

namespace {

constexpr double kNormEps = 1e-5;

enum class InitKind { kXavier, kZero, kOne };

struct ParamSpec {
  std::string name;
  std::vector<std::size_t> shape;
  InitKind kind;
  Partition partition;
};

// Every parameter in creation (= initialization draw) order.
std::vector<ParamSpec> layout(const ModelConfig& c) {
  std::vector<ParamSpec> specs;
  const std::size_t e = c.embed_dim;
  Partition part = Partition::kEncoder;
  auto weight = [&](std::string name, std::size_t in, std::size_t out) {
    specs.push_back({std::move(name), {in, out}, InitKind::kXavier, part});
  };
  auto vec = [&](std::string name, std::size_t n, InitKind kind) {
    specs.push_back({std::move(name), {n}, kind, part});
  };
  auto norm = [&](const std::string& p) {
    vec(p + ".gain", e, InitKind::kOne);
    vec(p + ".bias", e, InitKind::kZero);
  };
  auto attention = [&](const std::string& p) {
    for (const char* m : {"q", "k", "v", "o"}) {
      weight(p + ".w" + m, e, e);
      vec(p + ".b" + m, e, InitKind::kZero);
    }
  };
  auto ff = [&](const std::string& p) {
    weight(p + ".w1", e, c.ff_dim);
    vec(p + ".b1", c.ff_dim, InitKind::kZero);
    weight(p + ".w2", c.ff_dim, e);
    vec(p + ".b2", e, InitKind::kZero);
  };

  weight("enc.input.weight", c.input_width(), e);
  vec("enc.input.bias", e, InitKind::kZero);
  weight("enc.long_pos", c.long_slots, e);
  weight("enc.queries", c.latent_tokens, e);
  norm("enc.cross.norm_q");
  norm("enc.cross.norm_kv");
  attention("enc.cross.attn");
  norm("enc.cross.norm_ff");
  ff("enc.cross.ff");
  for (std::size_t l = 0; l < c.encoder_layers; ++l) {
    const std::string p = "enc.layer" + std::to_string(l);
    norm(p + ".norm_attn");
    attention(p + ".attn");
    norm(p + ".norm_ff");
    ff(p + ".ff");
  }
  norm("enc.norm_out");

  part = Partition::kDecoder;
  weight("dec.work_pos", c.work_slots, e);
  for (std::size_t l = 0; l < c.decoder_layers; ++l) {
    const std::string p = "dec.layer" + std::to_string(l);
    norm(p + ".norm_self");
    attention(p + ".self");
    norm(p + ".norm_cross");
    attention(p + ".cross");
    norm(p + ".norm_ff");
    ff(p + ".ff");
  }
  norm("dec.norm_out");
  weight("dec.head.weight", e, c.classes);
  vec("dec.head.bias", c.classes, InitKind::kZero);
  return specs;
}

// Resolves parameter names to graph leaves. Parameters outside the trained
// partition become constants, so backward never visits them.
class Binder {
 public:
  Binder(Graph& graph, const ParamSet& params, PartitionSel train)
      : graph_(graph), params_(params), train_(train) {
    // Trained parameters are registered up front so unused ones still
    // report a (zero) gradient.
    for (const auto& [name, p] : params_)
      if (selects(train_, p.partition)) cache_.emplace(name, graph_.parameter_ref(name, p.value));
  }

  Var operator()(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    const Param& p = params_.at(name);
    Var v = selects(train_, p.partition) ? graph_.parameter_ref(name, p.value)
                                         : graph_.constant_ref(p.value);
    cache_.emplace(name, v);
    return v;
  }

  Graph& graph() { return graph_; }

 private:
  Graph& graph_;
  const ParamSet& params_;
  PartitionSel train_;
  std::map<std::string, Var> cache_;
};

struct Net {
  const ModelConfig& cfg;
  Binder& b;

  Var norm(const std::string& p, Var x) {
    return ag::layer_norm(x, b(p + ".gain"), b(p + ".bias"), kNormEps);
  }

  Var linear(Var x, const std::string& w, const std::string& bias) {
    return ag::add_bias(ag::matmul(x, b(w)), b(bias));
  }

  Var attention(const std::string& p, Var queries, Var keys_values) {
    Var q = linear(queries, p + ".wq", p + ".bq");
    Var k = linear(keys_values, p + ".wk", p + ".bk");
    Var v = linear(keys_values, p + ".wv", p + ".bv");
    const std::size_t dh = cfg.embed_dim / cfg.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> heads;
    heads.reserve(cfg.heads);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      Var qh = ag::slice_cols(q, h * dh, dh);
      Var kh = ag::slice_cols(k, h * dh, dh);
      Var vh = ag::slice_cols(v, h * dh, dh);
      Var scores = ag::scale(ag::matmul(qh, ag::transpose(kh)), inv_sqrt);
      heads.push_back(ag::matmul(ag::softmax(scores, 1), vh));
    }
    Var merged = cfg.heads == 1 ? heads[0] : ag::concat_cols(heads);
    return linear(merged, p + ".wo", p + ".bo");
  }

  Var feed_forward(const std::string& p, Var x) {
    return linear(ag::gelu(linear(x, p + ".w1", p + ".b1")), p + ".w2", p + ".b2");
  }

  // Projects the valid frames of `view` (slot order, newest first).
  Var project(const MemoryView& view, const std::vector<std::size_t>& slots) {
    const std::size_t width = cfg.input_width();
    Tensor frames = Tensor::zeros(slots.size(), width);
    for (std::size_t i = 0; i < slots.size(); ++i)
      for (std::size_t j = 0; j < width; ++j) frames.at(i, j) = view.slots.at(slots[i], j);
    return linear(b.graph().constant(std::move(frames)), "enc.input.weight", "enc.input.bias");
  }

  Var encode(const MemoryView& long_view) {
    const auto slots = valid_slots(long_view, cfg.long_slots, "long");
    Var latent = b("enc.queries");
    // With nothing to attend to, the cross-attention block is skipped.
    if (!slots.empty()) {
      Var tokens = ag::add(project(long_view, slots), ag::gather_rows(b("enc.long_pos"), slots));
      Var kv = norm("enc.cross.norm_kv", tokens);
      latent = ag::add(latent, attention("enc.cross.attn", norm("enc.cross.norm_q", latent), kv));
      latent = ag::add(latent, feed_forward("enc.cross.ff", norm("enc.cross.norm_ff", latent)));
    }
    for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
      const std::string p = "enc.layer" + std::to_string(l);
      Var h = norm(p + ".norm_attn", latent);
      latent = ag::add(latent, attention(p + ".attn", h, h));
      latent = ag::add(latent, feed_forward(p + ".ff", norm(p + ".norm_ff", latent)));
    }
    return norm("enc.norm_out", latent);
  }

  Var decode(Var latents, Var work_tokens, const std::vector<std::size_t>& slots) {
    Var x = ag::add(work_tokens, ag::gather_rows(b("dec.work_pos"), slots));
    for (std::size_t l = 0; l < cfg.decoder_layers; ++l) {
      const std::string p = "dec.layer" + std::to_string(l);
      Var h = norm(p + ".norm_self", x);
      x = ag::add(x, attention(p + ".self", h, h));
      x = ag::add(x, attention(p + ".cross", norm(p + ".norm_cross", x), latents));
      x = ag::add(x, feed_forward(p + ".ff", norm(p + ".norm_ff", x)));
    }
    // Row 0 is the lowest valid slot, i.e. the newest frame.
    Var newest = norm("dec.norm_out", ag::slice_rows(x, 0, 1));
    return linear(newest, "dec.head.weight", "dec.head.bias");
  }

  static std::vector<std::size_t> valid_slots(const MemoryView& view, std::size_t expected,
                                              const char* which) {
    if (view.mask.size() != expected || view.slots.rows() != expected) {
      throw ShapeError(std::string(which) + " memory view has " +
                       std::to_string(view.mask.size()) + " slots, model expects " +
                       std::to_string(expected));
    }
    std::vector<std::size_t> slots;
    for (std::size_t i = 0; i < view.mask.size(); ++i)
      if (view.mask[i]) slots.push_back(i);
    return slots;
  }

  void check_width(const MemoryView& view) const {
    if (view.slots.cols() != cfg.input_width()) {
      throw ShapeError("memory slot width " + std::to_string(view.slots.cols()) +
                       " does not match model input width " +
                       std::to_string(cfg.input_width()));
    }
  }

  Var forward(const MemorySnapshot& mem) {
    check_width(mem.long_view);
    check_width(mem.work_view);
    auto work = valid_slots(mem.work_view, cfg.work_slots, "work");
    if (work.empty()) throw std::invalid_argument("work memory has no valid frame to classify");
    Var latents = encode(mem.long_view);
    return decode(latents, project(mem.work_view, work), work);
  }
};

}  // namespace

Lstr::Lstr(ModelConfig config) : config_(config) { config_.validate(); }

ParamSet Lstr::init(std::uint64_t seed) const {
  Rng rng(seed);
  ParamSet params;
  for (const auto& spec : layout(config_)) {
    Tensor t(spec.shape);
    switch (spec.kind) {
      case InitKind::kXavier: {
        const double fan_in = static_cast<double>(spec.shape[0]);
        const double fan_out = static_cast<double>(spec.shape[1]);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (auto& v : t.data()) v = rng.uniform(-bound, bound);
        break;
      }
      case InitKind::kOne:
        for (auto& v : t.data()) v = 1.0;
        break;
      case InitKind::kZero:
        break;
    }
    params.add(spec.name, std::move(t), spec.partition);
  }
  return params;
}

Tensor Lstr::encode(const ParamSet& params, const MemoryView& long_view) const {
  Graph g;
  Binder b(g, params, PartitionSel::kEncoder);
  Net net{config_, b};
  net.check_width(long_view);
  return net.encode(long_view).value();
}

Tensor Lstr::decode(const ParamSet& params, const Tensor& latents,
                    const MemoryView& work_view) const {
  if (latents.rows() != config_.latent_tokens || latents.cols() != config_.embed_dim) {
    throw ShapeError("latents " + latents.shape_str() + " do not match model config");
  }
  Graph g;
  Binder b(g, params, PartitionSel::kDecoder);
  Net net{config_, b};
  net.check_width(work_view);
  auto work = Net::valid_slots(work_view, config_.work_slots, "work");
  if (work.empty()) throw std::invalid_argument("work memory has no valid frame to classify");
  return net.decode(g.constant_ref(latents), net.project(work_view, work), work).value();
}

Tensor Lstr::forward(const ParamSet& params, const MemorySnapshot& memory) const {
  Graph g;
  Binder b(g, params, PartitionSel::kAll);
  Net net{config_, b};
  return net.forward(memory).value();
}

Tensor Lstr::forward(const ParamSet& params, const MemoryState& memory) const {
  return forward(params, memory.snapshot());
}

Intention Lstr::predict(const ParamSet& params, const MemorySnapshot& memory) const {
  return argmax(forward(params, memory));
}

EncodedContext Lstr::encode_context(const ParamSet& params, const MemorySnapshot& memory) const {
  Graph g;
  Binder b(g, params, PartitionSel::kDecoder);
  Net net{config_, b};
  net.check_width(memory.long_view);
  net.check_width(memory.work_view);
  auto work = Net::valid_slots(memory.work_view, config_.work_slots, "work");
  if (work.empty()) throw std::invalid_argument("work memory has no valid frame to classify");
  EncodedContext ctx;
  ctx.latents = net.encode(memory.long_view).value();
  ctx.work_tokens = net.project(memory.work_view, work).value();
  ctx.work_slots = std::move(work);
  return ctx;
}

LossAndGrads Lstr::loss_and_grads(const ParamSet& params, std::span<const Sample> batch,
                                  PartitionSel partition) const {
  if (batch.empty()) throw std::invalid_argument("loss_and_grads needs a nonempty batch");
  Graph g;
  Binder b(g, params, partition);
  Net net{config_, b};
  Var total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Var ce = ag::cross_entropy(net.forward(batch[i].memory),
                               static_cast<std::size_t>(batch[i].label));
    total = i == 0 ? ce : ag::add(total, ce);
  }
  Var loss = ag::scale(total, 1.0 / static_cast<double>(batch.size()));
  LossAndGrads out;
  out.loss = loss.value().item();
  out.grads = g.backward(loss);
  return out;
}

LossAndGrads Lstr::decoder_loss_and_grads(const ParamSet& params,
                                          std::span<const ContextSample> batch) const {
  if (batch.empty()) throw std::invalid_argument("loss_and_grads needs a nonempty batch");
  Graph g;
  Binder b(g, params, PartitionSel::kDecoder);
  Net net{config_, b};
  Var total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const EncodedContext& ctx = batch[i].context;
    Var logits = net.decode(g.constant_ref(ctx.latents), g.constant_ref(ctx.work_tokens),
                            ctx.work_slots);
    Var ce = ag::cross_entropy(logits, static_cast<std::size_t>(batch[i].label));
    total = i == 0 ? ce : ag::add(total, ce);
  }
  Var loss = ag::scale(total, 1.0 / static_cast<double>(batch.size()));
  LossAndGrads out;
  out.loss = loss.value().item();
  out.grads = g.backward(loss);
  return out;
}

}  // namespace pfl
