#include "eyemark/model.hpp"

#include <map>
#include <stdexcept>
#include <utility>

#include "eyemark/serialize.hpp"

namespace eyemark {

namespace {

void check_config(const ModelConfig& cfg) {
  if (cfg.stages < 1) throw std::invalid_argument("model: stages must be >= 1");
  if (cfg.input_size < 8 || cfg.input_size % 4 != 0)
    throw std::invalid_argument("model: input_size must be a multiple of 4, got " +
                                std::to_string(cfg.input_size));
  const int hm = cfg.input_size / 4;
  if (hm % (1 << cfg.hourglass.depth) != 0)
    throw std::invalid_argument("model: heatmap extent " + std::to_string(hm) +
                                " is not divisible by 2^depth");
}

std::string stage_name(int i, const char* leaf) {
  return "s" + std::to_string(i) + "." + leaf;
}

}  // namespace

LocalEyenet::LocalEyenet(const ModelConfig& cfg) : cfg_(cfg), reg_(cfg.seed) {
  check_config(cfg);
  const int C = cfg.hourglass.channels;
  stem_.emplace(reg_, "stem", C, cfg.norm_enabled);
  for (int i = 0; i < cfg.stages; ++i) {
    hgs_.emplace_back(reg_, stage_name(i, "hg"), cfg.hourglass, cfg.norm_enabled);
    if (cfg.attention_enabled) {
      atts_.emplace_back(reg_, stage_name(i, "att"), C, cfg.norm_enabled);
      atts_.back().uniform_similarity = cfg.uniform_similarity;
    } else {
      heads_.emplace_back(reg_, stage_name(i, "head"), C, kNumLandmarks, 1, 1, 0,
                          false, false);
    }
    if (i + 1 < cfg.stages)
      remaps_.emplace_back(reg_, stage_name(i, "remap"), kNumLandmarks, C, 1, 1, 0,
                           cfg.norm_enabled, true);
  }
}

ForwardNodes LocalEyenet::forward(Binder& b, int images) {
  Graph& g = b.graph();
  const Tensor& v = g.value(images);
  if (v.rank() != 4 || v.extent(1) != 3 || v.extent(2) != cfg_.input_size ||
      v.extent(3) != cfg_.input_size)
    throw std::invalid_argument("model: expected images [N,3," +
                                std::to_string(cfg_.input_size) + "," +
                                std::to_string(cfg_.input_size) + "], got " +
                                shape_str(v.shape()));

  ForwardNodes out;
  int f = stem_->forward(b, images);
  for (int i = 0; i < cfg_.stages; ++i) {
    const int h = hgs_[i].forward(b, f);
    int logits;
    if (cfg_.attention_enabled) {
      AttentionTaps taps = atts_[i].forward(b, h);
      logits = taps.out;
      out.taps.push_back(taps);
    } else {
      logits = heads_[i].forward(b, h);
    }
    out.stage_logits.push_back(logits);
    out.stage_coords.push_back(soft_argmax_node(g, logits));
    if (i + 1 < cfg_.stages) f = remaps_[i].forward(b, logits);
  }
  return out;
}

InferResult LocalEyenet::infer(const Tensor& images) {
  Graph g;
  Binder b(g, false);
  ForwardNodes nodes = forward(b, g.input(images, false));
  InferResult r;
  r.coords = g.value(nodes.stage_coords.back());
  r.logits = g.value(nodes.stage_logits.back());
  r.probs = g.value(g.spatial_softmax(nodes.stage_logits.back()));
  return r;
}

void LocalEyenet::save(const std::string& tensor_path,
                       const std::string& manifest_path) const {
  std::vector<std::pair<std::string, const Tensor*>> entries;
  for (const Param& p : reg_.params()) entries.push_back({p.name, &p.value});
  for (const auto& [name, st] : reg_.stats()) {
    entries.push_back({name + ".running_mean", &st.running_mean});
    entries.push_back({name + ".running_var", &st.running_var});
  }
  save_checkpoint(tensor_path, manifest_path, entries);
}

void LocalEyenet::load(const std::string& tensor_path,
                       const std::string& manifest_path) {
  auto loaded = load_checkpoint(tensor_path, manifest_path);
  std::map<std::string, Tensor*> got;
  for (auto& [name, value] : loaded) {
    if (!got.emplace(name, &value).second)
      throw std::runtime_error("checkpoint: duplicate entry '" + name + "'");
  }
  auto take = [&](const std::string& name, Tensor& dst) {
    auto it = got.find(name);
    if (it == got.end())
      throw std::runtime_error("checkpoint: missing entry '" + name + "'");
    if (!it->second->same_shape(dst))
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': " +
                               shape_str(it->second->shape()) + " vs " +
                               shape_str(dst.shape()));
    dst = *it->second;
    got.erase(it);
  };
  for (Param& p : reg_.params()) take(p.name, p.value);
  for (auto& [name, st] : reg_.stats()) {
    take(name + ".running_mean", st.running_mean);
    take(name + ".running_var", st.running_var);
  }
  if (!got.empty())
    throw std::runtime_error("checkpoint: unexpected entry '" +
                             got.begin()->first + "'");
}

}  // namespace eyemark
