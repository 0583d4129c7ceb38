#include "eyemark/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "eyemark/rng.hpp"

namespace eyemark {

Param& ParamRegistry::emplace(const std::string& name, Tensor value) {
  if (!names_.insert(name).second) throw std::logic_error("duplicate parameter name: " + name);
  params_.push_back(Param{name, std::move(value)});
  return params_.back();
}

Param& ParamRegistry::kernel(const std::string& name, Shape shape, long long fan_in) {
  if (fan_in <= 0) throw std::invalid_argument("kernel " + name + ": fan_in must be positive");
  Tensor t(shape);
  Rng rng(substream_seed(seed_, name));
  const double a = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (long long i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-a, a);
  return emplace(name, std::move(t));
}

Param& ParamRegistry::zeros(const std::string& name, Shape shape) { return emplace(name, Tensor(std::move(shape))); }

Param& ParamRegistry::ones(const std::string& name, Shape shape) {
  return emplace(name, Tensor::full(std::move(shape), 1.0));
}

BatchNormStats& ParamRegistry::bn_stats(const std::string& name, int channels) {
  if (!names_.insert(name).second) throw std::logic_error("duplicate statistics name: " + name);
  BatchNormStats s;
  s.running_mean = Tensor({channels});
  s.running_var = Tensor::full({channels}, 1.0);
  s.initialized = true;
  stats_.push_back({name, std::move(s)});
  return stats_.back().second;
}

Param* ParamRegistry::find(const std::string& name) {
  for (Param& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

long long ParamRegistry::total_params() const {
  long long n = 0;
  for (const Param& p : params_) n += p.value.numel();
  return n;
}

// ---------------------------------------------------------------------------

ConvUnit::ConvUnit(ParamRegistry& reg, const std::string& name, int cin, int cout, int k, int stride, int pad,
                   bool norm, bool act)
    : stride_(stride), pad_(pad), act_(act) {
  kernel_ = &reg.kernel(name + ".kernel", {cout, cin, k, k}, static_cast<long long>(cin) * k * k);
  if (norm) {
    gamma_ = &reg.ones(name + ".scale", {cout});
    beta_ = &reg.zeros(name + ".shift", {cout});
    stats_ = &reg.bn_stats(name + ".stats", cout);
  } else {
    bias_ = &reg.zeros(name + ".bias", {cout});
  }
}

int ConvUnit::forward(Binder& b, int x) const {
  Graph& g = b.graph();
  int y = g.conv2d(x, b(*kernel_), stride_, pad_);
  if (gamma_)
    y = g.batchnorm(y, b(*gamma_), b(*beta_), stats_, b.training());
  else
    y = g.bias_add(y, b(*bias_));
  return act_ ? g.relu(y) : y;
}

// ---------------------------------------------------------------------------

namespace {
int check_even(int channels, const std::string& name) {
  if (channels < 2 || channels % 2 != 0)
    throw std::invalid_argument(name + ": channel width must be even and >= 2, got " + std::to_string(channels));
  return channels;
}
}  // namespace

ResidualBlock::ResidualBlock(ParamRegistry& reg, const std::string& name, int channels, bool norm)
    : cu1_(reg, name + ".reduce", channels, check_even(channels, name) / 2, 1, 1, 0, norm, true),
      cu2_(reg, name + ".mid", channels / 2, channels / 2, 3, 1, 1, norm, true),
      cu3_(reg, name + ".expand", channels / 2, channels, 1, 1, 0, norm, false) {}

int ResidualBlock::forward(Binder& b, int x) const {
  const int f = cu3_.forward(b, cu2_.forward(b, cu1_.forward(b, x)));
  return b.graph().add(x, f);
}

// ---------------------------------------------------------------------------

Dlau::Dlau(ParamRegistry& reg, const std::string& name, int channels, bool norm)
    : merge_(reg, name + ".merge", 2 * channels, channels, 1, 1, 0, norm, true) {
  kd_ = &reg.kernel(name + ".depthwise", {channels, 1, 3, 3}, 9);
}

int Dlau::forward(Binder& b, int shallow, int deep) const {
  Graph& g = b.graph();
  const int d = g.depthwise_conv2d(deep, b(*kd_), 1, 1);
  return merge_.forward(b, g.concat_channels(shallow, d));
}

// ---------------------------------------------------------------------------

Stem::Stem(ParamRegistry& reg, const std::string& name, int channels, bool norm)
    : cu1_(reg, name + ".entry", 3, channels, 7, 2, 3, norm, true),
      cu2_(reg, name + ".refine", channels, channels, 3, 1, 1, false, false) {}

int Stem::forward(Binder& b, int x) const {
  Graph& g = b.graph();
  return cu2_.forward(b, g.maxpool2x2(cu1_.forward(b, x)));
}

// ---------------------------------------------------------------------------

Hourglass::Hourglass(ParamRegistry& reg, const std::string& name, HourglassConfig cfg, bool norm)
    : cfg_(cfg), bottom_(reg, name + ".bottom", cfg.channels, cfg.channels, 3, 1, 1, norm, true) {
  if (cfg_.depth < 1) throw std::invalid_argument("hourglass " + name + ": depth must be >= 1");
  for (int d = 1; d <= cfg_.depth; ++d) {
    const std::string lvl = name + ".l" + std::to_string(d);
    down_.emplace_back(reg, lvl + ".down", cfg_.channels, norm);
    if (cfg_.skip_kind == HourglassConfig::kDlau)
      skip_dlau_.emplace_back(reg, lvl + ".skip", cfg_.channels, norm);
    else
      skip_res_.emplace_back(reg, lvl + ".skip", cfg_.channels, norm);
  }
  if (cfg_.skip_kind == HourglassConfig::kDlau) bottom_merge_.emplace(reg, name + ".bottom_merge", cfg_.channels, norm);
}

int Hourglass::forward(Binder& b, int x) const {
  const Tensor& xv = b.graph().value(x);
  if (xv.rank() != 4 || xv.extent(1) != cfg_.channels)
    throw std::invalid_argument("hourglass: expected [N," + std::to_string(cfg_.channels) + ",H,W], got " +
                                shape_str(xv.shape()));
  const int div = 1 << cfg_.depth;
  if (xv.extent(2) % div != 0 || xv.extent(3) % div != 0)
    throw std::invalid_argument("hourglass: extent " + shape_str(xv.shape()) + " not divisible by 2^depth = " +
                                std::to_string(div));
  return level(b, x, cfg_.depth);
}

int Hourglass::level(Binder& b, int x, int d) const {
  Graph& g = b.graph();
  if (d == 0) {
    const int bot = bottom_.forward(b, x);
    if (bottom_merge_) return bottom_merge_->forward(b, x, bot);
    return bot;
  }
  const int down = down_[static_cast<size_t>(d - 1)].forward(b, g.maxpool2x2(x));
  const int up = g.upsample2x_nearest(level(b, down, d - 1));
  if (cfg_.skip_kind == HourglassConfig::kDlau) return skip_dlau_[static_cast<size_t>(d - 1)].forward(b, x, up);
  return g.add(skip_res_[static_cast<size_t>(d - 1)].forward(b, x), up);
}

}  // namespace eyemark
