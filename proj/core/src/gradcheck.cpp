#include "lorentzkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lorentzkit/alignment.hpp"
#include "lorentzkit/error.hpp"
#include "lorentzkit/layers.hpp"
#include "lorentzkit/model.hpp"

namespace lorentzkit {

namespace {

using ad::Tape;
using ad::Var;

Tensor normal_tensor(Shape shape, double scale, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = scale * rng.normal();
  return t;
}

// Shared state of a case: owned parameters plus the projection tensor R.
struct Bag {
  std::vector<std::unique_ptr<Parameter>> params;
  Rng rng;
  explicit Bag(std::uint64_t seed) : rng(mix_seed(seed, 0x4752414443ULL)) {}

  Parameter* add(const std::string& name, Tensor v) {
    params.push_back(std::make_unique<Parameter>(name, std::move(v)));
    return params.back().get();
  }
};

GradcheckCase make_case(std::string name, std::shared_ptr<Bag> bag, std::vector<Parameter*> extra,
                        std::function<Var(Tape&)> body, Shape out_shape) {
  GradcheckCase c;
  c.name = std::move(name);
  for (auto& p : bag->params) c.params.push_back(p.get());
  for (auto* p : extra) c.params.push_back(p);
  const Tensor r = normal_tensor(out_shape, 1.0, bag->rng);
  c.loss = [body = std::move(body), r](Tape& t) {
    Var out = body(t);
    if (out.shape() != r.shape()) throw DimensionError("gradcheck projection shape " + shape_str(out.shape()));
    return ad::sum(out * t.constant(r));
  };
  c.owner = bag;
  return c;
}

Shape shape_of(const std::function<Var(Tape&)>& body) {
  Tape t;
  return body(t).shape();
}

GradcheckCase simple(std::string name, std::shared_ptr<Bag> bag, std::function<Var(Tape&)> body,
                     std::vector<Parameter*> extra = {}) {
  const Shape s = shape_of(body);
  return make_case(std::move(name), std::move(bag), std::move(extra), std::move(body), s);
}

const Curvature kK(-1.0);
const Curvature kK2(-0.7);

std::vector<std::pair<std::string, GradcheckFactory>> build_registry() {
  std::vector<std::pair<std::string, GradcheckFactory>> r;

  r.emplace_back("conv2d_temporal", [](std::uint64_t seed) {
    auto bag = std::make_shared<Bag>(seed);
    auto* x = bag->add("x", normal_tensor({2, 1, 3, 12}, 1.0, bag->rng));
    auto* w = bag->add("w", normal_tensor({3, 1, 1, 5}, 0.5, bag->rng));
    return simple("conv2d_temporal", bag, [=](Tape& t) {
      return ad::conv2d(t.param(*x), t.param(*w), ad::Conv2dSpec::same(1, 5));
    });
  });
  r.emplace_back("conv2d_spatial_grouped", [](std::uint64_t seed) {
    auto bag = std::make_shared<Bag>(seed);
    auto* x = bag->add("x", normal_tensor({2, 2, 3, 6}, 1.0, bag->rng));
    auto* w = bag->add("w", normal_tensor({4, 1, 3, 1}, 0.5, bag->rng));
    return simple("conv2d_spatial_grouped", bag, [=](Tape& t) {
      ad::Conv2dSpec s;
      s.groups = 2;
      return ad::conv2d(t.param(*x), t.param(*w), s);
    });
  });
  r.emplace_back("conv2d_depthwise_strided", [](std::uint64_t seed) {
    auto bag = std::make_shared<Bag>(seed);
    auto* x = bag->add("x", normal_tensor({2, 4, 2, 9}, 1.0, bag->rng));
    auto* w = bag->add("w", normal_tensor({4, 1, 2, 3}, 0.5, bag->rng));
    return simple("conv2d_depthwise_strided", bag, [=](Tape& t) {
      ad::Conv2dSpec s;
      s.groups = 4;
      s.stride_w = 2;
      s.pad_left = 1;
      s.pad_right = 1;
      return ad::conv2d(t.param(*x), t.param(*w), s);
    });
  });
  r.emplace_back("batch_norm_train", [](std::uint64_t seed) {
    auto bag = std::make_shared<Bag>(seed);
    auto* x = bag->add("x", normal_tensor({4, 3, 2, 5}, 1.5, bag->rng));
    auto* g = bag->add("gamma", normal_tensor({3}, 1.0, bag->rng));
    auto* b = bag->add("beta", normal_tensor({3}, 1.0, bag->rng));
    return simple("batch_norm_train", bag, [=](Tape& t) {
      return ad::batch_norm_train(t.param(*x), t.param(*g), t.param(*b), kBnEpsilon);
    });
  });
  r.emplace_back("batch_norm_eval", [](std::uint64_t seed) {
    auto bag = std::make_shared<Bag>(seed);
    auto* x = bag->add("x", normal_tensor({3, 2, 2, 4}, 1.0, bag->rng));
    auto* g = bag->add("gamma", normal_tensor({2}, 1.0, bag->rng));
    auto* b = bag->add("beta", normal_tensor({2}, 1.0, bag->rng));
    return simple("batch_norm_eval", bag, [=](Tape& t) {
      const std::vector<double> m{0.3, -0.2}, v{1.7, 0.4};
      return ad::batch_norm_eval(t.param(*x), t.param(*g), t.param(*b), m, v, kBnEpsilon);
    });
  });
  r.emplace_back("avg_pool_elu_dropout", [](std::uint64_t seed) {
    auto bag = std::make_shared<Bag>(seed);
    auto* x = bag->add("x", normal_tensor({2, 3, 1, 12}, 1.0, bag->rng));
    Tensor mask(Shape{2, 3, 1, 3});
    for (auto& v : mask.storage()) v = bag->rng.uniform() < 0.25 ? 0.0 : 1.0 / 0.75;
    return simple("avg_pool_elu_dropout", bag, [=](Tape& t) {
      return ad::apply_mask(ad::avg_pool2d(ad::elu(t.param(*x)), 1, 4, 1, 4), mask);
    });
  });
  r.emplace_back("softmax_cross_entropy", [](std::uint64_t seed) {
    auto bag = std::make_shared<Bag>(seed);
    auto* x = bag->add("logits", normal_tensor({6, 4}, 2.0, bag->rng));
    std::vector<int> labels;
    for (int i = 0; i < 6; ++i) labels.push_back(static_cast<int>(bag->rng.index(4)));
    return simple("softmax_cross_entropy", bag, [=](Tape& t) {
      return ad::reshape(ad::softmax_cross_entropy(t.param(*x), labels), {1});
    });
  });
  r.emplace_back("lift_clamp_norm", [](std::uint64_t seed) {
    auto bag = std::make_shared<Bag>(seed);
    // Rows of norm ~1.4 and ~6, clamped at 3; none near the kink.
    Tensor s = normal_tensor({6, 4}, 0.7, bag->rng);
    for (std::size_t j = 0; j < 12; ++j) s[12 + j] *= 4.0;
    auto* x = bag->add("space", std::move(s));
    return simple("lift_clamp_norm", bag, [=](Tape& t) { return nn::lift(nn::clamp_norm(t.param(*x), 3.0), kK2); });
  });
  r.emplace_back("exp0_distance", [](std::uint64_t seed) {
    auto bag = std::make_shared<Bag>(seed);
    auto* a = bag->add("a", normal_tensor({5, 3}, 0.8, bag->rng));
    auto* b = bag->add("b", normal_tensor({5, 3}, 0.8, bag->rng));
    return simple("exp0_distance", bag, [=](Tape& t) {
      return nn::geodesic_distance(nn::exp0(t.param(*a), kK2), nn::exp0(t.param(*b), kK2), kK2);
    });
  });
  r.emplace_back("lorentz_elu", [](std::uint64_t seed) {
    auto bag = std::make_shared<Bag>(seed);
    auto* x = bag->add("space", normal_tensor({5, 4}, 1.0, bag->rng));
    return simple("lorentz_elu", bag, [=](Tape& t) { return nn::lorentz_elu(nn::lift(t.param(*x), kK), kK); });
  });
  r.emplace_back("hcat", [](std::uint64_t seed) {
    auto bag = std::make_shared<Bag>(seed);
    auto* x = bag->add("space", normal_tensor({2, 3, 4}, 1.0, bag->rng));
    return simple("hcat", bag, [=](Tape& t) { return nn::hcat(nn::lift(t.param(*x), kK2), kK2); });
  });
  for (bool gated : {true, false}) {
    const std::string name = gated ? "lfc_gated" : "lfc_ungated_elu";
    r.emplace_back(name, [gated, name](std::uint64_t seed) {
      auto bag = std::make_shared<Bag>(seed);
      auto* x = bag->add("space", normal_tensor({5, 4}, 1.0, bag->rng));
      nn::LfcOptions o;
      o.gated = gated;
      o.activation = gated ? nn::LfcInputActivation::kIdentity : nn::LfcInputActivation::kElu;
      auto lfc = std::make_shared<nn::Lfc>("lfc", 4, 3, bag->rng, o);
      GradcheckCase c = simple(name, bag, [=](Tape& t) { return lfc->forward(t, nn::lift(t.param(*x), kK), kK); },
                               lfc->parameters());
      c.owner = std::make_shared<std::pair<std::shared_ptr<Bag>, std::shared_ptr<nn::Lfc>>>(bag, lfc);
      return c;
    });
  }
  r.emplace_back("lorentz_conv", [](std::uint64_t seed) {
    auto bag = std::make_shared<Bag>(seed);
    auto* x = bag->add("space", normal_tensor({1, 3, 4, 2}, 1.0, bag->rng));
    auto conv = std::make_shared<nn::LorentzConv>("conv", 2, 3, 2, 2, 1, bag->rng);
    GradcheckCase c = simple("lorentz_conv", bag, [=](Tape& t) { return conv->forward(t, nn::lift(t.param(*x), kK), kK); },
                             conv->parameters());
    c.owner = std::make_shared<std::pair<std::shared_ptr<Bag>, std::shared_ptr<nn::LorentzConv>>>(bag, conv);
    return c;
  });
  r.emplace_back("lorentz_centroid_pool", [](std::uint64_t seed) {
    auto bag = std::make_shared<Bag>(seed);
    auto* x = bag->add("space", normal_tensor({2, 2, 4, 3}, 1.0, bag->rng));
    return simple("lorentz_centroid_pool", bag, [=](Tape& t) {
      return nn::lorentz_avg_pool(nn::lift(t.param(*x), kK2), 1, 2, 1, 2, kK2);
    });
  });
  r.emplace_back("hmlr", [](std::uint64_t seed) {
    auto bag = std::make_shared<Bag>(seed);
    auto* x = bag->add("space", normal_tensor({5, 4}, 1.0, bag->rng));
    auto mlr = std::make_shared<nn::Hmlr>("mlr", 4, 3, bag->rng);
    for (auto& v : mlr->a.value.storage()) v = 0.3 * bag->rng.normal();
    GradcheckCase c = simple("hmlr", bag, [=](Tape& t) { return mlr->forward(t, nn::lift(t.param(*x), kK2), kK2); },
                             mlr->parameters());
    c.owner = std::make_shared<std::pair<std::shared_ptr<Bag>, std::shared_ptr<nn::Hmlr>>>(bag, mlr);
    return c;
  });
  r.emplace_back("gyroadd_gyroinverse", [](std::uint64_t seed) {
    auto bag = std::make_shared<Bag>(seed);
    auto* a = bag->add("a", normal_tensor({4, 3}, 0.9, bag->rng));
    auto* b = bag->add("b", normal_tensor({4, 3}, 0.9, bag->rng));
    return simple("gyroadd_gyroinverse", bag, [=](Tape& t) {
      return nn::gyroadd(nn::gyroinverse(nn::lift(t.param(*a), kK2)), nn::lift(t.param(*b), kK2), kK2);
    });
  });
  r.emplace_back("gyroscale", [](std::uint64_t seed) {
    auto bag = std::make_shared<Bag>(seed);
    auto* a = bag->add("space", normal_tensor({4, 3}, 0.9, bag->rng));
    Tensor tv(Shape{4, 1});
    for (auto& v : tv.storage()) v = bag->rng.uniform(0.3, 2.0);
    auto* s = bag->add("t", std::move(tv));
    return simple("gyroscale", bag, [=](Tape& t) { return nn::gyroscale(t.param(*s), nn::lift(t.param(*a), kK), kK); });
  });
  r.emplace_back("hbn_fixed_stats", [](std::uint64_t seed) {
    auto bag = std::make_shared<Bag>(seed);
    auto* a = bag->add("space", normal_tensor({6, 3}, 0.9, bag->rng));
    auto* g = bag->add("gamma", Tensor(Shape{1}, std::vector<double>{bag->rng.uniform(0.5, 1.5)}));
    Vec ms(3);
    for (auto& v : ms) v = 0.5 * bag->rng.normal();
    const LorentzPoint mean = lift_space(ms, kK2);
    const double var = bag->rng.uniform(0.3, 2.0);
    return simple("hbn_fixed_stats", bag, [=](Tape& t) {
      return hbn_apply(nn::lift(t.param(*a), kK2), mean, var, t.param(*g), kBnEpsilon, kK2);
    });
  });
  r.emplace_back("dsmdbn_frozen", [](std::uint64_t seed) {
    auto bag = std::make_shared<Bag>(seed);
    auto* a = bag->add("space", normal_tensor({8, 3}, 0.9, bag->rng));
    auto bn = std::make_shared<DomainBatchNorm>("bn", 3, kK, MomentumSchedule{}, kBnEpsilon, true);
    bn->log_gamma.value[0] = 0.2;
    const std::vector<int> doms{0, 1, 0, 1, 1, 0, 0, 1};
    {
      Tape t;
      bn->observe(nn::lift(t.constant(a->value), kK).value(), doms, BnMode::kTrain);
    }
    bn->set_frozen(true);
    GradcheckCase c = simple("dsmdbn_frozen", bag, [=](Tape& t) {
      return bn->forward(t, nn::lift(t.param(*a), kK), doms, BnMode::kTrain);
    }, bn->parameters());
    c.owner = std::make_shared<std::pair<std::shared_ptr<Bag>, std::shared_ptr<DomainBatchNorm>>>(bag, bn);
    return c;
  });
  r.emplace_back("busemann", [](std::uint64_t seed) {
    auto bag = std::make_shared<Bag>(seed);
    auto* a = bag->add("space", normal_tensor({5, 4}, 1.0, bag->rng));
    const Tensor dirs = sample_directions(4, 6, bag->rng);
    return simple("busemann", bag, [=](Tape& t) { return nn::busemann(nn::lift(t.param(*a), kK2), dirs, kK2); });
  });
  r.emplace_back("hhsw_loss", [](std::uint64_t seed) {
    auto bag = std::make_shared<Bag>(seed);
    auto* a = bag->add("space", normal_tensor({10, 3}, 0.8, bag->rng));
    const std::vector<int> doms{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
    const std::uint64_t draw = bag->rng.next();
    GradcheckCase c = simple("hhsw_loss", bag, [=](Tape& t) {
      Rng rng(draw);
      HhswOptions o{16, 2.0, ReferenceKind::kUnitSphere};
      return ad::reshape(hhsw_loss(nn::lift(t.param(*a), kK), doms, o, rng, kK), {1});
    });
    c.step = 1e-8;
    return c;
  });
  r.emplace_back("composite_loss", [](std::uint64_t seed) {
    auto bag = std::make_shared<Bag>(seed);
    ModelConfig mc;
    mc.channels = 3;
    mc.times = 14;
    mc.classes = 3;
    mc.temporal_filters = 2;
    mc.temporal_kernel = 4;
    mc.depth_multiplier = 2;
    mc.pool1 = 2;
    mc.pool2 = 2;
    mc.depth_kernel = 3;
    mc.hhsw_slices = 8;
    mc.seed = seed;
    auto model = std::make_shared<HeegnetModel>(mc);
    const std::size_t b = 6;
    const Tensor x = normal_tensor({b, mc.channels, mc.times}, 1.0, bag->rng);
    const std::vector<int> labels{0, 1, 2, 0, 1, 2}, doms{0, 0, 0, 1, 1, 1};
    const std::uint64_t draw = bag->rng.next();
    {
      // Populate the statistics once, then freeze them so the loss is a smooth function.
      Tape t;
      Rng rng(draw);
      model->forward(t, x, doms, BnMode::kTrain, &rng);
    }
    model->alignment().set_frozen(true);
    const auto state = std::make_shared<std::pair<EuclideanBnState, EuclideanBnState>>(model->bn_state(0), model->bn_state(1));
    GradcheckCase c = make_case("composite_loss", bag, model->parameters(), [=](Tape& t) {
      model->bn_state(0) = state->first;
      model->bn_state(1) = state->second;
      Rng rng(draw);
      return ad::reshape(model->training_loss(t, x, labels, doms, rng), {1});
    }, Shape{1});
    c.owner = std::make_shared<std::pair<std::shared_ptr<Bag>, std::shared_ptr<HeegnetModel>>>(bag, model);
    c.step = 1e-8;
    return c;
  });
  return r;
}

Var flip_backward(Var x) {
  return x.tape().record(x.value(), {x}, [x](Tape& t, const Tensor& g, const Tensor&) {
    Tensor neg(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) neg[i] = -g[i];
    t.accumulate(x, neg);
  });
}

double eval_loss(GradcheckCase& c) {
  Tape t;
  return c.loss(t).value().item();
}

}  // namespace

bool GradcheckReport::all_passed() const {
  return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const GradcheckRow& r) { return r.passed; });
}

const std::vector<std::pair<std::string, GradcheckFactory>>& gradcheck_registry() {
  static const auto reg = build_registry();
  return reg;
}

double gradcheck_case(GradcheckCase& c, const GradcheckOptions& options, std::uint64_t seed, std::size_t* coords) {
  const bool flip = !options.inject_sign_flip.empty() && (options.inject_sign_flip == "*" || options.inject_sign_flip == c.name);
  for (auto* p : c.params) p->zero_grad();
  {
    Tape t;
    Var loss = c.loss(t);
    if (flip) loss = flip_backward(loss);
    t.backward(loss);
  }
  Rng pick(mix_seed(seed, 0x504943ULL));
  struct Sums {
    double diff = 0.0, a = 0.0, n = 0.0;
  };
  std::vector<Sums> per;
  Sums all;
  std::size_t checked = 0;
  for (auto* p : c.params) {
    const std::size_t n = p->value.size();
    std::vector<std::size_t> idx = pick.sample_without_replacement(n, std::min(n, options.max_coords));
    std::sort(idx.begin(), idx.end());
    Sums s;
    for (auto i : idx) {
      const double orig = p->value[i];
      const double h = (c.step > 0.0 ? c.step : options.step) * std::max(1.0, std::abs(orig));
      p->value[i] = orig + h;
      const double up = eval_loss(c);
      p->value[i] = orig - h;
      const double down = eval_loss(c);
      p->value[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad[i];
      s.diff += (analytic - numeric) * (analytic - numeric);
      s.a += analytic * analytic;
      s.n += numeric * numeric;
    }
    checked += idx.size();
    all.diff += s.diff;
    all.a += s.a;
    all.n += s.n;
    per.push_back(s);
  }
  if (coords) *coords += checked;
  auto rel = [&](const Sums& s) {
    return std::sqrt(s.diff) / std::max({std::sqrt(s.a), std::sqrt(s.n), options.abs_floor});
  };
  double worst = rel(all);
  // Tensors whose gradient is negligible next to the whole case (e.g. a shift cancelled by a
  // later normalization) only measure finite-difference noise.
  const double scale = std::max(std::sqrt(all.a), std::sqrt(all.n));
  for (const auto& s : per) {
    if (std::max(std::sqrt(s.a), std::sqrt(s.n)) >= options.tensor_fraction * scale) worst = std::max(worst, rel(s));
  }
  return std::isfinite(worst) ? worst : std::numeric_limits<double>::infinity();
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  if (options.seeds.empty()) throw ValidationError("gradcheck needs at least one seed");
  GradcheckReport report;
  for (const auto& [name, factory] : gradcheck_registry()) {
    if (!options.filter.empty() && name.find(options.filter) == std::string::npos) continue;
    GradcheckRow row;
    row.name = name;
    for (auto seed : options.seeds) {
      GradcheckCase c = factory(seed);
      row.max_rel_err = std::max(row.max_rel_err, gradcheck_case(c, options, seed, &row.coords));
      ++row.seeds;
    }
    row.passed = row.max_rel_err < options.tolerance;
    report.rows.push_back(row);
  }
  if (report.rows.empty()) throw ValidationError("no gradcheck case matches '" + options.filter + "'");
  return report;
}

}  // namespace lorentzkit
