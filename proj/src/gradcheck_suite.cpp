#include "poselift/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>

#include "poselift/gradcheck.hpp"
#include "poselift/losses.hpp"
#include "poselift/network.hpp"
#include "poselift/ops.hpp"
#include "poselift/rng.hpp"

namespace poselift::gradcore {

namespace {

// Random values kept away from zero so relu kinks and norm kinks stay
// clear of the finite-difference step.
std::vector<double> rand_away_from_zero(Rng& rng, std::size_t n, double lo = 0.05,
                                        double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) {
    const double mag = rng.uniform(lo, hi);
    x = rng.uniform() < 0.5 ? -mag : mag;
  }
  return v;
}

Tensor rand_tensor(Rng& rng, Shape shape, double lo = 0.05, double hi = 1.0) {
  return Tensor::constant(shape, rand_away_from_zero(rng, numel(shape), lo, hi));
}

double check(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
             const std::vector<Tensor>& inputs, double h) {
  return grad_check(fn, inputs, h).max_rel_err();
}

skeleton::SkeletonModel tiny_skeleton() {
  skeleton::SkeletonModel s;
  s.joint_count = 4;
  s.root = 0;
  s.parents = {0, 0, 1, 1};
  s.bone_lengths_mm = {0, 120, 90, 80};
  s.joint_names = {"root", "a", "b", "c"};
  s.validate();
  return s;
}

network::ModelConfig tiny_model() {
  network::ModelConfig c;
  c.input_size = 8;
  c.input_channels = 1;
  c.latent_channels = 8;
  c.heatmap_channels = 4;
  c.latent_spatial = 4;
  c.z_dim = 16;
  c.lifting_width = 16;
  c.lifting_layers = 2;
  c.camera_hidden = 8;
  c.backbone_blocks = {{4, 2}, {8, 1}};
  c.validate();
  return c;
}

}  // namespace

std::vector<SuiteResult> run_gradcheck_suite(std::uint64_t seed, double h) {
  Rng rng(Rng::mix(seed, 0x6c));
  std::vector<SuiteResult> out;
  auto record = [&](const std::string& name, double err) {
    out.push_back({name, err});
  };

  {  // relu over 10 random shapes
    double worst = 0;
    for (int i = 0; i < 10; ++i) {
      Shape shape{1 + rng.below(4), 1 + rng.below(6)};
      Tensor x = rand_tensor(rng, shape);
      worst = std::max(worst, check([](const std::vector<Tensor>& in) {
                         return sum(relu(in[0]));
                       }, {x}, h));
    }
    record("relu", worst);
  }
  {  // linear over 10 random shapes
    double worst = 0;
    for (int i = 0; i < 10; ++i) {
      const std::size_t B = 1 + rng.below(3), I = 1 + rng.below(5), O = 1 + rng.below(4);
      Tensor x = rand_tensor(rng, {B, I});
      Tensor w = rand_tensor(rng, {I, O});
      Tensor b = rand_tensor(rng, {O});
      Tensor t = rand_tensor(rng, {B, O});
      worst = std::max(worst, check(
                                  [&](const std::vector<Tensor>& in) {
                                    return mse(linear(in[0], in[1], in[2]), t);
                                  },
                                  {x, w, b}, h));
    }
    record("linear", worst);
  }
  {  // conv2d over 10 random shapes
    double worst = 0;
    for (int i = 0; i < 10; ++i) {
      const std::size_t B = 1 + rng.below(2), C = 1 + rng.below(3);
      const std::size_t H = 3 + rng.below(4), W = 3 + rng.below(4);
      const std::size_t F = 1 + rng.below(3);
      const std::size_t k = rng.below(2) ? 3 : 1;
      const std::size_t stride = 1 + rng.below(2), pad = rng.below(2);
      Tensor x = rand_tensor(rng, {B, C, H, W});
      Tensor kt = rand_tensor(rng, {F, C, k, k});
      worst = std::max(worst, check(
                                  [&](const std::vector<Tensor>& in) {
                                    return sum(conv2d(in[0], in[1], stride, pad));
                                  },
                                  {x, kt}, h));
    }
    record("conv2d", worst);
  }
  {
    Tensor x = rand_tensor(rng, {2, 3, 4, 4});
    Tensor b = rand_tensor(rng, {3});
    record("bias_channels", check(
                                [](const std::vector<Tensor>& in) {
                                  return sum(mul(bias_channels(in[0], in[1]),
                                                 bias_channels(in[0], in[1])));
                                },
                                {x, b}, h));
  }
  {  // mse over 10 random shapes
    double worst = 0;
    for (int i = 0; i < 10; ++i) {
      Shape shape{1 + rng.below(3), 1 + rng.below(6)};
      Tensor a = rand_tensor(rng, shape);
      Tensor b = rand_tensor(rng, shape);
      worst = std::max(worst, check([](const std::vector<Tensor>& in) {
                         return mse(in[0], in[1]);
                       }, {a, b}, h));
    }
    record("mse", worst);
  }
  {
    Tensor a = rand_tensor(rng, {3, 4});
    Tensor b = rand_tensor(rng, {3, 4});
    record("add", check([](const std::vector<Tensor>& in) {
             return sum(mul(add(in[0], in[1]), add(in[0], in[1])));
           }, {a, b}, h));
    record("sub", check([](const std::vector<Tensor>& in) {
             return sum(mul(sub(in[0], in[1]), sub(in[0], in[1])));
           }, {a, b}, h));
    record("mul", check([](const std::vector<Tensor>& in) {
             return sum(mul(in[0], in[1]));
           }, {a, b}, h));
    record("scale", check([](const std::vector<Tensor>& in) {
             return sum(scale(in[0], -2.5));
           }, {a}, h));
    record("sum", check([](const std::vector<Tensor>& in) {
             return mse(sum(in[0]), Tensor::scalar_const(1.0));
           }, {a}, h));
    record("reshape", check([](const std::vector<Tensor>& in) {
             return mse(reshape(in[0], {2, 6}), Tensor::zeros({2, 6}));
           }, {a}, h));
  }
  {
    Tensor x = rand_tensor(rng, {2, 4, 3, 3});
    record("slice_channels", check(
                                 [](const std::vector<Tensor>& in) {
                                   Tensor a = slice_channels(in[0], 0, 2);
                                   Tensor b = slice_channels(in[0], 2, 4);
                                   return add(sum(mul(a, a)), sum(b));
                                 },
                                 {x}, h));
    record("concat_channels", check(
                                  [](const std::vector<Tensor>& in) {
                                    Tensor a = slice_channels(in[0], 0, 1);
                                    Tensor b = slice_channels(in[0], 1, 4);
                                    Tensor c = concat_channels(a, b);
                                    return mse(c, Tensor::zeros(c.shape()));
                                  },
                                  {x}, h));
    Tensor rows = rand_tensor(rng, {5, 3});
    record("slice_rows", check(
                             [](const std::vector<Tensor>& in) {
                               Tensor mid = slice_rows(in[0], 1, 4);
                               return sum(mul(mid, mid));
                             },
                             {rows}, h));
  }

  const skeleton::SkeletonModel skel = tiny_skeleton();
  const std::size_t K = skel.joint_count;
  {
    Tensor p = rand_tensor(rng, {2, 3 * K}, 10.0, 200.0);
    Tensor cam = rand_tensor(rng, {2, 4}, 0.2, 2.0);
    record("project_points", check(
                                 [](const std::vector<Tensor>& in) {
                                   Tensor p2 = project_points(in[0], in[1]);
                                   return mse(p2, Tensor::zeros(p2.shape()));
                                 },
                                 {p, cam}, h));
    record("bone_deltas", check(
                              [&](const std::vector<Tensor>& in) {
                                Tensor bd = bone_deltas(in[0], skel.parents, skel.root);
                                return mse(bd, Tensor::zeros(bd.shape()));
                              },
                              {p}, h));
    record("norms3", check(
                         [&](const std::vector<Tensor>& in) {
                           Tensor bl = norms3(bone_deltas(in[0], skel.parents, skel.root));
                           return mse(bl, Tensor::full({2, K - 1}, 100.0));
                         },
                         {p}, h));
  }

  // Losses against a consistent random sample.
  {
    Rng pr(Rng::mix(seed, 0x77));
    skeleton::Pose3D gt;
    gt.root_index = skel.root;
    gt.joints.push_back({0, 0, 0});
    for (std::size_t j = 1; j < K; ++j)
      gt.joints.push_back({pr.uniform(-200, 200), pr.uniform(-200, 200),
                           pr.uniform(-200, 200)});
    skeleton::Pose2D gt2;
    for (std::size_t j = 0; j < K; ++j)
      gt2.joints.push_back({pr.uniform(0, 16), pr.uniform(0, 16)});
    std::vector<double> ref(K - 1, 110.0);

    Tensor p3d = rand_tensor(rng, {1, 3 * K}, 10.0, 200.0);
    record("loss_3dpose", check(
                              [&](const std::vector<Tensor>& in) {
                                return losses::loss_3dpose(in[0], gt);
                              },
                              {p3d}, h));
    record("loss_bone_3d", check(
                               [&](const std::vector<Tensor>& in) {
                                 return losses::loss_bone_3d(in[0], gt, skel);
                               },
                               {p3d}, h));
    record("loss_bone_2d", check(
                               [&](const std::vector<Tensor>& in) {
                                 return losses::loss_bone_2d(in[0], ref, skel);
                               },
                               {p3d}, h));
    Tensor heat = rand_tensor(rng, {K, 4, 4}, 0.05, 1.0);
    Tensor heat_gt = rand_tensor(rng, {K, 4, 4}, 0.05, 1.0);
    record("loss_heatmap", check(
                               [&](const std::vector<Tensor>& in) {
                                 return losses::loss_heatmap(in[0], heat_gt);
                               },
                               {heat}, h));
    Tensor cam = rand_tensor(rng, {1, 4}, 0.2, 2.0);
    record("loss_projection", check(
                                  [&](const std::vector<Tensor>& in) {
                                    Tensor p2 = project_points(in[0], in[1]);
                                    return losses::loss_projection(p2, gt2);
                                  },
                                  {p3d, cam}, h));
  }

  // Composite: the full model forward and total objective with respect to
  // every parameter and the image. The targets are O(1) so that every
  // gradient in the chain stays within finite-difference resolution; scale
  // does not change which backward paths run.
  {
    const network::ModelConfig mc = tiny_model();
    skeleton::SkeletonModel sk = tiny_skeleton();
    sk.bone_lengths_mm = {0, 1.2, 0.9, 0.8};
    network::ParamStore store = network::init_params(mc, Rng::mix(seed, 0x99));

    Rng dr(Rng::mix(seed, 0xAB));
    losses::AnnotatedSample full, only;
    auto make_sample = [&](losses::SampleKind kind) {
      losses::AnnotatedSample s;
      s.kind = kind;
      s.image = rand_tensor(dr, {1, mc.input_size, mc.input_size});
      s.gt_heatmaps = rand_tensor(dr, {K, mc.latent_spatial, mc.latent_spatial}, 0.0, 1.0);
      for (std::size_t j = 0; j < K; ++j)
        s.gt_2d.joints.push_back({dr.uniform(0, 4), dr.uniform(0, 4)});
      if (kind == losses::SampleKind::Full3D) {
        skeleton::Pose3D gt;
        gt.root_index = sk.root;
        gt.joints.push_back({0, 0, 0});
        for (std::size_t j = 1; j < K; ++j)
          gt.joints.push_back({dr.uniform(-1.5, 1.5), dr.uniform(-1.5, 1.5),
                               dr.uniform(-1.5, 1.5)});
        s.gt_3d = gt;
        s.ref_bone_lengths_mm = bone_lengths(gt, sk);
      } else {
        s.ref_bone_lengths_mm.assign(K - 1, 1.0);
      }
      return s;
    };
    full = make_sample(losses::SampleKind::Full3D);
    only = make_sample(losses::SampleKind::Only2D);
    std::vector<const losses::AnnotatedSample*> batch{&full, &only};

    std::vector<double> img;
    img.insert(img.end(), full.image.values().begin(), full.image.values().end());
    img.insert(img.end(), only.image.values().begin(), only.image.values().end());

    std::vector<Tensor> inputs;
    std::vector<std::string> names;
    for (const auto& e : store.entries) {
      inputs.push_back(Tensor::constant(e.shape, *e.data));
      names.push_back(e.name);
    }
    inputs.push_back(Tensor::constant({2, 1, mc.input_size, mc.input_size}, img));
    names.push_back("image");

    losses::LossWeights w;  // defaults exercise every term
    auto fn = [&](const std::vector<Tensor>& in) {
      network::Binding binding;
      for (std::size_t i = 0; i < store.entries.size(); ++i)
        binding.emplace(store.entries[i].name, in[i]);
      network::BatchForward bf =
          network::model_forward_batch(in.back(), binding, mc);
      return losses::total_loss_batch(bf, batch, 1, w, sk);
    };
    record("model_composite", grad_check(fn, inputs, h, names).max_rel_err());
  }

  return out;
}

double suite_worst(const std::vector<SuiteResult>& results) {
  double worst = 0;
  for (const SuiteResult& r : results) worst = std::max(worst, r.max_rel_err);
  return worst;
}

}  // namespace poselift::gradcore
