#include "wsp/gradcheck.hpp"

#include <algorithm>

namespace wsp {

BatchMeta random_view_meta(Rng& rng, std::size_t slices, int classes) {
  std::uniform_int_distribution<int> label(0, classes - 1);
  std::uniform_real_distribution<double> depth(0.0, 1.0);
  BatchMeta meta;
  meta.views.resize(2 * slices);
  for (std::size_t s = 0; s < slices; ++s) {
    const auto id = static_cast<std::int64_t>(s);
    const ViewMeta v{label(rng), depth(rng), id, id};
    meta.views[s] = v;
    meta.views[slices + s] = v;
  }
  return meta;
}

GradcheckResult gradcheck_loss(LossKind kind, std::uint64_t seed, std::size_t batches, double eps) {
  Rng rng = make_rng(seed, {0x67636b, static_cast<std::uint64_t>(kind)});
  std::uniform_int_distribution<std::size_t> slices_dist(2, 4);
  std::uniform_int_distribution<std::size_t> dim_dist(2, 16);
  std::uniform_real_distribution<double> sigma_dist(0.05, 0.5);
  std::normal_distribution<double> gauss(0.0, 1.0);

  GradcheckResult result{kind, batches, 0.0};
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t slices = slices_dist(rng);
    const std::size_t dim = dim_dist(rng);
    const BatchMeta meta = random_view_meta(rng, slices, 3);
    LossConfig cfg;
    cfg.kind = kind;
    cfg.sigma = sigma_dist(rng);
    Tensor x({2 * slices, dim});
    for (double& v : x.values()) v = gauss(rng);

    auto value = [&](const Tensor& t) {
      Tape tape;
      return contrastive_loss(l2_normalize(tape.constant(t)), meta, cfg).value()[0];
    };
    Tape tape;
    Var p = tape.parameter(x);
    tape.backward(contrastive_loss(l2_normalize(p), meta, cfg));
    const double err = max_relative_error(tape.grad(p), finite_diff_gradient(value, x, eps), 1e-6);
    result.max_rel_error = std::max(result.max_rel_error, err);
  }
  return result;
}

std::vector<GradcheckResult> gradcheck_all_losses(std::uint64_t seed, std::size_t batches, double eps) {
  std::vector<GradcheckResult> out;
  for (LossKind kind : {LossKind::wsp, LossKind::supcon, LossKind::depth_aware, LossKind::infonce}) {
    out.push_back(gradcheck_loss(kind, seed, batches, eps));
  }
  return out;
}

}  // namespace wsp
