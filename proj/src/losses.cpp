#include "navfeat/losses.hpp"

#include <algorithm>
#include <limits>

namespace navfeat {

double Softplus(double x) {
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double DetectionActivation(double x) {
  const double sp = Softplus(x);
  return sp / (sp + 1.0);
}

double R2D2CosimLoss(const ImageF& rep_a, const ImageF& rep_b, const CorrespondenceField& corr,
                     int n_rep, int stride) {
  Check(n_rep >= 1, ErrorCode::kInvalidArgument, "patch size must be positive");
  Check(corr.width() == rep_a.width() && corr.height() == rep_a.height(),
        ErrorCode::kInvalidArgument, "correspondence field does not match map A");
  if (stride <= 0) stride = std::max(1, n_rep / 2);
  const double fallback = rep_b(rep_b.width() - 1, rep_b.height() - 1);
  double sum = 0.0;
  std::size_t count = 0;
  for (int y0 = 0; y0 + n_rep <= rep_a.height(); y0 += stride) {
    for (int x0 = 0; x0 + n_rep <= rep_a.width(); x0 += stride) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (int y = y0; y < y0 + n_rep; ++y)
        for (int x = x0; x < x0 + n_rep; ++x) {
          const double s = rep_a(x, y);
          double t = fallback;
          if (corr.Valid(x, y)) {
            const auto p = corr.At(x, y);
            t = SampleBilinear(rep_b, p.x(), p.y());
          }
          dot += s * t;
          na += s * s;
          nb += t * t;
        }
      if (na <= 0.0 || nb <= 0.0) continue;
      sum += dot / (std::sqrt(na) * std::sqrt(nb));
      ++count;
    }
  }
  return count > 0 ? -sum / static_cast<double>(count) : 0.0;
}

double R2D2PeakyLoss(const std::vector<ImageF>& reps, int n_rep) {
  Check(n_rep >= 1, ErrorCode::kInvalidArgument, "patch size must be positive");
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& rep : reps) {
    for (int y0 = 0; y0 + n_rep <= rep.height(); ++y0)
      for (int x0 = 0; x0 + n_rep <= rep.width(); ++x0) {
        double mx = -std::numeric_limits<double>::infinity();
        double total = 0.0;
        for (int y = y0; y < y0 + n_rep; ++y)
          for (int x = x0; x < x0 + n_rep; ++x) {
            mx = std::max<double>(mx, rep(x, y));
            total += rep(x, y);
          }
        sum += mx - total / (n_rep * n_rep);
        ++count;
      }
  }
  return count > 0 ? -sum / static_cast<double>(count) : 0.0;
}

double ApQuantized(const std::vector<double>& similarities, std::size_t positive, int bins) {
  Check(bins >= 2, ErrorCode::kInvalidArgument, "quantized AP needs at least two bins");
  Check(positive < similarities.size(), ErrorCode::kInvalidArgument, "positive index out of range");
  const double delta = 2.0 / (bins - 1);
  std::vector<double> pos(bins, 0.0), all(bins, 0.0);
  for (std::size_t i = 0; i < similarities.size(); ++i) {
    const double s = std::clamp(similarities[i], -1.0, 1.0);
    // Only the two bins around s receive weight.
    const double f = (1.0 - s) / delta;
    const int m0 = std::min(bins - 1, static_cast<int>(std::floor(f)));
    for (int m = m0; m <= std::min(bins - 1, m0 + 1); ++m) {
      const double w = std::max(0.0, 1.0 - std::abs(s - (1.0 - m * delta)) / delta);
      all[m] += w;
      if (i == positive) pos[m] += w;
    }
  }
  double cum_pos = 0.0, cum_all = 0.0, ap = 0.0;
  for (int m = 0; m < bins; ++m) {
    cum_pos += pos[m];
    cum_all += all[m];
    if (pos[m] > 0.0 && cum_all > 0.0) ap += cum_pos / cum_all * pos[m];
  }
  return ap;  // a single positive has unit total mass
}

void R2D2LossParams::Validate() const {
  Check(alpha > 0, ErrorCode::kInvalidArgument, "alpha must be positive");
  Check(beta >= 0 && beta <= 1, ErrorCode::kInvalidArgument, "beta must lie in [0, 1]");
  Check(kappa >= 0 && kappa < 1, ErrorCode::kInvalidArgument, "kappa must lie in [0, 1)");
  Check(kappa_warmup_steps >= 0 && n_rep >= 1 && ap_bins >= 2 && query_stride >= 1,
        ErrorCode::kInvalidArgument, "invalid R2D2 loss parameters");
  Check(r_pos >= 0 && r_neg > r_pos, ErrorCode::kInvalidArgument, "need 0 <= r_pos < r_neg");
}

double EffectiveKappa(const R2D2LossParams& params, int step) {
  if (params.kappa_warmup_steps <= 0) return params.kappa;
  return params.kappa * std::clamp(static_cast<double>(step) / params.kappa_warmup_steps, 0.0, 1.0);
}

namespace {

double Similarity(const DenseFeatureMap& a, int ax, int ay, const DenseFeatureMap& b, int bx,
                  int by) {
  const float* da = a.descriptor(ax, ay);
  const float* db = b.descriptor(bx, by);
  double s = 0.0;
  for (int k = 0; k < a.dim; ++k) s += static_cast<double>(da[k]) * db[k];
  return std::clamp(s, -1.0, 1.0);
}

}  // namespace

double R2D2ApLoss(const DenseFeatureMap& desc_a, const DenseFeatureMap& desc_b,
                  const ImageF& rel_a, const CorrespondenceField& corr,
                  const R2D2LossParams& params, int step, std::uint64_t seed) {
  params.Validate();
  Check(desc_a.dim == desc_b.dim, ErrorCode::kInvalidArgument, "descriptor dimensions differ");
  Check(corr.width() == desc_a.width && corr.height() == desc_a.height &&
            rel_a.width() == desc_a.width && rel_a.height() == desc_a.height,
        ErrorCode::kInvalidArgument, "map sizes do not match");
  Rng rng(seed);
  std::vector<std::pair<int, int>> valid;
  for (int y = 0; y < corr.height(); ++y)
    for (int x = 0; x < corr.width(); ++x)
      if (corr.Valid(x, y)) valid.emplace_back(x, y);
  if (valid.empty()) return 0.0;
  const auto stride = static_cast<std::size_t>(params.query_stride);
  const auto q_start = static_cast<std::size_t>(
      rng.UniformInt(0, static_cast<std::int64_t>(std::min(stride, valid.size())) - 1));
  const std::size_t nb = static_cast<std::size_t>(desc_b.width) * desc_b.height;
  const auto g_start = static_cast<std::size_t>(
      rng.UniformInt(0, static_cast<std::int64_t>(std::min(stride, nb)) - 1));

  const double kappa = EffectiveKappa(params, step);
  const int reach = static_cast<int>(std::ceil(params.r_neg + 0.5));
  double sum = 0.0;
  std::size_t count = 0;
  std::vector<double> sims;
  for (std::size_t qi = q_start; qi < valid.size(); qi += stride) {
    const auto [ax, ay] = valid[qi];
    const Eigen::Vector2d g = corr.At(ax, ay);
    // Positive: most similar B pixel within r_pos of the ideal location.
    bool found = false;
    double best = -std::numeric_limits<double>::infinity();
    const int r = static_cast<int>(std::ceil(params.r_pos));
    for (int y = static_cast<int>(std::floor(g.y())) - r; y <= static_cast<int>(std::ceil(g.y())) + r; ++y)
      for (int x = static_cast<int>(std::floor(g.x())) - r; x <= static_cast<int>(std::ceil(g.x())) + r; ++x) {
        if (x < 0 || y < 0 || x >= desc_b.width || y >= desc_b.height) continue;
        if ((Eigen::Vector2d(x, y) - g).norm() > params.r_pos) continue;
        const double s = Similarity(desc_a, ax, ay, desc_b, x, y);
        if (s > best) {
          best = s;
          found = true;
        }
      }
    if (!found) continue;
    sims.assign(1, best);
    // Hard distractors on the one-pixel ring at r_neg.
    for (int y = static_cast<int>(std::floor(g.y())) - reach; y <= static_cast<int>(std::ceil(g.y())) + reach; ++y)
      for (int x = static_cast<int>(std::floor(g.x())) - reach; x <= static_cast<int>(std::ceil(g.x())) + reach; ++x) {
        if (x < 0 || y < 0 || x >= desc_b.width || y >= desc_b.height) continue;
        const double d = (Eigen::Vector2d(x, y) - g).norm();
        if (d < params.r_neg - 0.5 || d >= params.r_neg + 0.5) continue;
        sims.push_back(Similarity(desc_a, ax, ay, desc_b, x, y));
      }
    // Global distractors outside the r_neg disk.
    for (std::size_t bi = g_start; bi < nb; bi += stride) {
      const int x = static_cast<int>(bi % desc_b.width);
      const int y = static_cast<int>(bi / desc_b.width);
      if ((Eigen::Vector2d(x, y) - g).norm() < params.r_neg + 0.5) continue;
      sims.push_back(Similarity(desc_a, ax, ay, desc_b, x, y));
    }
    const double ap = ApQuantized(sims, 0, params.ap_bins);
    const double rq = rel_a(ax, ay);
    sum += ap * rq + kappa * (1.0 - rq);
    ++count;
  }
  return count > 0 ? -sum / static_cast<double>(count) : 0.0;
}

double R2D2TotalLoss(double ap, double cosim, double peaky, double alpha, double beta) {
  return ap + 2.0 * (1.0 - beta) * alpha * cosim + 2.0 * beta * alpha * peaky;
}

void DiskLossParams::Validate() const {
  Check(rho_tp > 0 && rho_fp <= 0, ErrorCode::kInvalidArgument, "need rho_tp > 0 >= rho_fp");
  Check(theta_m > 0 && epsilon >= 0 && cell >= 1 && lambda_kp >= 0, ErrorCode::kInvalidArgument,
        "invalid DISK loss parameters");
}

namespace {

template <typename Fn>
void ForEachCell(int w, int h, int cell, Fn fn) {
  for (int y0 = 0; y0 < h; y0 += cell)
    for (int x0 = 0; x0 < w; x0 += cell) fn(x0, y0, std::min(cell, w - x0), std::min(cell, h - y0));
}

// Softmax weights of a cell in row-major order.
std::vector<double> CellSoftmax(const ImageF& logits, int x0, int y0, int cw, int ch) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int y = y0; y < y0 + ch; ++y)
    for (int x = x0; x < x0 + cw; ++x) mx = std::max<double>(mx, logits(x, y));
  std::vector<double> p;
  p.reserve(static_cast<std::size_t>(cw) * ch);
  if (!std::isfinite(mx)) {
    p.assign(static_cast<std::size_t>(cw) * ch, 1.0 / (cw * ch));
    return p;
  }
  double total = 0.0;
  for (int y = y0; y < y0 + ch; ++y)
    for (int x = x0; x < x0 + cw; ++x) {
      p.push_back(std::exp(static_cast<double>(logits(x, y)) - mx));
      total += p.back();
    }
  for (auto& v : p) v /= total;
  return p;
}

}  // namespace

std::vector<DiskSample> DiskSampleFeatures(const ImageF& K, const ImageF* logits, int cell,
                                           std::uint64_t seed) {
  Check(cell >= 1, ErrorCode::kInvalidArgument, "cell size must be positive");
  const ImageF& L = logits ? *logits : K;
  Check(L.width() == K.width() && L.height() == K.height(), ErrorCode::kInvalidArgument,
        "logit grid does not match detection grid");
  Rng rng(seed);
  std::vector<DiskSample> out;
  ForEachCell(K.width(), K.height(), cell, [&](int x0, int y0, int cw, int ch) {
    const auto p = CellSoftmax(L, x0, y0, cw, ch);
    double u = rng.Uniform();
    std::size_t pick = p.size() - 1;
    for (std::size_t i = 0; i < p.size(); ++i) {
      u -= p[i];
      if (u < 0) {
        pick = i;
        break;
      }
    }
    while (p[pick] == 0.0 && pick > 0) --pick;  // guard against rounding at the tail
    const int x = x0 + static_cast<int>(pick) % cw;
    const int y = y0 + static_cast<int>(pick) / cw;
    const double k = K(x, y);
    if (rng.Uniform() < k) out.push_back({x, y, p[pick] * k});
  });
  return out;
}

ImageF DiskAcceptanceProbability(const ImageF& K, const ImageF* logits, int cell) {
  const ImageF& L = logits ? *logits : K;
  ImageF out(K.width(), K.height());
  ForEachCell(K.width(), K.height(), cell, [&](int x0, int y0, int cw, int ch) {
    const auto p = CellSoftmax(L, x0, y0, cw, ch);
    for (int y = y0; y < y0 + ch; ++y)
      for (int x = x0; x < x0 + cw; ++x)
        out(x, y) = static_cast<float>(p[static_cast<std::size_t>(y - y0) * cw + (x - x0)] * K(x, y));
  });
  return out;
}

std::vector<DiskFeature> AttachDescriptors(const std::vector<DiskSample>& samples,
                                           const DenseFeatureMap& map) {
  std::vector<DiskFeature> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    DiskFeature f;
    f.position = Eigen::Vector2d(s.x, s.y);
    f.prob = s.prob;
    f.descriptor = Eigen::Map<const Eigen::VectorXf>(map.descriptor(s.x, s.y), map.dim);
    out.push_back(std::move(f));
  }
  return out;
}

Eigen::MatrixXd DiskMatchProbability(const std::vector<Eigen::VectorXf>& desc_a,
                                     const std::vector<Eigen::VectorXf>& desc_b, double theta_m) {
  const auto na = static_cast<Eigen::Index>(desc_a.size());
  const auto nb = static_cast<Eigen::Index>(desc_b.size());
  Check(na > 0 && nb > 0, ErrorCode::kInvalidArgument, "descriptor sets must be non-empty");
  Eigen::MatrixXd logits(na, nb);
  for (Eigen::Index i = 0; i < na; ++i)
    for (Eigen::Index j = 0; j < nb; ++j)
      logits(i, j) = -theta_m * DescriptorDistance(desc_a[i], desc_b[j]);
  Eigen::MatrixXd fwd(na, nb), bwd(na, nb);
  for (Eigen::Index i = 0; i < na; ++i) {
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
    fwd.row(i) = e / e.sum();
  }
  for (Eigen::Index j = 0; j < nb; ++j) {
    const double mx = logits.col(j).maxCoeff();
    const Eigen::VectorXd e = (logits.col(j).array() - mx).exp().matrix();
    bwd.col(j) = e / e.sum();
  }
  return fwd.cwiseProduct(bwd);
}

DiskLoss ComputeDiskLoss(const std::vector<DiskFeature>& fa, const std::vector<DiskFeature>& fb,
                         const CorrespondenceField& corr, const DiskLossParams& params) {
  params.Validate();
  DiskLoss out;
  for (const auto& f : fa) out.keypoint += std::log(f.prob);
  for (const auto& f : fb) out.keypoint += std::log(f.prob);
  if (!fa.empty() && !fb.empty()) {
    std::vector<Eigen::VectorXf> da, db;
    for (const auto& f : fa) da.push_back(f.descriptor);
    for (const auto& f : fb) db.push_back(f.descriptor);
    const Eigen::MatrixXd P = DiskMatchProbability(da, db, params.theta_m);
    for (std::size_t i = 0; i < fa.size(); ++i) {
      const auto gt = corr.Lookup(fa[i].position.x(), fa[i].position.y());
      if (!gt) continue;
      for (std::size_t j = 0; j < fb.size(); ++j) {
        const double pij = P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        const double reward =
            (fb[j].position - *gt).norm() <= params.epsilon ? params.rho_tp : params.rho_fp;
        const double gamma = std::log(pij) + std::log(fa[i].prob) + std::log(fb[j].prob);
        out.reinforce -= pij * reward * gamma;
      }
    }
  }
  out.total = out.reinforce + params.lambda_kp * out.keypoint;
  return out;
}

double BinaryCrossEntropy(double prediction, double target, double clamp) {
  const double p = std::clamp(prediction, clamp, 1.0 - clamp);
  return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

double LafeDistillLoss(const LafeLossInputs& in) {
  Check(in.student && in.teacher, ErrorCode::kInvalidArgument, "student and teacher maps required");
  const auto& s = *in.student;
  const auto& t = *in.teacher;
  Check(s.width == t.width && s.height == t.height && s.dim == t.dim,
        ErrorCode::kInvalidArgument, "student and teacher shapes differ");
  double desc = 0.0;
  for (std::size_t i = 0; i < s.descriptors.size(); ++i) {
    const double d = static_cast<double>(s.descriptors[i]) - t.descriptors[i];
    desc += d * d;
  }
  double bce = 0.0;
  for (std::size_t i = 0; i < s.detection.size(); ++i)
    bce += BinaryCrossEntropy(s.detection.data()[i], t.detection.data()[i]);
  return std::exp(-in.w1) * desc + 2.0 * std::exp(-in.w2) * bce + in.w1 + in.w2;
}

}  // namespace navfeat
