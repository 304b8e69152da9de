#include "mmpatch/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include <json.hpp>

#include "mmpatch/errors.hpp"
#include "mmpatch/sampling.hpp"

namespace mmpatch {

std::vector<Detection> to_detections(std::span<const Candidate> candidates, DetectorKind kind,
                                     double conf_thresh) {
  std::vector<Detection> out;
  for (const Candidate& c : candidates) {
    for (std::size_t k = 0; k < c.class_scores.size(); ++k) {
      const double s = kind == DetectorKind::two_stage ? c.class_scores[k]
                                                       : c.objectness * c.class_scores[k];
      if (s >= conf_thresh) out.push_back(Detection{c.box, s, static_cast<int>(k)});
    }
  }
  return out;
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_thresh, double conf_thresh) {
  std::erase_if(dets, [&](const Detection& d) { return d.score < conf_thresh; });
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (const Detection& d : dets) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.class_id == d.class_id && iou(k.box, d.box) > iou_thresh;
    });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

namespace {

// Indices of GT boxes matched by each detection (-1 if none), processing
// detections of one image in the given order.
int match_detection(const Detection& d, std::span<const BoundingBox> gt, std::vector<bool>& taken,
                    double iou_thresh) {
  int best = -1;
  double best_iou = iou_thresh;
  for (std::size_t g = 0; g < gt.size(); ++g) {
    if (taken[g]) continue;
    const double v = iou(d.box, gt[g]);
    if (v >= best_iou) {
      if (best < 0 || v > best_iou) {
        best = static_cast<int>(g);
        best_iou = v;
      }
    }
  }
  if (best >= 0) taken[best] = true;
  return best;
}

}  // namespace

double compute_ap(std::span<const std::vector<Detection>> detections,
                  std::span<const std::vector<BoundingBox>> ground_truth, double iou_thresh) {
  if (detections.size() != ground_truth.size()) {
    throw ArgumentError("detections and ground truth must cover the same images");
  }
  std::size_t total_gt = 0;
  for (const auto& g : ground_truth) total_gt += g.size();
  if (total_gt == 0) throw ArgumentError("AP is undefined without ground-truth boxes");

  struct Ranked {
    double score;
    std::size_t image;
    std::size_t index;
  };
  std::vector<Ranked> order;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    for (std::size_t j = 0; j < detections[i].size(); ++j) {
      order.push_back({detections[i][j].score, i, j});
    }
  }
  std::sort(order.begin(), order.end(), [](const Ranked& a, const Ranked& b) {
    return std::tie(b.score, a.image, a.index) < std::tie(a.score, b.image, b.index);
  });

  std::vector<std::vector<bool>> taken(ground_truth.size());
  for (std::size_t i = 0; i < ground_truth.size(); ++i) taken[i].assign(ground_truth[i].size(), false);

  std::vector<double> precision(order.size());
  std::vector<double> recall(order.size());
  std::size_t tp = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const Ranked& o = order[r];
    if (match_detection(detections[o.image][o.index], ground_truth[o.image], taken[o.image],
                        iou_thresh) >= 0) {
      ++tp;
    }
    precision[r] = static_cast<double>(tp) / static_cast<double>(r + 1);
    recall[r] = static_cast<double>(tp) / static_cast<double>(total_gt);
  }
  // Precision envelope, then area under the staircase.
  for (std::size_t r = order.size(); r-- > 1;) precision[r - 1] = std::max(precision[r - 1], precision[r]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    ap += (recall[r] - prev_recall) * precision[r];
    prev_recall = recall[r];
  }
  return 100.0 * ap;
}

bool image_attacked(std::span<const Detection> detections, std::span<const BoundingBox> ground_truth,
                    double iou_thresh, double conf_thresh) {
  if (ground_truth.empty()) return false;
  for (const BoundingBox& g : ground_truth) {
    for (const Detection& d : detections) {
      if (d.score >= conf_thresh && iou(d.box, g) >= iou_thresh) return false;
    }
  }
  return true;
}

double compute_asr(std::span<const std::vector<Detection>> detections,
                   std::span<const std::vector<BoundingBox>> ground_truth, double iou_thresh,
                   double conf_thresh) {
  if (detections.size() != ground_truth.size()) {
    throw ArgumentError("detections and ground truth must cover the same images");
  }
  std::size_t eligible = 0;
  std::size_t attacked = 0;
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    if (ground_truth[i].empty()) continue;
    ++eligible;
    if (image_attacked(detections[i], ground_truth[i], iou_thresh, conf_thresh)) ++attacked;
  }
  return eligible == 0 ? 0.0 : static_cast<double>(attacked) / static_cast<double>(eligible);
}

PixelRect box_pixels(const BoundingBox& box, int height, int width) {
  // Pixel x is inside when its center (x + 0.5) / width lies in [left, right].
  auto lo = [](double edge, int n) {
    return std::clamp(static_cast<int>(std::ceil(edge * n - 0.5)), 0, n);
  };
  auto hi = [](double edge, int n) {
    return std::clamp(static_cast<int>(std::floor(edge * n - 0.5)) + 1, 0, n);
  };
  PixelRect r{lo(box.cx - box.w / 2, width), lo(box.cy - box.h / 2, height),
              hi(box.cx + box.w / 2, width), hi(box.cy + box.h / 2, height)};
  if (r.x1 < r.x0) r.x1 = r.x0;
  if (r.y1 < r.y0) r.y1 = r.y0;
  return r;
}

double disruption_area_ratio(const Heatmap& clean, const Heatmap& adv, const BoundingBox& box,
                             double tau) {
  if (clean.height() != adv.height() || clean.width() != adv.width()) {
    throw ArgumentError("heatmaps must have the same dimensions");
  }
  const PixelRect r = box_pixels(box, clean.height(), clean.width());
  if (r.area() <= 0) throw ArgumentError("box covers no heatmap pixels");

  const double tc = tau * max_value(clean.values);
  const double ta = tau * max_value(adv.values);
  const bool clean_live = max_value(clean.values) > 0.0;
  const bool adv_live = max_value(adv.values) > 0.0;
  long differ = 0;
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) {
      const bool a = clean_live && clean.at(y, x) >= tc;
      const bool b = adv_live && adv.at(y, x) >= ta;
      if (a != b) ++differ;
    }
  }
  return static_cast<double>(differ) / static_cast<double>(r.area());
}

double rgb_hue(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  if (delta <= 0.0) return 0.0;
  double h;
  if (mx == r) {
    h = 60.0 * (g - b) / delta;
  } else if (mx == g) {
    h = 60.0 * (2.0 + (b - r) / delta);
  } else {
    h = 60.0 * (4.0 + (r - g) / delta);
  }
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  return h;
}

std::vector<double> hue_histogram(const Image& img, int bins) {
  if (img.channels() != 3) throw ArgumentError("hue histogram needs an RGB image");
  if (bins < 1) throw ArgumentError("bins must be >= 1");
  std::vector<double> hist(bins, 0.0);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double h = rgb_hue(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
      const int bin = std::min(bins - 1, static_cast<int>(h / 360.0 * bins));
      hist[bin] += 1.0;
    }
  }
  return hist;
}

double hue_similarity(const Image& a, const Image& b) {
  const auto ha = hue_histogram(a);
  const auto hb = hue_histogram(b);
  const double n = static_cast<double>(ha.size());
  const double ma = std::accumulate(ha.begin(), ha.end(), 0.0) / n;
  const double mb = std::accumulate(hb.begin(), hb.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ha.size(); ++i) {
    cov += (ha[i] - ma) * (hb[i] - mb);
    va += (ha[i] - ma) * (ha[i] - ma);
    vb += (hb[i] - mb) * (hb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return ha == hb ? 1.0 : 0.0;
  if (ha == hb) return 1.0;
  return std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
}

std::vector<ClassCount> category_box_histogram(std::span<const std::vector<Candidate>> clean,
                                               std::span<const std::vector<Candidate>> adv,
                                               DetectorKind kind, double conf_thresh) {
  std::vector<ClassCount> counts;
  auto tally = [&](std::span<const std::vector<Candidate>> images, long ClassCount::*field) {
    for (const auto& cands : images) {
      for (const Detection& d : to_detections(cands, kind, conf_thresh)) {
        if (static_cast<std::size_t>(d.class_id) >= counts.size()) counts.resize(d.class_id + 1);
        ++(counts[d.class_id].*field);
      }
      for (const Candidate& c : cands) {
        if (c.class_scores.size() > counts.size()) counts.resize(c.class_scores.size());
      }
    }
  };
  tally(clean, &ClassCount::clean);
  tally(adv, &ClassCount::adv);
  return counts;
}

Image render_bar_chart(std::span<const ClassCount> counts) {
  constexpr int kBar = 12;
  constexpr int kGap = 8;
  constexpr int kHeight = 160;
  constexpr int kMargin = 10;
  const int n = std::max<int>(1, static_cast<int>(counts.size()));
  const int width = 2 * kMargin + n * (2 * kBar + kGap);
  Image img(kHeight + 2 * kMargin, width, 3, 1.0);
  long peak = 1;
  for (const ClassCount& c : counts) peak = std::max({peak, c.clean, c.adv});

  auto bar = [&](int x0, long value, double r, double g, double b) {
    const int h = static_cast<int>(std::lround(static_cast<double>(value) / peak * kHeight));
    for (int y = kMargin + kHeight - h; y < kMargin + kHeight; ++y) {
      for (int x = x0; x < x0 + kBar; ++x) {
        img.at(y, x, 0) = r;
        img.at(y, x, 1) = g;
        img.at(y, x, 2) = b;
      }
    }
  };
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const int x0 = kMargin + static_cast<int>(i) * (2 * kBar + kGap);
    bar(x0, counts[i].clean, 0.12, 0.47, 0.71);
    bar(x0 + kBar, counts[i].adv, 1.0, 0.5, 0.05);
  }
  return img;
}

EvalReport evaluate_patch(const Patch& patch, std::span<const LabeledImage> dataset,
                          std::span<const std::string> names, const DetectorAdapter& detector,
                          const TransformConfig& tcfg, const EvalOptions& opts) {
  if (names.size() != dataset.size()) throw ArgumentError("names must parallel the dataset");
  const DetectorInfo& info = detector.info();
  const auto* cam = dynamic_cast<const CamModel*>(&detector);
  const bool with_cam = cam && !opts.cam_layer.empty();

  EvalReport report;
  report.detector = info.name;
  std::vector<std::vector<Detection>> clean_dets, adv_dets;
  std::vector<std::vector<BoundingBox>> gts;
  std::vector<std::vector<Candidate>> clean_cands, adv_cands;
  double disruption_sum = 0.0;
  long disruption_n = 0;

  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const LabeledImage& sample = dataset[i];
    const RandomDraw draw = opts.randomize ? draw_transforms(tcfg, opts.seed, 0xE7A1ULL, i, sample)
                                           : RandomDraw::identity(sample.boxes.size());
    TransformConfig placement_cfg = tcfg;
    if (!opts.randomize) placement_cfg.enable_lighting = false;
    const LabeledImage adv = apply_patch(patch, sample, placement_cfg, draw);

    auto prepare = [&](const Image& img) {
      if (img.height() == info.input_height && img.width() == info.input_width) return img;
      return resize_map(img.height(), img.width(), info.input_height, info.input_width).apply(img);
    };
    const Image clean_in = prepare(sample.image);
    const Image adv_in = prepare(adv.image);

    auto detect = [&](const std::vector<Candidate>& cands) {
      std::vector<Detection> persons;
      for (Detection& d : nms(to_detections(cands, info.kind, opts.conf_thresh), opts.nms_thresh,
                              opts.conf_thresh)) {
        if (d.class_id == info.person_class) persons.push_back(d);
      }
      return persons;
    };
    clean_cands.push_back(detector.forward(clean_in));
    adv_cands.push_back(detector.forward(adv_in));
    clean_dets.push_back(detect(clean_cands.back()));
    adv_dets.push_back(detect(adv_cands.back()));

    std::vector<BoundingBox> gt;
    for (const BoundingBox& b : sample.boxes) {
      if (b.class_id == tcfg.person_class) gt.push_back(b);
    }
    gts.push_back(gt);

    EvalRecord rec;
    rec.image = names[i];
    rec.gt_persons = static_cast<int>(gt.size());
    rec.clean_detections = static_cast<int>(clean_dets.back().size());
    rec.adv_detections = static_cast<int>(adv_dets.back().size());
    rec.attacked = image_attacked(adv_dets.back(), gt, opts.match_iou, opts.conf_thresh);

    if (with_cam && !gt.empty()) {
      const CamTarget target{info.person_class, -1};
      const Heatmap hc = grad_cam(*cam, clean_in, target, opts.cam_layer);
      const Heatmap ha = grad_cam(*cam, adv_in, target, opts.cam_layer);
      double acc = 0.0;
      for (const BoundingBox& b : gt) acc += disruption_area_ratio(hc, ha, b, opts.tau);
      rec.disruption = acc / static_cast<double>(gt.size());
      disruption_sum += *rec.disruption;
      ++disruption_n;
    }
    report.records.push_back(rec);
  }

  report.ap_clean = compute_ap(clean_dets, gts, opts.match_iou);
  report.ap_adv = compute_ap(adv_dets, gts, opts.match_iou);
  report.ap_drop = report.ap_clean - report.ap_adv;
  report.asr = compute_asr(adv_dets, gts, opts.match_iou, opts.conf_thresh);
  if (disruption_n > 0) report.mean_disruption = disruption_sum / static_cast<double>(disruption_n);
  report.class_counts = category_box_histogram(clean_cands, adv_cands, info.kind, opts.conf_thresh);
  return report;
}

std::string report_json(std::span<const EvalReport> reports) {
  nlohmann::ordered_json doc;
  doc["detectors"] = nlohmann::ordered_json::array();
  for (const EvalReport& r : reports) {
    nlohmann::ordered_json d;
    d["detector"] = r.detector;
    d["ap_clean"] = r.ap_clean;
    d["ap_adv"] = r.ap_adv;
    d["ap_drop"] = r.ap_drop;
    d["asr"] = r.asr;
    if (r.mean_disruption) d["mean_disruption_area_ratio"] = *r.mean_disruption;
    d["class_counts"] = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < r.class_counts.size(); ++k) {
      d["class_counts"].push_back({{"class", k}, {"clean", r.class_counts[k].clean},
                                   {"adv", r.class_counts[k].adv}});
    }
    d["images"] = nlohmann::ordered_json::array();
    for (const EvalRecord& rec : r.records) {
      nlohmann::ordered_json row{{"image", rec.image},
                                 {"gt_persons", rec.gt_persons},
                                 {"clean_detections", rec.clean_detections},
                                 {"adv_detections", rec.adv_detections},
                                 {"attacked", rec.attacked}};
      if (rec.disruption) row["disruption_area_ratio"] = *rec.disruption;
      d["images"].push_back(row);
    }
    doc["detectors"].push_back(d);
  }
  return doc.dump(2) + "\n";
}

}  // namespace mmpatch
