#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmpatch/detectors.hpp"
#include "mmpatch/grad_cam.hpp"
#include "mmpatch/image.hpp"
#include "mmpatch/patch.hpp"
#include "mmpatch/transforms.hpp"

namespace mmpatch {

struct Detection {
  BoundingBox box;
  double score = 0.0;
  int class_id = 0;
};

/// One detection per (candidate, class) whose score reaches conf_thresh.
/// Score is objectness * class score (class score alone for two-stage).
std::vector<Detection> to_detections(std::span<const Candidate> candidates, DetectorKind kind,
                                     double conf_thresh);

/// Greedy per-class suppression in descending score order (ties keep input
/// order). Drops detections below conf_thresh; survivors of one class have
/// pairwise IoU <= iou_thresh.
std::vector<Detection> nms(std::vector<Detection> detections, double iou_thresh, double conf_thresh);

/// Single-class AP in percent: all-point interpolated area under the PR
/// curve. Detections are matched greedily by descending score (ties by image
/// then detection index) to the best-overlapping unmatched ground-truth box
/// with IoU >= iou_thresh. Callers pass only the class of interest.
/// Throws ArgumentError if there is no ground truth at all.
double compute_ap(std::span<const std::vector<Detection>> detections,
                  std::span<const std::vector<BoundingBox>> ground_truth, double iou_thresh = 0.5);

/// Whether the image counts as successfully attacked: it has ground truth
/// and no ground-truth box is matched by a detection with score >= conf_thresh
/// at IoU >= iou_thresh.
bool image_attacked(std::span<const Detection> detections, std::span<const BoundingBox> ground_truth,
                    double iou_thresh = 0.5, double conf_thresh = 0.5);

/// Fraction of images with ground truth that are successfully attacked
/// (0 when no image has ground truth).
double compute_asr(std::span<const std::vector<Detection>> detections,
                   std::span<const std::vector<BoundingBox>> ground_truth,
                   double iou_thresh = 0.5, double conf_thresh = 0.5);

/// Pixels whose centers fall inside the normalized box.
struct PixelRect {
  int x0, y0, x1, y1;  ///< half-open
  long area() const { return static_cast<long>(x1 - x0) * (y1 - y0); }
};
PixelRect box_pixels(const BoundingBox& box, int height, int width);

/// Fraction of the box's pixels where the two heatmaps, each binarized at
/// tau * its own maximum, disagree. Throws ArgumentError on shape mismatch
/// or an empty box.
double disruption_area_ratio(const Heatmap& clean, const Heatmap& adv, const BoundingBox& box,
                             double tau = 0.5);

/// Hue in degrees [0, 360); 0 for achromatic pixels.
double rgb_hue(double r, double g, double b);
std::vector<double> hue_histogram(const Image& img, int bins = 180);

/// Pearson correlation of the two 180-bin hue histograms, in [-1, 1].
double hue_similarity(const Image& a, const Image& b);

struct ClassCount {
  long clean = 0;
  long adv = 0;
};

/// Per class, the number of candidates whose class confidence reaches
/// conf_thresh before and after the patch, summed over images.
std::vector<ClassCount> category_box_histogram(std::span<const std::vector<Candidate>> clean,
                                               std::span<const std::vector<Candidate>> adv,
                                               DetectorKind kind, double conf_thresh);

/// Paired bar chart (clean blue, adversarial orange) for PNG export.
Image render_bar_chart(std::span<const ClassCount> counts);

struct EvalOptions {
  double conf_thresh = 0.5;
  double nms_thresh = 0.4;
  double match_iou = 0.5;
  double tau = 0.5;
  bool randomize = false;  ///< draw EoT transforms instead of identity placement
  std::uint64_t seed = 0;
  std::string cam_layer;  ///< empty disables Grad-CAM
};

struct EvalRecord {
  std::string image;
  int gt_persons = 0;
  int clean_detections = 0;
  int adv_detections = 0;
  bool attacked = false;
  std::optional<double> disruption;
};

struct EvalReport {
  std::string detector;
  double ap_clean = 0.0;
  double ap_adv = 0.0;
  double ap_drop = 0.0;
  double asr = 0.0;
  std::optional<double> mean_disruption;
  std::vector<ClassCount> class_counts;
  std::vector<EvalRecord> records;
};

/// Runs one detector over clean and patched versions of the dataset.
/// `names` is parallel to `dataset`. Images are resized to the detector's
/// input size when needed.
EvalReport evaluate_patch(const Patch& patch, std::span<const LabeledImage> dataset,
                          std::span<const std::string> names, const DetectorAdapter& detector,
                          const TransformConfig& tcfg, const EvalOptions& opts);

/// JSON document with ap_clean, ap_adv, ap_drop, asr and per-image rows.
std::string report_json(std::span<const EvalReport> reports);

}  // namespace mmpatch
