#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "acuity/dataset.hpp"
#include "acuity/network.hpp"

namespace acuity {

// ---------------------------------------------------------------------------
// Degraded evaluation

struct Degradation {
    enum class Kind { none, blur, shrink };
    Kind kind = Kind::none;
    double value = 0.0;

    static Degradation none() { return {}; }
    static Degradation blurred(double sigma) { return {Kind::blur, sigma}; }
    static Degradation shrunk(double factor) { return {Kind::shrink, factor}; }

    GrayImage apply(const GrayImage& image) const;
};

/// Eval-mode predictions, batched and run in parallel across batches.
std::vector<std::size_t> predict(const nn::NetworkState& net, const std::vector<ImageRecord>& records,
                                 const Degradation& degradation = {}, std::size_t batch_size = 256);

/// Fraction of argmax-correct predictions. Throws DataError if a label is
/// outside the network's classes or the record list is empty.
double evaluate_accuracy(const nn::NetworkState& net, const std::vector<ImageRecord>& records,
                         const Degradation& degradation = {}, std::size_t batch_size = 256);

// ---------------------------------------------------------------------------
// Sweeps and aggregation

enum class AxisKind { blur_sigma, shrink_factor };

std::string to_string(AxisKind axis);
AxisKind parse_axis(std::string_view text);

struct SweepPoint {
    double param = 0.0;
    double mean_accuracy = 0.0;
    double ste = 0.0;
    std::size_t n_reps = 1;

    bool operator==(const SweepPoint&) const = default;
};

struct AucResult {
    double value = 0.0;
    /// Set when fewer than two points (or a zero span) were supplied.
    bool degenerate = false;
};

/// Trapezoid rule over (param, accuracy) pairs sorted by param, divided by
/// the parameter span.
AucResult auc(std::vector<std::pair<double, double>> points);

struct SweepResult {
    AxisKind axis = AxisKind::blur_sigma;
    /// Blur sweeps list sigma ascending; shrink sweeps list factors descending.
    std::vector<SweepPoint> points;
    double auc = 0.0;
    bool auc_degenerate = false;
};

std::vector<double> default_sigmas();
std::vector<double> default_shrink_factors();

/// Recomputes auc from the points.
void finalize(SweepResult& result);

SweepResult blur_sweep(const nn::NetworkState& net, const std::vector<ImageRecord>& test,
                       std::vector<double> sigmas = default_sigmas());
SweepResult shrink_sweep(const nn::NetworkState& net, const std::vector<ImageRecord>& test,
                         std::vector<double> factors = default_shrink_factors());

/// Sample standard deviation over sqrt(n); 0 for n = 1. Throws on n = 0.
double standard_error(std::span<const double> values);

/// Per-point mean and STE over repetitions that share one parameter axis.
SweepResult aggregate(const std::vector<SweepResult>& reps);

/// Runs run(base_seed + i) for i in [0, n_reps), in parallel, and aggregates.
SweepResult repeat_and_aggregate(const std::function<SweepResult(std::uint64_t)>& run, std::size_t n_reps,
                                 std::uint64_t base_seed);

// ---------------------------------------------------------------------------
// Receptive-field extent

struct RfReport {
    std::vector<double> extents;
    /// Filters whose weights are all zero (extent reported as 0).
    std::vector<std::size_t> zero_filters;
    std::size_t kernel_h = 0, kernel_w = 0;
    double mean = 0.0, median = 0.0, q1 = 0.0, q3 = 0.0, min = 0.0, max = 0.0;
};

/// 2 * sqrt(second central moment of |w| about its centroid), where |w| is
/// summed over input channels and normalized to a distribution. Returns 0 and
/// sets `zero` for an all-zero filter.
double filter_extent(std::span<const double> weights, std::size_t channels, std::size_t kernel_h,
                     std::size_t kernel_w, bool* zero = nullptr);

/// Expects conv weights [F,C,kh,kw].
RfReport receptive_field_extent(const Tensor& conv_weights);

// ---------------------------------------------------------------------------
// Feature transfer

/// Eval-mode forward through `layer_index`, flattened to [N,D]. The final
/// softmax layer is not a valid source.
Tensor extract_features(const nn::NetworkState& net, std::size_t layer_index, const std::vector<ImageRecord>& records,
                        const Degradation& degradation = {}, std::size_t batch_size = 256);

struct SvmOptions {
    double lambda = 1e-3;
    std::size_t epochs = 200;
    double learning_rate = 0.01;
};

/// One-vs-rest linear model over standardized features.
struct LinearClassifier {
    Tensor weights; // [D,K]
    Tensor bias;    // [K]
    std::vector<double> feature_mean;
    std::vector<double> feature_scale;

    std::size_t class_count() const { return bias.size(); }
    Tensor standardize(const Tensor& features) const;
    Tensor scores(const Tensor& features) const;
    std::vector<std::size_t> predict(const Tensor& features) const;
};

/// Per-sample subgradient descent on the L2-regularized hinge loss, one
/// binary problem per class, visiting samples in a seeded order each epoch.
/// The step size is constant; the returned weights are the average of the
/// iterates over the second half of training. The bias is not regularized.
LinearClassifier train_linear_svm(const Tensor& features, const std::vector<std::size_t>& labels,
                                  const SvmOptions& options, RandomSource& rng);

/// Sum over classes of lambda/2 |w_k|^2 + mean_i max(0, 1 - y_ik (w_k . x_i + b_k))
/// with x_i standardized by the classifier.
double svm_objective(const LinearClassifier& model, const Tensor& features, const std::vector<std::size_t>& labels,
                     double lambda);

double accuracy(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& labels);

struct TransferPoint {
    std::size_t layer = 0;
    std::size_t feature_dim = 0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
};

/// For each layer: extract features, fit the SVM on target_train, score both
/// sets. Output order follows `layers`.
std::vector<TransferPoint> transfer_eval(const nn::NetworkState& net, const std::vector<std::size_t>& layers,
                                         const std::vector<ImageRecord>& target_train,
                                         const std::vector<ImageRecord>& target_test, const SvmOptions& options,
                                         std::uint64_t seed);

/// Layers whose output can feed a transfer probe (everything but the final
/// softmax layer).
std::vector<std::size_t> hidden_layers(const nn::NetworkState& net);

// ---------------------------------------------------------------------------
// Output

/// Header protocol,axis_kind,param,mean,ste,n_reps,auc; one row per point.
std::string sweep_csv(const std::string& protocol, const SweepResult& result);
std::string transfer_csv(const std::vector<TransferPoint>& points);

} // namespace acuity
