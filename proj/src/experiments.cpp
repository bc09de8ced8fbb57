#include "acuity/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "acuity/archive.hpp"
#include "acuity/errors.hpp"
#include "acuity/parallel.hpp"

namespace acuity {

GrayImage Degradation::apply(const GrayImage& image) const {
    switch (kind) {
    case Kind::none: return image;
    case Kind::blur: return blur(image, value);
    case Kind::shrink: return shrink_and_center(image, value);
    }
    return image;
}

namespace {

template <typename Fn>
void for_each_batch(const std::vector<ImageRecord>& records, const Degradation& degradation, std::size_t batch_size,
                    Fn&& fn) {
    if (batch_size == 0) throw ParameterError("batch size must be >= 1");
    const std::size_t n_batches = (records.size() + batch_size - 1) / batch_size;
    parallel_for(n_batches, [&](std::size_t b) {
        const std::size_t begin = b * batch_size;
        const std::size_t end = std::min(records.size(), begin + batch_size);
        std::vector<GrayImage> images;
        images.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) images.push_back(degradation.apply(records[i].image));
        fn(begin, stack_images(images));
    });
}

} // namespace

std::vector<std::size_t> predict(const nn::NetworkState& net, const std::vector<ImageRecord>& records,
                                 const Degradation& degradation, std::size_t batch_size) {
    std::vector<std::size_t> out(records.size());
    for_each_batch(records, degradation, batch_size, [&](std::size_t begin, const Tensor& batch) {
        const auto labels = argmax(nn::forward_logits(net, batch), 1);
        std::copy(labels.begin(), labels.end(), out.begin() + static_cast<std::ptrdiff_t>(begin));
    });
    return out;
}

double evaluate_accuracy(const nn::NetworkState& net, const std::vector<ImageRecord>& records,
                         const Degradation& degradation, std::size_t batch_size) {
    if (records.empty()) throw DataError("cannot evaluate on an empty record list");
    const std::size_t classes = net.class_count();
    std::vector<std::size_t> labels;
    labels.reserve(records.size());
    for (const auto& r : records) {
        if (r.identity >= classes)
            throw DataError("label " + std::to_string(r.identity) + " exceeds the network's " +
                            std::to_string(classes) + " classes");
        labels.push_back(r.identity);
    }
    return accuracy(predict(net, records, degradation, batch_size), labels);
}

double accuracy(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& labels) {
    if (predicted.size() != labels.size()) throw ShapeError("prediction and label counts differ");
    if (labels.empty()) throw DataError("accuracy of an empty set is undefined");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i];
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

// ---------------------------------------------------------------------------

std::string to_string(AxisKind axis) {
    return axis == AxisKind::blur_sigma ? "blur_sigma" : "shrink_factor";
}

AxisKind parse_axis(std::string_view text) {
    if (text == "blur" || text == "blur_sigma") return AxisKind::blur_sigma;
    if (text == "shrink" || text == "shrink_factor") return AxisKind::shrink_factor;
    throw ParameterError("unknown sweep axis '" + std::string(text) + "' (expected blur or shrink)");
}

AucResult auc(std::vector<std::pair<double, double>> points) {
    if (points.size() < 2) return {0.0, true};
    std::sort(points.begin(), points.end());
    const double span = points.back().first - points.front().first;
    if (!(span > 0.0)) return {0.0, true};
    // Integrating the offset from the first accuracy keeps a flat curve exact.
    const double base = points.front().second;
    double area = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i)
        area += (points[i].first - points[i - 1].first) *
                ((points[i].second - base) + (points[i - 1].second - base)) / 2.0;
    return {base + area / span, false};
}

std::vector<double> default_sigmas() {
    return {0, 1, 2, 3, 4};
}

std::vector<double> default_shrink_factors() {
    return {1, 0.9, 0.8, 0.4, 0.2, 0.14, 0.12};
}

void finalize(SweepResult& result) {
    if (result.axis == AxisKind::blur_sigma)
        std::sort(result.points.begin(), result.points.end(),
                  [](const SweepPoint& a, const SweepPoint& b) { return a.param < b.param; });
    else
        std::sort(result.points.begin(), result.points.end(),
                  [](const SweepPoint& a, const SweepPoint& b) { return a.param > b.param; });
    std::vector<std::pair<double, double>> xy;
    for (const auto& p : result.points) xy.emplace_back(p.param, p.mean_accuracy);
    const auto a = auc(std::move(xy));
    result.auc = a.value;
    result.auc_degenerate = a.degenerate;
}

namespace {

SweepResult sweep(const nn::NetworkState& net, const std::vector<ImageRecord>& test, std::vector<double> params,
                  AxisKind axis) {
    if (params.empty()) throw ParameterError("a sweep needs at least one parameter value");
    std::sort(params.begin(), params.end());
    if (std::adjacent_find(params.begin(), params.end()) != params.end())
        throw ParameterError("sweep parameters must be distinct");
    SweepResult result;
    result.axis = axis;
    for (double p : params) {
        const auto d = axis == AxisKind::blur_sigma ? Degradation::blurred(p) : Degradation::shrunk(p);
        result.points.push_back({p, evaluate_accuracy(net, test, d), 0.0, 1});
    }
    finalize(result);
    return result;
}

} // namespace

SweepResult blur_sweep(const nn::NetworkState& net, const std::vector<ImageRecord>& test, std::vector<double> sigmas) {
    for (double s : sigmas)
        if (!(s >= 0.0)) throw ParameterError("blur sigmas must be >= 0");
    return sweep(net, test, std::move(sigmas), AxisKind::blur_sigma);
}

SweepResult shrink_sweep(const nn::NetworkState& net, const std::vector<ImageRecord>& test,
                         std::vector<double> factors) {
    for (double f : factors)
        if (!(f > 0.0 && f <= 1.0)) throw ParameterError("shrink factors must lie in (0, 1]");
    return sweep(net, test, std::move(factors), AxisKind::shrink_factor);
}

double standard_error(std::span<const double> values) {
    if (values.empty()) throw ParameterError("standard error of no values");
    const auto n = static_cast<double>(values.size());
    if (values.size() == 1) return 0.0;
    const double m = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double sq = 0.0;
    for (double v : values) sq += (v - m) * (v - m);
    return std::sqrt(sq / (n - 1.0)) / std::sqrt(n);
}

SweepResult aggregate(const std::vector<SweepResult>& reps) {
    if (reps.empty()) throw ParameterError("nothing to aggregate");
    SweepResult out;
    out.axis = reps.front().axis;
    const auto& ref = reps.front().points;
    for (const auto& r : reps) {
        if (r.axis != out.axis || r.points.size() != ref.size())
            throw DataError("repetitions do not share one sweep axis");
        for (std::size_t i = 0; i < ref.size(); ++i)
            if (r.points[i].param != ref[i].param) throw DataError("repetitions do not share one sweep axis");
    }
    for (std::size_t i = 0; i < ref.size(); ++i) {
        std::vector<double> values;
        for (const auto& r : reps) values.push_back(r.points[i].mean_accuracy);
        const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
        out.points.push_back({ref[i].param, mean, standard_error(values), reps.size()});
    }
    finalize(out);
    return out;
}

SweepResult repeat_and_aggregate(const std::function<SweepResult(std::uint64_t)>& run, std::size_t n_reps,
                                 std::uint64_t base_seed) {
    if (n_reps == 0) throw ParameterError("n_reps must be >= 1");
    std::vector<SweepResult> reps(n_reps);
    parallel_for(n_reps, [&](std::size_t i) { reps[i] = run(base_seed + i); });
    return aggregate(reps);
}

// ---------------------------------------------------------------------------

double filter_extent(std::span<const double> weights, std::size_t channels, std::size_t kernel_h,
                     std::size_t kernel_w, bool* zero) {
    if (weights.size() != channels * kernel_h * kernel_w) throw ShapeError("filter size does not match its shape");
    std::vector<double> mass(kernel_h * kernel_w, 0.0);
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < mass.size(); ++i) mass[i] += std::abs(weights[c * mass.size() + i]);
    const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    if (zero) *zero = !(total > 0.0);
    if (!(total > 0.0)) return 0.0;

    double cy = 0.0, cx = 0.0;
    for (std::size_t y = 0; y < kernel_h; ++y)
        for (std::size_t x = 0; x < kernel_w; ++x) {
            const double p = mass[y * kernel_w + x] / total;
            cy += p * static_cast<double>(y);
            cx += p * static_cast<double>(x);
        }
    double moment = 0.0;
    for (std::size_t y = 0; y < kernel_h; ++y)
        for (std::size_t x = 0; x < kernel_w; ++x) {
            const double p = mass[y * kernel_w + x] / total;
            const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
            moment += p * (dy * dy + dx * dx);
        }
    return 2.0 * std::sqrt(moment);
}

namespace {

double quantile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

} // namespace

RfReport receptive_field_extent(const Tensor& w) {
    if (w.rank() != 4) throw DataError("receptive-field analysis needs conv weights [F,C,kh,kw]");
    RfReport report;
    const std::size_t f = w.dim(0), c = w.dim(1);
    report.kernel_h = w.dim(2);
    report.kernel_w = w.dim(3);
    const std::size_t per = c * report.kernel_h * report.kernel_w;
    for (std::size_t i = 0; i < f; ++i) {
        bool zero = false;
        report.extents.push_back(
            filter_extent(w.data().subspan(i * per, per), c, report.kernel_h, report.kernel_w, &zero));
        if (zero) report.zero_filters.push_back(i);
    }
    auto sorted = report.extents;
    std::sort(sorted.begin(), sorted.end());
    report.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
    report.min = sorted.front();
    report.max = sorted.back();
    report.q1 = quantile(sorted, 0.25);
    report.median = quantile(sorted, 0.5);
    report.q3 = quantile(sorted, 0.75);
    return report;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> hidden_layers(const nn::NetworkState& net) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i + 1 < net.layer_count(); ++i) out.push_back(i);
    return out;
}

Tensor extract_features(const nn::NetworkState& net, std::size_t layer_index, const std::vector<ImageRecord>& records,
                        const Degradation& degradation, std::size_t batch_size) {
    if (layer_index + 1 >= net.layer_count())
        throw ParameterError("layer " + std::to_string(layer_index) + " is not a hidden layer of this " +
                             std::to_string(net.layer_count()) + "-layer network");
    if (records.empty()) throw DataError("no records to extract features from");
    const auto shapes = nn::infer_shapes(net.input_shape, net.specs);
    const std::size_t dim = shape_size(shapes[layer_index + 1]);
    Tensor out({records.size(), dim});
    for_each_batch(records, degradation, batch_size, [&](std::size_t begin, const Tensor& batch) {
        const Tensor f = nn::forward(net, batch, layer_index);
        std::copy(f.data().begin(), f.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(begin * dim));
    });
    return out;
}

Tensor LinearClassifier::standardize(const Tensor& features) const {
    if (features.rank() != 2 || features.dim(1) != feature_mean.size())
        throw ShapeError("feature matrix does not match the classifier");
    Tensor out = features;
    const std::size_t d = feature_mean.size();
    auto data = out.data();
    for (std::size_t i = 0; i < features.dim(0); ++i)
        for (std::size_t j = 0; j < d; ++j) data[i * d + j] = (data[i * d + j] - feature_mean[j]) / feature_scale[j];
    return out;
}

Tensor LinearClassifier::scores(const Tensor& features) const {
    Tensor s = matmul(standardize(features), weights);
    const std::size_t k = class_count();
    auto data = s.data();
    for (std::size_t i = 0; i < s.dim(0); ++i)
        for (std::size_t c = 0; c < k; ++c) data[i * k + c] += bias[c];
    return s;
}

std::vector<std::size_t> LinearClassifier::predict(const Tensor& features) const {
    return argmax(scores(features), 1);
}

LinearClassifier train_linear_svm(const Tensor& features, const std::vector<std::size_t>& labels,
                                  const SvmOptions& options, RandomSource& rng) {
    if (features.rank() != 2) throw ShapeError("features must be [N,D]");
    const std::size_t n = features.dim(0), d = features.dim(1);
    if (labels.size() != n) throw ShapeError("label count does not match feature rows");
    if (!(options.lambda >= 0.0) || !(options.learning_rate > 0.0) || options.epochs == 0)
        throw ParameterError("svm needs lambda >= 0, learning rate > 0 and epochs >= 1");
    if (!all_finite(features)) throw DataError("features contain non-finite values");
    const std::size_t k = *std::max_element(labels.begin(), labels.end()) + 1;
    {
        std::vector<bool> seen(k, false);
        for (auto l : labels) seen[l] = true;
        if (std::count(seen.begin(), seen.end(), true) < 2) throw DataError("svm needs at least two classes");
    }
    if (n < k) throw DataError("svm needs at least as many samples as classes");

    LinearClassifier model;
    model.feature_mean.assign(d, 0.0);
    model.feature_scale.assign(d, 1.0);
    const auto x_raw = features.data();
    for (std::size_t j = 0; j < d; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += x_raw[i * d + j];
        m /= static_cast<double>(n);
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) v += (x_raw[i * d + j] - m) * (x_raw[i * d + j] - m);
        const double s = std::sqrt(v / static_cast<double>(n));
        model.feature_mean[j] = m;
        model.feature_scale[j] = s > 1e-12 ? s : 1.0;
    }
    const Tensor x = model.standardize(features);
    const auto xs = x.data();

    // Column-major per class: w[c*d + j].
    std::vector<double> w(k * d, 0.0), b(k, 0.0), w_avg(k * d, 0.0), b_avg(k, 0.0);
    std::size_t averaged = 0;
    const std::size_t average_from = options.epochs / 2;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        shuffle(order, rng);
        const double eta = options.learning_rate;
        const double decay = std::max(0.0, 1.0 - eta * options.lambda);
        for (std::size_t i : order) {
            const double* xi = xs.data() + i * d;
            for (std::size_t c = 0; c < k; ++c) {
                double* wc = w.data() + c * d;
                const double y = labels[i] == c ? 1.0 : -1.0;
                double s = b[c];
                for (std::size_t j = 0; j < d; ++j) s += wc[j] * xi[j];
                const bool active = y * s < 1.0;
                for (std::size_t j = 0; j < d; ++j) wc[j] = wc[j] * decay + (active ? eta * y * xi[j] : 0.0);
                if (active) b[c] += eta * y;
            }
            if (epoch >= average_from) {
                for (std::size_t q = 0; q < w.size(); ++q) w_avg[q] += w[q];
                for (std::size_t c = 0; c < k; ++c) b_avg[c] += b[c];
                ++averaged;
            }
        }
    }

    model.weights = Tensor({d, k});
    model.bias = Tensor({k});
    for (std::size_t c = 0; c < k; ++c) {
        model.bias[c] = b_avg[c] / static_cast<double>(averaged);
        for (std::size_t j = 0; j < d; ++j) model.weights.at(j, c) = w_avg[c * d + j] / static_cast<double>(averaged);
    }
    return model;
}

double svm_objective(const LinearClassifier& model, const Tensor& features, const std::vector<std::size_t>& labels,
                     double lambda) {
    const Tensor s = model.scores(features);
    const std::size_t n = s.dim(0), k = s.dim(1);
    if (labels.size() != n) throw ShapeError("label count does not match feature rows");
    double reg = 0.0;
    for (double v : model.weights.data()) reg += v * v;
    double hinge = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c) {
            const double y = labels[i] == c ? 1.0 : -1.0;
            hinge += std::max(0.0, 1.0 - y * s.at(i, c));
        }
    return 0.5 * lambda * reg + hinge / static_cast<double>(n);
}

std::vector<TransferPoint> transfer_eval(const nn::NetworkState& net, const std::vector<std::size_t>& layers,
                                         const std::vector<ImageRecord>& target_train,
                                         const std::vector<ImageRecord>& target_test, const SvmOptions& options,
                                         std::uint64_t seed) {
    if (layers.empty()) throw ParameterError("transfer needs at least one layer");
    std::vector<std::size_t> train_labels, test_labels;
    for (const auto& r : target_train) train_labels.push_back(r.identity);
    for (const auto& r : target_test) test_labels.push_back(r.identity);

    std::vector<TransferPoint> out;
    const RandomSource root(seed);
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const Tensor f_train = extract_features(net, layers[li], target_train);
        const Tensor f_test = extract_features(net, layers[li], target_test);
        RandomSource rng = root.split(li);
        const auto model = train_linear_svm(f_train, train_labels, options, rng);
        TransferPoint p;
        p.layer = layers[li];
        p.feature_dim = f_train.dim(1);
        p.train_accuracy = accuracy(model.predict(f_train), train_labels);
        p.test_accuracy = accuracy(model.predict(f_test), test_labels);
        out.push_back(p);
    }
    return out;
}

std::string sweep_csv(const std::string& protocol, const SweepResult& result) {
    std::ostringstream out;
    out << "protocol,axis_kind,param,mean,ste,n_reps,auc\n";
    for (const auto& p : result.points)
        out << protocol << ',' << to_string(result.axis) << ',' << format_double(p.param) << ','
            << format_double(p.mean_accuracy) << ',' << format_double(p.ste) << ',' << p.n_reps << ','
            << format_double(result.auc) << '\n';
    out << "# auc," << format_double(result.auc) << (result.auc_degenerate ? ",degenerate" : "") << '\n';
    return out.str();
}

std::string transfer_csv(const std::vector<TransferPoint>& points) {
    std::ostringstream out;
    out << "layer,feature_dim,train_acc,test_acc\n";
    for (const auto& p : points)
        out << p.layer << ',' << p.feature_dim << ',' << format_double(p.train_accuracy) << ','
            << format_double(p.test_accuracy) << '\n';
    return out.str();
}

} // namespace acuity
