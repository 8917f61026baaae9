#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rayreg/common.hpp"
#include "rayreg/feature.hpp"

namespace rayreg {

// Regression CNN: Conv(k x k, c1) -> ReLU -> MaxPool(2x2, stride 2) ->
// Conv(k x k, c2) -> ReLU -> MaxPool -> FC(fc_units) -> ReLU -> FC(n_out).
// Valid convolutions, no padding. ReLU after the conv layers can be
// disabled. All parameters live in one flat double vector with fixed
// segment order: conv1.w, conv1.b, conv2.w, conv2.b, fc1.w, fc1.b,
// fc2.w, fc2.b. Conv weights are [out_ch][in_ch][ky][kx], FC weights
// [out][in]; tensors are channel-major planes, row-major within a plane.

struct NetConfig {
  int in_rows = 156;
  int in_cols = 300;
  int kernel = 5;
  int c1 = 6;
  int c2 = 16;
  int fc_units = 250;
  int n_out = 3;
  bool conv_relu = true;
};

struct ParamSegment {
  std::size_t offset = 0;
  std::size_t count = 0;
  bool is_weight = false;  // weight decay applies to weights only
};

struct Network {
  NetConfig cfg;
  // shape chain
  int conv1_rows = 0, conv1_cols = 0;
  int pool1_rows = 0, pool1_cols = 0;
  int conv2_rows = 0, conv2_cols = 0;
  int pool2_rows = 0, pool2_cols = 0;
  int flat_n = 0;

  std::vector<double> params;
  ParamSegment conv1_w, conv1_b, conv2_w, conv2_b, fc1_w, fc1_b, fc2_w, fc2_b;

  std::size_t n_params() const { return params.size(); }
};

// Validates the shape chain (throws ShapeError naming the failing layer).
Network make_network(const NetConfig& cfg);

// Intermediate activations kept for the backward pass. Reusable across
// samples; one trace per concurrent evaluation.
struct ForwardTrace {
  std::vector<double> x;      // input plane
  std::vector<double> z1;     // conv1 pre-activation
  std::vector<double> p1;     // pool1 output (conv2 input)
  std::vector<double> z2;     // conv2 pre-activation
  std::vector<double> p2;     // pool2 output == flattened fc1 input
  std::vector<double> zf1;    // fc1 pre-activation
  std::vector<double> af1;    // fc1 post-ReLU
  std::vector<double> out;
  std::vector<int> amax1, amax2;  // arg-max index per pool window
};

// Deterministic forward pass; fills the trace and returns trace.out.
const std::vector<double>& forward(const Network& net,
                                   std::span<const double> input,
                                   ForwardTrace& trace);
std::vector<double> forward(const Network& net, const Patch& input);
std::vector<double> forward(const Network& net, std::span<const float> input);

// Accumulates the gradient of the single-sample loss ||y - f(x)||^2 into
// grad (size n_params). forward() must have filled the trace for x.
void backward(const Network& net, const ForwardTrace& trace,
              std::span<const double> target, std::vector<double>& grad);

// Mean over the batch of squared Euclidean residual norms.
double mse_loss(std::span<const double> outputs, std::span<const double> targets,
                std::size_t batch, int n_out);

struct TrainConfig {
  int batch_size = 64;
  double momentum = 0.9;
  double weight_decay = 0.0001;
  double lr_base = 0.0025;
  double lr_decay_a = 0.0001;
  double lr_decay_pow = 0.75;
  int epochs = 32;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

// lr_base * (1 + lr_decay_a * i)^(-lr_decay_pow); non-increasing in i.
double lr_schedule(long iteration, const TrainConfig& cfg);

// Momentum update: v <- m*v - lr(i)*(grad + d*W); W <- W + v. Weight decay
// is applied to weight segments only, never biases.
void sgd_step(Network& net, const std::vector<double>& grad,
              std::vector<double>& velocity, const TrainConfig& cfg,
              long iteration);

// Uniform Xavier: w ~ U(+-sqrt(6/(fan_in+fan_out))), biases 0.
// Deterministic per seed; draws in parameter-blob order.
void xavier_init(Network& net, std::uint64_t seed);

// Training set held in memory. Features are float32 (written to disk
// as-is), labels are normalized to [-1, 1] by label_half.
struct Dataset {
  int rows = 0, cols = 0, n_out = 0;
  std::size_t n = 0;
  std::vector<float> features;  // n * rows * cols
  std::vector<double> labels;   // n * n_out
  std::vector<double> label_half;

  std::span<const float> feature(std::size_t i) const {
    const std::size_t sz = std::size_t(rows) * cols;
    return {features.data() + i * sz, sz};
  }
  std::span<const double> label(std::size_t i) const {
    return {labels.data() + i * std::size_t(n_out),
            static_cast<std::size_t>(n_out)};
  }
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean training loss per epoch
  long iterations = 0;
};

// Mini-batch SGD with a per-epoch seeded shuffle. Batch gradients are
// accumulated over fixed sample chunks reduced in chunk order, so results
// are bit-identical for any thread count. Throws DivergedError (naming
// epoch and iteration) on a non-finite loss.
TrainResult train(Network& net, const Dataset& data, const TrainConfig& cfg);

// --- Serialization -------------------------------------------------------
// JSON manifest + raw little-endian float64 blob in parameter-blob order.

struct ModelMeta {
  int group = 0;
  int zone_i = 0, zone_j = 0;
  std::vector<double> label_half;
  std::uint64_t seed = 0;
  TrainConfig train;
};

void save_model(const Network& net, const ModelMeta& meta,
                const std::filesystem::path& json_path);
std::pair<Network, ModelMeta> load_model(const std::filesystem::path& json_path);

}  // namespace rayreg
