#include "rayreg/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "io_util.hpp"
#include "rayreg/rng.hpp"
#include "rayreg/threading.hpp"

namespace rayreg {

namespace {

// Chunked batch-gradient reduction: the batch is split into this many
// contiguous sample chunks whose partial gradients are summed in chunk
// order, so the floating-point accumulation order never depends on the
// thread count.
constexpr int kGradChunks = 8;

int conv_out(int in, int k) { return in - k + 1; }

void conv_forward(const double* in, int in_ch, int h, int w, const double* wt,
                  const double* bias, int out_ch, int k, double* out, int oh,
                  int ow) {
  for (int oc = 0; oc < out_ch; ++oc) {
    double* out_plane = out + std::size_t(oc) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = bias[oc];
        for (int ic = 0; ic < in_ch; ++ic) {
          const double* in_plane = in + std::size_t(ic) * h * w;
          const double* wrow =
              wt + ((std::size_t(oc) * in_ch + ic) * k) * k;
          for (int ky = 0; ky < k; ++ky) {
            const double* irow = in_plane + std::size_t(y + ky) * w + x;
            const double* wr = wrow + std::size_t(ky) * k;
            for (int kx = 0; kx < k; ++kx) acc += irow[kx] * wr[kx];
          }
        }
        out_plane[std::size_t(y) * ow + x] = acc;
      }
    }
  }
}

// 2x2 max pool, stride 2, on the (optionally ReLU-activated) input.
// Records the arg-max linear index into the input tensor. Ties keep the
// first window element in scan order.
void pool_forward(const double* z, int ch, int h, int w, bool relu, double* out,
                  int* amax, int oh, int ow) {
  for (int c = 0; c < ch; ++c) {
    const double* plane = z + std::size_t(c) * h * w;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t i = std::size_t(2 * y + dy) * w + (2 * x + dx);
            double v = plane[i];
            if (relu && v < 0.0) v = 0.0;
            if (v > best) {
              best = v;
              best_i = i;
            }
          }
        }
        const std::size_t o = std::size_t(c) * oh * ow + std::size_t(y) * ow + x;
        out[o] = best;
        amax[o] = static_cast<int>(std::size_t(c) * h * w + best_i);
      }
    }
  }
}

void fc_forward(const double* in, const double* wt, const double* bias,
                int out_n, int in_n, double* out) {
  for (int o = 0; o < out_n; ++o) {
    const double* wrow = wt + std::size_t(o) * in_n;
    double acc = bias[o];
    for (int i = 0; i < in_n; ++i) acc += wrow[i] * in[i];
    out[o] = acc;
  }
}

void conv_backward(const double* in, int in_ch, int h, int w, const double* wt,
                   int out_ch, int k, const double* gout, int oh, int ow,
                   double* gw, double* gb, double* gin) {
  for (int oc = 0; oc < out_ch; ++oc) {
    const double* gplane = gout + std::size_t(oc) * oh * ow;
    double acc = 0.0;
    for (std::size_t i = 0; i < std::size_t(oh) * ow; ++i) acc += gplane[i];
    gb[oc] += acc;
  }
  for (int oc = 0; oc < out_ch; ++oc) {
    const double* gplane = gout + std::size_t(oc) * oh * ow;
    for (int ic = 0; ic < in_ch; ++ic) {
      const double* in_plane = in + std::size_t(ic) * h * w;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          double acc = 0.0;
          for (int y = 0; y < oh; ++y) {
            const double* irow = in_plane + std::size_t(y + ky) * w + kx;
            const double* grow = gplane + std::size_t(y) * ow;
            for (int x = 0; x < ow; ++x) acc += grow[x] * irow[x];
          }
          gw[((std::size_t(oc) * in_ch + ic) * k + ky) * k + kx] += acc;
        }
      }
    }
  }
  if (gin == nullptr) return;
  for (int oc = 0; oc < out_ch; ++oc) {
    const double* gplane = gout + std::size_t(oc) * oh * ow;
    for (int ic = 0; ic < in_ch; ++ic) {
      double* gin_plane = gin + std::size_t(ic) * h * w;
      const double* wrow = wt + ((std::size_t(oc) * in_ch + ic) * k) * k;
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          const double g = gplane[std::size_t(y) * ow + x];
          if (g == 0.0) continue;
          for (int ky = 0; ky < k; ++ky) {
            double* grow = gin_plane + std::size_t(y + ky) * w + x;
            const double* wr = wrow + std::size_t(ky) * k;
            for (int kx = 0; kx < k; ++kx) grow[kx] += g * wr[kx];
          }
        }
      }
    }
  }
}

}  // namespace

Network make_network(const NetConfig& cfg) {
  if (cfg.in_rows <= 0 || cfg.in_cols <= 0) {
    throw ShapeError("input: non-positive size");
  }
  if (cfg.kernel < 1 || cfg.c1 < 1 || cfg.c2 < 1 || cfg.fc_units < 1 ||
      cfg.n_out < 1) {
    throw ShapeError("layer sizes must be positive");
  }
  Network net;
  net.cfg = cfg;
  net.conv1_rows = conv_out(cfg.in_rows, cfg.kernel);
  net.conv1_cols = conv_out(cfg.in_cols, cfg.kernel);
  if (net.conv1_rows < 1 || net.conv1_cols < 1) {
    throw ShapeError("conv1: kernel larger than input");
  }
  net.pool1_rows = net.conv1_rows / 2;
  net.pool1_cols = net.conv1_cols / 2;
  if (net.pool1_rows < 1 || net.pool1_cols < 1) {
    throw ShapeError("pool1: empty output");
  }
  net.conv2_rows = conv_out(net.pool1_rows, cfg.kernel);
  net.conv2_cols = conv_out(net.pool1_cols, cfg.kernel);
  if (net.conv2_rows < 1 || net.conv2_cols < 1) {
    throw ShapeError("conv2: kernel larger than input");
  }
  net.pool2_rows = net.conv2_rows / 2;
  net.pool2_cols = net.conv2_cols / 2;
  if (net.pool2_rows < 1 || net.pool2_cols < 1) {
    throw ShapeError("pool2: empty output");
  }
  net.flat_n = cfg.c2 * net.pool2_rows * net.pool2_cols;

  std::size_t off = 0;
  auto seg = [&off](std::size_t count, bool weight) {
    ParamSegment s{off, count, weight};
    off += count;
    return s;
  };
  const std::size_t kk = std::size_t(cfg.kernel) * cfg.kernel;
  net.conv1_w = seg(std::size_t(cfg.c1) * 1 * kk, true);
  net.conv1_b = seg(std::size_t(cfg.c1), false);
  net.conv2_w = seg(std::size_t(cfg.c2) * cfg.c1 * kk, true);
  net.conv2_b = seg(std::size_t(cfg.c2), false);
  net.fc1_w = seg(std::size_t(cfg.fc_units) * net.flat_n, true);
  net.fc1_b = seg(std::size_t(cfg.fc_units), false);
  net.fc2_w = seg(std::size_t(cfg.n_out) * cfg.fc_units, true);
  net.fc2_b = seg(std::size_t(cfg.n_out), false);
  net.params.assign(off, 0.0);
  return net;
}

const std::vector<double>& forward(const Network& net,
                                   std::span<const double> input,
                                   ForwardTrace& trace) {
  const auto& cfg = net.cfg;
  const std::size_t in_n = std::size_t(cfg.in_rows) * cfg.in_cols;
  if (input.size() != in_n) {
    throw ShapeError("input: got " + std::to_string(input.size()) +
                     " values, expected " + std::to_string(in_n));
  }
  trace.x.assign(input.begin(), input.end());
  trace.z1.resize(std::size_t(cfg.c1) * net.conv1_rows * net.conv1_cols);
  trace.p1.resize(std::size_t(cfg.c1) * net.pool1_rows * net.pool1_cols);
  trace.amax1.resize(trace.p1.size());
  trace.z2.resize(std::size_t(cfg.c2) * net.conv2_rows * net.conv2_cols);
  trace.p2.resize(std::size_t(net.flat_n));
  trace.amax2.resize(trace.p2.size());
  trace.zf1.resize(cfg.fc_units);
  trace.af1.resize(cfg.fc_units);
  trace.out.resize(cfg.n_out);

  const double* p = net.params.data();
  conv_forward(trace.x.data(), 1, cfg.in_rows, cfg.in_cols,
               p + net.conv1_w.offset, p + net.conv1_b.offset, cfg.c1,
               cfg.kernel, trace.z1.data(), net.conv1_rows, net.conv1_cols);
  pool_forward(trace.z1.data(), cfg.c1, net.conv1_rows, net.conv1_cols,
               cfg.conv_relu, trace.p1.data(), trace.amax1.data(),
               net.pool1_rows, net.pool1_cols);
  conv_forward(trace.p1.data(), cfg.c1, net.pool1_rows, net.pool1_cols,
               p + net.conv2_w.offset, p + net.conv2_b.offset, cfg.c2,
               cfg.kernel, trace.z2.data(), net.conv2_rows, net.conv2_cols);
  pool_forward(trace.z2.data(), cfg.c2, net.conv2_rows, net.conv2_cols,
               cfg.conv_relu, trace.p2.data(), trace.amax2.data(),
               net.pool2_rows, net.pool2_cols);
  fc_forward(trace.p2.data(), p + net.fc1_w.offset, p + net.fc1_b.offset,
             cfg.fc_units, net.flat_n, trace.zf1.data());
  for (int i = 0; i < cfg.fc_units; ++i) {
    trace.af1[i] = trace.zf1[i] > 0.0 ? trace.zf1[i] : 0.0;
  }
  fc_forward(trace.af1.data(), p + net.fc2_w.offset, p + net.fc2_b.offset,
             cfg.n_out, cfg.fc_units, trace.out.data());
  return trace.out;
}

std::vector<double> forward(const Network& net, const Patch& input) {
  ForwardTrace trace;
  return forward(net, std::span<const double>(input.values), trace);
}

std::vector<double> forward(const Network& net, std::span<const float> input) {
  std::vector<double> x(input.begin(), input.end());
  ForwardTrace trace;
  return forward(net, std::span<const double>(x), trace);
}

void backward(const Network& net, const ForwardTrace& trace,
              std::span<const double> target, std::vector<double>& grad) {
  const auto& cfg = net.cfg;
  if (static_cast<int>(target.size()) != cfg.n_out) {
    throw ShapeError("target: wrong length");
  }
  if (grad.size() != net.params.size()) {
    throw ShapeError("gradient buffer: wrong length");
  }
  const double* p = net.params.data();
  double* g = grad.data();

  std::vector<double> g_out(cfg.n_out);
  for (int o = 0; o < cfg.n_out; ++o) {
    g_out[o] = 2.0 * (trace.out[o] - target[o]);
  }

  // fc2
  std::vector<double> g_af1(cfg.fc_units, 0.0);
  for (int o = 0; o < cfg.n_out; ++o) {
    g[net.fc2_b.offset + o] += g_out[o];
    const double* wrow = p + net.fc2_w.offset + std::size_t(o) * cfg.fc_units;
    double* grow = g + net.fc2_w.offset + std::size_t(o) * cfg.fc_units;
    for (int i = 0; i < cfg.fc_units; ++i) {
      grow[i] += g_out[o] * trace.af1[i];
      g_af1[i] += g_out[o] * wrow[i];
    }
  }
  // fc1 + ReLU
  std::vector<double> g_p2(net.flat_n, 0.0);
  for (int o = 0; o < cfg.fc_units; ++o) {
    const double gz = trace.zf1[o] > 0.0 ? g_af1[o] : 0.0;
    if (gz == 0.0) continue;
    g[net.fc1_b.offset + o] += gz;
    const double* wrow = p + net.fc1_w.offset + std::size_t(o) * net.flat_n;
    double* grow = g + net.fc1_w.offset + std::size_t(o) * net.flat_n;
    for (int i = 0; i < net.flat_n; ++i) {
      grow[i] += gz * trace.p2[i];
      g_p2[i] += gz * wrow[i];
    }
  }
  // pool2 scatter, then the conv2 ReLU mask
  std::vector<double> g_z2(trace.z2.size(), 0.0);
  for (std::size_t i = 0; i < g_p2.size(); ++i) {
    g_z2[trace.amax2[i]] += g_p2[i];
  }
  if (cfg.conv_relu) {
    for (std::size_t i = 0; i < g_z2.size(); ++i) {
      if (trace.z2[i] <= 0.0) g_z2[i] = 0.0;
    }
  }
  // conv2
  std::vector<double> g_p1(trace.p1.size(), 0.0);
  conv_backward(trace.p1.data(), cfg.c1, net.pool1_rows, net.pool1_cols,
                p + net.conv2_w.offset, cfg.c2, cfg.kernel, g_z2.data(),
                net.conv2_rows, net.conv2_cols, g + net.conv2_w.offset,
                g + net.conv2_b.offset, g_p1.data());
  // pool1 scatter, conv1 ReLU mask
  std::vector<double> g_z1(trace.z1.size(), 0.0);
  for (std::size_t i = 0; i < g_p1.size(); ++i) {
    g_z1[trace.amax1[i]] += g_p1[i];
  }
  if (cfg.conv_relu) {
    for (std::size_t i = 0; i < g_z1.size(); ++i) {
      if (trace.z1[i] <= 0.0) g_z1[i] = 0.0;
    }
  }
  // conv1 (input gradient not needed)
  conv_backward(trace.x.data(), 1, cfg.in_rows, cfg.in_cols,
                p + net.conv1_w.offset, cfg.c1, cfg.kernel, g_z1.data(),
                net.conv1_rows, net.conv1_cols, g + net.conv1_w.offset,
                g + net.conv1_b.offset, nullptr);
}

double mse_loss(std::span<const double> outputs, std::span<const double> targets,
                std::size_t batch, int n_out) {
  if (outputs.size() != targets.size() ||
      outputs.size() != batch * std::size_t(n_out) || batch == 0) {
    throw ShapeError("loss: outputs/targets size mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const double d = outputs[i] - targets[i];
    acc += d * d;
  }
  return acc / static_cast<double>(batch);
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidParameterError("batch_size must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw InvalidParameterError("momentum must be in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) {
    throw InvalidParameterError("weight_decay must be >= 0");
  }
  if (!(lr_base > 0.0)) throw InvalidParameterError("lr_base must be > 0");
  if (!(lr_decay_a >= 0.0) || !(lr_decay_pow >= 0.0)) {
    throw InvalidParameterError("lr decay constants must be >= 0");
  }
  if (epochs < 1) throw InvalidParameterError("epochs must be >= 1");
  if (threads < 1) throw InvalidParameterError("threads must be >= 1");
}

double lr_schedule(long iteration, const TrainConfig& cfg) {
  if (iteration < 0) throw InvalidParameterError("iteration must be >= 0");
  return cfg.lr_base *
         std::pow(1.0 + cfg.lr_decay_a * static_cast<double>(iteration),
                  -cfg.lr_decay_pow);
}

void sgd_step(Network& net, const std::vector<double>& grad,
              std::vector<double>& velocity, const TrainConfig& cfg,
              long iteration) {
  if (grad.size() != net.params.size() || velocity.size() != net.params.size()) {
    throw ShapeError("sgd_step: buffer length mismatch");
  }
  const double lr = lr_schedule(iteration, cfg);
  for (const ParamSegment* s :
       {&net.conv1_w, &net.conv1_b, &net.conv2_w, &net.conv2_b, &net.fc1_w,
        &net.fc1_b, &net.fc2_w, &net.fc2_b}) {
    const double wd = s->is_weight ? cfg.weight_decay : 0.0;
    for (std::size_t i = s->offset; i < s->offset + s->count; ++i) {
      const double g = grad[i] + wd * net.params[i];
      velocity[i] = cfg.momentum * velocity[i] - lr * g;
      net.params[i] += velocity[i];
    }
  }
}

void xavier_init(Network& net, std::uint64_t seed) {
  Rng rng(seed);
  const int k = net.cfg.kernel;
  auto fill = [&](const ParamSegment& seg, int fan_in, int fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t i = seg.offset; i < seg.offset + seg.count; ++i) {
      net.params[i] = rng.uniform_sym(limit);
    }
  };
  auto zero = [&](const ParamSegment& seg) {
    std::fill_n(net.params.begin() + static_cast<std::ptrdiff_t>(seg.offset),
                seg.count, 0.0);
  };
  fill(net.conv1_w, 1 * k * k, net.cfg.c1 * k * k);
  zero(net.conv1_b);
  fill(net.conv2_w, net.cfg.c1 * k * k, net.cfg.c2 * k * k);
  zero(net.conv2_b);
  fill(net.fc1_w, net.flat_n, net.cfg.fc_units);
  zero(net.fc1_b);
  fill(net.fc2_w, net.cfg.fc_units, net.cfg.n_out);
  zero(net.fc2_b);
}

TrainResult train(Network& net, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.n == 0) throw InvalidParameterError("empty training set");
  if (data.rows != net.cfg.in_rows || data.cols != net.cfg.in_cols ||
      data.n_out != net.cfg.n_out) {
    throw ShapeError("dataset does not match the network shape");
  }

  const std::size_t np = net.params.size();
  std::vector<double> velocity(np, 0.0);
  std::vector<double> grad(np, 0.0);
  std::vector<std::vector<double>> chunk_grad(kGradChunks);
  std::vector<double> chunk_loss(kGradChunks, 0.0);
  std::vector<ForwardTrace> traces(kGradChunks);
  std::vector<std::vector<double>> inputs(kGradChunks);
  for (auto& g : chunk_grad) g.assign(np, 0.0);

  std::vector<std::size_t> order(data.n);
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  long iter = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = Rng::stream(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);
    double epoch_acc = 0.0;
    for (std::size_t start = 0; start < data.n; start += cfg.batch_size) {
      const std::size_t batch =
          std::min<std::size_t>(cfg.batch_size, data.n - start);
      for (int c = 0; c < kGradChunks; ++c) {
        std::fill(chunk_grad[c].begin(), chunk_grad[c].end(), 0.0);
        chunk_loss[c] = 0.0;
      }
      parallel_for(kGradChunks, cfg.threads, [&](std::size_t c) {
        const std::size_t lo = batch * c / kGradChunks;
        const std::size_t hi = batch * (c + 1) / kGradChunks;
        for (std::size_t s = lo; s < hi; ++s) {
          const std::size_t idx = order[start + s];
          const auto feat = data.feature(idx);
          inputs[c].assign(feat.begin(), feat.end());
          forward(net, std::span<const double>(inputs[c]), traces[c]);
          const auto target = data.label(idx);
          double l = 0.0;
          for (int o = 0; o < data.n_out; ++o) {
            const double d = traces[c].out[o] - target[o];
            l += d * d;
          }
          chunk_loss[c] += l;
          backward(net, traces[c], target, chunk_grad[c]);
        }
      });
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (int c = 0; c < kGradChunks; ++c) {
        const double* src = chunk_grad[c].data();
        for (std::size_t i = 0; i < np; ++i) grad[i] += src[i];
        batch_loss += chunk_loss[c];
      }
      const double inv_k = 1.0 / static_cast<double>(batch);
      for (double& g : grad) g *= inv_k;
      batch_loss *= inv_k;
      if (!std::isfinite(batch_loss)) {
        throw DivergedError("training diverged at epoch " +
                            std::to_string(epoch) + ", iteration " +
                            std::to_string(iter));
      }
      epoch_acc += batch_loss * static_cast<double>(batch);
      sgd_step(net, grad, velocity, cfg, iter);
      ++iter;
    }
    result.epoch_loss.push_back(epoch_acc / static_cast<double>(data.n));
  }
  result.iterations = iter;
  return result;
}

void save_model(const Network& net, const ModelMeta& meta,
                const std::filesystem::path& json_path) {
  const auto raw_path = detail::raw_sibling(json_path);
  detail::json j;
  j["format"] = "rayreg-model";
  j["version"] = 1;
  j["arch"] = {{"in_rows", net.cfg.in_rows},   {"in_cols", net.cfg.in_cols},
               {"kernel", net.cfg.kernel},     {"c1", net.cfg.c1},
               {"c2", net.cfg.c2},             {"fc_units", net.cfg.fc_units},
               {"n_out", net.cfg.n_out},       {"conv_relu", net.cfg.conv_relu}};
  j["meta"] = {{"group", meta.group},
               {"zone", {meta.zone_i, meta.zone_j}},
               {"label_half", meta.label_half},
               {"seed", meta.seed}};
  j["train"] = {{"batch_size", meta.train.batch_size},
                {"momentum", meta.train.momentum},
                {"weight_decay", meta.train.weight_decay},
                {"lr_base", meta.train.lr_base},
                {"lr_decay_a", meta.train.lr_decay_a},
                {"lr_decay_pow", meta.train.lr_decay_pow},
                {"epochs", meta.train.epochs},
                {"seed", meta.train.seed},
                {"threads", meta.train.threads}};
  j["dtype"] = "f64le";
  j["count"] = net.params.size();
  j["params_file"] = raw_path.filename().string();
  detail::write_json_file(j, json_path);
  detail::write_raw(net.params, raw_path);
}

std::pair<Network, ModelMeta> load_model(const std::filesystem::path& json_path) {
  const auto j = detail::read_json_file(json_path);
  try {
    detail::require(j.at("format") == "rayreg-model",
                    "not a model file: " + json_path.string());
    detail::require(j.at("dtype") == "f64le",
                    "unsupported dtype in " + json_path.string());
    const auto& a = j.at("arch");
    NetConfig cfg;
    cfg.in_rows = a.at("in_rows");
    cfg.in_cols = a.at("in_cols");
    cfg.kernel = a.at("kernel");
    cfg.c1 = a.at("c1");
    cfg.c2 = a.at("c2");
    cfg.fc_units = a.at("fc_units");
    cfg.n_out = a.at("n_out");
    cfg.conv_relu = a.at("conv_relu");
    Network net = make_network(cfg);
    const std::size_t count = j.at("count");
    if (count != net.n_params()) {
      throw FormatError("parameter blob mismatch in " + json_path.string() +
                        ": architecture needs " +
                        std::to_string(net.n_params()) +
                        " parameters, manifest lists " + std::to_string(count));
    }
    const auto raw_path =
        json_path.parent_path() / std::string(j.at("params_file"));
    net.params = detail::read_raw<double>(raw_path, count);
    for (double v : net.params) {
      if (!std::isfinite(v)) {
        throw FormatError("non-finite parameter in " + raw_path.string());
      }
    }
    ModelMeta meta;
    const auto& m = j.at("meta");
    meta.group = m.at("group");
    meta.zone_i = m.at("zone")[0];
    meta.zone_j = m.at("zone")[1];
    meta.label_half = m.at("label_half").get<std::vector<double>>();
    meta.seed = m.at("seed");
    const auto& tr = j.at("train");
    meta.train.batch_size = tr.at("batch_size");
    meta.train.momentum = tr.at("momentum");
    meta.train.weight_decay = tr.at("weight_decay");
    meta.train.lr_base = tr.at("lr_base");
    meta.train.lr_decay_a = tr.at("lr_decay_a");
    meta.train.lr_decay_pow = tr.at("lr_decay_pow");
    meta.train.epochs = tr.at("epochs");
    meta.train.seed = tr.at("seed");
    meta.train.threads = tr.at("threads");
    if (meta.label_half.size() != static_cast<std::size_t>(cfg.n_out)) {
      throw FormatError("label_half length does not match n_out in " +
                        json_path.string());
    }
    return {std::move(net), std::move(meta)};
  } catch (const detail::json::exception& e) {
    throw FormatError("bad model manifest " + json_path.string() + ": " +
                      e.what());
  }
}

}  // namespace rayreg
