#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <unistd.h>
#include <vector>

#include "rayreg/common.hpp"
#include "rayreg/nn.hpp"
#include "rayreg/rng.hpp"

using namespace rayreg;
namespace fs = std::filesystem;

namespace {

NetConfig tiny_cfg() {
  // 12 -> conv3 -> 10 -> pool -> 5 -> conv3 -> 3 -> pool -> 1.
  NetConfig cfg;
  cfg.in_rows = 12;
  cfg.in_cols = 12;
  cfg.kernel = 3;
  cfg.c1 = 2;
  cfg.c2 = 2;
  cfg.fc_units = 8;
  cfg.n_out = 3;
  return cfg;
}

std::vector<double> random_input(const NetConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(std::size_t(cfg.in_rows) * cfg.in_cols);
  for (auto& v : x) v = rng.uniform(-1.0, 1.0);
  return x;
}

// Fully independent forward oracle: naive nested loops, no shared code
// with the production implementation beyond the parameter layout spec
// (conv weights [out][in][ky][kx], FC weights [out][in], plane-major
// activations, 2x2/2 max pooling with floor on odd edges).
std::vector<double> forward_oracle(const Network& net,
                                   const std::vector<double>& input) {
  const NetConfig& c = net.cfg;
  const int k = c.kernel;
  auto conv = [&](const std::vector<double>& in, int in_ch, int in_r, int in_c,
                  const ParamSegment& wseg, const ParamSegment& bseg,
                  int out_ch, bool relu) {
    const int out_r = in_r - k + 1, out_c = in_c - k + 1;
    std::vector<double> out(std::size_t(out_ch) * out_r * out_c, 0.0);
    for (int oc = 0; oc < out_ch; ++oc) {
      for (int y = 0; y < out_r; ++y) {
        for (int x = 0; x < out_c; ++x) {
          double acc = net.params[bseg.offset + oc];
          for (int ic = 0; ic < in_ch; ++ic) {
            for (int ky = 0; ky < k; ++ky) {
              for (int kx = 0; kx < k; ++kx) {
                const double w =
                    net.params[wseg.offset +
                               ((std::size_t(oc) * in_ch + ic) * k + ky) * k +
                               kx];
                acc += w * in[(std::size_t(ic) * in_r + y + ky) * in_c + x + kx];
              }
            }
          }
          if (relu && acc < 0.0) acc = 0.0;
          out[(std::size_t(oc) * out_r + y) * out_c + x] = acc;
        }
      }
    }
    return out;
  };
  auto pool = [&](const std::vector<double>& in, int ch, int in_r, int in_c) {
    const int out_r = in_r / 2, out_c = in_c / 2;
    std::vector<double> out(std::size_t(ch) * out_r * out_c);
    for (int oc = 0; oc < ch; ++oc)
      for (int y = 0; y < out_r; ++y)
        for (int x = 0; x < out_c; ++x) {
          double m = -1e300;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
              m = std::max(m, in[(std::size_t(oc) * in_r + 2 * y + dy) * in_c +
                                 2 * x + dx]);
          out[(std::size_t(oc) * out_r + y) * out_c + x] = m;
        }
    return out;
  };
  auto fc = [&](const std::vector<double>& in, const ParamSegment& wseg,
                const ParamSegment& bseg, int n_out, bool relu) {
    std::vector<double> out(n_out);
    for (int o = 0; o < n_out; ++o) {
      double acc = net.params[bseg.offset + o];
      for (std::size_t i = 0; i < in.size(); ++i)
        acc += net.params[wseg.offset + std::size_t(o) * in.size() + i] * in[i];
      out[o] = relu && acc < 0.0 ? 0.0 : acc;
    }
    return out;
  };

  auto a1 = conv(input, 1, c.in_rows, c.in_cols, net.conv1_w, net.conv1_b,
                 c.c1, c.conv_relu);
  auto p1 = pool(a1, c.c1, net.conv1_rows, net.conv1_cols);
  auto a2 = conv(p1, c.c1, net.pool1_rows, net.pool1_cols, net.conv2_w,
                 net.conv2_b, c.c2, c.conv_relu);
  auto p2 = pool(a2, c.c2, net.conv2_rows, net.conv2_cols);
  auto f1 = fc(p2, net.fc1_w, net.fc1_b, c.fc_units, true);
  return fc(f1, net.fc2_w, net.fc2_b, c.n_out, false);
}

Dataset toy_dataset(const NetConfig& cfg, std::size_t n, std::uint64_t seed) {
  // Latent amplitudes of two coherent half-image patterns, recovered as
  // labels. Large, spatially coherent signal survives the max-pool chain;
  // per-pixel or iid-noise-statistic targets do not.
  Dataset data;
  data.rows = cfg.in_rows;
  data.cols = cfg.in_cols;
  data.n_out = cfg.n_out;
  data.n = n;
  data.label_half.assign(cfg.n_out, 1.0);
  const std::size_t sz = std::size_t(cfg.in_rows) * cfg.in_cols;
  data.features.resize(n * sz);
  data.labels.resize(n * cfg.n_out);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.uniform(-1.0, 1.0);
    const double b = rng.uniform(-1.0, 1.0);
    for (int r = 0; r < cfg.in_rows; ++r) {
      for (int c = 0; c < cfg.in_cols; ++c) {
        const double left = c < cfg.in_cols / 2 ? 1.0 : -1.0;
        const double top = r < cfg.in_rows / 2 ? 1.0 : -1.0;
        const double v = 0.5 + 0.2 * a * left + 0.2 * b * top +
                         rng.uniform(-0.04, 0.04);
        data.features[i * sz + std::size_t(r) * cfg.in_cols + c] =
            static_cast<float>(v);
      }
    }
    double* y = data.labels.data() + i * cfg.n_out;
    y[0] = a;
    if (cfg.n_out > 1) y[1] = b;
    if (cfg.n_out > 2) y[2] = 0.5 * (a - b);
  }
  return data;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("rayreg_nn_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("shape chain of the reference architecture") {
  NetConfig cfg;  // 156x300, k=5, 6/16/250
  const Network net = make_network(cfg);
  CHECK(net.conv1_rows == 152);
  CHECK(net.conv1_cols == 296);
  CHECK(net.pool1_rows == 76);
  CHECK(net.pool1_cols == 148);
  CHECK(net.conv2_rows == 72);
  CHECK(net.conv2_cols == 144);
  CHECK(net.pool2_rows == 36);
  CHECK(net.pool2_cols == 72);
  CHECK(net.flat_n == 36 * 72 * 16);
  // Segment bookkeeping: contiguous, ordered, summing to n_params.
  const ParamSegment* segs[] = {&net.conv1_w, &net.conv1_b, &net.conv2_w,
                                &net.conv2_b, &net.fc1_w,   &net.fc1_b,
                                &net.fc2_w,   &net.fc2_b};
  std::size_t expect_offset = 0;
  for (const auto* s : segs) {
    CHECK(s->offset == expect_offset);
    expect_offset += s->count;
  }
  CHECK(expect_offset == net.n_params());
  CHECK(net.conv1_w.count == 6u * 1 * 25);
  CHECK(net.conv2_w.count == 16u * 6 * 25);
  CHECK(net.fc1_w.count == 250u * net.flat_n);
  CHECK(net.fc2_w.count == 3u * 250);
  CHECK(net.conv1_w.is_weight);
  CHECK_FALSE(net.conv1_b.is_weight);
}

TEST_CASE("shape chain of the tiny and desk architectures") {
  const Network tiny = make_network(tiny_cfg());
  CHECK(tiny.pool2_rows == 1);
  CHECK(tiny.pool2_cols == 1);
  CHECK(tiny.flat_n == 2);

  NetConfig desk;
  desk.in_rows = 40;
  desk.in_cols = 76;
  desk.c1 = 4;
  desk.c2 = 8;
  const Network d = make_network(desk);
  CHECK(d.pool2_rows == 7);
  CHECK(d.pool2_cols == 16);
  CHECK(d.flat_n == 7 * 16 * 8);
}

TEST_CASE("make_network rejects a collapsing shape chain") {
  NetConfig cfg = tiny_cfg();
  cfg.kernel = 5;  // 12 -> 8 -> 4 -> conv5 impossible
  CHECK_THROWS_AS(make_network(cfg), ShapeError);
  cfg = tiny_cfg();
  cfg.in_rows = 2;
  CHECK_THROWS_AS(make_network(cfg), ShapeError);
  cfg = tiny_cfg();
  cfg.c1 = 0;
  CHECK_THROWS_AS(make_network(cfg), ShapeError);
}

TEST_CASE("forward pass matches the naive oracle") {
  Network net = make_network(tiny_cfg());
  xavier_init(net, 99);
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    const std::vector<double> x = random_input(net.cfg, seed);
    ForwardTrace trace;
    const std::vector<double>& got = forward(net, x, trace);
    const std::vector<double> want = forward_oracle(net, x);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(std::abs(got[i] - want[i]) < 1e-10);
  }
}

TEST_CASE("forward oracle agreement on a rectangular desk-size net") {
  NetConfig cfg;
  cfg.in_rows = 20;
  cfg.in_cols = 38;
  cfg.kernel = 5;
  cfg.c1 = 3;
  cfg.c2 = 4;
  cfg.fc_units = 10;
  cfg.n_out = 2;
  Network net = make_network(cfg);
  xavier_init(net, 7);
  const std::vector<double> x = random_input(cfg, 11);
  ForwardTrace trace;
  const std::vector<double>& got = forward(net, x, trace);
  const std::vector<double> want = forward_oracle(net, x);
  for (std::size_t i = 0; i < got.size(); ++i)
    CHECK(std::abs(got[i] - want[i]) < 1e-10);
}

TEST_CASE("forward overloads agree (Patch, float span, double span)") {
  Network net = make_network(tiny_cfg());
  xavier_init(net, 31);
  const std::vector<double> x = random_input(net.cfg, 6);
  Patch p(net.cfg.in_rows, net.cfg.in_cols);
  p.values = x;
  std::vector<float> xf(x.begin(), x.end());
  ForwardTrace trace;
  // Float input quantizes, so compare against the same quantized doubles.
  std::vector<double> xq(xf.begin(), xf.end());
  const std::vector<double> a = forward(net, xq, trace);
  const std::vector<double> b = forward(net, std::span<const float>(xf));
  for (int i = 0; i < net.cfg.n_out; ++i) CHECK(a[i] == b[i]);
  const std::vector<double> c = forward(net, p);
  const std::vector<double> d = forward(net, x, trace);
  for (int i = 0; i < net.cfg.n_out; ++i) CHECK(c[i] == d[i]);
}

TEST_CASE("forward rejects a wrong-size input") {
  Network net = make_network(tiny_cfg());
  xavier_init(net, 1);
  ForwardTrace trace;
  std::vector<double> bad(10, 0.0);
  CHECK_THROWS_AS(forward(net, bad, trace), ShapeError);
}

TEST_CASE("backward gradient matches central finite differences") {
  Network net = make_network(tiny_cfg());
  xavier_init(net, 5);
  const std::vector<double> x = random_input(net.cfg, 17);
  const std::vector<double> target = {0.3, -0.2, 0.7};

  ForwardTrace trace;
  forward(net, x, trace);
  std::vector<double> grad(net.n_params(), 0.0);
  backward(net, trace, target, grad);

  auto loss_at = [&](std::size_t idx, double delta) {
    Network probe = net;
    probe.params[idx] += delta;
    ForwardTrace tr;
    const std::vector<double>& out = forward(probe, x, tr);
    double l = 0.0;
    for (int i = 0; i < 3; ++i)
      l += (out[i] - target[i]) * (out[i] - target[i]);
    return l;
  };

  const double h = 1e-5;
  Rng rng(23);
  const ParamSegment* segs[] = {&net.conv1_w, &net.conv1_b, &net.conv2_w,
                                &net.conv2_b, &net.fc1_w,   &net.fc1_b,
                                &net.fc2_w,   &net.fc2_b};
  for (const auto* seg : segs) {
    for (int probe = 0; probe < 25; ++probe) {
      const std::size_t idx = seg->offset + rng.uniform_index(seg->count);
      const double fd = (loss_at(idx, h) - loss_at(idx, -h)) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(grad[idx]), 1e-8});
      CHECK(std::abs(fd - grad[idx]) / denom < 1e-4);
    }
  }
}

TEST_CASE("backward accumulates into the gradient buffer") {
  Network net = make_network(tiny_cfg());
  xavier_init(net, 5);
  const std::vector<double> x = random_input(net.cfg, 17);
  const std::vector<double> target = {0.1, 0.1, 0.1};
  ForwardTrace trace;
  forward(net, x, trace);
  std::vector<double> g1(net.n_params(), 0.0);
  backward(net, trace, target, g1);
  std::vector<double> g2 = g1;
  backward(net, trace, target, g2);  // second accumulation doubles
  for (std::size_t i = 0; i < g1.size(); ++i)
    CHECK(g2[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-12));
}

TEST_CASE("learning-rate schedule: kappa_0 exact, frozen decay point") {
  TrainConfig cfg;
  CHECK(lr_schedule(0, cfg) == 0.0025);  // exact by construction
  // 0.0025 * (1 + 1e-4 * 10000)^(-0.75) = 0.0025 * 2^(-3/4).
  CHECK(lr_schedule(10000, cfg) ==
        doctest::Approx(0.0014865088937534013).epsilon(1e-15));
  // Non-increasing.
  double prev = lr_schedule(0, cfg);
  for (long i = 1; i < 2000; i += 37) {
    const double lr = lr_schedule(i, cfg);
    CHECK(lr <= prev);
    prev = lr;
  }
}

TEST_CASE("sgd_step: momentum and decay-on-weights-only semantics") {
  Network net = make_network(tiny_cfg());
  std::fill(net.params.begin(), net.params.end(), 1.0);
  std::vector<double> grad(net.n_params(), 2.0);
  std::vector<double> vel(net.n_params(), 0.0);
  TrainConfig cfg;  // lr(0) = 0.0025, m = 0.9, d = 1e-4
  sgd_step(net, grad, vel, cfg, 0);
  const std::size_t iw = net.conv1_w.offset;  // a weight entry
  const std::size_t ib = net.conv1_b.offset;  // a bias entry
  // v = -0.0025 * (2 + 1e-4 * 1) for weights, -0.0025 * 2 for biases.
  CHECK(vel[iw] == doctest::Approx(-0.0025 * 2.0001).epsilon(1e-15));
  CHECK(vel[ib] == doctest::Approx(-0.005).epsilon(1e-15));
  CHECK(net.params[iw] == doctest::Approx(1.0 - 0.0025 * 2.0001).epsilon(1e-15));
  CHECK(net.params[ib] == doctest::Approx(0.995).epsilon(1e-15));
  // Second step folds momentum in.
  const double w1 = net.params[iw], v1 = vel[iw];
  const double lr1 = lr_schedule(1, cfg);
  sgd_step(net, grad, vel, cfg, 1);
  const double v2_expect = 0.9 * v1 - lr1 * (2.0 + 1e-4 * w1);
  CHECK(vel[iw] == doctest::Approx(v2_expect).epsilon(1e-14));
  CHECK(net.params[iw] == doctest::Approx(w1 + v2_expect).epsilon(1e-14));
}

TEST_CASE("xavier_init: bounded weights, zero biases, deterministic") {
  Network a = make_network(tiny_cfg());
  Network b = make_network(tiny_cfg());
  xavier_init(a, 42);
  xavier_init(b, 42);
  CHECK(std::memcmp(a.params.data(), b.params.data(),
                    a.params.size() * sizeof(double)) == 0);
  Network c = make_network(tiny_cfg());
  xavier_init(c, 43);
  CHECK(std::memcmp(a.params.data(), c.params.data(),
                    a.params.size() * sizeof(double)) != 0);

  const int k = a.cfg.kernel;
  const double lim1 = std::sqrt(6.0 / (1 * k * k + a.cfg.c1 * k * k));
  for (std::size_t i = a.conv1_w.offset;
       i < a.conv1_w.offset + a.conv1_w.count; ++i) {
    CHECK(std::abs(a.params[i]) <= lim1);
  }
  const double limf = std::sqrt(6.0 / (a.flat_n + a.cfg.fc_units));
  double max_abs = 0.0;
  for (std::size_t i = a.fc1_w.offset; i < a.fc1_w.offset + a.fc1_w.count; ++i) {
    CHECK(std::abs(a.params[i]) <= limf);
    max_abs = std::max(max_abs, std::abs(a.params[i]));
  }
  CHECK(max_abs > 0.5 * limf);  // actually fills the range
  for (const auto* bseg : {&a.conv1_b, &a.conv2_b, &a.fc1_b, &a.fc2_b})
    for (std::size_t i = bseg->offset; i < bseg->offset + bseg->count; ++i)
      CHECK(a.params[i] == 0.0);
}

TEST_CASE("mse_loss is the batch mean of squared residual norms") {
  const std::vector<double> out = {1.0, 2.0, 3.0, 4.0};
  const std::vector<double> tgt = {0.0, 2.0, 3.0, 2.0};
  // Two samples of two outputs: ||(1,0)||^2 = 1, ||(0,2)||^2 = 4.
  CHECK(mse_loss(out, tgt, 2, 2) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK_THROWS_AS(mse_loss(out, std::vector<double>{1.0}, 2, 2), ShapeError);
}

TEST_CASE("training reduces the loss on a learnable toy problem") {
  // Needs a flat layer wider than the three outputs; the 12x12 tiny net
  // bottlenecks at two scalars and cannot fit three contrasts.
  NetConfig cfg14;
  cfg14.in_rows = 14;
  cfg14.in_cols = 14;
  cfg14.kernel = 3;  // 14 -> 12 -> 6 -> 4 -> 2, flat 2*2*2 = 8
  cfg14.c1 = 4;
  cfg14.c2 = 2;
  cfg14.fc_units = 8;
  cfg14.n_out = 3;
  Network net = make_network(cfg14);
  xavier_init(net, 3);
  const Dataset data = toy_dataset(net.cfg, 256, 8);
  TrainConfig cfg;
  cfg.batch_size = 64;
  cfg.epochs = 80;
  cfg.seed = 5;
  const TrainResult res = train(net, data, cfg);
  REQUIRE(res.epoch_loss.size() == 80);
  CHECK(res.iterations == 80 * 4);
  CHECK(res.epoch_loss.back() < 0.5 * res.epoch_loss.front());
  for (double l : res.epoch_loss) CHECK(std::isfinite(l));
}

TEST_CASE("training is bit-identical across thread counts and reruns") {
  const Dataset data = toy_dataset(tiny_cfg(), 96, 21);
  auto run = [&](int threads, std::uint64_t seed) {
    Network net = make_network(tiny_cfg());
    xavier_init(net, 11);
    TrainConfig cfg;
    cfg.batch_size = 32;
    cfg.epochs = 3;
    cfg.seed = seed;
    cfg.threads = threads;
    train(net, data, cfg);
    return net.params;
  };
  const auto p1 = run(1, 9);
  const auto p3 = run(3, 9);
  const auto p8 = run(8, 9);
  CHECK(std::memcmp(p1.data(), p3.data(), p1.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(p1.data(), p8.data(), p1.size() * sizeof(double)) == 0);
  // Re-run same config: identical. Different shuffle seed: different.
  const auto p1b = run(1, 9);
  CHECK(std::memcmp(p1.data(), p1b.data(), p1.size() * sizeof(double)) == 0);
  const auto pq = run(1, 10);
  CHECK(std::memcmp(p1.data(), pq.data(), p1.size() * sizeof(double)) != 0);
}

TEST_CASE("training throws DivergedError on explosion") {
  Network net = make_network(tiny_cfg());
  xavier_init(net, 3);
  const Dataset data = toy_dataset(net.cfg, 128, 8);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.epochs = 5;
  cfg.lr_base = 1e18;  // guaranteed blow-up
  CHECK_THROWS_AS(train(net, data, cfg), DivergedError);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidParameterError);
  cfg = TrainConfig{};
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidParameterError);
  cfg = TrainConfig{};
  cfg.lr_base = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidParameterError);
  cfg = TrainConfig{};
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidParameterError);
}

TEST_CASE("model save/load round trip is bit-exact") {
  TempDir tmp;
  Network net = make_network(tiny_cfg());
  xavier_init(net, 77);
  ModelMeta meta;
  meta.group = 2;
  meta.zone_i = 3;
  meta.zone_j = 14;
  meta.label_half = {30.0, 30.0, 1.0};
  meta.seed = 123456789;
  const fs::path p = tmp.path / "m.model.json";
  save_model(net, meta, p);
  const auto [back, back_meta] = load_model(p);
  CHECK(back.cfg.in_rows == net.cfg.in_rows);
  CHECK(back.cfg.kernel == net.cfg.kernel);
  REQUIRE(back.params.size() == net.params.size());
  CHECK(std::memcmp(back.params.data(), net.params.data(),
                    net.params.size() * sizeof(double)) == 0);
  CHECK(back_meta.group == 2);
  CHECK(back_meta.zone_i == 3);
  CHECK(back_meta.zone_j == 14);
  CHECK(back_meta.label_half == meta.label_half);
  CHECK(back_meta.seed == meta.seed);
}

TEST_CASE("model load rejects corrupted artifacts") {
  TempDir tmp;
  Network net = make_network(tiny_cfg());
  xavier_init(net, 1);
  ModelMeta meta;
  meta.label_half = {1.0, 1.0, 1.0};
  const fs::path p = tmp.path / "m.model.json";
  save_model(net, meta, p);
  // Truncated blob.
  fs::resize_file(tmp.path / "m.model.raw", 16);
  CHECK_THROWS_AS(load_model(p), FormatError);
  // Non-finite parameter.
  save_model(net, meta, p);
  {
    std::fstream f(tmp.path / "m.model.raw",
                   std::ios::in | std::ios::out | std::ios::binary);
    const double nan = std::nan("");
    f.write(reinterpret_cast<const char*>(&nan), sizeof(nan));
  }
  CHECK_THROWS_AS(load_model(p), FormatError);
  // label_half length mismatch surfaces on load.
  meta.label_half = {1.0};
  save_model(net, meta, p);
  CHECK_THROWS_AS(load_model(p), FormatError);
  CHECK_THROWS_AS(load_model(tmp.path / "missing.model.json"), FormatError);
}
