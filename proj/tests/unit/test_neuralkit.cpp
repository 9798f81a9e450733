#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <vector>

#include "doctest.h"

#include "reem/digest.hpp"
#include "reem/errors.hpp"
#include "reem/nn/adam.hpp"
#include "reem/nn/checkpoint.hpp"
#include "reem/nn/dense.hpp"
#include "reem/nn/gat.hpp"
#include "reem/nn/gradcheck.hpp"
#include "reem/rng.hpp"
#include "test_util.hpp"

using namespace reem;
using namespace reem::nn;

namespace {

Vec random_vec(std::size_t n, DetRng& rng) {
  Vec v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

bool bitwise_equal(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i]))
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("dense stack forward matches hand-computed values") {
  DetRng rng(1);

  SUBCASE("single layer is a plain affine map") {
    DenseStack net({3, 2}, rng);
    auto params = net.params("m");
    REQUIRE(params.size() == 2);
    // W = [[1,2,3],[4,5,6]], b = [0.5, -0.5]
    *params[0].value = {1, 2, 3, 4, 5, 6};
    *params[1].value = {0.5, -0.5};

    const Vec y = net.forward({1.0, -1.0, 2.0});
    REQUIRE(y.size() == 2);
    CHECK(y[0] == doctest::Approx(1 - 2 + 6 + 0.5).epsilon(1e-15));
    CHECK(y[1] == doctest::Approx(4 - 5 + 12 - 0.5).epsilon(1e-15));
  }

  SUBCASE("zero weights propagate only the output bias") {
    DenseStack net({4, 6, 3}, rng);
    for (ParamView& p : net.params("m")) {
      std::fill(p.value->begin(), p.value->end(), 0.0);
    }
    auto params = net.params("m");
    *params[3].value = {1.5, -2.0, 0.25};  // output bias

    const Vec y = net.forward({9, 9, 9, 9});
    CHECK(y == Vec{1.5, -2.0, 0.25});
  }

  SUBCASE("hidden layers rectify, the output layer does not") {
    DenseStack net({1, 1, 1}, rng);
    auto params = net.params("m");
    *params[0].value = {1.0};   // w0
    *params[1].value = {-5.0};  // b0: drives the hidden unit negative
    *params[2].value = {2.0};   // w1
    *params[3].value = {-0.75};

    // pre-hidden = 1 - 5 = -4, rectified to 0, so out = -0.75.
    CHECK(net.forward({1.0})[0] == doctest::Approx(-0.75).epsilon(1e-15));
    // Output layer stays affine: out = 2*relu(4-5+... ) with x = 7:
    // pre-hidden = 2, out = 2*2 - 0.75 = 3.25.
    CHECK(net.forward({7.0})[0] == doctest::Approx(3.25).epsilon(1e-15));
  }

  SUBCASE("rating adapter dimensions flow through") {
    DenseStack net({45, 512, 128, 64}, rng);
    CHECK(net.input_size() == 45);
    CHECK(net.output_size() == 64);
    CHECK(net.layer_count() == 3);
    const Vec y = net.forward(random_vec(45, rng));
    CHECK(y.size() == 64);
    CHECK(std::all_of(y.begin(), y.end(),
                      [](double v) { return std::isfinite(v); }));
  }

  SUBCASE("input size mismatch is rejected") {
    DenseStack net({3, 2}, rng);
    CHECK_THROWS_AS((void)net.forward({1.0, 2.0}), ValidationError);
  }
}

TEST_CASE("dense stack init is deterministic in the seed") {
  DetRng a(42);
  DetRng b(42);
  DetRng c(43);
  DenseStack na({5, 8, 2}, a);
  DenseStack nb({5, 8, 2}, b);
  DenseStack nc({5, 8, 2}, c);

  DetRng in(7);
  const Vec x = random_vec(5, in);
  CHECK(bitwise_equal(na.forward(x), nb.forward(x)));
  CHECK_FALSE(bitwise_equal(na.forward(x), nc.forward(x)));
}

TEST_CASE("removing the final layer exposes the penultimate affine output") {
  DetRng rng(3);
  DenseStack net({4, 6, 2}, rng);
  DenseStack trunk = net.without_last_layer();

  CHECK(trunk.sizes() == std::vector<std::size_t>{4, 6});
  CHECK(trunk.layer_count() == 1);
  CHECK(trunk.output_size() == 6);

  // The truncated stack's only layer is now its output layer, so it emits
  // the affine pre-activation that the full stack would have rectified.
  auto params = net.params("m");
  const Vec x = {0.3, -1.2, 0.8, 2.0};
  Vec expect(6, 0.0);
  for (std::size_t r = 0; r < 6; ++r) {
    double acc = (*params[1].value)[r];
    for (std::size_t c = 0; c < 4; ++c)
      acc += (*params[0].value)[r * 4 + c] * x[c];
    expect[r] = acc;
  }
  const Vec got = trunk.forward(x);
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-15));

  DenseStack single({4, 2}, rng);
  CHECK_THROWS_AS((void)single.without_last_layer(), ValidationError);
}

TEST_CASE("adam drives a quadratic to its minimum") {
  Vec w = {0.0};
  Vec g = {0.0};
  std::vector<ParamView> params = {{"w", &w, &g, {1}}};

  AdamConfig config;
  config.lr = 0.1;
  Adam opt(config);

  SUBCASE("after 500 steps the iterate is within 1e-3 of the optimum") {
    for (int i = 0; i < 500; ++i) {
      g[0] = 2.0 * (w[0] - 3.0);
      opt.step(params);
    }
    CHECK(std::fabs(w[0] - 3.0) < 1e-3);
  }

  SUBCASE("the first update has magnitude close to the learning rate") {
    g[0] = 2.0 * (w[0] - 3.0);  // -6
    opt.step(params);
    // Bias correction makes m_hat / sqrt(v_hat) = sign(g) on step one.
    CHECK(w[0] == doctest::Approx(0.1).epsilon(1e-6));
  }
}

TEST_CASE("adam edge behavior") {
  Vec w = {1.0, -2.0};
  Vec g = {0.0, 0.0};
  std::vector<ParamView> params = {{"w", &w, &g, {2}}};

  SUBCASE("zero gradients and zero decay leave parameters untouched") {
    Adam opt(AdamConfig{});
    const Vec before = w;
    for (int i = 0; i < 3; ++i) opt.step(params);
    CHECK(bitwise_equal(w, before));
  }

  SUBCASE("weight decay is decoupled from the moment estimates") {
    AdamConfig config;
    config.lr = 0.1;
    config.weight_decay = 0.01;
    Adam opt(config);
    opt.step(params);
    // Coupled decay would fold w into the gradient and move by ~lr; the
    // decoupled update shrinks by exactly lr * wd * w.
    CHECK(w[0] == doctest::Approx(1.0 - 0.1 * 0.01 * 1.0).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(-2.0 - 0.1 * 0.01 * -2.0).epsilon(1e-12));
  }

  SUBCASE("non-finite gradients are rejected by parameter name") {
    Adam opt(AdamConfig{});
    g[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(opt.step(params),
                         "non-finite gradient in parameter 'w'",
                         ValidationError);
  }
}

TEST_CASE("finite differences confirm the dense backward pass") {
  DetRng rng(11);
  DenseStack net({45, 8, 1}, rng);
  const Vec x = random_vec(45, rng);
  auto params = net.params("mlp");

  auto loss = [&]() { return net.forward(x)[0]; };
  auto compute = [&]() {
    net.zero_grad();
    DenseStack::Tape tape;
    (void)net.forward(x, tape);
    (void)net.backward(tape, {1.0});
  };

  const GradCheckReport report = finite_difference_check(loss, compute, params);
  INFO("worst ", report.worst_param, "[", report.worst_index,
       "] rel=", report.max_rel_error);
  CHECK(report.pass);
  CHECK(report.entries_checked >= 10);
}

TEST_CASE("finite differences confirm the attention backward pass") {
  DetRng rng(13);
  GraphAttentionLayer layer(6, 4, rng);
  const Vec self = random_vec(6, rng);
  std::vector<Vec> neighbors;
  for (int i = 0; i < 3; ++i) neighbors.push_back(random_vec(6, rng));
  const Vec weighting = {0.7, -0.3, 0.5, 1.1};
  auto params = layer.params("gat");

  auto loss = [&]() { return dot(layer.forward(self, neighbors), weighting); };
  auto compute = [&]() {
    layer.zero_grad();
    GraphAttentionLayer::Tape tape;
    (void)layer.forward(self, neighbors, tape);
    Vec d_self;
    std::vector<Vec> d_neighbors;
    layer.backward(tape, weighting, d_self, d_neighbors);
  };

  const GradCheckReport report = finite_difference_check(loss, compute, params);
  INFO("worst ", report.worst_param, "[", report.worst_index,
       "] rel=", report.max_rel_error);
  CHECK(report.pass);
}

TEST_CASE("a corrupted gradient is flagged and named") {
  DetRng rng(17);
  DenseStack net({6, 4}, rng);
  const Vec x = {0.4, -0.9, 1.3, 0.2, -0.5, 0.8};
  const Vec weighting = {1.0, -2.0, 0.5, 1.5};
  auto params = net.params("m");

  auto loss = [&]() { return dot(net.forward(x), weighting); };
  auto compute = [&]() {
    net.zero_grad();
    DenseStack::Tape tape;
    (void)net.forward(x, tape);
    (void)net.backward(tape, weighting);
    for (double& v : *params[0].grad) v *= 2.0;  // sabotage m.w0
  };

  const GradCheckReport report = finite_difference_check(loss, compute, params);
  CHECK_FALSE(report.pass);
  CHECK(report.worst_param == "m.w0");
  CHECK(report.max_rel_error > 0.4);
}

TEST_CASE("attention weights form a proper distribution") {
  DetRng rng(19);
  GraphAttentionLayer layer(5, 3, rng);
  const Vec self = random_vec(5, rng);
  std::vector<Vec> neighbors;
  for (int i = 0; i < 6; ++i) neighbors.push_back(random_vec(5, rng));

  const Vec alpha = layer.attention_weights(self, neighbors);
  REQUIRE(alpha.size() == 7);
  CHECK(std::accumulate(alpha.begin(), alpha.end(), 0.0) ==
        doctest::Approx(1.0).epsilon(1e-12));
  for (double a : alpha) CHECK(a > 0.0);

  SUBCASE("softmax survives large-magnitude scores") {
    Vec big = self;
    std::vector<Vec> big_neighbors = neighbors;
    for (double& v : big) v *= 200.0;
    for (Vec& n : big_neighbors)
      for (double& v : n) v *= 200.0;
    const Vec out = layer.forward(big, big_neighbors);
    CHECK(std::all_of(out.begin(), out.end(),
                      [](double v) { return std::isfinite(v); }));
    const Vec a2 = layer.attention_weights(big, big_neighbors);
    CHECK(std::accumulate(a2.begin(), a2.end(), 0.0) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("attention output is invariant to neighbor order") {
  DetRng rng(23);
  GraphAttentionLayer layer(6, 4, rng);
  const Vec self = random_vec(6, rng);
  std::vector<Vec> neighbors;
  for (int i = 0; i < 5; ++i) neighbors.push_back(random_vec(6, rng));

  const Vec base = layer.forward(self, neighbors);
  const Vec base_alpha = layer.attention_weights(self, neighbors);

  std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  std::vector<Vec> shuffled;
  for (std::size_t i : perm) shuffled.push_back(neighbors[i]);

  const Vec out = layer.forward(self, shuffled);
  const Vec alpha = layer.attention_weights(self, shuffled);
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out[i] == doctest::Approx(base[i]).epsilon(1e-12));
  CHECK(alpha[0] == doctest::Approx(base_alpha[0]).epsilon(1e-12));
  for (std::size_t i = 0; i < perm.size(); ++i)
    CHECK(alpha[i + 1] == doctest::Approx(base_alpha[perm[i] + 1]).epsilon(1e-12));
}

TEST_CASE("self-loop handling at the degenerate ends") {
  DetRng rng(29);
  GraphAttentionLayer layer(4, 3, rng);
  const Vec self = {0.5, -1.0, 0.25, 2.0};

  SUBCASE("no neighbors reduces to elu of the self projection") {
    const Vec out = layer.forward(self, {});
    auto params = layer.params("g");
    REQUIRE(params[0].name == "g.w");
    const std::vector<double>& w = *params[0].value;
    for (std::size_t r = 0; r < 3; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < 4; ++c) acc += w[r * 4 + c] * self[c];
      CHECK(out[r] == doctest::Approx(elu(acc)).epsilon(1e-12));
    }
    const Vec alpha = layer.attention_weights(self, {});
    REQUIRE(alpha.size() == 1);
    CHECK(alpha[0] == doctest::Approx(1.0).epsilon(1e-15));
  }

  SUBCASE("neighbors identical to self match the neighbor-free output") {
    const Vec lonely = layer.forward(self, {});
    const Vec crowded = layer.forward(self, {self, self, self});
    for (std::size_t i = 0; i < lonely.size(); ++i)
      CHECK(crowded[i] == doctest::Approx(lonely[i]).epsilon(1e-10));
  }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  testutil::TempDir dir;
  const auto path = dir.file("model.ckpt");

  CheckpointMeta meta;
  meta.seed = 0xDEADBEEFCAFEF00DULL;
  meta.epoch = 37;
  meta.val_loss = 0.012345678901234567;
  meta.tag = "best";
  meta.extra = {{"ratings.mean", 0.1 + 0.2}, {"ratings.std", 1e-17}};

  std::vector<NamedArray> arrays;
  arrays.push_back({"enc.w0", {2, 3}, {0.0, -0.0, 1e300, -1e-300, M_PI, 0.3}});
  arrays.push_back({"enc.b0", {2}, {std::nextafter(1.0, 2.0), -42.5}});

  save_checkpoint(path, arrays, meta);
  const Checkpoint loaded = load_checkpoint(path);

  CHECK(loaded.meta.seed == meta.seed);
  CHECK(loaded.meta.epoch == 37);
  CHECK(std::bit_cast<std::uint64_t>(loaded.meta.val_loss) ==
        std::bit_cast<std::uint64_t>(meta.val_loss));
  CHECK(loaded.meta.tag == "best");
  REQUIRE(loaded.meta.extra.size() == 2);
  CHECK(std::bit_cast<std::uint64_t>(loaded.meta.extra.at("ratings.mean")) ==
        std::bit_cast<std::uint64_t>(0.1 + 0.2));

  REQUIRE(loaded.arrays.size() == 2);
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    CHECK(loaded.arrays[i].name == arrays[i].name);
    CHECK(loaded.arrays[i].shape == arrays[i].shape);
    CHECK(bitwise_equal(loaded.arrays[i].data, arrays[i].data));
  }

  SUBCASE("saving twice produces identical bytes") {
    const auto path2 = dir.file("model2.ckpt");
    save_checkpoint(path2, arrays, meta);
    CHECK(testutil::read_file(path) == testutil::read_file(path2));
  }

  SUBCASE("find locates arrays by name") {
    CHECK(loaded.find("enc.b0") != nullptr);
    CHECK(loaded.find("enc.w9") == nullptr);
  }
}

TEST_CASE("damaged checkpoints are refused outright") {
  testutil::TempDir dir;
  const auto path = dir.file("model.ckpt");

  CheckpointMeta meta;
  meta.tag = "snapshot";
  std::vector<NamedArray> arrays = {{"w", {4}, {1.0, 2.0, 3.0, 4.0}}};
  save_checkpoint(path, arrays, meta);
  const std::string bytes = testutil::read_file(path);

  SUBCASE("truncation") {
    testutil::write_file(path, bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS((void)load_checkpoint(path), IoError);
  }

  SUBCASE("a flipped payload byte breaks the digest") {
    std::string corrupt = bytes;
    corrupt[corrupt.size() / 2] ^= 0x40;
    testutil::write_file(path, corrupt);
    CHECK_THROWS_AS((void)load_checkpoint(path), IoError);
  }

  SUBCASE("an unknown format version is rejected as such") {
    // Bump the version field (right after the 8-byte magic), then restore a
    // valid trailing digest so only the version is at fault.
    std::string future = bytes;
    future[8] = 2;
    const std::uint64_t d =
        fnv1a64(std::string_view(future.data(), future.size() - 8));
    for (int i = 0; i < 8; ++i)
      future[future.size() - 8 + i] = static_cast<char>((d >> (8 * i)) & 0xff);
    testutil::write_file(path, future);
    CHECK_THROWS_AS((void)load_checkpoint(path), ValidationError);
  }

  SUBCASE("a missing file reports an io failure") {
    CHECK_THROWS_AS((void)load_checkpoint(dir.file("nope.ckpt")), IoError);
  }
}

TEST_CASE("snapshot and restore move parameters across stacks") {
  testutil::TempDir dir;
  DetRng ra(101), rb(202);
  DenseStack source({5, 7, 2}, ra);
  DenseStack target({5, 7, 2}, rb);

  const Vec x = {0.1, 0.2, 0.3, 0.4, 0.5};
  REQUIRE_FALSE(bitwise_equal(source.forward(x), target.forward(x)));

  const auto path = dir.file("params.ckpt");
  save_checkpoint(path, snapshot_params(source.params("net")), CheckpointMeta{});
  const Checkpoint loaded = load_checkpoint(path);
  restore_params(loaded, target.params("net"));

  CHECK(bitwise_equal(source.forward(x), target.forward(x)));

  SUBCASE("a name absent from the checkpoint is an error") {
    DenseStack other({5, 7, 2}, ra);
    CHECK_THROWS_AS(restore_params(loaded, other.params("other")),
                    ValidationError);
  }

  SUBCASE("a size mismatch is an error") {
    DenseStack wider({5, 9, 2}, ra);
    CHECK_THROWS_AS(restore_params(loaded, wider.params("net")),
                    ValidationError);
  }
}
