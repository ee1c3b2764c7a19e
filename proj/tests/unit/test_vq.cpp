#include <doctest.h>

#include "ipc/errors.hpp"
#include "ipc/vq.hpp"
#include "test_support.hpp"

using namespace ipc;

namespace {

torch::Tensor grid1(std::initializer_list<double> v) {
  return torch::tensor(std::vector<double>(v), torch::kFloat32).reshape({1, 1, 1, -1});
}

}  // namespace

TEST_CASE("quantize picks the closer code") {
  const auto cb = torch::tensor({0.0f, 0.0f, 3.0f, 4.0f}).reshape({2, 2});
  const auto q = vq::quantize(grid1({1, 1}), cb);
  CHECK(q.indices.item<int64_t>() == 0);
  CHECK(torch::equal(q.vectors.reshape({2}), cb[0]));
}

TEST_CASE("quantize is a fixed point on codebook rows") {
  const auto cb = torch::tensor({0.0f, 0.0f, 3.0f, 4.0f}).reshape({2, 2});
  const auto q = vq::quantize(grid1({3, 4}), cb);
  CHECK(q.indices.item<int64_t>() == 1);
  CHECK(torch::equal(q.vectors.reshape({2}), cb[1]));
}

TEST_CASE("quantize breaks ties towards the lowest index") {
  const auto cb = torch::tensor({0.0f, 0.0f, 2.0f, 0.0f}).reshape({2, 2});
  CHECK(vq::quantize(grid1({1, 0}), cb).indices.item<int64_t>() == 0);
  const auto dup = torch::tensor({5.0f, 5.0f, 1.0f, 1.0f, 1.0f, 1.0f}).reshape({3, 2});
  CHECK(vq::quantize(grid1({1, 1}), dup).indices.item<int64_t>() == 1);
}

TEST_CASE("quantize rejects a dimension mismatch") {
  const auto cb = torch::zeros({4, 3});
  CHECK_THROWS_AS(vq::quantize(torch::zeros({1, 2, 2, 2}), cb), ContractViolation);
}

TEST_CASE("quantize keeps the grid shape and accepts the toy size") {
  torch::manual_seed(1);
  const auto cb = torch::randn({128, 32});
  const auto q = vq::quantize(torch::randn({2, 16, 16, 32}), cb);
  CHECK((q.indices.sizes().vec() == std::vector<int64_t>{2, 16, 16}));
  CHECK((q.vectors.sizes().vec() == std::vector<int64_t>{2, 16, 16, 32}));
  CHECK((q.indices.scalar_type() == torch::kLong));
}

TEST_CASE("lookup gathers rows") {
  torch::manual_seed(2);
  const auto cb = torch::randn({6, 3});
  const auto zeros = vq::lookup(torch::zeros({2, 3}, torch::kLong), cb);
  CHECK(torch::equal(zeros, cb[0].expand({2, 3, 3})));
  for (int64_t k = 0; k < 6; ++k) {
    const auto one = vq::lookup(torch::full({1, 1}, k, torch::kLong), cb);
    CHECK(torch::equal(one.reshape({3}), cb[k]));
  }
}

TEST_CASE("lookup rejects out-of-range indices") {
  const auto cb = torch::zeros({4, 2});
  CHECK_THROWS_AS(vq::lookup(torch::full({1, 1}, 4, torch::kLong), cb), ContractViolation);
  CHECK_THROWS_AS(vq::lookup(torch::full({1, 1}, -1, torch::kLong), cb), ContractViolation);
}

TEST_CASE("quantize inverts lookup for distinct rows") {
  auto gen = testing::make_gen(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto cb = torch::randn({17, 5}, gen, torch::kFloat32);
    const auto seq = torch::randint(17, {3, 4}, gen, torch::kLong);
    CHECK(torch::equal(vq::quantize(vq::lookup(seq, cb), cb).indices, seq));
  }
}

TEST_CASE("code_loss examples") {
  const auto z = torch::randn({1, 2, 2, 4});
  CHECK(vq::code_loss(z, z, z, z, 0.25, 0.1).item<double>() == doctest::Approx(0.0));

  const auto z_h = torch::zeros({1}, torch::kFloat64);
  auto z_c = torch::full({1}, 2.0, torch::kFloat64).requires_grad_(true);
  const auto loss = vq::code_loss(z_h, z_c, {}, {}, 0.25, 0.0);
  CHECK(loss.item<double>() == doctest::Approx(5.0).epsilon(1e-12));
  loss.backward();
  CHECK(z_c.grad().item<double>() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("code_loss feature term and shape checks") {
  const auto z = torch::zeros({1, 1, 1, 2}, torch::kFloat64);
  const auto p = torch::ones({1, 3, 2, 2}, torch::kFloat64);
  const auto t = torch::zeros({1, 3, 2, 2}, torch::kFloat64);
  CHECK(vq::code_loss(z, z, p, t, 0.25, 0.5).item<double>() == doctest::Approx(0.5));
  CHECK_THROWS_AS(vq::code_loss(z, torch::zeros({1, 1, 1, 3}), {}, {}, 0.25, 0.0), ContractViolation);
  CHECK_THROWS_AS(vq::code_loss(z, z, p, torch::zeros({1, 3, 2, 1}), 0.25, 0.5), ContractViolation);
}

TEST_CASE("straight_through forwards z_c and passes gradients to z_h") {
  auto z_h = torch::randn({2, 3}, torch::kFloat64).requires_grad_(true);
  const auto z_c = torch::randn({2, 3}, torch::kFloat64);
  const auto out = vq::straight_through(z_h, z_c);
  CHECK(torch::equal(out, z_c));
  out.square().sum().backward();
  CHECK(torch::allclose(z_h.grad(), 2.0 * z_c, 1e-12, 1e-12));
  CHECK_THROWS_AS(vq::straight_through(z_h, torch::zeros({3, 2})), ContractViolation);
}

TEST_CASE("straight_through is an identity when z_c == z_h") {
  auto z = torch::randn({4}, torch::kFloat64).requires_grad_(true);
  const auto out = vq::straight_through(z, z.detach());
  CHECK(torch::equal(out, z.detach()));
  out.sum().backward();
  CHECK(torch::equal(z.grad(), torch::ones({4}, torch::kFloat64)));
}

TEST_CASE("Codebook revives codes that stay idle") {
  vq::Codebook cb(4, 2);
  auto gen = testing::make_gen(0);
  const auto enc = torch::randn({1, 2, 2, 2});
  const auto used = torch::zeros({1, 2, 2}, torch::kLong);
  CHECK(cb->revive_dead_codes(used, enc, 3, gen) == 0);
  CHECK(cb->revive_dead_codes(used, enc, 3, gen) == 0);
  const auto before = cb->codes.detach().clone();
  CHECK(cb->revive_dead_codes(used, enc, 3, gen) == 3);
  CHECK(torch::equal(cb->codes[0], before[0]));
  for (int64_t k = 1; k < 4; ++k) {
    const auto row = cb->codes[k].detach();
    const bool from_encoder = (enc.reshape({-1, 2}) == row).all(-1).any().item<bool>();
    CHECK(from_encoder);
    CHECK(cb->idle_steps[k].item<int64_t>() == 0);
  }
}
