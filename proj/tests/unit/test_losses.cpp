#include <doctest.h>

#include <cmath>

#include "ipc/errors.hpp"
#include "ipc/losses.hpp"
#include "test_support.hpp"

using namespace ipc;

namespace {
const double kLn2 = std::log(2.0);
}

TEST_CASE("l1 examples") {
  const auto a = torch::rand({3, 4, 4});
  CHECK(loss::l1(a, a).item<double>() == 0.0);
  CHECK(loss::l1(torch::zeros({3, 2, 2}), torch::ones({3, 2, 2})).item<double>() == doctest::Approx(1.0));
  CHECK(loss::l1(torch::tensor({0.0, 0.5}, torch::kFloat64), torch::tensor({0.5, 0.5}, torch::kFloat64)).item<double>() == doctest::Approx(0.25));
  CHECK_THROWS_AS(loss::l1(torch::zeros({2}), torch::zeros({3})), ContractViolation);
}

TEST_CASE("adversarial examples") {
  const auto half = torch::zeros({1, 1, 2, 2}, torch::kFloat64);  // sigmoid(0) = 0.5
  CHECK(loss::adversarial(half, half, loss::AdvSide::kDiscriminator).item<double>() ==
        doctest::Approx(2.0 * kLn2).epsilon(1e-12));
  CHECK(loss::adversarial({}, half, loss::AdvSide::kGenerator).item<double>() == doctest::Approx(kLn2).epsilon(1e-12));
  const auto sure_real = torch::full({4}, 60.0, torch::kFloat64);
  const auto sure_fake = torch::full({4}, -60.0, torch::kFloat64);
  CHECK(loss::adversarial(sure_real, sure_fake, loss::AdvSide::kDiscriminator).item<double>() < 1e-20);
}

TEST_CASE("cross_entropy examples") {
  const auto uniform = torch::zeros({1, 256, 128}, torch::kFloat64);
  const auto labels = torch::randint(128, {1, 256}, torch::kLong);
  CHECK(loss::cross_entropy(uniform, labels).item<double>() == doctest::Approx(4.852030263919617).epsilon(1e-12));

  auto sharp = torch::zeros({1, 4, 8}, torch::kFloat64);
  const auto target = torch::tensor({1, 3, 5, 7}, torch::kLong).reshape({1, 4});
  for (int64_t i = 0; i < 4; ++i) sharp[0][i][target[0][i].item<int64_t>()] = 50.0;
  CHECK(loss::cross_entropy(sharp, target).item<double>() < 1e-15);

  CHECK_THROWS_AS(loss::cross_entropy(uniform, torch::full({1, 256}, 128, torch::kLong)), ContractViolation);
}

TEST_CASE("binary_cross_entropy examples") {
  const auto p = torch::full({2, 3}, 0.5, torch::kFloat64);
  const auto m = torch::randint(2, {2, 3}, torch::kFloat64);
  CHECK(loss::binary_cross_entropy(p, m).item<double>() == doctest::Approx(kLn2).epsilon(1e-12));
  CHECK(loss::binary_cross_entropy(torch::tensor({0.5, 0.5}, torch::kFloat64), torch::tensor({0.0, 1.0}, torch::kFloat64), loss::Reduction::kSum)
            .item<double>() == doctest::Approx(2.0 * kLn2).epsilon(1e-12));
  const auto saturated = torch::tensor({1e-12, 1.0 - 1e-12}, torch::kFloat64);
  CHECK(loss::binary_cross_entropy(saturated, torch::tensor({0.0, 1.0}, torch::kFloat64)).item<double>() < 1e-10);
  CHECK_THROWS_AS(loss::binary_cross_entropy(p, torch::zeros({3, 2})), ContractViolation);
  CHECK_THROWS_AS(loss::binary_cross_entropy(torch::tensor({1.0}), torch::tensor({1.0})), ContractViolation);
}

TEST_CASE("binary_cross_entropy_logits matches the probability form") {
  const auto logits = torch::randn({5, 5}, torch::kFloat64);
  const auto target = torch::randint(2, {5, 5}, torch::kFloat64);
  CHECK(loss::binary_cross_entropy_logits(logits, target).item<double>() ==
        doctest::Approx(loss::binary_cross_entropy(torch::sigmoid(logits), target).item<double>()).epsilon(1e-12));
}

TEST_CASE("temperature_softmax examples") {
  const auto logits = torch::randn({3, 7}, torch::kFloat64);
  CHECK(torch::allclose(loss::temperature_softmax(logits, 1.0), torch::softmax(logits, -1), 0.0, 1e-15));
  const auto p = loss::temperature_softmax(torch::tensor({2.0, 0.0}, torch::kFloat64), 2.0);
  CHECK(p[0].item<double>() == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(p[1].item<double>() == doctest::Approx(0.2689414213699951).epsilon(1e-12));
  const auto flat = loss::temperature_softmax(logits, 1e12);
  CHECK(torch::allclose(flat, torch::full_like(flat, 1.0 / 7.0), 0.0, 1e-9));
  CHECK_THROWS_AS(loss::temperature_softmax(logits, 0.0), ContractViolation);
  CHECK_THROWS_AS(loss::temperature_softmax(logits, -1.0), ContractViolation);
}

TEST_CASE("perceptual averages the per-layer l1") {
  const std::vector<torch::Tensor> a{torch::zeros({1, 2, 4, 4}), torch::zeros({1, 4, 2, 2})};
  const std::vector<torch::Tensor> b{torch::ones({1, 2, 4, 4}), torch::full({1, 4, 2, 2}, 3.0f)};
  CHECK(loss::perceptual(a, b).item<double>() == doctest::Approx(2.0));
  CHECK(loss::perceptual(a, a).item<double>() == 0.0);
}

TEST_CASE("loss gradients match finite differences") {
  auto gen = testing::make_gen(9);
  const auto target = torch::rand({2, 3, 4}, gen, torch::kFloat64);
  const auto x = target + 0.1 + torch::rand({2, 3, 4}, gen, torch::kFloat64);
  CHECK(testing::gradient_error([&](const torch::Tensor& v) { return loss::l1(v, target); }, x) < 1e-4);

  const auto labels = torch::randint(6, {2, 5}, gen, torch::kLong);
  const auto logits = torch::randn({2, 5, 6}, gen, torch::kFloat64);
  CHECK(testing::gradient_error([&](const torch::Tensor& v) { return loss::cross_entropy(v, labels); }, logits) <
        1e-4);

  const auto m = torch::randint(2, {3, 3}, gen, torch::kFloat64);
  const auto p = 0.1 + 0.8 * torch::rand({3, 3}, gen, torch::kFloat64);
  CHECK(testing::gradient_error([&](const torch::Tensor& v) { return loss::binary_cross_entropy(v, m); }, p) < 1e-4);

  const auto real = torch::randn({1, 1, 3, 3}, gen, torch::kFloat64);
  const auto fake = torch::randn({1, 1, 3, 3}, gen, torch::kFloat64);
  CHECK(testing::gradient_error(
            [&](const torch::Tensor& v) { return loss::adversarial(real, v, loss::AdvSide::kDiscriminator); }, fake) <
        1e-4);
  CHECK(testing::gradient_error(
            [&](const torch::Tensor& v) { return loss::adversarial({}, v, loss::AdvSide::kGenerator); }, fake) < 1e-4);
}
