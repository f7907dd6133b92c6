#pragma once

// Finite-difference cases covering every autodiff op.

#include <functional>
#include <vector>

#include "mcvae/autodiff.hpp"

namespace oracle {

struct OpCase {
  const char* name;
  mcvae::ad::Shape a, b;
  std::function<mcvae::ad::Tensor(const mcvae::ad::Tensor&, const mcvae::ad::Tensor&)> f;
};

inline std::vector<OpCase> op_cases() {
  namespace ad = mcvae::ad;
  static const std::size_t rows0[] = {0, 2, 2};
  static const std::size_t scatter_idx[] = {3, 0};
  static const std::size_t flat_idx[] = {5, 1, 1};
  return {
      {"matmul", {3, 4}, {4, 2}, [](auto& a, auto& b) { return ad::sum(ad::matmul(a, b)); }},
      {"matmul_t", {3, 4}, {2, 4}, [](auto& a, auto& b) { return ad::sum(ad::square(ad::matmul(a, b, true))); }},
      {"add", {3, 4}, {1, 4}, [](auto& a, auto& b) { return ad::sum(ad::square(a + b)); }},
      {"sub", {3, 4}, {3, 1}, [](auto& a, auto& b) { return ad::sum(ad::square(a - b)); }},
      {"mul", {3, 4}, {3, 4}, [](auto& a, auto& b) { return ad::sum(a * b * a); }},
      {"div", {3, 4}, {3, 4}, [](auto& a, auto& b) { return ad::sum(a / ad::add_scalar(ad::square(b), 0.5)); }},
      {"relu", {3, 4}, {1}, [](auto& a, auto& b) { return ad::sum(ad::relu(a) * ad::sum(b)); }},
      {"gelu", {3, 4}, {1}, [](auto& a, auto& b) { return ad::sum(ad::gelu(a)) * ad::sum(b); }},
      {"exp", {3, 4}, {1}, [](auto& a, auto& b) { return ad::sum(ad::exp(a * b)); }},
      {"log", {3, 4}, {1}, [](auto& a, auto& b) { return ad::sum(ad::log(ad::add_scalar(ad::square(a), 0.1)) * b); }},
      {"negate", {3, 4}, {1}, [](auto& a, auto& b) { return ad::sum(ad::square(-a + b)); }},
      {"sum_axis", {3, 4}, {3}, [](auto& a, auto& b) { return ad::sum(ad::square(ad::sum(a, 1) * b)); }},
      {"mean", {3, 4}, {1}, [](auto& a, auto& b) { return ad::square(ad::mean(a) + ad::sum(b)); }},
      {"mean_axis", {3, 4}, {4}, [](auto& a, auto& b) { return ad::sum(ad::square(ad::mean(a, 0) * b)); }},
      {"broadcast", {1, 4}, {3, 4}, [](auto& a, auto& b) { return ad::sum(ad::square(ad::broadcast_to(a, {3, 4}) * b)); }},
      {"concat", {3, 2}, {3, 4}, [](auto& a, auto& b) { return ad::sum(ad::square(ad::concat({a, b, a}, 1))); }},
      {"concat_rows", {2, 4}, {3, 4}, [](auto& a, auto& b) { return ad::sum(ad::exp(ad::concat({a, b}, 0))); }},
      {"slice", {3, 5}, {3, 2}, [](auto& a, auto& b) { return ad::sum(ad::square(ad::slice(a, 1, 1, 3) * b)); }},
      {"softmax", {3, 4}, {3, 4}, [](auto& a, auto& b) { return ad::sum(ad::softmax(a, 1) * b); }},
      {"softmax_col", {3, 4}, {3, 4}, [](auto& a, auto& b) { return ad::sum(ad::softmax(a, 0) * b); }},
      {"logsumexp", {3, 4}, {1, 4}, [](auto& a, auto& b) { return ad::sum(ad::logsumexp(a, 0) * b); }},
      {"l2_norm", {3, 4}, {3}, [](auto& a, auto& b) { return ad::sum(ad::l2_norm(a, 1) * b); }},
      {"cosine", {3, 4}, {5, 4}, [](auto& a, auto& b) { return ad::sum(ad::square(ad::cosine_similarity(a, b))); }},
      {"square", {3, 4}, {1}, [](auto& a, auto& b) { return ad::sum(ad::square(a)) * ad::sum(b); }},
      {"sqrt", {3, 4}, {1}, [](auto& a, auto& b) { return ad::sum(ad::sqrt(ad::add_scalar(ad::square(a), 0.2)) * b); }},
      {"sigmoid", {3, 4}, {1}, [](auto& a, auto& b) { return ad::sum(ad::sigmoid(a * b)); }},
      {"clamp", {3, 4}, {1}, [](auto& a, auto& b) { return ad::sum(ad::square(ad::clamp(a, -1.0, 1.0)) * b); }},
      {"gather", {3, 4}, {3, 4}, [](auto& a, auto& b) { return ad::sum(ad::square(ad::gather_rows(a, rows0) * b)); }},
      {"scatter", {2, 4}, {4, 4}, [](auto& a, auto& b) { return ad::sum(ad::exp(ad::scatter_rows(a, scatter_idx, 4) * b)); }},
      {"take", {8}, {3}, [](auto& a, auto& b) { return ad::sum(ad::square(ad::take(a, flat_idx) * b)); }},
  };
}

}  // namespace oracle
