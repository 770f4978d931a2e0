#include <benchmark/benchmark.h>

#include "radcls/kernels/conv.hpp"
#include "radcls/rng.hpp"

using namespace radcls;
using namespace radcls::kernels;

namespace {

struct Problem {
  Tensor x, w, dy;
  ConvGeometry g;
};

// args: batch, in channels, out channels, spatial size, kernel
Problem make_problem(const benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0)), ci = static_cast<std::size_t>(st.range(1)),
             co = static_cast<std::size_t>(st.range(2)), s = static_cast<std::size_t>(st.range(3)),
             k = static_cast<std::size_t>(st.range(4));
  Rng rng(1);
  Problem p{Tensor({n, ci, s, s}), Tensor({co, ci, k, k}), Tensor(), {1, static_cast<int>(k / 2)}};
  for (auto& v : p.x.storage()) v = rng.uniform(-1, 1);
  for (auto& v : p.w.storage()) v = rng.uniform(-1, 1);
  p.dy = Tensor({n, co, conv_out_dim(s, k, p.g), conv_out_dim(s, k, p.g)});
  for (auto& v : p.dy.storage()) v = rng.uniform(-1, 1);
  return p;
}

void set_flops(benchmark::State& st, const Problem& p) {
  st.counters["MAC/s"] = benchmark::Counter(static_cast<double>(p.dy.size() * p.w.size() / p.w.dim(0)) *
                                                static_cast<double>(st.iterations()),
                                            benchmark::Counter::kIsRate);
}

template <auto Fn>
void BM_forward(benchmark::State& st) {
  const Problem p = make_problem(st);
  for (auto _ : st) benchmark::DoNotOptimize(Fn(p.x, p.w, nullptr, p.g));
  set_flops(st, p);
}

template <auto Fn>
void BM_backward_input(benchmark::State& st) {
  const Problem p = make_problem(st);
  for (auto _ : st) benchmark::DoNotOptimize(Fn(p.dy, p.w, p.x.shape(), p.g));
  set_flops(st, p);
}

template <auto Fn>
void BM_backward_weight(benchmark::State& st) {
  const Problem p = make_problem(st);
  Tensor dw(p.w.shape());
  for (auto _ : st) {
    Fn(p.dy, p.x, p.g, dw, nullptr);
    benchmark::DoNotOptimize(dw.data());
  }
  set_flops(st, p);
}

void shapes(benchmark::internal::Benchmark* b) {
  b->ArgNames({"n", "ci", "co", "s", "k"});
  b->Args({8, 1, 8, 64, 7});
  b->Args({8, 8, 16, 16, 3});
  b->Args({8, 32, 32, 8, 3});
  b->Args({2, 64, 64, 32, 3});
  b->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_forward<reference::conv2d_forward>)->Name("conv_forward/reference")->Apply(shapes);
BENCHMARK(BM_forward<omp::conv2d_forward>)->Name("conv_forward/omp")->Apply(shapes);
BENCHMARK(BM_backward_input<reference::conv2d_backward_input>)->Name("conv_backward_input/reference")->Apply(shapes);
BENCHMARK(BM_backward_input<omp::conv2d_backward_input>)->Name("conv_backward_input/omp")->Apply(shapes);
BENCHMARK(BM_backward_weight<reference::conv2d_backward_weight>)->Name("conv_backward_weight/reference")->Apply(shapes);
BENCHMARK(BM_backward_weight<omp::conv2d_backward_weight>)->Name("conv_backward_weight/omp")->Apply(shapes);

BENCHMARK_MAIN();
