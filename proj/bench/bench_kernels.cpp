// Times the OpenMP kernels against their serial references.
#include <chrono>
#include <cstdio>

#include "remixsep/datagen.hpp"
#include "remixsep/rng.hpp"
#include "remixsep/separator.hpp"
#include "remixsep/training.hpp"

using namespace remixsep;

namespace {

template <typename Fn>
double time_ms(Fn&& fn, int reps) {
  // warm-up
  fn();
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() / reps;
}

void report(const char* name, double serial_ms, double parallel_ms) {
  std::printf("%-28s %10.2f ms %10.2f ms %8.2fx\n", name, serial_ms, parallel_ms,
              serial_ms / parallel_ms);
}

}  // namespace

int main() {
  std::printf("%-28s %13s %13s %9s  (%d workers)\n", "kernel", "serial", "parallel", "speedup",
              max_workers());

  CorpusSpec spec;
  spec.num_examples = 64;
  spec.duration_s = 1.0;
  spec.k_min = 2;
  spec.k_max = 2;
  spec.seed = 7;
  report("synthesize_corpus(64x1s)",
         time_ms([&] { synthesize_corpus(spec, ExecPolicy::serial); }, 3),
         time_ms([&] { synthesize_corpus(spec, ExecPolicy::parallel); }, 3));

  SeparatorConfig mc;
  mc.n_out = 3;
  mc.hidden_width = 48;
  mc.n_blocks = 2;
  mc.zero_init_output = false;
  SeparatorModel model(mc);
  const auto params = model.init_params(1);
  Rng rng(2);
  WaveBatch batch(8, 8000, 8000);
  for (auto& v : batch.data) v = rng.normal();

  report("separate(B=8, 1s)",
         time_ms([&] { model.separate(params, batch, nullptr, ExecPolicy::serial); }, 3),
         time_ms([&] { model.separate(params, batch, nullptr, ExecPolicy::parallel); }, 3));

  SeparatorTape tape;
  const SourceStack out = model.separate(params, batch, &tape);
  SourceStack grad_out(8, 3, 8000, 8000);
  for (auto& v : grad_out.data) v = rng.normal();
  std::vector<double> grad;
  report("backward(B=8, 1s)",
         time_ms([&] { model.backward(params, batch, tape, grad_out, grad, ExecPolicy::serial); },
                 3),
         time_ms(
             [&] { model.backward(params, batch, tape, grad_out, grad, ExecPolicy::parallel); },
             3));

  const auto corpus = synthesize_corpus(spec);
  report("evaluate_records(64 ex)",
         time_ms([&] { evaluate_records(model, params, corpus, 8, ExecPolicy::serial); }, 2),
         time_ms([&] { evaluate_records(model, params, corpus, 8, ExecPolicy::parallel); }, 2));
  return 0;
}
