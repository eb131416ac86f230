// OpenMP kernels against their serial references.

#include <benchmark/benchmark.h>

#include "avr/kernels.hpp"
#include "avr/sr_network.hpp"
#include "avr/virtual_camera.hpp"
#include "avr/zoom.hpp"

namespace {

const avr::ImageFrame& world() {
  static const avr::ImageFrame w = avr::make_scene(7, 4).raster;
  return w;
}

avr::Affine2D warp_for(avr::FrameSize f) {
  return avr::compose(avr::zoom_transform(3.0, f),
                      avr::Affine2D::translation(12.5, -7.25)).inverse();
}

template <bool Parallel>
void BM_Warp(benchmark::State& state) {
  const avr::FrameSize f{static_cast<int>(state.range(0)), static_cast<int>(state.range(0)) * 9 / 16};
  avr::ImageFrame dst(f.width, f.height, 3, world().format());
  const avr::Affine2D t = warp_for(f);
  for (auto _ : state) {
    if constexpr (Parallel) {
      avr::kernels::warp_bilinear(world(), t, dst, avr::kernels::Rect::full(f),
                                  avr::kernels::Outside::fill_black);
    } else {
      avr::kernels::serial::warp_bilinear(world(), t, dst, avr::kernels::Rect::full(f),
                                          avr::kernels::Outside::fill_black);
    }
    benchmark::DoNotOptimize(dst.pixels().data());
  }
  state.SetItemsProcessed(state.iterations() * f.width * f.height);
}

template <bool Parallel>
void BM_Bicubic(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const avr::ImageFrame patch = world().crop(100, 100, side, side);
  for (auto _ : state) {
    auto up = Parallel ? avr::kernels::bicubic_upscale(patch, 4)
                       : avr::kernels::serial::bicubic_upscale(patch, 4);
    benchmark::DoNotOptimize(up.pixels().data());
  }
  state.SetItemsProcessed(state.iterations() * side * side * 16);
}

template <bool Parallel>
void BM_SwinBlock(benchmark::State& state) {
  avr::sr::SRConfig cfg;
  cfg.blocks = 1;
  const auto net = avr::sr::SRNetwork::seeded(cfg);
  const int side = static_cast<int>(state.range(0));
  const auto x = avr::sr::image_to_features(world().crop(200, 200, side, side));
  avr::sr::FeatureMap emb;
  emb.height = x.height;
  emb.width = x.width;
  emb.tokens = x.tokens * net.embed;
  emb.tokens.rowwise() += net.embed_bias;
  for (auto _ : state) {
    auto y = Parallel ? avr::sr::swin_block_forward(emb, net.blocks[0], cfg.window, cfg.ln_epsilon)
                      : avr::sr::serial::swin_block_forward(emb, net.blocks[0], cfg.window,
                                                            cfg.ln_epsilon);
    benchmark::DoNotOptimize(y.tokens.data());
  }
}

}  // namespace

BENCHMARK(BM_Warp<true>)->Arg(640)->Arg(1280)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Warp<false>)->Arg(640)->Arg(1280)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Bicubic<true>)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Bicubic<false>)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SwinBlock<true>)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SwinBlock<false>)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
