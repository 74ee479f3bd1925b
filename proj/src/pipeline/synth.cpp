#include "pipeline/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "common/binary_io.hpp"
#include "common/error.hpp"
#include "common/log.hpp"
#include "common/random.hpp"
#include "ct_io/luna_csv.hpp"
#include "ct_io/metaimage.hpp"
#include "pipeline/pipeline.hpp"
#include "pipeline/synth.hpp"

namespace nodulekit::pipeline {

namespace {

constexpr ct::Vec3 kSpacing = {0.8, 0.8, 1.0};
constexpr double kBackgroundHu = -850.0;
constexpr double kNoiseHu = 60.0;
constexpr double kPeakHu = 900.0;

struct Blob {
  std::array<double, 3> voxel;
  double diameter_mm;
};

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

}  // namespace

SynthCorpus generate_synthetic_corpus(const std::filesystem::path& dir, const SynthOptions& o) {
  const auto n = static_cast<double>(o.size);
  if (o.size < o.window || o.size < 16) {
    fail(ErrorCode::kInvalidArgument, "synthetic volume side must be >= 16 and >= window");
  }
  SynthCorpus corpus;
  corpus.scans_dir = dir / "scans";
  corpus.annotations = dir / "annotations.csv";
  corpus.candidates = dir / "candidates.csv";
  std::vector<ct::NoduleAnnotation> annotations;
  std::vector<ct::Candidate> candidates;

  for (std::size_t s = 0; s < o.scans; ++s) {
    Rng rng(derive_seed(o.seed, s));
    char id_buf[32];
    std::snprintf(id_buf, sizeof id_buf, "synth_%04zu", s);
    const std::string id = id_buf;
    const ct::Vec3 origin = {-0.5 * n * kSpacing[0], -0.5 * n * kSpacing[1], -100.0 - 3.0 * static_cast<double>(s)};

    std::vector<Blob> blobs;
    const double margin = 6.0;
    for (std::size_t attempt = 0; blobs.size() < o.positives_per_scan && attempt < 1000; ++attempt) {
      Blob b{{uniform(rng, margin, n - margin), uniform(rng, margin, n - margin), uniform(rng, margin, n - margin)},
             uniform(rng, 8.0, 16.0)};
      bool clear = true;
      for (const auto& other : blobs) {
        double d2 = 0;
        for (int a = 0; a < 3; ++a) {
          const double d = (b.voxel[a] - other.voxel[a]) * kSpacing[a];
          d2 += d * d;
        }
        clear = clear && std::sqrt(d2) > b.diameter_mm + other.diameter_mm;
      }
      if (clear) blobs.push_back(b);
    }

    std::vector<float> voxels(o.size * o.size * o.size);
    for (auto& v : voxels) v = static_cast<float>(kBackgroundHu + kNoiseHu * standard_normal(rng));
    for (const auto& b : blobs) {
      const double sigma = b.diameter_mm / 4.0;
      const double reach = 3.0 * sigma;
      std::array<long long, 3> lo{};
      std::array<long long, 3> hi{};
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::max(0LL, static_cast<long long>(std::floor(b.voxel[a] - reach / kSpacing[a])));
        hi[a] = std::min(static_cast<long long>(o.size) - 1, static_cast<long long>(std::ceil(b.voxel[a] + reach / kSpacing[a])));
      }
      for (long long z = lo[2]; z <= hi[2]; ++z) {
        for (long long y = lo[1]; y <= hi[1]; ++y) {
          for (long long x = lo[0]; x <= hi[0]; ++x) {
            const double dx = (static_cast<double>(x) - b.voxel[0]) * kSpacing[0];
            const double dy = (static_cast<double>(y) - b.voxel[1]) * kSpacing[1];
            const double dz = (static_cast<double>(z) - b.voxel[2]) * kSpacing[2];
            const auto idx = (static_cast<std::size_t>(z) * o.size + static_cast<std::size_t>(y)) * o.size +
                             static_cast<std::size_t>(x);
            voxels[idx] += static_cast<float>(kPeakHu * std::exp(-(dx * dx + dy * dy + dz * dz) / (2 * sigma * sigma)));
          }
        }
      }
    }
    for (auto& v : voxels) v = std::clamp(std::round(v), -1024.0f, 3071.0f);
    const ct::CtVolume volume({o.size, o.size, o.size}, kSpacing, origin, ct::kIdentity, std::move(voxels),
                              ct::ElementType::kShort);
    ct::write_metaimage(volume, corpus.scans_dir / (id + ".mhd"));

    for (const auto& b : blobs) {
      const auto world = ct::voxel_to_world(volume, b.voxel);
      annotations.push_back({id, world, b.diameter_mm});
      // Candidate detections land near, not exactly on, the annotated center.
      ct::Vec3 jitter = world;
      for (int a = 0; a < 3; ++a) jitter[a] += uniform(rng, -0.5, 0.5) * kSpacing[a];
      candidates.push_back({id, jitter, 1});
      ++corpus.positives;
    }
    // Window placement mirrors patch::window_start, including the inward
    // shift at borders, so the check covers the pixels actually extracted.
    auto window_range = [&](double c) {
      const double start = std::clamp(c - std::floor(static_cast<double>(o.window) / 2.0), 0.0,
                                      n - static_cast<double>(o.window));
      return std::pair{start, start + static_cast<double>(o.window) - 1.0};
    };
    std::size_t made = 0;
    for (std::size_t attempt = 0; made < o.negatives_per_scan && attempt < 10000; ++attempt) {
      const ct::Vec3 v = {std::floor(uniform(rng, 0, n)), std::floor(uniform(rng, 0, n)), std::floor(uniform(rng, 0, n))};
      const auto [x0, x1] = window_range(v[0]);
      const auto [y0, y1] = window_range(v[1]);
      bool background = true;
      for (const auto& b : blobs) {
        const double reach_mm = 3.0 * b.diameter_mm / 4.0;
        const double rx = reach_mm / kSpacing[0] + 1;
        const double ry = reach_mm / kSpacing[1] + 1;
        const bool outside_x = b.voxel[0] + rx < x0 || b.voxel[0] - rx > x1;
        const bool outside_y = b.voxel[1] + ry < y0 || b.voxel[1] - ry > y1;
        const bool slice_far = std::abs(v[2] - b.voxel[2]) * kSpacing[2] > reach_mm + 1;
        background = background && (outside_x || outside_y || slice_far);
      }
      if (!background) continue;
      candidates.push_back({id, ct::voxel_to_world(volume, v), 0});
      ++made;
      ++corpus.negatives;
    }
  }
  write_file_text(corpus.annotations, ct::write_annotations_csv(annotations));
  write_file_text(corpus.candidates, ct::write_candidates_csv(candidates));
  return corpus;
}

CommandResult cmd_synth(const PipelineConfig& config) {
  SynthOptions o;
  o.scans = config.synth_scans;
  o.positives_per_scan = config.synth_positives;
  o.negatives_per_scan = config.synth_negatives;
  o.size = config.synth_size;
  o.window = config.window;
  o.seed = config.seed;
  const auto corpus = generate_synthetic_corpus(config.out_dir, o);
  logger()->info("synth: {} scans, {} positive and {} negative candidates in {}", o.scans, corpus.positives,
                 corpus.negatives, config.out_dir);
  return {{{"scans_dir", corpus.scans_dir.string()},
           {"annotations", corpus.annotations.string()},
           {"candidates", corpus.candidates.string()},
           {"positives", corpus.positives},
           {"negatives", corpus.negatives}},
          {}};
}

}  // namespace nodulekit::pipeline
