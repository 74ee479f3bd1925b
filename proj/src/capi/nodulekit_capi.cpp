#include "nodulekit/nodulekit.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>

#include "common/error.hpp"
#include "common/log.hpp"
#include "ct_io/metaimage.hpp"
#include "json.hpp"
#include "metrics/metrics.hpp"
#include "pipeline/config.hpp"
#include "pipeline/pipeline.hpp"
#include "vit/encoder.hpp"
#include "vit/tensor_archive.hpp"

struct nk_volume {
  nodulekit::ct::CtVolume volume;
};

struct nk_encoder {
  nodulekit::vit::EncoderParams params;
};

namespace {

using nodulekit::ErrorCode;
using nlohmann::json;

thread_local std::string g_last_error;

static_assert(static_cast<int>(ErrorCode::kInternal) == NK_INTERNAL, "nk_status out of sync with ErrorCode");
static_assert(static_cast<int>(ErrorCode::kVersionMismatch) == NK_VERSION_MISMATCH);
static_assert(static_cast<int>(ErrorCode::kBadMagic) == NK_BAD_MAGIC);

nk_status set_error(nk_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename Fn>
nk_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return NK_OK;
  } catch (const nodulekit::Error& e) {
    return set_error(static_cast<nk_status>(e.code()), e.what());
  } catch (const json::exception& e) {
    return set_error(NK_INVALID_ARGUMENT, std::string("invalid JSON: ") + e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return set_error(NK_IO, e.what());
  } catch (const std::bad_alloc&) {
    return set_error(NK_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(NK_INTERNAL, e.what());
  } catch (...) {
    return set_error(NK_INTERNAL, "unknown failure");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(const void* p, const char* what) {
  if (p == nullptr) nodulekit::fail(ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

}  // namespace

extern "C" {

const char* nk_version(void) { return nodulekit::pipeline::tool_version(); }

const char* nk_status_name(nk_status status) {
  if (status == NK_OK) return "Ok";
  if (status < NK_INVALID_ARGUMENT || status > NK_INTERNAL) return "Unknown";
  return nodulekit::error_code_name(static_cast<ErrorCode>(status)).data();
}

int nk_status_exit_code(nk_status status) {
  switch (status) {
    case NK_OK: return 0;
    case NK_INVALID_ARGUMENT: return 1;
    case NK_INTERNAL: return 3;
    default: return (status > NK_OK && status < NK_INTERNAL) ? 2 : 3;
  }
}

const char* nk_last_error_message(void) { return g_last_error.c_str(); }

void nk_string_free(char* s) { std::free(s); }

nk_status nk_set_log_level(const char* level) {
  return guarded([&] {
    require(level, "level");
    const auto parsed = spdlog::level::from_str(level);
    if (parsed == spdlog::level::off && std::strcmp(level, "off") != 0) {
      nodulekit::fail(ErrorCode::kInvalidArgument, std::string("unknown log level '") + level + "'");
    }
    nodulekit::set_log_level(parsed);
  });
}

nk_status nk_volume_read(const char* path, nk_volume** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new nk_volume{nodulekit::ct::read_metaimage(path)};
  });
}

nk_status nk_volume_write(const nk_volume* volume, const char* path) {
  return guarded([&] {
    require(volume, "volume");
    require(path, "path");
    nodulekit::ct::write_metaimage(volume->volume, path);
  });
}

void nk_volume_free(nk_volume* volume) { delete volume; }

nk_status nk_volume_dims(const nk_volume* volume, size_t dims[3]) {
  return guarded([&] {
    require(volume, "volume");
    require(dims, "dims");
    const auto& d = volume->volume.dims();
    dims[0] = d.nx;
    dims[1] = d.ny;
    dims[2] = d.nz;
  });
}

nk_status nk_volume_geometry(const nk_volume* volume, double spacing[3], double origin[3], double direction[9]) {
  return guarded([&] {
    require(volume, "volume");
    const auto& v = volume->volume;
    for (int a = 0; a < 3; ++a) {
      if (spacing != nullptr) spacing[a] = v.spacing()[a];
      if (origin != nullptr) origin[a] = v.origin()[a];
    }
    if (direction != nullptr) std::memcpy(direction, v.direction().data(), 9 * sizeof(double));
  });
}

nk_status nk_volume_copy_voxels(const nk_volume* volume, float* out, size_t count) {
  return guarded([&] {
    require(volume, "volume");
    require(out, "out");
    const auto& voxels = volume->volume.voxels();
    if (count != voxels.size()) {
      nodulekit::fail(ErrorCode::kLengthMismatch, "buffer holds " + std::to_string(count) + " floats, volume has " +
                                                      std::to_string(voxels.size()));
    }
    std::memcpy(out, voxels.data(), count * sizeof(float));
  });
}

nk_status nk_volume_world_to_voxel(const nk_volume* volume, const double world[3], double voxel[3]) {
  return guarded([&] {
    require(volume, "volume");
    require(world, "world");
    require(voxel, "voxel");
    const auto v = nodulekit::ct::world_to_voxel(volume->volume, {world[0], world[1], world[2]});
    std::memcpy(voxel, v.data(), 3 * sizeof(double));
  });
}

nk_status nk_volume_voxel_to_world(const nk_volume* volume, const double voxel[3], double world[3]) {
  return guarded([&] {
    require(volume, "volume");
    require(voxel, "voxel");
    require(world, "world");
    const auto w = nodulekit::ct::voxel_to_world(volume->volume, {voxel[0], voxel[1], voxel[2]});
    std::memcpy(world, w.data(), 3 * sizeof(double));
  });
}

nk_status nk_encoder_load(const char* path, nk_encoder** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    const auto archive = nodulekit::vit::read_tensor_archive(path);
    *out = new nk_encoder{nodulekit::vit::encoder_from_archive(archive)};
  });
}

nk_status nk_encoder_init_random(const char* config_json, uint64_t seed, nk_encoder** out) {
  return guarded([&] {
    require(config_json, "config_json");
    require(out, "out");
    const auto config = nodulekit::vit::config_from_json(json::parse(config_json));
    *out = new nk_encoder{nodulekit::vit::random_encoder(config, seed)};
  });
}

nk_status nk_encoder_save(const nk_encoder* encoder, const char* path) {
  return guarded([&] {
    require(encoder, "encoder");
    require(path, "path");
    nodulekit::vit::write_tensor_archive(nodulekit::vit::encoder_to_archive(encoder->params), path);
  });
}

void nk_encoder_free(nk_encoder* encoder) { delete encoder; }

nk_status nk_encoder_info(const nk_encoder* encoder, char** json_out) {
  return guarded([&] {
    require(encoder, "encoder");
    require(json_out, "json_out");
    *json_out = dup_string(nodulekit::vit::to_json(encoder->params.config).dump());
  });
}

nk_status nk_encoder_forward(const nk_encoder* encoder, const float* image, size_t image_len, float* cls_out,
                             float* gap_out, size_t dim, size_t* tokens_out) {
  return guarded([&] {
    require(encoder, "encoder");
    require(image, "image");
    const auto& cfg = encoder->params.config;
    if (image_len != 3 * cfg.image_size * cfg.image_size) {
      nodulekit::fail(ErrorCode::kShapeMismatch, "image must hold 3 x " + std::to_string(cfg.image_size) + " x " +
                                                     std::to_string(cfg.image_size) + " floats");
    }
    if (dim != cfg.embed_dim) {
      nodulekit::fail(ErrorCode::kShapeMismatch, "output buffers must hold embed_dim = " +
                                                     std::to_string(cfg.embed_dim) + " floats");
    }
    const auto result = nodulekit::vit::encoder_forward(std::span(image, image_len), encoder->params, 0);
    if (cls_out != nullptr) std::memcpy(cls_out, result.cls.data(), dim * sizeof(float));
    if (gap_out != nullptr) std::memcpy(gap_out, result.gap.data(), dim * sizeof(float));
    if (tokens_out != nullptr) *tokens_out = result.patch_tokens.count + 1;
  });
}

nk_status nk_archive_inspect(const char* path, char** json_out) {
  return guarded([&] {
    require(path, "path");
    require(json_out, "json_out");
    *json_out = dup_string(nodulekit::pipeline::inspect_archive(path).dump(2));
  });
}

nk_status nk_metrics_evaluate(const double* scores, const int* labels, size_t n, char** json_out) {
  return guarded([&] {
    require(json_out, "json_out");
    if (n > 0) {
      require(scores, "scores");
      require(labels, "labels");
    }
    const auto report = nodulekit::metrics::evaluate_scores(std::span(scores, n), std::span(labels, n));
    *json_out = dup_string(nodulekit::metrics::to_json(report).dump());
  });
}

nk_status nk_config_schema(char** json_out) {
  return guarded([&] {
    require(json_out, "json_out");
    *json_out = dup_string(nodulekit::pipeline::config_schema().dump(2));
  });
}

nk_status nk_config_hash(const char* config_json, char** hash_out) {
  return guarded([&] {
    require(config_json, "config_json");
    require(hash_out, "hash_out");
    const auto config = nodulekit::pipeline::config_from_json(json::parse(config_json));
    *hash_out = dup_string(nodulekit::pipeline::config_hash(config));
  });
}

nk_status nk_run(const char* command, const char* config_json, char** stdout_out, char** summary_out) {
  return guarded([&] {
    require(command, "command");
    const json j = config_json == nullptr ? json::object() : json::parse(config_json);
    const auto config = nodulekit::pipeline::config_from_json(j);
    nodulekit::set_log_level(spdlog::level::from_str(config.raw.at("log_level").get<std::string>()));
    const auto result = nodulekit::pipeline::run_command(command, config);
    if (stdout_out != nullptr) *stdout_out = dup_string(result.stdout_text);
    if (summary_out != nullptr) *summary_out = dup_string(result.summary.dump());
  });
}

}  // extern "C"
