/* nodulekit C API.
 *
 * Every function returns an nk_status. On failure a thread-local message is
 * available from nk_last_error_message() until the next call on the same
 * thread. Strings handed out through char** parameters are owned by the
 * caller and released with nk_string_free().
 */
#ifndef NODULEKIT_NODULEKIT_H
#define NODULEKIT_NODULEKIT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(NODULEKIT_BUILDING)
#    define NK_API __declspec(dllexport)
#  else
#    define NK_API __declspec(dllimport)
#  endif
#else
#  define NK_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values match the library's internal error codes one to one. */
typedef enum nk_status {
  NK_OK = 0,
  NK_INVALID_ARGUMENT = 1,
  NK_IO = 2,
  NK_UNSUPPORTED_ELEMENT_TYPE = 3,
  NK_UNSUPPORTED_COMPRESSION = 4,
  NK_PAYLOAD_SIZE_MISMATCH = 5,
  NK_MISSING_REQUIRED_KEY = 6,
  NK_UNSUPPORTED_DIMENSIONALITY = 7,
  NK_INVALID_GEOMETRY = 8,
  NK_DEGENERATE_WINDOW = 9,
  NK_MALFORMED_ROW = 10,
  NK_UNKNOWN_HEADER = 11,
  NK_EMPTY_INPUT = 12,
  NK_OUT_OF_BOUNDS = 13,
  NK_WINDOW_LARGER_THAN_VOLUME = 14,
  NK_NON_AXIS_ALIGNED = 15,
  NK_BAD_MAGIC = 16,
  NK_UNSUPPORTED_VERSION = 17,
  NK_CORRUPT_ARCHIVE = 18,
  NK_MISSING_TENSOR = 19,
  NK_SHAPE_MISMATCH = 20,
  NK_NON_DIVISIBLE_INPUT = 21,
  NK_INVALID_DISTRIBUTION = 22,
  NK_EMPTY_TRAINING_SET = 23,
  NK_K_EXCEEDS_DATASET = 24,
  NK_LENGTH_MISMATCH = 25,
  NK_EMPTY_EVALUATION = 26,
  NK_SINGLE_CLASS_INPUT = 27,
  NK_MISSING_ARTIFACT = 28,
  NK_VERSION_MISMATCH = 29,
  NK_INTERNAL = 30
} nk_status;

typedef struct nk_volume nk_volume;
typedef struct nk_encoder nk_encoder;

NK_API const char* nk_version(void);
/* "BadMagic", "VersionMismatch", ... */
NK_API const char* nk_status_name(nk_status status);
/* Process exit code for a status: 0 ok, 1 usage, 2 data error, 3 internal. */
NK_API int nk_status_exit_code(nk_status status);
NK_API const char* nk_last_error_message(void);
NK_API void nk_string_free(char* s);
/* "trace", "debug", "info", "warn", "error" or "off". */
NK_API nk_status nk_set_log_level(const char* level);

/* CT volumes (.mhd with detached payload, or .mha). */
NK_API nk_status nk_volume_read(const char* path, nk_volume** out);
NK_API nk_status nk_volume_write(const nk_volume* volume, const char* path);
NK_API void nk_volume_free(nk_volume* volume);
NK_API nk_status nk_volume_dims(const nk_volume* volume, size_t dims[3]);
/* direction is row-major; column j is the world direction of voxel axis j. */
NK_API nk_status nk_volume_geometry(const nk_volume* volume, double spacing[3], double origin[3],
                                    double direction[9]);
/* Hounsfield values, x fastest; `count` must equal nx*ny*nz. */
NK_API nk_status nk_volume_copy_voxels(const nk_volume* volume, float* out, size_t count);
NK_API nk_status nk_volume_world_to_voxel(const nk_volume* volume, const double world[3], double voxel[3]);
NK_API nk_status nk_volume_voxel_to_world(const nk_volume* volume, const double voxel[3], double world[3]);

/* ViT encoder. */
NK_API nk_status nk_encoder_load(const char* path, nk_encoder** out);
/* config_json: {"image_size", "patch_size", "embed_dim", "depth", "num_heads", ...}. */
NK_API nk_status nk_encoder_init_random(const char* config_json, uint64_t seed, nk_encoder** out);
NK_API nk_status nk_encoder_save(const nk_encoder* encoder, const char* path);
NK_API void nk_encoder_free(nk_encoder* encoder);
/* Encoder config as JSON. */
NK_API nk_status nk_encoder_info(const nk_encoder* encoder, char** json_out);
/* image: 3 x S x S floats, channel-major. cls_out and gap_out receive embed_dim
 * floats each (either may be NULL). tokens_out (optional) receives the token
 * count including CLS. */
NK_API nk_status nk_encoder_forward(const nk_encoder* encoder, const float* image, size_t image_len,
                                    float* cls_out, float* gap_out, size_t dim, size_t* tokens_out);

/* Tensor archive summary as JSON. */
NK_API nk_status nk_archive_inspect(const char* path, char** json_out);

/* Metrics for binary scores (label = score >= 0.5) as JSON. */
NK_API nk_status nk_metrics_evaluate(const double* scores, const int* labels, size_t n, char** json_out);

/* Pipeline. config_json holds configuration keys (see nk_config_schema);
 * missing keys take their defaults. stdout_out (optional) receives text the
 * command wants printed; summary_out (optional) a JSON summary. */
NK_API nk_status nk_config_schema(char** json_out);
NK_API nk_status nk_config_hash(const char* config_json, char** hash_out);
NK_API nk_status nk_run(const char* command, const char* config_json, char** stdout_out, char** summary_out);

#ifdef __cplusplus
}
#endif

#endif /* NODULEKIT_NODULEKIT_H */
