#ifndef QNET_QNET_H
#define QNET_QNET_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define QNET_API __declspec(dllexport)
#else
#define QNET_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum qnet_status {
  QNET_OK = 0,
  QNET_E_INVALID_ARGUMENT = 1,
  QNET_E_NOT_FOUND = 2,
  QNET_E_UNCLASSIFIED = 3,
  QNET_E_CONFIGURATION = 4,
  QNET_E_DOMAIN = 5,
  QNET_E_SYNTHESIS = 6,
  QNET_E_NOT_ROUTED = 7,
  QNET_E_FRAMING = 8,
  QNET_E_INTEGRITY = 9,
  QNET_E_SEMANTIC = 10,
  QNET_E_INDETERMINATE = 11,
  QNET_E_IO = 12,
  QNET_E_INTERNAL = 13
} qnet_status;

typedef struct qnet_scenario qnet_scenario;
typedef struct qnet_node_config qnet_node_config;

enum {
  QNET_EMIT_PLOTS_DATA = 1u << 0,
  QNET_EMIT_TAGS = 1u << 1
};

QNET_API const char* qnet_version(void);
/* Category name of a status ("configuration", "synthesis", ...). */
QNET_API const char* qnet_status_category(qnet_status status);
/* Message of the last failure on the calling thread, "" if none. */
QNET_API const char* qnet_last_error(void);
QNET_API void qnet_string_free(char* s);

QNET_API qnet_status qnet_scenario_load(const char* path, qnet_scenario** out);
QNET_API qnet_status qnet_scenario_parse(const char* json_text, qnet_scenario** out);
QNET_API qnet_status qnet_scenario_preset(const char* map_label, uint64_t seed, qnet_scenario** out);
QNET_API void qnet_scenario_free(qnet_scenario* scenario);
QNET_API qnet_status qnet_scenario_set_seed(qnet_scenario* scenario, uint64_t seed);
QNET_API qnet_status qnet_scenario_set_map(qnet_scenario* scenario, const char* map_label);

/* Each run writes its reports into out_dir and optionally returns a short
   human-readable summary (free with qnet_string_free). */
QNET_API qnet_status qnet_run_synthesize(const qnet_scenario* scenario, const char* out_dir, char** summary);
QNET_API qnet_status qnet_run_budget(const qnet_scenario* scenario, const char* out_dir, char** summary);
QNET_API qnet_status qnet_run_static(const qnet_scenario* scenario, const char* out_dir, unsigned flags,
                                     char** summary);
QNET_API qnet_status qnet_run_dynamic(const qnet_scenario* scenario, const char* out_dir, unsigned flags,
                                      char** summary);
QNET_API qnet_status qnet_run_calibrate(const qnet_scenario* scenario, const char* out_dir, char** summary);
QNET_API qnet_status qnet_run_visibility(const qnet_scenario* scenario, const char* out_dir, char** summary);

QNET_API qnet_status qnet_node_synthesize_preset(const char* map_label, qnet_node_config** out);
QNET_API void qnet_node_free(qnet_node_config* config);
QNET_API qnet_status qnet_node_insertion_loss(const qnet_node_config* config, const char* channel,
                                              const char* endpoint, double* out_db);
/* Output port driven by input_port, 0 when unconnected. */
QNET_API qnet_status qnet_node_crosspoint(const qnet_node_config* config, int input_port, int* out_port);
QNET_API qnet_status qnet_node_encode_amc(const qnet_node_config* config, uint8_t node_id, uint8_t sequence,
                                          uint8_t out_frame[8]);
QNET_API qnet_status qnet_node_decode_amc(const uint8_t frame[8], qnet_node_config** out);

QNET_API uint8_t qnet_crc8(const uint8_t* data, size_t size);
QNET_API qnet_status qnet_band_of(double wavelength_nm, char* buf, size_t buf_size);
QNET_API qnet_status qnet_transmittance(double loss_db, double* out);
QNET_API qnet_status qnet_splitter_loss(int fanout, double excess_db, double* out_db);
QNET_API qnet_status qnet_apparent_efficiency(const char* detector_preset, double wavelength_nm, double* out);
QNET_API qnet_status qnet_expected_remote_entangled_rate(double back_to_back_ccps, double idler_path_loss_db,
                                                         double* out_ccps);

#ifdef __cplusplus
}
#endif

#endif
