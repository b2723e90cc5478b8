#ifndef EMSCAT_CAPI_H
#define EMSCAT_CAPI_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as process exit codes for the CLI. */
typedef enum emscat_status {
    EMSCAT_OK = 0,
    EMSCAT_ERR_RUNTIME = 1,    /* unexpected failure */
    EMSCAT_ERR_CONFIG = 2,     /* bad configuration or input file */
    EMSCAT_ERR_SOLVER = 3,     /* reference solver failure */
    EMSCAT_ERR_DIVERGENCE = 4, /* training loss diverged */
    EMSCAT_ERR_COMPAT = 5      /* checkpoint/configuration mismatch */
} emscat_status;

/* Message for the most recent failure on this thread; empty string if none. */
const char* emscat_last_error(void);

/* ------------------------------------------------------------------ */
/* Configuration handle                                                */

typedef struct emscat_config emscat_config;

emscat_status emscat_config_load(const char* path, emscat_config** out);
emscat_status emscat_config_parse(const char* json_text, emscat_config** out);
void emscat_config_free(emscat_config* config);

/* Hex FNV-1a hash of the canonical config document. Valid while the
 * config handle lives. */
const char* emscat_config_hash(const emscat_config* config);

/* ------------------------------------------------------------------ */
/* Pipeline commands; outputs land in the config's output directory.   */

emscat_status emscat_run_gen(const emscat_config* config);
emscat_status emscat_run_solve(const emscat_config* config, int physical_optics, int with_mie);
emscat_status emscat_run_train(const emscat_config* config);
emscat_status emscat_run_eval(const emscat_config* config);
emscat_status emscat_run_ablate(const emscat_config* config);
/* fraction_override <= 0 keeps the config's fine-tune fraction. */
emscat_status emscat_run_finetune(const emscat_config* config, double fraction_override);

/* ------------------------------------------------------------------ */
/* Mesh handle                                                         */

typedef struct emscat_mesh emscat_mesh;

emscat_status emscat_mesh_load(const char* path, emscat_mesh** out);
emscat_status emscat_mesh_generate(const char* kind, const double* params, size_t param_count,
                                   double edge_length, emscat_mesh** out);
void emscat_mesh_free(emscat_mesh* mesh);
int emscat_mesh_face_count(const emscat_mesh* mesh);
emscat_status emscat_mesh_write_off(const emscat_mesh* mesh, const char* path);

/* Solves the interaction system for one incidence and writes the
 * per-face currents CSV. residual_out may be NULL. */
emscat_status emscat_solve_currents(const emscat_mesh* mesh, double frequency_hz,
                                    double amplitude_vm, double theta_deg, double phi_deg,
                                    const char* currents_csv_path, double* residual_out);

#ifdef __cplusplus
}
#endif

#endif /* EMSCAT_CAPI_H */
