#include "emscat/capi.h"

#include <string>

#include "emscat/runconfig.hpp"

namespace {

thread_local std::string g_lastError;

struct ConfigHandle {
    emscat::RunConfig config;
};

struct MeshHandle {
    emscat::TriangleMesh mesh;
};

const emscat::RunConfig& unwrap(const emscat_config* config) {
    return reinterpret_cast<const ConfigHandle*>(config)->config;
}

const emscat::TriangleMesh& unwrap(const emscat_mesh* mesh) {
    return reinterpret_cast<const MeshHandle*>(mesh)->mesh;
}

template <typename Fn>
emscat_status guarded(Fn&& fn) {
    try {
        fn();
        g_lastError.clear();
        return EMSCAT_OK;
    } catch (const emscat::ConfigError& e) {
        g_lastError = e.what();
        return EMSCAT_ERR_CONFIG;
    } catch (const emscat::MeshError& e) {
        g_lastError = e.what();
        return EMSCAT_ERR_CONFIG;
    } catch (const emscat::EmError& e) {
        g_lastError = e.what();
        return EMSCAT_ERR_SOLVER;
    } catch (const emscat::DivergenceError& e) {
        g_lastError = e.what();
        return EMSCAT_ERR_DIVERGENCE;
    } catch (const emscat::CompatibilityError& e) {
        g_lastError = e.what();
        return EMSCAT_ERR_COMPAT;
    } catch (const std::exception& e) {
        g_lastError = e.what();
        return EMSCAT_ERR_RUNTIME;
    }
}

}  // namespace

extern "C" {

const char* emscat_last_error(void) { return g_lastError.c_str(); }

emscat_status emscat_config_load(const char* path, emscat_config** out) {
    if (!path || !out) {
        g_lastError = "null argument";
        return EMSCAT_ERR_CONFIG;
    }
    *out = nullptr;
    return guarded([&] {
        auto* handle = new ConfigHandle{emscat::load_run_config(path)};
        *out = reinterpret_cast<emscat_config*>(handle);
    });
}

emscat_status emscat_config_parse(const char* json_text, emscat_config** out) {
    if (!json_text || !out) {
        g_lastError = "null argument";
        return EMSCAT_ERR_CONFIG;
    }
    *out = nullptr;
    return guarded([&] {
        auto* handle = new ConfigHandle{emscat::parse_run_config(json_text)};
        *out = reinterpret_cast<emscat_config*>(handle);
    });
}

void emscat_config_free(emscat_config* config) {
    delete reinterpret_cast<ConfigHandle*>(config);
}

const char* emscat_config_hash(const emscat_config* config) {
    if (!config) return "";
    return unwrap(config).configHash.c_str();
}

emscat_status emscat_run_gen(const emscat_config* config) {
    if (!config) return EMSCAT_ERR_CONFIG;
    return guarded([&] { emscat::run_gen(unwrap(config)); });
}

emscat_status emscat_run_solve(const emscat_config* config, int physical_optics, int with_mie) {
    if (!config) return EMSCAT_ERR_CONFIG;
    return guarded([&] { emscat::run_solve(unwrap(config), physical_optics != 0, with_mie != 0); });
}

emscat_status emscat_run_train(const emscat_config* config) {
    if (!config) return EMSCAT_ERR_CONFIG;
    return guarded([&] { emscat::run_train(unwrap(config)); });
}

emscat_status emscat_run_eval(const emscat_config* config) {
    if (!config) return EMSCAT_ERR_CONFIG;
    return guarded([&] { emscat::run_eval(unwrap(config)); });
}

emscat_status emscat_run_ablate(const emscat_config* config) {
    if (!config) return EMSCAT_ERR_CONFIG;
    return guarded([&] { emscat::run_ablate(unwrap(config)); });
}

emscat_status emscat_run_finetune(const emscat_config* config, double fraction_override) {
    if (!config) return EMSCAT_ERR_CONFIG;
    return guarded([&] { emscat::run_finetune(unwrap(config), fraction_override); });
}

emscat_status emscat_mesh_load(const char* path, emscat_mesh** out) {
    if (!path || !out) {
        g_lastError = "null argument";
        return EMSCAT_ERR_CONFIG;
    }
    *out = nullptr;
    return guarded([&] {
        auto* handle = new MeshHandle{emscat::load_mesh(path)};
        *out = reinterpret_cast<emscat_mesh*>(handle);
    });
}

emscat_status emscat_mesh_generate(const char* kind, const double* params, size_t param_count,
                                   double edge_length, emscat_mesh** out) {
    if (!kind || !out || (param_count > 0 && !params)) {
        g_lastError = "null argument";
        return EMSCAT_ERR_CONFIG;
    }
    *out = nullptr;
    return guarded([&] {
        emscat::ShapeParams p;
        p.values.assign(params, params + param_count);
        auto* handle = new MeshHandle{
            emscat::generate_shape(emscat::shape_kind_from_string(kind), p, edge_length)};
        *out = reinterpret_cast<emscat_mesh*>(handle);
    });
}

void emscat_mesh_free(emscat_mesh* mesh) { delete reinterpret_cast<MeshHandle*>(mesh); }

int emscat_mesh_face_count(const emscat_mesh* mesh) {
    return mesh ? unwrap(mesh).faceCount() : 0;
}

emscat_status emscat_mesh_write_off(const emscat_mesh* mesh, const char* path) {
    if (!mesh || !path) return EMSCAT_ERR_CONFIG;
    return guarded([&] { emscat::write_off(unwrap(mesh), path); });
}

emscat_status emscat_solve_currents(const emscat_mesh* mesh, double frequency_hz,
                                    double amplitude_vm, double theta_deg, double phi_deg,
                                    const char* currents_csv_path, double* residual_out) {
    if (!mesh || !currents_csv_path) return EMSCAT_ERR_CONFIG;
    return guarded([&] {
        emscat::IncidentWave wave(frequency_hz, amplitude_vm, theta_deg, phi_deg);
        emscat::ImpedanceSystem sys = emscat::assemble_system(unwrap(mesh), wave);
        emscat::SolveReport report;
        emscat::SurfaceCurrentField currents =
            emscat::solve_currents(sys, unwrap(mesh), &report);
        emscat::write_currents_csv(currents, currents_csv_path);
        if (residual_out) *residual_out = report.relativeResidual;
    });
}

}  // extern "C"
