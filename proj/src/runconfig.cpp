#include "emscat/runconfig.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace emscat {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const char* where,
                    std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok)
            throw ConfigError(std::string("unknown config key \"") + key + "\" in " + where);
    }
}

double require_positive(const json& v, const char* what) {
    double d = v.get<double>();
    if (!(d > 0)) throw ConfigError(std::string(what) + " must be positive");
    return d;
}

ShapeConfig parse_shape(const json& obj, const char* where) {
    reject_unknown(obj, where, {"mesh_path", "kind", "params", "edge_length"});
    ShapeConfig s;
    if (obj.contains("mesh_path")) s.meshPath = obj["mesh_path"].get<std::string>();
    if (obj.contains("kind")) s.kind = shape_kind_from_string(obj["kind"].get<std::string>());
    if (obj.contains("params")) {
        s.params.values.clear();
        for (const auto& v : obj["params"]) s.params.values.push_back(v.get<double>());
    }
    if (obj.contains("edge_length"))
        s.edgeLength = require_positive(obj["edge_length"], "shape.edge_length");
    return s;
}

}  // namespace

std::vector<std::pair<double, double>> WaveGridConfig::angles() const {
    std::vector<std::pair<double, double>> out;
    if (thetaCount == 1) {
        out.emplace_back(thetaStartDeg, phiDeg);
        return out;
    }
    double step = (thetaStopDeg - thetaStartDeg) / (thetaCount - 1);
    for (int i = 0; i < thetaCount; ++i) out.emplace_back(thetaStartDeg + i * step, phiDeg);
    return out;
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = 14695981039346656037ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::string fnv1a64_hex(const std::string& s) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(s.data(), s.size())));
    return buf;
}

RunConfig parse_run_config(const std::string& jsonText) {
    json doc;
    try {
        doc = json::parse(jsonText);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config root must be an object");
    reject_unknown(doc, "config root",
                   {"seed", "output_dir", "shape", "wave", "hierarchy", "model", "train", "eval",
                    "finetune"});

    RunConfig cfg;
    if (doc.contains("seed")) cfg.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("output_dir")) cfg.outputDir = doc["output_dir"].get<std::string>();
    if (doc.contains("shape")) cfg.shape = parse_shape(doc["shape"], "shape");

    if (doc.contains("wave")) {
        const json& w = doc["wave"];
        reject_unknown(w, "wave",
                       {"frequency_hz", "amplitude_vm", "phi_deg", "theta_start_deg",
                        "theta_stop_deg", "theta_count"});
        if (w.contains("frequency_hz"))
            cfg.wave.frequencyHz = require_positive(w["frequency_hz"], "wave.frequency_hz");
        if (w.contains("amplitude_vm"))
            cfg.wave.amplitudeVm = require_positive(w["amplitude_vm"], "wave.amplitude_vm");
        if (w.contains("phi_deg")) cfg.wave.phiDeg = w["phi_deg"].get<double>();
        if (w.contains("theta_start_deg"))
            cfg.wave.thetaStartDeg = w["theta_start_deg"].get<double>();
        if (w.contains("theta_stop_deg")) cfg.wave.thetaStopDeg = w["theta_stop_deg"].get<double>();
        if (w.contains("theta_count")) {
            cfg.wave.thetaCount = w["theta_count"].get<int>();
            if (cfg.wave.thetaCount < 1) throw ConfigError("wave.theta_count must be >= 1");
        }
    }

    if (doc.contains("hierarchy")) {
        const json& h = doc["hierarchy"];
        reject_unknown(h, "hierarchy", {"levels"});
        if (h.contains("levels")) {
            cfg.hierarchyLevels = h["levels"].get<int>();
            if (cfg.hierarchyLevels < 1) throw ConfigError("hierarchy.levels must be >= 1");
        }
    }
    cfg.model.levels = cfg.hierarchyLevels;

    if (doc.contains("model")) {
        const json& m = doc["model"];
        reject_unknown(m, "model",
                       {"width", "heads", "kpconv_kernels", "skip_connections", "edge_constraint",
                        "kv_source", "include_coordinates"});
        if (m.contains("width")) cfg.model.featureWidth = m["width"].get<std::size_t>();
        if (m.contains("heads")) cfg.model.attentionHeads = m["heads"].get<std::size_t>();
        if (m.contains("kpconv_kernels"))
            cfg.model.kpconvKernelCount = m["kpconv_kernels"].get<int>();
        if (m.contains("skip_connections"))
            cfg.model.skipConnections = m["skip_connections"].get<bool>();
        if (m.contains("edge_constraint"))
            cfg.model.edgeConstraint = m["edge_constraint"].get<bool>();
        if (m.contains("kv_source")) {
            std::string s = m["kv_source"].get<std::string>();
            if (s == "sum")
                cfg.model.kvSource = KvSource::Sum;
            else if (s == "expanded")
                cfg.model.kvSource = KvSource::Expanded;
            else
                throw ConfigError("model.kv_source must be \"sum\" or \"expanded\"");
        }
        if (m.contains("include_coordinates"))
            cfg.model.includeCoordinates = m["include_coordinates"].get<bool>();
        try {
            cfg.model.validate();
        } catch (const ModelError& e) {
            throw ConfigError(e.what());
        }
    }

    if (doc.contains("train")) {
        const json& t = doc["train"];
        reject_unknown(t, "train", {"epochs", "batch_size", "learning_rate", "loss"});
        if (t.contains("epochs")) {
            cfg.train.epochs = t["epochs"].get<int>();
            if (cfg.train.epochs < 1) throw ConfigError("train.epochs must be >= 1");
        }
        if (t.contains("batch_size")) {
            cfg.train.batchSize = t["batch_size"].get<int>();
            if (cfg.train.batchSize < 1) throw ConfigError("train.batch_size must be >= 1");
        }
        if (t.contains("learning_rate")) {
            cfg.train.learningRate = t["learning_rate"].get<double>();
            if (cfg.train.learningRate < 0) throw ConfigError("train.learning_rate must be >= 0");
        }
        if (t.contains("loss")) {
            std::string s = t["loss"].get<std::string>();
            if (s == "physics")
                cfg.train.useLabelLoss = false;
            else if (s == "mse")
                cfg.train.useLabelLoss = true;
            else
                throw ConfigError("train.loss must be \"physics\" or \"mse\"");
        }
    }
    cfg.train.seed = cfg.seed;

    if (doc.contains("eval")) {
        const json& e = doc["eval"];
        reject_unknown(e, "eval", {"theta_start_deg", "theta_stop_deg", "samples", "phi_deg"});
        if (e.contains("theta_start_deg"))
            cfg.eval.cut.thetaStartDeg = e["theta_start_deg"].get<double>();
        if (e.contains("theta_stop_deg"))
            cfg.eval.cut.thetaStopDeg = e["theta_stop_deg"].get<double>();
        if (e.contains("samples")) {
            cfg.eval.cut.samples = e["samples"].get<int>();
            if (cfg.eval.cut.samples < 2) throw ConfigError("eval.samples must be >= 2");
        }
        if (e.contains("phi_deg")) cfg.eval.cut.phiDeg = e["phi_deg"].get<double>();
    }

    if (doc.contains("finetune")) {
        const json& f = doc["finetune"];
        reject_unknown(f, "finetune", {"fraction", "epochs", "shape"});
        if (f.contains("fraction")) {
            cfg.finetune.fraction = f["fraction"].get<double>();
            if (cfg.finetune.fraction <= 0 || cfg.finetune.fraction > 1)
                throw ConfigError("finetune.fraction must lie in (0, 1]");
        }
        if (f.contains("epochs")) {
            cfg.finetune.epochs = f["epochs"].get<int>();
            if (cfg.finetune.epochs < 1) throw ConfigError("finetune.epochs must be >= 1");
        }
        if (f.contains("shape")) {
            cfg.finetune.hasShape = true;
            cfg.finetune.shape = parse_shape(f["shape"], "finetune.shape");
        }
    }

    // hash of the canonical re-serialization, so formatting does not matter
    cfg.configHash = fnv1a64_hex(doc.dump());
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return parse_run_config(text.str());
}

TriangleMesh make_configured_mesh(const ShapeConfig& shape) {
    if (!shape.meshPath.empty()) return load_mesh(shape.meshPath);
    return generate_shape(shape.kind, shape.params, shape.edgeLength);
}

}  // namespace emscat
