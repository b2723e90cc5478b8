#include "emscat/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

namespace emscat {

namespace {

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

nn::Tensor label_tensor(const SurfaceCurrentField& field) {
    nn::Tensor t = nn::Tensor::matrix(static_cast<std::size_t>(field.size()), 6);
    for (int i = 0; i < field.size(); ++i)
        for (int a = 0; a < 3; ++a) {
            t.at(i, a) = field.perFaceCurrent[i][a].real();
            t.at(i, a + 3) = field.perFaceCurrent[i][a].imag();
        }
    return t;
}

}  // namespace

std::shared_ptr<SystemMatrices> split_system(const ImpedanceSystem& system) {
    auto out = std::make_shared<SystemMatrices>();
    const std::size_t n = static_cast<std::size_t>(system.Z.rows());
    out->Zr = nn::Tensor::matrix(n, n);
    out->Zi = nn::Tensor::matrix(n, n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            out->Zr.at(r, c) = system.Z(r, c).real();
            out->Zi.at(r, c) = system.Z(r, c).imag();
        }
    return out;
}

ScatteringSample make_sample(std::shared_ptr<MeshContext> context,
                             std::shared_ptr<SystemMatrices> system,
                             const ImpedanceSystem& impedance, const IncidentWave& wave,
                             const SurfaceCurrentField& solved) {
    ScatteringSample s;
    s.context = std::move(context);
    s.system = std::move(system);
    s.wave = wave;
    const std::size_t n = static_cast<std::size_t>(impedance.V.size());
    s.Vr = nn::Tensor::matrix(n, 1);
    s.Vi = nn::Tensor::matrix(n, 1);
    for (std::size_t r = 0; r < n; ++r) {
        s.Vr[r] = impedance.V(r).real();
        s.Vi[r] = impedance.V(r).imag();
    }
    s.label = solved;
    s.labelTensor = label_tensor(solved);
    return s;
}

std::vector<ScatteringSample> generate_dataset(std::shared_ptr<const TriangleMesh> mesh,
                                               double frequency, double amplitude,
                                               const std::vector<std::pair<double, double>>& anglesDeg,
                                               int maxLevels) {
    if (anglesDeg.empty()) throw TrainError("dataset: need at least one incidence angle");
    IncidentWave first(frequency, amplitude, anglesDeg[0].first, anglesDeg[0].second);
    auto context = std::make_shared<MeshContext>(
        MeshContext::build(mesh, first.wavelength(), maxLevels));

    std::shared_ptr<SystemMatrices> shared;
    std::vector<ScatteringSample> samples;
    samples.reserve(anglesDeg.size());
    for (const auto& [theta, phi] : anglesDeg) {
        IncidentWave wave(frequency, amplitude, theta, phi);
        ImpedanceSystem sys = assemble_system(*mesh, wave);
        if (!shared) shared = split_system(sys);  // Z depends on mesh and frequency only
        SurfaceCurrentField solved = solve_currents(sys, *mesh);
        samples.push_back(make_sample(context, shared, sys, wave, solved));
    }
    return samples;
}

void split_dataset(const std::vector<ScatteringSample>& all,
                   std::vector<ScatteringSample>& train, std::vector<ScatteringSample>& test) {
    train.clear();
    test.clear();
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (i % 5 == 4)
            test.push_back(all[i]);
        else
            train.push_back(all[i]);
    }
    if (test.empty() && all.size() > 1) {
        test.push_back(train.back());
        train.pop_back();
    }
}

nn::Var physics_residual_loss(const nn::Var& predicted6, const ScatteringSample& sample) {
    using namespace nn;
    const std::size_t k = predicted6->value.rows();
    const std::size_t n = 3 * k;
    if (sample.Vr.rows() != n)
        throw TrainError("physics loss: system size does not match prediction");
    Var jr = reshape(sliceCols(predicted6, 0, 3), {n, 1});
    Var ji = reshape(sliceCols(predicted6, 3, 6), {n, 1});
    Var zr = constant(sample.system->Zr);
    Var zi = constant(sample.system->Zi);
    Var rr = sub(sub(matmul(zr, jr), matmul(zi, ji)), constant(sample.Vr));
    Var ri = sub(add(matmul(zr, ji), matmul(zi, jr)), constant(sample.Vi));
    Var sq = add(sumAll(mul(rr, rr)), sumAll(mul(ri, ri)));
    return scale(sq, 1.0 / static_cast<double>(n));
}

nn::Var mse_loss(const nn::Var& predicted6, const nn::Tensor& label6) {
    using namespace nn;
    if (!predicted6->value.sameShape(label6)) throw TrainError("mse loss: shape mismatch");
    Var diff = sub(predicted6, constant(label6));
    return scale(sumAll(mul(diff, diff)), 1.0 / static_cast<double>(label6.size()));
}

AdamOptimizer::AdamOptimizer(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(nn::ParameterStore& store) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    store.forEach([&](const std::string& name, nn::Node& p) {
        nn::Tensor& g = p.ensureGrad();
        auto mIt = m_.find(name);
        if (mIt == m_.end()) {
            mIt = m_.emplace(name, nn::Tensor(p.value.shape())).first;
            v_.emplace(name, nn::Tensor(p.value.shape()));
        }
        nn::Tensor& m = mIt->second;
        nn::Tensor& v = v_[name];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            double mHat = m[i] / bc1;
            double vHat = v[i] / bc2;
            p.value[i] -= lr_ * mHat / (std::sqrt(vHat) + eps_);
        }
    });
}

TrainResult train_network(Network& net, const std::vector<ScatteringSample>& samples,
                          const TrainOptions& options) {
    if (samples.empty()) throw TrainError("train: empty dataset");
    if (options.epochs < 1) throw TrainError("train: epochs must be >= 1");
    if (options.batchSize < 1) throw TrainError("train: batch size must be >= 1");

    std::vector<ModelInputs> inputs;
    inputs.reserve(samples.size());
    for (const auto& s : samples)
        inputs.push_back(ModelInputs::build(*s.context, s.wave, net.config()));

    AdamOptimizer opt(options.learningRate);
    std::mt19937_64 rng(options.seed);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    std::ofstream history;
    if (!options.lossHistoryPath.empty()) {
        history.open(options.lossHistoryPath);
        if (!history) throw TrainError("train: cannot write " + options.lossHistoryPath);
        history << "epoch,loss\n";
    }

    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epochLoss = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(options.batchSize)) {
            std::size_t stop = std::min(order.size(),
                                        start + static_cast<std::size_t>(options.batchSize));
            net.store().zeroGrad();
            nn::Var batchLoss;
            for (std::size_t b = start; b < stop; ++b) {
                const auto& s = samples[order[b]];
                nn::Var pred = net.forward(inputs[order[b]], true);
                nn::Var loss = options.useLabelLoss ? mse_loss(pred, s.labelTensor)
                                                    : physics_residual_loss(pred, s);
                batchLoss = batchLoss ? nn::add(batchLoss, loss) : loss;
            }
            batchLoss = nn::scale(batchLoss, 1.0 / static_cast<double>(stop - start));
            double lossValue = batchLoss->value[0];
            if (!std::isfinite(lossValue) || lossValue > options.divergenceThreshold) {
                char buf[128];
                std::snprintf(buf, sizeof buf, "training diverged: loss %.6g at epoch %d",
                              lossValue, epoch);
                throw DivergenceError(buf);
            }
            nn::backward(batchLoss);
            opt.step(net.store());
            epochLoss += lossValue * static_cast<double>(stop - start);
        }
        epochLoss /= static_cast<double>(order.size());
        result.epochLoss.push_back(epochLoss);
        if (history) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%d,%.17g\n", epoch, epochLoss);
            history << buf;
        }
        if (options.verbose && (epoch % 10 == 0 || epoch == options.epochs - 1))
            std::fprintf(stderr, "epoch %d loss %.6g\n", epoch, epochLoss);
    }
    result.finalLoss = result.epochLoss.back();
    return result;
}

EvalMetrics evaluate_network(Network& net, const std::vector<ScatteringSample>& samples,
                             bool timeSolver) {
    if (samples.empty()) throw TrainError("evaluate: empty dataset");
    EvalMetrics m;
    m.sampleCount = static_cast<int>(samples.size());
    std::vector<double> predMag, refMag;
    for (const auto& s : samples) {
        ModelInputs in = ModelInputs::build(*s.context, s.wave, net.config());
        double t0 = now_seconds();
        nn::Var pred = net.forward(in, false);
        m.inferenceSeconds += now_seconds() - t0;
        m.meanPhysicsLoss += physics_residual_loss(pred, s)->value[0];
        SurfaceCurrentField field = Network::toCurrents(pred->value);
        for (int f = 0; f < field.size(); ++f) {
            predMag.push_back(field.perFaceCurrent[f].norm());
            refMag.push_back(s.label.perFaceCurrent[f].norm());
        }
        if (timeSolver) {
            double t1 = now_seconds();
            ImpedanceSystem sys = assemble_system(*s.context->mesh, s.wave);
            solve_currents(sys, *s.context->mesh);
            m.solverSeconds += now_seconds() - t1;
        }
    }
    m.meanPhysicsLoss /= static_cast<double>(samples.size());

    double se = 0.0, ae = 0.0, refMean = 0.0;
    for (std::size_t i = 0; i < predMag.size(); ++i) {
        double d = predMag[i] - refMag[i];
        se += d * d;
        ae += std::abs(d);
        refMean += refMag[i];
    }
    const double n = static_cast<double>(predMag.size());
    refMean /= n;
    double ss = 0.0;
    for (double r : refMag) ss += (r - refMean) * (r - refMean);
    m.mse = se / n;
    m.rmse = std::sqrt(m.mse);
    m.mae = ae / n;
    m.r2 = ss > 0 ? 1.0 - se / ss : (se == 0 ? 1.0 : -std::numeric_limits<double>::infinity());
    return m;
}

void write_error_cdf_csv(Network& net, const std::vector<ScatteringSample>& samples,
                         const std::string& path) {
    std::vector<double> errors;
    for (const auto& s : samples) {
        ModelInputs in = ModelInputs::build(*s.context, s.wave, net.config());
        SurfaceCurrentField field = net.predict(in);
        for (int f = 0; f < field.size(); ++f)
            errors.push_back(std::abs(field.perFaceCurrent[f].norm() -
                                      s.label.perFaceCurrent[f].norm()));
    }
    std::sort(errors.begin(), errors.end());
    std::ofstream out(path);
    if (!out) throw TrainError("cannot write " + path);
    out << "abs_error,cdf\n";
    char buf[64];
    for (std::size_t i = 0; i < errors.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", errors[i],
                      static_cast<double>(i + 1) / static_cast<double>(errors.size()));
        out << buf;
    }
}

void write_rcs_overlay_csv(Network& net, const ScatteringSample& sample, const AngleCut& cut,
                           const std::string& path) {
    ModelInputs in = ModelInputs::build(*sample.context, sample.wave, net.config());
    SurfaceCurrentField pred = net.predict(in);
    RCSProfile predRcs = bistatic_rcs(pred, *sample.context->mesh, sample.wave, cut);
    RCSProfile refRcs = bistatic_rcs(sample.label, *sample.context->mesh, sample.wave, cut);
    std::ofstream out(path);
    if (!out) throw TrainError("cannot write " + path);
    out << "theta_deg,phi_deg,label_dbsm,pred_dbsm\n";
    char buf[128];
    for (std::size_t i = 0; i < predRcs.thetaDeg.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", predRcs.thetaDeg[i],
                      predRcs.phiDeg[i], refRcs.sigmaDbsm[i], predRcs.sigmaDbsm[i]);
        out << buf;
    }
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> finetune_split(
    std::size_t sampleCount, double fraction, std::uint64_t seed) {
    if (fraction <= 0.0 || fraction > 1.0)
        throw TrainError("finetune: fraction must lie in (0, 1]");
    std::vector<std::size_t> order(sampleCount);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(sampleCount))));
    if (keep < 2) throw TrainError("finetune: selected subset has fewer than 2 samples");
    std::vector<std::size_t> kept(order.begin(), order.begin() + keep);
    std::vector<std::size_t> rest(order.begin() + keep, order.end());
    return {std::move(kept), std::move(rest)};
}

TrainResult finetune_network(Network& net, const std::vector<ScatteringSample>& samples,
                             double fraction, const TrainOptions& options) {
    auto [kept, rest] = finetune_split(samples.size(), fraction, options.seed);
    std::vector<ScatteringSample> subset;
    for (std::size_t i : kept) subset.push_back(samples[i]);
    return train_network(net, subset, options);
}

std::vector<AblationArm> ablation_suite(const ModelConfig& base,
                                        const std::vector<ScatteringSample>& trainSet,
                                        const std::vector<ScatteringSample>& testSet,
                                        const TrainOptions& options) {
    std::vector<AblationArm> arms(4);
    arms[0].name = "full";
    arms[0].config = base;
    arms[1].name = "no_physics_loss";  // label MSE instead of the residual loss
    arms[1].config = base;
    arms[1].useLabelLoss = true;
    arms[2].name = "no_edge_constraint";
    arms[2].config = base;
    arms[2].config.edgeConstraint = false;
    arms[3].name = "no_skip";
    arms[3].config = base;
    arms[3].config.skipConnections = false;
    for (auto& arm : arms) {
        Network net(arm.config, options.seed);
        TrainOptions opts = options;
        opts.lossHistoryPath.clear();
        opts.useLabelLoss = arm.useLabelLoss;
        arm.finalTrainLoss = train_network(net, trainSet, opts).finalLoss;
        arm.metrics = evaluate_network(net, testSet, false);
    }
    return arms;
}

}  // namespace emscat
