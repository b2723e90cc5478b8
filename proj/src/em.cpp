#include "emscat/em.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace emscat {

using namespace std::complex_literals;

IncidentWave::IncidentWave(double f, double a, double thetaDeg, double phiDeg)
    : frequency(f), amplitude(a), thetaIncDeg(thetaDeg), phiIncDeg(phiDeg) {
    validate();
}

void IncidentWave::validate() const {
    if (frequency <= 0) throw EmError("wave frequency must be positive");
    if (amplitude <= 0) throw EmError("wave amplitude must be positive");
    if (thetaIncDeg < 0 || thetaIncDeg > 180) throw EmError("theta_inc outside [0, 180] deg");
    if (phiIncDeg < 0 || phiIncDeg >= 360) throw EmError("phi_inc outside [0, 360) deg");
}

Vec3 direction_from_angles(double thetaDeg, double phiDeg) {
    double th = thetaDeg * M_PI / 180.0;
    double ph = phiDeg * M_PI / 180.0;
    return Vec3(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th));
}

Vec3 IncidentWave::propagation() const {
    return -direction_from_angles(thetaIncDeg, phiIncDeg);
}

Vec3 IncidentWave::polarization() const {
    double th = thetaIncDeg * M_PI / 180.0;
    double ph = phiIncDeg * M_PI / 180.0;
    return Vec3(std::cos(th) * std::cos(ph), std::cos(th) * std::sin(ph), -std::sin(th));
}

SurfaceCurrentField SurfaceCurrentField::zero(int faces) {
    SurfaceCurrentField f;
    f.perFaceCurrent.assign(faces, CVec3::Zero());
    return f;
}

CVec3 incident_field(const IncidentWave& wave, const Vec3& p) {
    double k = wave.wavenumber();
    Complex phase = std::exp(-1i * k * wave.propagation().dot(p));
    return wave.amplitude * phase * wave.polarization().cast<Complex>();
}

CVec3 incident_magnetic_field(const IncidentWave& wave, const Vec3& p) {
    CVec3 e = incident_field(wave, p);
    Vec3 khat = wave.propagation();
    return khat.cast<Complex>().cross(e) / constants::kFreeSpaceImpedance;
}

Complex green_scalar(const Vec3& p, const Vec3& q, double k) {
    double r = (p - q).norm();
    if (r == 0.0) throw EmError("green_scalar: coincident points");
    return std::exp(-1i * k * r) / (4.0 * M_PI * r);
}

CMat3 green_dyadic(const Vec3& p, const Vec3& q, double k) {
    Vec3 d = p - q;
    double r = d.norm();
    if (r == 0.0) throw EmError("green_dyadic: coincident points");
    Vec3 rhat = d / r;
    Complex g = std::exp(-1i * k * r) / (4.0 * M_PI * r);
    double kr = k * r;
    Complex a = 1.0 - 1i / kr - 1.0 / (kr * kr);
    Complex b = 1.0 - 3i / kr - 3.0 / (kr * kr);
    CMat3 out = a * CMat3::Identity() - b * (rhat * rhat.transpose()).cast<Complex>();
    return g * out;
}

Complex efie_kernel_scale(double k) {
    return 1i * k * constants::kFreeSpaceImpedance;
}

CMat3 efie_kernel(const Vec3& p, const Vec3& q, double k) {
    return efie_kernel_scale(k) * green_dyadic(p, q, k);
}

ImpedanceSystem assemble_system(const TriangleMesh& mesh, const IncidentWave& wave) {
    wave.validate();
    if (mesh.faceCount() < 1) throw EmError("assemble_system: empty mesh");
    double lambda = wave.wavelength();
    if (mesh.meanEdgeLength() > lambda / 5.0)
        std::cerr << "warning: mean edge length " << mesh.meanEdgeLength()
                  << " m exceeds lambda/5 = " << lambda / 5.0 << " m\n";

    const int K = mesh.faceCount();
    const double k = wave.wavenumber();

    ImpedanceSystem sys;
    sys.Z.resize(3 * K, 3 * K);
    sys.V.resize(3 * K);

    for (int m = 0; m < K; ++m) {
        const Vec3& pm = mesh.centroid(m);
        // the boundary condition constrains only the tangential field at the
        // observation point, so every row is tested through this projector;
        // the normal direction is closed with an identity term in the self
        // block, which pins the (physically zero) normal current to zero and
        // keeps the system square and nonsingular
        Vec3 nm = mesh.normal(m);
        Eigen::Matrix3d projM = Eigen::Matrix3d::Identity() - nm * nm.transpose();
        CMat3 projMc = projM.cast<Complex>();
        for (int kk = 0; kk < K; ++kk) {
            CMat3 block;
            if (m == kk) {
                // equivalent-disc self term: exact field at the center of a
                // uniformly excited disc of the same area, from the retarded
                // vector potential plus the rim line-charge contribution,
                //   Z_self = eta [ (1 - e^{-jkR})/2 - j e^{-jkR}(1 + jkR)/(4kR) ]
                // whose capacitive rim part dominates at desk-scale kR
                double aK = mesh.area(kk);
                double rEq = std::sqrt(aK / M_PI);
                Complex ph = std::exp(-1i * k * rEq);
                Complex coeff = constants::kFreeSpaceImpedance *
                                (0.5 * (1.0 - ph) -
                                 1i * ph * (1.0 + 1i * k * rEq) / (4.0 * k * rEq));
                block = coeff * CMat3::Identity();
            } else {
                block = projMc * efie_kernel(pm, mesh.centroid(kk), k) * mesh.area(kk);
            }
            sys.Z.block<3, 3>(3 * m, 3 * kk) = block;
        }
        sys.V.segment<3>(3 * m) = projMc * incident_field(wave, pm);
    }
    return sys;
}

SurfaceCurrentField solve_currents(const ImpedanceSystem& system, const TriangleMesh& mesh,
                                   SolveReport* report) {
    const int K = system.faceCount();
    if (K != mesh.faceCount()) throw EmError("solve_currents: system/mesh size mismatch");

    double vnorm = system.V.norm();
    if (vnorm == 0.0) {
        if (report) report->relativeResidual = 0.0;
        return SurfaceCurrentField::zero(K);
    }

    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(system.Z);
    Eigen::VectorXcd sol = lu.solve(system.V);
    // one step of iterative refinement
    Eigen::VectorXcd resid = system.V - system.Z * sol;
    sol += lu.solve(resid);
    resid = system.V - system.Z * sol;
    double rel = resid.norm() / vnorm;
    if (!sol.allFinite()) throw EmError("solve_currents: singular system");
    if (rel > 1e-8)
        throw EmError("solve_currents: did not converge, relative residual " + std::to_string(rel));
    if (report) report->relativeResidual = rel;

    SurfaceCurrentField field;
    field.perFaceCurrent.resize(K);
    for (int f = 0; f < K; ++f) {
        CVec3 j = sol.segment<3>(3 * f);
        Vec3 n = mesh.normal(f);
        CVec3 nc = n.cast<Complex>();
        field.perFaceCurrent[f] = j - nc * (nc.dot(j));
    }
    return field;
}

SurfaceCurrentField physical_optics_currents(const TriangleMesh& mesh, const IncidentWave& wave) {
    wave.validate();
    Vec3 khat = wave.propagation();
    SurfaceCurrentField field = SurfaceCurrentField::zero(mesh.faceCount());
    for (int f = 0; f < mesh.faceCount(); ++f) {
        Vec3 n = mesh.normal(f);
        if (n.dot(khat) < 0) {  // lit face
            CVec3 h = incident_magnetic_field(wave, mesh.centroid(f));
            field.perFaceCurrent[f] = 2.0 * n.cast<Complex>().cross(h);
        }
    }
    return field;
}

CVec3 radiated_field(const SurfaceCurrentField& currents, const TriangleMesh& mesh,
                     const IncidentWave& wave, const Vec3& rhat) {
    const double k = wave.wavenumber();
    CVec3 sum = CVec3::Zero();
    for (int f = 0; f < mesh.faceCount(); ++f) {
        Complex phase = std::exp(1i * k * rhat.dot(mesh.centroid(f)));
        sum += currents.perFaceCurrent[f] * (mesh.area(f) * phase);
    }
    Complex prefactor = -1i * k * constants::kFreeSpaceImpedance / (4.0 * M_PI);
    CVec3 transverse = sum - rhat.cast<Complex>() * (rhat.cast<Complex>().dot(sum));
    return prefactor * transverse;
}

RCSProfile bistatic_rcs(const SurfaceCurrentField& currents, const TriangleMesh& mesh,
                        const IncidentWave& wave, const AngleCut& cut) {
    if (cut.samples < 1) throw EmError("bistatic_rcs: empty sweep");
    RCSProfile prof;
    std::ostringstream desc;
    desc << "phi=" << cut.phiDeg << " deg cut";
    prof.cutDescriptor = desc.str();
    double a2 = wave.amplitude * wave.amplitude;
    for (int i = 0; i < cut.samples; ++i) {
        double theta = cut.samples == 1
                           ? cut.thetaStartDeg
                           : cut.thetaStartDeg +
                                 (cut.thetaStopDeg - cut.thetaStartDeg) * i / (cut.samples - 1);
        Vec3 rhat = direction_from_angles(theta, cut.phiDeg);
        CVec3 F = radiated_field(currents, mesh, wave, rhat);
        double sigma = 4.0 * M_PI * F.squaredNorm() / a2;
        double db = sigma > 0 ? 10.0 * std::log10(sigma) : kRcsFloorDbsm;
        prof.thetaDeg.push_back(theta);
        prof.phiDeg.push_back(cut.phiDeg);
        prof.sigmaDbsm.push_back(std::max(db, kRcsFloorDbsm));
    }
    return prof;
}

// ---------------------------------------------------------------------------
// CSV

void write_currents_csv(const SurfaceCurrentField& currents, const std::string& path,
                        const std::string& configHash) {
    std::ofstream out(path);
    if (!out) throw EmError("cannot write currents csv: " + path);
    if (!configHash.empty()) out << "# config_hash=" << configHash << '\n';
    out << "faceIndex,ReJx,ImJx,ReJy,ImJy,ReJz,ImJz\n";
    char buf[256];
    for (int f = 0; f < currents.size(); ++f) {
        const CVec3& j = currents.perFaceCurrent[f];
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", f,
                      j.x().real(), j.x().imag(), j.y().real(), j.y().imag(), j.z().real(),
                      j.z().imag());
        out << buf;
    }
    if (!out) throw EmError("write failed: " + path);
}

SurfaceCurrentField read_currents_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw EmError("cannot read currents csv: " + path);
    SurfaceCurrentField field;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("faceIndex", 0) == 0) continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<double> cols;
        while (std::getline(ls, cell, ',')) cols.push_back(std::stod(cell));
        if (cols.size() != 7) throw EmError("malformed currents csv line: " + line);
        field.perFaceCurrent.emplace_back(Complex(cols[1], cols[2]), Complex(cols[3], cols[4]),
                                          Complex(cols[5], cols[6]));
    }
    return field;
}

void write_rcs_csv(const RCSProfile& profile, const std::string& path,
                   const std::string& configHash) {
    std::ofstream out(path);
    if (!out) throw EmError("cannot write rcs csv: " + path);
    if (!configHash.empty()) out << "# config_hash=" << configHash << '\n';
    out << "theta_deg,phi_deg,sigma_dbsm\n";
    char buf[128];
    for (std::size_t i = 0; i < profile.sigmaDbsm.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", profile.thetaDeg[i],
                      profile.phiDeg[i], profile.sigmaDbsm[i]);
        out << buf;
    }
    if (!out) throw EmError("write failed: " + path);
}

}  // namespace emscat
