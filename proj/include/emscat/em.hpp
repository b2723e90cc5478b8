#pragma once

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emscat/geometry.hpp"

namespace emscat {

using Complex = std::complex<double>;
using CVec3 = Eigen::Vector3cd;
using CMat3 = Eigen::Matrix3cd;

namespace constants {
inline constexpr double kSpeedOfLight = 299792458.0;          // m/s
inline constexpr double kFreeSpaceImpedance = 376.730313668;  // ohm
}  // namespace constants

struct EmError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Theta-polarized plane wave arriving from direction (thetaInc, phiInc):
/// the propagation unit vector points from that direction toward the origin.
struct IncidentWave {
    double frequency = 1e9;      // Hz
    double amplitude = 1.0;      // V/m
    double thetaIncDeg = 0.0;    // [0, 180]
    double phiIncDeg = 0.0;      // [0, 360)

    IncidentWave() = default;
    IncidentWave(double f, double a, double thetaDeg, double phiDeg);

    double wavenumber() const { return 2.0 * M_PI * frequency / constants::kSpeedOfLight; }
    double wavelength() const { return constants::kSpeedOfLight / frequency; }
    Vec3 propagation() const;   // unit k-hat
    Vec3 polarization() const;  // unit theta-hat at the incidence direction

    void validate() const;
};

struct SurfaceCurrentField {
    std::vector<CVec3> perFaceCurrent;  // A/m, indexed like mesh faces

    int size() const { return static_cast<int>(perFaceCurrent.size()); }
    static SurfaceCurrentField zero(int faces);
};

struct ImpedanceSystem {
    Eigen::MatrixXcd Z;  // side 3K
    Eigen::VectorXcd V;  // length 3K
    static constexpr int kBlockSize = 3;

    int faceCount() const { return static_cast<int>(V.size()) / kBlockSize; }
};

struct RCSProfile {
    std::vector<double> thetaDeg;
    std::vector<double> phiDeg;
    std::vector<double> sigmaDbsm;
    std::string cutDescriptor;
};

/// Observation sweep along one angular cut.
struct AngleCut {
    double thetaStartDeg = 0.0;
    double thetaStopDeg = 180.0;
    int samples = 181;
    double phiDeg = 0.0;
};

inline constexpr double kRcsFloorDbsm = -200.0;

CVec3 incident_field(const IncidentWave& wave, const Vec3& p);
CVec3 incident_magnetic_field(const IncidentWave& wave, const Vec3& p);

Complex green_scalar(const Vec3& p, const Vec3& q, double k);

/// Bare dyadic kernel (I + grad grad / k^2) applied to the scalar kernel,
/// evaluated analytically. The EFIE prefactor is NOT included here; see
/// efie_kernel_scale.
CMat3 green_dyadic(const Vec3& p, const Vec3& q, double k);

/// Single named constant folding the EFIE prefactor (j k eta0) into the
/// kernel, so the assembled system reads sum(scale*G*J*A) = E_inc with
/// physically scaled currents. Labels and the physics loss share this kernel.
Complex efie_kernel_scale(double k);

/// Folded kernel used for assembly: efie_kernel_scale(k) * green_dyadic.
CMat3 efie_kernel(const Vec3& p, const Vec3& q, double k);

ImpedanceSystem assemble_system(const TriangleMesh& mesh, const IncidentWave& wave);

struct SolveReport {
    double relativeResidual = 0.0;
};

SurfaceCurrentField solve_currents(const ImpedanceSystem& system, const TriangleMesh& mesh,
                                   SolveReport* report = nullptr);

SurfaceCurrentField physical_optics_currents(const TriangleMesh& mesh, const IncidentWave& wave);

CVec3 radiated_field(const SurfaceCurrentField& currents, const TriangleMesh& mesh,
                     const IncidentWave& wave, const Vec3& rhat);

RCSProfile bistatic_rcs(const SurfaceCurrentField& currents, const TriangleMesh& mesh,
                        const IncidentWave& wave, const AngleCut& cut);

/// Classical Mie-series bistatic RCS of a PEC sphere centered at the origin,
/// for the same incidence geometry as IncidentWave. Convergence is verified
/// by comparing the truncated series against five extra terms.
RCSProfile mie_reference(double radius, const IncidentWave& wave, const AngleCut& cut);

Vec3 direction_from_angles(double thetaDeg, double phiDeg);

void write_currents_csv(const SurfaceCurrentField& currents, const std::string& path,
                        const std::string& configHash = "");
SurfaceCurrentField read_currents_csv(const std::string& path);
void write_rcs_csv(const RCSProfile& profile, const std::string& path,
                   const std::string& configHash = "");

}  // namespace emscat
