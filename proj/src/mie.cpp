#include <cmath>
#include <complex>
#include <sstream>
#include <vector>

#include "emscat/em.hpp"

namespace emscat {

using namespace std::complex_literals;

namespace {

// Scattering amplitudes S1 (perpendicular) and S2 (parallel) of a PEC sphere
// for scattering angle cos(theta) = mu, truncated at nMax terms.
std::pair<Complex, Complex> mie_amplitudes(double x, double mu, int nMax) {
    std::vector<Complex> a(nMax + 1), b(nMax + 1);
    for (int n = 1; n <= nMax; ++n) {
        double jn = std::sph_bessel(n, x);
        double jnm1 = std::sph_bessel(n - 1, x);
        double yn = std::sph_neumann(n, x);
        double ynm1 = std::sph_neumann(n - 1, x);
        Complex hn = jn + 1i * yn;
        Complex hnm1 = jnm1 + 1i * ynm1;
        double psi = x * jn;
        double psiPrime = x * jnm1 - n * jn;
        Complex xi = x * hn;
        Complex xiPrime = x * hnm1 - static_cast<double>(n) * hn;
        a[n] = psiPrime / xiPrime;
        b[n] = psi / xi;
    }
    Complex s1 = 0, s2 = 0;
    double piPrev = 0.0;  // pi_0
    double piCur = 1.0;   // pi_1
    for (int n = 1; n <= nMax; ++n) {
        double tau = n * mu * piCur - (n + 1) * piPrev;
        double factor = (2.0 * n + 1.0) / (n * (n + 1.0));
        s1 += factor * (a[n] * piCur + b[n] * tau);
        s2 += factor * (a[n] * tau + b[n] * piCur);
        double piNext = ((2.0 * n + 1.0) * mu * piCur - (n + 1.0) * piPrev) / n;
        piPrev = piCur;
        piCur = piNext;
    }
    return {s1, s2};
}

double mie_sigma(double k, double x, const Vec3& khat, const Vec3& pol, const Vec3& rhat,
                 int nMax) {
    double mu = khat.dot(rhat);
    mu = std::clamp(mu, -1.0, 1.0);

    // decompose the incident polarization into components parallel and
    // perpendicular to the scattering plane
    double ePar2, ePerp2;
    Vec3 perp = khat.cross(rhat);
    if (perp.norm() < 1e-12) {
        // forward/backward direction: plane undefined, |S1| == |S2|
        ePar2 = 1.0;
        ePerp2 = 0.0;
    } else {
        perp.normalize();
        double ePerp = pol.dot(perp);
        double ePar = std::sqrt(std::max(0.0, 1.0 - ePerp * ePerp));
        ePar2 = ePar * ePar;
        ePerp2 = ePerp * ePerp;
    }
    auto [s1, s2] = mie_amplitudes(x, mu, nMax);
    double dcs = (std::norm(s2) * ePar2 + std::norm(s1) * ePerp2) / (k * k);
    return 4.0 * M_PI * dcs;
}

}  // namespace

RCSProfile mie_reference(double radius, const IncidentWave& wave, const AngleCut& cut) {
    wave.validate();
    if (radius <= 0) throw EmError("mie_reference: radius must be positive");
    double k = wave.wavenumber();
    double x = k * radius;
    if (x <= 0.1 || x >= 50.0)
        throw EmError("mie_reference: ka outside supported range (0.1, 50)");
    int nMax = static_cast<int>(std::ceil(x + 4.0 * std::cbrt(x) + 2.0));

    Vec3 khat = wave.propagation();
    Vec3 pol = wave.polarization();

    RCSProfile prof;
    std::ostringstream desc;
    desc << "phi=" << cut.phiDeg << " deg cut (Mie, PEC sphere a=" << radius << " m)";
    prof.cutDescriptor = desc.str();
    for (int i = 0; i < cut.samples; ++i) {
        double theta = cut.samples == 1
                           ? cut.thetaStartDeg
                           : cut.thetaStartDeg +
                                 (cut.thetaStopDeg - cut.thetaStartDeg) * i / (cut.samples - 1);
        Vec3 rhat = direction_from_angles(theta, cut.phiDeg);
        double sigma = mie_sigma(k, x, khat, pol, rhat, nMax);
        double sigmaCheck = mie_sigma(k, x, khat, pol, rhat, nMax + 5);
        double db = sigma > 0 ? 10.0 * std::log10(sigma) : kRcsFloorDbsm;
        double dbCheck = sigmaCheck > 0 ? 10.0 * std::log10(sigmaCheck) : kRcsFloorDbsm;
        if (std::abs(db - dbCheck) >= 0.01)
            throw EmError("mie_reference: series not converged at theta=" + std::to_string(theta));
        prof.thetaDeg.push_back(theta);
        prof.phiDeg.push_back(cut.phiDeg);
        prof.sigmaDbsm.push_back(std::max(db, kRcsFloorDbsm));
    }
    return prof;
}

}  // namespace emscat
