#include "rirpinn/fastmath.hpp"

#include <cassert>
#include <cmath>
#include <cstdint>
#include <cstring>

namespace rirpinn::fastmath {

namespace {

// pi/2 split into three parts (33/33/rest significant bits) for Cody-Waite
// argument reduction; classic fdlibm constants.
constexpr double kInvPio2 = 6.36619772367581382433e-01;
constexpr double kPio2a = 1.57079632673412561417e+00;
constexpr double kPio2b = 6.07710050630396597660e-11;
constexpr double kPio2c = 2.02226624871116645580e-21;

}  // namespace

void sincos(const double* x, double* s, double* c, std::ptrdiff_t n) {
#pragma GCC ivdep
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double xi = x[i];
        double k = std::nearbyint(xi * kInvPio2);
        double r = xi - k * kPio2a;
        r -= k * kPio2b;
        r -= k * kPio2c;
        std::int64_t q = static_cast<std::int64_t>(k);
        double z = r * r;
        double ps = 1.58962301576546568060e-10;
        ps = ps * z - 2.50507477628578072866e-8;
        ps = ps * z + 2.75573136213857245213e-6;
        ps = ps * z - 1.98412698295895385996e-4;
        ps = ps * z + 8.33333333332211858878e-3;
        ps = ps * z - 1.66666666666666307295e-1;
        ps = r + r * z * ps;
        double pc = -1.13585365213876817300e-11;
        pc = pc * z + 2.08757008419747316778e-9;
        pc = pc * z - 2.75573141792967388112e-7;
        pc = pc * z + 2.48015872888517179954e-5;
        pc = pc * z - 1.38888888888730564116e-3;
        pc = pc * z + 4.16666666666665929218e-2;
        pc = 1.0 - 0.5 * z + z * z * pc;
        // Quadrant fixup, branch free: odd q swaps sin/cos, q in {2,3} flips
        // the sine sign, q in {1,2} flips the cosine sign.
        double swap = static_cast<double>(q & 1);
        double ssin = 1.0 - 2.0 * static_cast<double>((q >> 1) & 1);
        double scos = 1.0 - 2.0 * static_cast<double>(((q + 1) >> 1) & 1);
        double sv = ps + (pc - ps) * swap;
        double cv = pc + (ps - pc) * swap;
        s[i] = sv * ssin;
        c[i] = cv * scos;
    }
}

void sin_only(const double* x, double* s, std::ptrdiff_t n) {
#pragma GCC ivdep
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double xi = x[i];
        double k = std::nearbyint(xi * kInvPio2);
        double r = xi - k * kPio2a;
        r -= k * kPio2b;
        r -= k * kPio2c;
        std::int64_t q = static_cast<std::int64_t>(k);
        double z = r * r;
        double ps = 1.58962301576546568060e-10;
        ps = ps * z - 2.50507477628578072866e-8;
        ps = ps * z + 2.75573136213857245213e-6;
        ps = ps * z - 1.98412698295895385996e-4;
        ps = ps * z + 8.33333333332211858878e-3;
        ps = ps * z - 1.66666666666666307295e-1;
        ps = r + r * z * ps;
        double pc = -1.13585365213876817300e-11;
        pc = pc * z + 2.08757008419747316778e-9;
        pc = pc * z - 2.75573141792967388112e-7;
        pc = pc * z + 2.48015872888517179954e-5;
        pc = pc * z - 1.38888888888730564116e-3;
        pc = pc * z + 4.16666666666665929218e-2;
        pc = 1.0 - 0.5 * z + z * z * pc;
        double swap = static_cast<double>(q & 1);
        double ssin = 1.0 - 2.0 * static_cast<double>((q >> 1) & 1);
        s[i] = (ps + (pc - ps) * swap) * ssin;
    }
}

void tanh(const double* x, double* y, std::ptrdiff_t n) {
    // tanh(x) = (e - 1)/(e + 1) with e = exp(2x); exp is the cephes rational
    // with a Cody-Waite ln2 reduction and an exponent-bits scale. Saturates
    // for |x| > 19 where tanh is 1 to double precision.
#pragma GCC ivdep
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double xi = x[i];
        double xc = xi > 19.0 ? 19.0 : (xi < -19.0 ? -19.0 : xi);
        double u = 2.0 * xc;
        double k = std::nearbyint(u * 1.4426950408889634074);
        double r = u - k * 6.93145751953125e-1;
        r -= k * 1.42860682030941723212e-6;
        double z = r * r;
        double p = 1.26177193074810590878e-4;
        p = p * z + 3.02994407707441961300e-2;
        p = p * z + 9.99999999999999999910e-1;
        p = r * p;
        double q = 3.00198505138664455042e-6;
        q = q * z + 2.52448340349684104192e-3;
        q = q * z + 2.27265548208155028766e-1;
        q = q * z + 2.00000000000000000005e0;
        double e = 1.0 + 2.0 * p / (q - p);
        std::uint64_t bits;
        std::memcpy(&bits, &e, sizeof bits);
        bits += static_cast<std::uint64_t>(static_cast<std::int64_t>(k)) << 52;
        std::memcpy(&e, &bits, sizeof e);
        y[i] = (e - 1.0) / (e + 1.0);
    }
}

void sincos_mat(const Eigen::Ref<const Eigen::MatrixXd>& x,
                Eigen::Ref<Eigen::MatrixXd> s, Eigen::Ref<Eigen::MatrixXd> c) {
    assert(s.rows() == x.rows() && s.cols() == x.cols());
    assert(c.rows() == x.rows() && c.cols() == x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        sincos(x.data() + j * x.outerStride(), s.data() + j * s.outerStride(),
               c.data() + j * c.outerStride(), x.rows());
}

void sin_mat(const Eigen::Ref<const Eigen::MatrixXd>& x,
             Eigen::Ref<Eigen::MatrixXd> s) {
    assert(s.rows() == x.rows() && s.cols() == x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        sin_only(x.data() + j * x.outerStride(), s.data() + j * s.outerStride(),
                 x.rows());
}

void tanh_mat(const Eigen::Ref<const Eigen::MatrixXd>& x,
              Eigen::Ref<Eigen::MatrixXd> y) {
    assert(y.rows() == x.rows() && y.cols() == x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        tanh(x.data() + j * x.outerStride(), y.data() + j * y.outerStride(),
             x.rows());
}

}  // namespace rirpinn::fastmath
