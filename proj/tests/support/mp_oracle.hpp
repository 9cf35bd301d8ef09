#pragma once

// Multiple-precision references for the normal distribution and the pooled
// two-proportion statistic.

#include <mpfr.h>

#include <cstdint>

namespace oracle {

class Mp {
public:
    explicit Mp(double v = 0.0) {
        mpfr_init2(x_, kBits);
        mpfr_set_d(x_, v, MPFR_RNDN);
    }
    Mp(const Mp& o) {
        mpfr_init2(x_, kBits);
        mpfr_set(x_, o.x_, MPFR_RNDN);
    }
    Mp& operator=(const Mp& o) {
        mpfr_set(x_, o.x_, MPFR_RNDN);
        return *this;
    }
    ~Mp() { mpfr_clear(x_); }

    static Mp from_u64(std::uint64_t v) {
        Mp r;
        mpfr_set_uj(r.x_, v, MPFR_RNDN);
        return r;
    }

    mpfr_ptr get() { return x_; }
    mpfr_srcptr get() const { return x_; }
    double to_double() const { return mpfr_get_d(x_, MPFR_RNDN); }

    static constexpr mpfr_prec_t kBits = 256;

private:
    mpfr_t x_;
};

/// Phi(z) = erfc(-z / sqrt(2)) / 2 at 256 bits.
inline double mp_normal_cdf(double z) {
    Mp v(z), root2(2.0);
    mpfr_sqrt(root2.get(), root2.get(), MPFR_RNDN);
    mpfr_div(v.get(), v.get(), root2.get(), MPFR_RNDN);
    mpfr_neg(v.get(), v.get(), MPFR_RNDN);
    mpfr_erfc(v.get(), v.get(), MPFR_RNDN);
    mpfr_div_ui(v.get(), v.get(), 2, MPFR_RNDN);
    return v.to_double();
}

/// 2 (1 - Phi(|z|)) at 256 bits.
inline double mp_two_sided_p(double z) {
    Mp v(z < 0 ? -z : z), root2(2.0);
    mpfr_sqrt(root2.get(), root2.get(), MPFR_RNDN);
    mpfr_div(v.get(), v.get(), root2.get(), MPFR_RNDN);
    mpfr_erfc(v.get(), v.get(), MPFR_RNDN);
    return v.to_double();
}

/// (x1/n1 - x2/n2) / sqrt(p (1 - p) (1/n1 + 1/n2)), p = (x1 + x2) / (n1 + n2).
inline double mp_score_z(std::uint64_t x1, std::uint64_t n1, std::uint64_t x2, std::uint64_t n2) {
    Mp p1 = Mp::from_u64(x1), p2 = Mp::from_u64(x2), pool = Mp::from_u64(x1 + x2), tmp, var;
    mpfr_div_ui(p1.get(), p1.get(), n1, MPFR_RNDN);
    mpfr_div_ui(p2.get(), p2.get(), n2, MPFR_RNDN);
    mpfr_div_ui(pool.get(), pool.get(), n1 + n2, MPFR_RNDN);
    mpfr_ui_sub(tmp.get(), 1, pool.get(), MPFR_RNDN);
    mpfr_mul(var.get(), pool.get(), tmp.get(), MPFR_RNDN);
    Mp inv1(1.0), inv2(1.0);
    mpfr_div_ui(inv1.get(), inv1.get(), n1, MPFR_RNDN);
    mpfr_div_ui(inv2.get(), inv2.get(), n2, MPFR_RNDN);
    mpfr_add(inv1.get(), inv1.get(), inv2.get(), MPFR_RNDN);
    mpfr_mul(var.get(), var.get(), inv1.get(), MPFR_RNDN);
    mpfr_sqrt(var.get(), var.get(), MPFR_RNDN);
    mpfr_sub(p1.get(), p1.get(), p2.get(), MPFR_RNDN);
    mpfr_div(p1.get(), p1.get(), var.get(), MPFR_RNDN);
    return p1.to_double();
}

}  // namespace oracle
