#pragma once

// Reference CNN computations for tests: naive long-double loops, written
// without reusing any library kernel.

#include <quadmath.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include "churnlens/cnn/model.hpp"

namespace oracle {

using LD = long double;
using Q = __float128;

struct Trace {
    std::vector<LD> c1;            // conv1 pre-activation (C1, H1, W1)
    std::vector<LD> p1;            // pooled conv1 after ReLU (C1, H1/2, W1/2)
    std::vector<std::size_t> a1;   // flat index into c1 of each p1 winner
    std::vector<LD> c2;            // conv2 pre-activation
    std::vector<LD> p2;
    std::vector<std::size_t> a2;
    std::vector<LD> logits;
};

struct Dims {
    std::size_t C0, H0, W0, C1, K1, H1, W1, Q1, R1, C2, K2, H2, W2, Q2, R2, P, F, K;
    explicit Dims(const churnlens::cnn::Architecture& a)
        : C0(a.in_channels), H0(a.in_height), W0(a.in_width), C1(a.conv1_channels), K1(a.conv1_kernel),
          H1(H0 - K1 + 1), W1(W0 - K1 + 1), Q1(H1 / a.pool_window), R1(W1 / a.pool_window), C2(a.conv2_channels),
          K2(a.conv2_kernel), H2(Q1 - K2 + 1), W2(R1 - K2 + 1), Q2(H2 / a.pool_window), R2(W2 / a.pool_window),
          P(a.pool_window), F(C2 * Q2 * R2), K(a.classes) {}
};

inline LD relu(LD v) { return v > 0 ? v : 0; }

// Max-pool over ReLU'd values of one channel plane; ties keep the first.
inline void pool_plane(const std::vector<LD>& pre, std::size_t c, std::size_t H, std::size_t W, std::size_t P,
                       std::vector<LD>& out, std::vector<std::size_t>& arg) {
    const std::size_t QH = H / P, QW = W / P;
    for (std::size_t y = 0; y < QH; ++y) {
        for (std::size_t x = 0; x < QW; ++x) {
            std::size_t best = (c * H + y * P) * W + x * P;
            for (std::size_t dy = 0; dy < P; ++dy) {
                for (std::size_t dx = 0; dx < P; ++dx) {
                    const std::size_t i = (c * H + y * P + dy) * W + x * P + dx;
                    if (relu(pre[i]) > relu(pre[best])) best = i;
                }
            }
            out[(c * QH + y) * QW + x] = relu(pre[best]);
            arg[(c * QH + y) * QW + x] = best;
        }
    }
}

inline Trace naive_forward(const churnlens::cnn::CnnModel& m, std::span<const double> in) {
    const Dims d(m.architecture());
    const auto w1 = m.conv1_weights(), b1 = m.conv1_bias(), w2 = m.conv2_weights(), b2 = m.conv2_bias();
    const auto fw = m.fc_weights(), fb = m.fc_bias();
    Trace t;
    t.c1.assign(d.C1 * d.H1 * d.W1, 0);
    for (std::size_t o = 0; o < d.C1; ++o)
        for (std::size_t y = 0; y < d.H1; ++y)
            for (std::size_t x = 0; x < d.W1; ++x) {
                LD s = b1[o];
                for (std::size_t c = 0; c < d.C0; ++c)
                    for (std::size_t ky = 0; ky < d.K1; ++ky)
                        for (std::size_t kx = 0; kx < d.K1; ++kx)
                            s += LD(w1[((o * d.C0 + c) * d.K1 + ky) * d.K1 + kx]) *
                                 LD(in[(c * d.H0 + y + ky) * d.W0 + x + kx]);
                t.c1[(o * d.H1 + y) * d.W1 + x] = s;
            }
    t.p1.assign(d.C1 * d.Q1 * d.R1, 0);
    t.a1.assign(t.p1.size(), 0);
    for (std::size_t c = 0; c < d.C1; ++c) pool_plane(t.c1, c, d.H1, d.W1, d.P, t.p1, t.a1);

    t.c2.assign(d.C2 * d.H2 * d.W2, 0);
    for (std::size_t o = 0; o < d.C2; ++o)
        for (std::size_t y = 0; y < d.H2; ++y)
            for (std::size_t x = 0; x < d.W2; ++x) {
                LD s = b2[o];
                for (std::size_t c = 0; c < d.C1; ++c)
                    for (std::size_t ky = 0; ky < d.K2; ++ky)
                        for (std::size_t kx = 0; kx < d.K2; ++kx)
                            s += LD(w2[((o * d.C1 + c) * d.K2 + ky) * d.K2 + kx]) *
                                 t.p1[(c * d.Q1 + y + ky) * d.R1 + x + kx];
                t.c2[(o * d.H2 + y) * d.W2 + x] = s;
            }
    t.p2.assign(d.F, 0);
    t.a2.assign(d.F, 0);
    for (std::size_t c = 0; c < d.C2; ++c) pool_plane(t.c2, c, d.H2, d.W2, d.P, t.p2, t.a2);

    t.logits.assign(d.K, 0);
    for (std::size_t k = 0; k < d.K; ++k) {
        LD s = fb[k];
        for (std::size_t j = 0; j < d.F; ++j) s += LD(fw[k * d.F + j]) * t.p2[j];
        t.logits[k] = s;
    }
    return t;
}

/// Softmax cross-entropy in long double.
inline LD cross_entropy(const std::vector<LD>& z, int label) {
    LD m = *std::max_element(z.begin(), z.end());
    LD s = 0;
    for (const LD v : z) s += std::exp(v - m);
    return m + std::log(s) - z[static_cast<std::size_t>(label)];
}

inline Q cross_entropy_q(const std::vector<LD>& z, const std::vector<LD>& dir, Q step, int label) {
    std::vector<Q> v(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) v[k] = Q(z[k]) + step * Q(dir[k]);
    Q m = *std::max_element(v.begin(), v.end());
    Q s = 0;
    for (const Q x : v) s += expq(x - m);
    return m + logq(s) - v[static_cast<std::size_t>(label)];
}

struct FdResult {
    std::vector<double> numeric;      // central-difference gradient of the mean loss
    std::vector<bool> crosses_kink;   // the +-eps step changes a ReLU sign or a pool winner
    std::size_t kink_params = 0;
};

/// Central finite differences of the mean cross-entropy over a batch.
///
/// Perturbed losses are evaluated incrementally. With the ReLU signs and pool
/// winners of the unperturbed pass held fixed, the logits are affine in any
/// single parameter, so logits(theta +- eps e_i) = z +- eps * dz_i exactly;
/// dz_i is propagated through naive long-double loops and the loss at the
/// two perturbed points is evaluated in quad precision. Parameters whose
/// step would flip a ReLU sign or change a pool winner are flagged.
class FrozenPatternFd {
public:
    FrozenPatternFd(const churnlens::cnn::CnnModel& m, const std::vector<std::span<const double>>& inputs,
                    const std::vector<int>& labels, double eps)
        : m_(m), d_(m.architecture()), inputs_(inputs), labels_(labels), eps_(eps) {
        for (const auto& in : inputs) traces_.push_back(naive_forward(m, in));
    }

    const std::vector<Trace>& traces() const { return traces_; }

    FdResult run() {
        const auto& l = m_.layout();
        FdResult r;
        r.numeric.assign(l.total, 0.0);
        r.crosses_kink.assign(l.total, false);
        std::vector<std::vector<LD>> dz(inputs_.size(), std::vector<LD>(d_.K));
        std::deque<bool> kink(inputs_.size());

        const auto finish = [&](std::size_t index) {
            Q sum = 0;
            bool any_kink = false;
            for (std::size_t s = 0; s < inputs_.size(); ++s) {
                const Q plus = cross_entropy_q(traces_[s].logits, dz[s], Q(eps_), labels_[s]);
                const Q minus = cross_entropy_q(traces_[s].logits, dz[s], -Q(eps_), labels_[s]);
                sum += (plus - minus) / (2 * Q(eps_));
                any_kink = any_kink || kink[s];
            }
            r.numeric[index] = static_cast<double>(sum / Q(inputs_.size()));
            r.crosses_kink[index] = any_kink;
            if (any_kink) ++r.kink_params;
        };

        // conv1: weight (o, c, ky, kx) or bias o shifts conv1 channel o.
        std::vector<LD> delta1(d_.H1 * d_.W1);
        for (std::size_t o = 0; o < d_.C1; ++o) {
            for (std::size_t widx = 0; widx <= d_.C0 * d_.K1 * d_.K1; ++widx) {
                const bool bias = widx == d_.C0 * d_.K1 * d_.K1;
                const std::size_t c = widx / (d_.K1 * d_.K1), ky = (widx / d_.K1) % d_.K1, kx = widx % d_.K1;
                for (std::size_t s = 0; s < inputs_.size(); ++s) {
                    for (std::size_t y = 0; y < d_.H1; ++y)
                        for (std::size_t x = 0; x < d_.W1; ++x)
                            delta1[y * d_.W1 + x] = bias ? 1 : LD(inputs_[s][(c * d_.H0 + y + ky) * d_.W0 + x + kx]);
                    kink[s] = false;
                    propagate_conv1(s, o, delta1, dz[s], kink[s]);
                }
                finish(bias ? l.conv1_b.offset + o : l.conv1_w.offset + o * d_.C0 * d_.K1 * d_.K1 + widx);
            }
        }

        // conv2: weight (o, c, ky, kx) or bias o shifts conv2 channel o.
        std::vector<LD> delta2(d_.H2 * d_.W2);
        for (std::size_t o = 0; o < d_.C2; ++o) {
            for (std::size_t widx = 0; widx <= d_.C1 * d_.K2 * d_.K2; ++widx) {
                const bool bias = widx == d_.C1 * d_.K2 * d_.K2;
                const std::size_t c = widx / (d_.K2 * d_.K2), ky = (widx / d_.K2) % d_.K2, kx = widx % d_.K2;
                for (std::size_t s = 0; s < inputs_.size(); ++s) {
                    const Trace& t = traces_[s];
                    for (std::size_t y = 0; y < d_.H2; ++y)
                        for (std::size_t x = 0; x < d_.W2; ++x)
                            delta2[y * d_.W2 + x] = bias ? 1 : t.p1[(c * d_.Q1 + y + ky) * d_.R1 + x + kx];
                    kink[s] = false;
                    std::fill(dz[s].begin(), dz[s].end(), 0);
                    propagate_conv2_channel(s, o, delta2, dz[s], kink[s]);
                }
                finish(bias ? l.conv2_b.offset + o : l.conv2_w.offset + o * d_.C1 * d_.K2 * d_.K2 + widx);
            }
        }

        // Dense layer: weight (k, j) moves logit k by p2[j]; bias k by 1.
        for (std::size_t k = 0; k < d_.K; ++k) {
            for (std::size_t j = 0; j <= d_.F; ++j) {
                for (std::size_t s = 0; s < inputs_.size(); ++s) {
                    std::fill(dz[s].begin(), dz[s].end(), 0);
                    dz[s][k] = j == d_.F ? 1 : traces_[s].p2[j];
                    kink[s] = false;
                }
                finish(j == d_.F ? l.fc_b.offset + k : l.fc_w.offset + k * d_.F + j);
            }
        }
        return r;
    }

private:
    // Does moving `pre` by +-step change its ReLU sign?
    bool relu_flips(LD pre, LD delta) const {
        const LD step = LD(eps_) * delta;
        return ((pre > 0) != (pre + step > 0)) || ((pre > 0) != (pre - step > 0));
    }

    // Does a pool window over a shifted plane pick a different winner?
    bool winner_changes(const std::vector<LD>& pre, std::size_t c, std::size_t H, std::size_t W, std::size_t qy,
                        std::size_t qx, const std::vector<LD>& delta, std::size_t frozen) const {
        for (const LD sign : {LD(1), LD(-1)}) {
            std::size_t best = 0;
            LD best_v = -1;
            for (std::size_t dy = 0; dy < d_.P; ++dy)
                for (std::size_t dx = 0; dx < d_.P; ++dx) {
                    const std::size_t y = qy * d_.P + dy, x = qx * d_.P + dx;
                    const std::size_t i = (c * H + y) * W + x;
                    const LD v = relu(pre[i] + sign * LD(eps_) * delta[y * W + x]);
                    if (best_v < 0 || v > best_v) {
                        best_v = v;
                        best = i;
                    }
                }
            if (best != frozen) return true;
        }
        return false;
    }

    // conv1 channel o shifted by delta1 (per unit eps) -> logit direction.
    void propagate_conv1(std::size_t s, std::size_t o, const std::vector<LD>& delta1, std::vector<LD>& dz, bool& kink) {
        const Trace& t = traces_[s];
        const auto w2 = m_.conv2_weights();
        // Pool1 change under frozen winners and ReLU signs.
        std::vector<LD> dp1(d_.Q1 * d_.R1, 0);
        for (std::size_t qy = 0; qy < d_.Q1; ++qy)
            for (std::size_t qx = 0; qx < d_.R1; ++qx) {
                const std::size_t pi = (o * d_.Q1 + qy) * d_.R1 + qx;
                const std::size_t win = t.a1[pi];
                const std::size_t local = win - o * d_.H1 * d_.W1;
                if (t.c1[win] > 0) dp1[qy * d_.R1 + qx] = delta1[local];
                if (!kink) {
                    for (std::size_t dy = 0; dy < d_.P && !kink; ++dy)
                        for (std::size_t dx = 0; dx < d_.P && !kink; ++dx) {
                            const std::size_t y = qy * d_.P + dy, x = qx * d_.P + dx;
                            kink = relu_flips(t.c1[(o * d_.H1 + y) * d_.W1 + x], delta1[y * d_.W1 + x]);
                        }
                    if (!kink) kink = winner_changes(t.c1, o, d_.H1, d_.W1, qy, qx, delta1, win);
                }
            }
        std::fill(dz.begin(), dz.end(), 0);
        std::vector<LD> delta2(d_.H2 * d_.W2);
        for (std::size_t o2 = 0; o2 < d_.C2; ++o2) {
            bool touched = false;
            for (std::size_t y = 0; y < d_.H2; ++y)
                for (std::size_t x = 0; x < d_.W2; ++x) {
                    LD v = 0;
                    for (std::size_t ky = 0; ky < d_.K2; ++ky)
                        for (std::size_t kx = 0; kx < d_.K2; ++kx)
                            v += LD(w2[((o2 * d_.C1 + o) * d_.K2 + ky) * d_.K2 + kx]) * dp1[(y + ky) * d_.R1 + x + kx];
                    delta2[y * d_.W2 + x] = v;
                    touched = touched || v != 0;
                }
            if (touched) propagate_conv2_channel(s, o2, delta2, dz, kink);
        }
    }

    // conv2 channel o shifted by delta2 (per unit eps) -> adds to dz.
    void propagate_conv2_channel(std::size_t s, std::size_t o, const std::vector<LD>& delta2, std::vector<LD>& dz,
                                 bool& kink) {
        const Trace& t = traces_[s];
        const auto fw = m_.fc_weights();
        for (std::size_t qy = 0; qy < d_.Q2; ++qy)
            for (std::size_t qx = 0; qx < d_.R2; ++qx) {
                const std::size_t j = (o * d_.Q2 + qy) * d_.R2 + qx;
                const std::size_t win = t.a2[j];
                if (t.c2[win] > 0) {
                    const LD dv = delta2[win - o * d_.H2 * d_.W2];
                    for (std::size_t k = 0; k < d_.K; ++k) dz[k] += LD(fw[k * d_.F + j]) * dv;
                }
                if (!kink) {
                    for (std::size_t dy = 0; dy < d_.P && !kink; ++dy)
                        for (std::size_t dx = 0; dx < d_.P && !kink; ++dx) {
                            const std::size_t y = qy * d_.P + dy, x = qx * d_.P + dx;
                            kink = relu_flips(t.c2[(o * d_.H2 + y) * d_.W2 + x], delta2[y * d_.W2 + x]);
                        }
                    if (!kink) kink = winner_changes(t.c2, o, d_.H2, d_.W2, qy, qx, delta2, win);
                }
            }
    }

    const churnlens::cnn::CnnModel& m_;
    Dims d_;
    std::vector<std::span<const double>> inputs_;
    std::vector<int> labels_;
    double eps_;
    std::vector<Trace> traces_;
};

/// |a - n| / max(|a|, |n|), 0 when both are 0.
inline double relative_error(double analytic, double numeric) {
    const double scale = std::max(std::fabs(analytic), std::fabs(numeric));
    return scale == 0.0 ? 0.0 : std::fabs(analytic - numeric) / scale;
}

}  // namespace oracle
