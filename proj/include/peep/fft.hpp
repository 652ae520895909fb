#pragma once

#include <complex>
#include <map>
#include <memory>
#include <vector>

#include "peep/common.hpp"

namespace peep {

using cplx = std::complex<double>;

// Iterative radix-2 FFT with cached bit-reversal and twiddle tables.
// Forward transform is unnormalised; the inverse scales by 1/N, so
// ifft(fft(x)) == x. Power-of-two sizes only — every buffer in the
// transform pipeline is padded to a power of two anyway.
class Fft {
public:
    explicit Fft(std::size_t n) : n_(n) {
        if (!is_pow2(n) || n == 0) throw ValidationError("fft size must be a power of two");
        rev_.resize(n);
        std::size_t log2n = 0;
        while ((std::size_t{1} << log2n) < n) ++log2n;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t r = 0;
            for (std::size_t b = 0; b < log2n; ++b)
                if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (log2n - 1 - b);
            rev_[i] = r;
        }
        // roots of unity for the largest stage; stage `len` strides by n/len
        w_.resize(n / 2);
        for (std::size_t k = 0; k < n / 2; ++k) {
            const double a = -kTwoPi * static_cast<double>(k) / static_cast<double>(n);
            w_[k] = cplx(std::cos(a), std::sin(a));
        }
    }

    std::size_t size() const { return n_; }

    void forward(std::vector<cplx>& a) const { transform(a, false); }
    void inverse(std::vector<cplx>& a) const { transform(a, true); }

    /// Shared, lazily built plan per size.
    static const Fft& plan(std::size_t n) {
        static std::map<std::size_t, std::unique_ptr<Fft>> cache;
        auto it = cache.find(n);
        if (it == cache.end()) it = cache.emplace(n, std::make_unique<Fft>(n)).first;
        return *it->second;
    }

private:
    void transform(std::vector<cplx>& a, bool inv) const {
        if (a.size() != n_) throw ValidationError("fft: buffer size does not match plan");
        for (std::size_t i = 0; i < n_; ++i)
            if (i < rev_[i]) std::swap(a[i], a[rev_[i]]);
        for (std::size_t len = 2; len <= n_; len <<= 1) {
            const std::size_t stride = n_ / len;
            for (std::size_t i = 0; i < n_; i += len) {
                std::size_t widx = 0;
                for (std::size_t j = 0; j < len / 2; ++j, widx += stride) {
                    const cplx w = inv ? std::conj(w_[widx]) : w_[widx];
                    const cplx u = a[i + j];
                    const cplx t = a[i + j + len / 2] * w;
                    a[i + j] = u + t;
                    a[i + j + len / 2] = u - t;
                }
            }
        }
        if (inv) {
            const double s = 1.0 / static_cast<double>(n_);
            for (auto& x : a) x *= s;
        }
    }

    std::size_t n_;
    std::vector<std::size_t> rev_;
    std::vector<cplx> w_;
};

/// Forward FFT of a real signal, zero-padded to `n` (power of two).
inline std::vector<cplx> fft_real(const std::vector<double>& x, std::size_t n) {
    std::vector<cplx> buf(n, cplx{0.0, 0.0});
    const std::size_t m = std::min(n, x.size());
    for (std::size_t i = 0; i < m; ++i) buf[i] = cplx(x[i], 0.0);
    Fft::plan(n).forward(buf);
    return buf;
}

}  // namespace peep
