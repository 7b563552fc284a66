#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "usid/correlate.hpp"
#include "usid/rng.hpp"
#include "usid/waveform.hpp"

namespace usid {

inline constexpr int kChipCount = 64;

// One 64-chip pseudo-noise code; chips are +1/-1.
struct PnCode {
    int id = 0; // 1-based
    std::array<int8_t, kChipCount> chips{};
};

struct Codebook {
    std::vector<PnCode> codes;
    double separation = 0.0;     // max |normalized xcorr| over all distinct pairs and lags
    // generation parameters, kept so the text format round-trips byte-exact
    std::string generator = "random-search";
    uint64_t rng_seed = 0;
    double max_separation = 0.3;
};

namespace mseq {

// Verified primitive-polynomial tap sets (Fibonacci form, taps as exponents).
// Periods are checked exhaustively in the test suite.
inline const std::map<int, std::vector<std::vector<int>>>& primitive_taps() {
    static const std::map<int, std::vector<std::vector<int>>> table = {
        {3, {{3, 2}, {3, 1}}},
        {4, {{4, 3}, {4, 1}}},
        {5, {{5, 3}, {5, 2}}},
        {6, {{6, 5}, {6, 1}}},
        {7, {{7, 6}, {7, 3}, {7, 1}}},
        {8, {{8, 6, 5, 4}, {8, 4, 3, 2}}},
        {9, {{9, 5}, {9, 4}}},
        {10, {{10, 7}, {10, 3}}},
    };
    return table;
}

inline bool taps_in_table(int register_length, const std::vector<int>& taps) {
    auto it = primitive_taps().find(register_length);
    if (it == primitive_taps().end()) return false;
    for (const auto& t : it->second) {
        if (t.size() != taps.size()) continue;
        bool same = true;
        for (size_t i = 0; i < t.size(); ++i) same = same && t[i] == taps[i];
        if (same) return true;
    }
    return false;
}

} // namespace mseq

// Maximal-length +/-1 sequence of length 2^register_length - 1 from a
// Fibonacci LFSR. Taps must come from the verified table above.
inline std::vector<int8_t> generate_mseq(int register_length, const std::vector<int>& taps,
                                         uint64_t seed_state) {
    if (register_length < 3)
        throw std::invalid_argument("generate_mseq: register_length must be >= 3");
    if (!mseq::taps_in_table(register_length, taps))
        throw std::invalid_argument("generate_mseq: taps are not in the verified primitive-polynomial table");
    const uint64_t mask = (uint64_t(1) << register_length) - 1;
    uint64_t state = seed_state & mask;
    if (state == 0)
        throw std::invalid_argument("generate_mseq: seed_state must be nonzero");

    const size_t period = (size_t(1) << register_length) - 1;
    std::vector<int8_t> chips(period);
    for (size_t i = 0; i < period; ++i) {
        chips[i] = (state & 1) ? int8_t(1) : int8_t(-1);
        uint64_t fb = 0;
        for (int t : taps) fb ^= (state >> (register_length - t)) & 1;
        state = (state >> 1) | (fb << (register_length - 1));
    }
    return chips;
}

namespace detail {

// Exact normalized cross-correlation max for +/-1 codes. The raw lag sums are
// small integers, so double arithmetic is exact and results compare bit-for-bit
// with any direct re-computation.
struct ChipCorrPeak {
    double value = 0.0;
    int lag = 0;
};

inline ChipCorrPeak max_abs_chip_xcorr(const std::array<int8_t, kChipCount>& a,
                                       const std::array<int8_t, kChipCount>& b,
                                       bool skip_zero_lag = false) {
    ChipCorrPeak best;
    for (int k = -(kChipCount - 1); k <= kChipCount - 1; ++k) {
        if (skip_zero_lag && k == 0) continue;
        int lo = std::max(0, -k);
        int hi = std::min(kChipCount, kChipCount - k);
        int sum = 0;
        for (int n = lo; n < hi; ++n) sum += int(a[n + k]) * int(b[n]);
        double v = std::abs(sum) / double(kChipCount);
        if (v > best.value) {
            best.value = v;
            best.lag = k;
        }
    }
    return best;
}

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace detail

struct ValidationReport {
    struct PairStat {
        int id_a = 0, id_b = 0;
        double max_corr = 0.0;
        int at_lag = 0;
        bool pass = true;
    };
    struct SidelobeStat {
        int id = 0;
        double worst_off_peak = 0.0; // autocorrelation, lag != 0
        int at_lag = 0;
    };
    std::vector<PairStat> pairs;        // every ordered pair (i != j)
    std::vector<SidelobeStat> sidelobes;
    double separation = 0.0;
    double threshold = 0.3;
    bool pass = true;

    std::string to_string() const {
        std::ostringstream os;
        os << "codebook validation: " << (pass ? "PASS" : "FAIL") << " (separation "
           << detail::format_double(separation) << ", threshold " << detail::format_double(threshold)
           << ")\n";
        for (const auto& p : pairs) {
            if (p.id_a < p.id_b)
                os << "  pair " << p.id_a << "," << p.id_b << ": max |xcorr| "
                   << detail::format_double(p.max_corr) << " at lag " << p.at_lag
                   << (p.pass ? "" : "  <-- exceeds threshold") << "\n";
        }
        for (const auto& s : sidelobes)
            os << "  code " << s.id << ": worst autocorr sidelobe "
               << detail::format_double(s.worst_off_peak) << " at lag " << s.at_lag << "\n";
        return os.str();
    }
};

// Max |normalized xcorr| per ordered pair plus per-code autocorrelation
// sidelobes, checked against the given threshold.
inline ValidationReport validate_codebook(const Codebook& cb, double threshold) {
    if (cb.codes.empty())
        throw std::invalid_argument("validate_codebook: codebook is empty");
    ValidationReport rep;
    rep.threshold = threshold;
    for (size_t i = 0; i < cb.codes.size(); ++i) {
        for (size_t j = 0; j < cb.codes.size(); ++j) {
            if (i == j) continue;
            auto peak = detail::max_abs_chip_xcorr(cb.codes[i].chips, cb.codes[j].chips);
            ValidationReport::PairStat ps;
            ps.id_a = cb.codes[i].id;
            ps.id_b = cb.codes[j].id;
            ps.max_corr = peak.value;
            ps.at_lag = peak.lag;
            ps.pass = peak.value < threshold;
            rep.pairs.push_back(ps);
            rep.separation = std::max(rep.separation, peak.value);
            rep.pass = rep.pass && ps.pass;
        }
        auto side = detail::max_abs_chip_xcorr(cb.codes[i].chips, cb.codes[i].chips, true);
        rep.sidelobes.push_back({cb.codes[i].id, side.value, side.lag});
    }
    return rep;
}

namespace detail {

inline std::array<int8_t, kChipCount> extend_mseq_to_64(const std::vector<int8_t>& seq, int shift) {
    std::array<int8_t, kChipCount> chips{};
    const int n = static_cast<int>(seq.size()); // 63
    for (int i = 0; i < n; ++i) chips[i] = seq[(i + shift) % n];
    chips[kChipCount - 1] = chips[0]; // repeat the first chip to reach 64
    return chips;
}

inline double separation_of(const std::vector<PnCode>& codes) {
    double sep = 0.0;
    for (size_t i = 0; i < codes.size(); ++i)
        for (size_t j = i + 1; j < codes.size(); ++j)
            sep = std::max(sep, max_abs_chip_xcorr(codes[i].chips, codes[j].chips).value);
    return sep;
}

} // namespace detail

// Codes that separate well as raw chips can collide once the clip's narrowband
// crystal smears them, so the builder also constrains the normalized
// cross-correlation of the crystal-filtered waveforms and keeps each filtered
// spectrum peaked near the crystal center.
struct FilteredScreen {
    bool enabled = true;
    double chip_rate_mhz = 3.90;
    double duty_cycle = 0.33;
    double crystal_center_mhz = 1.2;
    double crystal_fractional_bandwidth = 1.0;
    double fs_mhz = 25.0;
    double bound = 0.285;            // filtered-waveform cross-correlation target
    double spectral_tolerance = 0.08; // |peak - center| / center
};

namespace detail {

inline std::vector<double> screened_waveform(const std::array<int8_t, kChipCount>& chips,
                                             const FilteredScreen& fs) {
    SampledWaveform train =
        synthesize_chip_train(std::span<const int8_t>(chips.data(), chips.size()),
                              fs.chip_rate_mhz, fs.duty_cycle, 1.0, fs.fs_mhz);
    SampledWaveform filt =
        apply_crystal_response(train, fs.crystal_center_mhz, fs.crystal_fractional_bandwidth);
    double e = filt.energy();
    const double inv = e > 0.0 ? 1.0 / std::sqrt(e) : 0.0;
    for (auto& v : filt.samples) v *= inv;
    return filt.samples;
}

// Argmax of the power spectrum smoothed over the -6 dB bandwidth. Uses the
// same transform length as the build-time screen so both report identically.
inline double smoothed_spectral_peak_mhz(const std::vector<double>& w, const FilteredScreen& fs) {
    const size_t p = next_pow2(w.size()) * 2;
    std::vector<cplx> spec(p, cplx(0, 0));
    for (size_t i = 0; i < w.size(); ++i) spec[i] = cplx(w[i], 0.0);
    fft_inplace(spec, false);
    const size_t half = p / 2;
    std::vector<double> prefix(half + 1, 0.0);
    for (size_t i = 0; i < half; ++i) prefix[i + 1] = prefix[i] + std::norm(spec[i]);
    const double df = fs.fs_mhz / static_cast<double>(p);
    const auto win = static_cast<size_t>(
        std::max(1.0, std::round(fs.crystal_center_mhz * fs.crystal_fractional_bandwidth / df / 2.0)));
    size_t best = 0;
    double best_v = -1.0;
    for (size_t i = 0; i < half; ++i) {
        const size_t lo = i > win ? i - win : 0;
        const size_t hi = std::min(half, i + win + 1);
        const double v = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
        if (v > best_v) {
            best_v = v;
            best = i;
        }
    }
    return static_cast<double>(best) * df;
}

} // namespace detail

namespace detail {

// Local-search state for the filtered-screen build route. Every random draw
// comes from the one stream, so the result is a pure function of the seed.
// Waveform spectra are cached: a candidate evaluation costs one forward FFT
// plus one inverse FFT per held code.
class CodeSearch {
public:
    CodeSearch(uint64_t rng_seed, double max_separation, const FilteredScreen& screen,
               int max_attempts)
        : rng_(derive_seed({rng_seed, 0x636f6465626f6f6bULL})),
          chip_bound_(max_separation),
          screen_(screen),
          budget_(max_attempts) {
        const size_t wave_len = screened_waveform({}, screen_).size();
        fft_len_ = next_pow2(2 * wave_len - 1);
    }

    struct Entry {
        std::array<int8_t, kChipCount> chips{};
        std::vector<double> wave; // unnormalized filtered waveform
        double energy = 0.0;
        std::vector<cplx> spec;   // forward FFT of wave, fft_len_ points
    };

    void refresh(Entry& e) {
        SampledWaveform train = synthesize_chip_train(
            std::span<const int8_t>(e.chips.data(), e.chips.size()), screen_.chip_rate_mhz,
            screen_.duty_cycle, 1.0, screen_.fs_mhz);
        SampledWaveform filt = apply_crystal_response(train, screen_.crystal_center_mhz,
                                                      screen_.crystal_fractional_bandwidth);
        e.wave = std::move(filt.samples);
        e.energy = 0.0;
        for (double v : e.wave) e.energy += v * v;
        e.spec.assign(fft_len_, cplx(0, 0));
        for (size_t i = 0; i < e.wave.size(); ++i) e.spec[i] = cplx(e.wave[i], 0.0);
        fft_inplace(e.spec, false);
    }

    // Objective of a candidate against all accepted codes except `skip`:
    // the worst of the chip-domain and filtered-domain cross-correlations,
    // with hard penalties for chip-bound or spectral violations.
    double objective(const Entry& cand, size_t skip) {
        spend();
        double worst = 0.0;
        for (size_t q = 0; q < set_.size(); ++q) {
            if (q == skip) continue;
            double c = max_abs_chip_xcorr(set_[q].chips, cand.chips).value;
            if (c >= chip_bound_) return 10.0 + c;
            worst = std::max(worst, c);
        }
        const double dev = std::abs(spectral_peak_mhz(cand) - screen_.crystal_center_mhz) /
                           screen_.crystal_center_mhz;
        if (dev > screen_.spectral_tolerance) return 5.0 + dev;
        std::vector<cplx> prod(fft_len_);
        for (size_t q = 0; q < set_.size(); ++q) {
            if (q == skip) continue;
            const Entry& other = set_[q];
            for (size_t i = 0; i < fft_len_; ++i) prod[i] = cand.spec[i] * std::conj(other.spec[i]);
            fft_inplace(prod, true);
            double peak = 0.0;
            for (const auto& v : prod) peak = std::max(peak, std::abs(v.real()));
            worst = std::max(worst, peak / std::sqrt(cand.energy * other.energy));
        }
        return worst;
    }

    // Argmax of the candidate's power spectrum smoothed over the -6 dB band.
    double spectral_peak_mhz(const Entry& e) const {
        const size_t half = fft_len_ / 2;
        std::vector<double> prefix(half + 1, 0.0);
        for (size_t i = 0; i < half; ++i) prefix[i + 1] = prefix[i] + std::norm(e.spec[i]);
        const double df = screen_.fs_mhz / static_cast<double>(fft_len_);
        const auto win = static_cast<size_t>(std::max(
            1.0,
            std::round(screen_.crystal_center_mhz * screen_.crystal_fractional_bandwidth / df / 2.0)));
        size_t best = 0;
        double best_v = -1.0;
        for (size_t i = 0; i < half; ++i) {
            const size_t lo = i > win ? i - win : 0;
            const size_t hi = std::min(half, i + win + 1);
            const double v = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
            if (v > best_v) {
                best_v = v;
                best = i;
            }
        }
        return static_cast<double>(best) * df;
    }

    Entry random_entry() {
        Entry e;
        for (auto& c : e.chips) c = (rng_.next_u64() & 1) ? int8_t(1) : int8_t(-1);
        refresh(e);
        return e;
    }

    // First-improvement single-chip-flip descent.
    void descend(Entry& e, double& f, size_t skip, double target, int max_sweeps = 12) {
        bool improved = true;
        int sweeps = 0;
        while (improved && f >= target && sweeps < max_sweeps) {
            improved = false;
            ++sweeps;
            for (int j = 0; j < kChipCount; ++j) {
                Entry trial = e;
                trial.chips[j] = static_cast<int8_t>(-trial.chips[j]);
                refresh(trial);
                double f2 = objective(trial, skip);
                if (f2 < f) {
                    f = f2;
                    e = std::move(trial);
                    improved = true;
                }
            }
        }
    }

    // Descent with a few basin-hopping perturbations.
    double optimize(Entry& e, size_t skip, double target, int hops) {
        double f = objective(e, skip);
        descend(e, f, skip, target);
        for (int hop = 0; hop < hops && f >= target; ++hop) {
            Entry trial = e;
            for (int t = 0; t < 3; ++t) {
                int j = static_cast<int>(rng_.next_u64() % kChipCount);
                trial.chips[j] = static_cast<int8_t>(-trial.chips[j]);
            }
            refresh(trial);
            double f2 = objective(trial, skip);
            descend(trial, f2, skip, target);
            if (f2 < f) {
                f = f2;
                e = std::move(trial);
            }
        }
        return f;
    }

    double set_metric(size_t* worst_i = nullptr, size_t* worst_j = nullptr) {
        double worst = 0.0;
        for (size_t i = 0; i < set_.size(); ++i) {
            for (size_t j = i + 1; j < set_.size(); ++j) {
                double c = max_abs_chip_xcorr(set_[i].chips, set_[j].chips).value;
                double v;
                if (c >= chip_bound_) {
                    v = 10.0 + c;
                } else {
                    std::vector<cplx> prod(fft_len_);
                    for (size_t q = 0; q < fft_len_; ++q)
                        prod[q] = set_[i].spec[q] * std::conj(set_[j].spec[q]);
                    fft_inplace(prod, true);
                    double peak = 0.0;
                    for (const auto& x : prod) peak = std::max(peak, std::abs(x.real()));
                    v = std::max(c, peak / std::sqrt(set_[i].energy * set_[j].energy));
                }
                if (v > worst) {
                    worst = v;
                    if (worst_i) *worst_i = i;
                    if (worst_j) *worst_j = j;
                }
            }
        }
        return worst;
    }

    // Grow the set to n codes at a loose bound, then polish worst pairs down
    // to the screen bound. Returns the final codes.
    std::vector<PnCode> run(int n_codes) {
        const double loose = std::max(screen_.bound, 0.2999);
        while (static_cast<int>(set_.size()) < n_codes) {
            Entry best;
            double best_f = 1e18;
            for (int restart = 0; restart < 40 && best_f >= loose; ++restart) {
                Entry e = random_entry();
                double f = optimize(e, SIZE_MAX, loose, 8);
                if (f < best_f) {
                    best_f = f;
                    best = std::move(e);
                }
            }
            if (best_f < loose) {
                set_.push_back(std::move(best));
            } else if (!set_.empty()) {
                best_seen_ = std::min(best_seen_, best_f);
                size_t victim = rng_.next_u64() % set_.size();
                set_.erase(set_.begin() + static_cast<std::ptrdiff_t>(victim));
            }
        }

        // polish: re-optimize a member of the worst pair until the whole set
        // meets the screen bound; perturb on plateaus
        size_t wi = 0, wj = 0;
        double metric = set_metric(&wi, &wj);
        while (metric >= screen_.bound) {
            spend();
            best_seen_ = std::min(best_seen_, metric);
            const size_t pick = (rng_.next_u64() & 1) ? wi : wj;
            Entry trial = set_[pick];
            optimize(trial, pick, screen_.bound, 6);
            Entry saved = std::move(set_[pick]);
            set_[pick] = std::move(trial);
            double after = set_metric(&wi, &wj);
            if (after < metric) {
                metric = after;
            } else {
                set_[pick] = std::move(saved);
                for (int t = 0; t < 2; ++t) {
                    int j = static_cast<int>(rng_.next_u64() % kChipCount);
                    set_[pick].chips[j] = static_cast<int8_t>(-set_[pick].chips[j]);
                }
                refresh(set_[pick]);
                metric = set_metric(&wi, &wj);
            }
        }

        std::vector<PnCode> out(static_cast<size_t>(n_codes));
        for (int i = 0; i < n_codes; ++i) {
            out[static_cast<size_t>(i)].id = i + 1;
            out[static_cast<size_t>(i)].chips = set_[static_cast<size_t>(i)].chips;
        }
        return out;
    }

private:
    void spend() {
        if (--budget_ < 0) {
            std::ostringstream os;
            os << "build_codebook: max_attempts exhausted with " << set_.size()
               << " codes held; best separation reached "
               << format_double(best_seen_ > 1.0 ? 1.0 : best_seen_);
            throw std::runtime_error(os.str());
        }
    }

    RandomStream rng_;
    double chip_bound_;
    FilteredScreen screen_;
    long long budget_;
    size_t fft_len_ = 0;
    std::vector<Entry> set_;
    double best_seen_ = 10.0;
};

} // namespace detail

// Builds an n-code book whose pairwise chip |xcorr| stays below max_separation
// at every lag. First tries cyclic shifts of a degree-6 m-sequence; aperiodic
// partial-lag correlation between shifts of one m-sequence is large (>= 0.5),
// so for n >= 2 that route fails the bound and a seeded local search takes
// over. With the default screen the search also bounds the cross-correlation
// of the crystal-filtered waveforms and keeps each filtered spectrum centered
// on the crystal, which is what the detector's rejection margin depends on.
inline Codebook build_codebook(int n_codes = 8, uint64_t rng_seed = 42,
                               int max_attempts = 400000, double max_separation = 0.3,
                               const FilteredScreen& screen = {}) {
    if (n_codes < 1)
        throw std::invalid_argument("build_codebook: n_codes must be >= 1");

    Codebook cb;
    cb.rng_seed = rng_seed;
    cb.max_separation = max_separation;

    // route 1: evenly spaced cyclic shifts of one m-sequence (63 distinct
    // shifts exist)
    if (n_codes <= 63) {
        auto base = generate_mseq(6, {6, 5}, 1);
        std::vector<PnCode> codes(static_cast<size_t>(n_codes));
        for (int i = 0; i < n_codes; ++i) {
            codes[i].id = i + 1;
            codes[i].chips = detail::extend_mseq_to_64(base, (63 * i) / n_codes);
        }
        double sep = detail::separation_of(codes);
        if (n_codes == 1 || (sep < max_separation && !screen.enabled)) {
            cb.codes = std::move(codes);
            cb.separation = sep;
            cb.generator = "mseq6-shift";
            return cb;
        }
    }

    if (!screen.enabled) {
        // plain rejection sampling on the chip bound
        RandomStream rng(derive_seed({rng_seed, 0x636f6465626f6f6bULL}));
        std::vector<PnCode> accepted;
        double best_candidate = 1.0;
        for (int attempt = 0; attempt < max_attempts; ++attempt) {
            PnCode cand;
            for (auto& c : cand.chips) c = (rng.next_u64() & 1) ? int8_t(1) : int8_t(-1);
            double worst = 0.0;
            for (const auto& prev : accepted)
                worst = std::max(worst, detail::max_abs_chip_xcorr(prev.chips, cand.chips).value);
            best_candidate = std::min(best_candidate, worst);
            if (worst >= max_separation) continue;
            cand.id = static_cast<int>(accepted.size()) + 1;
            accepted.push_back(cand);
            best_candidate = 1.0;
            if (static_cast<int>(accepted.size()) == n_codes) {
                cb.codes = std::move(accepted);
                cb.separation = detail::separation_of(cb.codes);
                cb.generator = "random-search";
                return cb;
            }
        }
        std::ostringstream os;
        os << "build_codebook: max_attempts (" << max_attempts << ") exhausted with "
           << accepted.size() << " of " << n_codes << " codes accepted; best candidate separation "
           << detail::format_double(accepted.empty() ? 0.0 : best_candidate);
        throw std::runtime_error(os.str());
    }

    detail::CodeSearch search(rng_seed, max_separation, screen, max_attempts);
    cb.codes = search.run(n_codes);
    cb.separation = detail::separation_of(cb.codes);
    cb.generator = "filtered-local-search";
    return cb;
}

// --- text serialization -----------------------------------------------------
//
// One header line, then one line per code:
//   # usid-codebook v1 generator=<name> rng_seed=<u64> max_separation=<d> separation=<d>
//   <id>,<64 chips as '+'/'-'>
// Round-trips byte-exact.

inline std::string codebook_to_text(const Codebook& cb) {
    std::ostringstream os;
    os << "# usid-codebook v1 generator=" << cb.generator << " rng_seed=" << cb.rng_seed
       << " max_separation=" << detail::format_double(cb.max_separation)
       << " separation=" << detail::format_double(cb.separation) << "\n";
    for (const auto& c : cb.codes) {
        os << c.id << ",";
        for (int8_t chip : c.chips) os << (chip > 0 ? '+' : '-');
        os << "\n";
    }
    return os.str();
}

inline Codebook codebook_from_text(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line.rfind("# usid-codebook v1 ", 0) != 0)
        throw std::runtime_error("codebook: missing or unsupported header line");

    Codebook cb;
    {
        std::istringstream hs(line.substr(std::string("# usid-codebook v1 ").size()));
        std::string tok;
        while (hs >> tok) {
            auto eq = tok.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("codebook: malformed header token '" + tok + "'");
            std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
            if (key == "generator") cb.generator = val;
            else if (key == "rng_seed") cb.rng_seed = std::stoull(val);
            else if (key == "max_separation") cb.max_separation = std::stod(val);
            else if (key == "separation") cb.separation = std::stod(val);
            else throw std::runtime_error("codebook: unknown header key '" + key + "'");
        }
    }

    int expected_id = 1;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("codebook: malformed code line '" + line + "'");
        PnCode code;
        code.id = std::stoi(line.substr(0, comma));
        if (code.id != expected_id++)
            throw std::runtime_error("codebook: ids must be contiguous from 1");
        std::string chips = line.substr(comma + 1);
        if (chips.size() != kChipCount)
            throw std::runtime_error("codebook: codes must have exactly 64 chips");
        for (int i = 0; i < kChipCount; ++i) {
            if (chips[i] == '+') code.chips[i] = 1;
            else if (chips[i] == '-') code.chips[i] = -1;
            else throw std::runtime_error("codebook: chips must be '+' or '-'");
        }
        cb.codes.push_back(code);
    }
    if (cb.codes.empty()) throw std::runtime_error("codebook: no codes");
    return cb;
}

inline void save_codebook(const std::string& path, const Codebook& cb) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("codebook: cannot open '" + path + "' for writing");
    f << codebook_to_text(cb);
    if (!f) throw std::runtime_error("codebook: write to '" + path + "' failed");
}

inline Codebook load_codebook(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("codebook: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << f.rdbuf();
    return codebook_from_text(buf.str());
}

} // namespace usid
