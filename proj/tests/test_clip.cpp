#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "usid/clip.hpp"
#include "usid/codebook.hpp"
#include "usid/fft.hpp"

using namespace usid;

namespace {

PnCode all_ones_code() {
    PnCode c;
    c.id = 1;
    c.chips.fill(1);
    return c;
}

std::span<const int8_t> chips_of(const PnCode& c) {
    return {c.chips.data(), c.chips.size()};
}

} // namespace

TEST_CASE("synthesize_chip_train: 64 chips at 3.90 MHz last about 16 us") {
    auto code = all_ones_code();
    auto w = synthesize_chip_train(chips_of(code), 3.90, 0.33, 1.0, 25.0);
    // nominal duration 64/3.90 = 16.410 us; the buffer rounds up to whole samples
    CHECK(std::abs(64.0 / 3.90 - 16.4103) < 1e-3);
    CHECK(w.samples.size() == static_cast<size_t>(std::ceil(64.0 / 3.90 * 25.0)));
    CHECK(w.duration_us() >= 64.0 / 3.90);
    CHECK(w.duration_us() < 64.0 / 3.90 + 1.0 / 25.0);
}

TEST_CASE("synthesize_chip_train: integer grid gives floor(duty*spc) active samples") {
    auto code = all_ones_code();
    // 62.4 MHz -> exactly 16 samples per chip; floor(0.33*16) = 5 high, 11 zero
    auto w = synthesize_chip_train(chips_of(code), 3.90, 0.33, 2.5, 62.4);
    REQUIRE(w.samples.size() == 64 * 16);
    for (int chip = 0; chip < 64; ++chip) {
        for (int i = 0; i < 16; ++i) {
            double expected = i < 5 ? 2.5 : 0.0;
            CHECK(w.samples[static_cast<size_t>(chip) * 16 + i] == expected);
        }
    }
}

TEST_CASE("synthesize_chip_train: bipolar mapping and zero amplitude") {
    PnCode code;
    code.id = 1;
    for (int i = 0; i < kChipCount; ++i) code.chips[i] = (i % 2 == 0) ? 1 : -1;
    auto w = synthesize_chip_train(chips_of(code), 3.90, 0.33, 1.0, 62.4);
    CHECK(w.samples[0] == 1.0);
    CHECK(w.samples[16] == -1.0);

    auto z = synthesize_chip_train(chips_of(code), 3.90, 0.33, 0.0, 62.4);
    for (double v : z.samples) CHECK(v == 0.0);
}

TEST_CASE("synthesize_chip_train: undersampled fs is rejected") {
    auto code = all_ones_code();
    CHECK_THROWS_AS(synthesize_chip_train(chips_of(code), 3.90, 0.33, 1.0, 10.0),
                    std::invalid_argument);
}

TEST_CASE("apply_crystal_response: zero in, zero out") {
    SampledWaveform w;
    w.fs_mhz = 25.0;
    w.samples.assign(100, 0.0);
    auto out = apply_crystal_response(w, 1.2, 1.4);
    CHECK(out.samples.size() > w.samples.size());
    for (double v : out.samples) CHECK(v == 0.0);
}

TEST_CASE("apply_crystal_response: unit impulse returns the unit-energy kernel") {
    SampledWaveform w;
    w.fs_mhz = 25.0;
    w.samples.assign(1, 1.0);
    auto out = apply_crystal_response(w, 1.2, 1.4);
    auto k = gaussian_bandpass_kernel(1.2, 1.4, 25.0);
    REQUIRE(out.samples.size() == k.samples.size());
    double energy = 0.0;
    for (size_t i = 0; i < k.samples.size(); ++i) {
        CHECK(out.samples[i] == k.samples[i]);
        energy += out.samples[i] * out.samples[i];
    }
    CHECK(energy == doctest::Approx(1.0).epsilon(1e-12));
    // group delay: t0 moves back by the kernel center
    CHECK(out.t0_us == doctest::Approx(-static_cast<double>(k.center_index) / 25.0));
}

TEST_CASE("apply_crystal_response: filtered train spectra peak near the crystal center") {
    auto cb = build_codebook(8, 42);
    FilteredScreen screen; // default chip/crystal parameters
    for (const auto& code : cb.codes) {
        auto train = synthesize_chip_train(chips_of(code), screen.chip_rate_mhz, screen.duty_cycle,
                                           1.0, screen.fs_mhz);
        auto filt = apply_crystal_response(train, screen.crystal_center_mhz,
                                           screen.crystal_fractional_bandwidth);
        double peak_mhz = detail::smoothed_spectral_peak_mhz(filt.samples, screen);
        CHECK(peak_mhz > screen.crystal_center_mhz * 0.9);
        CHECK(peak_mhz < screen.crystal_center_mhz * 1.1);
    }
}

TEST_CASE("step_trigger: no crossing means no event") {
    ClipConfig cfg;
    cfg.trigger_threshold = 0.5;
    ClipState st;
    RandomStream rng(1);
    SampledWaveform inc;
    inc.fs_mhz = 25.0;
    inc.samples.assign(50, 0.2);
    CHECK_FALSE(step_trigger(st, cfg, inc, 0.0, rng).has_value());
    CHECK_FALSE(st.last_trigger_time_us.has_value());
}

TEST_CASE("step_trigger: event time is first crossing + delay, exactly") {
    ClipConfig cfg;
    cfg.trigger_threshold = 0.5;
    cfg.trigger_delay_mean_us = 0.5;
    cfg.jitter_std_us = 0.0;
    ClipState st;
    RandomStream rng(1);
    SampledWaveform inc;
    inc.fs_mhz = 25.0;
    inc.t0_us = 2.0;
    inc.samples.assign(50, 0.0);
    inc.samples[7] = -0.9; // magnitude crossing, negative polarity
    auto ev = step_trigger(st, cfg, inc, 0.0, rng);
    REQUIRE(ev.has_value());
    CHECK(ev->time_us == (2.0 + 7.0 / 25.0) + 0.5 + 0.0);
    CHECK_FALSE(ev->late);
}

TEST_CASE("step_trigger: lockout suppresses re-triggering") {
    ClipConfig cfg;
    cfg.trigger_threshold = 0.5;
    cfg.jitter_std_us = 0.0;
    ClipState st;
    RandomStream rng(1);
    SampledWaveform inc;
    inc.fs_mhz = 25.0;
    inc.samples.assign(10, 1.0);
    auto first = step_trigger(st, cfg, inc, 0.0, rng);
    REQUIRE(first.has_value());
    // any acquisition starting before lockout_until sees nothing
    for (double now : {1.0, 10.0, st.lockout_until_us - 1e-9})
        CHECK_FALSE(step_trigger(st, cfg, inc, now, rng).has_value());
    // after lockout it triggers again
    CHECK(step_trigger(st, cfg, inc, st.lockout_until_us + 1.0, rng).has_value());
}

TEST_CASE("step_trigger: second-pulse anomaly fires only on the second acquisition") {
    ClipConfig cfg;
    cfg.trigger_threshold = 0.5;
    cfg.jitter_std_us = 0.0;
    cfg.miss_probability_second_pulse = 1.0;
    SampledWaveform inc;
    inc.fs_mhz = 25.0;
    inc.samples.assign(10, 1.0);

    int misses = 0, lates = 0;
    for (uint64_t seed = 0; seed < 40; ++seed) {
        ClipState st;
        RandomStream rng(seed);
        auto first = step_trigger(st, cfg, inc, 0.0, rng, false);
        REQUIRE(first.has_value()); // first of pair never misses
        CHECK_FALSE(first->late);
        ClipState st2;
        auto second = step_trigger(st2, cfg, inc, 0.0, rng, true);
        if (!second) ++misses;
        else if (second->late) ++lates;
    }
    CHECK(misses + lates == 40); // p=1 always produces an anomaly
    CHECK(misses > 0);
    CHECK(lates > 0);
}

TEST_CASE("emit: polarity of the incident pulse does not change the waveform") {
    auto cb = build_codebook(2, 42);
    ClipConfig cfg;
    cfg.jitter_std_us = 0.0;
    SampledWaveform inc;
    inc.fs_mhz = 25.0;
    inc.samples.assign(20, 0.0);
    inc.samples[4] = 0.8;
    SampledWaveform inc_neg = inc;
    for (auto& v : inc_neg.samples) v = -v;

    ClipState st_a, st_b;
    RandomStream rng_a(9), rng_b(9);
    auto ev_a = step_trigger(st_a, cfg, inc, 0.0, rng_a);
    auto ev_b = step_trigger(st_b, cfg, inc_neg, 0.0, rng_b);
    REQUIRE(ev_a.has_value());
    REQUIRE(ev_b.has_value());
    auto wa = emit(cfg, *ev_a, cb.codes[0], 25.0);
    auto wb = emit(cfg, *ev_b, cb.codes[0], 25.0);
    CHECK(wa.t0_us == wb.t0_us);
    REQUIRE(wa.samples.size() == wb.samples.size());
    for (size_t i = 0; i < wa.samples.size(); ++i) CHECK(wa.samples[i] == wb.samples[i]);
}

TEST_CASE("emit: trigger time shifts t0 only") {
    auto cb = build_codebook(2, 42);
    ClipConfig cfg;
    auto w0 = emit(cfg, TriggerEvent{0.0, false}, cb.codes[0], 25.0);
    auto w5 = emit(cfg, TriggerEvent{5.0, false}, cb.codes[0], 25.0);
    CHECK(w5.t0_us - w0.t0_us == 5.0);
    REQUIRE(w0.samples.size() == w5.samples.size());
    for (size_t i = 0; i < w0.samples.size(); ++i) CHECK(w0.samples[i] == w5.samples[i]);
    // duration = chip train + kernel tails
    auto k = gaussian_bandpass_kernel(cfg.crystal_center_mhz, cfg.crystal_fractional_bandwidth, 25.0);
    double expected = std::ceil(64.0 / 3.90 * 25.0) + static_cast<double>(k.samples.size()) - 1.0;
    CHECK(static_cast<double>(w0.samples.size()) == expected);
}

TEST_CASE("emit: energy scales quadratically with amplitude") {
    auto cb = build_codebook(2, 42);
    ClipConfig cfg;
    cfg.amplitude = 1.0;
    auto w1 = emit(cfg, TriggerEvent{0.0, false}, cb.codes[0], 25.0);
    cfg.amplitude = 2.0;
    auto w2 = emit(cfg, TriggerEvent{0.0, false}, cb.codes[0], 25.0);
    CHECK(w2.energy() == doctest::Approx(4.0 * w1.energy()).epsilon(1e-12));
}

TEST_CASE("ClipConfig validation") {
    ClipConfig ok;
    CHECK_NOTHROW(ok.validate());
    CHECK(ok.lockout_us() == doctest::Approx(2.0 * 64.0 / 3.90));

    ClipConfig bad = ok;
    bad.duty_cycle = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = ok;
    bad.amplitude = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = ok;
    bad.miss_probability_second_pulse = 1.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = ok;
    bad.lockout_duration_us = 1.0; // shorter than the code
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
