"""Simulator: determinism, signature ratios, load effects, and noise bounds."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpc_sentinel.errors import ConfigurationError
from hpc_sentinel.events import Load, ProcessCategory, Profile, validate_trace, trace_to_jsonl
from hpc_sentinel.simgen import (
    ATTACK_MSP_RATIO_MIN,
    BENIGN_MSP_RATIO_MAX,
    LOAD_CONDITIONS,
    SimConfig,
    _apply_counter_noise,
    builtin_profile,
    generate_trace,
    perturb_rates,
)

from conftest import per_pid_mean_deltas


class TestDeterminism:
    def test_same_seed_byte_identical(self):
        cfg = SimConfig(profile="spectre", duration_windows=80, seed=1)
        assert trace_to_jsonl(generate_trace(cfg)) == trace_to_jsonl(generate_trace(cfg))

    def test_different_seed_differs(self):
        a = SimConfig(profile="spectre", duration_windows=80, seed=1)
        b = SimConfig(profile="spectre", duration_windows=80, seed=2)
        assert trace_to_jsonl(generate_trace(a)) != trace_to_jsonl(generate_trace(b))


class TestSignatureRatios:
    def test_spectre_msp_ratio_separation(self, spectre_nl_trace):
        trace = spectre_nl_trace
        ids = trace.event_set.ids
        means = per_pid_mean_deltas(trace)
        for pid, m in means.items():
            ratio = m[ids.index("BR_MSP")] / m[ids.index("BR_INS")]
            if trace.processes[pid].malicious:
                assert ratio >= ATTACK_MSP_RATIO_MIN
            else:
                assert ratio <= BENIGN_MSP_RATIO_MAX

    def test_meltdown_page_fault_separation(self, meltdown_nl_trace):
        trace = meltdown_nl_trace
        j = trace.event_set.ids.index("PAGE_FAULTS")
        means = per_pid_mean_deltas(trace)
        benign = [m[j] for pid, m in means.items() if not trace.processes[pid].malicious]
        attack = [m[j] for pid, m in means.items() if trace.processes[pid].malicious]
        assert min(attack) >= 10.0 * max(benign)

    @pytest.mark.parametrize("profile", ["spectre", "meltdown"])
    @pytest.mark.parametrize("load", [Load.NL, Load.AL, Load.FL])
    def test_signature_separation_factor_five(self, profile, load):
        # >= 50 windows: attack mean exceeds every benign mean 5x on signature events
        trace = generate_trace(SimConfig(profile=profile, load=load, duration_windows=120, seed=21))
        ids = trace.event_set.ids
        means = per_pid_mean_deltas(trace)

        def signature(m):
            out = [m[ids.index("L3_TCM")] / m[ids.index("TOT_INS")]]
            if profile == "spectre":
                out.append(m[ids.index("BR_MSP")] / m[ids.index("BR_INS")])
            else:
                out.append(m[ids.index("PAGE_FAULTS")])
            return out

        attack = [signature(m) for pid, m in means.items() if trace.processes[pid].malicious]
        benign = [signature(m) for pid, m in means.items() if not trace.processes[pid].malicious]
        for k in range(2):
            assert min(a[k] for a in attack) >= 5.0 * max(b[k] for b in benign)


class TestLoadEffects:
    def test_benign_cache_miss_monotone_in_load(self):
        means = {}
        for load in (Load.NL, Load.AL, Load.FL):
            trace = generate_trace(SimConfig(profile="spectre", load=load, duration_windows=250, seed=4))
            j = trace.event_set.ids.index("L3_TCM")
            benign = [m[j] for pid, m in per_pid_mean_deltas(trace).items() if not trace.processes[pid].malicious]
            means[load] = np.mean(benign)
        assert means[Load.FL] >= means[Load.AL] >= means[Load.NL]

    def test_noise_scale_ordering(self):
        assert (
            LOAD_CONDITIONS[Load.NL].noise_scale
            < LOAD_CONDITIONS[Load.AL].noise_scale
            < LOAD_CONDITIONS[Load.FL].noise_scale
        )

    def test_load_grows_benign_population(self):
        nl = generate_trace(SimConfig(profile="spectre", load=Load.NL, duration_windows=5, seed=0))
        fl = generate_trace(SimConfig(profile="spectre", load=Load.FL, duration_windows=5, seed=0))
        count = lambda t: sum(1 for c in t.processes.values() if not c.malicious)
        assert count(fl) > count(nl)


class TestBuiltinProfiles:
    def test_benign_spectre_ratio(self):
        p = builtin_profile(ProcessCategory.BENIGN, Profile.SPECTRE)
        assert p.mean("BR_MSP") / p.mean("BR_INS") <= BENIGN_MSP_RATIO_MAX

    def test_spectre_v1_ratio(self):
        p = builtin_profile(ProcessCategory.SPECTRE_V1, Profile.SPECTRE)
        assert p.mean("BR_MSP") / p.mean("BR_INS") >= ATTACK_MSP_RATIO_MIN

    def test_profile_mismatch_rejected(self):
        with pytest.raises(ConfigurationError):
            builtin_profile(ProcessCategory.MELTDOWN, Profile.SPECTRE)
        with pytest.raises(ConfigurationError):
            builtin_profile(ProcessCategory.SPECTRE_V1, Profile.MELTDOWN)

    @pytest.mark.parametrize(
        "category,profile",
        [
            (ProcessCategory.BENIGN, Profile.SPECTRE),
            (ProcessCategory.BENIGN, Profile.MELTDOWN),
            (ProcessCategory.SPECTRE_V1, Profile.SPECTRE),
            (ProcessCategory.SPECTRE_V2, Profile.SPECTRE),
            (ProcessCategory.MELTDOWN, Profile.MELTDOWN),
        ],
    )
    def test_builtin_profiles_satisfy_invariants(self, category, profile):
        assert builtin_profile(category, profile).violations(profile) == []

    def test_attack_workload_not_above_benign(self):
        # attack loops retire fewer instructions than benign work
        for cat, prof in [
            (ProcessCategory.SPECTRE_V1, Profile.SPECTRE),
            (ProcessCategory.SPECTRE_V2, Profile.SPECTRE),
            (ProcessCategory.MELTDOWN, Profile.MELTDOWN),
        ]:
            attack = builtin_profile(cat, prof)
            benign = builtin_profile(ProcessCategory.BENIGN, prof)
            assert attack.mean("TOT_INS") <= benign.mean("TOT_INS")


class TestPerturbRates:
    def test_zero_jitter_identity(self):
        p = builtin_profile(ProcessCategory.BENIGN, Profile.SPECTRE)
        assert perturb_rates(p, 0.0, seed=5) == p

    def test_deterministic(self):
        p = builtin_profile(ProcessCategory.BENIGN, Profile.SPECTRE)
        assert perturb_rates(p, 0.2, seed=9) == perturb_rates(p, 0.2, seed=9)

    def test_jitter_out_of_range(self):
        p = builtin_profile(ProcessCategory.BENIGN, Profile.SPECTRE)
        with pytest.raises(ConfigurationError):
            perturb_rates(p, 0.6, seed=1)
        with pytest.raises(ConfigurationError):
            perturb_rates(p, -0.1, seed=1)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**31), jitter=st.floats(0.0, 0.5))
    def test_perturbed_profiles_keep_invariants(self, seed, jitter):
        for cat, prof in [
            (ProcessCategory.BENIGN, Profile.SPECTRE),
            (ProcessCategory.SPECTRE_V1, Profile.SPECTRE),
            (ProcessCategory.MELTDOWN, Profile.MELTDOWN),
        ]:
            perturbed = perturb_rates(builtin_profile(cat, prof), jitter, seed)
            assert perturbed.violations(prof) == []

    def test_perturbed_benign_ratio_clamped(self):
        base = builtin_profile(ProcessCategory.BENIGN, Profile.SPECTRE)
        for seed in range(30):
            p = perturb_rates(base, 0.5, seed)
            assert p.mean("BR_MSP") / p.mean("BR_INS") <= BENIGN_MSP_RATIO_MAX + 1e-12


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kwargs,name",
        [
            (dict(n_benign=0), "n_benign"),
            (dict(duration_windows=0), "duration_windows"),
            (dict(counter_noise=0.2), "counter_noise"),
            (dict(window_ms=0), "window_ms"),
            (dict(n_attack=-1), "n_attack"),
            (dict(attack=ProcessCategory.MELTDOWN), "category"),
        ],
    )
    def test_invalid_config_names_field(self, kwargs, name):
        cfg = SimConfig(profile="spectre", **kwargs)
        with pytest.raises(ConfigurationError, match=name):
            generate_trace(cfg)


class TestCounterNoise:
    @settings(max_examples=100, deadline=None)
    @given(
        counts=st.lists(st.integers(0, 10_000_000), min_size=1, max_size=30),
        c=st.floats(0.0, 0.10),
        seed=st.integers(0, 2**31),
    )
    def test_noise_stays_within_bound(self, counts, c, seed):
        pre = np.array(counts, dtype=np.int64).reshape(-1, 1)
        rng = np.random.default_rng(seed)
        noised = _apply_counter_noise(pre, rng, c)
        assert np.all(noised >= 0)
        assert np.all(noised >= np.ceil(pre * (1 - c) - 1e-9))
        assert np.all(noised <= np.floor(pre * (1 + c) + 1e-9))

    def test_zero_noise_identity(self):
        pre = np.arange(50, dtype=np.int64).reshape(-1, 5)
        out = _apply_counter_noise(pre, np.random.default_rng(0), 0.0)
        assert np.array_equal(out, pre)


class TestTraceShape:
    def test_samples_per_process(self):
        cfg = SimConfig(profile="spectre", duration_windows=100, seed=0)
        trace = generate_trace(cfg)
        counts = {}
        for s in trace.samples:
            counts[s.pid] = counts.get(s.pid, 0) + 1
        assert set(counts.values()) == {100}
        assert len(trace.processes) == 4  # 3 benign + 1 attack at NL

    def test_generated_trace_passes_validation(self):
        trace = generate_trace(SimConfig(profile="meltdown", load=Load.FL, duration_windows=50, seed=13))
        assert validate_trace(trace) == []

    def test_benign_only_trace(self):
        trace = generate_trace(SimConfig(profile="spectre", n_attack=0, duration_windows=30, seed=2))
        assert all(not c.malicious for c in trace.processes.values())
