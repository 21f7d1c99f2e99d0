"""Synthetic labeled counter traces with attack-like magnitude signatures.

Each process draws per-window event counts from a negative-binomial-like
model (mean + coefficient of variation). Attack behavior is expressed purely
through magnitudes: spectre processes mispredict a large fraction of their
branches and miss the L3 far more often per instruction than benign code;
meltdown processes additionally fault at page granularity orders of magnitude
above benign rates. Absolute rates are free parameters; only the ratio
relations encoded in the profile invariants are contractual.

System load (NL/AL/FL) acts three ways:
  * extra benign processes (population multiplier),
  * additive contention on every process's cache events,
  * a growing rate of transient behavior shifts: benign processes
    occasionally emit attack-like windows (shared cache/branch-predictor
    pollution) and attack processes occasionally emit benign-like windows
    (descheduling and non-attack phases). These shifts are what make the
    two classes genuinely overlap under load; without them every classifier
    stays at ~100% accuracy regardless of load.

Generation is a pure function of SimConfig, including its seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError
from .events import (
    CounterSample,
    EventSet,
    Load,
    Trace,
    ProcessCategory,
    Profile,
    make_event_set,
)

# Ratio bounds that separate benign from attack profiles. Attack cache-miss
# intensity must sit at least 10x above the benign ceiling.
BENIGN_MSP_RATIO_MAX = 0.05
ATTACK_MSP_RATIO_MIN = 0.5
BENIGN_MISS_PER_INS_MAX = 0.006
ATTACK_MISS_PER_INS_MIN = 10.0 * BENIGN_MISS_PER_INS_MAX
BENIGN_PAGE_FAULT_MEAN = 120.0
ATTACK_PAGE_FAULT_FACTOR_MIN = 10.0


@dataclass(frozen=True)
class EventRate:
    """Mean window delta and dispersion (cv = stddev/mean) for one event."""

    mean: float
    cv: float


@dataclass(frozen=True)
class BehaviorProfile:
    """Per-event rate model for one process category."""

    category: ProcessCategory
    rates: dict[str, EventRate]

    def mean(self, event_id: str) -> float:
        return self.rates[event_id].mean

    def violations(self, profile: Profile) -> list[str]:
        """Check the cross-event ratio invariants for this category."""
        out = []
        for eid, r in self.rates.items():
            if r.mean < 0:
                out.append(f"{eid}: negative mean {r.mean}")
            if r.cv < 0:
                out.append(f"{eid}: negative cv {r.cv}")
        miss_per_ins = self.mean("L3_TCM") / max(self.mean("TOT_INS"), 1e-12)
        if self.category is ProcessCategory.BENIGN:
            if profile is Profile.SPECTRE:
                ratio = self.mean("BR_MSP") / max(self.mean("BR_INS"), 1e-12)
                if ratio > BENIGN_MSP_RATIO_MAX:
                    out.append(f"benign BR_MSP/BR_INS {ratio:.4f} > {BENIGN_MSP_RATIO_MAX}")
            if miss_per_ins > BENIGN_MISS_PER_INS_MAX:
                out.append(f"benign L3_TCM/TOT_INS {miss_per_ins:.5f} > {BENIGN_MISS_PER_INS_MAX}")
        else:
            if profile is Profile.SPECTRE:
                ratio = self.mean("BR_MSP") / max(self.mean("BR_INS"), 1e-12)
                if ratio < ATTACK_MSP_RATIO_MIN:
                    out.append(f"attack BR_MSP/BR_INS {ratio:.4f} < {ATTACK_MSP_RATIO_MIN}")
            if miss_per_ins < ATTACK_MISS_PER_INS_MIN:
                out.append(f"attack L3_TCM/TOT_INS {miss_per_ins:.5f} < {ATTACK_MISS_PER_INS_MIN}")
            if profile is Profile.MELTDOWN:
                floor = ATTACK_PAGE_FAULT_FACTOR_MIN * BENIGN_PAGE_FAULT_MEAN
                if self.mean("PAGE_FAULTS") < floor:
                    out.append(f"attack PAGE_FAULTS mean {self.mean('PAGE_FAULTS'):.1f} < {floor}")
        return out


# Base rates per 100 ms window. Benign code retires many instructions with a
# low misprediction fraction and a low L3 miss density; attack loops retire
# fewer instructions but flush/probe the cache and (for spectre) mistrain the
# predictor continuously.
_BENIGN_SPECTRE = {
    "L3_TCM": EventRate(4_000, 0.35),
    "L3_TCA": EventRate(40_000, 0.30),
    "BR_INS": EventRate(400_000, 0.25),
    "BR_MSP": EventRate(8_000, 0.35),
    "TOT_INS": EventRate(2_000_000, 0.25),
}
_BENIGN_MELTDOWN = {
    "L3_TCM": EventRate(4_000, 0.35),
    "L3_TCA": EventRate(40_000, 0.30),
    "PAGE_FAULTS": EventRate(BENIGN_PAGE_FAULT_MEAN, 0.50),
    "TOT_INS": EventRate(2_000_000, 0.25),
}
_SPECTRE_V1 = {
    "L3_TCM": EventRate(110_000, 0.30),
    "L3_TCA": EventRate(220_000, 0.25),
    "BR_INS": EventRate(300_000, 0.20),
    "BR_MSP": EventRate(180_000, 0.25),
    "TOT_INS": EventRate(800_000, 0.20),
}
_SPECTRE_V2 = {
    "L3_TCM": EventRate(95_000, 0.30),
    "L3_TCA": EventRate(200_000, 0.25),
    "BR_INS": EventRate(250_000, 0.20),
    "BR_MSP": EventRate(140_000, 0.25),
    "TOT_INS": EventRate(900_000, 0.20),
}
_MELTDOWN = {
    "L3_TCM": EventRate(90_000, 0.30),
    "L3_TCA": EventRate(190_000, 0.25),
    "PAGE_FAULTS": EventRate(4_000, 0.30),
    "TOT_INS": EventRate(700_000, 0.20),
}

_BUILTIN = {
    (ProcessCategory.BENIGN, Profile.SPECTRE): _BENIGN_SPECTRE,
    (ProcessCategory.BENIGN, Profile.MELTDOWN): _BENIGN_MELTDOWN,
    (ProcessCategory.SPECTRE_V1, Profile.SPECTRE): _SPECTRE_V1,
    (ProcessCategory.SPECTRE_V2, Profile.SPECTRE): _SPECTRE_V2,
    (ProcessCategory.MELTDOWN, Profile.MELTDOWN): _MELTDOWN,
}


def builtin_profile(category: ProcessCategory | str, profile: Profile | str) -> BehaviorProfile:
    """Return the built-in rate model for a (category, profile) pair."""
    category = ProcessCategory(category)
    profile = Profile(profile)
    rates = _BUILTIN.get((category, profile))
    if rates is None:
        raise ConfigurationError(f"category {category.value!r} is not defined under the {profile.value!r} profile")
    return BehaviorProfile(category=category, rates=dict(rates))


def _clamp_invariants(rates: dict[str, EventRate], category: ProcessCategory, profile: Profile) -> dict[str, EventRate]:
    """Re-clamp jittered means so the category's ratio invariants still hold."""
    r = dict(rates)

    def set_mean(eid: str, mean: float) -> None:
        r[eid] = EventRate(mean, r[eid].cv)

    tot = r["TOT_INS"].mean
    if category is ProcessCategory.BENIGN:
        if profile is Profile.SPECTRE:
            cap = BENIGN_MSP_RATIO_MAX * r["BR_INS"].mean
            if r["BR_MSP"].mean > cap:
                set_mean("BR_MSP", cap)
        set_mean("L3_TCM", min(r["L3_TCM"].mean, BENIGN_MISS_PER_INS_MAX * tot, r["L3_TCA"].mean))
    else:
        if profile is Profile.SPECTRE:
            lo = ATTACK_MSP_RATIO_MIN * r["BR_INS"].mean
            hi = 0.95 * r["BR_INS"].mean
            set_mean("BR_MSP", min(max(r["BR_MSP"].mean, lo), hi))
        if profile is Profile.MELTDOWN:
            floor = ATTACK_PAGE_FAULT_FACTOR_MIN * BENIGN_PAGE_FAULT_MEAN
            set_mean("PAGE_FAULTS", max(r["PAGE_FAULTS"].mean, floor))
        set_mean("L3_TCM", max(r["L3_TCM"].mean, ATTACK_MISS_PER_INS_MIN * tot))
        set_mean("L3_TCA", max(r["L3_TCA"].mean, r["L3_TCM"].mean))
    return r


def perturb_rates(profile: BehaviorProfile, jitter: float, seed: int) -> BehaviorProfile:
    """Jitter every event mean by an independent factor in [1-jitter, 1+jitter].

    Produces distinct process instances of one category; invariants are
    re-clamped afterwards so a perturbed profile is always valid.
    """
    if not 0.0 <= jitter <= 0.5:
        raise ConfigurationError(f"jitter must be in [0, 0.5], got {jitter}")
    if jitter == 0.0:
        return profile
    rng = np.random.default_rng(seed)
    eids = sorted(profile.rates)
    factors = rng.uniform(1.0 - jitter, 1.0 + jitter, size=len(eids))
    rates = {eid: EventRate(profile.rates[eid].mean * f, profile.rates[eid].cv) for eid, f in zip(eids, factors)}
    event_profile = Profile.SPECTRE if "BR_INS" in rates else Profile.MELTDOWN
    return BehaviorProfile(category=profile.category, rates=_clamp_invariants(rates, profile.category, event_profile))


@dataclass(frozen=True)
class LoadCondition:
    """Background system load level.

    noise_scale multiplies the benign-process population, the additive
    contention on every process's cache events, and the rate of transient
    behavior shifts.
    """

    name: Load
    noise_scale: float


LOAD_CONDITIONS: dict[Load, LoadCondition] = {
    Load.NL: LoadCondition(Load.NL, 0.0),
    Load.AL: LoadCondition(Load.AL, 1.0),
    Load.FL: LoadCondition(Load.FL, 2.0),
}

# Contention added per unit noise_scale to cache-event means (counts/window).
_CACHE_CONTENTION_MEAN = {"L3_TCM": 3_000.0, "L3_TCA": 15_000.0}
_CONTENTION_CV = 0.5

# Transient-shift rates per window as functions of noise_scale: isolated
# single-window shifts plus, under load, multi-window episodes whose length
# is drawn uniformly from [8, 20].
_EPISODE_LEN = (8, 20)


def _shift_rates(noise_scale: float, attack: bool) -> tuple[float, float]:
    if attack:  # benign-like lulls in the attack process
        return 0.002 + 0.002 * noise_scale, 0.00025 * noise_scale
    return 0.002 + 0.005 * noise_scale, 0.0005 * noise_scale  # attack-like bursts


@dataclass(frozen=True)
class SimConfig:
    """Full specification of one synthetic trace; generation is pure in this."""

    profile: Profile
    load: Load = Load.NL
    n_benign: int = 3
    n_attack: int = 1
    duration_windows: int = 100
    window_ms: int = 100
    seed: int = 0
    counter_noise: float = 0.03
    attack: ProcessCategory | None = None

    def __post_init__(self):
        object.__setattr__(self, "profile", Profile(self.profile))
        object.__setattr__(self, "load", Load(self.load))
        if self.attack is not None:
            object.__setattr__(self, "attack", ProcessCategory(self.attack))

    def attack_category(self) -> ProcessCategory:
        if self.attack is not None:
            return self.attack
        return ProcessCategory.SPECTRE_V1 if self.profile is Profile.SPECTRE else ProcessCategory.MELTDOWN

    def validate(self) -> None:
        if self.n_benign < 1:
            raise ConfigurationError(f"n_benign must be >= 1, got {self.n_benign}")
        if self.n_attack < 0:
            raise ConfigurationError(f"n_attack must be >= 0, got {self.n_attack}")
        if self.duration_windows < 1:
            raise ConfigurationError(f"duration_windows must be >= 1, got {self.duration_windows}")
        if self.window_ms < 1:
            raise ConfigurationError(f"window_ms must be >= 1, got {self.window_ms}")
        if not 0.0 <= self.counter_noise <= 0.10:
            raise ConfigurationError(f"counter_noise must be in [0, 0.10], got {self.counter_noise}")
        cat = self.attack_category()
        if self.profile is Profile.SPECTRE and cat not in (ProcessCategory.SPECTRE_V1, ProcessCategory.SPECTRE_V2):
            raise ConfigurationError(f"attack category {cat.value!r} invalid for profile 'spectre'")
        if self.profile is Profile.MELTDOWN and cat is not ProcessCategory.MELTDOWN:
            raise ConfigurationError(f"attack category {cat.value!r} invalid for profile 'meltdown'")


def _draw_counts(rng: np.random.Generator, rate: EventRate, n: int) -> np.ndarray:
    """Draw n counts with the given mean/cv; NB when overdispersed, else Poisson."""
    m = rate.mean
    if m <= 0:
        return np.zeros(n, dtype=np.int64)
    var = (rate.cv * m) ** 2
    if var <= m:
        return rng.poisson(m, size=n).astype(np.int64)
    p = m / var
    shape = m * p / (1.0 - p)
    return rng.negative_binomial(shape, p, size=n).astype(np.int64)


def _draw_shift_states(rng: np.random.Generator, n: int, iso_rate: float, ep_rate: float) -> np.ndarray:
    """Mark windows whose behavior is shifted to the other class's profile."""
    u = rng.random(n)
    lengths = rng.integers(_EPISODE_LEN[0], _EPISODE_LEN[1] + 1, size=n)
    shifted = np.zeros(n, dtype=bool)
    w = 0
    while w < n:
        if u[w] < ep_rate:
            shifted[w : w + int(lengths[w])] = True
            w += int(lengths[w])
        else:
            if u[w] < ep_rate + iso_rate:
                shifted[w] = True
            w += 1
    return shifted


def _apply_counter_noise(counts: np.ndarray, rng: np.random.Generator, c: float) -> np.ndarray:
    """Multiplicative measurement noise; each delta stays within [1-c, 1+c] of its pre-noise value."""
    if c == 0.0:
        return counts
    pre = counts.astype(np.float64)
    u = rng.uniform(1.0 - c, 1.0 + c, size=counts.shape)
    lo = np.ceil(pre * (1.0 - c) - 1e-9)
    hi = np.floor(pre * (1.0 + c) + 1e-9)
    return np.clip(np.rint(pre * u), lo, hi).astype(np.int64)


def _simulate_deltas(
    rng: np.random.Generator,
    own: BehaviorProfile,
    shifted_target: BehaviorProfile,
    event_set: EventSet,
    n: int,
    lc: LoadCondition,
    counter_noise: float,
    is_attack: bool,
) -> np.ndarray:
    """Draw the n per-window delta vectors for one process."""
    iso, ep = _shift_rates(lc.noise_scale, is_attack)
    shifted = _draw_shift_states(rng, n, iso, ep)
    counts = np.zeros((n, len(event_set)), dtype=np.int64)
    for j, eid in enumerate(event_set.ids):
        base = _draw_counts(rng, own.rates[eid], n)
        alt = _draw_counts(rng, shifted_target.rates[eid], n)
        counts[:, j] = np.where(shifted, alt, base)
        contention = lc.noise_scale * _CACHE_CONTENTION_MEAN.get(eid, 0.0)
        if contention > 0.0:
            counts[:, j] += _draw_counts(rng, EventRate(contention, _CONTENTION_CV), n)
    return _apply_counter_noise(counts, rng, counter_noise)


def generate_trace(config: SimConfig) -> Trace:
    """Generate a labeled trace; emits duration_windows cumulative samples per process."""
    config.validate()
    lc = LOAD_CONDITIONS[config.load]
    event_set = make_event_set(config.profile)
    n_benign = max(1, round(config.n_benign * (1.0 + lc.noise_scale)))
    attack_cat = config.attack_category()

    benign_base = builtin_profile(ProcessCategory.BENIGN, config.profile)
    # Burst target for benign processes, even in benign-only traces.
    attack_base = builtin_profile(attack_cat, config.profile)

    processes: dict[int, ProcessCategory] = {}
    specs: list[tuple[int, BehaviorProfile, BehaviorProfile, bool]] = []
    master = np.random.SeedSequence(config.seed)
    n_procs = n_benign + config.n_attack
    children = master.spawn(2 * n_procs)  # per process: one perturb seed, one stream

    for i in range(n_benign):
        pid = i + 1
        processes[pid] = ProcessCategory.BENIGN
        pseed = int(children[2 * i].generate_state(1)[0])
        prof = perturb_rates(benign_base, 0.2, pseed)
        specs.append((pid, prof, attack_base, False))
    for j in range(config.n_attack):
        pid = n_benign + j + 1
        processes[pid] = attack_cat
        pseed = int(children[2 * (n_benign + j)].generate_state(1)[0])
        prof = perturb_rates(attack_base, 0.05, pseed)
        specs.append((pid, prof, benign_base, True))

    n = config.duration_windows
    per_pid_cumulative: dict[int, np.ndarray] = {}
    for idx, (pid, prof, alt, is_attack) in enumerate(specs):
        rng = np.random.default_rng(children[2 * idx + 1])
        deltas = _simulate_deltas(rng, prof, alt, event_set, n, lc, config.counter_noise, is_attack)
        per_pid_cumulative[pid] = np.cumsum(deltas, axis=0)

    samples: list[CounterSample] = []
    for k in range(n):
        t = k * config.window_ms
        for pid, *_ in specs:
            samples.append(CounterSample(pid=pid, t=t, values=tuple(int(v) for v in per_pid_cumulative[pid][k])))

    return Trace(
        event_set=event_set,
        load=config.load,
        window_ms=config.window_ms,
        processes=processes,
        samples=tuple(samples),
    )
