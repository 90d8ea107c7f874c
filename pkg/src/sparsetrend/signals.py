"""Signal container, fit reconstruction, and synthetic test signals.

Index conventions match the dictionary: a level shift "at j" raises samples
j+1..n-1, a knot "at j" bends the trend after sample j (j = 0 is the global
ramp), an outlier "at j" affects sample j only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .dictionary import Kind

__all__ = [
    "Signal",
    "EventKind",
    "Event",
    "Decomposition",
    "SyntheticSpec",
    "reconstruct",
    "generate",
]


@dataclass(eq=False)
class Signal:
    """Observed series.  ``timestamps`` are carried along but never used."""

    values: np.ndarray
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)  # own an immutable copy
        if v.ndim != 1:
            raise ValueError("signal values must be one-dimensional")
        if v.size < 3:
            raise ValueError(f"signal needs at least 3 samples, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("signal values must all be finite")
        v.setflags(write=False)
        self.values = v
        if self.timestamps is not None:
            ts = np.asarray(self.timestamps)
            if ts.shape != v.shape:
                raise ValueError("timestamps must match the signal length")
            self.timestamps = ts

    def __len__(self):
        return self.values.size


class EventKind(enum.Enum):
    LEVEL_SHIFT = "level_shift"
    OUTLIER = "outlier"
    KNOT = "knot"
    FREQUENCY = "frequency"


@dataclass(frozen=True)
class Event:
    """One detected (or planted) feature.

    ``location`` is a sample index, except for FREQUENCY events where it is
    the angular frequency; FREQUENCY magnitude is the amplitude
    sqrt(a^2 + b^2) of the combined sine/cosine pair.
    """

    kind: EventKind
    location: float
    magnitude: float

    def __post_init__(self):
        if self.magnitude == 0.0:
            raise ValueError("events must have nonzero magnitude")


@dataclass
class Decomposition:
    """Component series of one fit: fitted = baseline + trend + level + outliers + seasonal."""

    trend: np.ndarray
    level: np.ndarray
    outliers: np.ndarray
    seasonal: np.ndarray
    baseline: float
    fitted: np.ndarray
    events: tuple[Event, ...]


_EVENT_ORDER = {
    EventKind.KNOT: 0,
    EventKind.LEVEL_SHIFT: 1,
    EventKind.OUTLIER: 2,
    EventKind.FREQUENCY: 3,
}


def reconstruct(spec, fit):
    """Expand a FitResult into component series plus an event list."""
    n = spec.n
    t = np.arange(n)
    trend = np.zeros(n)
    level = np.zeros(n)
    outliers = np.zeros(n)
    seasonal = np.zeros(n)
    events = []
    sine_amp, cos_amp = {}, {}
    for c, v in fit.coefficients.entries.items():
        spec.validate_column(c)
        j = c.index
        if c.kind is Kind.SLOPE:
            trend[j + 1 :] += v * (t[j + 1 :] - j)
            events.append(Event(EventKind.KNOT, j, v))
        elif c.kind is Kind.STEP:
            level[j + 1 :] += v
            events.append(Event(EventKind.LEVEL_SHIFT, j, v))
        elif c.kind is Kind.SPIKE:
            outliers[j] += v
            events.append(Event(EventKind.OUTLIER, j, v))
        elif c.kind is Kind.SINE:
            seasonal += v * np.sin(spec.omega[j] * t)
            sine_amp[j] = v
        else:
            seasonal += v * np.cos(spec.omega[j] * t)
            cos_amp[j] = v
    for k in sorted(set(sine_amp) | set(cos_amp)):
        a, b = sine_amp.get(k, 0.0), cos_amp.get(k, 0.0)
        events.append(Event(EventKind.FREQUENCY, spec.omega[k], math.hypot(a, b)))
    events.sort(key=lambda e: (_EVENT_ORDER[e.kind], e.location))
    fitted = fit.baseline + trend + level + outliers + seasonal
    return Decomposition(
        trend=trend,
        level=level,
        outliers=outliers,
        seasonal=seasonal,
        baseline=fit.baseline,
        fitted=fitted,
        events=tuple(events),
    )


@dataclass(frozen=True)
class SyntheticSpec:
    """Ground-truth recipe for a synthetic signal.

    slopes/steps/spikes are (index, magnitude) pairs; sinusoids are
    (omega, sine_amplitude, cosine_amplitude) triples.  Generation is
    reproducible for a given seed.
    """

    n: int
    slopes: tuple = ()
    steps: tuple = ()
    spikes: tuple = ()
    sinusoids: tuple = ()
    noise_sigma: float = 0.0
    seed: int = 0
    baseline: float = 0.0

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("n must be at least 3")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        for name, items, hi in (
            ("slope", self.slopes, self.n - 2),
            ("step", self.steps, self.n - 2),
            ("spike", self.spikes, self.n - 1),
        ):
            for j, mag in items:
                if not 0 <= j <= hi:
                    raise ValueError(f"{name} index {j} out of range [0, {hi}]")
                if mag == 0.0:
                    raise ValueError(f"planted {name} at {j} has zero magnitude")
        for w, a, b in self.sinusoids:
            if not 0.0 < w <= math.pi:
                raise ValueError(f"sinusoid frequency {w} outside (0, pi]")
            if a == 0.0 and b == 0.0:
                raise ValueError(f"sinusoid at {w} has zero amplitude")
        object.__setattr__(self, "slopes", tuple((int(j), float(m)) for j, m in self.slopes))
        object.__setattr__(self, "steps", tuple((int(j), float(m)) for j, m in self.steps))
        object.__setattr__(self, "spikes", tuple((int(j), float(m)) for j, m in self.spikes))
        object.__setattr__(
            self, "sinusoids", tuple((float(w), float(a), float(b)) for w, a, b in self.sinusoids)
        )


def generate(spec):
    """Build (noisy Signal, clean ground-truth Decomposition) from a recipe."""
    n = spec.n
    t = np.arange(n)
    trend = np.zeros(n)
    level = np.zeros(n)
    outliers = np.zeros(n)
    seasonal = np.zeros(n)
    events = []
    for j, mag in spec.slopes:
        trend[j + 1 :] += mag * (t[j + 1 :] - j)
        events.append(Event(EventKind.KNOT, j, mag))
    for j, mag in spec.steps:
        level[j + 1 :] += mag
        events.append(Event(EventKind.LEVEL_SHIFT, j, mag))
    for j, mag in spec.spikes:
        outliers[j] += mag
        events.append(Event(EventKind.OUTLIER, j, mag))
    for w, a, b in spec.sinusoids:
        seasonal += a * np.sin(w * t) + b * np.cos(w * t)
        events.append(Event(EventKind.FREQUENCY, w, math.hypot(a, b)))
    events.sort(key=lambda e: (_EVENT_ORDER[e.kind], e.location))
    clean = spec.baseline + trend + level + outliers + seasonal
    rng = np.random.default_rng(spec.seed)
    noisy = clean + spec.noise_sigma * rng.standard_normal(n)
    truth = Decomposition(
        trend=trend,
        level=level,
        outliers=outliers,
        seasonal=seasonal,
        baseline=spec.baseline,
        fitted=clean,
        events=tuple(events),
    )
    return Signal(noisy), truth
