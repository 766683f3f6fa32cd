"""Labeled vibration windows: resampling, CSV ingestion, synthetic signals.

Long acceleration records are cut into fixed-length windows at a stride;
a stride below the window length overlaps neighbouring windows (delay
sampling), which acts as cheap data enhancement. CSV files carry one
window per row: an integer label followed by exactly the window's samples.

A parametric impulse-train generator stands in for measured bearing data
in desk-scale runs: each fault class is an exponentially decaying
resonance rung repeatedly at the class's characteristic frequency, plus
gaussian noise. Severity variants of a fault mode share the repetition
frequency and differ in impulse amplitude and decay.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

DEFAULT_WINDOW = 2048


@dataclass(frozen=True)
class LabeledWindow:
    samples: np.ndarray     # (window_length,) float32
    label: int
    source_id: str = ""


@dataclass
class ResampleConfig:
    window_length: int = DEFAULT_WINDOW
    stride: int = DEFAULT_WINDOW

    def validate(self):
        if self.window_length < 1:
            raise ConfigError(f"window_length must be >= 1, got {self.window_length}")
        if not 1 <= self.stride <= self.window_length:
            raise ConfigError(
                f"stride must be in [1, window_length={self.window_length}], got {self.stride}"
            )
        return self


@dataclass
class DatasetSplit:
    train: list[LabeledWindow]
    test: list[LabeledWindow]
    split_seed: int


def resample_windows(signal, config: ResampleConfig, label: int,
                     source_id: str = "") -> list[LabeledWindow]:
    """Cut a long record into windows starting at 0, stride, 2*stride, ...

    Yields floor((len - window_length) / stride) + 1 windows; adjacent
    windows share window_length - stride samples.
    """
    config.validate()
    signal = np.asarray(signal, dtype=np.float32).reshape(-1)
    w, s = config.window_length, config.stride
    if signal.size < w:
        raise DataError(f"signal of length {signal.size} is shorter than window {w}")
    count = (signal.size - w) // s + 1
    return [
        LabeledWindow(samples=signal[i * s:i * s + w].copy(), label=label,
                      source_id=f"{source_id}[{i * s}:{i * s + w}]")
        for i in range(count)
    ]


def split_train_test(windows, n_train: int, n_test: int, seed: int) -> DatasetSplit:
    """Seeded uniform draw without replacement; leftover windows are dropped."""
    windows = list(windows)
    if n_train < 0 or n_test < 0:
        raise ConfigError("split sizes must be non-negative")
    if n_train + n_test > len(windows):
        raise DataError(
            f"cannot split {len(windows)} windows into {n_train} train + {n_test} test"
        )
    order = np.random.default_rng(seed).permutation(len(windows))
    train = [windows[i] for i in order[:n_train]]
    test = [windows[i] for i in order[n_train:n_train + n_test]]
    return DatasetSplit(train=train, test=test, split_seed=seed)


# ---------------------------------------------------------------------------
# CSV format: UTF-8, comma-delimited, one window per row as
# "label,s0,s1,...", optional comment/header lines starting with '#'.


def load_csv(path, length: int | None = None, label_policy: str = "first",
             n_class: int | None = None) -> list[LabeledWindow]:
    if label_policy not in ("first", "last"):
        raise ConfigError(f"label_policy must be 'first' or 'last', got {label_policy!r}")
    windows: list[LabeledWindow] = []
    expected = length
    try:
        fh = open(path, "r", encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"dataset file not found: {path}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.split(",")
            raw_label = cells[0] if label_policy == "first" else cells[-1]
            values = cells[1:] if label_policy == "first" else cells[:-1]
            try:
                label = int(raw_label)
            except ValueError:
                raise DataError(f"{path}:{lineno}: label {raw_label!r} is not an integer") from None
            if label < 0 or (n_class is not None and label >= n_class):
                raise DataError(f"{path}:{lineno}: label {label} out of range")
            if expected is None:
                expected = len(values)
                if expected == 0:
                    raise DataError(f"{path}:{lineno}: row has a label but no samples")
            if len(values) != expected:
                raise DataError(
                    f"{path}:{lineno}: row has {len(values)} samples, expected {expected}"
                )
            try:
                samples = np.array([float(v) for v in values], dtype=np.float32)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric sample value") from None
            windows.append(LabeledWindow(samples=samples, label=label,
                                         source_id=f"{path}:{lineno}"))
    if not windows:
        warnings.warn(f"{path} holds no data rows", stacklevel=2)
    return windows


def write_csv(windows, path, comment: str | None = None):
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        for w in windows:
            fh.write(str(int(w.label)))
            fh.write(",")
            fh.write(",".join(repr(float(v)) for v in w.samples))
            fh.write("\n")


# ---------------------------------------------------------------------------
# synthetic impulse-train generator


@dataclass(frozen=True)
class ClassSpec:
    """One fault class: impulses at rep_hz ringing a resonance at res_hz."""
    rep_hz: float
    res_hz: float
    decay: float        # 1/s envelope rate of each impulse
    amplitude: float
    noise_std: float


@dataclass
class SyntheticSpec:
    sample_rate: float = 12_000.0
    classes: list[ClassSpec] = field(default_factory=list)

    def validate(self):
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")
        nyquist = self.sample_rate / 2
        seen = set()
        for i, c in enumerate(self.classes):
            if not (0 < c.rep_hz < nyquist and 0 < c.res_hz < nyquist):
                raise ConfigError(
                    f"class {i}: frequencies must lie in (0, {nyquist}), got "
                    f"rep={c.rep_hz}, res={c.res_hz}"
                )
            key = (c.rep_hz, c.res_hz, c.decay, c.amplitude, c.noise_std)
            if key in seen:
                raise ConfigError(f"class {i} duplicates another class's parameters")
            seen.add(key)
        return self


def default_synthetic_spec() -> SyntheticSpec:
    """Ten classes: normal condition plus inner-race / outer-race / ball
    faults at three severities each. Modes differ by repetition frequency,
    severities by impulse amplitude and decay."""
    classes = [ClassSpec(rep_hz=30.0, res_hz=500.0, decay=300.0, amplitude=0.0, noise_std=0.25)]
    for rep, res in ((162.0, 3500.0), (107.0, 2800.0), (141.0, 4200.0)):  # IR, OR, RB
        for amp, decay in ((1.2, 500.0), (2.5, 1200.0), (5.0, 2800.0)):   # mild..severe
            classes.append(ClassSpec(rep_hz=rep, res_hz=res, decay=decay,
                                     amplitude=amp, noise_std=0.25))
    return SyntheticSpec(classes=classes)


def _impulse_train(spec: ClassSpec, n: int, sample_rate: float,
                   rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n, dtype=np.float64) / sample_rate
    out = np.zeros(n, dtype=np.float64)
    if spec.amplitude != 0.0:
        period = 1.0 / spec.rep_hz
        offset = rng.uniform(0.0, period)      # random start of the train
        phase = rng.uniform(0.0, 2.0 * np.pi)  # carrier phase, shared by all impulses
        k = 0
        while True:
            t0 = offset + k * period
            if t0 >= t[-1]:
                break
            tau = t - t0
            live = tau >= 0.0
            out[live] += spec.amplitude * np.exp(-spec.decay * tau[live]) * np.sin(
                2.0 * np.pi * spec.res_hz * tau[live] + phase)
            k += 1
    if spec.noise_std > 0.0:
        out += rng.normal(0.0, spec.noise_std, size=n)
    return out.astype(np.float32)


def generate_synthetic(spec: SyntheticSpec, n_per_class: int, seed: int,
                       length: int = DEFAULT_WINDOW) -> list[LabeledWindow]:
    """Balanced labeled windows, bit-reproducible for a given seed."""
    spec.validate()
    rng = np.random.default_rng(seed)
    windows = []
    for label, cls in enumerate(spec.classes):
        for i in range(n_per_class):
            samples = _impulse_train(cls, length, spec.sample_rate, rng)
            windows.append(LabeledWindow(samples=samples, label=label,
                                         source_id=f"synth:c{label}:{i}"))
    return windows


# ---------------------------------------------------------------------------
# model-facing arrays


def standardize(x: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """Per-row zero mean / unit variance; applied to every window before it
    reaches the tokenizer."""
    x = np.asarray(x, dtype=np.float32)
    mu = x.mean(axis=-1, keepdims=True)
    sd = x.std(axis=-1, keepdims=True)
    return (x - mu) / (sd + eps)


def windows_to_arrays(windows, normalize: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Stack windows into (X, y); X standardized per window unless told not to."""
    windows = list(windows)
    if not windows:
        return np.zeros((0, 0), dtype=np.float32), np.zeros(0, dtype=np.int64)
    lengths = {w.samples.shape[0] for w in windows}
    if len(lengths) != 1:
        raise DataError(f"windows have mixed lengths {sorted(lengths)}")
    x = np.stack([w.samples for w in windows]).astype(np.float32)
    y = np.array([w.label for w in windows], dtype=np.int64)
    if normalize:
        x = standardize(x)
    return x, y
