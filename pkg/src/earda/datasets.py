"""Dataset ingestion, harmonization, splitting and synthetic benchmark data.

Canonical recordings (one CSV schema for every source) are the single
ingestion boundary; per-corpus adapters translate the published layouts of
the four public smartphone corpora into it. Windows carry an activity label,
a source/target domain tag and a head-movement condition, and serialize to a
self-describing CSV tensor file.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np

from . import signal as sig
from .signal import RawRecording

log = logging.getLogger(__name__)

WINDOW_LENGTH = 100
TARGET_RATE_HZ = 25.0

CANONICAL_HEADER = [
    "t", "ax", "ay", "az", "gx", "gy", "gz",
    "activity", "head_movement", "location", "accel_unit",
]
CANONICAL_ACTIVITIES = ("walking", "upstairs", "standing", "jogging", "other")
CANONICAL_HEAD = ("slight", "random", "roll", "yaw", "pitch", "none")


class SchemaError(ValueError):
    """File does not match the canonical column schema."""


class DataError(ValueError):
    """File matches the schema but carries inconsistent data."""


class LabelError(ValueError):
    """Annotation outside the canonical vocabulary."""


class CorpusFormatError(ValueError):
    """Public-corpus directory does not match its published layout."""


class ShortageError(ValueError):
    """A class has fewer windows than a sampling request needs."""


class ConfigError(ValueError):
    """Generator settings outside their valid ranges."""


class ActivityLabel(IntEnum):
    Walking = 0
    Upstairs = 1
    Standing = 2
    Jogging = 3


class HeadMovement(Enum):
    Slight = "slight"
    Random = "random"
    Roll = "roll"
    Yaw = "yaw"
    Pitch = "pitch"
    NONE = "none"  # reserved for recordings not worn on the head


class DomainTag(IntEnum):
    Source = 0
    Target = 1


@dataclass
class LabeledWindow:
    """A 100x2 magnitude sequence: column 0 acceleration magnitude in g,
    column 1 angular-rate magnitude in rad/s."""

    data: np.ndarray
    label: ActivityLabel
    domain: DomainTag
    head: HeadMovement = HeadMovement.NONE
    origin: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (WINDOW_LENGTH, 2):
            raise DataError(f"window data must be ({WINDOW_LENGTH}, 2), got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise DataError("window data contains non-finite values")
        if np.any(self.data[:, 0] < 0):
            raise DataError("acceleration-magnitude channel must be non-negative")
        self.label = ActivityLabel(self.label)
        self.domain = DomainTag(self.domain)
        self.head = HeadMovement(self.head)


@dataclass
class SplitSpec:
    train_frac: float
    val_frac: float
    test_frac: float
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f < 0 for f in fracs):
            raise ValueError("split fractions must be non-negative")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fracs)}")


# ---------------------------------------------------------------------------
# canonical recording files
# ---------------------------------------------------------------------------

def save_canonical(rec: RawRecording, path) -> None:
    """Write a recording in the canonical CSV schema."""
    n = len(rec)
    act = rec.activity if rec.activity is not None else ["other"] * n
    head = rec.head_movement if rec.head_movement is not None else ["none"] * n
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CANONICAL_HEADER)
        for k in range(n):
            w.writerow([
                repr(float(rec.timestamps[k])),
                *(repr(float(v)) for v in rec.accel[k]),
                *(repr(float(v)) for v in rec.gyro[k]),
                act[k], head[k], rec.location, rec.accel_unit,
            ])


def load_canonical(path) -> RawRecording:
    """Parse a canonical recording CSV.

    The sampling rate is inferred from the median timestamp increment.
    Raises SchemaError for missing columns, DataError for non-monotonic
    timestamps or inconsistent per-row metadata, LabelError for annotation
    strings outside the canonical vocabulary.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        missing = [c for c in CANONICAL_HEADER if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}")
        idx = {c: header.index(c) for c in CANONICAL_HEADER}
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: no data rows")

    def col(name):
        return [r[idx[name]] for r in rows]

    try:
        t = np.array([float(v) for v in col("t")])
        accel = np.column_stack([[float(v) for v in col(c)] for c in ("ax", "ay", "az")])
        gyro = np.column_stack([[float(v) for v in col(c)] for c in ("gx", "gy", "gz")])
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric sample value ({exc})") from None
    if np.any(np.diff(t) < 0):
        raise DataError(f"{path}: timestamps are not monotonically non-decreasing")

    activity = [v.strip().lower() for v in col("activity")]
    bad = sorted(set(activity) - set(CANONICAL_ACTIVITIES))
    if bad:
        raise LabelError(f"{path}: unknown activity string(s) {bad}")
    head = [v.strip().lower() for v in col("head_movement")]
    bad = sorted(set(head) - set(CANONICAL_HEAD))
    if bad:
        raise LabelError(f"{path}: unknown head_movement string(s) {bad}")

    locations = set(col("location"))
    units = set(col("accel_unit"))
    if len(locations) != 1 or len(units) != 1:
        raise DataError(f"{path}: location/accel_unit must be constant per file")

    if len(t) < 2:
        raise DataError(f"{path}: cannot infer sampling rate from fewer than 2 rows")
    dt = float(np.median(np.diff(t)))
    if dt <= 0:
        raise DataError(f"{path}: zero median timestamp increment")
    rate = 1.0 / dt
    snapped = round(rate)
    if snapped > 0 and abs(rate - snapped) < 1e-6 * snapped:
        rate = float(snapped)  # undo timestamp quantization noise

    return RawRecording(
        timestamps=t,
        accel=accel,
        gyro=gyro,
        rate_hz=rate,
        location=locations.pop(),
        accel_unit=units.pop(),
        activity=np.array(activity, dtype=object),
        head_movement=np.array(head, dtype=object),
        origin=path.stem,
    )


# ---------------------------------------------------------------------------
# label harmonization
# ---------------------------------------------------------------------------

_LABEL_MAP = {
    "walking": ActivityLabel.Walking, "walk": ActivityLabel.Walking,
    "wlk": ActivityLabel.Walking,
    "upstairs": ActivityLabel.Upstairs, "walking upstairs": ActivityLabel.Upstairs,
    "walk upstairs": ActivityLabel.Upstairs, "ups": ActivityLabel.Upstairs,
    "stairsup": ActivityLabel.Upstairs, "stairs up": ActivityLabel.Upstairs,
    "standing": ActivityLabel.Standing, "stand": ActivityLabel.Standing,
    "std": ActivityLabel.Standing,
    "jogging": ActivityLabel.Jogging, "jog": ActivityLabel.Jogging,
}

# activities the corpora contain but the task drops
_KNOWN_DROPS = {
    "downstairs", "walking downstairs", "walk downstairs", "dws", "stairsdown",
    "stairs down", "sitting", "sit", "biking", "bike", "lying", "lying down",
    "laying", "null", "none", "other", "",
}


def harmonize_label(source_label: str):
    """Map a corpus-native activity string onto the four-class vocabulary.

    Returns None for activities outside the task (those windows are dropped);
    unknown strings also return None but log a warning.
    """
    key = str(source_label).strip().lower().replace("_", " ").replace("-", " ")
    if key in _LABEL_MAP:
        return _LABEL_MAP[key]
    if key not in _KNOWN_DROPS:
        log.warning("dropping unknown activity label %r", source_label)
    return None


def canonical_activity_name(source_label: str) -> str:
    lab = harmonize_label(source_label)
    return lab.name.lower() if lab is not None else "other"


# ---------------------------------------------------------------------------
# public-corpus adapters
# ---------------------------------------------------------------------------

_MOTIONSENSE_COLS = [
    "gravity.x", "gravity.y", "gravity.z",
    "rotationRate.x", "rotationRate.y", "rotationRate.z",
    "userAcceleration.x", "userAcceleration.y", "userAcceleration.z",
]


def _adapt_motionsense(root: Path) -> list:
    base = root / "A_DeviceMotion_data"
    if not base.is_dir():
        raise CorpusFormatError(f"{root}: expected A_DeviceMotion_data/ directory")
    recordings = []
    for trial_dir in sorted(p for p in base.iterdir() if p.is_dir()):
        act = canonical_activity_name(trial_dir.name.split("_")[0])
        for f in sorted(trial_dir.glob("sub_*.csv")):
            with open(f, newline="") as fh:
                reader = csv.reader(fh)
                header = [h.strip() for h in next(reader)]
                try:
                    cols = {c: header.index(c) for c in _MOTIONSENSE_COLS}
                except ValueError as exc:
                    raise CorpusFormatError(f"{f}: {exc}") from None
                rows = [[float(r[cols[c]]) for c in _MOTIONSENSE_COLS] for r in reader]
            if not rows:
                continue
            arr = np.array(rows)
            n = arr.shape[0]
            # total acceleration = gravity + user acceleration, both in g
            accel = arr[:, 0:3] + arr[:, 6:9]
            recordings.append(RawRecording(
                timestamps=np.arange(n) / 50.0,
                accel=accel,
                gyro=arr[:, 3:6],
                rate_hz=50.0,
                location="pocket",
                accel_unit="g",
                activity=np.array([act] * n, dtype=object),
                origin=f"motionsense/{trial_dir.name}/{f.stem}",
            ))
    if not recordings:
        raise CorpusFormatError(f"{root}: no MotionSense trials found")
    return recordings


def _read_hhar_file(path: Path) -> dict:
    groups: dict = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        try:
            ci = {c: header.index(c) for c in ("Creation_Time", "x", "y", "z", "User", "Device", "gt")}
        except ValueError as exc:
            raise CorpusFormatError(f"{path}: {exc}") from None
        for r in reader:
            key = (r[ci["User"]], r[ci["Device"]])
            gt = r[ci["gt"]].strip().lower() or "null"
            groups.setdefault(key, []).append(
                (float(r[ci["Creation_Time"]]), float(r[ci["x"]]), float(r[ci["y"]]),
                 float(r[ci["z"]]), gt)
            )
    return groups


def _adapt_hhar(root: Path) -> list:
    acc_path = root / "Phones_accelerometer.csv"
    gyr_path = root / "Phones_gyroscope.csv"
    if not (acc_path.is_file() and gyr_path.is_file()):
        raise CorpusFormatError(
            f"{root}: expected Phones_accelerometer.csv and Phones_gyroscope.csv"
        )
    acc_groups = _read_hhar_file(acc_path)
    gyr_groups = _read_hhar_file(gyr_path)
    recordings = []
    for key in sorted(set(acc_groups) & set(gyr_groups)):
        acc = sorted(acc_groups[key])
        gyr = sorted(gyr_groups[key])
        if len(acc) < 2 or len(gyr) < 2:
            continue
        t_ns = np.array([r[0] for r in acc])
        t = (t_ns - t_ns[0]) / 1e9
        accel = np.array([r[1:4] for r in acc])
        tg = (np.array([r[0] for r in gyr]) - t_ns[0]) / 1e9
        gyro_src = np.array([r[1:4] for r in gyr])
        gyro = np.column_stack([np.interp(t, tg, gyro_src[:, k]) for k in range(3)])
        acts = np.array([canonical_activity_name(r[4]) for r in acc], dtype=object)
        dt = float(np.median(np.diff(t)))
        if dt <= 0:
            continue
        recordings.append(RawRecording(
            timestamps=t,
            accel=accel,
            gyro=gyro,
            rate_hz=1.0 / dt,
            location="waist",
            accel_unit="ms2",
            activity=acts,
            origin=f"hhar/{key[0]}/{key[1]}",
        ))
    if not recordings:
        raise CorpusFormatError(f"{root}: no joint accelerometer/gyroscope sessions found")
    return recordings


_UCIHAR_ACTS = {
    1: "walking", 2: "walking upstairs", 3: "walking downstairs",
    4: "sitting", 5: "standing", 6: "laying",
}


def _adapt_ucihar(root: Path) -> list:
    raw = root / "RawData"
    if not raw.is_dir():
        raise CorpusFormatError(f"{root}: expected RawData/ directory")
    labels_path = raw / "labels.txt"
    if not labels_path.is_file():
        raise CorpusFormatError(f"{root}: missing RawData/labels.txt")
    labels = np.loadtxt(labels_path, ndmin=2)
    recordings = []
    for acc_file in sorted(raw.glob("acc_exp*_user*.txt")):
        tags = acc_file.stem.split("_")
        exp = int(tags[1][3:])
        gyro_file = raw / f"gyro_{tags[1]}_{tags[2]}.txt"
        if not gyro_file.is_file():
            raise CorpusFormatError(f"{root}: missing {gyro_file.name}")
        accel = np.loadtxt(acc_file, ndmin=2)  # total acceleration, units of g
        gyro = np.loadtxt(gyro_file, ndmin=2)
        n = min(accel.shape[0], gyro.shape[0])
        accel, gyro = accel[:n], gyro[:n]
        acts = np.array(["other"] * n, dtype=object)
        for row in labels[labels[:, 0] == exp]:
            start, end = int(row[3]), int(row[4])  # 1-based inclusive rows
            name = canonical_activity_name(_UCIHAR_ACTS.get(int(row[2]), "other"))
            acts[max(start - 1, 0):min(end, n)] = name
        recordings.append(RawRecording(
            timestamps=np.arange(n) / 50.0,
            accel=accel,
            gyro=gyro,
            rate_hz=50.0,
            location="waist",
            accel_unit="g",
            activity=acts,
            origin=f"ucihar/{acc_file.stem}",
        ))
    if not recordings:
        raise CorpusFormatError(f"{root}: no RawData experiment files found")
    return recordings


_SHOAIB_POSITIONS = [
    ("left_pocket", "pocket"), ("right_pocket", "pocket"), ("wrist", "wrist"),
    ("upper_arm", "arm"), ("belt", "belt"),
]
_SHOAIB_BLOCK = 12  # Ax Ay Az Lx Ly Lz Gx Gy Gz Mx My Mz per position


def _adapt_shoaib(root: Path) -> list:
    files = sorted(root.glob("Participant_*.csv"))
    if not files:
        raise CorpusFormatError(f"{root}: no Participant_*.csv files found")
    recordings = []
    expected = 1 + len(_SHOAIB_POSITIONS) * _SHOAIB_BLOCK + 1
    for f in files:
        rows = []
        with open(f, newline="") as fh:
            for r in csv.reader(fh):
                if len(r) < expected:
                    continue
                try:
                    float(r[0])
                except ValueError:
                    continue  # header lines
                rows.append(r)
        if not rows:
            raise CorpusFormatError(f"{f}: no data rows with {expected} columns")
        acts = np.array(
            [canonical_activity_name(r[expected - 1]) for r in rows], dtype=object
        )
        n = len(rows)
        for p, (pos_name, location) in enumerate(_SHOAIB_POSITIONS):
            off = 1 + p * _SHOAIB_BLOCK
            block = np.array([[float(v) for v in r[off:off + _SHOAIB_BLOCK]] for r in rows])
            recordings.append(RawRecording(
                timestamps=np.arange(n) / 50.0,
                accel=block[:, 0:3],
                gyro=block[:, 6:9],
                rate_hz=50.0,
                location=location,
                accel_unit="ms2",
                activity=acts,
                origin=f"shoaib/{f.stem}/{pos_name}",
            ))
    return recordings


_ADAPTERS = {
    "motionsense": _adapt_motionsense,
    "hhar": _adapt_hhar,
    "ucihar": _adapt_ucihar,
    "shoaib": _adapt_shoaib,
}


def adapt_public(source: str, root) -> list:
    """Ingest one public corpus from its published layout.

    source: one of motionsense, hhar, ucihar, shoaib (case-insensitive).
    Returns one RawRecording per subject/session/position with the corpus
    native rate and sensor location recorded.
    """
    key = source.strip().lower()
    if key not in _ADAPTERS:
        raise ValueError(f"unknown corpus {source!r}; expected one of {sorted(_ADAPTERS)}")
    root = Path(root)
    if not root.is_dir():
        raise CorpusFormatError(f"{root}: not a directory")
    return _ADAPTERS[key](root)


# ---------------------------------------------------------------------------
# preprocessing pipeline: recording -> labeled windows
# ---------------------------------------------------------------------------

def preprocess_recording(
    rec: RawRecording,
    filter_spec: sig.FilterSpec | None = None,
    filter_locations: tuple = ("head",),
) -> list:
    """Full conditioning pipeline for one recording.

    Optional per-axis low-pass (by default only for head-worn recordings),
    then magnitude, gravity normalization, resampling to 25 Hz and
    segmentation into 100-sample windows. Mixed-activity windows and windows
    labeled outside the four-class vocabulary are dropped.
    """
    accel, gyro = rec.accel, rec.gyro
    if filter_spec is not None and rec.location in filter_locations:
        accel = np.column_stack(
            [sig.low_pass(accel[:, k], filter_spec, rec.rate_hz) for k in range(3)]
        )
        gyro = np.column_stack(
            [sig.low_pass(gyro[:, k], filter_spec, rec.rate_hz) for k in range(3)]
        )
    acc_mag = sig.normalize_gravity(
        sig.magnitude(accel[:, 0], accel[:, 1], accel[:, 2]), rec.accel_unit
    )
    gyr_mag = sig.magnitude(gyro[:, 0], gyro[:, 1], gyro[:, 2])

    acc_mag = sig.resample(acc_mag, rec.rate_hz, TARGET_RATE_HZ)
    gyr_mag = sig.resample(gyr_mag, rec.rate_hz, TARGET_RATE_HZ)
    # anti-alias ringing can undershoot slightly; magnitudes stay non-negative
    acc_mag = np.maximum(acc_mag, 0.0)
    gyr_mag = np.maximum(gyr_mag, 0.0)
    n = len(acc_mag)

    def resample_annotation(ann):
        if ann is None:
            return None
        src_idx = np.clip(
            np.round(np.arange(n) / TARGET_RATE_HZ * rec.rate_hz).astype(int),
            0, len(ann) - 1,
        )
        return [ann[i] for i in src_idx]

    acts = resample_annotation(rec.activity)
    heads = resample_annotation(rec.head_movement)
    domain = DomainTag.Target if rec.location == "head" else DomainTag.Source

    windows = []
    for payload in sig.window(
        np.column_stack([acc_mag, gyr_mag]), WINDOW_LENGTH,
        activity=acts, head_movement=heads,
    ):
        label = harmonize_label(payload.activity) if payload.activity is not None else None
        if label is None:
            continue
        head = HeadMovement(payload.head_movement) if payload.head_movement else HeadMovement.NONE
        windows.append(LabeledWindow(
            data=payload.data, label=label, domain=domain, head=head, origin=rec.origin,
        ))
    return windows


# ---------------------------------------------------------------------------
# sampling and splitting
# ---------------------------------------------------------------------------

def balanced_sample(windows: list, per_class: int, seed: int) -> list:
    """Exactly per_class windows per activity, drawn uniformly without
    replacement, in seeded shuffled order."""
    rng = np.random.default_rng(seed)
    by_class = {lab: [] for lab in ActivityLabel}
    for w in windows:
        by_class[w.label].append(w)
    chosen = []
    for lab in ActivityLabel:
        pool = by_class[lab]
        if len(pool) < per_class:
            raise ShortageError(
                f"class {lab.name} has {len(pool)} windows, needs {per_class}"
            )
        picks = rng.choice(len(pool), size=per_class, replace=False)
        chosen.extend(pool[i] for i in picks)
    order = rng.permutation(len(chosen))
    return [chosen[i] for i in order]


def split(windows: list, spec: SplitSpec):
    """Seeded shuffle followed by a contiguous train/val/test partition.

    Train and val sizes are round(n * frac); test absorbs the remainder, so
    the three parts are disjoint and cover the input exactly.
    """
    n = len(windows)
    order = np.random.default_rng(spec.seed).permutation(n)
    n_train = int(round(n * spec.train_frac))
    n_val = int(round(n * spec.val_frac))
    shuffled = [windows[i] for i in order]
    return (
        shuffled[:n_train],
        shuffled[n_train:n_train + n_val],
        shuffled[n_train + n_val:],
    )


# ---------------------------------------------------------------------------
# synthetic domain-shift generator
# ---------------------------------------------------------------------------

@dataclass
class SynthConfig:
    """Settings of the gait-like synthetic benchmark generator.

    Target-domain windows use the base amplitudes; source-domain windows are
    scaled by source_amplitude_multiplier (lower-body sensors swing roughly
    twice as hard as head-worn ones). Target windows additionally carry
    band-limited interference per head-movement condition.
    """

    per_class: int = 50
    rate_hz: float = TARGET_RATE_HZ
    base_freq_hz: dict = field(default_factory=lambda: {
        ActivityLabel.Walking: 1.8,
        ActivityLabel.Upstairs: 1.4,
        ActivityLabel.Standing: 0.0,
        ActivityLabel.Jogging: 2.8,
    })
    base_amplitude: dict = field(default_factory=lambda: {
        ActivityLabel.Walking: 0.40,
        ActivityLabel.Upstairs: 0.62,
        ActivityLabel.Standing: 0.06,
        ActivityLabel.Jogging: 1.30,
    })
    source_amplitude_multiplier: float = 2.0
    interference_band_hz: tuple = (6.0, 10.0)
    interference_amplitude: dict = field(default_factory=lambda: {
        HeadMovement.Slight: 0.05,
        HeadMovement.Random: 0.35,
        HeadMovement.Roll: 0.30,
        HeadMovement.Yaw: 0.30,
        HeadMovement.Pitch: 0.30,
    })
    noise_sigma: float = 0.03
    freq_jitter: float = 0.10
    gyro_scale: float = 1.3

    def __post_init__(self):
        lo, hi = self.interference_band_hz
        if not (0 < lo < hi):
            raise ConfigError(f"invalid interference band {self.interference_band_hz}")
        if hi >= self.rate_hz / 2.0:
            raise ConfigError(
                f"interference band {self.interference_band_hz} reaches the "
                f"Nyquist frequency {self.rate_hz / 2.0} Hz"
            )
        if self.per_class < 1:
            raise ConfigError("per_class must be >= 1")


_TARGET_CONDITIONS = [
    HeadMovement.Slight, HeadMovement.Random, HeadMovement.Roll,
    HeadMovement.Yaw, HeadMovement.Pitch,
]


def _gait_channel(rng, t, freq, amp, noise_sigma):
    # fundamental plus two decaying harmonics; strictly positive baseline
    phase = rng.uniform(0, 2 * np.pi, size=3)
    wave = (
        0.5 * np.sin(2 * np.pi * freq * t + phase[0])
        + 0.25 * np.sin(4 * np.pi * freq * t + phase[1])
        + 0.125 * np.sin(6 * np.pi * freq * t + phase[2])
    )
    return amp * (1.1 + wave) + rng.normal(0.0, noise_sigma, size=t.shape)


def _interference(rng, t, band, amplitude, n_tones=3):
    tones = np.zeros_like(t)
    freqs = rng.uniform(band[0], band[1], size=n_tones)
    phases = rng.uniform(0, 2 * np.pi, size=n_tones)
    weights = np.array([1.0, 0.6, 0.4])[:n_tones]
    weights = weights / weights.sum()
    for f, p, w in zip(freqs, phases, weights):
        tones += w * np.sin(2 * np.pi * f * t + p)
    return amplitude * tones


def _synth_window(rng, cfg: SynthConfig, label, domain, head) -> LabeledWindow:
    t = np.arange(WINDOW_LENGTH) / cfg.rate_hz
    amp = cfg.base_amplitude[label] * rng.uniform(0.85, 1.15)
    if domain == DomainTag.Source:
        amp *= cfg.source_amplitude_multiplier
    freq = cfg.base_freq_hz[label]
    if freq > 0:
        freq = max(0.3, freq + rng.normal(0.0, cfg.freq_jitter))
    acc = _gait_channel(rng, t, freq, amp, cfg.noise_sigma)
    gyr = _gait_channel(rng, t, freq, amp * cfg.gyro_scale, cfg.noise_sigma)
    if head != HeadMovement.NONE:
        level = cfg.interference_amplitude.get(head, 0.0)
        n_tones = 4 if head == HeadMovement.Random else 3
        acc = acc + _interference(rng, t, cfg.interference_band_hz, level, n_tones)
        gyr = gyr + _interference(rng, t, cfg.interference_band_hz, level * cfg.gyro_scale, n_tones)
    data = np.column_stack([np.maximum(acc, 0.0), np.maximum(gyr, 0.0)])
    return LabeledWindow(data=data, label=label, domain=domain, head=head,
                         origin=f"synth/{domain.name.lower()}")


def synth_generate(config: SynthConfig, seed: int):
    """Deterministic synthetic benchmark: (source windows, target windows).

    Source windows carry no head movement; target windows cycle through the
    five head-movement conditions so every condition is populated.
    """
    rng = np.random.default_rng(seed)
    source, target = [], []
    for label in ActivityLabel:
        for i in range(config.per_class):
            source.append(_synth_window(rng, config, label, DomainTag.Source, HeadMovement.NONE))
    for label in ActivityLabel:
        for i in range(config.per_class):
            head = _TARGET_CONDITIONS[i % len(_TARGET_CONDITIONS)]
            target.append(_synth_window(rng, config, label, DomainTag.Target, head))
    return source, target


def synth_recording(windows: list, rate_hz: float = TARGET_RATE_HZ,
                    location: str = "head") -> RawRecording:
    """Concatenate windows into one canonical recording.

    The magnitude signals ride on the x axes (y = z = 0), so running the
    recording back through the preprocessing pipeline reproduces the window
    channels exactly.
    """
    if not windows:
        raise ValueError("need at least one window")
    acc = np.concatenate([w.data[:, 0] for w in windows])
    gyr = np.concatenate([w.data[:, 1] for w in windows])
    n = len(acc)
    zero = np.zeros(n)
    acts = np.concatenate([[w.label.name.lower()] * WINDOW_LENGTH for w in windows])
    heads = np.concatenate([[w.head.value] * WINDOW_LENGTH for w in windows])
    return RawRecording(
        timestamps=np.arange(n) / rate_hz,
        accel=np.column_stack([acc, zero, zero]),
        gyro=np.column_stack([gyr, zero, zero]),
        rate_hz=rate_hz,
        location=location,
        accel_unit="g",
        activity=np.array(acts, dtype=object),
        head_movement=np.array(heads, dtype=object),
        origin="synth",
    )


# ---------------------------------------------------------------------------
# window tensor files
# ---------------------------------------------------------------------------

def save_windows(windows: list, path) -> None:
    """Serialize windows to the CSV tensor format: a shape header line
    (count,length,channels) then one row per window carrying the label,
    domain, head-movement and origin columns followed by the row-major
    values."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([len(windows), WINDOW_LENGTH, 2])
        for win in windows:
            w.writerow([
                win.label.name.lower(), win.domain.name.lower(), win.head.value,
                win.origin.replace(",", ";"),
                *(repr(float(v)) for v in win.data.reshape(-1)),
            ])


def load_windows(path) -> list:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            count, length, channels = (int(v) for v in next(reader))
        except (StopIteration, ValueError):
            raise SchemaError(f"{path}: missing or malformed shape header") from None
        if (length, channels) != (WINDOW_LENGTH, 2):
            raise SchemaError(
                f"{path}: unsupported window shape ({length}, {channels})"
            )
        windows = []
        for row in reader:
            if len(row) != 4 + length * channels:
                raise DataError(f"{path}: row {len(windows) + 2} has {len(row)} fields")
            label = harmonize_label(row[0])
            if label is None:
                raise LabelError(f"{path}: unknown activity {row[0]!r}")
            windows.append(LabeledWindow(
                data=np.array([float(v) for v in row[4:]]).reshape(length, channels),
                label=label,
                domain=DomainTag[row[1].capitalize()],
                head=HeadMovement(row[2]),
                origin=row[3],
            ))
    if len(windows) != count:
        raise DataError(f"{path}: header says {count} windows, file has {len(windows)}")
    return windows
