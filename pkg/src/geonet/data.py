"""Datasets: synthetic generators, CSV I/O, min-max scaling and splitting."""

import csv
import math
from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    """Raised for malformed or invalid dataset content."""


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    feature_names: list = field(default_factory=list)
    target_names: list = field(default_factory=list)

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        Y = np.array(self.Y, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.ndim != 2 or Y.ndim != 2:
            raise DataError("X and Y must be 2-D")
        if X.shape[0] != Y.shape[0]:
            raise DataError(f"row count mismatch: X has {X.shape[0]}, Y has {Y.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise DataError("dataset contains non-finite values")
        fnames = list(self.feature_names) or [f"x{j + 1}" for j in range(X.shape[1])]
        tnames = list(self.target_names) or [f"y{j + 1}" for j in range(Y.shape[1])]
        if len(fnames) != X.shape[1] or len(tnames) != Y.shape[1]:
            raise DataError("name lists do not match column counts")
        X.flags.writeable = False
        Y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "feature_names", fnames)
        object.__setattr__(self, "target_names", tnames)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def m(self):
        return self.Y.shape[1]

    def take(self, rows):
        return Dataset(self.X[rows], self.Y[rows], self.feature_names, self.target_names)


@dataclass(frozen=True)
class NormStats:
    """Per-column (min, max) pairs; a column with min == max is constant."""

    feature_min: np.ndarray
    feature_max: np.ndarray
    target_min: np.ndarray
    target_max: np.ndarray

    def __post_init__(self):
        for name in ("feature_min", "feature_max", "target_min", "target_max"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} has non-finite entries")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.feature_min.shape != self.feature_max.shape:
            raise DataError("feature min/max length mismatch")
        if self.target_min.shape != self.target_max.shape:
            raise DataError("target min/max length mismatch")
        if np.any(self.feature_min > self.feature_max) or np.any(self.target_min > self.target_max):
            raise DataError("normalization stats with min > max")

    @classmethod
    def identity(cls, d, m):
        return cls(np.zeros(d), np.ones(d), np.zeros(m), np.ones(m))

    def scale_features(self, X):
        return _scale(np.asarray(X, dtype=float), self.feature_min, self.feature_max)

    def scale_targets(self, Y):
        return _scale(np.asarray(Y, dtype=float), self.target_min, self.target_max)

    def unscale_features(self, Xn):
        return _unscale(np.asarray(Xn, dtype=float), self.feature_min, self.feature_max)

    def unscale_targets(self, Yn):
        return _unscale(np.asarray(Yn, dtype=float), self.target_min, self.target_max)


def _scale(A, lo, hi):
    span = hi - lo
    const = span == 0
    out = (A - lo) / np.where(const, 1.0, span)
    return np.where(const, 0.5, out)


def _unscale(A, lo, hi):
    return lo + A * (hi - lo)


def fit_stats(ds):
    if ds.n < 1:
        raise DataError("cannot normalize an empty dataset")
    return NormStats(ds.X.min(axis=0), ds.X.max(axis=0), ds.Y.min(axis=0), ds.Y.max(axis=0))


def apply_stats(ds, stats):
    return Dataset(stats.scale_features(ds.X), stats.scale_targets(ds.Y),
                   ds.feature_names, ds.target_names)


def normalize(ds):
    """Min-max map every column to [0, 1]; constant columns become 0.5."""
    stats = fit_stats(ds)
    return apply_stats(ds, stats), stats


def denormalize(ds, stats):
    return Dataset(stats.unscale_features(ds.X), stats.unscale_targets(ds.Y),
                   ds.feature_names, ds.target_names)


def split(ds, train_fraction, seed):
    """Seeded random split into ``ceil(fraction * N)`` training rows and the rest."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if ds.n < 2:
        raise DataError("need at least two rows to split")
    # round first so 5/6 * 2400 lands on 2000 rather than 2001
    n_train = math.ceil(round(train_fraction * ds.n, 9))
    if n_train >= ds.n:
        raise DataError(f"fraction {train_fraction} leaves no test rows out of {ds.n}")
    perm = np.random.default_rng(seed).permutation(ds.n)
    return ds.take(np.sort(perm[:n_train])), ds.take(np.sort(perm[n_train:]))


# ---------------------------------------------------------------------------
# generators


def target_function(x):
    """Two-peak benchmark curve on [0, 1]: sharp peak at 0.3, broad one at 0.9."""
    x = np.asarray(x, dtype=float)
    return 1.0 / ((x - 0.3) ** 2 + 0.01) + 1.0 / ((x - 0.9) ** 2 + 0.04) - 6.0


def gen_function(n, seed=0, sampling="uniform"):
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if sampling == "grid":
        x = np.linspace(0.0, 1.0, n)
    elif sampling == "uniform":
        x = np.random.default_rng(seed).uniform(0.0, 1.0, n)
    else:
        raise ValueError(f"unknown sampling {sampling!r}")
    return Dataset(x[:, None], target_function(x)[:, None], ["x"], ["y"])


# Operating ranges for the grinding surrogate: (low, high) in physical units.
GRINDING_RANGES = {
    "R1": (60.0, 100.0),  # fresh ore feed rate, t/h
    "R2": (5.0, 15.0),  # mill inlet water flow rate, m^3/h
    "R3": (35.0, 55.0),  # classifier overflow concentration, %
    "alpha1": (180.0, 240.0),  # current through mill, A
    "alpha2": (10.0, 20.0),  # current through classifier, A
}
PS_OFFSET = 50.0
PS_SPAN = 30.0


@dataclass(frozen=True)
class GrindingSurrogateConfig:
    n: int
    seed: int = 0
    noise_sd: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need n >= 1, got {self.n}")
        if not self.noise_sd >= 0:
            raise ValueError(f"noise_sd must be >= 0, got {self.noise_sd}")


def grinding_shape(U):
    """Dimensionless particle-size response of unit-scaled process variables.

    ``U`` has columns (R1, R2, R3, alpha1, alpha2), each rescaled to [0, 1]
    over ``GRINDING_RANGES``. Heavier feed coarsens the product unless water
    compensates, overflow concentration has an interior optimum near 0.4, and
    mill current acts through a saturating sine term::

        s = 0.6 - 0.35*u1/(1 + 0.6*u2) + 0.15*u2*(1 - u3) - 0.2*(u3 - 0.4)**2
            + 0.1*sin(pi*u4) - 0.1*u1*u5 + 0.05*u5
    """
    U = np.asarray(U, dtype=float)
    u1, u2, u3, u4, u5 = U.T
    return (0.6 - 0.35 * u1 / (1.0 + 0.6 * u2) + 0.15 * u2 * (1.0 - u3)
            - 0.2 * (u3 - 0.4) ** 2 + 0.1 * np.sin(np.pi * u4)
            - 0.1 * u1 * u5 + 0.05 * u5)


def gen_grinding_surrogate(config):
    """Synthetic ore-grinding soft-sensor data: PS = 50 + 30*(shape + noise_sd*N(0,1))."""
    rng = np.random.default_rng(config.seed)
    names = list(GRINDING_RANGES)
    lo = np.array([GRINDING_RANGES[k][0] for k in names])
    hi = np.array([GRINDING_RANGES[k][1] for k in names])
    U = rng.uniform(0.0, 1.0, (config.n, len(names)))
    s = grinding_shape(U)
    if config.noise_sd > 0:
        s = s + config.noise_sd * rng.standard_normal(config.n)
    X = lo + U * (hi - lo)
    return Dataset(X, (PS_OFFSET + PS_SPAN * s)[:, None], names, ["PS"])


# ---------------------------------------------------------------------------
# CSV


def load_csv(path, m_targets=1):
    """Read a header + decimal-float CSV; the trailing ``m_targets`` columns are targets."""
    if m_targets < 1:
        raise DataError(f"m_targets must be >= 1, got {m_targets}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        ncol = len(header)
        if ncol < m_targets + 1:
            raise DataError(f"{path}: {ncol} columns cannot hold {m_targets} target(s) and a feature")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != ncol:
                raise DataError(f"{path}:{lineno}: expected {ncol} fields, got {len(row)}")
            vals = []
            for col, cell in enumerate(row, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}:{lineno}:{col}: cannot parse {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}:{lineno}:{col}: non-finite value {cell!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    A = np.array(rows)
    d = ncol - m_targets
    return Dataset(A[:, :d], A[:, d:], header[:d], header[d:])


def write_csv(ds, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ds.feature_names + ds.target_names)
        for xr, yr in zip(ds.X, ds.Y):
            w.writerow([repr(float(v)) for v in xr] + [repr(float(v)) for v in yr])
