"""Hold-size environment model.

Holds are summarized by their minimum bounding box. The gripper sees a hold as
a (width, height) pair, and the population of pairs is modeled as a bivariate
log-normal distribution. Rectangular probabilities are estimated with a
midpoint Riemann sum; a seeded Monte-Carlo estimator is provided as an
independent check.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import DegenerateVariance, NonPositiveValue, TooFewRecords

DEFAULT_GRID_POINTS = 4000


@dataclass(frozen=True)
class HoldRecord:
    width: float
    length: float
    height: float


@dataclass(frozen=True)
class BivariateLogNormal:
    """Log-normal over (width, height) in mm.

    ``mu`` and ``sigma`` are the mean and standard deviation of
    ``(ln width, ln height)``; ``rho`` is their correlation.
    """

    mu: tuple[float, float]
    sigma: tuple[float, float]
    rho: float

    def __post_init__(self):
        if min(self.sigma) <= 0:
            raise DegenerateVariance(f"sigma must be positive, got {self.sigma}")
        if not -1.0 < self.rho < 1.0:
            raise DegenerateVariance(f"rho must lie in (-1, 1), got {self.rho}")

    @property
    def cov(self) -> np.ndarray:
        s1, s2 = self.sigma
        c = self.rho * s1 * s2
        return np.array([[s1 * s1, c], [c, s2 * s2]])

    @property
    def mode(self) -> tuple[float, float]:
        """Joint mode ``exp(mu - cov @ 1)`` of the density in natural units."""
        m = np.asarray(self.mu) - self.cov @ np.ones(2)
        return float(np.exp(m[0])), float(np.exp(m[1]))

    def marginal_mode(self, axis: int = 0) -> float:
        return float(math.exp(self.mu[axis] - self.sigma[axis] ** 2))

    def sample(self, n: int, seed: int | None = None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        z = rng.multivariate_normal(np.asarray(self.mu), self.cov, size=n)
        return np.exp(z)

    def to_dict(self) -> dict:
        return {"mu": list(self.mu), "sigma": list(self.sigma), "rho": self.rho}

    @classmethod
    def from_dict(cls, d: dict) -> "BivariateLogNormal":
        return cls(tuple(map(float, d["mu"])), tuple(map(float, d["sigma"])), float(d["rho"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "BivariateLogNormal":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class RectRegion:
    omega_lo: float
    omega_hi: float
    h_lo: float
    h_hi: float

    def __post_init__(self):
        if self.omega_lo > self.omega_hi or self.h_lo > self.h_hi:
            raise ValueError(f"inverted region {self}")

    def contains(self, w, h):
        return (w >= self.omega_lo) & (w <= self.omega_hi) & (h >= self.h_lo) & (h <= self.h_hi)


# Synthetic stand-in for the unpublished hold survey. Widths center near 70 mm
# so the dense band spans roughly 38-130 mm; heights near 35 mm.
SYNTHETIC_DEFAULT = BivariateLogNormal(mu=(math.log(70.0), math.log(35.0)), sigma=(0.40, 0.45), rho=0.45)


def synthetic_holds(n: int, model: BivariateLogNormal = SYNTHETIC_DEFAULT, seed: int = 0) -> list[HoldRecord]:
    """Draw ``n`` bounding boxes whose (width, height) and (length, height) pairs both follow ``model``.

    Height is drawn from its marginal; width and length are drawn independently
    from the conditional distribution given that height.
    """
    rng = np.random.default_rng(seed)
    (m1, m2), (s1, s2), r = model.mu, model.sigma, model.rho
    xh = rng.normal(m2, s2, size=n)
    cond_mean = m1 + r * s1 / s2 * (xh - m2)
    cond_sd = s1 * math.sqrt(1.0 - r * r)
    xw = rng.normal(cond_mean, cond_sd)
    xl = rng.normal(cond_mean, cond_sd)
    return [HoldRecord(float(w), float(l), float(h)) for w, l, h in zip(np.exp(xw), np.exp(xl), np.exp(xh))]


def read_holds_csv(path) -> list[HoldRecord]:
    """Parse a ``width_mm,length_mm,height_mm`` CSV.

    Raises ``ValueError`` with the 1-based data row number on bad rows.
    """
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"width_mm", "length_mm", "height_mm"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ValueError(f"{path}: header must contain {sorted(need)}")
        for row_no, row in enumerate(reader, start=1):
            try:
                rec = HoldRecord(float(row["width_mm"]), float(row["length_mm"]), float(row["height_mm"]))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"row {row_no}: unparsable value ({exc})") from None
            if min(rec.width, rec.length, rec.height) <= 0 or not all(
                map(math.isfinite, (rec.width, rec.length, rec.height))
            ):
                raise ValueError(f"row {row_no}: dimensions must be finite and positive")
            records.append(rec)
    return records


def write_holds_csv(path, records: list[HoldRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["width_mm", "length_mm", "height_mm"])
        for r in records:
            w.writerow([repr(r.width), repr(r.length), repr(r.height)])


def _pairs(records, width_from: str) -> np.ndarray:
    if width_from == "width":
        pairs = [(r.width, r.height) for r in records]
    elif width_from == "both-orientations":
        pairs = [(r.width, r.height) for r in records] + [(r.length, r.height) for r in records]
    else:
        raise ValueError(f"unknown width_from policy {width_from!r}")
    return np.asarray(pairs, dtype=float)


def fit_lognormal(records: list[HoldRecord], width_from: str = "both-orientations") -> BivariateLogNormal:
    """Maximum-likelihood bivariate log-normal fit.

    With ``width_from="both-orientations"`` each hold contributes its length as
    a second width observation, which is the grasp seen after rotating the
    gripper by 90 degrees.
    """
    if len(records) < 3:
        raise TooFewRecords(f"need at least 3 holds, got {len(records)}")
    for i, r in enumerate(records):
        if min(r.width, r.length, r.height) <= 0:
            raise NonPositiveValue(f"record {i} has a non-positive dimension: {r}")
    x = np.log(_pairs(records, width_from))
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    if np.any(sd <= 0):
        raise DegenerateVariance("zero variance in log widths or log heights")
    rho = float(np.mean((x[:, 0] - mu[0]) * (x[:, 1] - mu[1])) / (sd[0] * sd[1]))
    if not -1.0 < rho < 1.0:
        raise DegenerateVariance(f"perfectly correlated sample (rho={rho})")
    return BivariateLogNormal((float(mu[0]), float(mu[1])), (float(sd[0]), float(sd[1])), rho)


def pdf(model: BivariateLogNormal, width, height):
    """Bivariate log-normal density; zero outside the positive quadrant."""
    w = np.asarray(width, dtype=float)
    h = np.asarray(height, dtype=float)
    pos = (w > 0) & (h > 0)
    ws = np.where(pos, w, 1.0)
    hs = np.where(pos, h, 1.0)
    (m1, m2), (s1, s2), r = model.mu, model.sigma, model.rho
    z1 = (np.log(ws) - m1) / s1
    z2 = (np.log(hs) - m2) / s2
    one_r2 = 1.0 - r * r
    q = (z1 * z1 - 2.0 * r * z1 * z2 + z2 * z2) / one_r2
    norm = 2.0 * math.pi * s1 * s2 * math.sqrt(one_r2)
    out = np.where(pos, np.exp(-0.5 * q) / (norm * ws * hs), 0.0)
    return out if out.ndim else float(out)


def _grid_shape(region: RectRegion, grid_points: int) -> tuple[int, int]:
    dw = region.omega_hi - region.omega_lo
    dh = region.h_hi - region.h_lo
    nx = int(round(math.sqrt(grid_points * dw / dh)))
    nx = min(max(nx, 2), grid_points // 2)
    return nx, max(grid_points // nx, 2)


def cdf_rect_riemann(
    model: BivariateLogNormal, region: RectRegion, grid_points: int = DEFAULT_GRID_POINTS, shape: tuple[int, int] | None = None
) -> float:
    """Probability mass in ``region`` by the midpoint rule.

    The ``grid_points`` budget is split between the two axes in proportion to
    the region's side lengths so cells are close to square. Passing an explicit
    ``shape=(nx, ny)`` fixes the split instead, which keeps the estimate a
    smooth function of the region bounds.
    """
    if grid_points < 4:
        raise ValueError("grid_points must be at least 4")
    dw = region.omega_hi - region.omega_lo
    dh = region.h_hi - region.h_lo
    if dw <= 0 or dh <= 0:
        return 0.0
    nx, ny = shape if shape is not None else _grid_shape(region, grid_points)
    xs = region.omega_lo + (np.arange(nx) + 0.5) * (dw / nx)
    ys = region.h_lo + (np.arange(ny) + 0.5) * (dh / ny)
    vals = pdf(model, xs[:, None], ys[None, :])
    return float(vals.sum() * (dw / nx) * (dh / ny))


def cdf_rect_montecarlo(model: BivariateLogNormal, region: RectRegion, n_samples: int, seed: int) -> float:
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    s = model.sample(n_samples, seed)
    return float(np.count_nonzero(region.contains(s[:, 0], s[:, 1])) / n_samples)


def support_region(model: BivariateLogNormal, n_sigma: float = 4.0) -> RectRegion:
    """Rectangle from 0 to ``exp(mu + n_sigma * sigma)`` on both axes.

    The 4-sigma default leaves out about 1e-4 of the mass and is still fine
    enough for a 4000-point midpoint grid; much wider boxes need more points.
    """
    hi = np.exp(np.asarray(model.mu) + n_sigma * np.asarray(model.sigma))
    return RectRegion(0.0, float(hi[0]), 0.0, float(hi[1]))


def qq_points(samples) -> np.ndarray:
    """Normal QQ pairs for log-transformed samples.

    Returns an ``(n, 2)`` array of (standard-normal quantile, sorted log sample)
    using plotting positions ``(i - 0.5) / n``.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 3:
        raise TooFewRecords(f"need at least 3 samples, got {x.size}")
    if np.any(x <= 0):
        raise NonPositiveValue("QQ samples must be positive")
    n = x.size
    theo = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    return np.column_stack([theo, np.sort(np.log(x))])
