"""Gaussian-process model of maximum pulling force against hold slope.

The input is the width-to-height ratio ``eta`` of a hold's bounding box and
the output the measured pull-out force. The kernel is a bias plus a
homogeneous linear term, ``k(x, x') = sigma_b^2 + sigma_v^2 x x'``, with a
zero prior mean; intervals are predictive (they include observation noise).
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import SingularGram, TooFewRecords

Z95 = 1.959963984540054

# Hyperparameter grid for the marginal-likelihood search (variances).
BIAS_GRID = np.logspace(-2, 4, 13)
SLOPE_GRID = np.logspace(-3, 3, 13)
NOISE_GRID = np.logspace(-4, 3, 15)


@dataclass(frozen=True)
class PullTest:
    eta: float
    force: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.force < 0:
            raise ValueError(f"force must be non-negative, got {self.force}")


@dataclass(frozen=True)
class LinearKernel:
    bias_var: float
    slope_var: float

    def __call__(self, a, b) -> np.ndarray:
        a = np.asarray(a, float)
        b = np.asarray(b, float)
        return self.bias_var + self.slope_var * np.multiply.outer(a, b)


@dataclass(frozen=True)
class GPModel:
    kernel: LinearKernel
    noise_var: float
    x: np.ndarray
    y: np.ndarray
    _chol: tuple
    _alpha: np.ndarray

    def to_dict(self) -> dict:
        return {
            "kernel": {"bias_var": self.kernel.bias_var, "slope_var": self.kernel.slope_var},
            "noise_var": self.noise_var,
            "eta": [float(v) for v in self.x],
            "force_n": [float(v) for v in self.y],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GPModel":
        data = [PullTest(e, f) for e, f in zip(d["eta"], d["force_n"])]
        k = d["kernel"]
        return fit_gp(data, (k["bias_var"], k["slope_var"], d["noise_var"]))

    @property
    def log_marginal_likelihood(self) -> float:
        return _lml(self.y, self._chol, self._alpha)


def _lml(y, chol, alpha) -> float:
    c, _ = chol
    return float(-0.5 * y @ alpha - np.log(np.diag(c)).sum() - 0.5 * y.size * math.log(2 * math.pi))


def _factor(kernel: LinearKernel, noise_var: float, x, y):
    K = kernel(x, x) + noise_var * np.eye(x.size)
    try:
        chol = linalg.cho_factor(K, lower=True)
    except linalg.LinAlgError:
        raise SingularGram("Gram matrix is not positive definite") from None
    if np.min(np.abs(np.diag(chol[0]))) < 1e-12 * math.sqrt(np.max(np.abs(K))):
        raise SingularGram("Gram matrix is numerically singular")
    return chol, linalg.cho_solve(chol, y)


def fit_gp(data: list[PullTest], hyper=None) -> GPModel:
    """Exact GP posterior on ``data``.

    ``hyper`` is ``(bias_var, slope_var, noise_var)``; when omitted the triple
    maximizing the log marginal likelihood over ``BIAS_GRID x SLOPE_GRID x
    NOISE_GRID`` is used.
    """
    if len(data) < 2:
        raise TooFewRecords(f"need at least 2 pull tests, got {len(data)}")
    x = np.array([d.eta for d in data], float)
    y = np.array([d.force for d in data], float)
    if hyper is None:
        best = None
        for b, v, n in itertools.product(BIAS_GRID, SLOPE_GRID, NOISE_GRID):
            try:
                chol, alpha = _factor(LinearKernel(b, v), n, x, y)
            except SingularGram:
                continue
            score = _lml(y, chol, alpha)
            if best is None or score > best[0]:
                best = (score, (b, v, n))
        hyper = best[1]
    b, v, n = map(float, hyper)
    if b < 0 or v < 0 or n < 0:
        raise ValueError("kernel variances must be non-negative")
    kernel = LinearKernel(b, v)
    chol, alpha = _factor(kernel, n, x, y)
    return GPModel(kernel, n, x, y, chol, alpha)


def predict(model: GPModel, eta):
    """Posterior predictive mean and 95% interval at ``eta``."""
    e = np.atleast_1d(np.asarray(eta, float))
    ks = model.kernel(e, model.x)
    mean = ks @ model._alpha
    v = linalg.cho_solve(model._chol, ks.T)
    prior = model.kernel.bias_var + model.kernel.slope_var * e * e
    var = np.maximum(prior - np.einsum("ij,ji->i", ks, v), 0.0) + model.noise_var
    sd = np.sqrt(var)
    lo, hi = mean - Z95 * sd, mean + Z95 * sd
    if np.ndim(eta) == 0:
        return float(mean[0]), float(lo[0]), float(hi[0])
    return mean, lo, hi


def max_safe_eta(model: GPModel, f_min: float, eta_range=(1e-3, 10.0), grid: int = 512, tol: float = 1e-10):
    """Smallest ``eta`` in ``eta_range`` where the lower 95% bound drops to ``f_min``.

    Returns ``None`` when the lower bound stays above ``f_min`` over the whole
    range. The first grid cell containing the crossing is refined by bisection.
    """
    lo, hi = map(float, eta_range)

    def gap(e):
        return predict(model, e)[1] - f_min

    if gap(lo) <= 0:
        return lo
    etas = np.linspace(lo, hi, grid)
    vals = predict(model, etas)[1] - f_min
    below = np.nonzero(vals <= 0)[0]
    if below.size == 0:
        return None
    a, b = etas[below[0] - 1], etas[below[0]]
    while b - a > tol:
        m = 0.5 * (a + b)
        if gap(m) > 0:
            a = m
        else:
            b = m
    return 0.5 * (a + b)


def read_pull_csv(path) -> list[PullTest]:
    """Parse an ``eta,force_n`` CSV; raises ``ValueError`` with the row number."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"eta", "force_n"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: header must contain eta,force_n")
        for row_no, row in enumerate(reader, start=1):
            try:
                out.append(PullTest(float(row["eta"]), float(row["force_n"])))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"row {row_no}: {exc}") from None
    return out


def write_pull_csv(path, data: list[PullTest]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eta", "force_n"])
        for d in data:
            w.writerow([repr(d.eta), repr(d.force)])


def synthetic_pull_tests(n: int, intercept: float = 22.0, slope: float = -2.0, noise_sd: float = 1.0, eta_range=(0.5, 6.0), seed: int = 0):
    """Seeded pull-test data on a line with Gaussian noise, clipped at zero force."""
    rng = np.random.default_rng(seed)
    eta = rng.uniform(*eta_range, size=n)
    force = np.maximum(intercept + slope * eta + noise_sd * rng.standard_normal(n), 0.0)
    return [PullTest(float(e), float(f)) for e, f in zip(eta, force)]


def crossing_dataset(n: int = 1001, eta_range=(0.5, 6.0), noise_sd: float = 1.0):
    """Noise-free line data whose predictive lower bound is ``20 - 2 eta``.

    With observation noise ``noise_sd`` and dense data the predictive standard
    deviation is essentially ``noise_sd``, so placing the data on
    ``20 + Z95 * noise_sd - 2 eta`` makes the lower bound reach 13.3 N at
    ``eta = 3.35``. Fit with ``hyper=(1e4, 1e4, noise_sd**2)``.
    """
    eta = np.linspace(*eta_range, n)
    force = 20.0 + Z95 * noise_sd - 2.0 * eta
    return [PullTest(float(e), float(f)) for e, f in zip(eta, force)]
