"""Straight-line fits to measured series (loading curves, PZT tuning calibration)."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np


class DegenerateFitError(ValueError):
    pass


@dataclass(frozen=True)
class TimeSeries:
    """Ordered samples; ``t`` strictly increasing, ``sigma`` optional per-point uncertainty."""

    t: np.ndarray
    value: np.ndarray
    sigma: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.value, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "value", v)
        if t.ndim != 1 or t.shape != v.shape:
            raise ValueError("t and value must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError("series contains non-finite values")
        if np.any(np.diff(t) <= 0):
            raise ValueError("t must be strictly increasing")
        if self.sigma is not None:
            s = np.asarray(self.sigma, dtype=float)
            if s.shape != t.shape or np.any(~np.isfinite(s)) or np.any(s <= 0):
                raise ValueError("sigma must be positive, finite and match t")
            object.__setattr__(self, "sigma", s)

    def __len__(self):
        return len(self.t)

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        """Read ``t_s,value[,sigma]`` columns."""
        return cls(*read_columns(path))


def read_columns(path):
    """Arrays (t, value, sigma or None) from a ``t_s,value[,sigma]`` CSV, without ordering checks."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        if cols[:2] != ["t_s", "value"] or len(cols) > 3 or (len(cols) == 3 and cols[2] != "sigma"):
            raise ValueError(f"{path}: expected columns t_s,value[,sigma], got {cols}")
        rows = list(reader)
    t = np.array([float(r["t_s"]) for r in rows])
    v = np.array([float(r["value"]) for r in rows])
    sigma = np.array([float(r["sigma"]) for r in rows]) if len(cols) == 3 else None
    return t, v, sigma


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    slope_err: float
    intercept_err: float
    covariance: float
    chi2: float
    dof: int
    weighted: bool


def fit_linear(series: TimeSeries, weighted: bool = False) -> LinearFit:
    """Least-squares line value = slope * t + intercept with standard errors.

    Unweighted fits estimate the noise from the residuals. With
    ``weighted=True`` the points carry weights 1/sigma**2 and the errors follow
    from sigma alone (no residual rescaling).
    """
    return _fit_line(series.t, series.value, series.sigma, weighted)


def _fit_line(x, y, sigma, weighted) -> LinearFit:
    n = len(x)
    if n < 3:
        raise DegenerateFitError(f"linear fit needs at least 3 points, got {n}")
    if weighted:
        if sigma is None:
            raise ValueError("weighted fit requires a sigma column")
        w = 1.0 / sigma**2
    else:
        w = np.ones(n)
    sw = w.sum()
    xm = (w * x).sum() / sw
    ym = (w * y).sum() / sw
    dx = x - xm
    sxx = (w * dx * dx).sum()
    if sxx <= 1e-24 * (w * x * x).sum():
        raise DegenerateFitError("degenerate abscissa: all abscissa values coincide")
    slope = (w * dx * (y - ym)).sum() / sxx
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    chi2 = float((w * resid**2).sum())
    dof = n - 2
    scale = 1.0 if weighted else chi2 / dof
    var_slope = scale / sxx
    var_intercept = scale * (1.0 / sw + xm**2 / sxx)
    cov = -scale * xm / sxx
    return LinearFit(float(slope), float(intercept), math.sqrt(var_slope), math.sqrt(var_intercept),
                     float(cov), chi2, dof, weighted)


def fit_pzt_calibration(pzt_volts, detuning_hz, sigma_hz=None, weighted: bool = False) -> LinearFit:
    """Laser tuning coefficient (Hz/V) from resonance detunings versus PZT voltage.

    Repeated voltages are allowed (several resonances can sit at one setting).
    """
    v = np.asarray(pzt_volts, dtype=float)
    d = np.asarray(detuning_hz, dtype=float)
    s = None if sigma_hz is None else np.asarray(sigma_hz, dtype=float)
    if v.shape != d.shape or v.ndim != 1 or not (np.all(np.isfinite(v)) and np.all(np.isfinite(d))):
        raise ValueError("voltages and detunings must be finite 1-D arrays of equal length")
    return _fit_line(v, d, s, weighted)
