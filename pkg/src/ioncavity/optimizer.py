"""Grid search for the trap voltages that put the most ions into the cavity mode.

The number of ions in the mode is rho * pi * w0**2 * l / 4. Density grows
with U_rf**2 but long crystals become unstable (rf heating), so the crystal
length is capped by an empirical stability constraint. The shipped default
table is a model input calibrated to put the optimum near 350 V; it is not
a prediction.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Protocol

import numpy as np

from ioncavity.cavity import (
    CavitySpec,
    ModeGeometry,
    cavity_decay_rate,
    finesse_from_losses,
    free_spectral_range,
    ions_in_mode_closed_form,
    linewidth_from_finesse,
    single_ion_coupling,
    strong_coupling_threshold,
    waist_from_geometry,
)
from ioncavity.crystal import ExtremeAnisotropyError, spheroid_from_count
from ioncavity.trap import (
    DriveVoltages,
    IonSpecies,
    RadiallyDeconfinedError,
    StabilityFlag,
    TrapGeometry,
    crystal_density,
    mathieu_q,
)

SWEEP_COLUMNS = ["u_rf_V", "u_end_V", "density_m3", "length_m", "n_in_mode", "g_coll_rad_s", "feasible"]


class NoFeasiblePointError(RuntimeError):
    def __init__(self, msg, points=()):
        super().__init__(msg)
        self.points = list(points)

    def to_dict(self) -> dict:
        flags = sorted({f for p in self.points for f in p.flags})
        return {"error": {"type": "infeasible", "message": str(self), "n_points": len(self.points), "flags": flags}}


class StabilityConstraint(Protocol):
    def max_length(self, u_rf: float, n_total: float | None = None, cooling: float | None = None) -> float:
        """Longest stable crystal (m); NaN where the constraint is undefined."""


@dataclass(frozen=True)
class NoConstraint:
    def max_length(self, u_rf, n_total=None, cooling=None) -> float:
        return math.inf


@dataclass(frozen=True)
class TableConstraint:
    """Piecewise-linear max length versus U_rf; undefined outside the table range."""

    u_rf: tuple[float, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        if len(self.u_rf) != len(self.lengths) or len(self.u_rf) < 1:
            raise ValueError("constraint table needs matching, non-empty columns")
        if any(b <= a for a, b in zip(self.u_rf, self.u_rf[1:])):
            raise ValueError("constraint table U_rf must be strictly increasing")
        if any(l <= 0 for l in self.lengths):
            raise ValueError("constraint max_length must be positive")

    def max_length(self, u_rf, n_total=None, cooling=None) -> float:
        if u_rf < self.u_rf[0] - 1e-9 or u_rf > self.u_rf[-1] + 1e-9:
            return math.nan
        return float(np.interp(u_rf, self.u_rf, self.lengths))

    @property
    def monotone_non_increasing(self) -> bool:
        return all(b <= a for a, b in zip(self.lengths, self.lengths[1:]))

    @classmethod
    def from_csv(cls, path) -> "TableConstraint":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or {"u_rf_V", "max_length_m"} - set(rows[0]):
            raise ValueError(f"{path}: constraint table needs columns u_rf_V,max_length_m")
        rows.sort(key=lambda r: float(r["u_rf_V"]))
        return cls(tuple(float(r["u_rf_V"]) for r in rows), tuple(float(r["max_length_m"]) for r in rows))


@dataclass(frozen=True)
class PowerLawConstraint:
    """max_length = l_ref * (u_ref/U_rf)**p * (n_ref/N)**q * (cooling/cooling_ref)**c."""

    l_ref: float
    u_ref: float
    exponent: float = 1.0
    n_ref: float = 1e5
    n_exponent: float = 0.0
    cooling_ref: float = 1.0
    cooling_exponent: float = 0.0

    def max_length(self, u_rf, n_total=None, cooling=None) -> float:
        if u_rf <= 0:
            return math.nan
        value = self.l_ref * (self.u_ref / u_rf) ** self.exponent
        if n_total is not None:
            value *= (self.n_ref / n_total) ** self.n_exponent
        if cooling is not None:
            value *= (cooling / self.cooling_ref) ** self.cooling_exponent
        return value


def default_constraint() -> TableConstraint:
    ref = resources.files("ioncavity") / "data" / "default_stability.csv"
    with resources.as_file(ref) as path:
        return TableConstraint.from_csv(path)


@dataclass(frozen=True)
class SweepPoint:
    u_rf: float
    u_end: float
    density: float
    model_length: float
    length: float
    n_in_mode: float
    g_coll: float
    feasible: bool
    flags: tuple[str, ...] = ()


def evaluate_point(
    u_rf: float,
    u_end: float,
    ion: IonSpecies,
    mode: ModeGeometry,
    constraint: StabilityConstraint,
    n_total: float = 1e5,
    geometry: TrapGeometry | None = None,
    g0: float | None = None,
    cooling: float | None = None,
) -> SweepPoint:
    """Crystal length, ions in mode and collective coupling at one voltage pair.

    The crystal length is the cold-fluid length of ``n_total`` ions capped at
    the constraint's maximum. Unstable or unconfined points come back with
    ``feasible=False`` and a reason in ``flags``.
    """
    geom = geometry or TrapGeometry()
    v = DriveVoltages(u_rf, u_end)
    g0 = single_ion_coupling(ion, mode) if g0 is None else g0
    flags = []
    nan = math.nan
    q = mathieu_q(geom, v, ion)
    if q.flag is StabilityFlag.UNSTABLE:
        return SweepPoint(u_rf, u_end, nan, nan, nan, nan, nan, False, ("q_unstable",))
    if q.flag is StabilityFlag.WARN:
        flags.append("q_warn")
    if u_rf <= 0:
        return SweepPoint(u_rf, u_end, nan, nan, nan, nan, nan, False, ("no_rf",))
    density = crystal_density(geom, v, ion)
    cap = constraint.max_length(u_rf, n_total, cooling)
    if math.isnan(cap):
        return SweepPoint(u_rf, u_end, density, nan, nan, nan, nan, False, ("constraint_undefined",))
    try:
        model_length = spheroid_from_count(geom, v, ion, n_total).length
    except RadiallyDeconfinedError:
        return SweepPoint(u_rf, u_end, density, nan, nan, nan, nan, False, ("radially_deconfined",))
    except ExtremeAnisotropyError:
        return SweepPoint(u_rf, u_end, density, nan, nan, nan, nan, False, ("extreme_anisotropy",))
    length = min(model_length, cap)
    if model_length > cap:
        flags.append("length_capped")
    n = ions_in_mode_closed_form(density, mode.waist, length)
    return SweepPoint(u_rf, u_end, density, model_length, length, n, g0 * math.sqrt(n), True, tuple(flags))


@dataclass
class SweepResult:
    u_rf: np.ndarray
    u_end: np.ndarray
    points: list[SweepPoint]
    argmax: SweepPoint
    threshold: int
    g0: float
    extras: dict = field(default_factory=dict)

    def grid(self, attr: str = "n_in_mode") -> np.ndarray:
        """Values on the (len(u_rf), len(u_end)) grid."""
        vals = np.array([getattr(p, attr) for p in self.points], dtype=float)
        return vals.reshape(len(self.u_rf), len(self.u_end))

    def feasible_grid(self) -> np.ndarray:
        return np.array([p.feasible for p in self.points]).reshape(len(self.u_rf), len(self.u_end))

    def best_per_u_rf(self) -> np.ndarray:
        """Max feasible N_in_mode over U_end for each U_rf (NaN where none is feasible)."""
        n = np.where(self.feasible_grid(), self.grid(), -np.inf)
        best = n.max(axis=1)
        return np.where(np.isfinite(best), best, np.nan)

    def threshold_crossings(self) -> list[float]:
        """U_rf values where the per-U_rf optimum crosses the strong-coupling threshold (linear interpolation)."""
        best = self.best_per_u_rf()
        out = []
        for i in range(len(best) - 1):
            a, b = best[i] - self.threshold, best[i + 1] - self.threshold
            if np.isnan(a) or np.isnan(b) or a * b > 0 or a == b:
                continue
            if a == 0:
                out.append(float(self.u_rf[i]))
                continue
            out.append(float(self.u_rf[i] + (self.u_rf[i + 1] - self.u_rf[i]) * a / (a - b)))
        if len(best) and best[-1] == self.threshold:
            out.append(float(self.u_rf[-1]))
        return sorted(set(out))

    def summary(self) -> dict:
        return {
            "argmax": asdict(self.argmax),
            "strong_coupling_threshold": self.threshold,
            "g0_rad_s": self.g0,
            "threshold_crossings_u_rf_V": self.threshold_crossings(),
            "grid": {"u_rf_V": self.u_rf.tolist(), "u_end_V": self.u_end.tolist()},
            "n_feasible": int(sum(p.feasible for p in self.points)),
            **self.extras,
        }


def sweep(
    u_rf_values: Iterable[float],
    u_end_values: Iterable[float],
    ion: IonSpecies,
    cavity: CavitySpec,
    constraint: StabilityConstraint | None = None,
    n_total: float = 1e5,
    geometry: TrapGeometry | None = None,
    linewidth_fwhm: float | None = None,
    cooling: float | None = None,
    map_fn: Callable = map,
) -> SweepResult:
    """Exhaustive (U_rf, U_end) grid search for the maximal number of ions in the mode.

    ``linewidth_fwhm`` sets kappa for the strong-coupling threshold; by default
    it follows from the cavity losses. ``map_fn`` may be a parallel map (e.g.
    ``executor.map``); results are assembled in grid order either way. Ties in
    N_in_mode (several U_end values reaching the length cap) go to the highest
    U_end, where the crystal first reaches the cap.
    """
    u_rf = np.asarray(sorted(u_rf_values), dtype=float)
    u_end = np.asarray(sorted(u_end_values), dtype=float)
    if u_rf.size == 0 or u_end.size == 0:
        raise ValueError("sweep grid is empty")
    constraint = constraint if constraint is not None else default_constraint()
    mode = waist_from_geometry(cavity)
    g0 = single_ion_coupling(ion, mode)
    if linewidth_fwhm is None:
        fsr = free_spectral_range(cavity)
        linewidth_fwhm = linewidth_from_finesse(fsr, finesse_from_losses(cavity))
    kappa = cavity_decay_rate(linewidth_fwhm)
    threshold = strong_coupling_threshold(ion.transition.gamma, kappa, g0)

    pairs = [(float(a), float(b)) for a in u_rf for b in u_end]
    points = list(
        map_fn(lambda ab: evaluate_point(ab[0], ab[1], ion, mode, constraint, n_total, geometry, g0, cooling), pairs)
    )
    feasible = [p for p in points if p.feasible]
    if not feasible:
        raise NoFeasiblePointError("no feasible point in sweep grid", points)
    best = max(feasible, key=lambda p: (p.n_in_mode, p.u_end))
    return SweepResult(u_rf, u_end, points, best, threshold, g0,
                       {"n_total": n_total, "kappa_rad_s": kappa, "waist_m": mode.waist})


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    return repr(float(x))


def emit_report(result: SweepResult, csv_path=None, json_path=None) -> tuple[str, dict]:
    """Serialize a sweep as CSV (one row per grid point) and a JSON summary.

    Floats are written with ``repr`` so parsing the CSV reproduces the grid
    exactly. Returns (csv_text, summary); files are written when paths are given.
    """
    lines = [",".join(SWEEP_COLUMNS)]
    for p in result.points:
        lines.append(",".join(_fmt(x) for x in (p.u_rf, p.u_end, p.density, p.length, p.n_in_mode, p.g_coll, p.feasible)))
    text = "\n".join(lines) + "\n"
    summary = result.summary()
    if csv_path is not None:
        Path(csv_path).write_text(text)
    if json_path is not None:
        Path(json_path).write_text(json.dumps(summary, indent=2))
    return text, summary


def read_sweep_csv(source) -> list[dict]:
    """Parse sweep CSV text or a path back into row dicts."""
    text = source if isinstance(source, str) and "\n" in source else Path(source).read_text()
    rows = list(csv.DictReader(text.splitlines()))
    out = []
    for r in rows:
        if list(r) != SWEEP_COLUMNS:
            raise ValueError(f"unexpected sweep columns {list(r)}")
        d = {k: float(r[k]) for k in SWEEP_COLUMNS[:-1]}
        d["feasible"] = r["feasible"] == "1"
        out.append(d)
    return out
