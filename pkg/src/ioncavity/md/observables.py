"""Analysis of MD trajectories: spectra, densities, radial structure, temperatures."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, Voronoi, cKDTree

from ioncavity.constants import K_B, TWO_PI

MIN_SPECTRUM_SAMPLES = 2**12
# nearest-neighbour distance / Wigner-Seitz radius in a close-packed (fcc) lattice
_NN_OVER_WS = 1.809


class InsufficientSamplesError(ValueError):
    pass


@dataclass(frozen=True)
class Spectrum:
    frequencies: np.ndarray  # Hz
    amplitude: np.ndarray

    def peaks(self, n: int = 5, min_separation: float = 0.0) -> np.ndarray:
        """Frequencies (Hz) of the ``n`` strongest local maxima, strongest first, refined by parabolic interpolation."""
        a = self.amplitude
        idx = np.where((a[1:-1] > a[:-2]) & (a[1:-1] >= a[2:]))[0] + 1
        idx = idx[np.argsort(a[idx])[::-1]]
        chosen = []
        for i in idx:
            f = self._refine(i)
            if all(abs(f - c) > min_separation for c in chosen):
                chosen.append(f)
            if len(chosen) == n:
                break
        return np.array(chosen)

    def peak_near(self, freq: float, window: float) -> float:
        """Refined frequency of the strongest bin within ``freq +- window``."""
        sel = np.where(np.abs(self.frequencies - freq) <= window)[0]
        if len(sel) == 0:
            raise ValueError(f"no spectral bins within {window} Hz of {freq} Hz")
        i = sel[np.argmax(self.amplitude[sel])]
        return self._refine(i)

    def _refine(self, i: int) -> float:
        f = self.frequencies
        if i == 0 or i == len(f) - 1:
            return float(f[i])
        la, lb, lc = np.log(self.amplitude[i - 1 : i + 2] + 1e-300)
        denom = la - 2 * lb + lc
        shift = 0.5 * (la - lc) / denom if denom != 0 else 0.0
        return float(f[i] + shift * (f[1] - f[0]))


def spectrum(series, dt: float, window: str = "hann") -> Spectrum:
    """One-sided amplitude spectrum of a real series sampled every ``dt`` seconds."""
    x = np.asarray(series, dtype=float)
    if len(x) < MIN_SPECTRUM_SAMPLES:
        raise InsufficientSamplesError(f"need at least {MIN_SPECTRUM_SAMPLES} samples, got {len(x)}")
    x = x - x.mean()
    if window == "hann":
        x = x * np.hanning(len(x))
    elif window != "none":
        raise ValueError(f"unknown window {window!r}")
    amp = np.abs(np.fft.rfft(x))
    return Spectrum(np.fft.rfftfreq(len(x), dt), amp)


def center_of_mass(positions, masses=None) -> np.ndarray:
    """COM trajectory from positions of shape (T, N, 3)."""
    p = np.asarray(positions)
    if masses is None:
        return p.mean(axis=1)
    m = np.asarray(masses, dtype=float)
    return np.einsum("tnk,n->tk", p, m) / m.sum()


def breathing_coordinate(positions, axis: int = 2) -> np.ndarray:
    """RMS extent along ``axis`` about the instantaneous COM, per sample."""
    p = np.asarray(positions)[..., axis]
    return np.sqrt(np.mean((p - p.mean(axis=1, keepdims=True)) ** 2, axis=1))


@dataclass(frozen=True)
class EllipsoidFit:
    half_length: float
    radius: float
    density: float


def ellipsoid_fit(positions) -> EllipsoidFit:
    """Trap-aligned uniform spheroid with the same second moments as the ion positions.

    For a uniform spheroid <z^2> = a^2/5 and <x^2> = <y^2> = R^2/5.
    """
    p = np.asarray(positions, dtype=float)
    p = p - p.mean(axis=0)
    a = math.sqrt(5.0 * np.mean(p[:, 2] ** 2))
    r = math.sqrt(5.0 * np.mean(p[:, 0] ** 2 + p[:, 1] ** 2) / 2.0)
    volume = 4.0 / 3.0 * math.pi * r * r * a
    return EllipsoidFit(a, r, len(p) / volume)


def wigner_seitz_density(positions) -> float:
    """Density from Wigner-Seitz cells.

    Uses the mean Voronoi cell volume of ions whose cells are bounded and lie
    off the convex hull of the crystal. With too few such ions (small or
    planar clusters) it falls back to the median nearest-neighbour distance
    and the close-packed ratio d_nn = 1.809 a_ws.
    """
    p = np.asarray(positions, dtype=float)
    n = len(p)
    if n < 2:
        raise ValueError("need at least two ions")
    volumes = []
    if n >= 20:
        hull = set(ConvexHull(p).vertices.tolist())
        vor = Voronoi(p)
        for i, region_idx in enumerate(vor.point_region):
            region = vor.regions[region_idx]
            if i in hull or not region or -1 in region:
                continue
            verts = vor.vertices[region]
            volumes.append(ConvexHull(verts).volume)
    if len(volumes) >= 5:
        return 1.0 / float(np.mean(volumes))
    d, _ = cKDTree(p).query(p, k=2)
    a_ws = float(np.median(d[:, 1])) / _NN_OVER_WS
    return 3.0 / (4.0 * math.pi * a_ws**3)


def radial_coordinates(positions) -> np.ndarray:
    p = np.asarray(positions, dtype=float)
    return np.hypot(p[:, 0], p[:, 1])


@dataclass(frozen=True)
class RadialStructure:
    bin_edges: np.ndarray
    histograms: dict[int, np.ndarray]
    mean_radius: dict[int, float]
    boundary_radius: float


def radial_histograms(positions, species_index, bins: int = 20, inner: int | None = None) -> RadialStructure:
    """Per-species histograms of the radial coordinate sqrt(x^2 + y^2).

    ``boundary_radius`` treats the inner species (smallest mean radius unless
    ``inner`` is given) as a uniform cylinder, for which <r^2> = r_b^2 / 2.
    """
    r = radial_coordinates(positions)
    species_index = np.asarray(species_index)
    edges = np.linspace(0.0, r.max() * 1.0001 if len(r) else 1.0, bins + 1)
    hists, means = {}, {}
    for s in np.unique(species_index):
        sel = r[species_index == s]
        hists[int(s)] = np.histogram(sel, edges)[0]
        means[int(s)] = float(sel.mean())
    if inner is None:
        inner = min(means, key=means.get)
    boundary = math.sqrt(2.0 * np.mean(r[species_index == inner] ** 2))
    return RadialStructure(edges, hists, means, boundary)


def kinetic_temperatures(velocities, masses, species_index=None) -> dict:
    """Kinetic temperature (K) per axis, overall and per species."""
    v = np.asarray(velocities, dtype=float)
    m = np.asarray(masses, dtype=float)
    out = {
        "x": float(np.mean(m * v[:, 0] ** 2) / K_B),
        "y": float(np.mean(m * v[:, 1] ** 2) / K_B),
        "z": float(np.mean(m * v[:, 2] ** 2) / K_B),
    }
    out["total"] = (out["x"] + out["y"] + out["z"]) / 3.0
    if species_index is not None:
        species_index = np.asarray(species_index)
        out["species"] = {
            int(s): float(np.mean(m[species_index == s, None] * v[species_index == s] ** 2) / K_B)
            for s in np.unique(species_index)
        }
    return out


def angular(freq_hz: float) -> float:
    return TWO_PI * freq_hz
