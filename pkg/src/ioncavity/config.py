"""Tool configuration: a TOML file with explicit units in key names.

Every block and key is optional; omitted values take the apparatus defaults.
Unknown blocks or keys are rejected with the offending key path and, where it
can be located, its line number.

Example::

    [trap]
    z_half_m = 2.5e-3
    r0_m = 2.35e-3
    eta = 0.342
    rf_frequency_hz = 4.0e6

    [voltages]
    u_rf_volts = 130.0
    u_end_volts = 3.9

    [species]
    name = "40Ca+"

    [species.table."44Ca+"]
    mass_u = 43.9549
    isotope_shift_866_hz = 4.5e9
"""
from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ioncavity.cavity import CavitySpec
from ioncavity.constants import AMU, E_CHARGE, TWO_PI
from ioncavity.md.engine import SimConfig
from ioncavity.optimizer import NoConstraint, PowerLawConstraint, TableConstraint, default_constraint
from ioncavity.species import SPECIES
from ioncavity.trap import DriveVoltages, IonSpecies, TransitionData, TrapGeometry


class ConfigError(ValueError):
    def __init__(self, message, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        where = ""
        if key:
            where += f" [key {key}]"
        if line:
            where += f" [line {line}]"
        super().__init__(message + where)

    def to_dict(self) -> dict:
        return {"error": {"type": "config", "message": str(self), "key": self.key, "line": self.line}}


_SCHEMA = {
    "trap": {"z_half_m", "r0_m", "eta", "rf_frequency_hz"},
    "voltages": {"u_rf_volts", "u_end_volts"},
    "species": {"name", "table"},
    "cavity": {
        "length_m", "mirror_roc_m", "transmission_in", "transmission_out", "intracavity_loss",
        "wavelength_m", "fsr_hz", "linewidth_fwhm_hz",
    },
    "crystal": {"u_rf_volts", "u_end_volts", "ion_count", "total_length_m", "length_source"},
    "sweep": {
        "u_rf_min_volts", "u_rf_max_volts", "u_rf_step_volts",
        "u_end_min_volts", "u_end_max_volts", "u_end_step_volts",
        "n_total", "constraint", "constraint_table", "power_law",
    },
    "md": {
        "species", "ion_counts", "timestep_s", "duration_s", "beta_kg_s", "cooling_axes", "cooled_species",
        "recoil_velocity_m_s", "force_model", "temperature_threshold_k", "record_every", "seed",
    },
}
_SPECIES_KEYS = {"mass_u", "charge_e", "dipole_moment_c_m", "wavelength_m", "gamma_rad_s", "isotope_shift_866_hz"}
_POWER_LAW_KEYS = {"l_ref_m", "u_ref_volts", "exponent", "n_ref", "n_exponent", "cooling_ref", "cooling_exponent"}


@dataclass(frozen=True)
class CavityConfig:
    spec: CavitySpec = field(default_factory=CavitySpec)
    fsr_hz: float = 12.7e9
    linewidth_fwhm_hz: float = 4.0e6


@dataclass(frozen=True)
class CrystalConfig:
    voltages: DriveVoltages = field(default_factory=lambda: DriveVoltages(300.0, 1.7))
    ion_count: float = 88000.0
    total_length_m: float = 3.0e-3
    length_source: str = "measured"  # or "model"


@dataclass(frozen=True)
class SweepConfig:
    u_rf_min: float = 150.0
    u_rf_max: float = 400.0
    u_rf_step: float = 10.0
    u_end_min: float = 0.3
    u_end_max: float = 10.0
    u_end_step: float = 0.1
    n_total: float = 1e5
    constraint: object = field(default_factory=default_constraint)

    def u_rf_values(self):
        return _arange(self.u_rf_min, self.u_rf_max, self.u_rf_step)

    def u_end_values(self):
        return _arange(self.u_end_min, self.u_end_max, self.u_end_step)


def _arange(lo, hi, step):
    n = int(round((hi - lo) / step)) if step > 0 else 0
    return [round(lo + i * step, 12) for i in range(n + 1)]


@dataclass(frozen=True)
class ToolConfig:
    geometry: TrapGeometry = field(default_factory=TrapGeometry)
    voltages: DriveVoltages = field(default_factory=lambda: DriveVoltages(130.0, 3.9))
    species_table: dict = field(default_factory=lambda: dict(SPECIES))
    species_name: str = "40Ca+"
    cavity: CavityConfig = field(default_factory=CavityConfig)
    crystal: CrystalConfig = field(default_factory=CrystalConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    # a cooled ion pair relaxes in well under the default duration
    md: SimConfig = field(
        default_factory=lambda: SimConfig(ion_counts=(2,), beta=2e-20, cooling_axes="xyz", duration=2e-3)
    )
    md_record_every: int = 0

    @property
    def species(self) -> IonSpecies:
        return self.species_table[self.species_name]


def _key_line(text: str | None, path: list[str]) -> int | None:
    """Best-effort line number of the dotted key ``path`` in TOML ``text``."""
    if not text:
        return None
    lines = text.splitlines()
    key = path[-1]
    section = ".".join(path[:-1])
    in_section = section == ""
    for i, line in enumerate(lines, 1):
        stripped = line.strip()
        m = re.match(r"^\[+\s*([^\]]+?)\s*\]+", stripped)
        if m:
            name = m.group(1).replace('"', "").replace(" ", "")
            if name == ".".join(path).replace('"', ""):
                return i
            in_section = name == section.replace('"', "")
            continue
        if in_section and re.match(rf'^"?{re.escape(key)}"?\s*=', stripped):
            return i
    return None


def _check_keys(block: dict, allowed: set, prefix: list[str], text):
    for k in block:
        if k not in allowed:
            path = prefix + [k]
            raise ConfigError(f"unknown key {'.'.join(path)!r}", ".".join(path), _key_line(text, path))


def _num(block, key, default, prefix, text, positive=False):
    if key not in block:
        return default
    val = block[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        path = prefix + [key]
        raise ConfigError(f"{'.'.join(path)} must be a number, got {val!r}", ".".join(path), _key_line(text, path))
    if positive and val <= 0:
        path = prefix + [key]
        raise ConfigError(f"{'.'.join(path)} must be positive", ".".join(path), _key_line(text, path))
    return float(val)


def _wrap(fn, key, text, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), key, _key_line(text, key.split("."))) from exc


def _species_table(block, text) -> dict:
    table = dict(SPECIES)
    for label, entry in block.items():
        prefix = ["species", "table", label]
        if not isinstance(entry, dict):
            raise ConfigError(f"species entry {label!r} must be a table", ".".join(prefix), _key_line(text, prefix))
        _check_keys(entry, _SPECIES_KEYS, prefix, text)
        base = table.get(label)
        if base is None and "mass_u" not in entry:
            raise ConfigError(f"new species {label!r} needs mass_u", ".".join(prefix), _key_line(text, prefix))
        tr = base.transition if base is not None else SPECIES["40Ca+"].transition
        shift = entry.get("isotope_shift_866_hz", tr.isotope_shift if base is not None else None)
        transition = _wrap(
            TransitionData, ".".join(prefix), text,
            dipole_moment=_num(entry, "dipole_moment_c_m", tr.dipole_moment, prefix, text),
            wavelength=_num(entry, "wavelength_m", tr.wavelength, prefix, text),
            gamma=_num(entry, "gamma_rad_s", tr.gamma, prefix, text),
            isotope_shift=None if shift is None else float(shift),
        )
        mass = _num(entry, "mass_u", None, prefix, text)
        charge = _num(entry, "charge_e", None, prefix, text)
        table[label] = _wrap(
            IonSpecies, ".".join(prefix), text,
            mass=mass * AMU if mass is not None else base.mass,
            charge=charge * E_CHARGE if charge is not None else (base.charge if base else E_CHARGE),
            isotope_label=label,
            transition=transition,
        )
    return table


def _constraint(block, text, base_dir: Path):
    kind = block.get("constraint", "default")
    if kind == "default":
        return default_constraint()
    if kind == "none":
        return NoConstraint()
    if kind == "table":
        if "constraint_table" not in block:
            raise ConfigError("constraint = 'table' needs constraint_table", "sweep.constraint_table")
        path = base_dir / block["constraint_table"]
        try:
            return TableConstraint.from_csv(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read constraint table: {exc}", "sweep.constraint_table",
                              _key_line(text, ["sweep", "constraint_table"])) from exc
    if kind == "power_law":
        pl = block.get("power_law", {})
        prefix = ["sweep", "power_law"]
        _check_keys(pl, _POWER_LAW_KEYS, prefix, text)
        if "l_ref_m" not in pl or "u_ref_volts" not in pl:
            raise ConfigError("power_law needs l_ref_m and u_ref_volts", "sweep.power_law")
        return PowerLawConstraint(
            l_ref=_num(pl, "l_ref_m", None, prefix, text, positive=True),
            u_ref=_num(pl, "u_ref_volts", None, prefix, text, positive=True),
            exponent=_num(pl, "exponent", 1.0, prefix, text),
            n_ref=_num(pl, "n_ref", 1e5, prefix, text, positive=True),
            n_exponent=_num(pl, "n_exponent", 0.0, prefix, text),
            cooling_ref=_num(pl, "cooling_ref", 1.0, prefix, text, positive=True),
            cooling_exponent=_num(pl, "cooling_exponent", 0.0, prefix, text),
        )
    raise ConfigError(f"unknown constraint kind {kind!r} (default|none|table|power_law)", "sweep.constraint",
                      _key_line(text, ["sweep", "constraint"]))


def parse_config(data: dict, text: str | None = None, base_dir: Path | str = ".") -> ToolConfig:
    """Validate a decoded TOML mapping into a ToolConfig."""
    base_dir = Path(base_dir)
    _check_keys(data, set(_SCHEMA), [], text)
    for name, block in data.items():
        if not isinstance(block, dict):
            raise ConfigError(f"[{name}] must be a table", name, _key_line(text, [name]))
        _check_keys(block, _SCHEMA[name], [name], text)

    d = ToolConfig()
    t = data.get("trap", {})
    p = ["trap"]
    geometry = _wrap(
        TrapGeometry, "trap", text,
        z_half=_num(t, "z_half_m", d.geometry.z_half, p, text),
        r0=_num(t, "r0_m", d.geometry.r0, p, text),
        eta=_num(t, "eta", d.geometry.eta, p, text),
        omega_rf=TWO_PI * _num(t, "rf_frequency_hz", d.geometry.omega_rf / TWO_PI, p, text),
    )
    vb = data.get("voltages", {})
    voltages = _wrap(
        DriveVoltages, "voltages", text,
        _num(vb, "u_rf_volts", d.voltages.u_rf, ["voltages"], text),
        _num(vb, "u_end_volts", d.voltages.u_end, ["voltages"], text),
    )

    sb = data.get("species", {})
    table = _species_table(sb.get("table", {}), text)
    name = sb.get("name", d.species_name)
    if name not in table:
        raise ConfigError(f"unknown species {name!r}; known: {sorted(table)}", "species.name",
                          _key_line(text, ["species", "name"]))

    cb = data.get("cavity", {})
    p = ["cavity"]
    cs = d.cavity.spec
    cavity = CavityConfig(
        spec=_wrap(
            CavitySpec, "cavity", text,
            length=_num(cb, "length_m", cs.length, p, text),
            mirror_roc=_num(cb, "mirror_roc_m", cs.mirror_roc, p, text),
            transmission_in=_num(cb, "transmission_in", cs.transmission_in, p, text),
            transmission_out=_num(cb, "transmission_out", cs.transmission_out, p, text),
            intracavity_loss=_num(cb, "intracavity_loss", cs.intracavity_loss, p, text),
            wavelength=_num(cb, "wavelength_m", cs.wavelength, p, text),
        ),
        fsr_hz=_num(cb, "fsr_hz", d.cavity.fsr_hz, p, text, positive=True),
        linewidth_fwhm_hz=_num(cb, "linewidth_fwhm_hz", d.cavity.linewidth_fwhm_hz, p, text, positive=True),
    )

    kb = data.get("crystal", {})
    p = ["crystal"]
    length_source = kb.get("length_source", d.crystal.length_source)
    if length_source not in ("measured", "model"):
        raise ConfigError("crystal.length_source must be 'measured' or 'model'", "crystal.length_source",
                          _key_line(text, ["crystal", "length_source"]))
    crystal = CrystalConfig(
        voltages=_wrap(
            DriveVoltages, "crystal", text,
            _num(kb, "u_rf_volts", d.crystal.voltages.u_rf, p, text),
            _num(kb, "u_end_volts", d.crystal.voltages.u_end, p, text),
        ),
        ion_count=_num(kb, "ion_count", d.crystal.ion_count, p, text, positive=True),
        total_length_m=_num(kb, "total_length_m", d.crystal.total_length_m, p, text, positive=True),
        length_source=length_source,
    )

    wb = data.get("sweep", {})
    p = ["sweep"]
    ds = d.sweep
    sweep = SweepConfig(
        u_rf_min=_num(wb, "u_rf_min_volts", ds.u_rf_min, p, text),
        u_rf_max=_num(wb, "u_rf_max_volts", ds.u_rf_max, p, text),
        u_rf_step=_num(wb, "u_rf_step_volts", ds.u_rf_step, p, text, positive=True),
        u_end_min=_num(wb, "u_end_min_volts", ds.u_end_min, p, text),
        u_end_max=_num(wb, "u_end_max_volts", ds.u_end_max, p, text),
        u_end_step=_num(wb, "u_end_step_volts", ds.u_end_step, p, text, positive=True),
        n_total=_num(wb, "n_total", ds.n_total, p, text, positive=True),
        constraint=_constraint(wb, text, base_dir),
    )
    if sweep.u_rf_max < sweep.u_rf_min or sweep.u_end_max < sweep.u_end_min:
        raise ConfigError("sweep ranges must have max >= min", "sweep")

    mb = data.get("md", {})
    p = ["md"]
    md_species = mb.get("species", [name])
    for s in md_species:
        if s not in table:
            raise ConfigError(f"unknown md species {s!r}", "md.species", _key_line(text, ["md", "species"]))
    default_counts = list(d.md.ion_counts) if len(md_species) == 1 else [1] * len(md_species)
    counts = mb.get("ion_counts", default_counts)
    if len(counts) != len(md_species):
        raise ConfigError("md.ion_counts must match md.species", "md.ion_counts",
                          _key_line(text, ["md", "ion_counts"]))
    cooled = mb.get("cooled_species")
    md = _wrap(
        SimConfig, "md", text,
        geometry=geometry,
        voltages=voltages,
        species=tuple(table[s] for s in md_species),
        ion_counts=tuple(int(c) for c in counts),
        timestep=_num(mb, "timestep_s", min(d.md.timestep, geometry.rf_period / 100.0), p, text, positive=True),
        duration=_num(mb, "duration_s", d.md.duration, p, text, positive=True),
        beta=_num(mb, "beta_kg_s", d.md.beta, p, text),
        cooling_axes=str(mb.get("cooling_axes", d.md.cooling_axes)),
        cooled_species=None if cooled is None else tuple(int(c) for c in cooled),
        recoil_velocity=_num(mb, "recoil_velocity_m_s", d.md.recoil_velocity, p, text),
        force_model=str(mb.get("force_model", d.md.force_model)),
        temperature_threshold=_num(mb, "temperature_threshold_k", d.md.temperature_threshold, p, text, positive=True),
        seed=int(mb.get("seed", d.md.seed)),
    )
    return ToolConfig(geometry, voltages, table, name, cavity, crystal, sweep, md, int(mb.get("record_every", 0)))


def load_config(path: str | Path | None) -> ToolConfig:
    """Read and validate a TOML config file; ``None`` gives the defaults."""
    if path is None:
        return ToolConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML parse error: {exc}", line=int(m.group(1)) if m else None) from exc
    return parse_config(data, text, path.parent)


def with_seed(cfg: ToolConfig, seed: int) -> ToolConfig:
    return replace(cfg, md=replace(cfg.md, seed=seed))
