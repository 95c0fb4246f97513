"""Run configuration: INI documents <-> validated ``RunConfig``.

Sections and keys (all keys are lower case)::

    [run]         command, output_dir, seed
    [params]      b, c, m_bar              (ode-sim)
                  b, c                     (pde-sim, steady-state)
                  d_bar, m_bar, b, c       (phase-plane, separatrix)
    [d], [m]      family + family parameters (resource functions)
    [grid]        x_lo, x_hi, n
    [u0], [v0]    initial densities: a resource family, or
                  family = steady with profile = u_bar|v_bar and scale
    [sim]         ode-sim:     t_end, dt, record_every, eps_conc
                  pde-sim:     t_end, dt, record_every
                  phase-plane: t_end, n_starts, rtol, atol
    [separatrix]  eps, t_max, max_chord
    [sweep]       command, axis, values (comma separated)

``parse_config`` fills every default, so ``to_ini`` of the result is the
fully resolved document and parses back to an equal ``RunConfig``.
"""
from __future__ import annotations

import configparser
import enum
import math
from dataclasses import dataclass, field, replace

from ..model import (
    RESOURCE_FAMILIES,
    Constant,
    ModelParams,
    ResourceFunction,
    ValidationError,
    make_grid,
    resource_from_dict,
)
from ..phase_plane import LVParams


class Command(str, enum.Enum):
    PHASE_PLANE = "phase-plane"
    SEPARATRIX = "separatrix"
    ODE_SIM = "ode-sim"
    PDE_SIM = "pde-sim"
    STEADY_STATE = "steady-state"
    SWEEP = "sweep"


LV_COMMANDS = (Command.PHASE_PLANE, Command.SEPARATRIX)
MODEL_COMMANDS = (Command.ODE_SIM, Command.PDE_SIM, Command.STEADY_STATE)

# allowed sections per command (besides [run]); required ones first
SECTIONS = {
    Command.PHASE_PLANE: ({"params"}, {"sim", "separatrix"}),
    Command.SEPARATRIX: ({"params"}, {"separatrix"}),
    Command.ODE_SIM: ({"params", "d", "grid", "u0", "v0", "sim"}, {"separatrix"}),
    Command.PDE_SIM: ({"params", "d", "m", "grid", "u0", "v0", "sim"}, {"separatrix"}),
    Command.STEADY_STATE: ({"params", "d", "m", "grid"}, {"u0", "v0"}),
}

PARAM_KEYS = {
    Command.PHASE_PLANE: ("d_bar", "m_bar", "b", "c"),
    Command.SEPARATRIX: ("d_bar", "m_bar", "b", "c"),
    Command.ODE_SIM: ("b", "c", "m_bar"),
    Command.PDE_SIM: ("b", "c"),
    Command.STEADY_STATE: ("b", "c"),
}

SIM_DEFAULTS = {
    Command.ODE_SIM: {"dt": 1e-3, "record_every": 100, "eps_conc": None},
    Command.PDE_SIM: {"dt": 1e-2, "record_every": 10},
    Command.PHASE_PLANE: {"t_end": 500.0, "n_starts": 5, "rtol": 1e-8, "atol": 1e-10},
}
INT_KEYS = {"n", "record_every", "n_starts", "seed"}

SEPARATRIX_DEFAULTS = {"eps": None, "t_max": 200.0, "max_chord": 2e-3}


@dataclass(frozen=True)
class GridSpec:
    x_lo: float
    x_hi: float
    n: int

    def build(self):
        return make_grid(self.x_lo, self.x_hi, self.n)


@dataclass(frozen=True)
class InitialSpec:
    """Initial density: a resource function, or a multiple of a steady profile."""

    family: str
    values: tuple  # (key, value) pairs in field order

    @property
    def as_dict(self) -> dict:
        return dict(self.values)

    def resource(self) -> ResourceFunction:
        return resource_from_dict({"family": self.family, **self.as_dict})


@dataclass(frozen=True)
class SimSpec:
    t_end: float
    dt: float | None = None
    record_every: int | None = None
    eps_conc: float | None = None
    n_starts: int | None = None
    rtol: float | None = None
    atol: float | None = None


@dataclass(frozen=True)
class SeparatrixSpec:
    eps: float | None
    t_max: float
    max_chord: float

    def kwargs(self) -> dict:
        return {"eps": self.eps, "t_max": self.t_max, "max_chord": self.max_chord}


@dataclass(frozen=True)
class SweepSpec:
    command: Command
    axis: str
    values: tuple


@dataclass(frozen=True)
class RunConfig:
    command: Command
    params: ModelParams | LVParams
    grid: GridSpec | None = None
    u0: InitialSpec | None = None
    v0: InitialSpec | None = None
    sim: SimSpec | None = None
    separatrix: SeparatrixSpec | None = None
    sweep: SweepSpec | None = None
    output_dir: str = "out"
    seed: int = 0
    sections: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def run_command(self) -> Command:
        """Command actually executed per run (the child command for sweeps)."""
        return self.sweep.command if self.sweep else self.command


# ---------------------------------------------------------------------------
# parsing


def _number(section: str, key: str, raw, positive=False, nonneg=False, integer=False):
    path = f"{section}.{key}"
    try:
        val = float(raw)
    except (TypeError, ValueError):
        raise ValidationError(f"{path}: expected a real number, got {raw!r}") from None
    if not math.isfinite(val):
        raise ValidationError(f"{path}: must be finite, got {raw!r}")
    if integer:
        if val != int(val):
            raise ValidationError(f"{path}: expected an integer, got {raw!r}")
        val = int(val)
    if positive and not val > 0:
        raise ValidationError(f"{path}: must be > 0, got {raw!r}")
    if nonneg and val < 0:
        raise ValidationError(f"{path}: must be >= 0, got {raw!r}")
    return val


def _optional(section, key, raw, **kw):
    if raw is None or str(raw).strip().lower() in ("", "auto", "none"):
        return None
    return _number(section, key, raw, **kw)


def _check_keys(name: str, sec: dict, allowed, required=()):
    unknown = sorted(set(sec) - set(allowed))
    if unknown:
        raise ValidationError(f"{name}: unknown key(s) {unknown}; expected a subset of {sorted(allowed)}")
    missing = [k for k in required if k not in sec]
    if missing:
        raise ValidationError(f"{name}: missing required key(s) {missing}")


def _parse_resource(name: str, sec: dict) -> ResourceFunction:
    if "family" not in sec:
        raise ValidationError(f"{name}.family: missing; expected one of {sorted(RESOURCE_FAMILIES)}")
    try:
        return resource_from_dict(sec)
    except ValidationError as exc:
        raise ValidationError(f"{name}: {exc}") from None


def _parse_initial(name: str, sec: dict, command: Command) -> InitialSpec:
    family = sec.get("family")
    if family == "steady":
        if command is not Command.PDE_SIM and command is not Command.STEADY_STATE:
            raise ValidationError(f"{name}.family: 'steady' is only available for pde-sim")
        _check_keys(name, sec, ("family", "profile", "scale"), ("family", "profile"))
        if sec["profile"] not in ("u_bar", "v_bar"):
            raise ValidationError(f"{name}.profile: expected u_bar or v_bar, got {sec['profile']!r}")
        scale = _number(name, "scale", sec.get("scale", 1.0), nonneg=True)
        return InitialSpec("steady", (("profile", sec["profile"]), ("scale", scale)))
    res = _parse_resource(name, sec)
    vals = res.to_dict()
    vals.pop("family")
    return InitialSpec(res.family, tuple(vals.items()))


def _parse_params(command: Command, sec: dict, d, m):
    keys = PARAM_KEYS[command]
    _check_keys("params", sec, keys, keys)
    vals = {k: _number("params", k, sec[k], positive=True) for k in keys}
    if command in LV_COMMANDS:
        return LVParams(**vals)
    return ModelParams(
        b=vals["b"], c=vals["c"], m_bar=vals.get("m_bar", 1.0), d=d, m=m if m is not None else Constant(1.0)
    )


def _parse_sim(command: Command, sec: dict, grid: GridSpec | None) -> SimSpec:
    defaults = SIM_DEFAULTS[command]
    allowed = ("t_end",) + tuple(defaults)
    required = () if command is Command.PHASE_PLANE else ("t_end",)
    _check_keys("sim", sec, allowed, required)
    merged = {**defaults, **sec}
    out = {}
    for k, raw in merged.items():
        if k == "eps_conc":
            val = _optional("sim", k, raw, positive=True)
            if val is None:
                val = 3 * (grid.x_hi - grid.x_lo) / (grid.n - 1)
            out[k] = val
        else:
            out[k] = _number("sim", k, raw, positive=True, integer=k in INT_KEYS)
    if "dt" in out and out["t_end"] < out["dt"]:
        raise ValidationError(f"sim.t_end: must be >= sim.dt = {out['dt']}")
    return SimSpec(**out)


def _parse_separatrix(sec: dict | None) -> SeparatrixSpec:
    sec = sec or {}
    _check_keys("separatrix", sec, SEPARATRIX_DEFAULTS)
    merged = {**SEPARATRIX_DEFAULTS, **sec}
    return SeparatrixSpec(
        eps=_optional("separatrix", "eps", merged["eps"], positive=True),
        t_max=_number("separatrix", "t_max", merged["t_max"], positive=True),
        max_chord=_number("separatrix", "max_chord", merged["max_chord"], positive=True),
    )


def _parse_command(raw, where: str) -> Command:
    try:
        return Command(str(raw).strip())
    except ValueError:
        raise ValidationError(
            f"{where}: unknown command {raw!r}; expected one of {[c.value for c in Command]}"
        ) from None


def parse_sections(sections: dict, command: Command | None = None) -> RunConfig:
    """Validate a ``{section: {key: value}}`` mapping into a ``RunConfig``."""
    sections = {k: dict(v) for k, v in sections.items()}
    run = sections.pop("run", {})
    _check_keys("run", run, ("command", "output_dir", "seed"))
    if "command" in run:
        declared = _parse_command(run["command"], "run.command")
        if command is not None and declared is not command:
            raise ValidationError(
                f"run.command: config declares {declared.value!r} but {command.value!r} was requested"
            )
        command = declared
    if command is None:
        raise ValidationError("run.command: missing required key")
    output_dir = str(run.get("output_dir", "out"))
    seed = _number("run", "seed", run.get("seed", 0), nonneg=True, integer=True)

    sweep = None
    if command is Command.SWEEP:
        if "sweep" not in sections:
            raise ValidationError("sweep: missing required section")
        sw = sections.pop("sweep")
        _check_keys("sweep", sw, ("command", "axis", "values"), ("command", "axis", "values"))
        child = _parse_command(sw["command"], "sweep.command")
        if child is Command.SWEEP:
            raise ValidationError("sweep.command: sweeps cannot be nested")
        raw_values = [v for v in str(sw["values"]).replace("\n", ",").split(",") if v.strip()]
        values = tuple(_number("sweep", "values", v) for v in raw_values)
        sweep = SweepSpec(child, str(sw["axis"]).strip(), values)
        run_command = child
    else:
        run_command = command

    required, optional = SECTIONS[run_command]
    unknown = sorted(set(sections) - required - optional)
    if unknown:
        raise ValidationError(
            f"unknown section(s) {unknown} for command {run_command.value!r}; "
            f"expected {sorted(required | optional)}"
        )
    missing = sorted(required - set(sections))
    if run_command is Command.PHASE_PLANE:
        missing = [s for s in missing if s != "sim"]
    if missing:
        raise ValidationError(f"missing section(s) {missing} for command {run_command.value!r}")

    grid = None
    if "grid" in sections:
        g = sections["grid"]
        _check_keys("grid", g, ("x_lo", "x_hi", "n"), ("x_lo", "x_hi", "n"))
        grid = GridSpec(
            _number("grid", "x_lo", g["x_lo"]),
            _number("grid", "x_hi", g["x_hi"]),
            _number("grid", "n", g["n"], integer=True),
        )
        try:
            grid.build()
        except ValidationError as exc:
            raise ValidationError(f"grid: {exc}") from None

    d = _parse_resource("d", sections["d"]) if "d" in sections else None
    m = _parse_resource("m", sections["m"]) if "m" in sections else None
    try:
        params = _parse_params(run_command, sections["params"], d, m)
    except ValidationError as exc:
        msg = str(exc)
        raise ValidationError(msg if msg.startswith("params") else f"params: {msg}") from None

    if run_command is Command.STEADY_STATE or run_command is Command.PDE_SIM:
        if abs(params.b * params.c - 1.0) <= 1e-12:
            raise ValidationError(
                "params.b, params.c: bc = 1 makes the steady-state mass system singular; "
                "choose bc < 1 or bc > 1"
            )
    if run_command is Command.STEADY_STATE and (("u0" in sections) != ("v0" in sections)):
        raise ValidationError("u0, v0: give both initial densities or neither")

    u0 = _parse_initial("u0", sections["u0"], run_command) if "u0" in sections else None
    v0 = _parse_initial("v0", sections["v0"], run_command) if "v0" in sections else None

    sim = None
    if run_command in SIM_DEFAULTS:
        sim = _parse_sim(run_command, sections.get("sim", {}), grid)
    separatrix = None
    if run_command in (Command.PHASE_PLANE, Command.SEPARATRIX, Command.ODE_SIM, Command.PDE_SIM):
        separatrix = _parse_separatrix(sections.get("separatrix"))

    cfg = RunConfig(
        command=command,
        params=params,
        grid=grid,
        u0=u0,
        v0=v0,
        sim=sim,
        separatrix=separatrix,
        sweep=sweep,
        output_dir=output_dir,
        seed=seed,
    )
    if sweep is not None:
        for value in sweep.values:
            patch_config(cfg, sweep.axis, value)  # validates the axis up front
    return replace(cfg, sections=to_sections(cfg))


def parse_config(text: str, command: Command | str | None = None) -> RunConfig:
    """Parse an INI document."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"malformed config: {exc}") from None
    sections = {name: dict(cp[name]) for name in cp.sections()}
    if isinstance(command, str):
        command = _parse_command(command, "command")
    return parse_sections(sections, command)


# ---------------------------------------------------------------------------
# writing


def _fmt(val) -> str:
    if isinstance(val, bool):
        return str(val).lower()
    if isinstance(val, int):
        return str(val)
    if isinstance(val, float):
        return repr(val)  # shortest string that round-trips
    if val is None:
        return "auto"
    if isinstance(val, enum.Enum):
        return val.value
    return str(val)


def _resource_section(res: ResourceFunction) -> dict:
    return {k: v for k, v in res.to_dict().items()}


def to_sections(cfg: RunConfig) -> dict:
    """Fully resolved ``{section: {key: value}}`` view of a config."""
    out = {"run": {"command": cfg.command, "output_dir": cfg.output_dir, "seed": cfg.seed}}
    if cfg.sweep is not None:
        out["sweep"] = {
            "command": cfg.sweep.command,
            "axis": cfg.sweep.axis,
            "values": ", ".join(_fmt(float(v)) for v in cfg.sweep.values),
        }
    cmd = cfg.run_command
    p = cfg.params
    out["params"] = {k: getattr(p, k) for k in PARAM_KEYS[cmd]}
    if isinstance(p, ModelParams):
        out["d"] = _resource_section(p.d)
        if cmd in (Command.PDE_SIM, Command.STEADY_STATE):
            out["m"] = _resource_section(p.m)
    if cfg.grid is not None:
        out["grid"] = {"x_lo": cfg.grid.x_lo, "x_hi": cfg.grid.x_hi, "n": cfg.grid.n}
    for name in ("u0", "v0"):
        spec = getattr(cfg, name)
        if spec is not None:
            out[name] = {"family": spec.family, **spec.as_dict}
    if cfg.sim is not None:
        keys = ("t_end",) + tuple(SIM_DEFAULTS[cmd])
        out["sim"] = {k: getattr(cfg.sim, k) for k in keys}
    if cfg.separatrix is not None:
        out["separatrix"] = {
            "eps": cfg.separatrix.eps,
            "t_max": cfg.separatrix.t_max,
            "max_chord": cfg.separatrix.max_chord,
        }
    return out


def to_ini(cfg: RunConfig) -> str:
    lines = []
    for name, sec in to_sections(cfg).items():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {_fmt(v)}" for k, v in sec.items())
        lines.append("")
    return "\n".join(lines)


def sections_as_text(cfg: RunConfig) -> dict:
    """``to_sections`` with every value rendered as its config-file string."""
    return {name: {k: _fmt(v) for k, v in sec.items()} for name, sec in to_sections(cfg).items()}


def patch_config(cfg: RunConfig, axis: str, value: float) -> RunConfig:
    """Child config of a sweep: ``axis`` (``section.key``) set to ``value``.

    The result is re-validated; the sweep section is dropped.
    """
    if "." not in axis:
        raise ValidationError(f"sweep.axis: expected 'section.key', got {axis!r}")
    section, key = axis.split(".", 1)
    sections = sections_as_text(cfg)
    sections.pop("sweep", None)
    if section not in sections or key not in sections[section]:
        raise ValidationError(f"sweep.axis: {axis!r} does not name a parameter of this config")
    try:
        float(sections[section][key])
    except ValueError:
        raise ValidationError(f"sweep.axis: {axis!r} is not numeric") from None
    sections[section][key] = _fmt(float(value))
    sections["run"]["command"] = cfg.run_command.value
    return parse_sections(sections)
