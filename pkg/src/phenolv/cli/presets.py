"""Named scenario configurations.

Each preset is an INI document; ``load_preset`` parses it.  The phase-plane
presets realize every parameter regime of the two-species LV system, the
ode presets every long-time regime of the mutation-free model, and the pde
presets coexistence plus both exclusion outcomes of the diffusive model.
"""
from __future__ import annotations

from ..model import ValidationError
from .config import RunConfig, parse_config

_ODE_BASE = """
[d]
family = gaussian
base = 2
amplitude = 1
center = 0
width = 1

[grid]
x_lo = -10
x_hi = 10
n = 101
"""

_ODE_IC = """
[u0]
family = gaussian
base = 0
amplitude = 0.5
center = 0
width = 2

[v0]
family = gaussian
base = 0
amplitude = 0.3
center = 1
width = 1
"""

_PDE_BASE = """
[d]
family = gaussian
base = 2
amplitude = 1
center = 0
width = 1

[m]
family = gaussian
base = 2
amplitude = 1.2
center = 0.5
width = 1

[grid]
x_lo = -30
x_hi = 30
n = 601

[sim]
t_end = 300
dt = 0.02
record_every = 50
"""

_PDE_SYMMETRIC = """
[d]
family = gaussian
base = 2
amplitude = 1
center = 0
width = 1

[m]
family = gaussian
base = 2
amplitude = 1
center = 0
width = 1

[grid]
x_lo = -30
x_hi = 30
n = 601

[sim]
t_end = 300
dt = 0.02
record_every = 50

[params]
b = 2
c = 2
"""


def _lv(d_bar, m_bar, b, c, n_starts=5, command="phase-plane"):
    sim = f"\n[sim]\nt_end = 500\nn_starts = {n_starts}\n" if command == "phase-plane" else ""
    return f"[run]\ncommand = {command}\n\n[params]\nd_bar = {d_bar}\nm_bar = {m_bar}\nb = {b}\nc = {c}\n{sim}"


def _ode(b, c, m_bar, t_end=500, dt=0.01, record_every=100, ic=_ODE_IC, base=_ODE_BASE):
    return (
        f"[run]\ncommand = ode-sim\n\n[params]\nb = {b}\nc = {c}\nm_bar = {m_bar}\n"
        f"{base}{ic}\n[sim]\nt_end = {t_end}\ndt = {dt}\nrecord_every = {record_every}\n"
    )


def _gauss(name, amplitude, center, width):
    return f"\n[{name}]\nfamily = gaussian\nbase = 0\namplitude = {amplitude}\ncenter = {center}\nwidth = {width}\n"


def _steady(name, profile, scale):
    return f"\n[{name}]\nfamily = steady\nprofile = {profile}\nscale = {scale}\n"


def _pde(b, c, u0, v0, base=_PDE_BASE):
    params = f"\n[params]\nb = {b}\nc = {c}\n" if b is not None else ""
    return f"[run]\ncommand = pde-sim\n{params}{base}{u0}{v0}"


PRESETS: dict[str, tuple[str, str]] = {
    # LV phase plane
    "lv-coexistence": ("c d_bar < m_bar and b m_bar < d_bar: interior equilibrium", _lv(3, 1, 0.5, 0.25)),
    "lv-exclusion-u": ("c d_bar > m_bar > d_bar / b: (d_bar, 0) attracts", _lv(3, 1, 0.5, 0.5)),
    "lv-exclusion-v": ("b m_bar > d_bar > m_bar / c: (0, m_bar) attracts", _lv(1, 3, 0.5, 0.25)),
    "lv-degenerate": ("bc = 1 and b m_bar = d_bar: a line of equilibria", _lv(2, 1, 2, 0.5)),
    "lv-bistable": ("c d_bar > m_bar and b m_bar > d_bar: saddle and two basins", _lv(3, 2.5, 1.5, 1.2, 20)),
    # separatrix
    "separatrix-symmetric": ("d_bar = m_bar, b = c: diagonal separatrix", _lv(3, 3, 2, 2, command="separatrix")),
    "separatrix-d-above": ("d_bar > m_bar", _lv(3, 2.5, 1.5, 1.2, command="separatrix")),
    "separatrix-d-below": ("d_bar < m_bar", _lv(2.5, 3, 1.5, 1.5, command="separatrix")),
    # mutation-free model
    "ode-coexistence": (
        "bump fitness d_M = 3, m_bar = 1, b = 1/2, c = 1/4: coexistence at (20/7, 2/7)",
        _ode(0.5, 0.25, 1, dt=0.001, record_every=1000, base=_ODE_BASE.replace("n = 101", "n = 201")),
    ),
    "ode-u-wins": ("c > m_bar/d_M, b < d_M/m_bar: u concentrates with mass d_M", _ode(0.5, 0.5, 1)),
    "ode-v-wins": ("c < m_bar/d_M, b > d_M/m_bar: v reaches m_bar", _ode(1, 0.25, 4)),
    "ode-continuum": ("bc = 1, b m_bar = d_M: limits on r1 + b r2 = d_M", _ode(1.5, 0.6666666666666666, 2)),
    "ode-bistable-u": (
        "bistable coefficients, r2(0) below the separatrix: u wins",
        _ode(1.5, 1.2, 2.5, ic=_gauss("u0", 2.5, 0, 0.3) + _gauss("v0", 0.2, 1, 1)),
    ),
    "ode-bistable-v": (
        "bistable coefficients, r2(0) above the separatrix: v wins",
        _ode(1.5, 1.2, 2.5, ic=_gauss("u0", 0.6, 0, 0.3) + _gauss("v0", 0.8, 1, 1)),
    ),
    # diffusive model
    "pde-coexistence": (
        "bc = 1/8 < 1: convergence to the steady profiles",
        _pde(0.5, 0.25, _gauss("u0", 0.5, 0, 2), _gauss("v0", 0.3, 1, 1)),
    ),
    "pde-stationary": (
        "bc < 1 started on the steady profiles",
        _pde(0.5, 0.25, _steady("u0", "u_bar", 1), _steady("v0", "v_bar", 1)),
    ),
    "pde-u-wins": ("bc = 4, initial masses below the separatrix", _pde(2, 2, _gauss("u0", 0.5, 0, 2), _gauss("v0", 0.09, 1, 1))),
    "pde-v-wins": ("bc = 4, initial masses above the separatrix", _pde(2, 2, _gauss("u0", 0.5, 0, 2), _gauss("v0", 0.9, 1, 1))),
    "pde-asymmetric": (
        "b = 3/2, c = 5/2 with distinct resources",
        _pde(1.5, 2.5, _gauss("u0", 0.5, 0, 2), _gauss("v0", 0.9, 1, 1)),
    ),
    "pde-symmetric-u-wins": (
        "d = m, b = c = 2, u0 = 2 v_bar, v0 = v_bar",
        _pde(None, None, _steady("u0", "v_bar", 2), _steady("v0", "v_bar", 1), base=_PDE_SYMMETRIC),
    ),
    "pde-symmetric-v-wins": (
        "d = m, b = c = 2, u0 = v_bar, v0 = 2 v_bar",
        _pde(None, None, _steady("u0", "v_bar", 1), _steady("v0", "v_bar", 2), base=_PDE_SYMMETRIC),
    ),
    "pde-symmetric-separatrix": (
        "d = m, b = c = 2, u0 = v0: projections on the separatrix",
        _pde(None, None, _steady("u0", "v_bar", 1), _steady("v0", "v_bar", 1), base=_PDE_SYMMETRIC),
    ),
    "steady-translation": (
        "m is d shifted by one: equal shifts, equal masses",
        "[run]\ncommand = steady-state\n\n[params]\nb = 0.5\nc = 0.5\n"
        + _PDE_BASE.replace("amplitude = 1.2\ncenter = 0.5", "amplitude = 1\ncenter = 1")
        .replace("x_lo = -30", "x_lo = -20")
        .replace("x_hi = 30", "x_hi = 20")
        .replace("n = 601", "n = 2001")
        .split("[sim]")[0],
    ),
    # sweep
    "sweep-c": (
        "c from 0.1 to 0.9 at b = 1/2: coexistence turns into exclusion above c = m_bar/d_M",
        "[run]\ncommand = sweep\n\n[sweep]\ncommand = ode-sim\naxis = params.c\n"
        "values = 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9\n"
        + _ode(0.5, 0.5, 1).split("\n", 2)[2],
    ),
}


def preset_names() -> list[str]:
    return sorted(PRESETS)


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return PRESETS[name][1]


def load_preset(name: str) -> RunConfig:
    return parse_config(preset_text(name))
