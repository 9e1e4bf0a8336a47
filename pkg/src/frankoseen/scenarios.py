"""Initial fields, boundary data and presets for the standard experiments,
plus the run driver that writes history, report and VTK snapshots."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import fem
from .energy import EnergyBreakdown, FrankConstants, boundary_error, constraint_error
from .fem import DofMap
from .flow import HISTORY_COLUMNS, EnergyIncrease, FlowConfig, FlowState, run_gradient_flow
from .mesh import (LABEL_ALIASES, MeshError, TetMesh, build_ball_mesh, build_box_mesh,
                   build_colloid_mesh, classify_boundary, import_mesh)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])


class ConfigError(ValueError):
    """Invalid scenario configuration."""


# ------------------------------------------------------------------ fields

def _norm(x):
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(r < 1e-12):
        raise ValueError("field undefined at |x| < 1e-12")
    return x, r


def degree1_field(x):
    """Radial hedgehog x / |x|."""
    x, r = _norm(x)
    return x / r


def degree2_field(x):
    """Degree-two defect: square the stereographic image of x / |x|.

    Directions within 1e-12 of the north pole map to (0, 0, 1).
    """
    p = degree1_field(x)
    pole = p[..., 2] >= 1.0 - 1e-12
    denom = np.where(pole, 1.0, 1.0 - p[..., 2])
    zeta = (p[..., 0] + 1j * p[..., 1]) / denom
    z2 = zeta * zeta
    m = np.abs(z2) ** 2
    out = np.stack([2 * z2.real, 2 * z2.imag, m - 1.0], axis=-1) / (m + 1.0)[..., None]
    out[pole] = E3
    return out


def freedericksz_perturbation(x, amplitude: float = 256.0):
    """u = amplitude [x(1-x) y(1-y)]^2 z(1/2 - z) e3."""
    x = np.asarray(x, dtype=float)
    X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
    u = np.zeros_like(x)
    u[..., 2] = amplitude * (X * (1 - X) * Y * (1 - Y)) ** 2 * Z * (0.5 - Z)
    return u


def freedericksz_initial(x, amplitude: float = 256.0):
    """(e1 + u) / |e1 + u| for the slab perturbation u."""
    v = E1 + freedericksz_perturbation(x, amplitude)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def colloid_boundary(x, hole_radius: float = 0.75, outer_half_width: float = 2.0):
    """x/|x| on the colloid surface and e3 on the outer box."""
    x, r = _norm(x)
    split = 0.5 * (hole_radius + outer_half_width)
    inner = np.linalg.norm(x, axis=-1) < split
    out = np.broadcast_to(E3, x.shape).copy()
    out[inner] = (x / r)[inner]
    return out


def colloid_initial(x, hole_radius: float = 0.75, outer_half_width: float = 2.0):
    """Normalised blend of x/|x| and e3, weighted by the distance to the box.

    The weight is 1 on the colloid and 0 on the box; the rare points where
    the blend vanishes get e1.
    """
    x, r = _norm(x)
    t = np.abs(x).max(axis=-1)
    w = np.clip((outer_half_width - t) / (outer_half_width - hole_radius), 0.0, 1.0)[..., None]
    v = w * x / r + (1 - w) * E3
    vn = np.linalg.norm(v, axis=-1, keepdims=True)
    bad = vn[..., 0] < 1e-8
    out = v / np.where(bad[..., None], 1.0, vn)
    out[bad] = E1
    return out


def constant_field(vec):
    vec = np.asarray(vec, dtype=float)

    def f(x):
        return np.broadcast_to(vec, np.shape(x)).copy()

    return f


def nodal_normalize(n: np.ndarray) -> np.ndarray:
    """Rescale every nodal vector to unit length."""
    n = np.asarray(n, dtype=float)
    r = np.linalg.norm(n, axis=1)
    bad = np.flatnonzero(r == 0)
    if len(bad):
        raise ValueError(f"zero nodal vector at vertex {int(bad[0])}")
    return n / r[:, None]


FIELDS = {
    "radial": degree1_field,
    "degree1": degree1_field,
    "degree2": degree2_field,
    "freedericksz": freedericksz_initial,
    "colloid": colloid_initial,
    "colloid_boundary": colloid_boundary,
    "e1": constant_field(E1),
    "e2": constant_field(E2),
    "e3": constant_field(E3),
}


def resolve_field(spec, params: Optional[dict] = None) -> Callable:
    """Field from a registry name, a constant 3-vector or a callable."""
    params = params or {}
    if callable(spec):
        return spec
    if isinstance(spec, str):
        if spec not in FIELDS:
            raise ConfigError(f"unknown field {spec!r}; known: {sorted(FIELDS)}")
        f = FIELDS[spec]
        if params:
            return lambda x: f(x, **params)
        return f
    vec = np.asarray(spec, dtype=float)
    if vec.shape != (3,):
        raise ConfigError(f"a constant field needs 3 components, got {spec!r}")
    return constant_field(vec)


# ------------------------------------------------------------------ scenarios

def _odd_at_least(x: float) -> int:
    n = max(1, math.ceil(x - 1e-9))
    return n if n % 2 else n + 1


def build_mesh(spec: dict) -> TetMesh:
    """Mesh from a spec dict; ``kind`` is ball, box, colloid or file.

    ``h`` is the nominal grid spacing of the structured generators; the
    reported ``mesh.h`` is the longest edge, which is somewhat larger.
    """
    spec = dict(spec)
    kind = spec.pop("kind", None)
    try:
        if kind == "ball":
            R = float(spec.get("radius", 1.0))
            cells = _odd_at_least(2 * R / float(spec["h"]))
            return build_ball_mesh(R, cells=cells, jitter=float(spec.get("jitter", 0.0)),
                                   seed=int(spec.get("seed", 0)))
        if kind == "box":
            lo = np.asarray(spec.get("lo", (0, 0, 0)), dtype=float)
            hi = np.asarray(spec.get("hi", (1, 1, 1)), dtype=float)
            h = float(spec["h"])
            n = [max(1, math.ceil((b - a) / h - 1e-9)) for a, b in zip(lo, hi)]
            return build_box_mesh(lo, hi, *n)
        if kind == "colloid":
            L = float(spec.get("outer_half_width", 2.0))
            r = float(spec.get("hole_radius", 0.75))
            cells = max(2, int(round(2 * L / float(spec["h"]))))
            return build_colloid_mesh(L, r, cells=cells)
        if kind == "file":
            return import_mesh(spec["path"])
    except KeyError as e:
        raise ConfigError(f"mesh spec {kind!r} is missing {e.args[0]!r}") from None
    raise ConfigError(f"unknown mesh kind {kind!r}; use ball, box, colloid or file")


@dataclass(frozen=True)
class Scenario:
    """Everything needed to reproduce one experiment.

    ``tau`` of ``None`` means ``tau_factor * h``.
    """

    name: str
    mesh: dict
    dirichlet: tuple
    boundary: object
    initial: object
    constants: FrankConstants
    eps: float
    tau: Optional[float] = None
    tau_factor: float = 1.0
    max_steps: int = 100_000
    rel_tol: float = 1e-10
    preconditioner: str = "amg"
    field_params: dict = field(default_factory=dict)

    @property
    def h(self) -> Optional[float]:
        return self.mesh.get("h")

    def flow_config(self) -> FlowConfig:
        tau = self.tau if self.tau is not None else self.tau_factor * float(self.h)
        return FlowConfig(tau=tau, eps=self.eps, max_steps=self.max_steps,
                          rel_tol=self.rel_tol, preconditioner=self.preconditioner)

    def with_overrides(self, *, h=None, tau=None, eps=None, max_steps=None, **constants) -> "Scenario":
        s = self
        if h is not None:
            s = replace(s, mesh={**s.mesh, "h": float(h)})
        if tau is not None:
            s = replace(s, tau=float(tau))
        if eps is not None:
            s = replace(s, eps=float(eps))
        if max_steps is not None:
            s = replace(s, max_steps=int(max_steps))
        if constants:
            s = replace(s, constants=replace(s.constants, **constants))
        return s


# structured ball grids are mirror symmetric; a small seeded jitter keeps
# symmetric critical points from trapping the flow
_BALL_JITTER = 0.1

PAA = dict(k1=2.3, k2=1.5, k3=4.8, chi_A=1.21)

PRESETS = {
    "helein": Scenario(
        name="helein",
        mesh={"kind": "ball", "radius": 1.0, "h": 2 ** -3.5, "jitter": _BALL_JITTER},
        dirichlet=("sphere",), boundary="radial", initial="radial",
        constants=FrankConstants(1.0, 0.1, 1.0), eps=5e-4),
    "degree1": Scenario(
        name="degree1",
        mesh={"kind": "ball", "radius": 1.0, "h": 1 / 8, "jitter": _BALL_JITTER},
        dirichlet=("sphere",), boundary="radial", initial="radial",
        constants=FrankConstants(1.0, 1.0, 1.0), eps=5e-4),
    "degree2": Scenario(
        name="degree2",
        mesh={"kind": "ball", "radius": 1.0, "h": 1 / 16, "jitter": _BALL_JITTER},
        dirichlet=("sphere",), boundary="degree2", initial="degree2",
        constants=FrankConstants(1.0, 1.0, 1.0), eps=1e-4),
    "freedericksz": Scenario(
        name="freedericksz",
        mesh={"kind": "box", "lo": (0, 0, 0), "hi": (1, 1, 0.5), "h": 1 / 32},
        dirichlet=("bottom", "top"), boundary="e1", initial="freedericksz",
        constants=FrankConstants(**PAA, H=(0.0, 0.0, 9.5)), eps=5e-5),
    "colloid": Scenario(
        name="colloid",
        mesh={"kind": "colloid", "outer_half_width": 2.0, "hole_radius": 0.75, "h": 1 / 8},
        dirichlet=("outer", "sphere"), boundary="colloid_boundary", initial="colloid",
        constants=FrankConstants(1.0, 1.0, 1.0, chi_A=1.0, H=(0.0, 4.0, 0.0)),
        eps=1e-4, tau_factor=0.25),
}


def get_preset(name: str) -> Scenario:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    return PRESETS[name]


# ------------------------------------------------------------------ config files

_SECTIONS = {"scenario", "mesh", "boundary", "initial", "constants", "flow", "output"}


def _H_from_section(c: dict, default):
    if "H" not in c and "H_magnitude" not in c:
        return default
    direction = np.asarray(c.get("H", default if not callable(default) else (0, 0, 1)), dtype=float)
    if direction.shape != (3,):
        raise ConfigError("constants.H needs 3 components")
    if "H_magnitude" in c:
        nrm = np.linalg.norm(direction)
        if nrm == 0:
            raise ConfigError("constants.H_magnitude given with a zero direction")
        direction = float(c["H_magnitude"]) * direction / nrm
    return tuple(direction)


def load_config(path) -> tuple:
    """Parse a TOML scenario file into (Scenario, output options).

    Sections: ``scenario`` (``preset`` to start from, ``name``), ``mesh``
    (``kind`` plus generator keys), ``boundary`` (``field``, ``regions``),
    ``initial`` (``field`` and field parameters), ``constants`` (``k1``,
    ``k2``, ``k3``, ``k4``, ``chiA``, ``H`` as three components,
    ``H_magnitude``), ``flow`` (``tau``, ``tau_factor``, ``eps``,
    ``max_steps``, ``rel_tol``, ``preconditioner``) and ``output``
    (``dir``, ``vtk_every``).
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    unknown = set(data) - _SECTIONS
    if unknown:
        raise ConfigError(f"{path}: unknown section(s) {sorted(unknown)}")
    sc = data.get("scenario", {})
    if "preset" in sc:
        base = get_preset(sc["preset"])
    else:
        for need in ("mesh", "boundary", "constants", "flow"):
            if need not in data:
                raise ConfigError(f"{path}: section [{need}] is required without a preset")
        base = None

    mesh = dict(base.mesh) if base else {}
    if "mesh" in data:
        m = dict(data["mesh"])
        if m.get("kind", mesh.get("kind")) == "file" and "path" in m:
            m["path"] = str((path.parent / m["path"]).resolve())
        if "kind" in m and base and m["kind"] != base.mesh.get("kind"):
            mesh = {}
        mesh.update(m)

    b = data.get("boundary", {})
    boundary = b.get("field", base.boundary if base else None)
    regions = b.get("regions", list(base.dirichlet) if base else None)
    if boundary is None or regions is None:
        raise ConfigError(f"{path}: [boundary] needs 'field' and 'regions'")
    if isinstance(regions, str):
        regions = [regions]
    ini = dict(data.get("initial", {}))
    initial = ini.pop("field", base.initial if base else boundary)

    c = data.get("constants", {})
    known_c = {"k1", "k2", "k3", "k4", "chiA", "H", "H_magnitude"}
    if set(c) - known_c:
        raise ConfigError(f"{path}: unknown constants {sorted(set(c) - known_c)}")
    fc0 = base.constants if base else None
    try:
        fc = FrankConstants(
            k1=float(c.get("k1", fc0.k1 if fc0 else 1.0)),
            k2=float(c.get("k2", fc0.k2 if fc0 else 1.0)),
            k3=float(c.get("k3", fc0.k3 if fc0 else 1.0)),
            k4=float(c.get("k4", fc0.k4 if fc0 else 0.0)),
            chi_A=float(c.get("chiA", fc0.chi_A if fc0 else 0.0)),
            H=_H_from_section(c, fc0.H if fc0 else (0.0, 0.0, 0.0)))
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from None

    f = data.get("flow", {})
    known_f = {"tau", "tau_factor", "eps", "max_steps", "rel_tol", "preconditioner"}
    if set(f) - known_f:
        raise ConfigError(f"{path}: unknown flow keys {sorted(set(f) - known_f)}")
    if base is None and "eps" not in f:
        raise ConfigError(f"{path}: [flow] needs 'eps'")
    scen = Scenario(
        name=sc.get("name", base.name if base else path.stem),
        mesh=mesh, dirichlet=tuple(regions), boundary=boundary, initial=initial,
        constants=fc,
        eps=float(f.get("eps", base.eps if base else 0)),
        tau=float(f["tau"]) if "tau" in f else (base.tau if base and "tau_factor" not in f else None),
        tau_factor=float(f.get("tau_factor", base.tau_factor if base else 1.0)),
        max_steps=int(f.get("max_steps", base.max_steps if base else 100_000)),
        rel_tol=float(f.get("rel_tol", base.rel_tol if base else 1e-10)),
        preconditioner=str(f.get("preconditioner", base.preconditioner if base else "amg")),
        field_params=ini or (dict(base.field_params) if base else {}),
    )
    if scen.tau is None and scen.h is None:
        raise ConfigError(f"{path}: give flow.tau or a mesh spacing h")
    return scen, dict(data.get("output", {}))


# ------------------------------------------------------------------ VTK

def write_vtk(mesh: TetMesh, fields: dict, path) -> Path:
    """Legacy ASCII VTK unstructured grid with tetrahedra (cell type 10).

    ``fields`` maps names to nodal arrays: (N, 3) arrays become point
    vectors and (N,) arrays point scalars.  A vector field named ``n`` also
    gets the scalar ``n_length_defect`` = |n|^2 - 1.
    """
    path = Path(path)
    N, M = mesh.n_vertices, mesh.n_tets
    lines = ["# vtk DataFile Version 3.0", "frankoseen director field", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {N} double"]
    lines += [" ".join(f"{v:.17g}" for v in p) for p in mesh.vertices]
    lines.append(f"CELLS {M} {5 * M}")
    lines += ["4 " + " ".join(str(int(i)) for i in t) for t in mesh.tets]
    lines.append(f"CELL_TYPES {M}")
    lines += ["10"] * M
    data = dict(fields)
    if "n" in data and "n_length_defect" not in data:
        n = np.asarray(data["n"])
        data["n_length_defect"] = np.einsum("ij,ij->i", n, n) - 1.0
    if data:
        lines.append(f"POINT_DATA {N}")
    for name, arr in data.items():
        arr = np.asarray(arr, dtype=float)
        if arr.shape == (N, 3):
            lines.append(f"VECTORS {name} double")
            lines += [" ".join(f"{v:.17g}" for v in row) for row in arr]
        elif arr.shape == (N,):
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [f"{v:.17g}" for v in arr]
        else:
            raise ValueError(f"field {name!r} has shape {arr.shape}, expected ({N},) or ({N}, 3)")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk(path):
    """Parse a file written by :func:`write_vtk`: (vertices, tets, fields)."""
    tokens = Path(path).read_text().split("\n")
    i = 0
    verts = tets = None
    fields = {}
    N = 0
    while i < len(tokens):
        line = tokens[i].strip()
        parts = line.split()
        if not parts:
            i += 1
            continue
        key = parts[0]
        if key == "POINTS":
            N = int(parts[1])
            verts = np.loadtxt(tokens[i + 1:i + 1 + N], ndmin=2)
            i += 1 + N
        elif key == "CELLS":
            M = int(parts[1])
            cells = np.loadtxt(tokens[i + 1:i + 1 + M], dtype=np.int64, ndmin=2)
            if np.any(cells[:, 0] != 4):
                raise ValueError(f"{path}: only tetrahedral cells are supported")
            tets = cells[:, 1:]
            i += 1 + M
        elif key == "VECTORS":
            fields[parts[1]] = np.loadtxt(tokens[i + 1:i + 1 + N], ndmin=2)
            i += 1 + N
        elif key == "SCALARS":
            fields[parts[1]] = np.loadtxt(tokens[i + 2:i + 2 + N], ndmin=1)
            i += 2 + N
        elif key == "CELL_TYPES":
            i += 1 + int(parts[1])
        else:
            i += 1
    if verts is None or tets is None:
        raise ValueError(f"{path}: missing POINTS or CELLS section")
    return verts, tets, fields


# ------------------------------------------------------------------ running

@dataclass
class RunReport:
    name: str
    initial: EnergyBreakdown
    final: EnergyBreakdown
    iterations: int
    err1: float
    err_inf: float
    boundary_error: float
    converged: bool
    stop_reason: str
    files: dict = field(default_factory=dict)
    n_vertices: int = 0
    n_tets: int = 0
    h: float = float("nan")
    tau: float = float("nan")

    def as_dict(self) -> dict:
        return {"name": self.name, "initial": self.initial.as_dict(), "final": self.final.as_dict(),
                "iterations": self.iterations, "err1": self.err1, "err_inf": self.err_inf,
                "boundary_error": self.boundary_error, "converged": self.converged,
                "stop_reason": self.stop_reason, "files": self.files,
                "n_vertices": self.n_vertices, "n_tets": self.n_tets, "h": self.h, "tau": self.tau}


def check_boundary_data(mesh: TetMesh, g: Callable, faces_mask, tol: float = 1e-10):
    """Raise unless g is unit length at the face quadrature points."""
    faces = mesh.faces[faces_mask]
    if not len(faces):
        return
    bary, _ = fem.quadrature_rule(4, dim=2)
    X = np.einsum("qa,fai->fqi", bary, mesh.vertices[faces]).reshape(-1, 3)
    dev = np.abs(np.linalg.norm(np.asarray(g(X), dtype=float), axis=1) - 1.0)
    if dev.max() > tol:
        j = int(np.argmax(dev))
        raise ConfigError(f"boundary data is not unit length at {X[j].tolist()} (|g| - 1 = {dev[j]:.3e})")


def prepare(scenario: Scenario, mesh: Optional[TetMesh] = None):
    """Mesh, dof map, initial field and boundary function of a scenario."""
    mesh = build_mesh(scenario.mesh) if mesh is None else mesh
    try:
        bc = classify_boundary(mesh, list(scenario.dirichlet))
    except MeshError as e:
        raise ConfigError(str(e)) from None
    g = resolve_field(scenario.boundary)
    params = dict(scenario.field_params)
    if scenario.initial == "colloid" or scenario.boundary == "colloid_boundary":
        geo = {k: scenario.mesh[k] for k in ("hole_radius", "outer_half_width") if k in scenario.mesh}
    else:
        geo = {}
    if scenario.boundary == "colloid_boundary" and geo:
        g = resolve_field(scenario.boundary, geo)
    init_params = {**(geo if scenario.initial == "colloid" else {}), **params}
    f0 = resolve_field(scenario.initial, init_params)
    faces_mask = np.isin(mesh.face_labels.astype(str), _expand_labels(scenario.dirichlet))
    check_boundary_data(mesh, g, faces_mask)
    n0 = nodal_normalize(fem.interpolate(f0, mesh))
    d = bc.dirichlet_nodes
    if len(d):
        n0[d] = nodal_normalize(np.asarray(g(mesh.vertices[d]), dtype=float))
    dofmap = DofMap.from_dirichlet(mesh.n_vertices, d)
    return mesh, dofmap, n0, g, faces_mask


def _expand_labels(regions):
    out = []
    for r in regions:
        out.extend(LABEL_ALIASES.get(r, (r,)))
    return out


def write_history(state: FlowState, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=HISTORY_COLUMNS)
        w.writeheader()
        for row in state.history_rows():
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})
    return path


def run_scenario(scenario, out_dir=None, *, vtk_every: int = 0, mesh: Optional[TetMesh] = None,
                 **overrides) -> RunReport:
    """Run a preset name, config path or :class:`Scenario` end to end.

    With ``out_dir`` the run writes ``history.csv``, ``report.json``,
    ``initial.vtk`` and ``final.vtk`` (plus ``step_XXXXX.vtk`` every
    ``vtk_every`` steps).  If the flow aborts on an energy increase the
    partial outputs are still written before the exception propagates.
    """
    output = {}
    if isinstance(scenario, Scenario):
        scen = scenario
    elif isinstance(scenario, (str, os.PathLike)) and Path(scenario).suffix in (".toml", ".cfg") \
            or (isinstance(scenario, (str, os.PathLike)) and Path(scenario).is_file()):
        scen, output = load_config(scenario)
    else:
        scen = get_preset(str(scenario))
    scen = scen.with_overrides(**overrides)
    out_dir = out_dir if out_dir is not None else output.get("dir")
    vtk_every = vtk_every or int(output.get("vtk_every", 0))

    mesh, dofmap, n0, g, faces_mask = prepare(scen, mesh)
    config = scen.flow_config()
    files = {}
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files["initial_vtk"] = str(write_vtk(mesh, {"n": n0}, out / "initial.vtk"))

    def callback(k, state):
        if out is not None and vtk_every and k % vtk_every == 0:
            write_vtk(mesh, {"n": state.n}, out / f"step_{k:05d}.vtk")

    log.info("%s: %d vertices, %d tets, tau=%g", scen.name, mesh.n_vertices, mesh.n_tets, config.tau)
    error = None
    try:
        state = run_gradient_flow(mesh, n0, scen.constants, dofmap, config, callback=callback)
    except EnergyIncrease as e:
        state, error = e.state, e
    report = RunReport(
        name=scen.name, initial=state.energies[0], final=state.energy, iterations=state.steps,
        err1=state.err1[-1], err_inf=state.err_inf[-1],
        boundary_error=boundary_error(mesh, state.n, g, faces_mask),
        converged=state.converged, stop_reason=state.stop_reason, files=files,
        n_vertices=mesh.n_vertices, n_tets=mesh.n_tets, h=mesh.h, tau=config.tau)
    if out is not None:
        files["history_csv"] = str(write_history(state, out / "history.csv"))
        files["final_vtk"] = str(write_vtk(mesh, {"n": state.n}, out / "final.vtk"))
        files["report_json"] = str(out / "report.json")
        (out / "report.json").write_text(json.dumps(report.as_dict(), indent=2))
    if error is not None:
        raise error
    return report
