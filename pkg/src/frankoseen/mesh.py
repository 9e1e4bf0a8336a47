"""Conforming tetrahedral meshes: structured generators, file I/O and
Dirichlet boundary classification.

All generators produce positively oriented tetrahedra and label every
boundary face with a region name.  Box meshes use the labels ``left``,
``right`` (x), ``front``, ``back`` (y), ``bottom``, ``top`` (z); the alias
``sides`` expands to the four lateral labels.  Ball meshes label their
boundary ``sphere``; the colloid domain uses ``sphere`` and ``outer``.
"""
from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

BOX_LABELS = ("left", "right", "front", "back", "bottom", "top")
LABEL_ALIASES = {"sides": ("left", "right", "front", "back")}


class MeshError(ValueError):
    """Raised for invalid mesh input or generator arguments."""


@dataclass(frozen=True, eq=False)
class TetMesh:
    """Immutable tetrahedral mesh.

    Attributes
    ----------
    vertices : (N, 3) float array
    tets : (M, 4) int array, positively oriented
    faces : (K, 3) int array of boundary faces
    face_labels : (K,) array of region names, one per boundary face
    """

    vertices: np.ndarray
    tets: np.ndarray
    faces: np.ndarray
    face_labels: np.ndarray

    def __post_init__(self):
        for name in ("vertices", "tets", "faces", "face_labels"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    @cached_property
    def volumes(self) -> np.ndarray:
        return signed_volumes(self.vertices, self.tets)

    @property
    def volume(self) -> float:
        return float(self.volumes.sum())

    @cached_property
    def element_diameters(self) -> np.ndarray:
        """Longest edge of every tetrahedron."""
        p = self.vertices[self.tets]
        longest = np.zeros(len(self.tets))
        for i, j in itertools.combinations(range(4), 2):
            longest = np.maximum(longest, np.linalg.norm(p[:, i] - p[:, j], axis=1))
        return longest

    @property
    def h(self) -> float:
        return float(self.element_diameters.max())

    @property
    def regions(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.face_labels.tolist())))

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.faces)

    @cached_property
    def geometry(self):
        from .fem import element_geometry

        return element_geometry(self)


@dataclass(frozen=True)
class BoundaryClassification:
    dirichlet_nodes: np.ndarray
    region_of_face: np.ndarray
    dirichlet_regions: tuple[str, ...] = field(default=())


def signed_volumes(vertices, tets):
    p = vertices[tets]
    e = p[:, 1:] - p[:, :1]
    return np.linalg.det(e) / 6.0


def _fix_orientation(vertices, tets):
    tets = np.array(tets, dtype=np.int64, copy=True)
    vol = signed_volumes(vertices, tets)
    neg = vol < 0
    tets[neg, 2], tets[neg, 3] = tets[neg, 3].copy(), tets[neg, 2].copy()
    return tets


def _tet_faces(tets):
    """All 4M faces, each with the local vertex opposite to it dropped."""
    return np.concatenate([tets[:, [1, 2, 3]], tets[:, [0, 3, 2]],
                           tets[:, [0, 1, 3]], tets[:, [0, 2, 1]]])


def boundary_faces(tets):
    """Faces belonging to exactly one tet.

    Raises MeshError if some face is shared by more than two tets.
    """
    faces = _tet_faces(np.asarray(tets))
    key = np.sort(faces, axis=1)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if counts.max(initial=0) > 2:
        raise MeshError("non-conforming mesh: a face is shared by more than two tets")
    return faces[counts[inverse] == 1]


def check_conforming(mesh: TetMesh) -> None:
    """Every interior face is shared by exactly two tets and the stored
    boundary faces are exactly the faces owned by a single tet."""
    found = np.sort(boundary_faces(mesh.tets), axis=1)
    stored = np.sort(np.asarray(mesh.faces), axis=1)
    a = {tuple(f) for f in found.tolist()}
    b = {tuple(f) for f in stored.tolist()}
    if a != b:
        raise MeshError("boundary faces do not match the tet connectivity")


def _finalize(vertices, tets, labeler) -> TetMesh:
    vertices = np.ascontiguousarray(vertices, dtype=float)
    tets = _fix_orientation(vertices, tets)
    if np.any(np.abs(signed_volumes(vertices, tets)) <= 1e-14 * max(1.0, np.ptp(vertices) ** 3)):
        raise MeshError("degenerate (zero-volume) tetrahedron")
    faces = boundary_faces(tets)
    labels = np.asarray(labeler(vertices[faces].mean(axis=1)), dtype=object)
    return TetMesh(vertices, tets, faces, labels)


# Kuhn subdivision of the unit cube: one tet per permutation of the axes,
# all sharing the main diagonal, which makes neighbouring cells conform.
_CUBE_CORNERS = np.array(list(itertools.product((0, 1), repeat=3)))  # (i, j, k) bits


def _kuhn_tets():
    out = []
    for perm in itertools.permutations(range(3)):
        path = [np.zeros(3, dtype=int)]
        for ax in perm:
            nxt = path[-1].copy()
            nxt[ax] = 1
            path.append(nxt)
        out.append([int(p[0] * 4 + p[1] * 2 + p[2]) for p in path])
    return np.array(out)


_KUHN = _kuhn_tets()


def _structured_grid(lo, hi, nx, ny, nz, keep_cell=None, radial=False):
    """Vertices and Kuhn tets of a structured grid on [lo, hi].

    With ``radial`` the Kuhn pattern is mirrored along each axis in the lower
    half of the grid so that every cell's main diagonal points towards the
    centre.  Face diagonals then depend only on the other two axes, so the
    split stays conforming.
    """
    xs = [np.linspace(lo[d], hi[d], n + 1) for d, n in enumerate((nx, ny, nz))]
    X, Y, Z = np.meshgrid(*xs, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    I, J, K = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    I, J, K = I.ravel(), J.ravel(), K.ravel()
    if keep_cell is not None:
        mask = keep_cell(I, J, K)
        I, J, K = I[mask], J[mask], K[mask]
    corners = np.stack([vid(I + a, J + b, K + c) for a, b, c in _CUBE_CORNERS], axis=1)
    if radial:
        flip = ((2 * I < nx - 1) * 4 + (2 * J < ny - 1) * 2 + (2 * K < nz - 1)).astype(np.int64)
        local = np.bitwise_xor(_KUHN[None, :, :], flip[:, None, None])
        tets = np.take_along_axis(corners[:, None, :], local, axis=2).reshape(-1, 4)
    else:
        tets = corners[:, _KUHN].reshape(-1, 4)
    used = np.unique(tets)
    remap = -np.ones(len(verts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return verts[used], remap[tets]


def build_box_mesh(lo, hi, nx: int, ny: int, nz: int) -> TetMesh:
    """Structured mesh of the box [lo, hi] with each cell split into 6 tets."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if min(nx, ny, nz) < 1:
        raise MeshError(f"cell counts must be >= 1, got {(nx, ny, nz)}")
    if lo.shape != (3,) or hi.shape != (3,) or np.any(hi <= lo):
        raise MeshError(f"degenerate box {lo} .. {hi}")
    verts, tets = _structured_grid(lo, hi, nx, ny, nz)
    tol = 1e-9 * np.max(hi - lo)

    def labeler(c):
        out = np.empty(len(c), dtype=object)
        tests = [(0, lo[0]), (0, hi[0]), (1, lo[1]), (1, hi[1]), (2, lo[2]), (2, hi[2])]
        for label, (d, v) in zip(BOX_LABELS, tests):
            out[np.abs(c[:, d] - v) < tol] = label
        return out

    return _finalize(verts, tets, labeler)


def _odd_ball_cells(refinement):
    if refinement < 0:
        raise MeshError("refinement must be >= 0")
    return 2 ** (refinement + 1) + 1


def build_ball_mesh(radius: float = 1.0, refinement: int = 0, *, cells: int | None = None,
                    jitter: float = 0.0, seed: int = 0) -> TetMesh:
    """Mesh of the ball of given radius centred at the origin.

    A structured grid of ``cells``**3 cubes on [-1, 1]^3 is mapped onto the
    ball by the radial map x -> radius * x * |x|_inf / |x|_2, which sends the
    cube surface onto the sphere.  The cell count is odd (2**(refinement+1)+1
    unless given), so no vertex sits at the origin.

    ``jitter`` > 0 moves interior grid vertices by a seeded uniform offset of
    at most ``jitter`` grid spacings per coordinate before the radial map.
    This removes the mirror symmetries of the structured split, which would
    otherwise pin symmetric critical points of the flow.
    """
    n = _odd_ball_cells(refinement) if cells is None else int(cells)
    if n < 1 or n % 2 == 0:
        raise MeshError(f"ball meshes need an odd cell count, got {n}")
    if radius <= 0:
        raise MeshError("radius must be positive")
    if not 0 <= jitter <= 0.15:
        raise MeshError(f"jitter must lie in [0, 0.15], got {jitter}")
    verts, tets = _structured_grid((-1, -1, -1), (1, 1, 1), n, n, n, radial=True)
    tets = _fix_orientation(verts, tets)
    rinf = np.abs(verts).max(axis=1)
    on_surface = np.isclose(rinf, 1.0)
    if jitter > 0:
        rng = np.random.default_rng(seed)
        offset = rng.uniform(-1.0, 1.0, verts.shape) * (jitter * 2.0 / n)
        inner = ~on_surface
        verts = verts.copy()
        verts[inner] += offset[inner]
        # keep the origin off the vertex set
        rinf = np.abs(verts).max(axis=1)
    r2 = np.linalg.norm(verts, axis=1)
    mapped = radius * verts * (rinf / r2)[:, None]
    # exact projection of the cube surface
    mapped[on_surface] = radius * verts[on_surface] / r2[on_surface, None]
    if np.any(signed_volumes(mapped, tets) <= 0):
        raise MeshError("jitter inverted an element")
    return _finalize(mapped, tets, lambda c: np.full(len(c), "sphere", dtype=object))


def build_colloid_mesh(outer_half_width: float = 2.0, hole_radius: float = 0.75,
                       refinement: int = 3, *, cells: int | None = None) -> TetMesh:
    """Mesh of the cube [-L, L]^3 with the ball B_r(0) removed.

    A structured grid with ``cells`` (default 2**(refinement+2)) cubes per
    side loses a central block of cubes of half-width close to the hole
    radius; a radial blend then maps the faces of that block onto the
    sphere while leaving the outer boundary fixed.
    """
    L, r = float(outer_half_width), float(hole_radius)
    if not 0 < r < L:
        raise MeshError("need 0 < hole_radius < outer_half_width")
    n = 2 ** (refinement + 2) if cells is None else int(cells)
    s = 2 * L / n
    m = int(round(1.7 * r / s))
    if (n - m) % 2:
        m += 1
    a = 0.5 * m * s
    if m < 1 or a < r / np.sqrt(3) or n - m < 2:
        raise MeshError(f"{n} cells per side cannot resolve a hole of radius {r}")
    lo_c = (n - m) // 2

    def keep(I, J, K):
        inside = ((I >= lo_c) & (I < lo_c + m) & (J >= lo_c) & (J < lo_c + m)
                  & (K >= lo_c) & (K < lo_c + m))
        return ~inside

    verts, tets = _structured_grid((-L, -L, -L), (L, L, L), n, n, n, keep_cell=keep)
    t = np.abs(verts).max(axis=1)
    norm = np.linalg.norm(verts, axis=1)
    theta = np.clip((t - a) / (L - a), 0.0, 1.0)
    rho = (1 - theta) * r + theta * norm * L / t
    mapped = verts / norm[:, None] * rho[:, None]
    on_hole = np.isclose(t, a)
    mapped[on_hole] = r * verts[on_hole] / norm[on_hole, None]

    def labeler(c):
        return np.where(np.abs(c).max(axis=1) > 0.5 * (L + r), "outer", "sphere").astype(object)

    return _finalize(mapped, tets, labeler)


def classify_boundary(mesh: TetMesh, dirichlet_regions) -> BoundaryClassification:
    """Collect the vertices of all boundary faces in the given regions."""
    if isinstance(dirichlet_regions, str):
        dirichlet_regions = (dirichlet_regions,)
    wanted = set()
    for label in dirichlet_regions:
        wanted.update(LABEL_ALIASES.get(label, (label,)))
    unknown = wanted - set(mesh.regions)
    if unknown:
        raise MeshError(f"unknown boundary region(s) {sorted(unknown)}; mesh has {list(mesh.regions)}")
    mask = np.isin(mesh.face_labels.astype(str), sorted(wanted))
    nodes = np.unique(mesh.faces[mask]) if mask.any() else np.zeros(0, dtype=np.int64)
    return BoundaryClassification(nodes, mesh.face_labels, tuple(sorted(wanted)))


# ---------------------------------------------------------------- file I/O

def export_mesh(mesh: TetMesh, path) -> None:
    """Write the plain ASCII ``tetmesh 1`` format."""
    with open(path, "w") as fh:
        fh.write("tetmesh 1\n")
        fh.write(f"vertices {mesh.n_vertices}\n")
        for x, y, z in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
        fh.write(f"tets {mesh.n_tets}\n")
        for t in mesh.tets:
            fh.write(" ".join(map(str, t)) + "\n")
        labels = mesh.face_labels.astype(str)
        for region in dict.fromkeys(labels.tolist()):
            sel = mesh.faces[labels == region]
            fh.write(f"faces {len(sel)} {region}\n")
            for f in sel:
                fh.write(" ".join(map(str, f)) + "\n")


def import_mesh(path) -> TetMesh:
    """Read a mesh in the ``tetmesh 1`` format or Gmsh 2.2 ASCII (.msh).

    Negatively oriented tets are reoriented by a vertex swap.
    """
    with open(path) as fh:
        first = fh.readline().strip()
    if first.startswith("$MeshFormat"):
        return _read_gmsh(path)
    if first.split() != ["tetmesh", "1"]:
        raise MeshError(f"{path}:1: unknown mesh header {first!r}")
    return _read_tetmesh(path)


class _Lines:
    def __init__(self, path):
        self.path = path
        with open(path) as fh:
            self.lines = [ln.strip() for ln in fh]
        self.pos = 0

    def next(self):
        while self.pos < len(self.lines) and not self.lines[self.pos]:
            self.pos += 1
        if self.pos >= len(self.lines):
            raise MeshError(f"{self.path}: unexpected end of file")
        self.pos += 1
        return self.pos, self.lines[self.pos - 1]

    def at_end(self):
        while self.pos < len(self.lines) and not self.lines[self.pos]:
            self.pos += 1
        return self.pos >= len(self.lines)

    def error(self, lineno, msg):
        return MeshError(f"{self.path}:{lineno}: {msg}")


def _parse_row(src, lineno, text, n, kind):
    parts = text.split()
    if len(parts) != n:
        raise src.error(lineno, f"expected {n} values, got {len(parts)}")
    try:
        return [kind(p) for p in parts]
    except ValueError as exc:
        raise src.error(lineno, str(exc)) from None


def _read_tetmesh(path) -> TetMesh:
    src = _Lines(path)
    src.next()
    lineno, text = src.next()
    head = text.split()
    if len(head) != 2 or head[0] != "vertices":
        raise src.error(lineno, "expected 'vertices N'")
    nv = int(head[1])
    verts = np.array([_parse_row(src, *src.next(), 3, float) for _ in range(nv)]).reshape(-1, 3)
    lineno, text = src.next()
    head = text.split()
    if len(head) != 2 or head[0] != "tets":
        raise src.error(lineno, "expected 'tets M'")
    tet_rows = []
    for _ in range(int(head[1])):
        ln, t = src.next()
        row = _parse_row(src, ln, t, 4, int)
        if min(row) < 0 or max(row) >= nv:
            raise src.error(ln, f"tet references vertex outside 0..{nv - 1}")
        tet_rows.append(row)
    tets = np.array(tet_rows, dtype=np.int64).reshape(-1, 4)
    face_rows, labels = [], []
    while not src.at_end():
        ln, text = src.next()
        head = text.split()
        if len(head) != 3 or head[0] != "faces":
            raise src.error(ln, "expected 'faces K region'")
        for _ in range(int(head[1])):
            fl, ft = src.next()
            row = _parse_row(src, fl, ft, 3, int)
            if min(row) < 0 or max(row) >= nv:
                raise src.error(fl, f"face references vertex outside 0..{nv - 1}")
            face_rows.append((fl, row))
            labels.append(head[2])
    return _assemble_imported(src, verts, tets, face_rows, labels)


def _assemble_imported(src, verts, tets, face_rows, labels) -> TetMesh:
    vol = signed_volumes(verts, tets)
    scale = max(1.0, float(np.ptp(verts))) ** 3
    bad = np.flatnonzero(np.abs(vol) <= 1e-14 * scale)
    if len(bad):
        raise MeshError(f"{src.path}: tet {int(bad[0])} has zero volume")
    tets = _fix_orientation(verts, tets)
    bfaces = boundary_faces(tets)
    owner = {tuple(sorted(f)): tuple(f) for f in bfaces.tolist()}
    label_of = {}
    for (lineno, row), label in zip(face_rows, labels):
        key = tuple(sorted(row))
        if key not in owner:
            raise src.error(lineno, f"face {row} is not a boundary face of the tets")
        label_of[key] = label
    faces = np.array([owner[k] for k in owner], dtype=np.int64).reshape(-1, 3)
    face_labels = np.array([label_of.get(k, "unlabeled") for k in owner], dtype=object)
    return TetMesh(np.ascontiguousarray(verts, dtype=float), tets, faces, face_labels)


def _read_gmsh(path) -> TetMesh:
    """Gmsh MSH 2.2 ASCII restricted to linear tets (type 4) and triangles
    (type 2); triangle physical tags become region labels."""
    src = _Lines(path)
    names = {}
    nodes = None
    tet_rows, face_rows, face_tags = [], [], []
    while not src.at_end():
        ln, text = src.next()
        if text == "$MeshFormat":
            ln, text = src.next()
            if not text.startswith("2"):
                raise src.error(ln, "only MSH 2.x ASCII is supported")
            src.next()
        elif text == "$PhysicalNames":
            _, cnt = src.next()
            for _ in range(int(cnt)):
                _, t = src.next()
                dim, tag, name = t.split(maxsplit=2)
                names[int(tag)] = name.strip('"')
            src.next()
        elif text == "$Nodes":
            _, cnt = src.next()
            ids, coords = [], []
            for _ in range(int(cnt)):
                l2, t = src.next()
                row = _parse_row(src, l2, t, 4, float)
                ids.append(int(row[0]))
                coords.append(row[1:])
            nodes = dict(zip(ids, range(len(ids))))
            verts = np.array(coords)
            src.next()
        elif text == "$Elements":
            if nodes is None:
                raise src.error(ln, "$Elements before $Nodes")
            _, cnt = src.next()
            for _ in range(int(cnt)):
                l2, t = src.next()
                parts = [int(p) for p in t.split()]
                etype, ntags = parts[1], parts[2]
                tags = parts[3:3 + ntags]
                conn = parts[3 + ntags:]
                try:
                    idx = [nodes[c] for c in conn]
                except KeyError as exc:
                    raise src.error(l2, f"element references unknown node {exc.args[0]}") from None
                if etype == 4:
                    tet_rows.append(idx)
                elif etype == 2:
                    face_rows.append((l2, idx))
                    face_tags.append(tags[0] if tags else 0)
            src.next()
        elif text.startswith("$"):
            end = "$End" + text[1:]
            while src.next()[1] != end:
                pass
    if nodes is None or not tet_rows:
        raise MeshError(f"{path}: no linear tetrahedra found")
    labels = [names.get(t, str(t)) for t in face_tags]
    return _assemble_imported(src, verts, np.array(tet_rows, dtype=np.int64), face_rows, labels)
