"""Cloth energy terms, each returning ``(value, gradient)`` with respect to positions.

:class:`ClothModel` precomputes rest-state quantities once per mesh; the
module-level functions are thin wrappers for one-off evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .diagnostics import note
from .mesh import TriMesh
from .proximity import build_self_collision_edges

DISTANCE_FLOOR = 1e-8


@dataclass(frozen=True)
class EnergyParams:
    """Material and solver constants in SI units.

    Membrane moduli are thickness-integrated (Pa·m). ``vertex_mass`` of None
    means lumped masses from ``density``.
    """

    lame_mu: float = 2.36e4
    lame_lambda: float = 4.44e4
    bending_stiffness: float = 3.96e-5
    density: float = 0.2
    vertex_mass: float | None = None
    epsilon_col: float = 4e-3
    collision_weight: float = 1.0
    collision_exponent: float = 1.0
    selfcol_weight: float = 0.0
    repulsive_weight: float = 0.0
    repulsive_threshold: float = 0.05
    dt: float = 1.0 / 30.0
    gravity: tuple[float, float, float] = (0.0, -9.81, 0.0)
    stretch_weight: float = 1.0
    bending_weight: float = 1.0
    inertia_weight: float = 1.0
    external_weight: float = 1.0
    # fraction of the previous velocity dropped before extrapolating; 0 keeps it all
    damping: float = 0.0

    def __post_init__(self):
        for name in ("lame_mu", "lame_lambda", "bending_stiffness", "density", "dt", "repulsive_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.vertex_mass is not None and not self.vertex_mass > 0:
            raise ValueError("vertex_mass must be positive")
        if not 0.0 <= self.damping <= 1.0:
            raise ValueError("damping must lie in [0, 1]")
        if self.epsilon_col < 0:
            raise ValueError("epsilon_col must be nonnegative")
        object.__setattr__(self, "gravity", tuple(float(g) for g in self.gravity))

    def with_(self, **kw) -> "EnergyParams":
        return replace(self, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "EnergyParams":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown energy parameters: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# body signed distance


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float

    def sdf(self, x):
        d = x - np.asarray(self.center)
        r = np.linalg.norm(d, axis=1)
        return r - self.radius, _unit(d, r)


@dataclass(frozen=True)
class Capsule:
    a: tuple[float, float, float]
    b: tuple[float, float, float]
    radius: float

    def sdf(self, x):
        a, b = np.asarray(self.a, dtype=float), np.asarray(self.b, dtype=float)
        ab = b - a
        t = np.clip((x - a) @ ab / max(ab @ ab, 1e-300), 0.0, 1.0)
        d = x - (a + t[:, None] * ab)
        r = np.linalg.norm(d, axis=1)
        return r - self.radius, _unit(d, r)


@dataclass(frozen=True)
class HalfSpace:
    """Solid ``(x - point) . normal <= 0``."""

    point: tuple[float, float, float]
    normal: tuple[float, float, float]

    def sdf(self, x):
        n = np.asarray(self.normal, dtype=float)
        n = n / np.linalg.norm(n)
        return (x - np.asarray(self.point)) @ n, np.broadcast_to(n, x.shape).copy()


def _unit(d, r):
    out = np.zeros_like(d)
    ok = r > 0
    out[ok] = d[ok] / r[ok, None]
    out[~ok, 0] = 1.0
    return out


@dataclass(frozen=True)
class BodySDF:
    """Union of primitives: distance is the minimum over them."""

    primitives: tuple = ()

    def evaluate(self, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        if not self.primitives:
            return np.full(len(x), np.inf), np.zeros_like(x)
        best, grad = None, None
        for p in self.primitives:
            d, g = p.sdf(x)
            if best is None:
                best, grad = d, g
            else:
                m = d < best
                best = np.where(m, d, best)
                grad = np.where(m[:, None], g, grad)
        return best, grad

    @classmethod
    def from_json(cls, items) -> "BodySDF":
        kinds = {"sphere": Sphere, "capsule": Capsule, "halfspace": HalfSpace}
        prims = []
        for it in items:
            it = dict(it)
            kind = it.pop("type")
            prims.append(kinds[kind](**{k: tuple(v) if isinstance(v, list) else v for k, v in it.items()}))
        return cls(tuple(prims))


# ---------------------------------------------------------------------------
# state


@dataclass(frozen=True, eq=False)
class SimState:
    """Positions at t - dt, t and t + dt plus per-vertex external force (N)."""

    x_prev: np.ndarray
    x_curr: np.ndarray
    x_next: np.ndarray
    external_force: np.ndarray

    def __post_init__(self):
        n = len(self.x_curr)
        for name in ("x_prev", "x_next", "external_force"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length differs from x_curr")


# ---------------------------------------------------------------------------
# model with cached rest quantities


class ClothModel:
    """Energy terms for one mesh; rest data comes from ``mesh.rest_vertices`` (or ``vertices``)."""

    def __init__(self, mesh: TriMesh, params: EnergyParams, diagnostics: list | None = None):
        self.mesh = mesh
        self.params = params
        self.diagnostics = [] if diagnostics is None else diagnostics
        self.rest = mesh.vertices if mesh.rest_vertices is None else mesh.rest_vertices

    # ---- rest data ------------------------------------------------------

    @cached_property
    def _membrane(self):
        f = self.mesh.faces
        r = self.rest
        e1 = r[f[:, 1]] - r[f[:, 0]]
        e2 = r[f[:, 2]] - r[f[:, 0]]
        n = np.cross(e1, e2)
        area = 0.5 * np.linalg.norm(n, axis=1)
        ok = area > 1e-14
        if (~ok).any():
            note(self.diagnostics, "degenerate_rest_face", "zero-area rest face skipped", count=int((~ok).sum()))
        f = f[ok]
        e1, e2, n, area = e1[ok], e2[ok], n[ok], area[ok]
        u = e1 / np.linalg.norm(e1, axis=1, keepdims=True)
        v = np.cross(n / np.linalg.norm(n, axis=1, keepdims=True), u)
        Dm = np.empty((len(f), 2, 2))
        Dm[:, 0, 0] = np.einsum("ij,ij->i", e1, u)
        Dm[:, 1, 0] = np.einsum("ij,ij->i", e1, v)
        Dm[:, 0, 1] = np.einsum("ij,ij->i", e2, u)
        Dm[:, 1, 1] = np.einsum("ij,ij->i", e2, v)
        G0 = _gram(np.stack([e1, e2], axis=2))
        return f, np.linalg.inv(Dm), area, G0

    @cached_property
    def masses(self) -> np.ndarray:
        if self.params.vertex_mass is not None:
            return np.full(self.mesh.n_vertices, float(self.params.vertex_mass))
        area = self.mesh.face_areas(self.rest)
        m = np.zeros(self.mesh.n_vertices)
        for k in range(3):
            np.add.at(m, self.mesh.faces[:, k], area / 3.0)
        m *= self.params.density
        # isolated vertices still need inertia
        m[m <= 0] = self.params.density * max(float(area.mean()) if len(area) else 1.0, 1e-12) / 3.0
        return m

    @cached_property
    def hinges(self):
        """(x0, x1, x2, x3) per interior edge, rest angle and weight |e|^2 * 3 / (2 (A1 + A2))."""
        m = self.mesh
        adj = m.face_adjacency
        f = m.faces
        rows = []
        for fi in range(m.n_faces):
            for k in range(3):
                g = adj[fi, k]
                if g > fi:
                    x0, x1 = f[fi, k], f[fi, (k + 1) % 3]
                    x2 = f[fi, (k + 2) % 3]
                    x3 = [v for v in f[g] if v != x0 and v != x1][0]
                    rows.append((x0, x1, x2, x3))
        H = np.array(rows, dtype=np.int64).reshape(-1, 4)
        r = self.rest
        phi0, _ = _hinge_angle(r, H)
        e = r[H[:, 1]] - r[H[:, 0]]
        a1 = 0.5 * np.linalg.norm(np.cross(e, r[H[:, 2]] - r[H[:, 0]]), axis=1)
        a2 = 0.5 * np.linalg.norm(np.cross(r[H[:, 3]] - r[H[:, 0]], e), axis=1)
        ok = (a1 + a2) > 1e-14
        if (~ok).any():
            note(self.diagnostics, "degenerate_hinge", "zero-area rest hinge skipped", count=int((~ok).sum()))
        w = np.zeros(len(H))
        w[ok] = 3.0 * np.einsum("ij,ij->i", e, e)[ok] / (2.0 * (a1 + a2)[ok])
        return H, phi0, w

    # ---- terms ----------------------------------------------------------

    def stretching(self, x):
        """St. Venant-Kirchhoff membrane energy.

        Strain is formed from the difference of edge Gram matrices, so a
        configuration bitwise equal to the rest state gives exactly zero.
        """
        p = self.params
        f, Dinv, area, G0 = self._membrane
        Ds = np.stack([x[f[:, 1]] - x[f[:, 0]], x[f[:, 2]] - x[f[:, 0]]], axis=2)
        G = _gram(Ds)
        E = 0.5 * np.transpose(Dinv, (0, 2, 1)) @ (G - G0) @ Dinv
        trE = E[:, 0, 0] + E[:, 1, 1]
        psi = 0.5 * p.lame_lambda * trE**2 + p.lame_mu * np.einsum("fij,fij->f", E, E)
        S = 2.0 * p.lame_mu * E + p.lame_lambda * trE[:, None, None] * np.eye(2)
        H = area[:, None, None] * (Ds @ (Dinv @ S @ np.transpose(Dinv, (0, 2, 1))))
        g = np.zeros_like(x)
        np.add.at(g, f[:, 1], H[:, :, 0])
        np.add.at(g, f[:, 2], H[:, :, 1])
        np.add.at(g, f[:, 0], -H[:, :, 0] - H[:, :, 1])
        return float((area * psi).sum()), g

    def bending(self, x):
        """Hinge energy ``k (phi - phi_rest)^2 * 3 |e|^2 / (2 (A1 + A2))`` with rest lengths and areas."""
        H, phi0, w = self.hinges
        g = np.zeros_like(x)
        if len(H) == 0:
            return 0.0, g
        phi, dphi = _hinge_angle(x, H, with_grad=True)
        d = _wrap(phi - phi0)
        k = self.params.bending_stiffness
        coef = 2.0 * k * w * d
        for c in range(4):
            np.add.at(g, H[:, c], coef[:, None] * dphi[c])
        return float((k * w * d * d).sum()), g

    def collision(self, x, body: BodySDF | None):
        return collision_energy(x, body, self.params)

    def inertia(self, x, x_curr, x_prev):
        dt2 = self.params.dt**2
        dev = (x - x_curr) - (1.0 - self.params.damping) * (x_curr - x_prev)
        m = self.masses
        return float(0.5 / dt2 * (m * np.einsum("ij,ij->i", dev, dev)).sum()), (m / dt2)[:, None] * dev

    @staticmethod
    def external(x, q):
        return -float(np.einsum("ij,ij->", q, x)), -np.asarray(q, dtype=np.float64).copy()

    def repulsive(self, x, pairs: np.ndarray | None = None):
        """Sum of ``-log(d^2)`` over non-edge pairs closer than the threshold."""
        if pairs is None:
            pairs = build_self_collision_edges(self.mesh, self.params.repulsive_threshold, x).pairs
        g = np.zeros_like(x)
        if len(pairs) == 0:
            return 0.0, g
        d = x[pairs[:, 0]] - x[pairs[:, 1]]
        r2 = np.einsum("ij,ij->i", d, d)
        floor = r2 < DISTANCE_FLOOR**2
        if floor.any():
            note(self.diagnostics, "coincident_pair", "pair distance clamped to floor", count=int(floor.sum()))
        r2c = np.where(floor, DISTANCE_FLOOR**2, r2)
        gi = np.where(floor[:, None], 0.0, -2.0 * d / r2c[:, None])
        np.add.at(g, pairs[:, 0], gi)
        np.add.at(g, pairs[:, 1], -gi)
        return float(-np.log(r2c).sum()), g

    def external_force(self, extra: np.ndarray | None = None) -> np.ndarray:
        """``m_i g`` plus an optional per-vertex force."""
        q = self.masses[:, None] * np.asarray(self.params.gravity)[None, :]
        return q if extra is None else q + extra

    # ---- total ----------------------------------------------------------

    def total(self, state: SimState, body: BodySDF | None = None, selfcol=None, x=None,
              repulsive_pairs=None):
        """Weighted sum of terms at ``x`` (default ``state.x_next``).

        ``selfcol`` is anything with ``evaluate(x) -> (value, grad)`` (a frozen
        loss) or None. Returns ``(value, gradient, per-term values)``.
        """
        p = self.params
        x = state.x_next if x is None else x
        terms = {}
        g = np.zeros_like(x)

        def add(name, weight, res):
            terms[name] = res[0]
            if weight != 0.0:
                g[:] += weight * res[1]
            return weight * res[0]

        total = 0.0
        total += add("stretching", p.stretch_weight, self.stretching(x))
        total += add("bending", p.bending_weight, self.bending(x))
        total += add("collision", 1.0, self.collision(x, body))
        total += add("inertia", p.inertia_weight, self.inertia(x, state.x_curr, state.x_prev))
        total += add("external", p.external_weight, self.external(x, state.external_force))
        if p.repulsive_weight != 0.0:
            total += add("repulsive", p.repulsive_weight, self.repulsive(x, repulsive_pairs))
        if selfcol is not None:
            total += add("selfcol", p.selfcol_weight, selfcol.evaluate(x))
        return total, g, terms


def _gram(Ds):
    """Per-face 2x2 Gram matrix of the two edge columns."""
    return np.einsum("fki,fkj->fij", Ds, Ds)


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def _hinge_angle(x, H, with_grad: bool = False):
    """Signed bend angle (0 when flat) per hinge and optionally its gradient per hinge vertex."""
    x0, x1, x2, x3 = (x[H[:, k]] for k in range(4))
    e = x1 - x0
    L = np.linalg.norm(e, axis=1)
    n1 = np.cross(e, x2 - x0)
    n2 = np.cross(x3 - x0, e)
    sin = np.einsum("ij,ij->i", np.cross(n1, n2), e) / np.maximum(L, 1e-300)
    cos = np.einsum("ij,ij->i", n1, n2)
    phi = np.arctan2(sin, cos)
    if not with_grad:
        return phi, None
    nn1 = np.maximum(np.einsum("ij,ij->i", n1, n1), 1e-300)
    nn2 = np.maximum(np.einsum("ij,ij->i", n2, n2), 1e-300)
    g2 = -(L / nn1)[:, None] * n1
    g3 = -(L / nn2)[:, None] * n2
    L2 = np.maximum(L * L, 1e-300)
    t2 = np.einsum("ij,ij->i", x2 - x0, e) / L2
    t3 = np.einsum("ij,ij->i", x3 - x0, e) / L2
    g0 = -(1 - t2)[:, None] * g2 - (1 - t3)[:, None] * g3
    g1 = -t2[:, None] * g2 - t3[:, None] * g3
    return phi, (g0, g1, g2, g3)


def dihedral_angles(mesh: TriMesh, x: np.ndarray | None = None) -> np.ndarray:
    """Interior dihedral angle per hinge (pi when flat)."""
    model = ClothModel(mesh, EnergyParams())
    H = model.hinges[0]
    phi, _ = _hinge_angle(mesh.vertices if x is None else x, H)
    return np.pi - phi


# ---------------------------------------------------------------------------
# functional wrappers


def stretching_energy(mesh: TriMesh, x_next, params: EnergyParams, diagnostics=None):
    return ClothModel(mesh, params, diagnostics).stretching(np.asarray(x_next, dtype=np.float64))


def bending_energy(mesh: TriMesh, x_next, params: EnergyParams, diagnostics=None):
    return ClothModel(mesh, params, diagnostics).bending(np.asarray(x_next, dtype=np.float64))


def collision_energy(x_next, body: BodySDF | None, params: EnergyParams):
    """``w * sum max(eps - sdf(x), 0)^p`` over vertices."""
    x = np.asarray(x_next, dtype=np.float64).reshape(-1, 3)
    g = np.zeros_like(x)
    if body is None or not body.primitives:
        return 0.0, g
    d, n = body.evaluate(x)
    pen = np.maximum(params.epsilon_col - d, 0.0)
    e = params.collision_exponent
    act = pen > 0
    g[act] = -(params.collision_weight * e * pen[act] ** (e - 1.0))[:, None] * n[act]
    return params.collision_weight * float((pen**e).sum()), g


def inertia_energy(state: SimState, params: EnergyParams, masses: np.ndarray):
    dt2 = params.dt**2
    dev = (state.x_next - state.x_curr) - (1.0 - params.damping) * (state.x_curr - state.x_prev)
    return float(0.5 / dt2 * (masses * np.einsum("ij,ij->i", dev, dev)).sum()), (masses / dt2)[:, None] * dev


def external_energy(x_next, state: SimState):
    return ClothModel.external(np.asarray(x_next, dtype=np.float64), state.external_force)


def repulsive_loss(mesh: TriMesh, x_next, params: EnergyParams, diagnostics=None):
    return ClothModel(mesh, params, diagnostics).repulsive(np.asarray(x_next, dtype=np.float64))
