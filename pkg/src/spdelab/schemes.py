"""Approximation operators for the discretized system.

A scheme is the data (f~, g, h_u, h_b, eps): f~ defines the approximate
Laplacian multiplier -|k|^2 f(eps k) (with f = +infinity outside the box
max_j |x_j| <= L0), g defines the approximate derivative multiplier
k^j g(eps k^j) with

    g(x) = (exp(i a x) - exp(-i b x)) / ((a + b) x),   g(0) = i,

and the radial cutoffs h_u, h_b (support inside |x| <= L0/2) damp the noise.
The module applies these as diagonal Fourier multipliers, provides the exact
and approximate heat semigroups, the Leray projection, and the physical-space
difference quotient that the spectral derivative reproduces exactly when the
shifts a*eps, b*eps are multiples of the grid step.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .torus import ModeLattice, ScalarField, TWO_PI, VectorField

F_KINDS = ("finite_difference", "galerkin", "table")
H_KINDS = ("indicator", "smooth_bump", "table")


@dataclass
class SchemeSpec:
    """Parameters of one approximation scheme.

    c_f is the positive lower bound of f~ over the box; for the built-in
    kinds it is filled in by `finalize` (numerical minimum for the
    finite-difference profile, 1 for Galerkin).
    """

    f_kind: str = "finite_difference"
    a: float = 1.0
    b: float = 1.0
    L0: float = 6.0
    Lbar0: float = 2.0
    h_kind_u: str = "smooth_bump"
    h_kind_b: str = "smooth_bump"
    eps: float = 0.125
    c_f: float | None = None
    f_table: tuple[tuple[float, ...], tuple[float, ...]] | None = None  # (|x|, value)
    h_table_u: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    h_table_b: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def __post_init__(self):
        if self.f_kind not in F_KINDS:
            raise ValueError(f"unknown f_kind {self.f_kind!r}")
        for hk in (self.h_kind_u, self.h_kind_b):
            if hk not in H_KINDS:
                raise ValueError(f"unknown h_kind {hk!r}")
        if self.a < 0 or self.b < 0 or self.a + self.b <= 0:
            raise ValueError("need a, b >= 0 with a + b > 0")
        if self.L0 <= 0:
            raise ValueError("L0 must be positive")
        if not (0 < self.Lbar0 < self.L0 / 2):
            raise ValueError("need 0 < Lbar0 < L0/2")
        if self.eps <= 0:
            raise ValueError("eps must be positive")

    def finalize(self) -> "SchemeSpec":
        if self.c_f is not None:
            return self
        return replace(self, c_f=_lower_bound_f(self))

    def with_eps(self, eps: float) -> "SchemeSpec":
        return replace(self, eps=eps)


def _fd_profile(x: np.ndarray) -> np.ndarray:
    """4/|x|^2 (sin^2(x1/2) + sin^2(x2/2) + sin^2(x3/2)), value 1 at x = 0."""
    x = np.asarray(x, dtype=np.float64)
    r2 = np.sum(x**2, axis=-1)
    s = np.sum(np.sin(x / 2.0) ** 2, axis=-1)
    safe = np.where(r2 == 0.0, 1.0, r2)
    return np.where(r2 == 0.0, 1.0, 4.0 * s / safe)


def _lower_bound_f(spec: SchemeSpec, samples: int = 121) -> float:
    if spec.f_kind == "galerkin":
        return 1.0
    ax = np.linspace(-spec.L0, spec.L0, samples)
    pts = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
    vals = eval_f_tilde(spec, pts)
    return float(np.min(vals))


def eval_f_tilde(spec: SchemeSpec, x: np.ndarray) -> np.ndarray:
    """The finite radial profile f~ (no box cutoff); x has trailing axis 3."""
    x = np.asarray(x, dtype=np.float64)
    if spec.f_kind == "galerkin":
        return np.ones(x.shape[:-1])
    if spec.f_kind == "finite_difference":
        return _fd_profile(x)
    r = np.sqrt(np.sum(x**2, axis=-1))
    xs, vs = spec.f_table
    return np.interp(r, xs, vs)


def eval_f(spec: SchemeSpec, x: np.ndarray) -> np.ndarray:
    """f(x): f~ inside the box max_j |x_j| <= L0, +infinity outside."""
    x = np.asarray(x, dtype=np.float64)
    inside = np.max(np.abs(x), axis=-1) <= spec.L0
    return np.where(inside, eval_f_tilde(spec, x), np.inf)


def eval_g(spec: SchemeSpec, x: np.ndarray) -> np.ndarray:
    """g(x) = (e^{iax} - e^{-ibx})/((a+b)x) with the removable value g(0) = i."""
    x = np.asarray(x, dtype=np.float64)
    a, b = spec.a, spec.b
    safe = np.where(x == 0.0, 1.0, x)
    val = (np.exp(1j * a * safe) - np.exp(-1j * b * safe)) / ((a + b) * safe)
    return np.where(x == 0.0, 1j, val)


def eval_h(spec: SchemeSpec, which: str, x: np.ndarray) -> np.ndarray:
    """Radial noise cutoff h_u or h_b; support inside |x| <= L0/2, h(0) = 1."""
    x = np.asarray(x, dtype=np.float64)
    r = np.sqrt(np.sum(x**2, axis=-1))
    kind = {"u": spec.h_kind_u, "b": spec.h_kind_b}[which]
    R = spec.L0 / 2.0
    if kind == "indicator":
        return np.where(r <= R, 1.0, 0.0)
    if kind == "smooth_bump":
        t2 = np.minimum((r / R) ** 2, 1.0)
        with np.errstate(divide="ignore"):
            expo = 1.0 - 1.0 / np.maximum(1.0 - t2, 1e-300)
        return np.where(t2 < 1.0, np.exp(np.maximum(expo, -700.0)), 0.0)
    xs, vs = {"u": spec.h_table_u, "b": spec.h_table_b}[which]
    return np.where(r <= R, np.interp(r, xs, vs), 0.0)


# -- multiplier construction on a lattice -------------------------------------


def f_on_lattice(spec: SchemeSpec, lattice: ModeLattice) -> np.ndarray:
    """f(eps k) over the mode cube (np.inf outside the box)."""
    pts = spec.eps * np.moveaxis(lattice.k_stack(), 0, -1)
    return eval_f(spec, pts)


def h_on_lattice(spec: SchemeSpec, lattice: ModeLattice, which: str) -> np.ndarray:
    pts = spec.eps * np.moveaxis(lattice.k_stack(), 0, -1)
    return eval_h(spec, which, pts)


def eps_laplacian_rate(spec: SchemeSpec, lattice: ModeLattice) -> np.ndarray:
    """lambda(k) = |k|^2 f(eps k) (np.inf on killed modes)."""
    return lattice.ksq * f_on_lattice(spec, lattice)


def apply_laplacian_eps(v: ScalarField | VectorField, spec: SchemeSpec):
    """Delta_eps: multiplier -|k|^2 f(eps k); killed (f = inf) modes map to 0.

    Returns (result, killed_mode_count).
    """
    lam = eps_laplacian_rate(spec, v.lattice)
    killed = ~np.isfinite(lam)
    mult = np.where(killed, 0.0, -lam)
    out = type(v)(v.lattice, v.coeff * mult)
    return out, int(np.count_nonzero(killed))


def semigroup_eps(v: ScalarField | VectorField, spec: SchemeSpec, t: float):
    """exp(t Delta_eps); identity at t = 0, annihilates killed modes for t > 0."""
    if t < 0:
        raise ValueError("semigroup time must be nonnegative")
    if t == 0.0:
        return v.copy()
    lam = eps_laplacian_rate(spec, v.lattice)
    mult = np.where(np.isfinite(lam), np.exp(-np.where(np.isfinite(lam), lam, 0.0) * t), 0.0)
    return type(v)(v.lattice, v.coeff * mult)


def semigroup(v: ScalarField | VectorField, t: float):
    """Exact heat semigroup exp(t Delta)."""
    if t < 0:
        raise ValueError("semigroup time must be nonnegative")
    return type(v)(v.lattice, v.coeff * np.exp(-v.lattice.ksq * t))


def dj_eps_multiplier(spec: SchemeSpec, lattice: ModeLattice, j: int) -> np.ndarray:
    """Symbol of D_j^eps: k^j g(eps k^j)."""
    kj = (lattice.k1, lattice.k2, lattice.k3)[j - 1]
    return kj * eval_g(spec, spec.eps * kj)


def apply_dj_eps(v: ScalarField | VectorField, spec: SchemeSpec, j: int):
    if j not in (1, 2, 3):
        raise ValueError(f"direction index must be 1..3, got {j}")
    return type(v)(v.lattice, v.coeff * dj_eps_multiplier(spec, v.lattice, j))


def apply_dj(v: ScalarField | VectorField, j: int):
    """Exact derivative D_j, symbol i k^j."""
    if j not in (1, 2, 3):
        raise ValueError(f"direction index must be 1..3, got {j}")
    kj = (v.lattice.k1, v.lattice.k2, v.lattice.k3)[j - 1]
    return type(v)(v.lattice, v.coeff * (1j * kj))


def apply_h_eps(v: ScalarField | VectorField, spec: SchemeSpec, which: str):
    """Noise cutoff H_{u/b,eps}: multiplier h(eps k)."""
    return type(v)(v.lattice, v.coeff * h_on_lattice(spec, v.lattice, which))


def difference_quotient_grid(
    grid: np.ndarray, spec: SchemeSpec, j: int, shifts: tuple[int, int]
) -> np.ndarray:
    """(u(x + a eps e_j) - u(x - b eps e_j)) / ((a+b) eps) by grid rolls.

    `shifts` gives the two shift distances in grid points; the caller is
    responsible for a*eps and b*eps being exact multiples of the grid step.
    """
    axis = j - 1 - 3  # act on the last three axes
    sa, sb = shifts
    return (np.roll(grid, -sa, axis=axis) - np.roll(grid, sb, axis=axis)) / (
        (spec.a + spec.b) * spec.eps
    )


def leray_project(v: VectorField, mean_tol: float = 1e-12) -> VectorField:
    """Project onto divergence-free fields; rejects fields with a mean mode."""
    if float(np.max(np.abs(v.mean_mode()))) > mean_tol:
        raise ValueError("Leray projection requires a mean-zero field")
    proj = v.lattice.leray_tensor()
    return VectorField(v.lattice, np.einsum("ij...,j...->i...", proj, v.coeff))


def dealias_mask(lattice: ModeLattice) -> np.ndarray:
    """2/3-rule mask: keep modes with max_j |k_j| <= 2N/3."""
    cut = 2.0 * lattice.N / 3.0
    return (
        (np.abs(lattice.k1) <= cut)
        & (np.abs(lattice.k2) <= cut)
        & (np.abs(lattice.k3) <= cut)
    )


# -- configuration -------------------------------------------------------------


def _load_table(path: str) -> tuple[tuple[float, ...], tuple[float, ...]]:
    xs, vs = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            xs.append(float(row[0]))
            vs.append(float(row[1]))
    order = np.argsort(xs)
    return tuple(np.asarray(xs)[order]), tuple(np.asarray(vs)[order])


def scheme_from_config(path: str | Path) -> SchemeSpec:
    """Build a SchemeSpec from a JSON config with a `scheme` section.

    Recognized keys: scheme.f_kind, scheme.a, scheme.b, scheme.L0,
    scheme.Lbar0, scheme.h_kind (or h_kind_u / h_kind_b), scheme.eps, and
    *_table paths (CSV of radius,value rows) for table kinds.
    """
    doc = json.loads(Path(path).read_text())
    sec = doc.get("scheme", doc)
    kw = {}
    for key in ("f_kind", "a", "b", "L0", "Lbar0", "eps"):
        if key in sec:
            kw[key] = sec[key]
    if "h_kind" in sec:
        kw["h_kind_u"] = sec["h_kind"]
        kw["h_kind_b"] = sec["h_kind"]
    for key in ("h_kind_u", "h_kind_b"):
        if key in sec:
            kw[key] = sec[key]
    for key, target in (
        ("f_table", "f_table"),
        ("h_table_u", "h_table_u"),
        ("h_table_b", "h_table_b"),
    ):
        if key in sec:
            kw[target] = _load_table(sec[key])
    return SchemeSpec(**kw).finalize()


def grid_step(lattice: ModeLattice) -> float:
    return TWO_PI / lattice.n
