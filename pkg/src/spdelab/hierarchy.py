"""Mild-solution hierarchy for the split systems.

The solution splits into a Gaussian level y1, forced linear levels y2, y3,
an auxiliary smoothing pair K, and a Picard fixed point for the remainder
y4; each level is integrated in mild form with a first-order exponential
integrator,

    y(t+dt) = e^{-lam dt} y(t) + dt phi1(lam dt) F(t),
    phi1(z) = (1 - e^{-z}) / z,

where lam(k) = |k|^2 f(eps k) in approximate mode and |k|^2 in continuum
mode.  Nonlinear terms are evaluated pseudo-spectrally (optional 2/3-rule
dealiasing); in approximate mode the diamond products of mixed levels add
the constant-weighted linear terms built from the second-chaos constant
tensors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import constants as renorm
from .bony import bony_decompose, paraproduct_lt
from .schemes import SchemeSpec, dealias_mask, dj_eps_multiplier, eps_laplacian_rate
from .torus import (
    FOURIER_SCALE,
    ModeLattice,
    ScalarField,
    VectorField,
    dft_forward,
    dft_inverse,
    vector_holder_norm,
)
from .fields import CoupledOUEnsemble, NoiseSpec

logger = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    dt: float
    T: float
    picard_max_iter: int = 40
    tol: float = 1e-9
    dealias: bool = True
    contraction_alpha: float = -0.6
    use_constants: bool = True

    def __post_init__(self):
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("dt and T must be positive")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")

    @property
    def nsteps(self) -> int:
        return max(1, round(self.T / self.dt))


class OperatorSet:
    """Multipliers of one mode (approximate or continuum) on a lattice."""

    def __init__(self, which: str, scheme: SchemeSpec, lattice: ModeLattice):
        if which not in ("approx", "cont"):
            raise ValueError(f"mode must be 'approx' or 'cont', got {which!r}")
        self.which = which
        self.lattice = lattice
        self.scheme = scheme.finalize()
        if which == "approx":
            self.lam = eps_laplacian_rate(self.scheme, lattice)
            self.dmult = np.stack(
                [
                    np.broadcast_to(
                        dj_eps_multiplier(self.scheme, lattice, j), lattice.shape
                    )
                    for j in (1, 2, 3)
                ]
            )
        else:
            self.lam = lattice.ksq.copy()
            self.dmult = 1j * lattice.k_stack().astype(np.complex128)
        self.proj = lattice.leray_tensor()

    def stepper(self, dt: float):
        """(decay, dt*phi1) factors; killed modes decay to 0 and take no forcing."""
        lam = self.lam
        finite = np.isfinite(lam)
        lam_safe = np.where(finite, lam, 1.0)
        decay = np.where(finite, np.exp(-lam_safe * dt), 0.0)
        z = lam_safe * dt
        small = np.abs(z) < 1e-12
        phi1 = np.where(small, 1.0 - z / 2.0, -np.expm1(-z) / np.where(small, 1.0, z))
        return decay, np.where(finite, dt * phi1, 0.0)


@dataclass
class Trajectory:
    times: np.ndarray  # (nt+1,)
    u: np.ndarray  # (nt+1, 3) + lattice.shape, complex
    b: np.ndarray

    def at(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        return self.u[n], self.b[n]

    def zero_like(self) -> "Trajectory":
        return Trajectory(self.times.copy(), np.zeros_like(self.u), np.zeros_like(self.b))


def zero_trajectory(lattice: ModeLattice, times: np.ndarray) -> Trajectory:
    shape = (len(times), 3) + lattice.shape
    return Trajectory(times, np.zeros(shape, np.complex128), np.zeros(shape, np.complex128))


def sample_linear_trajectory(
    noise: NoiseSpec, config: SolverConfig, which: str, stationary: bool = True
) -> Trajectory:
    """Exact OU sampling of (u1, b1) on the solver grid for one mode."""
    ens = CoupledOUEnsemble(noise)
    if stationary:
        ens.burn_in_stationary()
    nt = config.nsteps
    times = config.dt * np.arange(nt + 1)
    traj = zero_trajectory(noise.lattice, times)
    kind = which
    traj.u[0] = ens.field("u", kind).coeff
    traj.b[0] = ens.field("b", kind).coeff
    for n in range(nt):
        ens.step(config.dt)
        traj.u[n + 1] = ens.field("u", kind).coeff
        traj.b[n + 1] = ens.field("b", kind).coeff
    return traj


class ProductEngine:
    """Pseudo-spectral pairwise products with optional dealiasing."""

    def __init__(self, lattice: ModeLattice, dealias: bool):
        self.lattice = lattice
        self.mask = dealias_mask(lattice) if dealias else None

    def grids(self, coeff: np.ndarray) -> np.ndarray:
        return dft_inverse(self.lattice, coeff)

    def pair_matrix(self, ga: np.ndarray, gb: np.ndarray) -> np.ndarray:
        """Coefficients of the 9 products ga^i * gb^j, shape (3, 3) + cube."""
        prods = ga[:, None] * gb[None, :]
        out = dft_forward(self.lattice, prods)
        if self.mask is not None:
            out *= self.mask
        return out


def _apply_pdj(ops: OperatorSet, pair: np.ndarray) -> np.ndarray:
    """-1/2 sum_{i1 j} P^{i i1} D_j (pair[i1, j]) as a vector coefficient array."""
    dsum = np.einsum("j...,aj...->a...", ops.dmult, pair)
    return -0.5 * np.einsum("ia...,a...->i...", ops.proj, dsum)


def _constant_subtraction(lattice: ModeLattice, mat: np.ndarray, c: np.ndarray) -> None:
    """Subtract the constant fields c[i1, j] (in place on the zero mode)."""
    N = lattice.N
    mat[..., N, N, N] -= c * FOURIER_SCALE


@dataclass
class Level2Constants:
    c01: np.ndarray
    c02: np.ndarray
    c03: np.ndarray


def level2_constants(
    which: str, scheme: SchemeSpec, lattice: ModeLattice, identified: bool = True
) -> Level2Constants:
    bar = which == "cont"
    return Level2Constants(
        renorm.c0_matrix("01", scheme, lattice, bar=bar, identified=identified).real,
        renorm.c0_matrix("02", scheme, lattice, bar=bar, identified=identified).real,
        renorm.c0_matrix("03", scheme, lattice, bar=bar, identified=identified).real,
    )


def solve_level2(
    traj1: Trajectory,
    ops: OperatorSet,
    config: SolverConfig,
    consts: Level2Constants | None = None,
    forcing_out: list | None = None,
) -> Trajectory:
    """Mild solution of the second level driven by Wick squares of the first."""
    lattice = ops.lattice
    eng = ProductEngine(lattice, config.dealias)
    nt = config.nsteps
    if len(traj1.times) != nt + 1:
        raise ValueError("linear level not sampled on the solver grid")
    out = zero_trajectory(lattice, traj1.times)
    decay, w = ops.stepper(config.dt)

    for n in range(nt):
        gu = eng.grids(traj1.u[n]).real
        gb = eng.grids(traj1.b[n]).real
        uu = eng.pair_matrix(gu, gu)
        bb = eng.pair_matrix(gb, gb)
        if consts is not None:
            _constant_subtraction(lattice, uu, consts.c01)
            _constant_subtraction(lattice, bb, consts.c02)
        fu = _apply_pdj(ops, uu - bb)
        bu = eng.pair_matrix(gb, gu)
        ub = eng.pair_matrix(gu, gb)
        if consts is not None:
            _constant_subtraction(lattice, bu, consts.c03)
            _constant_subtraction(lattice, ub, consts.c03)
        fb = _apply_pdj(ops, bu - ub)
        if forcing_out is not None:
            forcing_out.append((fu, fb))
        out.u[n + 1] = decay * out.u[n] + w * fu
        out.b[n + 1] = decay * out.b[n] + w * fb
    return out


@dataclass
class DiamondConstants:
    """Combined tensors K_k = C_k + tilde(C_k) per flavor, evaluated on the
    solver time grid: arrays of shape (nt+1, 3, 3, 3)."""

    K: dict  # (k, flavor) -> (nt+1, 3, 3, 3)


def diamond_constants(
    times: np.ndarray, scheme: SchemeSpec, lattice: ModeLattice
) -> DiamondConstants:
    out = {}
    for k in (1, 2, 3, 4):
        for flavor in ("u", "b"):
            rows = [
                (
                    renorm.ck(k, flavor, float(t), scheme, lattice)
                    + renorm.ck_tilde(k, flavor, float(t), scheme, lattice)
                ).real
                for t in times
            ]
            out[(k, flavor)] = np.stack(rows)
    return DiamondConstants(out)


def _level3_correction(
    ops: OperatorSet,
    K: DiamondConstants,
    n: int,
    u1: np.ndarray,
    b1: np.ndarray,
):
    """Constant-weighted linear drift terms of the mixed diamond products."""

    def comb(k_first, k_second, flavor):
        A = K.K[(k_first, flavor)][n]
        B = K.K[(k_second, flavor)][n]
        # coefficient of y1^l inside the (i1, j) drift slot:
        # first-pair gives K^{j l i1}, second-pair K^{i1 l j}
        return np.transpose(A, (2, 1, 0)), B

    corr = {}
    for eq, (ka, kb) in (("u", (1, 2)), ("b", (3, 4))):
        acc = np.zeros((3,) + ops.lattice.shape, np.complex128)
        for flavor, yhat in (("u", u1), ("b", b1)):
            Tj_a, Ti_a = comb(ka, ka, flavor)
            Tj_b, Ti_b = comb(kb, kb, flavor)
            if eq == "u":
                # + u1 dia u2 + u2 dia u1 - b1 dia b2 - b2 dia b1
                tensor = Tj_a + Ti_a - Tj_b - Ti_b
            else:
                # + b1 dia u2 + b2 dia u1 - u1 dia b2 - u2 dia b1
                tensor = Tj_a + Ti_b - Tj_b - Ti_a
            # drift^i = -1/2 P^{i i1} D_j tensor^{i1 l j} y1^l
            acc += np.einsum("alj,j...,l...->a...", tensor, ops.dmult, yhat)
        corr[eq] = -0.5 * np.einsum("ia...,a...->i...", ops.proj, acc)
    return corr["u"], corr["b"]


def solve_level3(
    traj1: Trajectory,
    traj2: Trajectory,
    ops: OperatorSet,
    config: SolverConfig,
    diamonds: DiamondConstants | None = None,
    forcing_out: list | None = None,
) -> Trajectory:
    """Third level: mixed products of the first two levels; in approximate
    mode the diamond products add the constant-weighted linear terms."""
    lattice = ops.lattice
    eng = ProductEngine(lattice, config.dealias)
    nt = config.nsteps
    out = zero_trajectory(lattice, traj1.times)
    decay, w = ops.stepper(config.dt)
    for n in range(nt):
        g1u = eng.grids(traj1.u[n]).real
        g1b = eng.grids(traj1.b[n]).real
        g2u = eng.grids(traj2.u[n]).real
        g2b = eng.grids(traj2.b[n]).real
        pm_u = (
            eng.pair_matrix(g1u, g2u)
            + eng.pair_matrix(g2u, g1u)
            - eng.pair_matrix(g1b, g2b)
            - eng.pair_matrix(g2b, g1b)
        )
        pm_b = (
            eng.pair_matrix(g1b, g2u)
            + eng.pair_matrix(g2b, g1u)
            - eng.pair_matrix(g1u, g2b)
            - eng.pair_matrix(g2u, g1b)
        )
        fu = _apply_pdj(ops, pm_u)
        fb = _apply_pdj(ops, pm_b)
        if diamonds is not None:
            cu, cb = _level3_correction(ops, diamonds, n, traj1.u[n], traj1.b[n])
            fu = fu + cu
            fb = fb + cb
        if forcing_out is not None:
            forcing_out.append((fu, fb))
        out.u[n + 1] = decay * out.u[n] + w * fu
        out.b[n + 1] = decay * out.b[n] + w * fb
    return out


def solve_K(
    traj1: Trajectory,
    ops: OperatorSet,
    config: SolverConfig,
    forcing_out: list | None = None,
) -> Trajectory:
    """Auxiliary pair dK = (Delta K + y1) dt, K(0) = 0, in mild form."""
    nt = config.nsteps
    out = zero_trajectory(ops.lattice, traj1.times)
    decay, w = ops.stepper(config.dt)
    for n in range(nt):
        if forcing_out is not None:
            forcing_out.append((traj1.u[n], traj1.b[n]))
        out.u[n + 1] = decay * out.u[n] + w * traj1.u[n]
        out.b[n + 1] = decay * out.b[n] + w * traj1.b[n]
    return out


def mild_residual(
    traj: Trajectory, ops: OperatorSet, forcing: list[tuple[np.ndarray, np.ndarray]]
) -> float:
    """Max over steps of the coefficient-l2 residual of the differential form,
    (y_{n+1} - y_n)/dt - (Delta y_n + F_n)."""
    dt = float(traj.times[1] - traj.times[0])
    lam = np.where(np.isfinite(ops.lam), ops.lam, 0.0)
    worst = 0.0
    for n in range(len(traj.times) - 1):
        fu, fb = forcing[n]
        ru = (traj.u[n + 1] - traj.u[n]) / dt - (-lam * traj.u[n] + fu)
        rb = (traj.b[n + 1] - traj.b[n]) / dt - (-lam * traj.b[n] + fb)
        worst = max(worst, float(np.sqrt(np.sum(np.abs(ru) ** 2 + np.abs(rb) ** 2))))
    return worst


@dataclass
class PicardReport:
    increments: list[float]
    converged: bool
    iterations: int

    def contracting(self) -> bool:
        if len(self.increments) < 2:
            return True
        r = [b / a for a, b in zip(self.increments, self.increments[1:]) if a > 0]
        return bool(r) and max(r) < 1.0


@dataclass
class HierarchyRun:
    which: str
    config: SolverConfig
    levels: dict
    K: Trajectory
    report: PicardReport

    def assembled(self) -> Trajectory:
        t = self.levels[1].times
        u = sum(self.levels[l].u for l in (1, 2, 3, 4))
        b = sum(self.levels[l].b for l in (1, 2, 3, 4))
        return Trajectory(t, u, b)


def _traj_norm(u: np.ndarray, b: np.ndarray, lattice: ModeLattice, alpha: float) -> float:
    nu = vector_holder_norm(VectorField(lattice, u), alpha)
    nb = vector_holder_norm(VectorField(lattice, b), alpha)
    return max(nu, nb)


def _project_initial(lattice: ModeLattice, y0: np.ndarray) -> np.ndarray:
    proj = lattice.leray_tensor()
    return np.einsum("ij...,j...->i...", proj, y0)


def picard_y4(
    traj1: Trajectory,
    traj2: Trajectory,
    traj3: Trajectory,
    u0: np.ndarray,
    b0: np.ndarray,
    ops: OperatorSet,
    config: SolverConfig,
    diamonds: DiamondConstants | None = None,
) -> tuple[Trajectory, PicardReport]:
    """Fixed-point iteration for the remainder level.

    Each sweep integrates the mild equation with forcing assembled entirely
    from the previous iterate (the self-coupling of the renormalized
    resonant product is therefore lagged by one iteration); increments are
    measured in the discrete C^alpha surrogate norm and must decrease
    geometrically below the configured tolerance.
    """
    lattice = ops.lattice
    eng = ProductEngine(lattice, config.dealias)
    nt = config.nsteps
    decay, w = ops.stepper(config.dt)
    times = traj1.times

    init_u = _project_initial(lattice, u0) - traj1.u[0]
    init_b = _project_initial(lattice, b0) - traj1.b[0]

    cur = zero_trajectory(lattice, times)
    cur.u[0], cur.b[0] = init_u, init_b
    for n in range(nt):
        cur.u[n + 1] = decay * cur.u[n]
        cur.b[n + 1] = decay * cur.b[n]

    increments: list[float] = []
    converged = False
    it = 0
    for it in range(1, config.picard_max_iter + 1):
        new = zero_trajectory(lattice, times)
        new.u[0], new.b[0] = init_u, init_b
        for n in range(nt):
            fu, fb = _level4_forcing(eng, ops, traj1, traj2, traj3, cur, n, diamonds)
            new.u[n + 1] = decay * new.u[n] + w * fu
            new.b[n + 1] = decay * new.b[n] + w * fb
        inc = max(
            _traj_norm(
                new.u[n] - cur.u[n], new.b[n] - cur.b[n], lattice, config.contraction_alpha
            )
            for n in range(nt + 1)
        )
        increments.append(inc)
        cur = new
        if inc < config.tol:
            converged = True
            break
    report = PicardReport(increments, converged, it)
    if not converged:
        logger.warning(
            "picard iteration did not contract below %.1e in %d sweeps: increments %s",
            config.tol,
            it,
            ", ".join(f"{x:.2e}" for x in increments[-5:]),
        )
    return cur, report


def _level4_forcing(
    eng: ProductEngine,
    ops: OperatorSet,
    traj1: Trajectory,
    traj2: Trajectory,
    traj3: Trajectory,
    y4: Trajectory,
    n: int,
    diamonds: DiamondConstants | None,
):
    """Drift of the remainder equation at step n (plain-product assembly)."""
    g1u = eng.grids(traj1.u[n]).real
    g1b = eng.grids(traj1.b[n]).real
    g2u = eng.grids(traj2.u[n]).real
    g2b = eng.grids(traj2.b[n]).real
    wu = eng.grids(traj3.u[n] + y4.u[n]).real
    wb = eng.grids(traj3.b[n] + y4.b[n]).real

    pm_u = (
        eng.pair_matrix(g1u, wu)
        + eng.pair_matrix(wu, g1u)
        + eng.pair_matrix(g2u, g2u)
        + eng.pair_matrix(g2u, wu)
        + eng.pair_matrix(wu, g2u)
        + eng.pair_matrix(wu, wu)
        - eng.pair_matrix(g1b, wb)
        - eng.pair_matrix(wb, g1b)
        - eng.pair_matrix(g2b, g2b)
        - eng.pair_matrix(g2b, wb)
        - eng.pair_matrix(wb, g2b)
        - eng.pair_matrix(wb, wb)
    )
    pm_b = (
        eng.pair_matrix(g1b, wu)
        + eng.pair_matrix(wb, g1u)
        + eng.pair_matrix(g2b, g2u)
        + eng.pair_matrix(g2b, wu)
        + eng.pair_matrix(wb, g2u)
        + eng.pair_matrix(wb, wu)
        - eng.pair_matrix(g1u, wb)
        - eng.pair_matrix(wu, g1b)
        - eng.pair_matrix(g2u, g2b)
        - eng.pair_matrix(g2u, wb)
        - eng.pair_matrix(wu, g2b)
        - eng.pair_matrix(wu, wb)
    )
    fu = _apply_pdj(ops, pm_u)
    fb = _apply_pdj(ops, pm_b)
    if diamonds is not None:
        cu, cb = _level4_correction(ops, diamonds, n, traj1, traj2, traj3, y4)
        fu = fu + cu
        fb = fb + cb
    return fu, fb


def _level4_correction(
    ops: OperatorSet,
    K: DiamondConstants,
    n: int,
    traj1: Trajectory,
    traj2: Trajectory,
    traj3: Trajectory,
    y4: Trajectory,
):
    """Constant-weighted linear terms of the renormalized resonant products:
    the corrections multiply y2 (from the third-level pairs) and y3 + y4
    (from the remainder pairs), wired exactly as in the level-3 case."""
    wu = traj3.u[n] + y4.u[n]
    wb = traj3.b[n] + y4.b[n]
    corr = {}
    for eq, (ka, kb) in (("u", (1, 2)), ("b", (3, 4))):
        acc = np.zeros((3,) + ops.lattice.shape, np.complex128)
        for flavor, y2hat, whats in (
            ("u", traj2.u[n], wu),
            ("b", traj2.b[n], wb),
        ):
            A = K.K[(ka, flavor)][n]
            B = K.K[(kb, flavor)][n]
            Tj_a = np.transpose(A, (2, 1, 0))
            Tj_b = np.transpose(B, (2, 1, 0))
            if eq == "u":
                tensor = Tj_a + A - Tj_b - B
            else:
                tensor = Tj_a + B - Tj_b - A
            target = y2hat + whats
            acc += np.einsum("alj,j...,l...->a...", tensor, ops.dmult, target)
        corr[eq] = -0.5 * np.einsum("ia...,a...->i...", ops.proj, acc)
    return corr["u"], corr["b"]


def paracontrolled_sharp(
    run_levels: dict, K: Trajectory, ops: OperatorSet, n: int
) -> tuple[np.ndarray, np.ndarray]:
    """Diagnostic remainder of the paracontrolled ansatz at step n.

    sharp_u = u4 + 1/2 sum P^{i i1} D_j [ pi_lt(u3+u4, K_u)^... ] with the
    four paraproduct slots of the ansatz; the result should be smoother than
    u4 itself (checked as a regression diagnostic, not a solver path).
    """
    lattice = ops.lattice
    u3, b3 = run_levels[3].u[n], run_levels[3].b[n]
    u4, b4 = run_levels[4].u[n], run_levels[4].b[n]
    wu, wb = u3 + u4, b3 + b4
    ku, kb = K.u[n], K.b[n]

    def plt(ahat, bhat):
        return paraproduct_lt(
            ScalarField(lattice, ahat), ScalarField(lattice, bhat)
        ).coeff

    sharp_u = np.zeros_like(u4)
    sharp_b = np.zeros_like(b4)
    for i in range(3):
        acc_u = np.zeros(lattice.shape, np.complex128)
        acc_b = np.zeros(lattice.shape, np.complex128)
        for i1 in range(3):
            for j in range(3):
                term_u = (
                    plt(wu[i1], ku[j])
                    + plt(wu[j], ku[i1])
                    - plt(wb[i1], kb[j])
                    - plt(wb[j], kb[i1])
                )
                term_b = (
                    -plt(wu[i1], kb[j])
                    + plt(wu[j], kb[i1])
                    + plt(wb[i1], ku[j])
                    - plt(wb[j], ku[i1])
                )
                acc_u += ops.proj[i, i1] * ops.dmult[j] * term_u
                acc_b += ops.proj[i, i1] * ops.dmult[j] * term_b
        sharp_u[i] = u4[i] + 0.5 * acc_u
        sharp_b[i] = b4[i] + 0.5 * acc_b
    return sharp_u, sharp_b


def run_hierarchy(
    noise: NoiseSpec | None,
    lattice: ModeLattice,
    scheme: SchemeSpec,
    config: SolverConfig,
    which: str,
    u0: np.ndarray,
    b0: np.ndarray,
    identified: bool = True,
) -> HierarchyRun:
    """Drive all levels; a None noise spec runs the deterministic limit."""
    ops = OperatorSet(which, scheme, lattice)
    nt = config.nsteps
    times = config.dt * np.arange(nt + 1)
    if noise is None:
        traj1 = zero_trajectory(lattice, times)
    else:
        traj1 = sample_linear_trajectory(noise, config, which)
    zero_noise = noise is None
    use_k = config.use_constants and which == "approx" and not zero_noise
    diamonds = diamond_constants(times, scheme, lattice) if use_k else None
    consts = None
    if not zero_noise:
        consts = level2_constants(which, scheme, lattice, identified)
    traj2 = solve_level2(traj1, ops, config, consts)
    traj3 = solve_level3(traj1, traj2, ops, config, diamonds)
    ktraj = solve_K(traj1, ops, config)
    traj4, report = picard_y4(traj1, traj2, traj3, u0, b0, ops, config, diamonds)
    levels = {1: traj1, 2: traj2, 3: traj3, 4: traj4}
    return HierarchyRun(which, config, levels, ktraj, report)


# -- drift-coefficient bookkeeping ----------------------------------------------


@dataclass
class DriftTables:
    """The bracketed constant combinations of the corrected system.

    u_from_u etc. are the assembled (3, 3, 3) tensors [i, i1, j]; `slots`
    lists every scalar constant instance entering the four brackets (the
    count audit: 8 per bracket, 4 brackets, 32 total).
    """

    u_from_u: np.ndarray
    u_from_b: np.ndarray
    b_from_u: np.ndarray
    b_from_b: np.ndarray
    slots: list

    def count(self) -> int:
        return len(self.slots)


def drift_assembly(scheme: SchemeSpec, t: float, lattice: ModeLattice) -> DriftTables:
    """Assemble the 32 drift coefficients of the corrected equations.

    For each equation (u, b) and each target flavor, the bracket is

        C_a + tC_a - C_b - tC_b  (at [i, i1, j])  +  the same at [j, i1, i],

    with (a, b) = (1, 2) for the u-equation and (3, 4) for the b-equation.
    """
    tensors = {}
    slots = []
    for k in (1, 2, 3, 4):
        for flavor in ("u", "b"):
            tensors[("C", k, flavor)] = renorm.ck(k, flavor, t, scheme, lattice).real
            tensors[("tC", k, flavor)] = renorm.ck_tilde(k, flavor, t, scheme, lattice).real

    def bracket(ka: int, kb: int, flavor: str) -> np.ndarray:
        combo = (
            tensors[("C", ka, flavor)]
            + tensors[("tC", ka, flavor)]
            - tensors[("C", kb, flavor)]
            - tensors[("tC", kb, flavor)]
        )
        for kind, k, sign in (("C", ka, +1), ("tC", ka, +1), ("C", kb, -1), ("tC", kb, -1)):
            slots.append((kind, k, flavor, sign, "iij"))
            slots.append((kind, k, flavor, sign, "jii"))
        return combo + np.transpose(combo, (2, 1, 0))

    return DriftTables(
        bracket(1, 2, "u"),
        bracket(1, 2, "b"),
        bracket(3, 4, "u"),
        bracket(3, 4, "b"),
        slots,
    )


def energy(u: np.ndarray, b: np.ndarray) -> float:
    """Coefficient-space energy sum ||u||_{L2}^2 + ||b||_{L2}^2."""
    return float(np.sum(np.abs(u) ** 2) + np.sum(np.abs(b) ** 2))


def taylor_green(lattice: ModeLattice, amplitude: float = 1.0) -> np.ndarray:
    """Divergence-free test field (sin x cos y cos z, -cos x sin y cos z, 0)."""
    x1, x2, x3 = lattice.grid()
    g = np.stack(
        [
            amplitude * np.sin(x1) * np.cos(x2) * np.cos(x3) * np.ones(lattice.shape),
            -amplitude * np.cos(x1) * np.sin(x2) * np.cos(x3) * np.ones(lattice.shape),
            np.zeros(lattice.shape),
        ]
    )
    return dft_forward(lattice, g)


def trajectory_to_csv(traj: Trajectory, lattice: ModeLattice, path, family: str = "u") -> None:
    """Export one family of a trajectory as CSV rows (t, k1, k2, k3, component,
    re, im); zero coefficients are skipped."""
    import csv

    data = traj.u if family == "u" else traj.b
    modes = lattice.mode_table()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "k1", "k2", "k3", "component", "re", "im"])
        for n, t in enumerate(traj.times):
            flat = data[n].reshape(3, -1)
            for comp in range(3):
                nz = np.nonzero(flat[comp])[0]
                for i in nz:
                    c = flat[comp, i]
                    w.writerow(
                        [repr(float(t)), modes[i, 0], modes[i, 1], modes[i, 2],
                         comp, repr(c.real), repr(c.imag)]
                    )


def level_norm_series(run: HierarchyRun, alpha: float = -0.6) -> dict:
    """Hoelder norms of every level at every stored time (u and b families)."""
    lattice_n = run.levels[1].u.shape[-1]
    lattice = ModeLattice((lattice_n - 1) // 2)
    out = {}
    for l, traj in run.levels.items():
        out[f"level{l}_u"] = [
            vector_holder_norm(VectorField(lattice, traj.u[n]), alpha)
            for n in range(len(traj.times))
        ]
        out[f"level{l}_b"] = [
            vector_holder_norm(VectorField(lattice, traj.b[n]), alpha)
            for n in range(len(traj.times))
        ]
    return out
