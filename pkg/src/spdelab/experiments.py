"""Experiment drivers: convergence studies, the 1D deterministic example,
constants tables and the summation-bound checks.

Every driver is deterministic given (seed, spec): Monte Carlo samples draw
their randomness from counter-based streams split per sample index, so the
results do not depend on scheduling or batching.  Error bars are batch-mean
standard errors over >= 32 batches.
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import constants as renorm
from .fields import continuous_pair_loadings, philox_rng
from .schemes import SchemeSpec, eps_laplacian_rate, h_on_lattice
from .torus import (
    FOURIER_SCALE,
    ModeLattice,
    dft_forward,
    dft_inverse,
    hermitian_gaussian,
)

logger = logging.getLogger(__name__)

_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


@dataclass
class ExperimentSpec:
    name: str
    eps_schedule: tuple[float, ...]
    N: int = 16
    samples: int = 512
    dt: float = 1e-3
    T: float = 0.1
    alpha: float | None = None  # norm exponent; default derived from delta
    delta: float = 0.1
    seed: int = 2024
    threads: int = 1
    out: str | None = None
    scheme: SchemeSpec = field(default_factory=SchemeSpec)

    def __post_init__(self):
        if not self.eps_schedule:
            raise ValueError("epsilon schedule must be nonempty")
        if any(b >= a for a, b in zip(self.eps_schedule, self.eps_schedule[1:])):
            pass  # decreasing checked below
        if list(self.eps_schedule) != sorted(self.eps_schedule, reverse=True):
            raise ValueError("epsilon schedule must be decreasing")


@dataclass
class RateFit:
    slope: float
    intercept: float
    residual: float
    eps: list[float]
    values: list[float]
    sigmas: list[float]

    def decreasing_pairwise(self, n_sigma: float = 2.0) -> bool:
        return all(
            a - n_sigma * sa > b + n_sigma * sb
            for (a, sa), (b, sb) in zip(
                zip(self.values, self.sigmas), zip(self.values[1:], self.sigmas[1:])
            )
        )

    def decreasing_endpoints(self, n_sigma: float = 2.0) -> bool:
        return (
            self.values[0] - n_sigma * self.sigmas[0]
            > self.values[-1] + n_sigma * self.sigmas[-1]
        )


def fit_rate(eps: list[float], values: list[float], sigmas: list[float]) -> RateFit:
    """Least-squares log-log fit; slope > 0 means decay as eps -> 0."""
    if len(eps) < 3:
        raise ValueError("rate fits need at least 3 schedule points")
    if min(values) <= 0:
        raise ValueError("degenerate fit: nonpositive values")
    x = np.log(np.asarray(eps))
    y = np.log(np.asarray(values))
    coef = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((np.polyval(coef, x) - y) ** 2)))
    return RateFit(float(coef[0]), float(coef[1]), resid, list(eps), list(values), list(sigmas))


def batch_sigma(values: np.ndarray, nbatches: int = 32) -> float:
    values = np.asarray(values, dtype=float)
    nb = min(nbatches, len(values))
    groups = np.array_split(values, nb)
    means = np.array([g.mean() for g in groups])
    return float(means.std(ddof=1) / np.sqrt(nb))


def holder_norm_batch(lattice: ModeLattice, coeffs: np.ndarray, alpha: float) -> np.ndarray:
    """Hoelder norms of a batch of coefficient cubes, shape (B,) + lattice.shape."""
    part = lattice.partition()
    ws = np.stack([part.weight(j) for j in range(-1, part.jmax + 1)])
    grids = dft_inverse(lattice, ws[None, :, ...] * coeffs[:, None, ...])
    amax = np.max(np.abs(grids), axis=(-3, -2, -1))
    j = np.arange(-1, part.jmax + 1)
    return np.max(amax * 2.0 ** (j * alpha)[None, :], axis=1)


class _CoupledPairSampler:
    """Stationary coupled draw of the normalized approximate/continuum pair."""

    def __init__(self, lattice: ModeLattice, scheme: SchemeSpec):
        lam_a = eps_laplacian_rate(scheme, lattice)
        lam_c = lattice.ksq.copy()
        self.sd_a, self.load, self.resid = continuous_pair_loadings(lam_a, lam_c)
        self.proj = lattice.leray_tensor()
        self.lattice = lattice

    def draw(self, rng: np.random.Generator):
        lat = self.lattice
        N = lat.N
        z1 = np.stack([hermitian_gaussian(lat, rng) for _ in range(3)])
        z2 = np.stack([hermitian_gaussian(lat, rng) for _ in range(3)])
        z1[:, N, N, N] = 0.0
        z2[:, N, N, N] = 0.0
        ya = np.einsum("ij...,j...->i...", self.proj, self.sd_a * z1)
        yc = np.einsum("ij...,j...->i...", self.proj, self.load * z1 + self.resid * z2)
        return ya, yc


def _linear_chunk(args):
    (N, scheme, alpha, seed, idx_lo, idx_hi) = args
    lattice = ModeLattice(N)
    sampler = _CoupledPairSampler(lattice, scheme)
    hb = h_on_lattice(scheme, lattice, "b")
    out = []
    for idx in range(idx_lo, idx_hi):
        rng = philox_rng(seed, idx)
        ya, yc = sampler.draw(rng)
        diff = hb * (ya - yc)
        out.append(float(np.max(holder_norm_batch(lattice, diff, alpha))))
    return out


def _second_chaos_chunk(args):
    (N, scheme, alpha, seed, c_diff, idx_lo, idx_hi) = args
    lattice = ModeLattice(N)
    sampler = _CoupledPairSampler(lattice, scheme)
    hu = h_on_lattice(scheme, lattice, "u")
    hb = h_on_lattice(scheme, lattice, "b")
    NN = lattice.N
    wick_vals, plain_vals = [], []
    for idx in range(idx_lo, idx_hi):
        rng = philox_rng(seed, idx)
        ya, yc = sampler.draw(rng)
        gu_a = dft_inverse(lattice, hu * ya).real
        gb_a = dft_inverse(lattice, hb * ya).real
        gu_c = dft_inverse(lattice, hu * yc).real
        gb_c = dft_inverse(lattice, hb * yc).real
        prods = np.stack(
            [gu_a[i] * gb_a[j] - gu_c[i] * gb_c[j] for (i, j) in _PAIRS]
        )
        D = dft_forward(lattice, prods)
        plain_vals.append(float(np.max(holder_norm_batch(lattice, D, alpha))))
        for m, (i, j) in enumerate(_PAIRS):
            D[m, NN, NN, NN] -= c_diff[i, j] * FOURIER_SCALE
        wick_vals.append(float(np.max(holder_norm_batch(lattice, D, alpha))))
    return wick_vals, plain_vals


def _run_chunks(fn, common, samples: int, threads: int):
    bounds = np.linspace(0, samples, max(1, min(threads, samples)) + 1, dtype=int)
    chunks = [common + (int(lo), int(hi)) for lo, hi in zip(bounds, bounds[1:]) if hi > lo]
    if threads <= 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, chunks))


def exp_linear_convergence(spec: ExperimentSpec) -> RateFit:
    """Monte Carlo norm of the linear-level difference per epsilon.

    Samples the coupled stationary pair exactly (shared-noise law), measures
    E max_i ||b1_eps^i - b1bar_eps^i||_{C^alpha} with alpha = -1/2 - delta/2
    and fits the log-log decay rate.
    """
    alpha = spec.alpha if spec.alpha is not None else -0.5 - spec.delta / 2
    means, sigmas = [], []
    for eps in spec.eps_schedule:
        scheme = spec.scheme.with_eps(eps).finalize()
        chunks = _run_chunks(
            _linear_chunk, (spec.N, scheme, alpha, spec.seed), spec.samples, spec.threads
        )
        vals = np.concatenate([np.asarray(c) for c in chunks])
        means.append(float(vals.mean()))
        sigmas.append(batch_sigma(vals))
        logger.info("linear eps=%g: %.5g +- %.2g", eps, means[-1], sigmas[-1])
    return fit_rate(list(spec.eps_schedule), means, sigmas)


@dataclass
class SecondChaosResult:
    wick: RateFit
    ablation: RateFit
    wick_mean_zero_sigmas: float  # worst |E[u dia b]| / stderr over entries


def exp_second_chaos(spec: ExperimentSpec) -> SecondChaosResult:
    """Wick-product difference norm per epsilon plus the un-renormalized
    ablation (plain product difference, no constant subtraction)."""
    alpha = spec.alpha if spec.alpha is not None else -1.0 - spec.delta / 2
    w_means, w_sigmas, p_means, p_sigmas = [], [], [], []
    worst_meanzero = 0.0
    for eps in spec.eps_schedule:
        scheme = spec.scheme.with_eps(eps).finalize()
        lattice = ModeLattice(spec.N)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            c03 = renorm.c0_matrix("03", scheme, lattice).real
            c03_bar = renorm.c0_matrix("03", scheme, lattice, bar=True).real
        c_diff = c03 - c03_bar
        chunks = _run_chunks(
            _second_chaos_chunk,
            (spec.N, scheme, alpha, spec.seed, c_diff),
            spec.samples,
            spec.threads,
        )
        wick = np.concatenate([np.asarray(c[0]) for c in chunks])
        plain = np.concatenate([np.asarray(c[1]) for c in chunks])
        w_means.append(float(wick.mean()))
        w_sigmas.append(batch_sigma(wick))
        p_means.append(float(plain.mean()))
        p_sigmas.append(batch_sigma(plain))
        logger.info(
            "second-chaos eps=%g: wick %.5g +- %.2g, plain %.5g +- %.2g",
            eps, w_means[-1], w_sigmas[-1], p_means[-1], p_sigmas[-1],
        )
        worst_meanzero = max(worst_meanzero, _wick_mean_zero_check(spec, scheme, c03))
    return SecondChaosResult(
        fit_rate(list(spec.eps_schedule), w_means, w_sigmas),
        fit_rate(list(spec.eps_schedule), p_means, p_sigmas),
        worst_meanzero,
    )


def _wick_mean_zero_check(spec: ExperimentSpec, scheme: SchemeSpec, c03: np.ndarray) -> float:
    """|empirical E[u1^i b1^j(x0) - C03^{ij}]| in units of its stderr."""
    lattice = ModeLattice(spec.N)
    sampler = _CoupledPairSampler(lattice, scheme)
    hu = h_on_lattice(scheme, lattice, "u")
    hb = h_on_lattice(scheme, lattice, "b")
    rng = philox_rng(spec.seed, 999_999)
    n = 200
    prods = np.zeros((n, 3, 3))
    for s in range(n):
        ya, _ = sampler.draw(rng)
        gu = dft_inverse(lattice, hu * ya).real[:, 0, 0, 0]
        gb = dft_inverse(lattice, hb * ya).real[:, 0, 0, 0]
        prods[s] = np.outer(gu, gb) - c03
    mean = prods.mean(axis=0)
    stderr = prods.std(axis=0, ddof=1) / np.sqrt(n)
    return float(np.max(np.abs(mean) / np.maximum(stderr, 1e-300)))


# -- 1D deterministic example ----------------------------------------------------


@dataclass
class Burgers1DSpec:
    eps_schedule: tuple[float, ...] = (1 / 16, 1 / 32, 1 / 64, 1 / 128)
    T: float = 0.3
    nu: float = 1.0
    scheme: str = "one_sided"  # or "central"
    ref_modes: int = 256
    u0: str = "sin"  # sin(x) + 0.4 cos(2x)


def _burgers_u0(x: np.ndarray) -> np.ndarray:
    return np.sin(x) + 0.4 * np.cos(2.0 * x)


def _burgers_reference(M: int, T: float, nu: float) -> np.ndarray:
    """Fourier coefficients (fft layout) of the viscous solution at time T,
    via integrating-factor RK4 with 2/3 dealiasing."""
    x = 2.0 * np.pi * np.arange(M) / M
    u = _burgers_u0(x)
    k = np.fft.fftfreq(M, d=1.0 / M)
    keep = np.abs(k) <= M // 3
    uhat = np.fft.fft(u)

    def rhs(vhat):
        v = np.fft.ifft(vhat).real
        fl = np.fft.fft(0.5 * v * v) * keep
        return -1j * k * fl

    # integrating factor removes the diffusive CFL; advective restriction only
    dt_adv = 0.25 * (2.0 * np.pi / M) / 2.0
    nsteps = max(400, int(np.ceil(T / dt_adv)))
    dt = T / nsteps
    efac = np.exp(-nu * k**2 * dt)
    ehalf = np.exp(-nu * k**2 * dt / 2.0)
    for _ in range(nsteps):
        a = rhs(uhat)
        b = rhs(ehalf * (uhat + dt / 2 * a))
        c = rhs(ehalf * uhat + dt / 2 * b)
        d = rhs(efac * uhat + dt * ehalf * c)
        uhat = efac * uhat + dt / 6 * (efac * a + 2 * ehalf * (b + c) + d)
    return uhat


def _eval_fourier(uhat: np.ndarray, x: np.ndarray) -> np.ndarray:
    M = len(uhat)
    k = np.fft.fftfreq(M, d=1.0 / M)
    return (np.exp(1j * np.outer(x, k)) @ uhat).real / M


def _burgers_scheme_run(M: int, T: float, nu: float, scheme: str) -> np.ndarray:
    """Explicit RK4 for the difference-operator approximation on an M-grid."""
    eps = 2.0 * np.pi / M
    x = eps * np.arange(M)
    u = _burgers_u0(x)

    if scheme == "one_sided":
        def dop(f):
            return (np.roll(f, -1) - f) / eps
    elif scheme == "central":
        def dop(f):
            return (np.roll(f, -1) - np.roll(f, 1)) / (2.0 * eps)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    def lap(f):
        return (np.roll(f, -1) - 2.0 * f + np.roll(f, 1)) / eps**2

    def rhs(f):
        return -0.5 * dop(f * f) + nu * lap(f)

    dt = 0.2 * eps**2 / nu
    nsteps = int(np.ceil(T / dt))
    dt = T / nsteps
    for _ in range(nsteps):
        a = rhs(u)
        b = rhs(u + dt / 2 * a)
        c = rhs(u + dt / 2 * b)
        d = rhs(u + dt * c)
        u = u + dt / 6 * (a + 2 * b + 2 * c + d)
    return u


@dataclass
class BurgersResult:
    fit: RateFit
    ref_self_check: float


def exp_burgers(spec: Burgers1DSpec) -> BurgersResult:
    """Sup-norm error of the difference-operator scheme against a fine
    spectral reference; returns the fitted convergence order."""
    ref_hi = _burgers_reference(2 * spec.ref_modes, spec.T, spec.nu)
    ref_lo = _burgers_reference(spec.ref_modes, spec.T, spec.nu)
    xs = 2.0 * np.pi * np.arange(64) / 64
    self_check = float(np.max(np.abs(_eval_fourier(ref_hi, xs) - _eval_fourier(ref_lo, xs))))
    if self_check > 1e-8:
        raise RuntimeError(f"reference resolution insufficient: self-check {self_check:.2e}")
    errors, eps_actual = [], []
    for eps in spec.eps_schedule:
        M = int(round(2.0 * np.pi / eps))
        u = _burgers_scheme_run(M, spec.T, spec.nu, spec.scheme)
        x = 2.0 * np.pi * np.arange(M) / M
        err = float(np.max(np.abs(u - _eval_fourier(ref_hi, x))))
        errors.append(err)
        eps_actual.append(2.0 * np.pi / M)
        logger.info("burgers %s eps=%g: sup error %.3e", spec.scheme, eps, err)
    fit = fit_rate(eps_actual, errors, [0.0] * len(errors))
    return BurgersResult(fit, self_check)


# -- constants table --------------------------------------------------------------


def exp_constants_table(
    eps_schedule: tuple[float, ...],
    scheme: SchemeSpec,
    t: float = 1.0,
    lattice_N: int | None = None,
    limit_rtol: float = 1e-4,
) -> list[dict]:
    """One row per (family, indices, eps) with value, imaginary residue and,
    for the 2-families, the quadrature limit."""
    rows: list[dict] = []
    limits = {}
    for flavor in ("u", "b"):
        for tilde in (False, True):
            val, err = renorm.ck2_limit(flavor, tilde, scheme, rtol=limit_rtol)
            limits[(flavor, tilde)] = (val, err)
    for eps in eps_schedule:
        sch_eps = scheme.with_eps(eps).finalize()
        N = lattice_N or int(np.ceil(scheme.L0 / (2 * eps)))
        lattice = ModeLattice(N)
        for k in (1, 2, 3, 4):
            for flavor in ("u", "b"):
                for tilde in (False, True):
                    fn = renorm.ck_tilde if tilde else renorm.ck
                    val = fn(k, flavor, t, sch_eps, lattice)
                    bar = fn(k, flavor, t, sch_eps, lattice, bar=True)
                    lim = limits.get((flavor, tilde)) if k == 2 else None
                    for i in range(3):
                        for m in range(3):
                            for j in range(3):
                                row = {
                                    "family": ("tC" if tilde else "C") + f"{k},{flavor}",
                                    "i": i, "i1": m, "j": j,
                                    "eps": eps, "t": t,
                                    "value": float(val[i, m, j].real),
                                    "imag_residue": float(abs(val[i, m, j].imag)),
                                    "bar_value": float(abs(bar[i, m, j])),
                                }
                                if lim is not None:
                                    row["limit_value"] = float(lim[0][i, m, j])
                                    row["quadrature_error"] = float(lim[1])
                                rows.append(row)
    return rows


def write_csv(rows: list[dict], path: str | Path) -> None:
    if not rows:
        return
    keys = sorted({k for r in rows for k in r}, key=lambda s: (len(s), s))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)


# -- summation bound checks --------------------------------------------------------


def convolution_sum(k: np.ndarray, l: float, m: float, N: int) -> float:
    """sum over k1 + k2 = k (both nonzero, |k1| box-limited) of |k1|^-l |k2|^-m."""
    if not (0 < l < 3 and 0 < m < 3):
        raise ValueError("exponents must lie in (0, 3)")
    if l + m - 3 <= 0:
        raise ValueError("need l + m > 3 for a convergent convolution bound")
    ax = np.arange(-N, N + 1)
    g = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    k1sq = np.sum(g**2, axis=1)
    k2 = np.asarray(k)[None, :] - g
    k2sq = np.sum(k2**2, axis=1)
    keep = (k1sq > 0) & (k2sq > 0)
    return float(np.sum(k1sq[keep] ** (-l / 2) * k2sq[keep] ** (-m / 2)))


@dataclass
class SumBoundReport:
    ratios: dict
    ratio_spread: float
    key_estimate_gap: float

    def passed(self, spread_limit: float = 2.0, key_tol: float = 1e-6) -> bool:
        return self.ratio_spread < spread_limit and self.key_estimate_gap < key_tol


def exp_sum_bound(l: float = 2.0, m: float = 2.0, N: int = 24) -> SumBoundReport:
    """Numeric check of the convolution-sum bound and of sup |a|^r e^{-a^2}.

    The ratio (lattice sum) * |k|^{l+m-3} is recorded for a sample of output
    modes; the spread across |k| is the regression quantity.  The sup of
    |a|^r e^{-a^2} over a dense grid is compared with the calculus value
    (r/2)^{r/2} e^{-r/2}.
    """
    ks = [(1, 0, 0), (2, 0, 0), (4, 0, 0), (2, 2, 1)]
    ratios = {}
    for k in ks:
        kk = np.asarray(k, dtype=float)
        s = convolution_sum(kk, l, m, N)
        ratios[str(k)] = s * float(np.sum(kk**2)) ** ((l + m - 3) / 2)
    vals = list(ratios.values())
    spread = max(vals) / min(vals)
    gap = 0.0
    a = np.linspace(0.0, 6.0, 2_000_001)
    for r in (0.5, 1.0, 2.0, 4.0):
        grid_max = float(np.max(a**r * np.exp(-(a**2))))
        exact = (r / 2.0) ** (r / 2.0) * np.exp(-r / 2.0)
        gap = max(gap, abs(grid_max - exact) / exact)
    return SumBoundReport(ratios, float(spread), float(gap))


# -- manifests ---------------------------------------------------------------------


def write_manifest(path: str | Path, payload: dict) -> None:
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if hasattr(o, "__dict__"):
            return o.__dict__
        return str(o)

    Path(path).write_text(json.dumps(payload, indent=2, default=default))
