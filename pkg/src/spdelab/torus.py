"""Spectral representation on the 3-torus.

Fields live in Fourier coefficient space on the truncated integer frequency
box max_j |k_j| <= N.  The transform convention is

    fhat(k) = (2*pi)^(-3/2) * integral f(x) exp(-i x.k) dx,

so the basis functions e_k = (2*pi)^(-3/2) exp(i k.x) have unit coefficients
and the symbol of d/dx_j is +i k^j.  The collocation grid has 2N+1 points per
axis, which makes the discrete transform exact on the truncated frequency set
(odd size: no ambiguous Nyquist mode).

Also provides the dyadic (Littlewood-Paley) partition of unity, block
projections, Besov/Hoelder norms evaluated on the physical grid, and a JSON
container for exact field round-trips.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi
FOURIER_SCALE = (2.0 * np.pi) ** 1.5  # (2*pi)^(3/2)


class ModeLattice:
    """Truncated frequency box {k in Z^3 : max_j |k_j| <= N}.

    Coefficients are stored on a shifted cube of shape (2N+1,)*3 where index
    n along each axis corresponds to frequency k = n - N.  The lattice caches
    broadcastable wavevector arrays, |k|^2, the Leray projection symbol and
    the dyadic partition.
    """

    def __init__(self, N: int):
        if N < 1:
            raise ValueError(f"truncation radius must be >= 1, got {N}")
        self.N = int(N)
        self.n = 2 * self.N + 1
        self.shape = (self.n, self.n, self.n)
        ax = np.arange(-self.N, self.N + 1)
        self.k1 = ax[:, None, None].astype(np.float64)
        self.k2 = ax[None, :, None].astype(np.float64)
        self.k3 = ax[None, None, :].astype(np.float64)
        self.ksq = self.k1**2 + self.k2**2 + self.k3**2
        self.kabs = np.sqrt(self.ksq)
        self._partition = None
        self._leray = None

    # -- enumeration ------------------------------------------------------

    def mode_table(self) -> np.ndarray:
        """All modes as an (M, 3) int array, C-ordered over the shifted cube."""
        ax = np.arange(-self.N, self.N + 1)
        g = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
        return g.reshape(-1, 3)

    def k_components(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.k1, self.k2, self.k3

    def k_stack(self) -> np.ndarray:
        """Wavevectors as a (3,) + shape float array."""
        b = np.broadcast_arrays(self.k1, self.k2, self.k3)
        return np.stack(b, axis=0)

    @staticmethod
    def negate(coeff: np.ndarray) -> np.ndarray:
        """View of the coefficient cube re-indexed k -> -k (last 3 axes)."""
        return coeff[..., ::-1, ::-1, ::-1]

    def grid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Collocation points x_m = 2*pi*m/(2N+1), broadcastable."""
        x = TWO_PI * np.arange(self.n) / self.n
        return x[:, None, None], x[None, :, None], x[None, None, :]

    @property
    def cell_volume(self) -> float:
        return (TWO_PI / self.n) ** 3

    # -- cached heavy symbols ----------------------------------------------

    def partition(self) -> "DyadicPartition":
        if self._partition is None:
            self._partition = DyadicPartition(self)
        return self._partition

    def leray_tensor(self) -> np.ndarray:
        """Leray symbol P^{ij}(k) = delta_ij - k_i k_j / |k|^2, shape (3, 3) + cube.

        The zero mode row is set to 0 so projection forces mean-zero fields.
        """
        if self._leray is None:
            self._leray = leray_tensor(self.k_stack())
        return self._leray

    def __repr__(self):
        return f"ModeLattice(N={self.N})"


def leray_tensor(kvec: np.ndarray) -> np.ndarray:
    """Leray symbol for wavevectors of shape (3,) + tail; zero vector -> 0."""
    ksq = np.sum(kvec**2, axis=0)
    safe = np.where(ksq == 0.0, 1.0, ksq)
    proj = -kvec[:, None] * kvec[None, :] / safe
    for i in range(3):
        proj[i, i] += 1.0
    proj[:, :, ksq == 0.0] = 0.0 if proj.ndim == 3 else proj[:, :, ksq == 0.0]
    if proj.ndim > 2:
        mask = ksq == 0.0
        proj[:, :, mask] = 0.0
    return proj


# -- fields ----------------------------------------------------------------


@dataclass
class ScalarField:
    lattice: ModeLattice
    coeff: np.ndarray  # complex, lattice.shape

    def copy(self) -> "ScalarField":
        return ScalarField(self.lattice, self.coeff.copy())

    def to_grid(self) -> np.ndarray:
        return dft_inverse(self.lattice, self.coeff)

    def hermitian_defect(self) -> float:
        """Max |coeff(-k) - conj(coeff(k))|; zero for real fields."""
        return float(np.max(np.abs(ModeLattice.negate(self.coeff) - np.conj(self.coeff))))

    def is_real(self, tol: float = 1e-12) -> bool:
        return self.hermitian_defect() <= tol


@dataclass
class VectorField:
    lattice: ModeLattice
    coeff: np.ndarray  # complex, (3,) + lattice.shape

    def copy(self) -> "VectorField":
        return VectorField(self.lattice, self.coeff.copy())

    def component(self, i: int) -> ScalarField:
        return ScalarField(self.lattice, self.coeff[i])

    def to_grid(self) -> np.ndarray:
        return dft_inverse(self.lattice, self.coeff)

    def hermitian_defect(self) -> float:
        return float(np.max(np.abs(ModeLattice.negate(self.coeff) - np.conj(self.coeff))))

    def is_real(self, tol: float = 1e-12) -> bool:
        return self.hermitian_defect() <= tol

    def divergence_defect(self) -> float:
        """Max over modes of |sum_j k_j coeff_j(k)|."""
        lat = self.lattice
        div = lat.k1 * self.coeff[0] + lat.k2 * self.coeff[1] + lat.k3 * self.coeff[2]
        return float(np.max(np.abs(div)))

    def is_divergence_free(self, tol: float = 1e-12) -> bool:
        return self.divergence_defect() <= tol

    def mean_mode(self) -> np.ndarray:
        N = self.lattice.N
        return self.coeff[:, N, N, N]


def zero_scalar(lattice: ModeLattice) -> ScalarField:
    return ScalarField(lattice, np.zeros(lattice.shape, dtype=np.complex128))


def zero_vector(lattice: ModeLattice) -> VectorField:
    return VectorField(lattice, np.zeros((3,) + lattice.shape, dtype=np.complex128))


def scalar_from_grid(lattice: ModeLattice, grid: np.ndarray) -> ScalarField:
    return ScalarField(lattice, dft_forward(lattice, grid))


def random_scalar_field(
    lattice: ModeLattice,
    rng: np.random.Generator,
    decay: float = 0.0,
    mean_zero: bool = False,
) -> ScalarField:
    """Real random field with coefficient law |k|^(-decay) x complex Gaussian."""
    coeff = hermitian_gaussian(lattice, rng)
    if decay != 0.0:
        w = np.where(lattice.ksq == 0.0, 1.0, lattice.kabs) ** (-decay)
        coeff = coeff * w
    if mean_zero:
        N = lattice.N
        coeff[N, N, N] = 0.0
    return ScalarField(lattice, coeff)


def random_vector_field(
    lattice: ModeLattice,
    rng: np.random.Generator,
    decay: float = 0.0,
    divergence_free: bool = False,
) -> VectorField:
    coeff = np.stack(
        [random_scalar_field(lattice, rng, decay, mean_zero=True).coeff for _ in range(3)]
    )
    v = VectorField(lattice, coeff)
    if divergence_free:
        proj = lattice.leray_tensor()
        v = VectorField(lattice, np.einsum("ij...,j...->i...", proj, coeff))
    return v


def hermitian_gaussian(lattice: ModeLattice, rng: np.random.Generator) -> np.ndarray:
    """Hermitian complex Gaussian cube with E[c(k) conj(c(k'))] = delta_{kk'}.

    Built as the unitary DFT of white noise on the grid, so reality holds
    exactly and all modes (including k=0, which comes out real) have unit
    variance.
    """
    w = rng.standard_normal(lattice.shape)
    spec = np.fft.fftn(w) / lattice.n ** 1.5
    return np.fft.fftshift(spec)


# -- transforms --------------------------------------------------------------


def dft_forward(lattice: ModeLattice, grid: np.ndarray) -> np.ndarray:
    """Grid samples -> coefficients in the paper's normalization."""
    if grid.shape[-3:] != lattice.shape:
        raise ValueError(f"grid shape {grid.shape[-3:]} does not match lattice {lattice.shape}")
    spec = np.fft.fftn(grid, axes=(-3, -2, -1))
    spec = np.fft.fftshift(spec, axes=(-3, -2, -1))
    return spec * (FOURIER_SCALE / lattice.n**3)


def dft_inverse(lattice: ModeLattice, coeff: np.ndarray) -> np.ndarray:
    """Coefficients -> grid samples (complex; take .real for real fields)."""
    if coeff.shape[-3:] != lattice.shape:
        raise ValueError(f"coeff shape {coeff.shape[-3:]} does not match lattice {lattice.shape}")
    spec = np.fft.ifftshift(coeff, axes=(-3, -2, -1))
    return np.fft.ifftn(spec, axes=(-3, -2, -1)) * (lattice.n**3 / FOURIER_SCALE)


def oversampled_grid(lattice: ModeLattice, coeff: np.ndarray, factor: int) -> np.ndarray:
    """Evaluate a coefficient cube on a factor-times finer collocation grid."""
    if factor <= 1:
        return dft_inverse(lattice, coeff)
    big = ModeLattice(factor * lattice.N)
    pad = np.zeros(coeff.shape[:-3] + big.shape, dtype=np.complex128)
    lo, hi = big.N - lattice.N, big.N + lattice.N + 1
    pad[..., lo:hi, lo:hi, lo:hi] = coeff
    return dft_inverse(big, pad)


# -- dyadic partition ---------------------------------------------------------


def _smooth_step(t: np.ndarray) -> np.ndarray:
    """C^infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(t > 0.0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
        b = np.where(t < 1.0, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
    return a / (a + b)


def chi_profile(r: np.ndarray) -> np.ndarray:
    """Radial low-frequency bump: 1 on r <= 1/2, 0 on r >= 1, smooth between."""
    return _smooth_step(2.0 * (1.0 - np.asarray(r, dtype=np.float64)))


def rho_profile(r: np.ndarray) -> np.ndarray:
    """Annulus bump chi(r/2) - chi(r), supported on 1/2 <= r <= 2."""
    r = np.asarray(r, dtype=np.float64)
    return chi_profile(r / 2.0) - chi_profile(r)


class DyadicPartition:
    """chi + sum_j rho(2^-j .) sampled on a mode lattice.

    Telescoping makes the partition identity exact (to rounding) at every
    lattice point, and adjacent-only overlap of the rho_j holds exactly on
    the integer lattice.
    """

    def __init__(self, lattice: ModeLattice):
        self.lattice = lattice
        r = lattice.kabs
        rmax = math.sqrt(3.0) * lattice.N
        self.jmax = max(0, math.ceil(math.log2(rmax)))
        self.chi = chi_profile(r)
        self.rho = [rho_profile(r / 2.0**j) for j in range(self.jmax + 1)]

    def weight(self, j: int) -> np.ndarray:
        """Block multiplier: chi for j = -1, rho_j for 0 <= j <= jmax."""
        if j == -1:
            return self.chi
        if 0 <= j <= self.jmax:
            return self.rho[j]
        raise ValueError(f"block index {j} outside [-1, {self.jmax}]")

    def unity_defect(self) -> float:
        total = self.chi + sum(self.rho)
        return float(np.max(np.abs(total - 1.0)))

    def pair_weight(self) -> np.ndarray:
        """sum_{|i-j|<=1} theta_i theta_j over blocks including chi as j=-1.

        Equals (sum_j theta_j)^2 = 1 on the lattice because non-adjacent
        blocks have disjoint supports there.
        """
        ws = [self.weight(j) for j in range(-1, self.jmax + 1)]
        out = np.zeros(self.lattice.shape)
        for j, w in enumerate(ws):
            for l in (j - 1, j, j + 1):
                if 0 <= l < len(ws):
                    out += w * ws[l]
        return out


def lp_block(f: ScalarField, j: int) -> ScalarField:
    """Littlewood-Paley block Delta_j f (j = -1 is the chi block)."""
    part = f.lattice.partition()
    return ScalarField(f.lattice, f.coeff * part.weight(j))


def lp_block_grids(lattice: ModeLattice, coeff: np.ndarray) -> np.ndarray:
    """Physical-space samples of all blocks, shape (jmax+2,) + lattice.shape.

    Batched inverse transform; block index b corresponds to j = b - 1.
    """
    part = lattice.partition()
    ws = np.stack([part.weight(j) for j in range(-1, part.jmax + 1)])
    return dft_inverse(lattice, ws * coeff[None, ...])


# -- norms --------------------------------------------------------------------


def _as_p(p) -> float:
    p = float(p)
    if not (p >= 1.0):
        raise ValueError(f"Lebesgue exponent must be in [1, inf], got {p}")
    return p


def grid_lp_norm(lattice: ModeLattice, values: np.ndarray, p: float) -> float:
    """L^p(T^3) norm from grid samples (max over points for p = inf)."""
    a = np.abs(values)
    if math.isinf(p):
        return float(np.max(a))
    return float((np.sum(a**p) * lattice.cell_volume) ** (1.0 / p))


def besov_norm(f: ScalarField, alpha: float, p=np.inf, q=np.inf, oversample: int = 1) -> float:
    """Inhomogeneous Besov norm || 2^{j a} ||Delta_j f||_{L^p} ||_{l^q, j >= -1}."""
    p = _as_p(p)
    q = _as_p(q)
    lattice = f.lattice
    part = lattice.partition()
    ws = np.stack([part.weight(j) for j in range(-1, part.jmax + 1)])
    blocks = ws * f.coeff[None, ...]
    if oversample > 1:
        grids = oversampled_grid(lattice, blocks, oversample)
        vol = (TWO_PI / grids.shape[-1]) ** 3
    else:
        grids = dft_inverse(lattice, blocks)
        vol = lattice.cell_volume
    vals = []
    for b in range(grids.shape[0]):
        a = np.abs(grids[b])
        if math.isinf(p):
            lp = float(np.max(a))
        else:
            lp = float((np.sum(a**p) * vol) ** (1.0 / p))
        vals.append(2.0 ** ((b - 1) * alpha) * lp)
    v = np.asarray(vals)
    if math.isinf(q):
        return float(np.max(v))
    return float(np.sum(v**q) ** (1.0 / q))


def holder_norm(f: ScalarField, alpha: float, oversample: int = 1) -> float:
    """Hoelder-Besov norm C^alpha = B^alpha_{inf,inf}."""
    return besov_norm(f, alpha, np.inf, np.inf, oversample)


def vector_holder_norm(v: VectorField, alpha: float) -> float:
    """Max of the component Hoelder norms."""
    return max(holder_norm(v.component(i), alpha) for i in range(3))


def parseval_defect(lattice: ModeLattice, f: ScalarField) -> float:
    """Relative gap between grid L^2 norm and coefficient l^2 norm."""
    g = f.to_grid()
    l2_grid = math.sqrt(np.sum(np.abs(g) ** 2) * lattice.cell_volume)
    l2_coef = math.sqrt(np.sum(np.abs(f.coeff) ** 2))
    denom = max(l2_coef, 1e-300)
    return abs(l2_grid - l2_coef) / denom


# -- serialization ------------------------------------------------------------


def field_to_json(obj) -> str:
    """Serialize a ScalarField or VectorField; exact round-trip via repr floats."""
    if isinstance(obj, ScalarField):
        comps = obj.coeff[None, ...]
        ncomp = 1
        reality = obj.is_real()
    elif isinstance(obj, VectorField):
        comps = obj.coeff
        ncomp = 3
        reality = obj.is_real()
    else:
        raise TypeError(f"cannot serialize {type(obj)!r}")
    lattice = obj.lattice
    modes = lattice.mode_table()
    entries = []
    for c in range(ncomp):
        flat = comps[c].reshape(-1)
        nz = np.nonzero(flat)[0]
        entries.append(
            [
                [int(modes[i, 0]), int(modes[i, 1]), int(modes[i, 2]),
                 float(flat[i].real), float(flat[i].imag)]
                for i in nz
            ]
        )
    return json.dumps(
        {"N": lattice.N, "reality": bool(reality), "components": ncomp, "coeffs": entries}
    )


def field_from_json(text: str):
    doc = json.loads(text)
    lattice = ModeLattice(doc["N"])
    ncomp = doc["components"]
    coeff = np.zeros((ncomp,) + lattice.shape, dtype=np.complex128)
    for c, rows in enumerate(doc["coeffs"]):
        for k1, k2, k3, re, im in rows:
            coeff[c, k1 + lattice.N, k2 + lattice.N, k3 + lattice.N] = complex(re, im)
    if ncomp == 1:
        return ScalarField(lattice, coeff[0])
    return VectorField(lattice, coeff)
