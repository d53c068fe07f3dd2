"""Matrix weights and step fields on a dyadic window.

A MatrixField holds one n x n matrix per leaf cell.  Weight fields are
Hermitian with positive definite leaves (enforced); symbol fields and
operator outputs may be arbitrary.  All averages, powers and
characteristics are exact finite sums over leaves, so scalar identities
hold to rounding error.

Norm conventions.  The A_p characteristic integrand uses the normalized
Frobenius norm ||.||_F / sqrt(n): the identity weight scores exactly 1,
and at p = 2 the double-integral form of the characteristic agrees
exactly with the averaged closed form (both equal tr(m_I W m_I W^{-1})/n
per cube).  Condition-family quantities elsewhere use the spectral norm.

Reducing operators: at p = 2 the exact averages (m_I W)^{1/2} and
(m_I W^{-1})^{1/2} are used.  For p != 2 a second-moment ellipsoid over a
direction net approximates the L^p average norm; the realized two-sided
ratio kappa is verified on an offset net and recorded, never assumed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np

from .dyadic import Window, WindowError, cube_pieces, enumerate_grid_cubes

__all__ = [
    "FieldError",
    "NotPositiveDefiniteError",
    "MatrixField",
    "VectorField",
    "average",
    "pointwise_power",
    "ap_characteristic",
    "ap_characteristic_report",
    "ReducingTable",
    "reducing_operator",
    "verify_reducing_comparability",
    "generate_weight",
    "dump_field",
    "load_field",
]

HERMITIAN_TOL = 1e-12
EIG_FLOOR = 1e-14


class FieldError(ValueError):
    pass


class NotPositiveDefiniteError(FieldError):
    pass


def _as_herm(mats, tol, what="matrix"):
    err = np.max(np.abs(mats - np.conj(np.swapaxes(mats, -1, -2))))
    scale = max(1.0, float(np.max(np.abs(mats))))
    if err > tol * scale:
        raise FieldError(f"{what} not Hermitian: asymmetry {err:.3e}")
    return 0.5 * (mats + np.conj(np.swapaxes(mats, -1, -2)))


class MatrixField:
    """Piecewise-constant n x n matrix field on a window.

    Weight fields are Hermitian with positive definite leaves (checked);
    general symbol fields and operator outputs may be arbitrary complex
    matrices.  Spectral operations (powers, inverses) demand Hermitian
    input.
    """

    def __init__(self, window, leaves, weight=False):
        leaves = np.asarray(leaves, dtype=complex)
        if leaves.shape[0] != window.leafcount or leaves.ndim != 3:
            raise FieldError("leaves must have shape (leafcount, n, n)")
        if leaves.shape[1] != leaves.shape[2]:
            raise FieldError("leaf matrices must be square")
        if weight:
            leaves = _as_herm(leaves, HERMITIAN_TOL, "weight leaf")
        else:
            leaves = leaves.copy()
        self.window = window
        self.n = leaves.shape[1]
        self.leaves = leaves
        self.leaves.setflags(write=False)
        self.is_weight = bool(weight)
        if weight:
            mineig = np.min(np.linalg.eigvalsh(leaves))
            if mineig <= 0:
                raise NotPositiveDefiniteError(
                    f"weight field has non-positive leaf (min eig {mineig:.3e})"
                )
        self._avg_cache = None
        self._power_cache = {}
        self._reducing_cache = {}

    # -- constructors ----------------------------------------------------

    @classmethod
    def constant(cls, window, matrix, weight=False):
        matrix = np.asarray(matrix, dtype=complex)
        return cls(window, np.broadcast_to(
            matrix, (window.leafcount,) + matrix.shape).copy(), weight=weight)

    @classmethod
    def identity(cls, window, n):
        return cls.constant(window, np.eye(n), weight=True)

    # -- basic layers ------------------------------------------------------

    def level_averages(self):
        if self._avg_cache is None:
            self._avg_cache = self.window.level_averages(self.leaves)
        return self._avg_cache

    def average(self, cube):
        """Arithmetic mean of leaf matrices over a cube of this window."""
        j, idx = _rel(self.window, cube)
        return self.level_averages()[j][idx]

    def power(self, s):
        """Pointwise spectral power W^s as a new field (cached)."""
        key = float(s)
        if key not in self._power_cache:
            herm = _as_herm(self.leaves, HERMITIAN_TOL, "power input")
            vals, vecs = np.linalg.eigh(herm)
            if np.min(vals) < EIG_FLOOR and not float(s).is_integer():
                raise NotPositiveDefiniteError(
                    f"eigenvalue below floor {EIG_FLOOR:g} in pointwise power"
                )
            if np.min(vals) <= 0 and float(s) < 0:
                raise NotPositiveDefiniteError("negative power of singular leaf")
            pw = np.einsum(
                "lab,lb,lcb->lac", vecs, np.power(vals, key), np.conj(vecs)
            )
            self._power_cache[key] = MatrixField(
                self.window, pw, weight=self.is_weight
            )
        return self._power_cache[key]

    def inverse(self):
        return self.power(-1.0)

    def conj_transpose(self):
        """Pointwise Hermitian adjoint (trivial for Hermitian fields)."""
        return MatrixField(
            self.window, np.conj(np.swapaxes(self.leaves, 1, 2)),
            weight=self.is_weight,
        )

    def apply(self, vec_field):
        """Pointwise matrix-vector product, leaf by leaf."""
        if vec_field.window is not self.window:
            raise WindowError("fields live on different windows")
        return VectorField(
            self.window, np.einsum("lab,lb->la", self.leaves, vec_field.leaves)
        )

    def reducing_table(self, p, dual=False):
        key = (float(p), bool(dual))
        if key not in self._reducing_cache:
            self._reducing_cache[key] = ReducingTable.build(self, p, dual=dual)
        return self._reducing_cache[key]

    def __repr__(self):
        tag = "weight" if self.is_weight else "field"
        return f"MatrixField(n={self.n}, {tag}, {self.window!r})"


class VectorField:
    """Piecewise-constant C^n-valued function on a window."""

    def __init__(self, window, leaves):
        leaves = np.asarray(leaves, dtype=complex)
        if leaves.shape[0] != window.leafcount or leaves.ndim != 2:
            raise FieldError("leaves must have shape (leafcount, n)")
        if not np.all(np.isfinite(leaves)):
            raise FieldError("vector field has non-finite entries")
        self.window = window
        self.n = leaves.shape[1]
        self.leaves = leaves
        self._avg_cache = None

    @classmethod
    def constant(cls, window, vec):
        vec = np.asarray(vec, dtype=complex)
        return cls(window, np.broadcast_to(vec, (window.leafcount, vec.shape[0])).copy())

    def level_averages(self):
        if self._avg_cache is None:
            self._avg_cache = self.window.level_averages(self.leaves)
        return self._avg_cache

    def average(self, cube):
        j, idx = _rel(self.window, cube)
        return self.level_averages()[j][idx]

    def lp_norm(self, p, weight=None):
        """||f||_{L^p(W)} with exact leaf quadrature (weight optional)."""
        vals = self.leaves
        if weight is not None:
            wp = weight.power(1.0 / p).leaves
            vals = np.einsum("lab,lb->la", wp, vals)
        mags = np.linalg.norm(vals, axis=1)
        return float(
            (self.window.leaf_volume * np.sum(mags**p)) ** (1.0 / p)
        )

    def __add__(self, other):
        return VectorField(self.window, self.leaves + other.leaves)

    def __sub__(self, other):
        return VectorField(self.window, self.leaves - other.leaves)

    def __mul__(self, scalar):
        return VectorField(self.window, self.leaves * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return VectorField(self.window, -self.leaves)


def _rel(window, cube):
    if isinstance(cube, tuple) and len(cube) == 2 and isinstance(cube[0], int):
        j, idx = cube
        if not 0 <= j <= window.depth or not 0 <= idx < window.cubes_at(j):
            raise WindowError("relative cube reference outside window")
        return j, idx
    return window.rel_index(cube)


def average(field, cube):
    """m_I of a matrix or vector field over a window cube."""
    return field.average(cube)


def pointwise_power(field, s):
    return field.power(s)


# -- A_p characteristic ---------------------------------------------------


def _pair_gram(P, N):
    # G[x, t] = tr(P_x N_t) / n: the squared *normalized* Frobenius norm
    # of P_x^{1/2} N_t^{1/2}, so that the identity weight scores 1
    n = P.shape[1]
    VP = P.reshape(P.shape[0], n * n)
    VN = np.conj(N.reshape(N.shape[0], n * n))
    return np.real(VP @ VN.T) / n


def _own_grid_ap(W, p, max_rel_level):
    win = W.window
    pp = p / (p - 1.0)
    P = W.power(2.0 / p).leaves
    N = W.power(-2.0 / p).leaves
    G = _pair_gram(P, N)
    H = np.maximum(G, 0.0) ** (pp / 2.0)
    best, best_cube = 0.0, (0, 0)
    per_level = []
    for j in range(0, max_rel_level + 1):
        idx = win.block_leaf_index(j)
        Hb = H[idx[:, :, None], idx[:, None, :]]
        inner = Hb.mean(axis=2) ** (p / pp)
        vals = inner.mean(axis=1)
        per_level.append(vals)
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, best_cube = float(vals[k]), (j, k)
    return best, best_cube, per_level


def _foreign_grid_ap(W, p, shift, max_level):
    win = W.window
    pp = p / (p - 1.0)
    P = W.power(2.0 / p).leaves
    N = W.power(-2.0 / p).leaves
    G = _pair_gram(P, N)
    H = np.maximum(G, 0.0) ** (pp / 2.0)
    best, best_cube = 0.0, None
    for k, cubes in enumerate_grid_cubes(win, shift, max_level=max_level):
        for cube in cubes:
            idx, vols = cube_pieces(win, cube)
            if idx.size == 0:
                continue
            w = vols / vols.sum()
            Hb = H[np.ix_(idx, idx)]
            inner = (Hb * w[None, :]).sum(axis=1) ** (p / pp)
            val = float((inner * w).sum())
            if val > best:
                best, best_cube = val, cube
    return best, best_cube


def ap_characteristic_report(W, p, grids=None, max_level=None):
    """Window A_p characteristic with witness cube.

    The supremum runs over all cubes of the window's own grid (fast exact
    path) and, when ``grids`` lists further shift indices, over cubes of
    those grids contained in the window box, down to absolute level
    ``max_level``.
    """
    if not 1.0 < p < np.inf:
        raise FieldError(f"p must lie in (1, inf), got {p}")
    if not W.is_weight:
        raise NotPositiveDefiniteError("A_p characteristic needs a weight field")
    win = W.window
    leaf_level = win.root.level + win.depth
    if max_level is None:
        max_level = leaf_level
    max_rel = min(win.depth, max_level - win.root.level)
    if max_rel < 0:
        raise WindowError("max_level above the window root")
    best, cube_ref, _ = _own_grid_ap(W, p, max_rel)
    witness = win.cube(*cube_ref)
    if grids:
        for t in grids:
            if t == win.grid.shift:
                continue
            val, cube = _foreign_grid_ap(W, p, t, max_level)
            if val > best and cube is not None:
                best, witness = val, cube
    return best, witness


def ap_characteristic(W, p, grids=None, max_level=None):
    """Matrix A_p characteristic of the weight on its window (Frobenius form)."""
    return ap_characteristic_report(W, p, grids=grids, max_level=max_level)[0]


def a2_exact_form(W):
    """sup_I ||(m_I W)^{1/2} (m_I W^{-1})^{1/2}||^2 over window cubes, in the
    normalized Frobenius norm (the closed form the characteristic matches
    exactly at p = 2)."""
    avgsW = W.level_averages()
    avgsWi = W.inverse().level_averages()
    best = 0.0
    for j in range(W.window.depth + 1):
        vals = np.real(np.einsum("kab,kba->k", avgsW[j], avgsWi[j])) / W.n
        best = max(best, float(np.max(vals)))
    return best


# -- reducing operators -----------------------------------------------------


@lru_cache(maxsize=None)
def direction_net(n, offset=False):
    """Quasi-uniform unit directions on the real sphere (antipodes dropped)."""
    if n == 1:
        return np.array([[1.0]])
    if n == 2:
        count = 64
        theta = (np.arange(count) + (0.5 if offset else 0.0)) * np.pi / count
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    if n == 3:
        count = 512
        k = np.arange(count) + (0.75 if offset else 0.25)
        phi = np.arccos(1.0 - k / count)  # upper hemisphere
        golden = np.pi * (3.0 - np.sqrt(5.0))
        ang = golden * k
        return np.stack(
            [np.sin(phi) * np.cos(ang), np.sin(phi) * np.sin(ang), np.cos(phi)],
            axis=1,
        )
    rng = np.random.default_rng(90210 + (1 if offset else 0))
    vecs = rng.standard_normal((128 * n * n, n))
    return vecs / np.linalg.norm(vecs, axis=1, keepdims=True)


def _complex_net(n, offset=False):
    base = direction_net(n, offset)
    if n == 1:
        return base.astype(complex)
    nets = [base.astype(complex)]
    phased = base.astype(complex).copy()
    phased[:, 1:] *= 1j
    nets.append(phased)
    return np.concatenate(nets, axis=0)


def _rho_powers(field_power_leaves, net, expo, window):
    # per-cube (1/|I|) int |P(x) e|^expo for every net direction
    Y = np.einsum("lab,jb->lja", field_power_leaves, net)
    mags = np.linalg.norm(Y, axis=2) ** expo  # (leaves, dirs)
    return window.level_averages(mags)


@dataclass
class ReducingTable:
    """Per-cube SPD reducing operators V_I(W,p) or V_I'(W,p) on a window.

    ``mats[j]`` has shape (cubes_j, n, n); ``inv(j)`` returns inverses.
    ``kappa`` is the realized two-sided net-verification constant (exactly
    1.0 on the p = 2 average path).
    """

    window: object
    p: float
    dual: bool
    mats: list
    kappa: float
    exact: bool
    _inv: dict = dc_field(default_factory=dict)

    @classmethod
    def build(cls, W, p, dual=False):
        if not 1.0 < p < np.inf:
            raise FieldError(f"p must lie in (1, inf), got {p}")
        if not W.is_weight:
            raise NotPositiveDefiniteError("reducing operators need a weight field")
        win = W.window
        if abs(p - 2.0) < 1e-15:
            src = W.inverse() if dual else W
            mats = [_mat_sqrt(a) for a in src.level_averages()]
            return cls(win, p, dual, mats, kappa=1.0, exact=True)
        pp = p / (p - 1.0)
        expo = pp if dual else p
        P = W.power(-1.0 / p if dual else 1.0 / p).leaves
        is_complex = bool(np.max(np.abs(P.imag)) > 0)
        net = _complex_net(W.n) if is_complex else direction_net(W.n).astype(complex)
        vnet = (
            _complex_net(W.n, offset=True)
            if is_complex
            else direction_net(W.n, offset=True).astype(complex)
        )
        rho_pow = _rho_powers(P, net, expo, win)
        M0 = np.einsum("ja,jb->ab", net, np.conj(net))
        M0_isqrt = _mat_isqrt(M0[None])[0]
        mats = []
        kappa = 1.0
        vr_pow = _rho_powers(P, vnet, expo, win)
        for j in range(win.depth + 1):
            rho2 = rho_pow[j] ** (2.0 / expo)  # (cubes, dirs)
            S = np.einsum("kj,ja,jb->kab", rho2, net, np.conj(net))
            V = _mat_sqrt(M0_isqrt[None] @ S @ M0_isqrt[None])
            mats.append(V)
            ve = np.linalg.norm(np.einsum("kab,jb->kja", V, vnet), axis=2)
            rho_v = vr_pow[j] ** (1.0 / expo)
            ratio = rho_v / np.maximum(ve, 1e-300)
            kappa = max(kappa, float(np.max(ratio)), float(np.max(1.0 / ratio)))
        return cls(win, p, dual, mats, kappa=kappa, exact=False)

    def mat(self, j):
        return self.mats[j]

    def inv(self, j):
        if j not in self._inv:
            self._inv[j] = np.linalg.inv(self.mats[j])
        return self._inv[j]

    def at(self, cube):
        j, idx = _rel(self.window, cube)
        return self.mats[j][idx]


def _mat_sqrt(stack):
    vals, vecs = np.linalg.eigh(stack)
    if np.min(vals) < -1e-10 * max(1.0, float(np.max(np.abs(vals)))):
        raise NotPositiveDefiniteError("matrix square root of indefinite stack")
    vals = np.maximum(vals, 0.0)
    return np.einsum("...ab,...b,...cb->...ac", vecs, np.sqrt(vals), np.conj(vecs))


def _mat_isqrt(stack):
    vals, vecs = np.linalg.eigh(stack)
    if np.min(vals) < EIG_FLOOR:
        raise NotPositiveDefiniteError("inverse square root of singular stack")
    return np.einsum("...ab,...b,...cb->...ac", vecs, vals**-0.5, np.conj(vecs))


def reducing_operator(W, cube, p, dual=False):
    """The SPD matrix V_I(W,p) (or the dual V_I'(W,p)) for one cube."""
    return W.reducing_table(p, dual=dual).at(cube)


@dataclass
class ComparabilityReport:
    p: float
    characteristic: float
    kappa: float
    lower: float
    upper: float
    bound: float
    ok: bool
    per_cube: list


def verify_reducing_comparability(W, p, cubes=None):
    """Check Lemma-style comparability |V_I'(W) e| vs |m_I(W^{-1/p}) e|.

    Per cube and net direction the ratio |V' e| / |m_I(W^{-1/p}) e| must sit
    in [(1 - 1e-9)/kappa, (n char)^{n/p} * kappa * (1 + 1e-9)]; kappa is the
    table's realized ellipsoid constant (1 on the exact p = 2 path, where
    the lower bound is the operator Jensen inequality).  n*char dominates
    the spectral-norm characteristic the comparability lemma is stated
    with, whatever the matrix-norm convention.
    """
    win = W.window
    table = W.reducing_table(p, dual=True)
    char = ap_characteristic(W, p)
    Mi = W.power(-1.0 / p)
    avgs = Mi.level_averages()
    net = direction_net(W.n, offset=True).astype(complex)
    per_cube = []
    lo, hi = np.inf, 0.0
    if cubes is None:
        pairs = [(j, None) for j in range(win.depth + 1)]
    else:
        pairs = [_rel(win, c) for c in cubes]
    for j, idx in pairs:
        Vm = table.mats[j] if idx is None else table.mats[j][idx : idx + 1]
        Am = avgs[j] if idx is None else avgs[j][idx : idx + 1]
        ve = np.linalg.norm(np.einsum("kab,jb->kja", Vm, net), axis=2)
        me = np.linalg.norm(np.einsum("kab,jb->kja", Am, net), axis=2)
        r = ve / np.maximum(me, 1e-300)
        per_cube.append((j, r.min(axis=1), r.max(axis=1)))
        lo = min(lo, float(r.min()))
        hi = max(hi, float(r.max()))
    bound = (W.n * char) ** (W.n / p) * table.kappa * (1 + 1e-9)
    ok = (lo * table.kappa >= 1 - 1e-9) and (hi <= bound)
    return ComparabilityReport(
        p=p, characteristic=char, kappa=table.kappa, lower=lo, upper=hi,
        bound=bound, ok=ok, per_cube=per_cube,
    )


# -- synthetic weights ------------------------------------------------------


def _axis_power_averages(edges_lo, h, x0, alpha, count):
    """Exact cell averages of |x - x0|^alpha on count cells of width h."""
    out = np.empty(count)
    a1 = alpha + 1.0
    for i in range(count):
        lo = edges_lo + i * h
        hi = lo + h
        lof, hif, x0f = float(lo - x0), float(hi - x0), 0.0
        if lof >= 0:
            out[i] = (hif**a1 - lof**a1) / (a1 * float(h))
        elif hif <= 0:
            out[i] = ((-lof) ** a1 - (-hif) ** a1) / (a1 * float(h))
        else:
            raise FieldError("power-weight singularity inside a leaf cell")
    return out


def _power_diag_entry(window, alpha, x0):
    d, L = window.d, window.depth
    c0 = window.root.corner
    h = window.leaf_side
    axes = []
    for a in range(d):
        axes.append(
            _axis_power_averages(c0[a], h, float(x0[a]), alpha, 2**L)
        )
    grid = axes[0]
    for a in range(1, d):
        grid = np.multiply.outer(grid, axes[a])
    return grid.reshape(-1)


def _rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    R = np.zeros(theta.shape + (2, 2))
    R[..., 0, 0] = c
    R[..., 0, 1] = -s
    R[..., 1, 0] = s
    R[..., 1, 1] = c
    return R


def _theta_values(spec, window, rng):
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return np.full(window.leafcount, float(spec.get("value", 0.0)))
    if kind == "linear":
        centers = window.leaf_centers()
        return float(spec.get("a", 1.0)) * centers.sum(axis=1) + float(
            spec.get("b", 0.0)
        )
    if kind == "random":
        amp = float(spec.get("amplitude", 1.0))
        return amp * rng.uniform(-np.pi, np.pi, window.leafcount)
    raise FieldError(f"unknown theta spec kind {kind!r}")


def _log_spd_leaves(window, n, amplitude, rng, levels=None):
    from .transforms import HaarSpectrum, synthesize  # local to avoid cycle

    spec = HaarSpectrum.zeros(window, (n, n))
    top = window.depth if levels is None else min(levels, window.depth)
    for j in range(top):
        a = rng.standard_normal((window.cubes_at(j), window.nsig, n, n))
        a = 0.5 * (a + np.swapaxes(a, -1, -2))
        spec.coefs[j] = (
            amplitude * np.sqrt(window.volumes[j]) * 2.0 ** (-0.35 * j) * a
        ).astype(complex)
    H = synthesize(spec).leaves
    H = 0.5 * (H + np.conj(np.swapaxes(H, 1, 2)))
    vals, vecs = np.linalg.eigh(H)
    return np.einsum("lab,lb,lcb->lac", vecs, np.exp(vals), np.conj(vecs))


def generate_weight(spec, window=None):
    """Build a weight field from a JSON-style spec dict.

    Kinds: ``identity``, ``scalar_power`` (per-axis power law per diagonal
    entry, singular point on a leaf boundary, exact cell averages),
    ``rotation`` (n = 2 conjugated diagonal), ``log_spd`` (random bounded
    log-eigenvalue oscillation), ``leaves`` (explicit per-leaf list).
    """
    if window is None:
        d = int(spec.get("d", 1))
        depth = int(spec.get("depth", 8))
        shift = spec.get("shift")
        window = Window.unit(d, depth, shift=shift)
    kind = spec.get("kind")
    n = int(spec.get("n", 1))
    rng = np.random.default_rng(spec.get("seed", 0))
    if kind == "identity":
        return MatrixField.identity(window, n)
    if kind == "scalar_power":
        alphas = spec.get("alphas")
        if alphas is None:
            alphas = [float(spec.get("alpha", 0.5))] * n
        if len(alphas) != n:
            raise FieldError("need one exponent per diagonal entry")
        x0 = spec.get("x0", [0.0] * window.d)
        leaves = np.zeros((window.leafcount, n, n), dtype=complex)
        for i, alpha in enumerate(alphas):
            leaves[:, i, i] = _power_diag_entry(window, float(alpha), x0)
        return MatrixField(window, leaves, weight=True)
    if kind == "rotation":
        if n != 2:
            raise FieldError("rotation-conjugated weights are n = 2 only")
        theta = _theta_values(spec.get("theta", {}), window, rng)
        lam_specs = spec.get("lambda", [{"kind": "constant", "value": 1.0}] * 2)
        diag = np.zeros((window.leafcount, 2))
        for i, sub in enumerate(lam_specs):
            skind = sub.get("kind", "constant")
            if skind == "constant":
                diag[:, i] = float(sub.get("value", 1.0))
            elif skind == "scalar_power":
                diag[:, i] = _power_diag_entry(
                    window, float(sub.get("alpha", 0.5)),
                    sub.get("x0", [0.0] * window.d),
                )
            elif skind == "lognormal":
                diag[:, i] = np.exp(
                    float(sub.get("sigma", 0.5))
                    * rng.standard_normal(window.leafcount)
                )
            else:
                raise FieldError(f"unknown lambda spec kind {skind!r}")
        R = _rotation(theta)
        leaves = np.einsum("lba,lb,lbc->lac", R, diag, R)
        return MatrixField(window, leaves.astype(complex), weight=True)
    if kind == "log_spd":
        amp = float(spec.get("amplitude", 0.6))
        leaves = _log_spd_leaves(window, n, amp, rng, spec.get("levels"))
        return MatrixField(window, leaves, weight=True)
    if kind == "leaves":
        vals = np.asarray(spec["values"], dtype=complex)
        return MatrixField(window, vals, weight=bool(spec.get("weight", True)))
    raise FieldError(f"unknown weight spec kind {kind!r}")


# -- serialization ----------------------------------------------------------

_MAGIC = "matweight-field"


def dump_field(field, path):
    """Write a field dump: one JSON header line + raw little-endian payload."""
    is_matrix = isinstance(field, MatrixField)
    win = field.window
    header = {
        "magic": _MAGIC,
        "version": 1,
        "kind": "matrix" if is_matrix else "vector",
        "n": field.n,
        "d": win.d,
        "depth": win.depth,
        "shift": win.grid.shift,
        "root_level": win.root.level,
        "root_position": list(win.root.position),
        "weight": bool(getattr(field, "is_weight", False)),
    }
    payload = np.ascontiguousarray(field.leaves, dtype=np.complex128)
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        fh.write(payload.astype("<c16").tobytes())


def load_field(path, window=None):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("magic") != _MAGIC:
            raise FieldError("not a matweight field dump")
        raw = fh.read()
    if window is None:
        from .dyadic import DyadicGrid, DyadicCube

        grid = DyadicGrid(header["d"], header["shift"])
        root = DyadicCube(grid, header["root_level"], tuple(header["root_position"]))
        window = Window(root, header["depth"])
    n = header["n"]
    data = np.frombuffer(raw, dtype="<c16")
    if header["kind"] == "matrix":
        leaves = data.reshape(window.leafcount, n, n).copy()
        return MatrixField(window, leaves, weight=header["weight"])
    leaves = data.reshape(window.leafcount, n).copy()
    return VectorField(window, leaves)
