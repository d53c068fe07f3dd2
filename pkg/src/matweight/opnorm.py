"""Dense materialization of dyadic operators and weighted operator norms.

Every operator here acts on leaf-resolved vector fields, i.e. on C^{n * 2^{dL}}.
At p = 2 the weighted norm L^2(U) -> L^2(W) is an exact singular value of the
conjugated matrix blockdiag(W^{1/2}) T blockdiag(U^{-1/2}) (the uniform leaf
mass cancels).  For p != 2 only certified lower bounds exist at finite cost:
indicator-type test functions swept over all cubes, refined by projected
gradient ascent on the Rayleigh ratio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import VectorField, _mat_sqrt, _mat_isqrt
from . import transforms as tf

__all__ = [
    "CapError",
    "OperatorMatrix",
    "materialize",
    "weighted_opnorm_p2",
    "lp_opnorm_estimate",
    "haar_multiplier_norm_relation",
    "dump_operator",
]

DENSE_CAP = 4096


class CapError(ValueError):
    pass


@dataclass
class OperatorMatrix:
    """Dense matrix of a dyadic operator on vectorized leaf fields."""

    matrix: np.ndarray
    window: object
    n: int
    provenance: str

    @property
    def size(self):
        return self.matrix.shape[0]

    def apply_field(self, f):
        vec = self.matrix @ f.leaves.reshape(-1)
        return VectorField(self.window, vec.reshape(-1, self.n))


def _batched_apply(desc, window, n, values):
    """Apply a descriptor operator to a batch: values (leaves, n, m)."""
    kind = desc["kind"]
    m = values.shape[2]
    zero_root = np.zeros((n, m), dtype=complex)
    if kind == "paraproduct":
        Bs = tf.analyze(desc["B"])
        avgs = window.level_averages(values)
        coefs = [
            np.einsum("ksab,kbm->ksam", Bs.coefs[j], avgs[j])
            for j in range(window.depth)
        ]
        return tf._synthesize_values(window, coefs, zero_root)
    if kind == "conjugated_paraproduct":
        A, W, U, p = desc["A"], desc["W"], desc["U"], desc["p"]
        table = W.reducing_table(p)
        g = np.einsum("lab,lbm->lam", U.power(-1.0 / p).leaves, values)
        avgs = window.level_averages(g)
        coefs = [
            np.einsum("kab,ksbc,kcm->ksam", table.mats[j], A.coefs[j], avgs[j])
            for j in range(window.depth)
        ]
        return tf._synthesize_values(window, coefs, zero_root)
    if kind == "haar_multiplier":
        A = desc["A"]
        fc, _, _ = tf._analyze_values(window, values)
        coefs = [
            np.einsum("ksab,ksbm->ksam", A.coefs[j], fc[j])
            for j in range(window.depth)
        ]
        return tf._synthesize_values(window, coefs, zero_root)
    if kind == "dual_paraproduct":
        Bs = tf.analyze(desc["B"])
        fc, _, _ = tf._analyze_values(window, values)
        acc = np.zeros((1, n, m), dtype=complex)
        for j in range(window.depth):
            term = (
                np.einsum("ksab,ksbm->kam", Bs.coefs[j], fc[j])
                / window.volumes[j]
            )
            nxt = np.empty((window.cubes_at(j + 1), n, m), dtype=complex)
            nxt[window.children_index(j)] = (acc + term)[:, None]
            acc = nxt
        return acc
    if kind == "haar_shift":
        smap = desc["sigma"]
        spec = tf.HaarSpectrum(window, *tf._analyze_values(window, values)[:2])
        if not desc.get("project", False):
            tf.require_headroom(spec, "shift input")
        out = tf._shift_spectrum(smap, spec)
        return tf._synthesize_values(window, out.coefs, zero_root)
    if kind == "commutator":
        B, smap = desc["B"], desc["sigma"]
        shift = {
            "kind": "haar_shift",
            "sigma": smap,
            "project": desc.get("project", False),
        }
        Qv = _batched_apply(shift, window, n, values)
        BQv = np.einsum("lab,lbm->lam", B.leaves, Qv)
        Bv = np.einsum("lab,lbm->lam", B.leaves, values)
        QBv = _batched_apply(shift, window, n, Bv)
        return BQv - QBv
    raise ValueError(f"unknown operator descriptor kind {kind!r}")


def materialize(op, window, n):
    """Dense matrix of an operator (descriptor dict or VectorField callable).

    Descriptors are applied to the whole standard basis in one batched pass;
    bare callables fall back to a column loop.  Size is capped at
    n * leafcount <= 4096 (dense SVD cost); larger windows must use the
    matrix-free lower bounds.

    Shift and commutator descriptors are defined only on fields with shift
    headroom; their dense matrices act as the operator composed with the
    orthogonal projection that kills the last coefficient level, and carry
    that composition in the provenance tag.  On headroom inputs this is the
    operator itself.
    """
    N = n * window.leafcount
    if N > DENSE_CAP:
        raise CapError(f"dense materialization capped at {DENSE_CAP}, need {N}")
    if isinstance(op, dict):
        provenance = op["kind"]
        if op["kind"] in ("haar_shift", "commutator"):
            op = dict(op, project=True)
            provenance = op["kind"] + "*headroom_projection"
        basis = np.eye(N, dtype=complex).reshape(window.leafcount, n, N)
        out = _batched_apply(op, window, n, basis)
        cols = out.reshape(N, N)
        return OperatorMatrix(
            matrix=cols, window=window, n=n, provenance=provenance
        )
    provenance = getattr(op, "__name__", "callable")
    cols = np.zeros((N, N), dtype=complex)
    basis = np.zeros(N, dtype=complex)
    for i in range(N):
        basis[i] = 1.0
        f = VectorField(window, basis.reshape(window.leafcount, n))
        cols[:, i] = op(f).leaves.reshape(-1)
        basis[i] = 0.0
    return OperatorMatrix(matrix=cols, window=window, n=n, provenance=provenance)


def weighted_opnorm_p2(T, W, U):
    """||T||_{L^2(U) -> L^2(W)}: top singular value after weight conjugation."""
    win, n = T.window, T.n
    Wh = _mat_sqrt(W.leaves)
    Uih = _mat_isqrt(U.leaves)
    T4 = T.matrix.reshape(win.leafcount, n, win.leafcount, n)
    A = np.einsum("iab,ibjc,jcd->iajd", Wh, T4, Uih)
    A = A.reshape(T.size, T.size)
    return float(np.linalg.svd(A, compute_uv=False)[0])


def _lp_ratio(Tm, F, WP, UP, p, leaf_volume, n):
    """L^p(W)/L^p(U) Rayleigh ratios for columns F (N, m)."""
    G = Tm @ F
    num = _lp_mass(G, WP, p, leaf_volume, n)
    den = _lp_mass(F, UP, p, leaf_volume, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(den > 0, (num / den) ** (1.0 / p), 0.0)
    return r


def _lp_mass(F, P, p, leaf_volume, n):
    X = F.reshape(-1, n, F.shape[1])
    Y = np.einsum("lab,lbm->lam", P, X)
    mags = np.sqrt(np.sum(np.abs(Y) ** 2, axis=1))
    return leaf_volume * np.sum(mags**p, axis=0)


def lp_opnorm_estimate(T, W, U, p, budget=60, rng=None):
    """(lower bound, None) for ||T||_{L^p(U) -> L^p(W)}.

    Lower bound from indicator test functions chi_J e_i and their
    U^{+-1/p}-twisted variants over every window cube, refined by gradient
    ascent on log ||T f||_{L^p(W)} - log ||f||_{L^p(U)}.  No finite certified
    upper bound exists for p != 2, so none is reported.
    """
    win, n = T.window, T.n
    WP = W.power(1.0 / p).leaves
    UP = U.power(1.0 / p).leaves
    UM = U.power(-1.0 / p).leaves
    lv = win.leaf_volume
    Tm = T.matrix

    cols = []
    eye = np.eye(n)
    for j in range(win.depth + 1):
        idx = win.block_leaf_index(j)
        for k in range(win.cubes_at(j)):
            chi = np.zeros((win.leafcount, 1))
            chi[idx[k]] = 1.0
            for i in range(n):
                plain = chi * eye[i]
                cols.append(plain.reshape(-1))
                cols.append(
                    np.einsum("lab,lb->la", UM, plain).reshape(-1)
                )
                cols.append(
                    np.einsum("lab,lb->la", UP, plain).reshape(-1)
                )
        if win.cubes_at(j) * n * 3 > 6000:
            break
    F = np.stack(cols, axis=1).astype(complex)
    ratios = _lp_ratio(Tm, F, WP, UP, p, lv, n)
    best = float(np.max(ratios))
    f = F[:, int(np.argmax(ratios))].copy()

    if rng is None:
        rng = np.random.default_rng(7)
    f = f + 1e-3 * rng.standard_normal(f.shape)
    ThW = None
    for _ in range(budget):
        num_vec = (Tm @ f).reshape(-1, n)
        den_vec = f.reshape(-1, n)
        gw = np.einsum("lab,lb->la", WP, num_vec)
        gu = np.einsum("lab,lb->la", UP, den_vec)
        nw = np.sqrt(np.sum(np.abs(gw) ** 2, axis=1))
        nu = np.sqrt(np.sum(np.abs(gu) ** 2, axis=1))
        num = lv * np.sum(nw**p)
        den = lv * np.sum(nu**p)
        if den <= 0 or num <= 0:
            break
        # gradient of log num - log den (Wirtinger); clamp the p < 2
        # singularity at vanishing pointwise mass
        wn = (np.maximum(nw, 1e-150) ** (p - 2.0))[:, None]
        wu = (np.maximum(nu, 1e-150) ** (p - 2.0))[:, None]
        gn = np.einsum("lba,lb->la", np.conj(WP), wn * gw).reshape(-1)
        gn = np.conj(Tm.T) @ gn
        gd = np.einsum("lba,lb->la", np.conj(UP), wu * gu).reshape(-1)
        grad = gn / num - gd / den
        step = 0.25 * np.linalg.norm(f) / max(np.linalg.norm(grad), 1e-30)
        f2 = f + step * grad
        r2 = _lp_ratio(Tm, f2[:, None], WP, UP, p, lv, n)[0]
        r1 = (num / den) ** (1.0 / p)
        if r2 > r1:
            f = f2
        else:
            f = f + 0.25 * step * grad
        best = max(best, float(max(r1, r2)))
    return best, None


def haar_multiplier_norm_relation(A, W, U, p):
    """Compare sup_I ||V_I(W) A_I^eps V_I(U)^{-1}|| with the T_A operator norm.

    At p = 2 the operator norm is exact (dense SVD); otherwise only the
    lower bound is reported and ``exact`` is False.
    """
    win = A.window
    tw = W.reducing_table(p)
    tu = U.reducing_table(p)
    sup = 0.0
    for j in range(win.depth):
        M = np.einsum("kab,ksbc,kcd->ksad", tw.mats[j], A.coefs[j], tu.inv(j))
        if M.size:
            sup = max(sup, float(np.max(np.linalg.svd(M, compute_uv=False)[..., 0])))
    T = materialize({"kind": "haar_multiplier", "A": A}, win, U.n)
    if abs(p - 2.0) < 1e-12:
        norm = weighted_opnorm_p2(T, W, U)
        exact = True
    else:
        norm, _ = lp_opnorm_estimate(T, W, U, p)
        exact = False
    ratio = norm / sup if sup > 0 else (0.0 if norm == 0 else np.inf)
    return {
        "sup_criterion": sup,
        "operator_norm": norm,
        "exact": exact,
        "ratio": ratio,
    }


def dump_operator(T, path):
    """Binary dense dump: one JSON header line + little-endian complex payload."""
    import json

    header = {
        "magic": "matweight-operator",
        "size": T.size,
        "n": T.n,
        "provenance": T.provenance,
        "d": T.window.d,
        "depth": T.window.depth,
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        fh.write(np.ascontiguousarray(T.matrix, dtype="<c16").tobytes())
