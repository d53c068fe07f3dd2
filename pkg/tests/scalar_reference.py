"""Independent scalar (n = 1, d = 1) brute-force reference implementations.

Deliberately written with explicit cube loops and none of the package's
level-batched machinery; these are the oracles the vectorized code is
checked against.  A weight is a plain 1-d numpy array of leaf values on
[0, 1); cube (j, k) covers leaves [k * 2^{L-j}, (k+1) * 2^{L-j}).
"""

import numpy as np


def cubes(depth, include_leaves=False):
    top = depth + 1 if include_leaves else depth
    return [(j, k) for j in range(top) for k in range(2**j)]


def leaf_slice(j, k, depth):
    w = 2 ** (depth - j)
    return slice(k * w, (k + 1) * w)


def mean(values, j, k, depth):
    return float(np.mean(values[leaf_slice(j, k, depth)]))


def vol(j):
    return 2.0**-j


def haar_coef(values, j, k, depth):
    """<f, h_I> for the cancellative 1-d Haar function on cube (j, k)."""
    w = 2 ** (depth - j)
    left = values[k * w : k * w + w // 2]
    right = values[k * w + w // 2 : (k + 1) * w]
    return float(np.sqrt(vol(j)) / 2.0 * (np.mean(left) - np.mean(right)))


def descendants(j, k, depth):
    out = []
    for jj in range(j, depth):
        lo = k * 2 ** (jj - j)
        for kk in range(lo, lo + 2 ** (jj - j)):
            out.append((jj, kk))
    return out


def ap(w, p, depth):
    """Classical scalar A_p over all window cubes (leaves included)."""
    pp = p / (p - 1.0)
    best = 0.0
    for j, k in cubes(depth, include_leaves=True):
        m1 = mean(w, j, k, depth)
        m2 = mean(w ** (1.0 - pp), j, k, depth)
        best = max(best, m1 * m2 ** (p - 1.0))
    return best


def reducing(w, p, j, k, depth):
    """Scalar V_I(w, p) = (m_I w)^{1/p}, exact for every p."""
    return mean(w, j, k, depth) ** (1.0 / p)


def dual_reducing(w, p, j, k, depth):
    pp = p / (p - 1.0)
    return mean(w ** (1.0 - pp), j, k, depth) ** (1.0 / pp)


def carleson(a, w, u, p, depth):
    """sup_K (1/|K|) sum_{I in K} a_I^2 V_I(w)^2 V_K(u)^{-2}."""
    best = 0.0
    for jK, kK in cubes(depth):
        vu = reducing(u, p, jK, kK, depth)
        total = 0.0
        for j, k in descendants(jK, kK, depth):
            total += a[(j, k)] ** 2 * reducing(w, p, j, k, depth) ** 2 / vu**2
        best = max(best, total / vol(jK))
    return best


def condition_b(a, w, u, p, depth):
    best = 0.0
    for jJ, kJ in cubes(depth):
        total = 0.0
        for j, k in descendants(jJ, kJ, depth):
            r = reducing(w, p, j, k, depth) / reducing(u, p, j, k, depth)
            total += a[(j, k)] ** 2 * r**2
        best = max(best, total / vol(jJ))
    return best


def hlw(b, w, u, depth):
    """sup_J sum b_I^2 (m_I u^{-1})^2 m_I w / (|J| m_J u^{-1})."""
    best = 0.0
    for jJ, kJ in cubes(depth):
        total = 0.0
        for j, k in descendants(jJ, kJ, depth):
            bi = haar_coef(b, j, k, depth)
            total += bi**2 * mean(1.0 / u, j, k, depth) ** 2 * mean(w, j, k, depth)
        best = max(best, total / (vol(jJ) * mean(1.0 / u, jJ, kJ, depth)))
    return best


def bmo_original(b, w, u, p, eps, depth):
    best = 0.0
    for j, k in cubes(depth):
        sl = leaf_slice(j, k, depth)
        aw = np.mean(w[sl] ** (1.0 / p))
        au = np.mean(u[sl] ** (1.0 / p))
        bj = np.mean(b[sl])
        best = max(best, float(np.mean((aw * np.abs(b[sl] - bj) / au) ** (1.0 + eps))))
    return best


def bloom_bprime(b, w, u, p, depth):
    best = 0.0
    for j, k in cubes(depth):
        sl = leaf_slice(j, k, depth)
        bj = np.mean(b[sl])
        vu = reducing(u, p, j, k, depth)
        best = max(
            best, float(np.mean((w[sl] ** (1.0 / p) * np.abs(b[sl] - bj) / vu) ** p))
        )
    return best


def bloom_cprime(b, w, u, p, depth):
    pp = p / (p - 1.0)
    best = 0.0
    for j, k in cubes(depth):
        sl = leaf_slice(j, k, depth)
        bj = np.mean(b[sl])
        vw = dual_reducing(w, p, j, k, depth)
        best = max(
            best,
            float(np.mean((u[sl] ** (-1.0 / p) * np.abs(b[sl] - bj) / vw) ** pp)),
        )
    return best


def fkp(w, depth):
    best = 0.0
    for jJ, kJ in cubes(depth):
        total = 0.0
        for j, k in descendants(jJ, kJ, depth):
            total += haar_coef(w, j, k, depth) ** 2 / mean(w, j, k, depth) ** 2
        best = max(best, total / vol(jJ))
    return best


def buckley(w, depth):
    best = 0.0
    for jJ, kJ in cubes(depth):
        total = 0.0
        for j, k in descendants(jJ, kJ, depth):
            total += haar_coef(w, j, k, depth) ** 2 / mean(w, j, k, depth)
        best = max(best, total / (vol(jJ) * mean(w, jJ, kJ, depth)))
    return best


def isral_summation(w, depth):
    best = 0.0
    for jJ, kJ in cubes(depth):
        total = 0.0
        for j, k in descendants(jJ, kJ, depth):
            mi = mean(1.0 / w, j, k, depth)
            total += haar_coef(w, j, k, depth) ** 2 * mi**3
        best = max(best, total / (vol(jJ) * mean(1.0 / w, jJ, kJ, depth)))
    return best


def h1_norm(phi, w, u, depth):
    """||S_{w^{-1}} M_u phi||_{L^1} via plain per-point sums."""
    L = 2**depth
    s2 = np.zeros(L)
    for j, k in cubes(depth):
        c = haar_coef(phi, j, k, depth) * np.sqrt(mean(u, j, k, depth))
        sl = leaf_slice(j, k, depth)
        s2[sl] += c**2 / (w[sl] * vol(j))
    return float(np.sum(np.sqrt(s2)) / L)


def square_function(f, depth):
    L = 2**depth
    s2 = np.zeros(L)
    for j, k in cubes(depth):
        s2[leaf_slice(j, k, depth)] += haar_coef(f, j, k, depth) ** 2 / vol(j)
    return np.sqrt(s2)


def triebel(f, w, p, depth):
    L = 2**depth
    g = np.zeros(L)
    for j, k in cubes(depth):
        c = haar_coef(f, j, k, depth) * reducing(w, p, j, k, depth)
        g[leaf_slice(j, k, depth)] += c**2 / vol(j)
    return float(np.sum(g ** (p / 2.0)) / L)


def haar_fn(j, k, depth):
    """Leaf values of the cancellative Haar function on cube (j, k)."""
    L = 2**depth
    h = np.zeros(L)
    w = 2 ** (depth - j)
    h[k * w : k * w + w // 2] = vol(j) ** -0.5
    h[k * w + w // 2 : (k + 1) * w] = -(vol(j) ** -0.5)
    return h


def conjugated_paraproduct_matrix(a, w, u, p, depth):
    """Dense matrix of f -> sum V_I(w) a_I m_I(u^{-1/p} f) h_I, by columns."""
    L = 2**depth
    M = np.zeros((L, L))
    for col in range(L):
        f = np.zeros(L)
        f[col] = 1.0
        g = u ** (-1.0 / p) * f
        out = np.zeros(L)
        for j, k in cubes(depth):
            out += (
                reducing(w, p, j, k, depth)
                * a[(j, k)]
                * mean(g, j, k, depth)
                * haar_fn(j, k, depth)
            )
        M[:, col] = out
    return M


def l2_opnorm(M, depth):
    """Operator norm on L^2([0,1)) of a leaf-basis matrix (uniform mass)."""
    return float(np.linalg.svd(M, compute_uv=False)[0])


def jn_left(b, w, eps, depth):
    best = 0.0
    for j, k in cubes(depth):
        sl = leaf_slice(j, k, depth)
        mw = np.mean(w[sl])
        bj = np.mean(b[sl])
        best = max(best, float(np.mean((np.abs(b[sl] - bj) / mw) ** (1 + eps))))
    return best


def jn_right(b, w, depth):
    best = 0.0
    for j, k in cubes(depth):
        sl = leaf_slice(j, k, depth)
        mw = np.mean(w[sl])
        bj = np.mean(b[sl])
        best = max(
            best, float(np.mean((np.abs(b[sl] - bj) / np.sqrt(w[sl] * mw)) ** 2))
        )
    return best


def vector_jn(f, w, p, depth):
    best = 0.0
    for j, k in cubes(depth):
        sl = leaf_slice(j, k, depth)
        fj = np.mean(f[sl])
        vw = reducing(w, p, j, k, depth)
        best = max(
            best, float(np.mean((w[sl] ** (1.0 / p) * np.abs(f[sl] - fj) / vw) ** p))
        )
    return best
