"""Shifted dyadic grids, cubes, Haar signatures, and finite windows.

Cube geometry is exact: corners are rational (``fractions.Fraction``), so
membership and containment never suffer floating-point drift.  The shifted
grid with index ``t`` in ``[1, 2^d]`` is the family

    D^t = { 2^{-k} ([0,1)^d + m + (-1)^k tau(t)) : k in Z, m in Z^d }

with tau(t) in {0, 1/3}^d.  The bijection reads the binary digits of
``t mod 2^d`` (axis 0 = most significant digit), so ``t = 2^d`` is the
plain dyadic grid.  The alternating sign keeps each family nested under
bisection because 3*tau is integral.

A Window is the computational universe everywhere else: a root cube plus
``depth`` refinement levels.  Leaf cells all share one volume, which makes
every integral in the package an exact finite sum.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
import math

import numpy as np

__all__ = [
    "GridError",
    "WindowError",
    "UniverseError",
    "DyadicGrid",
    "DyadicCube",
    "Signature",
    "Window",
    "children",
    "haar_eval",
    "signature_product",
    "containing_shifted_cube",
    "sign_table",
    "cancellative_signatures",
]

# Coordinates admitted by containing_shifted_cube.
UNIVERSE_BOUND = Fraction(2**24)


class GridError(ValueError):
    pass


class WindowError(ValueError):
    pass


class UniverseError(ValueError):
    pass


@dataclass(frozen=True)
class DyadicGrid:
    """A shifted dyadic grid D^t in dimension d, shift index t in [1, 2^d]."""

    dimension: int
    shift: int

    def __post_init__(self):
        if self.dimension < 1:
            raise GridError(f"dimension must be >= 1, got {self.dimension}")
        if not 1 <= self.shift <= 2**self.dimension:
            raise GridError(
                f"shift index must lie in [1, {2**self.dimension}], got {self.shift}"
            )

    @classmethod
    def standard(cls, dimension):
        """The unshifted grid (shift index 2^d encodes tau = 0)."""
        return cls(dimension, 2**dimension)

    @property
    def shift_numerators(self):
        """Integer vector u with tau = u/3, axis 0 on the most significant bit."""
        d = self.dimension
        c = self.shift % (2**d)
        return tuple((c >> (d - 1 - a)) & 1 for a in range(d))

    def cube(self, level, position):
        return DyadicCube(self, level, tuple(int(m) for m in position))


@dataclass(frozen=True)
class DyadicCube:
    """Cube 2^{-k}([0,1)^d + m + (-1)^k tau) of a shifted grid."""

    grid: DyadicGrid
    level: int
    position: tuple

    def __post_init__(self):
        if len(self.position) != self.grid.dimension:
            raise GridError("position length must match the grid dimension")

    @property
    def side(self):
        k = self.level
        return Fraction(1, 2**k) if k >= 0 else Fraction(2 ** (-k))

    @property
    def volume(self):
        return self.side ** self.grid.dimension

    @property
    def corner(self):
        s = self.side
        sgn = -1 if self.level % 2 else 1
        u = self.grid.shift_numerators
        return tuple(
            (Fraction(m) + Fraction(sgn * ui, 3)) * s
            for m, ui in zip(self.position, u)
        )

    @property
    def address(self):
        coords = ",".join(str(m) for m in self.position)
        return f"{self.grid.shift}/{self.level}/{coords}"

    def child(self, b):
        """Child with offset bits b (int in [0, 2^d), axis 0 = MSB)."""
        d = self.grid.dimension
        sgn = -1 if self.level % 2 else 1
        u = self.grid.shift_numerators
        m = tuple(
            2 * self.position[a] + sgn * u[a] + ((b >> (d - 1 - a)) & 1)
            for a in range(d)
        )
        return DyadicCube(self.grid, self.level + 1, m)

    def parent(self):
        d = self.grid.dimension
        sgn = -1 if (self.level - 1) % 2 else 1
        u = self.grid.shift_numerators
        m = tuple((self.position[a] - sgn * u[a]) // 2 for a in range(d))
        return DyadicCube(self.grid, self.level - 1, m)

    def contains_point(self, x):
        c = self.corner
        s = self.side
        return all(ci <= Fraction(xi) < ci + s for ci, xi in zip(c, x))

    def contains_box(self, corner, side):
        c = self.corner
        s = self.side
        return all(
            ci <= Fraction(qi) and Fraction(qi) + Fraction(side) <= ci + s
            for ci, qi in zip(c, corner)
        )


def children(cube):
    """The 2^d children of a cube, ordered by offset bits (axis 0 = MSB)."""
    return [cube.child(b) for b in range(2**cube.grid.dimension)]


@dataclass(frozen=True)
class Signature:
    """Haar signature epsilon in {0,1}^d; cancellative iff not all ones."""

    bits: tuple

    def __post_init__(self):
        if not self.bits or any(b not in (0, 1) for b in self.bits):
            raise GridError("signature bits must be a nonempty 0/1 tuple")

    @property
    def dimension(self):
        return len(self.bits)

    @property
    def cancellative(self):
        return any(b == 0 for b in self.bits)

    def to_int(self):
        d = len(self.bits)
        return sum(b << (d - 1 - a) for a, b in enumerate(self.bits))

    @classmethod
    def from_int(cls, value, dimension):
        return cls(tuple((value >> (dimension - 1 - a)) & 1 for a in range(dimension)))


def signature_product(eps, eps2):
    """Signature psi with h_I^psi = |I|^{1/2} h_I^eps h_I^{eps'} (componentwise XNOR)."""
    if eps.dimension != eps2.dimension:
        raise GridError("signatures must share a dimension")
    return Signature(tuple(1 if a == b else 0 for a, b in zip(eps.bits, eps2.bits)))


def haar_eval(cube, sig, x):
    """Evaluate the tensor Haar function h_I^eps at a point (zero off I).

    Per axis, epsilon_i = 1 gives the normalized indicator and epsilon_i = 0
    the left-minus-right oscillation.
    """
    if sig.dimension != cube.grid.dimension:
        raise GridError("signature dimension must match the cube")
    if not cube.contains_point(x):
        return 0.0
    c = cube.corner
    s = cube.side
    scale = float(s) ** (-0.5 * cube.grid.dimension)
    val = scale
    for a, (eb, xa) in enumerate(zip(sig.bits, x)):
        if eb == 0 and Fraction(xa) >= c[a] + s / 2:
            val = -val
    return val


def _sig_child_sign(sig_int, child_int, d):
    # product over axes with epsilon bit 0 of (-1)^{child bit}
    mask = (2**d - 1) ^ sig_int
    return -1.0 if bin(mask & child_int).count("1") % 2 else 1.0


@lru_cache(maxsize=None)
def sign_table(d):
    """(2^d - 1, 2^d) array: value sign of h^eps on child b, all cancellative eps."""
    S = 2**d - 1
    tbl = np.empty((S, 2**d))
    for s in range(S):
        for b in range(2**d):
            tbl[s, b] = _sig_child_sign(s, b, d)
    return tbl


def cancellative_signatures(d):
    return [Signature.from_int(s, d) for s in range(2**d - 1)]


class Window:
    """A root cube plus ``depth`` refinement levels; the finite universe.

    Level j (relative, 0..depth) holds 2^{dj} cubes indexed in C order over
    the per-axis positions.  Leaf data lives in arrays of shape
    (leafcount, ...) with the same C-order convention.
    """

    def __init__(self, root, depth):
        if depth < 1:
            raise WindowError("depth must be >= 1")
        self.root = root
        self.depth = depth
        self.grid = root.grid
        self.d = root.grid.dimension
        self.nchild = 2**self.d
        self.nsig = 2**self.d - 1
        self.leafcount = 2 ** (self.d * depth)
        side0 = float(root.side)
        self.volumes = np.array(
            [(side0 * 2.0**-j) ** self.d for j in range(depth + 1)]
        )
        self.leaf_volume = self.volumes[depth]
        self._children_idx = {}
        self._block_leaf_idx = {}

    @classmethod
    def unit(cls, d, depth, shift=None):
        """Window on [0,1)^d; default shift reproduces the standard grid."""
        grid = DyadicGrid(d, shift if shift is not None else 2**d)
        return cls(grid.cube(0, (0,) * d), depth)

    # -- index plumbing -------------------------------------------------

    def cubes_at(self, j):
        return 2 ** (self.d * j)

    def children_index(self, j):
        """(cubes_j, 2^d) indices of children at level j+1."""
        key = j
        if key not in self._children_idx:
            d = self.d
            shape = (2**j,) * d
            coords = np.unravel_index(np.arange(self.cubes_at(j)), shape)
            cols = []
            for b in range(self.nchild):
                bits = [(b >> (d - 1 - a)) & 1 for a in range(d)]
                fine = tuple(2 * coords[a] + bits[a] for a in range(d))
                cols.append(np.ravel_multi_index(fine, (2 ** (j + 1),) * d))
            self._children_idx[key] = np.stack(cols, axis=1)
        return self._children_idx[key]

    def ancestor_index(self, j_fine, j_coarse):
        """Map each level-j_fine cube index to its level-j_coarse ancestor."""
        d = self.d
        coords = np.unravel_index(
            np.arange(self.cubes_at(j_fine)), (2**j_fine,) * d
        )
        shiftn = j_fine - j_coarse
        coarse = tuple(c >> shiftn for c in coords)
        return np.ravel_multi_index(coarse, (2**j_coarse,) * d)

    def block_leaf_index(self, j):
        """(cubes_j, cells) leaf indices grouped per level-j cube."""
        if j not in self._block_leaf_idx:
            arr = np.arange(self.leafcount)
            self._block_leaf_idx[j] = self.block_view(arr, j)
        return self._block_leaf_idx[j]

    def block_view(self, values, j):
        """Reshape leaf-indexed data to (cubes_j, cells_per_cube, ...)."""
        d, L = self.d, self.depth
        trailing = values.shape[1:]
        v = values.reshape((2**j, 2 ** (L - j)) * d + trailing)
        perm = (
            [2 * a for a in range(d)]
            + [2 * a + 1 for a in range(d)]
            + list(range(2 * d, 2 * d + len(trailing)))
        )
        v = np.transpose(v, perm)
        return v.reshape((self.cubes_at(j), 2 ** (d * (L - j))) + trailing)

    def level_averages(self, values):
        """List over levels 0..depth of per-cube means of leaf data."""
        out = [None] * (self.depth + 1)
        out[self.depth] = values
        for j in range(self.depth - 1, -1, -1):
            ch = out[j + 1][self.children_index(j)]
            out[j] = ch.mean(axis=1)
        return out

    # -- cube addressing -------------------------------------------------

    def cube(self, j, index):
        """Absolute cube for relative level j and flat index."""
        if not 0 <= j <= self.depth:
            raise WindowError(f"relative level {j} outside window")
        d = self.d
        coords = np.unravel_index(int(index), (2**j,) * d)
        k0 = self.root.level
        sgn0 = -1 if k0 % 2 else 1
        a_j = sgn0 * ((2**j - (-1) ** j) // 3)
        u = self.grid.shift_numerators
        m = tuple(
            (self.root.position[a] << j) + int(coords[a]) + a_j * u[a]
            for a in range(d)
        )
        return DyadicCube(self.grid, k0 + j, m)

    def rel_index(self, cube):
        """(relative level, flat index) of a cube; WindowError if outside."""
        if cube.grid != self.grid:
            raise WindowError("cube belongs to a different grid")
        j = cube.level - self.root.level
        if not 0 <= j <= self.depth:
            raise WindowError("cube level outside window")
        d = self.d
        k0 = self.root.level
        sgn0 = -1 if k0 % 2 else 1
        a_j = sgn0 * ((2**j - (-1) ** j) // 3)
        u = self.grid.shift_numerators
        coords = []
        for a in range(d):
            x = cube.position[a] - (self.root.position[a] << j) - a_j * u[a]
            if not 0 <= x < 2**j:
                raise WindowError("cube outside window")
            coords.append(x)
        return j, int(np.ravel_multi_index(tuple(coords), (2**j,) * d))

    def leaf_centers(self):
        """(leafcount, d) float centers of leaf cells."""
        d, L = self.d, self.depth
        corner = [float(c) for c in self.root.corner]
        h = float(self.root.side) / 2**L
        axes = [corner[a] + h * (np.arange(2**L) + 0.5) for a in range(d)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1)

    def leaf_corner(self, index):
        """Exact rational corner of a leaf cell."""
        d, L = self.d, self.depth
        coords = np.unravel_index(int(index), (2**L,) * d)
        h = self.root.side / 2**L
        c0 = self.root.corner
        return tuple(c0[a] + h * int(coords[a]) for a in range(d))

    @property
    def leaf_side(self):
        return self.root.side / 2**self.depth

    def __repr__(self):
        return f"Window(root={self.root.address}, depth={self.depth})"


def containing_shifted_cube(corner, side=None):
    """Find (t, Q_t) with Q subset Q_t in D^t and side(Q_t) <= 6 side(Q).

    Accepts a DyadicCube or a (corner tuple, side) pair.  Scans levels from
    fine to coarse so a cube that is already dyadic in some D^t is returned
    as itself.  Raises UniverseError for cubes outside the configured
    universe, GridError if the search fails (it cannot, by the one-third
    shift lemma).
    """
    if isinstance(corner, DyadicCube):
        cube = corner
        corner, side = cube.corner, cube.side
    if side is None:
        raise GridError("side must be given when corner is a tuple")
    corner = tuple(Fraction(c) for c in corner)
    side = Fraction(side)
    d = len(corner)
    if side <= 0:
        raise UniverseError("cube side must be positive")
    if any(abs(c) > UNIVERSE_BOUND for c in corner) or side > UNIVERSE_BOUND:
        raise UniverseError("cube outside configured universe")

    def side_at(k):
        return Fraction(1, 2**k) if k >= 0 else Fraction(2**-k)

    # finest level whose cubes are still at least as large as Q
    k_hi = math.floor(math.log2(1.0 / float(side)) + 1e-9)
    while side_at(k_hi) < side:
        k_hi -= 1
    while side_at(k_hi + 1) >= side:
        k_hi += 1
    for k in range(k_hi, k_hi - 4, -1):
        s = side_at(k)
        if s > 6 * side:
            break
        sgn = -1 if k % 2 else 1
        for t in range(1, 2**d + 1):
            grid = DyadicGrid(d, t)
            u = grid.shift_numerators
            m = tuple(
                (corner[a] / s - Fraction(sgn * u[a], 3)).__floor__()
                for a in range(d)
            )
            cand = DyadicCube(grid, k, m)
            if cand.contains_box(corner, side):
                return t, cand
    raise GridError("no containing shifted cube found within ratio 6")


def enumerate_grid_cubes(window, shift, max_level=None):
    """Cubes of D^shift fully inside the window box, grouped by level.

    Returns a list of (absolute level, list of DyadicCube).  Levels run from
    the window root level down to ``max_level`` (default: leaf level).
    """
    grid = DyadicGrid(window.d, shift)
    u = grid.shift_numerators
    box_corner = window.root.corner
    box_side = window.root.side
    if max_level is None:
        max_level = window.root.level + window.depth
    out = []
    for k in range(window.root.level, max_level + 1):
        s = Fraction(1, 2**k) if k >= 0 else Fraction(2**-k)
        if s > box_side:
            continue
        sgn = -1 if k % 2 else 1
        ranges = []
        for a in range(window.d):
            # cube [m, m+1) * s + tau must satisfy m >= lo and m + 1 <= hi
            lo = box_corner[a] / s - Fraction(sgn * u[a], 3)
            hi = (box_corner[a] + box_side) / s - Fraction(sgn * u[a], 3)
            m_min = math.ceil(lo)
            m_max = math.floor(hi - 1)
            ranges.append(range(m_min, m_max + 1))
        cubes = []
        if all(len(r) > 0 for r in ranges):
            sizes = [len(r) for r in ranges]
            total = int(np.prod(sizes))
            for flat in range(total):
                rem = flat
                m = []
                for a in range(window.d - 1, -1, -1):
                    m.append(ranges[a][rem % sizes[a]])
                    rem //= sizes[a]
                m.reverse()
                cubes.append(DyadicCube(grid, k, tuple(m)))
        out.append((k, cubes))
    return out


def cube_pieces(window, cube):
    """Exact overlap of a (possibly foreign-grid) cube with window leaves.

    Returns (leaf index array, volume array).  Volumes are exact rationals
    converted to float at the end; the cube must lie inside the window box.
    """
    d, L = window.d, window.depth
    corner = cube.corner
    side = cube.side
    h = window.leaf_side
    c0 = window.root.corner
    axis_hits = []
    for a in range(d):
        alpha = corner[a]
        beta = corner[a] + side
        i_lo = math.floor((alpha - c0[a]) / h)
        i_hi = math.ceil((beta - c0[a]) / h) - 1
        hits = []
        for i in range(max(i_lo, 0), min(i_hi, 2**L - 1) + 1):
            lo = c0[a] + h * i
            ov = min(beta, lo + h) - max(alpha, lo)
            if ov > 0:
                hits.append((i, ov))
        axis_hits.append(hits)
    idxs, vols = [], []
    sizes = [len(hh) for hh in axis_hits]
    total = int(np.prod(sizes)) if all(sizes) else 0
    for flat in range(total):
        rem = flat
        coords = []
        vol = Fraction(1)
        for a in range(d - 1, -1, -1):
            i, ov = axis_hits[a][rem % sizes[a]]
            coords.append(i)
            vol *= ov
            rem //= sizes[a]
        coords.reverse()
        idxs.append(int(np.ravel_multi_index(tuple(coords), (2**L,) * d)))
        vols.append(float(vol))
    return np.array(idxs, dtype=int), np.array(vols)
