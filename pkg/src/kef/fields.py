"""Periodic spectral field algebra on the d-dimensional torus.

Everything else in the package is built on the operations here: FFT-based
derivatives, the solenoidal (Leray) projection, 2/3-rule dealiasing, norms,
and a small binary snapshot format.
"""

from __future__ import annotations

import struct

import numpy as np

SNAPSHOT_MAGIC = b"KEF1"


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


class GridMismatchError(ValueError):
    """Raised when fields from different grids are combined."""


class Grid:
    """Uniform periodic grid with precomputed wavenumbers and masks.

    Real-to-complex transforms are used throughout; all array-level helpers
    accept stacked inputs (leading batch axes) and transform the trailing
    spatial axes.
    """

    def __init__(self, d: int, n_per_axis: int, length_per_axis: float = 2.0 * np.pi,
                 dealias_fraction: float = 2.0 / 3.0):
        if d not in (2, 3):
            raise ValueError(f"spatial dimension must be 2 or 3, got {d}")
        if n_per_axis < 8 or not _is_power_of_two(n_per_axis):
            raise ValueError(f"n_per_axis must be a power of two >= 8, got {n_per_axis}")
        if not 0.0 < dealias_fraction <= 1.0:
            raise ValueError(f"dealias_fraction must be in (0, 1], got {dealias_fraction}")
        self.d = d
        self.n = int(n_per_axis)
        self.length = float(length_per_axis)
        self.dealias_fraction = float(dealias_fraction)
        self.shape = (self.n,) * d
        self.dx = self.length / self.n
        self.cell_volume = self.dx ** d
        self._axes = tuple(range(-d, 0))

        x1 = np.arange(self.n) * self.dx
        self.xs = np.meshgrid(*([x1] * d), indexing="ij")

        kfull = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx)
        kr = 2.0 * np.pi * np.fft.rfftfreq(self.n, d=self.dx)
        self.k = []
        for axis in range(d):
            k1 = kr if axis == d - 1 else kfull
            shape = [1] * d
            shape[axis] = k1.size
            self.k.append(k1.reshape(shape))
        self.spectral_shape = (self.n,) * (d - 1) + (self.n // 2 + 1,)
        self.ksq = sum(ki ** 2 for ki in self.k)
        self.ksq = np.broadcast_to(self.ksq, self.spectral_shape).copy()
        self.ksq_safe = self.ksq.copy()
        self.ksq_safe[(0,) * d] = 1.0

        k_nyq = np.pi / self.dx
        cutoff = self.dealias_fraction * k_nyq
        mask = np.ones(self.spectral_shape, dtype=bool)
        for ki in self.k:
            mask &= np.broadcast_to(np.abs(ki) < cutoff, self.spectral_shape)
        self.dealias_mask = mask

        # Nyquist modes have no conjugate partner in the real transform, so a
        # projection there does not survive an ifft/fft roundtrip; drop them.
        below = np.ones(self.spectral_shape, dtype=bool)
        for ki in self.k:
            below &= np.broadcast_to(np.abs(ki) < 0.999 * k_nyq, self.spectral_shape)
        self._no_nyquist = below

        # Parseval weight: rfft stores only half of the last axis, so interior
        # columns count twice.
        w1 = np.full(self.n // 2 + 1, 2.0)
        w1[0] = 1.0
        w1[-1] = 1.0
        shape = [1] * d
        shape[-1] = w1.size
        self._parseval_weight = w1.reshape(shape)

    def compatible(self, other: "Grid") -> bool:
        return (self.d == other.d and self.n == other.n
                and self.length == other.length
                and self.dealias_fraction == other.dealias_fraction)

    def require_same(self, other: "Grid") -> None:
        if self is not other and not self.compatible(other):
            raise GridMismatchError("fields live on different grids")

    # array-level spectral primitives -------------------------------------

    def fft(self, a: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(a, axes=self._axes)

    def ifft(self, ah: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(ah, s=self.shape, axes=self._axes)

    def grad_a(self, a: np.ndarray) -> np.ndarray:
        """Gradient of a scalar array, returned stacked on axis 0."""
        ah = self.fft(a)
        return self.ifft(np.stack([1j * ki * ah for ki in self.k]))

    def grad_hat(self, ah: np.ndarray) -> np.ndarray:
        return self.ifft(np.stack([1j * ki * ah for ki in self.k]))

    def div_a(self, comps: np.ndarray) -> np.ndarray:
        """Divergence of a stacked vector array (axis 0 = component)."""
        ch = self.fft(np.asarray(comps))
        return self.ifft(sum(1j * self.k[i] * ch[i] for i in range(self.d)))

    def laplacian_a(self, a: np.ndarray) -> np.ndarray:
        return self.ifft(-self.ksq * self.fft(a))

    def dealias_a(self, a: np.ndarray) -> np.ndarray:
        return self.ifft(self.dealias_mask * self.fft(a))

    def leray_hat(self, vh: np.ndarray) -> np.ndarray:
        """Project stacked spectral components onto divergence-free fields.

        The k=0 mode is untouched, so component means are preserved.
        """
        kdotv = sum(self.k[i] * vh[i] for i in range(self.d))
        out = np.empty_like(vh)
        for i in range(self.d):
            out[i] = (vh[i] - self.k[i] * kdotv / self.ksq_safe) * self._no_nyquist
        return out

    def leray_a(self, comps: np.ndarray) -> np.ndarray:
        return self.ifft(self.leray_hat(self.fft(np.asarray(comps))))

    def solve_poisson_a(self, rhs: np.ndarray) -> np.ndarray:
        """Mean-zero solution of lap(u) = rhs."""
        rh = self.fft(rhs)
        uh = -rh / self.ksq_safe
        uh[(0,) * self.d] = 0.0
        return self.ifft(uh)

    def gaussian_filter_a(self, a: np.ndarray, width: float) -> np.ndarray:
        if width <= 0.0:
            return a
        return self.ifft(np.exp(-0.5 * (width ** 2) * self.ksq) * self.fft(a))

    # quadrature ----------------------------------------------------------

    def integrate(self, a: np.ndarray) -> float:
        return float(np.sum(a) * self.cell_volume)

    def mean(self, a: np.ndarray) -> float:
        return float(np.mean(a))

    def l2_a(self, a: np.ndarray) -> float:
        return float(np.sqrt(np.sum(np.asarray(a) ** 2) * self.cell_volume))

    def l2_spectral_hat(self, ah: np.ndarray) -> float:
        # Parseval for the unnormalized rfft: int |f|^2 = L^d / N^2d * sum w |fh|^2
        s = np.sum(self._parseval_weight * np.abs(ah) ** 2)
        return float(np.sqrt(s * self.length ** self.d / self.n ** (2 * self.d)))

    def h1_a(self, a: np.ndarray) -> float:
        a = np.asarray(a)
        ah = self.fft(a)
        s = np.sum(self._parseval_weight * (1.0 + self.ksq) * np.abs(ah) ** 2, axis=self._axes)
        total = np.sum(s)
        return float(np.sqrt(total * self.length ** self.d / self.n ** (2 * self.d)))


class ScalarField:
    """A real scalar on the torus, with a lazily cached spectral representation."""

    def __init__(self, grid: Grid, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {grid.shape}")
        self.grid = grid
        self.values = values
        self._hat = None

    @property
    def hat(self) -> np.ndarray:
        if self._hat is None:
            self._hat = self.grid.fft(self.values)
        return self._hat

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ScalarField":
        return cls(grid, fn(*grid.xs))

    def __add__(self, other):
        if isinstance(other, ScalarField):
            self.grid.require_same(other.grid)
            return ScalarField(self.grid, self.values + other.values)
        return ScalarField(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            self.grid.require_same(other.grid)
            return ScalarField(self.grid, self.values - other.values)
        return ScalarField(self.grid, self.values - other)

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            self.grid.require_same(other.grid)
            return ScalarField(self.grid, self.values * other.values)
        return ScalarField(self.grid, self.values * other)

    __rmul__ = __mul__


class VectorField:
    """d scalar components sharing one grid, plus a solenoidal flag."""

    def __init__(self, grid: Grid, components, solenoidal: bool = False):
        comps = np.asarray(components, dtype=float)
        if comps.shape != (grid.d,) + grid.shape:
            raise ValueError(f"component stack shape {comps.shape} invalid for grid")
        self.grid = grid
        self.components = comps
        self.solenoidal = bool(solenoidal)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.components[i]

    def divergence_residual(self) -> float:
        """Spectral divergence magnitude relative to the field's H1 size."""
        div = self.grid.div_a(self.components)
        scale = self.grid.h1_a(self.components)
        if scale == 0.0:
            return self.grid.l2_a(div)
        return self.grid.l2_a(div) / scale


class TensorField:
    """d x d scalar components with a symmetry tag."""

    def __init__(self, grid: Grid, components, symmetry: str = "general"):
        comps = np.asarray(components, dtype=float)
        if comps.shape != (grid.d, grid.d) + grid.shape:
            raise ValueError("tensor component stack has wrong shape")
        if symmetry not in ("general", "symmetric", "antisymmetric"):
            raise ValueError(f"unknown symmetry tag {symmetry!r}")
        self.grid = grid
        self.components = comps
        self.symmetry = symmetry

    def __getitem__(self, ij) -> np.ndarray:
        i, j = ij
        return self.components[i, j]

    def trace(self) -> np.ndarray:
        return sum(self.components[i, i] for i in range(self.grid.d))


# public operations --------------------------------------------------------

def grad(f: ScalarField) -> VectorField:
    """Spectral gradient; exact for band-limited fields."""
    return VectorField(f.grid, f.grid.grad_hat(f.hat))


def div(v: VectorField) -> ScalarField:
    return ScalarField(v.grid, v.grid.div_a(v.components))


def laplacian(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, f.grid.ifft(-f.grid.ksq * f.hat))


def leray_project(v: VectorField) -> VectorField:
    """L2-orthogonal projection onto divergence-free fields; preserves means."""
    return VectorField(v.grid, v.grid.leray_a(v.components), solenoidal=True)


def _grad_tensor(u: VectorField) -> np.ndarray:
    # G[i, j] = d_j u_i
    g = u.grid
    uh = g.fft(u.components)
    rows = [g.ifft(np.stack([1j * g.k[j] * uh[i] for j in range(g.d)])) for i in range(g.d)]
    return np.stack(rows)


def sym_grad(u: VectorField) -> TensorField:
    """D(u) = (grad u + grad^t u) / 2."""
    G = _grad_tensor(u)
    return TensorField(u.grid, 0.5 * (G + G.transpose(1, 0, *range(2, 2 + u.grid.d))),
                       symmetry="symmetric")


def antisym_grad(u: VectorField) -> TensorField:
    """A(u) = (grad u - grad^t u) / 2."""
    G = _grad_tensor(u)
    return TensorField(u.grid, 0.5 * (G - G.transpose(1, 0, *range(2, 2 + u.grid.d))),
                       symmetry="antisymmetric")


def dealias(f):
    """2/3-rule truncation (idempotent)."""
    if isinstance(f, ScalarField):
        return ScalarField(f.grid, f.grid.dealias_a(f.values))
    if isinstance(f, VectorField):
        return VectorField(f.grid, f.grid.dealias_a(f.components), solenoidal=f.solenoidal)
    raise TypeError("dealias expects a ScalarField or VectorField")


def _values(f):
    if isinstance(f, ScalarField):
        return f.grid, f.values
    if isinstance(f, VectorField):
        return f.grid, f.components
    raise TypeError("expected a ScalarField or VectorField")


def l2(f) -> float:
    g, a = _values(f)
    return g.l2_a(a)


def linf(f) -> float:
    _, a = _values(f)
    return float(np.max(np.abs(a)))


def l4(f) -> float:
    g, a = _values(f)
    if isinstance(f, VectorField):
        mag2 = np.sum(a ** 2, axis=0)
        return float(g.integrate(mag2 ** 2) ** 0.25)
    return float(g.integrate(a ** 4) ** 0.25)


def h1(f) -> float:
    g, a = _values(f)
    return g.h1_a(a)


# binary snapshots ----------------------------------------------------------

def write_snapshot(path, grid: Grid, fields: dict, t: float = 0.0) -> None:
    """Write named scalar arrays in the package binary format.

    Header: magic, d, n_per_axis, length_per_axis, t, field count, then the
    names; payload is row-major little-endian float64 per field.
    """
    names = list(fields.keys())
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<IIdd I".replace(" ", ""), grid.d, grid.n, grid.length,
                             float(t), len(names)))
        for name in names:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        for name in names:
            arr = np.ascontiguousarray(np.asarray(fields[name], dtype="<f8"))
            if arr.shape != grid.shape:
                raise ValueError(f"field {name!r} does not match the grid shape")
            fh.write(arr.tobytes())


def read_snapshot(path):
    """Read a snapshot; returns (grid, t, dict of arrays)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"bad snapshot magic {magic!r}")
        d, n, length, t, count = struct.unpack("<IIddI", fh.read(struct.calcsize("<IIddI")))
        names = []
        for _ in range(count):
            (ln,) = struct.unpack("<H", fh.read(2))
            names.append(fh.read(ln).decode("utf-8"))
        grid = Grid(d, n, length)
        fields = {}
        for name in names:
            data = np.frombuffer(fh.read(8 * n ** d), dtype="<f8")
            fields[name] = data.reshape(grid.shape).astype(float)
    return grid, t, fields
