#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Grid, fields and the discrete operators of the mild-solution framework.

Scalar fields live at cell centres and are stored row-major (index
``j * nx + i``). Vector fields are face staggered: the x-component slot
``(j, i)`` holds the value on the face between cells ``i`` and ``i + 1``,
the y-component slot ``(j, i)`` the one between rows ``j`` and ``j + 1``.
The last slot of every row (column) is the wall face. It holds the wall
normal flux and is shared by both walls of that row, so a uniform vector
field has zero divergence. Gradients always have zero wall slots
(no-flux), and so do the outputs of the Leray projection.

With these conventions the discrete operators satisfy exactly

* ``divergence(gradient(f)) == neumann_laplacian(grid) @ f``
* ``<gradient(f), w> == -<f, divergence(w)>`` for ``w`` with zero wall slots
* ``sum(divergence(w)) == 0`` for every ``w``.

Basic usage example:

.. code-block:: python

    >>> grid = build_grid(1.0, 1.0, 32, 32)
    >>> spec = neumann_spectrum(neumann_laplacian(grid), kmax=64)
    >>> spec.gap  # ~ pi ** 2
"""

# Stdlib:
import logging
import math

from dataclasses import dataclass

# External:
import numpy as np
import scipy.linalg
import scipy.sparse as sp

from scipy.fft import dctn, idctn
from scipy.sparse.linalg import eigsh, ArpackError, ArpackNoConvergence

# Internal:
from ksnslab.errors import EigensolverError, InvalidInputError, PoissonError
from ksnslab.util import check_finite, freeze


LOGGER = logging.getLogger(__name__)

ZERO_TOL = 1e-10
DIV_TOL = 1e-10
MIN_CELLS = 4

NEUMANN = "neumann_laplacian"
STOKES = "stokes"

# Up to this many streamfunction unknowns the Stokes pencil is solved densely.
DENSE_STOKES_LIMIT = 2500


########
# GRID #
########

@dataclass(frozen=True)
class Grid(object):
    """Cell-centred discretization of the rectangle [0, lx] x [0, ly]."""
    lx: float
    ly: float
    nx: int
    ny: int

    def __post_init__(self):
        for name in ("lx", "ly"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise InvalidInputError(
                    "Domain side {} must be positive, got {}".format(name, value)
                )

        for name in ("nx", "ny"):
            value = getattr(self, name)
            if int(value) != value or value < MIN_CELLS:
                raise InvalidInputError(
                    "Cell count {} must be an integer >= {}, got {}".format(
                        name, MIN_CELLS, value
                    )
                )

    @property
    def hx(self):
        return self.lx / self.nx

    @property
    def hy(self):
        return self.ly / self.ny

    @property
    def weight(self):
        """Quadrature weight of a single cell"""
        return self.hx * self.hy

    @property
    def area(self):
        return self.lx * self.ly

    @property
    def size(self):
        return self.nx * self.ny

    @property
    def shape(self):
        return (self.ny, self.nx)

    def cell_centers(self):
        """Return (X, Y) arrays of shape (ny, nx) with the cell centres"""
        xs = (np.arange(self.nx) + 0.5) * self.hx
        ys = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(xs, ys)

    def interior_nodes(self):
        """Return (X, Y) arrays of shape (ny - 1, nx - 1) of interior vertices"""
        xs = (np.arange(1, self.nx)) * self.hx
        ys = (np.arange(1, self.ny)) * self.hy
        return np.meshgrid(xs, ys)

    def refined(self, factor):
        """Return the same domain with ``factor`` times more cells per axis"""
        return Grid(self.lx, self.ly, self.nx * int(factor), self.ny * int(factor))


def build_grid(lx, ly, nx, ny):
    """Build a validated grid.

    :param lx: (float) Domain length in x.
    :param ly: (float) Domain length in y.
    :param nx: (int) Cells in x, at least 4.
    :param ny: (int) Cells in y, at least 4.
    :returns Grid: The grid, quadrature weight per cell is hx * hy.
    :raises: InvalidInputError for non-positive sides or too few cells.
    """
    try:
        return Grid(float(lx), float(ly), int(nx), int(ny))
    except (TypeError, OverflowError) as err:
        raise InvalidInputError("Bad grid specification: {}".format(err))


##########
# FIELDS #
##########

def _same_grid(first, second):
    if first.grid != second.grid:
        raise InvalidInputError(
            "Grid mismatch: {} vs {}".format(first.grid, second.grid)
        )


class ScalarField(object):
    """Real values at the cell centres of a grid. Immutable."""
    __slots__ = ["grid", "values"]

    def __init__(self, grid, values):
        values = np.array(values, dtype=float).reshape(-1)
        if values.size != grid.size:
            raise InvalidInputError(
                "Field has {} values, grid has {} cells".format(
                    values.size, grid.size
                )
            )

        check_finite("ScalarField", values)
        self.grid = grid
        self.values = freeze(values)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.size))

    @classmethod
    def constant(cls, grid, value):
        return cls(grid, np.full(grid.size, float(value)))

    @classmethod
    def from_function(cls, grid, func):
        """Sample func(X, Y) at the cell centres"""
        xs, ys = grid.cell_centers()
        return cls(grid, np.broadcast_to(func(xs, ys), grid.shape))

    def array(self):
        """Return the values as a read-only (ny, nx) view"""
        return self.values.reshape(self.grid.shape)

    def mean(self):
        return float(np.mean(self.values))

    def _other(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            return other.values
        return float(other)

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._other(other))

    def __mul__(self, scalar):
        return ScalarField(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def __repr__(self):
        return "ScalarField(nx={}, ny={})".format(self.grid.nx, self.grid.ny)


class VectorField(object):
    """Face-staggered vector field made of two ScalarFields. Immutable."""
    __slots__ = ["grid", "x", "y"]

    def __init__(self, x, y):
        _same_grid(x, y)
        self.grid = x.grid
        self.x = x
        self.y = y

    @classmethod
    def zeros(cls, grid):
        return cls(ScalarField.zeros(grid), ScalarField.zeros(grid))

    @classmethod
    def from_arrays(cls, grid, ax, ay):
        return cls(ScalarField(grid, ax), ScalarField(grid, ay))

    @classmethod
    def from_stacked(cls, grid, stacked):
        stacked = np.asarray(stacked, dtype=float).reshape(2, grid.size)
        return cls.from_arrays(grid, stacked[0], stacked[1])

    def stacked(self):
        """Return x- and y-values concatenated into one flat array"""
        return np.concatenate([self.x.values, self.y.values])

    def arrays(self):
        return self.x.array(), self.y.array()

    def __add__(self, other):
        _same_grid(self, other)
        return VectorField(self.x + other.x, self.y + other.y)

    def __sub__(self, other):
        _same_grid(self, other)
        return VectorField(self.x - other.x, self.y - other.y)

    def __mul__(self, scalar):
        return VectorField(self.x * scalar, self.y * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return VectorField(-self.x, -self.y)

    def __repr__(self):
        return "VectorField(nx={}, ny={})".format(self.grid.nx, self.grid.ny)


def inner(first, second):
    """Quadrature inner product of two scalar or two vector fields"""
    _same_grid(first, second)
    if isinstance(first, VectorField):
        prod = np.dot(first.stacked(), second.stacked())
    else:
        prod = np.dot(first.values, second.values)

    return float(prod) * first.grid.weight


##################################
# STENCILS ON (..., ny, nx) DATA #
##################################

def grad_arrays(f, grid):
    """Face differences of cell data; wall slots are zero"""
    gx = np.zeros_like(f)
    gy = np.zeros_like(f)
    gx[..., :, :-1] = (f[..., :, 1:] - f[..., :, :-1]) / grid.hx
    gy[..., :-1, :] = (f[..., 1:, :] - f[..., :-1, :]) / grid.hy
    return gx, gy


def div_arrays(wx, wy, grid):
    """Cell divergence of face data, closing every row through its wall slot"""
    return (
        (wx - np.roll(wx, 1, axis=-1)) / grid.hx +
        (wy - np.roll(wy, 1, axis=-2)) / grid.hy
    )


def faces_from_cells(a, b):
    """Average cell data a (b) onto x-faces (y-faces); wall slots are zero"""
    ax = np.zeros_like(a)
    by = np.zeros_like(b)
    ax[..., :, :-1] = 0.5 * (a[..., :, 1:] + a[..., :, :-1])
    by[..., :-1, :] = 0.5 * (b[..., 1:, :] + b[..., :-1, :])
    return ax, by


def cells_from_faces(wx, wy):
    """Average face data back onto the cell centres"""
    return (
        0.5 * (wx + np.roll(wx, 1, axis=-1)),
        0.5 * (wy + np.roll(wy, 1, axis=-2)),
    )


def clear_walls(wx, wy):
    """Return copies of face data with zeroed wall slots"""
    wx = np.array(wx, dtype=float)
    wy = np.array(wy, dtype=float)
    wx[..., :, -1] = 0.0
    wy[..., -1, :] = 0.0
    return wx, wy


def _neumann_symbol(grid):
    kx = np.arange(grid.nx)
    ky = np.arange(grid.ny)
    sx = (4.0 / grid.hx ** 2) * np.sin(np.pi * kx / (2.0 * grid.nx)) ** 2
    sy = (4.0 / grid.hy ** 2) * np.sin(np.pi * ky / (2.0 * grid.ny)) ** 2
    return -(sy[:, None] + sx[None, :])


def solve_neumann_poisson(rhs, grid):
    """Solve L psi = rhs with the Neumann Laplacian, mean(psi) = 0.

    The cosine transform diagonalizes L exactly, so this is a direct solve.

    :param rhs: (numpy.ndarray) Data of shape (..., ny, nx) with zero mean.
    :param grid: (Grid) The grid.
    :returns numpy.ndarray: psi, same shape as rhs.
    :raises: PoissonError for non-finite or incompatible right hand sides.
    """
    if not np.all(np.isfinite(rhs)):
        raise PoissonError("Poisson right hand side is not finite")

    hat = dctn(rhs, type=2, norm="ortho", axes=(-2, -1))
    scale = np.max(np.abs(rhs)) * math.sqrt(grid.size) if rhs.size else 0.0
    if np.any(np.abs(hat[..., 0, 0]) > 1e-9 * max(scale, 1e-300)):
        raise PoissonError("Poisson right hand side has non-zero mean")

    symbol = _neumann_symbol(grid)
    symbol[0, 0] = 1.0
    hat = hat / symbol
    hat[..., 0, 0] = 0.0
    return idctn(hat, type=2, norm="ortho", axes=(-2, -1))


def leray_arrays(wx, wy, grid):
    """Leray projection of face data, see leray_project"""
    wx, wy = clear_walls(wx, wy)
    psi = solve_neumann_poisson(div_arrays(wx, wy, grid), grid)
    gx, gy = grad_arrays(psi, grid)
    return wx - gx, wy - gy


#####################
# FIELD OPERATIONS  #
#####################

def gradient(f):
    """Discrete gradient of a scalar field.

    :param f: (ScalarField) The field.
    :returns VectorField: Face differences, zero in the wall slots.
    """
    gx, gy = grad_arrays(f.array(), f.grid)
    return VectorField.from_arrays(f.grid, gx, gy)


def divergence(w):
    """Discrete divergence of a vector field.

    :param w: (VectorField) The field.
    :returns ScalarField: Cell divergence; its values always sum to zero.
    """
    wx, wy = w.arrays()
    return ScalarField(w.grid, div_arrays(wx, wy, w.grid))


def leray_project(w):
    """Project w onto discretely solenoidal fields with zero wall flux.

    Returns ``w - gradient(psi)`` with the wall slots removed, where psi
    solves the Neumann-Poisson problem ``L psi = divergence(w)``. The map
    is an orthogonal projection in the quadrature inner product.

    :param w: (VectorField) Any field.
    :returns VectorField: The solenoidal part of w.
    :raises: PoissonError if the Poisson solve fails.
    """
    wx, wy = w.arrays()
    px, py = leray_arrays(wx, wy, w.grid)
    return VectorField.from_arrays(w.grid, px, py)


def is_solenoidal(w, div_tol=DIV_TOL):
    """Check |divergence| <= div_tol and zero wall slots (relative to max|w|)"""
    wx, wy = w.arrays()
    scale = max(1.0, float(np.max(np.abs(w.stacked()))))
    walls = max(np.max(np.abs(wx[:, -1])), np.max(np.abs(wy[-1, :])))
    div = np.max(np.abs(div_arrays(wx, wy, w.grid)))
    return bool(walls <= div_tol * scale and div <= div_tol * scale)


def advect(u, f):
    """Transport term u . grad f at the cell centres.

    Uses the average of the two adjacent face products per direction so
    that ``flux_divergence(f, u) - advect(u, f) == f * divergence(u)``
    holds exactly for u with zero wall slots.
    """
    _same_grid(u, f)
    gx, gy = grad_arrays(f.array(), f.grid)
    ux, uy = u.arrays()
    cx, cy = cells_from_faces(ux * gx, uy * gy)
    return ScalarField(f.grid, cx + cy)


def flux_divergence(f, w):
    """Divergence of f * w with f averaged onto the faces"""
    _same_grid(f, w)
    fx, fy = faces_from_cells(f.array(), f.array())
    wx, wy = w.arrays()
    return ScalarField(f.grid, div_arrays(fx * wx, fy * wy, f.grid))


def tensor_divergence(wxx, wxy, wyx, wyy, grid):
    """Row-wise divergence of a cell-centred 2x2 tensor, on the faces.

    :returns tuple: (x, y) face arrays with zero wall slots.
    """
    rx = div_arrays(*faces_from_cells(wxx, wxy), grid=grid)
    ry = div_arrays(*faces_from_cells(wyx, wyy), grid=grid)
    return faces_from_cells(rx, ry)


def convect_arrays(ux, uy, grid):
    """div(u (x) u) for face data of shape (..., ny, nx)"""
    cx, cy = cells_from_faces(ux, uy)
    return tensor_divergence(cx * cx, cx * cy, cy * cx, cy * cy, grid)


def convect(u):
    """Convective term div(u (x) u) of the momentum equation"""
    ux, uy = u.arrays()
    cx, cy = convect_arrays(ux, uy, u.grid)
    return VectorField.from_arrays(u.grid, cx, cy)


def vector_gradient(w):
    """Component-wise gradient of a vector field.

    :returns tuple: (gradient of x-component, gradient of y-component)
    """
    return gradient(w.x), gradient(w.y)


def curl(psi, grid):
    """Velocity field of a streamfunction given on the interior vertices.

    :param psi: (numpy.ndarray) Values of shape (ny - 1, nx - 1); the
                streamfunction vanishes on the boundary vertices.
    :param grid: (Grid) The grid.
    :returns VectorField: Discretely solenoidal field with zero wall slots.
    """
    psi = np.asarray(psi, dtype=float).reshape(grid.ny - 1, grid.nx - 1)
    stacked = curl_matrix(grid) @ psi.reshape(-1)
    return VectorField.from_stacked(grid, stacked)


###################
# NEUMANN LAPLACE #
###################

@dataclass(frozen=True, eq=False)
class DiscreteOperator(object):
    """A sparse discrete operator together with what it was built for.

    For the Stokes kind, ``matrix`` is the Dirichlet vector Laplacian on
    stacked face data and ``basis`` maps interior-vertex streamfunctions to
    the discretely solenoidal subspace.
    """
    kind: str
    grid: Grid
    matrix: object
    basis: object = None

    def apply(self, field):
        """Apply the operator: L f for Neumann, A u = -P(lap u) for Stokes"""
        _same_grid(self, field)
        if self.kind == NEUMANN:
            return ScalarField(self.grid, self.matrix @ field.values)

        lap = VectorField.from_stacked(self.grid, self.matrix @ field.stacked())
        return -leray_project(lap)

    def dense_generator(self):
        """Dense generator G with exp(t G) the semigroup of this operator.

        Neumann: the Laplacian itself. Stokes: P lap P with P the orthogonal
        projection onto the solenoidal subspace.
        """
        if self.kind == NEUMANN:
            return self.matrix.toarray()

        basis = self.basis.toarray()
        gram = basis.T @ basis
        proj = basis @ scipy.linalg.solve(gram, basis.T, assume_a="pos")
        return proj @ (self.matrix @ proj)


def _neumann_1d(n, h):
    inv = 1.0 / (h * h)
    main = np.full(n, -2.0 * inv)
    main[0] = main[-1] = -inv
    off = np.full(n - 1, inv)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def neumann_laplacian(grid):
    """Five-point Laplacian with homogeneous Neumann (ghost cell) closure.

    :param grid: (Grid) The grid.
    :returns DiscreteOperator: Symmetric, negative semi-definite, zero row sums.
    """
    lap = (
        sp.kron(sp.identity(grid.ny), _neumann_1d(grid.nx, grid.hx)) +
        sp.kron(_neumann_1d(grid.ny, grid.hy), sp.identity(grid.nx))
    )
    LOGGER.debug("Assembled Neumann Laplacian on %dx%d", grid.nx, grid.ny)
    return DiscreteOperator(NEUMANN, grid, lap.tocsr())


@dataclass(frozen=True, eq=False)
class OperatorSpectrum(object):
    """Smallest eigenpairs of -L (Neumann) or A (Stokes).

    ``eigenvectors`` has one row per mode, orthonormal with respect to the
    quadrature inner product (scalar rows for Neumann, stacked vector rows
    for Stokes).
    """
    kind: str
    grid: Grid
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    gap: float

    @property
    def kmax(self):
        return len(self.eigenvalues)


def _normalize_signs(vectors):
    """Flip every row so that its largest-magnitude entry is positive"""
    idx = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(len(vectors)), idx])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def _eig_1d(n, h):
    """Eigenpairs of the positive 1D Neumann operator -T"""
    neg = -_neumann_1d(n, h)
    try:
        _, vecs = scipy.linalg.eigh_tridiagonal(
            neg.diagonal(), neg.diagonal(1)
        )
    except (np.linalg.LinAlgError, ValueError) as err:
        raise EigensolverError("Tridiagonal eigensolver failed: {}".format(err))

    vecs = vecs * np.where(vecs[0] < 0, -1.0, 1.0)[None, :]
    # Rayleigh quotients keep the kernel eigenvalue at rounding level.
    vals = np.einsum("ij,ij->j", vecs, neg @ vecs)
    return vals, vecs


def neumann_spectrum(op, kmax, zero_tol=ZERO_TOL):
    """The kmax smallest eigenpairs of the discrete Neumann Laplacian.

    The operator is a Kronecker sum, so its eigenpairs are products of the
    1D eigenpairs computed by a tridiagonal eigensolver.

    :param op: (DiscreteOperator) Result of neumann_laplacian.
    :param kmax: (int) Number of modes, 1 <= kmax <= nx * ny.
    :param zero_tol: (float) Eigenvalues below count as zero.
    :returns OperatorSpectrum: With gap = first eigenvalue above zero_tol
        of the whole discrete spectrum, also when kmax keeps only the
        constant mode.
    :raises: EigensolverError on failure, InvalidInputError for bad kmax.
    """
    if op.kind != NEUMANN:
        raise InvalidInputError("Expected a Neumann operator, got " + op.kind)

    grid = op.grid
    if not 1 <= kmax <= grid.size:
        raise InvalidInputError(
            "kmax must lie in [1, {}], got {}".format(grid.size, kmax)
        )

    vals_x, vecs_x = _eig_1d(grid.nx, grid.hx)
    vals_y, vecs_y = _eig_1d(grid.ny, grid.hy)

    sums = (vals_y[:, None] + vals_x[None, :]).ravel()
    ranked = np.argsort(sums, kind="stable")
    positive = np.nonzero(sums[ranked] > zero_tol)[0]
    if len(positive) == 0:
        raise EigensolverError("No eigenvalue above zero_tol")
    gap = float(sums[ranked[positive[0]]])

    order = ranked[:kmax]
    rows, cols = np.divmod(order, grid.nx)

    vectors = vecs_y[:, rows].T[:, :, None] * vecs_x[:, cols].T[:, None, :]
    vectors = vectors.reshape(kmax, grid.size) / math.sqrt(grid.weight)
    eigenvalues = sums[order]

    LOGGER.debug(
        "Neumann spectrum: %d modes, gap %.6g, top %.6g",
        kmax, gap, eigenvalues[-1]
    )
    return OperatorSpectrum(
        kind=NEUMANN,
        grid=grid,
        eigenvalues=freeze(eigenvalues),
        eigenvectors=freeze(_normalize_signs(vectors)),
        gap=gap,
    )


##########
# STOKES #
##########

def _dirichlet_vertex_1d(n, h):
    """Dirichlet second difference for the n - 1 interior faces, padded to n"""
    inv = 1.0 / (h * h)
    inner_op = sp.diags(
        [np.full(n - 2, inv), np.full(n - 1, -2.0 * inv), np.full(n - 2, inv)],
        [-1, 0, 1],
    )
    return sp.block_diag([inner_op, sp.csr_matrix((1, 1))], format="csr")


def _dirichlet_cell_1d(n, h):
    """Dirichlet second difference at cell centres, ghost value -u at walls"""
    inv = 1.0 / (h * h)
    main = np.full(n, -2.0 * inv)
    main[0] = main[-1] = -3.0 * inv
    off = np.full(n - 1, inv)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def _wall_mask(n):
    diag = np.ones(n)
    diag[-1] = 0.0
    return sp.diags(diag)


def curl_matrix(grid):
    """Sparse map from interior-vertex streamfunctions to stacked face data"""
    nx, ny = grid.nx, grid.ny
    nodes = np.arange((nx - 1) * (ny - 1)).reshape(ny - 1, nx - 1)
    rows, cols, vals = [], [], []

    # x-component at face (j, i), i < nx - 1: (psi(i, j) - psi(i, j - 1)) / hy
    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx - 1), indexing="ij")
    slot = (jj * nx + ii).ravel()
    for shift, sign in ((0, 1.0), (-1, -1.0)):
        node_j = (jj + shift).ravel()
        ok = (node_j >= 0) & (node_j <= ny - 2)
        rows.append(slot[ok])
        cols.append(nodes[node_j[ok], ii.ravel()[ok]])
        vals.append(np.full(ok.sum(), sign / grid.hy))

    # y-component at face (j, i), j < ny - 1: -(psi(i, j) - psi(i - 1, j)) / hx
    jj, ii = np.meshgrid(np.arange(ny - 1), np.arange(nx), indexing="ij")
    slot = (grid.size + jj * nx + ii).ravel()
    for shift, sign in ((0, -1.0), (-1, 1.0)):
        node_i = (ii + shift).ravel()
        ok = (node_i >= 0) & (node_i <= nx - 2)
        rows.append(slot[ok])
        cols.append(nodes[jj.ravel()[ok], node_i[ok]])
        vals.append(np.full(ok.sum(), sign / grid.hx))

    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(2 * grid.size, (nx - 1) * (ny - 1)),
    )


def stokes_operator(grid):
    """Discrete Stokes operator A = -P lap_D on the solenoidal subspace.

    lap_D is the component-wise Dirichlet (no-slip) Laplacian acting on the
    face unknowns; wall slots are not unknowns and map to zero.

    :param grid: (Grid) The grid.
    :returns DiscreteOperator: Of kind ``stokes``.
    """
    nx, ny = grid.nx, grid.ny
    lap_x = (
        sp.kron(_dirichlet_cell_1d(ny, grid.hy), _wall_mask(nx)) +
        sp.kron(sp.identity(ny), _dirichlet_vertex_1d(nx, grid.hx))
    )
    lap_y = (
        sp.kron(_dirichlet_vertex_1d(ny, grid.hy), sp.identity(nx)) +
        sp.kron(_wall_mask(ny), _dirichlet_cell_1d(nx, grid.hx))
    )
    lap = sp.block_diag([lap_x, lap_y], format="csr")
    LOGGER.debug("Assembled Stokes operator on %dx%d", nx, ny)
    return DiscreteOperator(STOKES, grid, lap, curl_matrix(grid))


def _stokes_pencil(stiff, mass, kmax):
    size = stiff.shape[0]
    if size <= DENSE_STOKES_LIMIT or kmax >= size - 1:
        return scipy.linalg.eigh(
            stiff.toarray(), mass.toarray(), subset_by_index=[0, kmax - 1]
        )

    vals, vecs = eigsh(stiff.tocsc(), k=kmax, M=mass.tocsc(), sigma=0.0)
    # Rayleigh-Ritz on the returned subspace restores M-orthonormality
    # inside clusters of close eigenvalues.
    red_vals, red_vecs = scipy.linalg.eigh(
        vecs.T @ (stiff @ vecs), vecs.T @ (mass @ vecs)
    )
    return red_vals, vecs @ red_vecs


def stokes_spectrum(op, kmax):
    """The kmax smallest eigenpairs of the discrete Stokes operator.

    Solved as the pencil (C^T (-lap_D) C, C^T C) over streamfunctions C psi.

    :param op: (DiscreteOperator) Result of stokes_operator.
    :param kmax: (int) 1 <= kmax <= (nx - 1) * (ny - 1).
    :returns OperatorSpectrum: Strictly positive eigenvalues, gap = smallest.
    :raises: EigensolverError on failure, InvalidInputError for bad kmax.
    """
    if op.kind != STOKES:
        raise InvalidInputError("Expected a Stokes operator, got " + op.kind)

    grid = op.grid
    basis = op.basis
    dim = basis.shape[1]
    if not 1 <= kmax <= dim:
        raise InvalidInputError(
            "kmax must lie in [1, {}], got {}".format(dim, kmax)
        )

    stiff = (basis.T @ (-op.matrix) @ basis).tocsr()
    mass = (basis.T @ basis).tocsr()
    try:
        vals, vecs = _stokes_pencil(stiff, mass, kmax)
    except (np.linalg.LinAlgError, ValueError,
            ArpackError, ArpackNoConvergence) as err:
        raise EigensolverError("Stokes eigensolver failed: {}".format(err))

    order = np.argsort(vals, kind="stable")
    vals = np.asarray(vals[order], dtype=float)
    fields = (basis @ vecs[:, order]).T
    fields /= np.linalg.norm(fields, axis=1)[:, None]
    fields /= math.sqrt(grid.weight)

    if not np.all(np.isfinite(vals)) or vals[0] <= ZERO_TOL:
        raise EigensolverError(
            "Stokes spectrum is not strictly positive: {}".format(vals[0])
        )

    LOGGER.debug("Stokes spectrum: %d modes, gap %.6g", kmax, vals[0])
    return OperatorSpectrum(
        kind=STOKES,
        grid=grid,
        eigenvalues=freeze(vals),
        eigenvectors=freeze(_normalize_signs(fields)),
        gap=float(vals[0]),
    )
