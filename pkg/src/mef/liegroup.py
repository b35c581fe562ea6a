"""Matrix Lie group machinery: generator bases, wedge/vee, exponentials,
adjoint coordinates, and the tangent action matrices.

A symmetry group is described here by a :class:`GeneratorBasis`, an ordered
set of m x m matrices E_1..E_d spanning the Lie algebra. Coordinate vectors
u in R^d correspond to algebra elements sum_i u_i E_i (the wedge map), and
group elements are built by exponentiating algebra elements or multiplying
existing elements, so membership is maintained structurally.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

__all__ = [
    "GeneratorBasis",
    "GroupElement",
    "NotInAlgebraError",
    "wedge",
    "vee",
    "upsilon",
    "upsilon_bar",
    "exp_group",
    "adjoint_coords",
    "quaternion_basis",
    "quaternion_wedge",
]

# Residual threshold for the least-squares projection used by vee().
VEE_TOLERANCE = 1e-8
# Tolerance for the Lie-subalgebra closure check at basis construction.
CLOSURE_TOLERANCE = 1e-10


class NotInAlgebraError(ValueError):
    """Raised when a matrix does not lie in the span of the generators."""


class GeneratorBasis:
    """Ordered generator set of a matrix Lie algebra.

    Parameters
    ----------
    generators : array_like, shape (d, m, m)
        Basis matrices E_1..E_d. Must be linearly independent (as flattened
        m^2-vectors) and closed under the matrix commutator. A zero-length
        list of generators (d = 0) is accepted and describes the trivial
        algebra of an m x m identity-only group.
    closed_form_exp : callable, optional
        Map from coordinate vectors (d,) to group matrices (m, m). When
        present, :func:`exp_group` uses it instead of the generic series.
    closure_tol : float
        Tolerance for the commutator-closure check.
    """

    def __init__(
        self,
        generators,
        closed_form_exp: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        closure_tol: float = CLOSURE_TOLERANCE,
    ):
        gens = np.asarray(generators, dtype=float)
        if gens.ndim != 3 or gens.shape[1] != gens.shape[2]:
            raise ValueError("generators must have shape (d, m, m)")
        if not np.all(np.isfinite(gens)):
            raise ValueError("generators must be finite")
        self.generators = gens
        self.dim_algebra = int(gens.shape[0])
        self.dim_embedding = int(gens.shape[1])
        self.closed_form_exp = closed_form_exp

        # Flattened generators as columns of an (m^2, d) matrix; vee() is a
        # least-squares projection onto their span.
        self._flat = gens.reshape(self.dim_algebra, self.dim_embedding ** 2).T
        if self.dim_algebra > 0:
            if np.linalg.matrix_rank(self._flat) < self.dim_algebra:
                raise ValueError("generators are linearly dependent")
            self._flat_pinv = np.linalg.pinv(self._flat)
        else:
            self._flat_pinv = np.zeros((0, self.dim_embedding ** 2))
        self._check_closure(closure_tol)

    def _check_closure(self, tol: float) -> None:
        d = self.dim_algebra
        for i in range(d):
            for j in range(i + 1, d):
                Ei, Ej = self.generators[i], self.generators[j]
                comm = Ei @ Ej - Ej @ Ei
                coords, residual = self.project(comm)
                if residual > tol * max(1.0, float(np.linalg.norm(comm))):
                    raise ValueError(
                        "generator span is not closed under the commutator "
                        f"(pair {i},{j}: residual {residual:.3e})"
                    )

    def project(self, A: np.ndarray) -> tuple[np.ndarray, float]:
        """Least-squares coordinates of A in the generator span plus the
        projection residual (Frobenius norm of the unexplained part)."""
        flat = np.asarray(A, dtype=float).reshape(-1)
        coords = self._flat_pinv @ flat
        residual = float(np.linalg.norm(self._flat @ coords - flat))
        return coords, residual


class GroupElement:
    """Group element stored as its m x m matrix, with a cached inverse.

    Elements are created through :meth:`identity`, :func:`exp_group`, or
    products of existing elements; this keeps them inside the group without
    a per-call membership test.
    """

    __slots__ = ("matrix", "_inverse")

    def __init__(self, matrix, max_condition: Optional[float] = None):
        mat = np.asarray(matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("group element matrix must be square")
        if not np.all(np.isfinite(mat)):
            raise ValueError("group element matrix must be finite")
        if max_condition is not None:
            if np.linalg.cond(mat) > max_condition:
                raise ValueError("group element matrix is ill conditioned")
        self.matrix = mat
        self._inverse = None

    @classmethod
    def identity(cls, m: int) -> "GroupElement":
        return cls(np.eye(m))

    @property
    def inverse(self) -> np.ndarray:
        """Matrix inverse, computed once on first use."""
        if self._inverse is None:
            self._inverse = np.linalg.inv(self.matrix)
        return self._inverse

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(self.matrix @ other.matrix)

    def apply(self, xi) -> np.ndarray:
        """Action on an embedding-space vector."""
        return self.matrix @ np.asarray(xi, dtype=float)

    def apply_inverse(self, xi) -> np.ndarray:
        return self.inverse @ np.asarray(xi, dtype=float)

    def __repr__(self) -> str:  # pragma: no cover
        return f"GroupElement({self.matrix!r})"


def _coords(basis: GeneratorBasis, u) -> np.ndarray:
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape[0] != basis.dim_algebra:
        raise ValueError(
            f"coordinate vector has length {u.shape[0]}, "
            f"expected {basis.dim_algebra}"
        )
    return u


def wedge(basis: GeneratorBasis, u) -> np.ndarray:
    """Algebra matrix sum_i u_i E_i of the coordinate vector u."""
    u = _coords(basis, u)
    if basis.dim_algebra == 0:
        return np.zeros((basis.dim_embedding, basis.dim_embedding))
    return np.einsum("i,imn->mn", u, basis.generators)


def vee(basis: GeneratorBasis, A, tol: float = VEE_TOLERANCE) -> np.ndarray:
    """Coordinates of the algebra matrix A in the generator basis.

    The projection is least squares, so vee also accepts matrices that are
    only numerically in the span. Raises :class:`NotInAlgebraError` when the
    projection residual exceeds ``tol`` relative to max(1, ||A||).
    """
    A = np.asarray(A, dtype=float)
    if A.shape != (basis.dim_embedding, basis.dim_embedding):
        raise ValueError("matrix dimension does not match the basis")
    coords, residual = basis.project(A)
    if residual > tol * max(1.0, float(np.linalg.norm(A))):
        raise NotInAlgebraError(
            f"matrix is not in the algebra span (residual {residual:.3e})"
        )
    return coords


def upsilon(basis: GeneratorBasis, xi) -> np.ndarray:
    """m x d matrix with column i = E_i xi.

    Satisfies upsilon(xi) @ u = wedge(u) @ xi for every u, turning algebra
    coordinates into the action of the corresponding algebra element on xi.
    """
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.shape[0] != basis.dim_embedding:
        raise ValueError("point dimension does not match the basis")
    if basis.dim_algebra == 0:
        return np.zeros((basis.dim_embedding, 0))
    return np.einsum("imn,n->mi", basis.generators, xi)


def upsilon_bar(basis: GeneratorBasis, xi) -> np.ndarray:
    """m x d matrix with column i = E_i^T xi (transposed action)."""
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.shape[0] != basis.dim_embedding:
        raise ValueError("point dimension does not match the basis")
    if basis.dim_algebra == 0:
        return np.zeros((basis.dim_embedding, 0))
    return np.einsum("inm,n->mi", basis.generators, xi)


def _exp_series(A: np.ndarray) -> np.ndarray:
    # Scaling and squaring on the truncated Taylor series. After scaling to
    # ||A|| <= 0.5 the 18-term remainder is below 1e-16 relative.
    norm = float(np.linalg.norm(A))
    squarings = 0 if norm <= 0.5 else int(np.ceil(np.log2(norm / 0.5)))
    B = A / (2.0 ** squarings)
    m = A.shape[0]
    result = np.eye(m)
    term = np.eye(m)
    for k in range(1, 18):
        term = term @ B / k
        result = result + term
    for _ in range(squarings):
        result = result @ result
    return result


def exp_group(basis: GeneratorBasis, u) -> GroupElement:
    """Group element exp(wedge(u)).

    Uses the basis closed form when one is registered, otherwise the scaled
    truncated series. Total on finite input.
    """
    u = _coords(basis, u)
    if basis.closed_form_exp is not None:
        return GroupElement(basis.closed_form_exp(u))
    return GroupElement(_exp_series(wedge(basis, u)))


def adjoint_coords(basis: GeneratorBasis, X: GroupElement) -> np.ndarray:
    """d x d matrix of the conjugation map u -> vee(X wedge(u) X^-1).

    Column i is vee(X E_i X^-1). Raises :class:`NotInAlgebraError` when a
    conjugated generator leaves the algebra span, which signals a
    basis/group inconsistency.
    """
    d = basis.dim_algebra
    if d == 0:
        return np.zeros((0, 0))
    Xinv = X.inverse
    cols = [vee(basis, X.matrix @ E @ Xinv) for E in basis.generators]
    return np.column_stack(cols)


# ---------------------------------------------------------------------------
# Unit-quaternion instantiation: S^3 in R^4 acted on by the group generated
# by exponentials of the wedge matrices below. Scalar-first ordering.
# ---------------------------------------------------------------------------


def quaternion_wedge(delta) -> np.ndarray:
    """4x4 algebra matrix [[0, d^T], [-d, skew(d)]] of a 3-vector d."""
    d1, d2, d3 = np.asarray(delta, dtype=float).reshape(3)
    return np.array(
        [
            [0.0, d1, d2, d3],
            [-d1, 0.0, -d3, d2],
            [-d2, d3, 0.0, -d1],
            [-d3, -d2, d1, 0.0],
        ]
    )


def _quaternion_exp(coords: np.ndarray) -> np.ndarray:
    # wedge(delta)^2 = -|delta|^2 I, so the series closes into cosine/sine.
    theta = float(np.linalg.norm(coords))
    # np.sinc(x) = sin(pi x)/(pi x); exact value 1.0 at theta = 0.
    return np.cos(theta) * np.eye(4) + np.sinc(theta / np.pi) * quaternion_wedge(coords)


def quaternion_basis() -> GeneratorBasis:
    """Generator basis E_i = wedge(e_i) for the quaternion group, with the
    exact cosine/sine exponential registered as the closed form."""
    eye3 = np.eye(3)
    gens = np.stack([quaternion_wedge(eye3[i]) for i in range(3)])
    return GeneratorBasis(gens, closed_form_exp=_quaternion_exp)
