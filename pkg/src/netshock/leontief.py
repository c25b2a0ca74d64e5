"""Input-output matrices and the revenue fixed point.

The economy's revenue identity is

    r = (1 - alpha) * Omega @ r + xi

where Omega holds input cost shares (row = supplier, column = buyer, columns
of buyers with in-network inputs sum to one), alpha is the labor share, and
xi is outside demand (final consumers plus firms outside the observed
network).  `backout_demand` evaluates xi = [I - (1-alpha) Omega] r exactly;
`solve_revenue` inverts the system by Neumann iteration, which contracts
geometrically because the iteration matrix (1-alpha) Omega has column sums
at most (1-alpha) < 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ._util import write_csv
from .config import EconomyConfig
from .errors import ConvergenceError, GraphError

_COLSUM_SLACK = 1e-9


@dataclass(frozen=True)
class IOMatrix:
    """Sparse share matrix over a fixed firm universe.

    Invariants: shares are non-negative, the diagonal is zero, and every
    column sum is either 0 (buyer without in-network inputs) or in (0, 1].
    """

    firms: tuple[str, ...]
    matrix: sp.csr_matrix
    year: int | None = None

    @property
    def n(self) -> int:
        return len(self.firms)

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=0)).ravel()

    def index_of(self) -> dict[str, int]:
        return {f: i for i, f in enumerate(self.firms)}

    def to_csv(self, path: str | Path) -> None:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        write_csv(
            path,
            ["row_firm", "col_firm", "omega"],
            (
                (self.firms[coo.row[k]], self.firms[coo.col[k]], float(coo.data[k]))
                for k in order
            ),
        )

    @classmethod
    def from_csv(cls, path: str | Path, firms: tuple[str, ...], year: int | None = None) -> "IOMatrix":
        from ._util import read_csv_rows

        index = {f: i for i, f in enumerate(firms)}
        rows, cols, data = [], [], []
        for lineno, rec in read_csv_rows(path, ["row_firm", "col_firm", "omega"]):
            try:
                rows.append(index[rec["row_firm"]])
                cols.append(index[rec["col_firm"]])
            except KeyError as exc:
                raise GraphError(f"{path} line {lineno}: firm {exc} not in universe") from None
            data.append(float(rec["omega"]))
        mat = sp.csr_matrix((data, (rows, cols)), shape=(len(firms), len(firms)))
        return cls(firms=firms, matrix=mat, year=year)


@dataclass(frozen=True)
class RevenueVector:
    firms: tuple[str, ...]
    values: np.ndarray
    year: int | None = None
    iterations: int | None = None

    def as_mapping(self) -> dict[str, float]:
        return dict(zip(self.firms, self.values.tolist()))

    def to_csv(self, path: str | Path) -> None:
        write_csv(path, ["firm_id", "value"], zip(self.firms, self.values.tolist()))


@dataclass(frozen=True)
class DemandVector:
    firms: tuple[str, ...]
    values: np.ndarray
    year: int | None = None
    negative_count: int = 0
    negative_mass: float = 0.0

    def as_mapping(self) -> dict[str, float]:
        return dict(zip(self.firms, self.values.tolist()))

    def to_csv(self, path: str | Path) -> None:
        write_csv(path, ["firm_id", "value"], zip(self.firms, self.values.tolist()))


def read_vector_csv(path: str | Path) -> dict[str, float]:
    from ._util import read_csv_rows

    return {row["firm_id"]: float(row["value"]) for _, row in read_csv_rows(path, ["firm_id", "value"])}


def build_io_matrix(
    flows: list[tuple[str, str, float]],
    firms: tuple[str, ...],
    year: int | None = None,
) -> IOMatrix:
    """Column-normalize directed flows into input shares.

    share(i -> j) = weight(i -> j) / total inbound weight of j.  Self-flows
    are dropped; flows touching firms outside the universe are treated as
    outside-network demand and ignored here.
    """
    index = {f: i for i, f in enumerate(firms)}
    n = len(firms)
    rows, cols, data = [], [], []
    for i, j, w in flows:
        if i == j or w <= 0:
            continue
        ri, rj = index.get(i), index.get(j)
        if ri is None or rj is None:
            continue
        rows.append(ri)
        cols.append(rj)
        data.append(float(w))
    mat = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    mat.sum_duplicates()
    colsum = np.asarray(mat.sum(axis=0)).ravel()
    scale = np.divide(1.0, colsum, out=np.zeros_like(colsum), where=colsum > 0)
    mat = mat @ sp.diags(scale)
    return IOMatrix(firms=firms, matrix=mat.tocsr(), year=year)


def truncate_network(
    io: IOMatrix, conflict_firms: set[str] | frozenset[str], renormalize: bool = False
) -> IOMatrix:
    """Zero all rows and columns of the conflict firms.

    By default surviving columns are NOT renormalized: the destroyed inputs
    are missing, not re-sourced.  `renormalize=True` rescales surviving
    columns back to unit sums for sensitivity work.
    """
    unknown = set(conflict_firms) - set(io.firms)
    if unknown:
        raise GraphError(f"conflict firms not in universe: {sorted(unknown)[:10]}")
    keep = np.array([f not in conflict_firms for f in io.firms], dtype=np.float64)
    diag = sp.diags(keep)
    mat = (diag @ io.matrix @ diag).tocsr()
    if renormalize:
        colsum = np.asarray(mat.sum(axis=0)).ravel()
        scale = np.divide(1.0, colsum, out=np.zeros_like(colsum), where=colsum > 0)
        mat = (mat @ sp.diags(scale)).tocsr()
    mat.eliminate_zeros()
    return IOMatrix(firms=io.firms, matrix=mat, year=io.year)


def backout_demand(io: IOMatrix, revenues: RevenueVector, config: EconomyConfig) -> DemandVector:
    """Outside demand implied by observed revenues: xi = r - (1-alpha) Omega r.

    Negative entries are retained so that solving the system with this xi
    reproduces r exactly; their count and total mass are reported as a
    diagnostic.
    """
    if revenues.firms != io.firms:
        raise ValueError(
            f"dimension mismatch: io has {io.n} firms, revenues {len(revenues.firms)}"
            " (or differing universes)"
        )
    r = np.asarray(revenues.values, dtype=np.float64)
    xi = r - (1.0 - config.alpha) * io.matrix.dot(r)
    neg = xi < 0
    return DemandVector(
        firms=io.firms,
        values=xi,
        year=revenues.year,
        negative_count=int(neg.sum()),
        negative_mass=float(xi[neg].sum()),
    )


def solve_revenue(
    io: IOMatrix,
    demand: DemandVector,
    config: EconomyConfig,
    step_norms: list | None = None,
) -> RevenueVector:
    """Solve [I - (1-alpha) Omega] r = xi by Neumann iteration.

    Iterates r <- (1-alpha) Omega r + xi from r = xi, stopping when the
    max-norm step falls below tol * max(1, |r|_inf).  Convergence is
    guaranteed when column sums of Omega are at most 1; exhausting the
    iteration budget therefore points at a violated precondition and raises
    with spectral diagnostics.  Pass a list as `step_norms` to record the
    l1 norm of each update (successive norms contract by at least 1-alpha).
    """
    if demand.firms != io.firms:
        raise ValueError("dimension mismatch between io matrix and demand vector")
    xi = np.asarray(demand.values, dtype=np.float64)
    m = (1.0 - config.alpha)
    mat = io.matrix
    r = xi.copy()
    for it in range(1, config.max_iter + 1):
        r_next = m * mat.dot(r) + xi
        diff = r_next - r
        step = float(np.max(np.abs(diff))) if len(r) else 0.0
        if step_norms is not None:
            step_norms.append(float(np.abs(diff).sum()))
        r = r_next
        if step <= config.tol * max(1.0, float(np.max(np.abs(r))) if len(r) else 0.0):
            return RevenueVector(firms=io.firms, values=r, year=demand.year, iterations=it)
    colmax = float(io.column_sums().max()) if io.n else 0.0
    # crude spectral radius estimate for the diagnostic
    v = np.ones(io.n) / max(io.n, 1)
    rho = 0.0
    for _ in range(50):
        w = mat.dot(v)
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            break
        rho = nw / float(np.linalg.norm(v))
        v = w / nw
    raise ConvergenceError(
        f"revenue solve did not converge in {config.max_iter} iterations",
        diagnostics={
            "iterations": config.max_iter,
            "max_column_sum": colmax,
            "spectral_radius_estimate": rho * m,
            "contraction_bound": m * min(colmax, 1.0),
        },
    )


def solve_revenue_direct(io: IOMatrix, demand: DemandVector, config: EconomyConfig) -> RevenueVector:
    """Direct sparse factorization cross-check; guarded to n <= 2000."""
    if io.n > 2000:
        raise ValueError(f"direct solve limited to n <= 2000, got {io.n}")
    if demand.firms != io.firms:
        raise ValueError("dimension mismatch between io matrix and demand vector")
    system = sp.identity(io.n, format="csc") - (1.0 - config.alpha) * io.matrix.tocsc()
    r = sp.linalg.spsolve(system, np.asarray(demand.values, dtype=np.float64))
    return RevenueVector(firms=io.firms, values=np.atleast_1d(r), year=demand.year)


def validate_io_matrix(io: IOMatrix) -> None:
    """Check the share-matrix invariants; raises GraphError on violation."""
    if io.matrix.nnz and io.matrix.data.min() < 0:
        raise GraphError("negative share in io matrix")
    if io.matrix.diagonal().any():
        raise GraphError("nonzero diagonal in io matrix")
    colsum = io.column_sums()
    if colsum.size and colsum.max() > 1.0 + _COLSUM_SLACK:
        raise GraphError(f"column sum exceeds 1: {colsum.max()}")
