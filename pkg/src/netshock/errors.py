"""Exception hierarchy with machine-parseable categories for the CLI."""

from __future__ import annotations


class NetshockError(Exception):
    """Base error; `category` feeds the CLI's single-line error output."""

    category = "internal"


class ConfigError(NetshockError):
    category = "config"


class IngestError(NetshockError):
    """Malformed input file (schema mismatch, bad row in strict mode)."""

    category = "schema"


class ReferentialError(NetshockError):
    """Cross-file identifier that does not resolve (e.g. unknown firm id)."""

    category = "referential"


class GraphError(NetshockError):
    category = "graph"


class ConvergenceError(NetshockError):
    """Iterative procedure exhausted its iteration budget.

    `diagnostics` carries solver state (iterations, last residual, spectral
    estimates) for postmortems.
    """

    category = "convergence"

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SingularModelError(NetshockError):
    """Collinear design after demeaning; names the offending columns."""

    category = "singular"

    def __init__(self, message: str, columns: list[str] | None = None):
        super().__init__(message)
        self.columns = columns or []


class EstimationError(NetshockError):
    category = "estimation"


class ScenarioError(NetshockError):
    category = "scenario"


class DegenerateSampleError(NetshockError):
    """Zero-variance standardization, empty sample, and similar dead ends."""

    category = "degenerate"


class MissingInputError(NetshockError):
    category = "missing-file"
