"""MatrixMarket coordinate dumps of tableau and admittance matrices."""

from __future__ import annotations

from pathlib import Path

import scipy.io
import scipy.sparse as sp

HEADER = "%%MatrixMarket matrix coordinate complex general"


def write_matrix_market(path, M, comment: str = "") -> Path:
    """Write ``M`` as a complex general coordinate file (never folded to symmetric)."""
    path = Path(path)
    M = sp.coo_matrix(M).astype(complex)
    scipy.io.mmwrite(str(path), M, comment=comment, symmetry="general")
    if path.suffix != ".mtx" and not path.exists():
        # older scipy appends .mtx on its own
        Path(str(path) + ".mtx").rename(path)
    return path


def read_matrix_market(path) -> sp.csr_matrix:
    return sp.csr_matrix(scipy.io.mmread(str(path)))
