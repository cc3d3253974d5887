"""Matrix Market coordinate files: the only sparse interchange format.

Reading accepts real, integer and pattern fields with general, symmetric or
skew-symmetric storage. Symmetric storage is expanded to full, duplicate
entries are summed, pattern entries get value 1, and explicit zeros are
dropped, so every parse yields a canonical matrix. Indices are 1-based on
disk and 0-based in memory.
"""

from __future__ import annotations

import numpy as np

from .core import CsrMatrix, Precision

__all__ = ["MatrixMarketError", "parse_matrix_market", "write_matrix_market"]

_FIELDS = ("real", "integer", "pattern")
_SYMMETRIES = ("general", "symmetric", "skew-symmetric")


class MatrixMarketError(ValueError):
    """Malformed Matrix Market input; carries the offending line number."""

    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


def parse_matrix_market(source, precision: Precision = Precision.FP64) -> CsrMatrix:
    """Parse a coordinate-format Matrix Market stream into a canonical matrix.

    `source` may be text, bytes, or a file-like object. Values are read in
    FP64 and cast to `precision` after duplicate summation.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("ascii", errors="replace")
    lines = source.splitlines()
    if not lines:
        raise MatrixMarketError(1, "empty input")

    header = lines[0].split()
    if len(header) != 5 or header[0] != "%%MatrixMarket":
        raise MatrixMarketError(1, "expected header '%%MatrixMarket matrix coordinate <field> <symmetry>'")
    _, obj, fmt, field, symmetry = (tok.lower() for tok in header)
    if obj != "matrix" or fmt != "coordinate":
        raise MatrixMarketError(1, f"unsupported object/format '{obj} {fmt}'; only 'matrix coordinate'")
    if field not in _FIELDS:
        raise MatrixMarketError(1, f"unsupported field {field!r}; expected one of {_FIELDS}")
    if symmetry not in _SYMMETRIES:
        raise MatrixMarketError(1, f"unsupported symmetry {symmetry!r}; expected one of {_SYMMETRIES}")
    pattern = field == "pattern"

    lineno = 1
    size_line = None
    for lineno, line in enumerate(lines[1:], start=2):
        stripped = line.strip()
        if stripped and not stripped.startswith("%"):
            size_line = stripped
            break
    if size_line is None:
        raise MatrixMarketError(lineno, "missing size line")
    parts = size_line.split()
    if len(parts) != 3:
        raise MatrixMarketError(lineno, f"size line must be 'nrows ncols nnz', got {size_line!r}")
    try:
        nrows, ncols, declared_nnz = (int(p) for p in parts)
    except ValueError:
        raise MatrixMarketError(lineno, f"non-integer size line {size_line!r}") from None
    if nrows < 0 or ncols < 0 or declared_nnz < 0:
        raise MatrixMarketError(lineno, "sizes must be non-negative")

    rows = np.empty(declared_nnz, dtype=np.int64)
    cols = np.empty(declared_nnz, dtype=np.int64)
    vals = np.empty(declared_nnz, dtype=np.float64)
    seen = 0
    for entry_lineno, line in enumerate(lines[lineno:], start=lineno + 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        if seen >= declared_nnz:
            raise MatrixMarketError(entry_lineno, f"more than the declared {declared_nnz} entries")
        tok = stripped.split()
        expected = 2 if pattern else 3
        if len(tok) != expected:
            raise MatrixMarketError(entry_lineno, f"expected {expected} fields, got {len(tok)}")
        try:
            r = int(tok[0])
            c = int(tok[1])
        except ValueError:
            raise MatrixMarketError(entry_lineno, f"non-integer index in {stripped!r}") from None
        if not (1 <= r <= nrows and 1 <= c <= ncols):
            raise MatrixMarketError(
                entry_lineno, f"entry ({r}, {c}) outside declared {nrows}x{ncols} bounds"
            )
        if pattern:
            v = 1.0
        else:
            try:
                v = float(tok[2])
            except ValueError:
                raise MatrixMarketError(entry_lineno, f"non-numeric value {tok[2]!r}") from None
        rows[seen] = r - 1
        cols[seen] = c - 1
        vals[seen] = v
        seen += 1
    if seen != declared_nnz:
        raise MatrixMarketError(len(lines), f"declared {declared_nnz} entries but found {seen}")

    if symmetry != "general":
        off_diag = rows != cols
        mirror_vals = vals[off_diag]
        if symmetry == "skew-symmetric":
            mirror_vals = -mirror_vals
        rows, cols, vals = (
            np.concatenate([rows, cols[off_diag]]),
            np.concatenate([cols, rows[off_diag]]),
            np.concatenate([vals, mirror_vals]),
        )
    return CsrMatrix.from_coo(nrows, ncols, rows, cols, vals, dtype=precision.dtype)


def write_matrix_market(m: CsrMatrix, target) -> None:
    """Write a canonical matrix as 'coordinate real general' with 1-based indices.

    Values are written with full round-trip precision, so parsing the output
    reproduces the matrix exactly at the same precision.
    """
    own = isinstance(target, (str, bytes)) or hasattr(target, "__fspath__")
    fh = open(target, "w", encoding="ascii") if own else target
    try:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{m.nrows} {m.ncols} {m.nnz}\n")
        row_of = np.repeat(np.arange(m.nrows), np.diff(m.row_ptr))
        for r, c, v in zip(row_of, m.col_idx, m.vals):
            fh.write(f"{r + 1} {c + 1} {float(v)!r}\n")
    finally:
        if own:
            fh.close()
