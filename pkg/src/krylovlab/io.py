"""File formats: Matrix Market ingestion, CSV emission, minimal SVG plots.

The Matrix Market parser is deliberately strict (exact banner, line-numbered
errors) because the experiment matrices come from external archives and a
silent misread would corrupt every downstream number.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse

__all__ = [
    "MatrixMarketError",
    "MatrixMarketHeader",
    "read_matrix_market",
    "write_matrix_market",
    "write_csv",
    "write_svg",
]


class MatrixMarketError(ValueError):
    """Malformed Matrix Market content; the message carries the line number."""


class MatrixMarketHeader:
    """Parsed banner: object/format/field/symmetry tokens."""

    def __init__(self, fmt, field, symmetry):
        self.object = "matrix"
        self.format = fmt
        self.field = field
        self.symmetry = symmetry


def _parse_banner(line):
    tokens = line.strip().split()
    if len(tokens) != 5 or tokens[0] != "%%MatrixMarket":
        raise MatrixMarketError(f"line 1: malformed banner {line.strip()!r}")
    _, obj, fmt, field, symmetry = (t.lower() for t in tokens)
    if obj != "matrix":
        raise MatrixMarketError(f"line 1: unsupported object {obj!r}")
    if fmt not in ("coordinate", "array"):
        raise MatrixMarketError(f"line 1: unsupported format {fmt!r}")
    if field in ("complex", "pattern"):
        raise MatrixMarketError(f"line 1: unsupported field {field!r}")
    if field not in ("real", "integer"):
        raise MatrixMarketError(f"line 1: unknown field {field!r}")
    if symmetry not in ("general", "symmetric", "skew-symmetric"):
        raise MatrixMarketError(f"line 1: unsupported symmetry {symmetry!r}")
    return MatrixMarketHeader(fmt, field, symmetry)


def read_matrix_market(path):
    """Read a real Matrix Market file.

    Coordinate format returns a CSR matrix (duplicate entries summed,
    symmetric/skew storage expanded to the full pattern); array format
    returns a dense ndarray.  Errors name the offending line.
    """
    with open(path, "r") as fh:
        lines = fh.readlines()
    if not lines:
        raise MatrixMarketError("line 1: empty file")
    header = _parse_banner(lines[0])

    # skip comments and blank lines up to the size line
    pos = 1
    while pos < len(lines) and (lines[pos].startswith("%") or not lines[pos].strip()):
        pos += 1
    if pos >= len(lines):
        raise MatrixMarketError(f"line {len(lines)}: missing size line")
    size_tokens = lines[pos].split()
    size_line = pos + 1  # 1-based for messages

    if header.format == "coordinate":
        if len(size_tokens) != 3:
            raise MatrixMarketError(f"line {size_line}: coordinate size line needs 3 fields")
        try:
            nrows, ncols, nnz = (int(t) for t in size_tokens)
        except ValueError:
            raise MatrixMarketError(f"line {size_line}: non-integer size entry") from None
        rows, cols, vals = [], [], []
        count = 0
        for off, raw in enumerate(lines[pos + 1:], start=size_line + 1):
            if not raw.strip() or raw.startswith("%"):
                continue
            parts = raw.split()
            if len(parts) != 3:
                raise MatrixMarketError(f"line {off}: expected 'i j value'")
            try:
                i, j = int(parts[0]), int(parts[1])
                v = float(parts[2])
            except ValueError:
                raise MatrixMarketError(f"line {off}: malformed entry {raw.strip()!r}") from None
            if not (1 <= i <= nrows and 1 <= j <= ncols):
                raise MatrixMarketError(f"line {off}: index ({i}, {j}) out of range")
            rows.append(i - 1)
            cols.append(j - 1)
            vals.append(v)
            if header.symmetry != "general" and i != j:
                rows.append(j - 1)
                cols.append(i - 1)
                vals.append(v if header.symmetry == "symmetric" else -v)
            count += 1
        if count != nnz:
            raise MatrixMarketError(
                f"line {len(lines)}: {count} entries read, size line promised {nnz}")
        mat = scipy.sparse.coo_matrix(
            (vals, (rows, cols)), shape=(nrows, ncols), dtype=np.float64)
        return mat.tocsr()  # duplicates are summed by the conversion

    # array format: column-major dense values
    if len(size_tokens) != 2:
        raise MatrixMarketError(f"line {size_line}: array size line needs 2 fields")
    try:
        nrows, ncols = (int(t) for t in size_tokens)
    except ValueError:
        raise MatrixMarketError(f"line {size_line}: non-integer size entry") from None
    vals = []
    for off, raw in enumerate(lines[pos + 1:], start=size_line + 1):
        if not raw.strip() or raw.startswith("%"):
            continue
        for tok in raw.split():
            try:
                vals.append(float(tok))
            except ValueError:
                raise MatrixMarketError(f"line {off}: malformed value {tok!r}") from None
    if header.symmetry == "general":
        if len(vals) != nrows * ncols:
            raise MatrixMarketError(
                f"line {len(lines)}: {len(vals)} values read, expected {nrows * ncols}")
        return np.asarray(vals, dtype=np.float64).reshape((ncols, nrows)).T.copy()
    # symmetric storage: lower triangle by columns
    if nrows != ncols:
        raise MatrixMarketError(f"line {size_line}: symmetric array must be square")
    need = nrows * (nrows + 1) // 2
    if len(vals) != need:
        raise MatrixMarketError(
            f"line {len(lines)}: {len(vals)} values read, expected {need}")
    A = np.zeros((nrows, ncols))
    it = iter(vals)
    sign = -1.0 if header.symmetry == "skew-symmetric" else 1.0
    for j in range(ncols):
        for i in range(j, nrows):
            v = next(it)
            A[i, j] = v
            if i != j:
                A[j, i] = sign * v
    return A


def _fmt(v):
    """Shortest decimal that round-trips the float exactly (repr semantics)."""
    return repr(float(v))


def write_matrix_market(A, path, comment=None):
    """Write a dense matrix in array format or a sparse one in coordinate
    format; values use shortest round-tripping decimals, so a write/read
    cycle is bit-exact."""
    out = ["%%MatrixMarket matrix {} real general".format(
        "coordinate" if scipy.sparse.issparse(A) else "array")]
    if comment:
        out.extend("% " + line for line in str(comment).splitlines())
    if scipy.sparse.issparse(A):
        coo = A.tocoo()
        out.append(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            out.append(f"{i + 1} {j + 1} {_fmt(v)}")
    else:
        M = np.asarray(A, dtype=np.float64)
        if M.ndim != 2:
            raise ValueError("expected a 2-d matrix")
        out.append(f"{M.shape[0]} {M.shape[1]}")
        for j in range(M.shape[1]):
            for i in range(M.shape[0]):
                out.append(_fmt(M[i, j]))
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# experiment artifacts


def write_csv(result, path):
    """One row per data point: series,x,y with LF endings and lossless
    decimals."""
    lines = ["series,x,y"]
    for s in result.series:
        for xv, yv in zip(s.x, s.y):
            lines.append(f"{s.name},{_fmt(xv)},{_fmt(yv)}")
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2"]

_W, _H = 640, 440
_ML, _MR, _MT, _MB = 70, 20, 30, 50  # margins


def _ticks(lo, hi, log):
    if log:
        lo_e, hi_e = int(np.floor(lo)), int(np.ceil(hi))
        step = max(1, (hi_e - lo_e) // 6)
        return [float(e) for e in range(lo_e, hi_e + 1, step)]
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / 5
    mag = 10.0 ** np.floor(np.log10(raw))
    step = mag * min(s for s in (1, 2, 5, 10) if raw / mag <= s)
    first = np.ceil(lo / step) * step
    return list(np.arange(first, hi + 0.5 * step, step))


def _tick_label(v, log):
    if log:
        return f"1e{int(round(v))}" if abs(v - round(v)) < 1e-9 else f"{10.0 ** v:.2g}"
    return f"{v:g}"


def write_svg(result, directory):
    """Render each figure group of the result as one SVG file in the
    directory; returns the written paths."""
    import os

    groups = {}
    for s in result.series:
        groups.setdefault(getattr(s, "figure", "fig"), []).append(s)
    written = []
    for fig, series in groups.items():
        logy = any(getattr(s, "yscale", "linear") == "log" for s in series)
        pts = []
        for s in series:
            x = np.asarray(s.x, dtype=float)
            y = np.asarray(s.y, dtype=float)
            if logy:
                keep = y > 0
                x, y = x[keep], np.log10(y[keep])
            pts.append((x, y))
        allx = np.concatenate([p[0] for p in pts if p[0].size]) if pts else np.array([0.0])
        ally = np.concatenate([p[1] for p in pts if p[1].size]) if pts else np.array([0.0])
        if allx.size == 0 or ally.size == 0:
            continue
        x0, x1 = float(np.min(allx)), float(np.max(allx))
        y0, y1 = float(np.min(ally)), float(np.max(ally))
        if x1 == x0:
            x1 = x0 + 1.0
        if y1 == y0:
            y1 = y0 + 1.0

        def sx(v):
            return _ML + (v - x0) / (x1 - x0) * (_W - _ML - _MR)

        def sy(v):
            return _H - _MB - (v - y0) / (y1 - y0) * (_H - _MT - _MB)

        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
            f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
            f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
            f'height="{_H - _MT - _MB}" fill="none" stroke="black"/>',
            f'<text x="{_W / 2:.0f}" y="18" text-anchor="middle">{result.name}: {fig}</text>',
        ]
        for tv in _ticks(x0, x1, False):
            if x0 <= tv <= x1:
                parts.append(f'<line x1="{sx(tv):.1f}" y1="{_H - _MB}" x2="{sx(tv):.1f}" '
                             f'y2="{_H - _MB + 5}" stroke="black"/>')
                parts.append(f'<text x="{sx(tv):.1f}" y="{_H - _MB + 18}" '
                             f'text-anchor="middle">{_tick_label(tv, False)}</text>')
        for tv in _ticks(y0, y1, logy):
            if y0 - 1e-9 <= tv <= y1 + 1e-9:
                parts.append(f'<line x1="{_ML - 5}" y1="{sy(tv):.1f}" x2="{_ML}" '
                             f'y2="{sy(tv):.1f}" stroke="black"/>')
                parts.append(f'<text x="{_ML - 8}" y="{sy(tv) + 4:.1f}" '
                             f'text-anchor="end">{_tick_label(tv, logy)}</text>')
        xlabel = getattr(series[0], "xlabel", "")
        ylabel = getattr(series[0], "ylabel", "")
        if xlabel:
            parts.append(f'<text x="{_W / 2:.0f}" y="{_H - 12}" '
                         f'text-anchor="middle">{xlabel}</text>')
        if ylabel:
            parts.append(f'<text x="16" y="{_H / 2:.0f}" text-anchor="middle" '
                         f'transform="rotate(-90 16 {_H / 2:.0f})">{ylabel}</text>')
        for idx, (s, (x, y)) in enumerate(zip(series, pts)):
            color = _PALETTE[idx % len(_PALETTE)]
            if getattr(s, "kind", "line") == "scatter":
                for xv, yv in zip(x, y):
                    parts.append(f'<circle cx="{sx(xv):.1f}" cy="{sy(yv):.1f}" r="2.5" '
                                 f'fill="{color}"/>')
            elif x.size:
                coords = " ".join(f"{sx(xv):.1f},{sy(yv):.1f}" for xv, yv in zip(x, y))
                parts.append(f'<polyline points="{coords}" fill="none" '
                             f'stroke="{color}" stroke-width="1.4"/>')
            ly = _MT + 16 + 15 * idx
            parts.append(f'<line x1="{_W - _MR - 150}" y1="{ly - 4}" '
                         f'x2="{_W - _MR - 130}" y2="{ly - 4}" stroke="{color}" '
                         f'stroke-width="2"/>')
            parts.append(f'<text x="{_W - _MR - 125}" y="{ly}">{s.name}</text>')
        parts.append("</svg>")
        fname = os.path.join(directory, f"{result.name}-{fig}.svg")
        with open(fname, "w") as fh:
            fh.write("\n".join(parts) + "\n")
        written.append(fname)
    return written
