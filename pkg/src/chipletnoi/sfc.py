"""Space-filling curve orderings of rectangular grids.

Used to lay out chiplet chains so that consecutive pipeline stages land
on physically adjacent grid cells. Cells are (row, col) tuples.
"""

from __future__ import annotations

SFC_KINDS = ("hilbert", "morton")


def _hilbert_cell(side: int, index: int) -> tuple[int, int]:
    """Cell of `index` on the Hilbert curve over a side x side grid.

    side must be a power of two. The base 2x2 orientation visits
    (0,0), (1,0), (1,1), (0,1).
    """
    x = y = 0
    t = index
    s = 1
    while s < side:
        rx = 1 & (t // 2)
        ry = 1 & (t ^ rx)
        if ry == 0:
            if rx == 1:
                x = s - 1 - x
                y = s - 1 - y
            x, y = y, x
        x += s * rx
        y += s * ry
        t //= 4
        s *= 2
    return (y, x)


def hilbert_order(rows: int, cols: int) -> list[tuple[int, int]]:
    """Hilbert-style ordering of an arbitrary rows x cols region.

    Power-of-two squares use the classic recursive curve (consecutive
    cells are always grid neighbors). Other shapes are covered by
    row-major tiles of the largest power-of-two square that fits,
    recursing into the leftover strips.
    """
    if rows < 1 or cols < 1:
        raise ValueError("region must be at least 1x1")
    side = 1
    while side * 2 <= min(rows, cols):
        side *= 2
    if rows == cols == side:
        return [_hilbert_cell(side, i) for i in range(side * side)]
    out: list[tuple[int, int]] = []
    for br in range(0, rows, side):
        for bc in range(0, cols, side):
            sub_r = min(side, rows - br)
            sub_c = min(side, cols - bc)
            for (r, c) in hilbert_order(sub_r, sub_c):
                out.append((br + r, bc + c))
    return out


def morton_order(rows: int, cols: int) -> list[tuple[int, int]]:
    """Z-curve ordering: cells sorted by interleaved coordinate bits."""
    if rows < 1 or cols < 1:
        raise ValueError("region must be at least 1x1")

    def code(cell):
        r, c = cell
        z = 0
        for bit in range(max(rows, cols).bit_length()):
            z |= ((c >> bit) & 1) << (2 * bit)
            z |= ((r >> bit) & 1) << (2 * bit + 1)
        return z

    cells = [(r, c) for r in range(rows) for c in range(cols)]
    cells.sort(key=code)
    return cells


def sfc_order(rows: int, cols: int, kind: str) -> list[tuple[int, int]]:
    """Ordering of all rows x cols cells by the named curve family."""
    if kind == "hilbert":
        return hilbert_order(rows, cols)
    if kind == "morton":
        return morton_order(rows, cols)
    raise ValueError(f"unknown curve kind {kind!r}")
