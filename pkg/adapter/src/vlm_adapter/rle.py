"""COCO-style RLE encoding for the interchange masks.

Column-major runs starting with a zeros run; the string form packs counts 5
bits per character offset by 48 with delta coding from the third count on.
This mirrors the consumer's contract and is re-implemented here on purpose:
the adapter couples to the core only through the on-disk format.
"""

from __future__ import annotations

import numpy as np


def encode_counts(grid: np.ndarray) -> np.ndarray:
    g = np.asarray(grid).astype(bool)
    flat = g.flatten(order="F")
    if flat.size == 0:
        raise ValueError("empty mask grid")
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], changes, [flat.size]])
    runs = np.diff(bounds)
    if flat[0]:
        runs = np.concatenate([[0], runs])
    return runs.astype(np.int64)


def counts_to_string(counts) -> str:
    cnts = [int(c) for c in counts]
    out: list[str] = []
    for i, c in enumerate(cnts):
        x = c - cnts[i - 2] if i > 2 else c
        more = True
        while more:
            ch = x & 0x1F
            x >>= 5
            more = (x != -1) if (ch & 0x10) else (x != 0)
            if more:
                ch |= 0x20
            out.append(chr(ch + 48))
    return "".join(out)


def mask_to_rle(grid: np.ndarray) -> dict:
    h, w = grid.shape
    return {"size": [int(h), int(w)], "counts": counts_to_string(encode_counts(grid))}
