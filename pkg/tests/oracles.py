"""Brute-force reference implementations used only by the test suite.

Everything here is deliberately written as plain Python loops over the
mathematical definitions, independent of the library's vectorized paths.
"""

from __future__ import annotations

import math

OFFSETS = {0: (0, 1), 45: (-1, 1), 90: (-1, 0), 135: (-1, -1)}


def glcm_oracle(window, direction: int, levels: int) -> list[list[float]]:
    """Symmetrized, normalized co-occurrence matrix by pair enumeration."""
    dr, dc = OFFSETS[direction]
    h = len(window)
    w = len(window[0])
    counts = [[0] * levels for _ in range(levels)]
    total = 0
    for r in range(h):
        for c in range(w):
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w:
                a, b = window[r][c], window[rr][cc]
                counts[a][b] += 1
                counts[b][a] += 1  # transpose added pair by pair
                total += 2
    return [[counts[i][j] / total for j in range(levels)] for i in range(levels)]


def haralick_oracle(p) -> dict[str, float]:
    """The seven measures evaluated straight off their definitions."""
    levels = len(p)
    mu = sum(i * p[i][j] for i in range(levels) for j in range(levels))
    var = sum((i - mu) ** 2 * p[i][j] for i in range(levels) for j in range(levels))
    cross = sum(
        (i - mu) * (j - mu) * p[i][j] for i in range(levels) for j in range(levels)
    )
    entropy = 0.0
    for i in range(levels):
        for j in range(levels):
            if p[i][j] > 0:
                entropy -= p[i][j] * math.log(p[i][j])
    return {
        "second_moment": sum(p[i][j] ** 2 for i in range(levels) for j in range(levels)),
        "contrast": sum(
            (i - j) ** 2 * p[i][j] for i in range(levels) for j in range(levels)
        ),
        "correlation": cross / var if var > 0 else 0.0,
        "homogeneity": sum(
            p[i][j] / (1 + (i - j) ** 2) for i in range(levels) for j in range(levels)
        ),
        "entropy": entropy,
        "mean": mu,
        "variance": var,
    }


def confusion_oracle(pred, truth) -> dict[str, int]:
    """Confusion counts with slum (1) as the positive class."""
    tp = fp = fn = tn = 0
    for p, t in zip(pred, truth, strict=True):
        if p == 1 and t == 1:
            tp += 1
        elif p == 1 and t == 0:
            fp += 1
        elif p == 0 and t == 1:
            fn += 1
        else:
            tn += 1
    return {"tp": tp, "fp": fp, "fn": fn, "tn": tn}
