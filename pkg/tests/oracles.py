"""Independent reference implementations used by several test modules."""

from __future__ import annotations

import itertools

import numpy as np

BIG = 1 << 40


def transition(target: int, prev: int, prev_lo: int, prev_hi: int, phi1: int, phi2: int) -> int:
    """Smoothness cost of moving from plane ``prev`` to a pixel whose zero-cost target is ``target``."""
    if not prev_lo <= target < prev_hi:
        return phi2
    gap = abs(target - prev)
    return 0 if gap == 0 else phi1 if gap == 1 else phi2


def chain_pixels(height: int, width: int, dx: int, dy: int) -> list[list[tuple[int, int]]]:
    """All maximal pixel chains followed by a path travelling in direction (dx, dy)."""
    chains = []
    for y in range(height):
        for x in range(width):
            py, px = y - dy, x - dx
            if 0 <= py < height and 0 <= px < width:
                continue  # not a chain start
            chain = []
            cy, cx = y, x
            while 0 <= cy < height and 0 <= cx < width:
                chain.append((cy, cx))
                cy, cx = cy + dy, cx + dx
            chains.append(chain)
    return chains


def path_dp(dense: np.ndarray, offset: np.ndarray, count: np.ndarray, direction, phi1: int, phi2: int,
            shifts: np.ndarray | None = None) -> np.ndarray:
    """Min-normalised path costs computed chain by chain with an explicit transition table.

    ``dense`` holds costs over the full plane list (values outside a pixel's
    range are ignored).  Returns ``(H, W, P)`` with ``BIG`` outside ranges.
    """
    h, w, p = dense.shape
    out = np.full((h, w, p), BIG, dtype=np.int64)
    labels = np.arange(p)
    for chain in chain_pixels(h, w, *direction):
        prev = None
        for y, x in chain:
            lo, hi = int(offset[y, x]), int(offset[y, x] + count[y, x])
            cur = np.full(p, BIG, dtype=np.int64)
            if hi > lo:
                s = dense[y, x, lo:hi].astype(np.int64)
                if prev is None or prev[2] == prev[1]:
                    cur[lo:hi] = s
                else:
                    lp, plo, phi = prev
                    shift = 0 if shifts is None else int(shifts[y, x])
                    targets = labels[lo:hi] + shift
                    table = np.array(
                        [[transition(t, j, plo, phi, phi1, phi2) for j in range(plo, phi)] for t in targets],
                        dtype=np.int64,
                    )
                    best = (lp[plo:phi][None, :] + table).min(axis=1)
                    cur[lo:hi] = s + best - lp[plo:phi].min()
            prev = (cur, lo, hi)
            out[y, x] = cur
    return out


def enumerate_chain(costs: np.ndarray, phi1: int, phi2: int) -> np.ndarray:
    """Unnormalised path costs by exhaustive enumeration of every labelling of a 1-D chain.

    ``result[k, i]`` is the minimum over all labellings of pixels ``0..k``
    ending in label ``i`` of the data costs plus the transition costs.
    """
    n, p = costs.shape
    result = np.full((n, p), BIG, dtype=np.int64)
    for labels in itertools.product(range(p), repeat=n):
        energy = 0
        for k, label in enumerate(labels):
            energy += int(costs[k, label])
            if k:
                gap = abs(label - labels[k - 1])
                energy += 0 if gap == 0 else phi1 if gap == 1 else phi2
            if energy < result[k, label]:
                result[k, label] = energy
    return result


def parabola_vertex(xs, ys) -> float:
    """Vertex abscissa by solving the 3x3 Vandermonde system."""
    a, b, _ = np.linalg.solve(np.vander(np.asarray(xs, float), 3), np.asarray(ys, float))
    return -b / (2 * a)


def _components(mask: np.ndarray) -> list[list[tuple[int, int]]]:
    """4-connected components of the true pixels, by explicit flood fill."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    comps = []
    for y in range(h):
        for x in range(w):
            if not mask[y, x] or seen[y, x]:
                continue
            stack, comp = [(y, x)], []
            seen[y, x] = True
            while stack:
                cy, cx = stack.pop()
                comp.append((cy, cx))
                for ny, nx in ((cy - 1, cx), (cy + 1, cx), (cy, cx - 1), (cy, cx + 1)):
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        stack.append((ny, nx))
            comps.append(comp)
    return comps


def texture_mask_oracle(image: np.ndarray) -> np.ndarray:
    """Straight replay of the texture-mask recipe with hand-written filters."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    taps = np.exp(-(np.arange(-3, 4) ** 2) / (2 * 1.4**2))
    kernel = np.outer(taps, taps) / np.outer(taps, taps).sum()
    padded = np.pad(img, 3, mode="reflect")
    smooth = np.zeros_like(img)
    for dy in range(7):
        for dx in range(7):
            smooth += kernel[dy, dx] * padded[dy : dy + h, dx : dx + w]
    mask = np.abs(img - smooth) > 0.5
    for comp in _components(mask):
        if len(comp) < 7:
            for y, x in comp:
                mask[y, x] = False
    grown = mask.copy()
    for y in range(h):
        for x in range(w):
            grown[y, x] = mask[max(y - 1, 0) : y + 2, max(x - 1, 0) : x + 2].any()
    for comp in _components(~grown):
        if len(comp) < 21:
            for y, x in comp:
                grown[y, x] = True
    return grown
