"""Independent reference implementations used to derive expected test values.

Everything here is written as straight-line numpy with explicit loops, on
purpose: these are oracles, so they must not share code paths with the
package under test.
"""

from __future__ import annotations

import itertools

import numpy as np


def hv_inclusion_exclusion(points: np.ndarray, ref: np.ndarray) -> float:
    """Exact hypervolume (minimize) by inclusion-exclusion over all subsets.

    vol(union of boxes) = sum over nonempty subsets T of (-1)^(|T|+1) times
    the volume of the intersection box, whose lower corner is the
    componentwise max of T. Exponential in the point count; fine for <= 10.
    """
    pts = np.asarray(points, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    total = 0.0
    k = pts.shape[0]
    for size in range(1, k + 1):
        sign = 1.0 if size % 2 == 1 else -1.0
        for combo in itertools.combinations(range(k), size):
            corner = pts[list(combo)].max(axis=0)
            side = ref - corner
            if np.all(side >= 0.0):
                total += sign * float(np.prod(side))
    return total


def pareto_brute(rows: list) -> list:
    """Indices of nondominated rows (minimize) by literal pairwise scans."""
    keep = []
    for i, a in enumerate(rows):
        dominated = False
        for j, b in enumerate(rows):
            if i == j:
                continue
            if all(bx <= ax for ax, bx in zip(a, b)) and any(
                bx < ax for ax, bx in zip(a, b)
            ):
                dominated = True
                break
        if not dominated:
            keep.append(i)
    return keep


def conv2d_naive(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Quadruple-loop stride-1 same-zero-padding correlation."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    out = np.zeros((n, o, h, wd))
    for im in range(n):
        for oc in range(o):
            for y in range(h):
                for xx in range(wd):
                    acc = 0.0
                    for ic in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                yy = y + i - kh // 2
                                xj = xx + j - kw // 2
                                if 0 <= yy < h and 0 <= xj < wd:
                                    acc += w[oc, ic, i, j] * x[im, ic, yy, xj]
                    out[im, oc, y, xx] = acc
    return out


def feature_stack_reference(
    img: np.ndarray, seed, tap: str = "post", widths=(8, 16, 16)
) -> np.ndarray:
    """Straight-line recomputation of the frozen random conv stack.

    Draws the same weight sequence (unit normal over (c_out, c_in, 3, 3),
    scaled by 1/sqrt(fan-in)) and runs conv -> leaky_relu(0.2) with the final
    activation included only for tap='post'.
    """
    rng = np.random.default_rng(seed)
    h = np.asarray(img, dtype=np.float64)
    c_in = h.shape[1]
    weights = []
    for c_out in widths:
        weights.append(
            rng.standard_normal((c_out, c_in, 3, 3)) / np.sqrt(c_in * 9)
        )
        c_in = c_out
    for i, w in enumerate(weights):
        h = conv2d_naive(h, w)
        if i < len(weights) - 1 or tap == "post":
            h = np.where(h > 0.0, h, 0.2 * h)
    return h


def gmsd_reference(a: np.ndarray, b: np.ndarray) -> float:
    """Straight-line GMSD for one channel: 2x mean pool, Prewitt/3 gradients
    with reflect-edge indexing, similarity map, population standard deviation."""

    def pool(img):
        hh, ww = img.shape
        img = img[: hh - hh % 2, : ww - ww % 2]
        out = np.zeros((img.shape[0] // 2, img.shape[1] // 2))
        for y in range(out.shape[0]):
            for x in range(out.shape[1]):
                out[y, x] = img[2 * y : 2 * y + 2, 2 * x : 2 * x + 2].mean()
        return out

    def reflect(i, n):
        # symmetric padding: ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
        if i < 0:
            return -i - 1
        if i >= n:
            return 2 * n - 1 - i
        return i

    def grad_mag(img):
        hx = np.array([[1.0, 0.0, -1.0]] * 3) / 3.0
        hy = hx.T
        hh, ww = img.shape
        gx = np.zeros_like(img)
        gy = np.zeros_like(img)
        for y in range(hh):
            for x in range(ww):
                ax = ay = 0.0
                for i in range(3):
                    for j in range(3):
                        v = img[reflect(y + i - 1, hh), reflect(x + j - 1, ww)]
                        ax += hx[i, j] * v
                        ay += hy[i, j] * v
                gx[y, x] = ax
                gy[y, x] = ay
        return np.sqrt(gx * gx + gy * gy)

    c = 170.0 / 255.0**2
    ma = grad_mag(pool(np.asarray(a, dtype=np.float64)))
    mb = grad_mag(pool(np.asarray(b, dtype=np.float64)))
    sim = (2.0 * ma * mb + c) / (ma * ma + mb * mb + c)
    return float(np.sqrt(np.mean((sim - sim.mean()) ** 2)))


def adam_reference(param, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Textbook Adam trajectory for a single parameter given a grad sequence."""
    p = np.array(param, dtype=np.float64)
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        p = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return p
