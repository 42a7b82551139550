"""Full-reference image quality metrics: PSNR, SSIM, GMSD.

Inputs are planar (C,H,W) float arrays in [0,1] (plain 2-d arrays are treated
as single-channel). Multi-channel images are scored per channel and the
channel values averaged; no border cropping beyond what each metric's window
construction implies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["MetricReport", "psnr", "ssim", "gmsd"]

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_GMSD_C = 170.0 / (255.0 * 255.0)


@dataclass(frozen=True)
class MetricReport:
    """One evaluation row: psnr may be +inf when the images are identical."""

    psnr: float
    ssim: float
    gmsd: float


def _as_planar(a: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.ndim != 3:
        raise ValueError(f"{what}: need (C,H,W) or (H,W), got shape {arr.shape}")
    return arr


def _paired(a, b, name: str) -> tuple[np.ndarray, np.ndarray]:
    av = _as_planar(a, name)
    bv = _as_planar(b, name)
    if av.shape != bv.shape:
        raise ValueError(f"{name}: shapes differ, {av.shape} vs {bv.shape}")
    return av, bv


def psnr(a, b, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE) per channel, averaged; +inf when MSE is zero."""
    av, bv = _paired(a, b, "psnr")
    if not peak > 0:
        raise ValueError(f"psnr: peak must be > 0, got {peak}")
    vals = []
    for c in range(av.shape[0]):
        mse = float(np.mean((av[c] - bv[c]) ** 2))
        if mse == 0.0:
            vals.append(np.inf)
        else:
            vals.append(10.0 * np.log10(peak * peak / mse))
    return float(np.mean(vals))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def _windowed(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    """Weighted local sums over fully-interior sliding windows."""
    view = np.lib.stride_tricks.sliding_window_view(img, win.shape)
    return np.tensordot(view, win, axes=([2, 3], [0, 1]))


def _ssim_channel(a: np.ndarray, b: np.ndarray, peak: float) -> float:
    win = _gaussian_window(_SSIM_WINDOW, _SSIM_SIGMA)
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mu_a = _windowed(a, win)
    mu_b = _windowed(b, win)
    var_a = _windowed(a * a, win) - mu_a * mu_a
    var_b = _windowed(b * b, win) - mu_b * mu_b
    cov = _windowed(a * b, win) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(a, b) -> float:
    """Mean structural similarity over 11x11 Gaussian (sigma 1.5) windows."""
    av, bv = _paired(a, b, "ssim")
    if min(av.shape[1], av.shape[2]) < _SSIM_WINDOW:
        raise ValueError(
            f"ssim: image {av.shape[1]}x{av.shape[2]} is smaller than the "
            f"{_SSIM_WINDOW}x{_SSIM_WINDOW} window"
        )
    return float(np.mean([_ssim_channel(av[c], bv[c], 1.0) for c in range(av.shape[0])]))


def _avg_pool2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    img = img[: h - h % 2, : w - w % 2]
    return img.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def _conv_same_symmetric(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    ph, pw = k.shape[0] // 2, k.shape[1] // 2
    padded = np.pad(img, ((ph, ph), (pw, pw)), mode="symmetric")
    view = np.lib.stride_tricks.sliding_window_view(padded, k.shape)
    return np.tensordot(view, k, axes=([2, 3], [0, 1]))


def _gmsd_channel(a: np.ndarray, b: np.ndarray) -> float:
    a = _avg_pool2(a)
    b = _avg_pool2(b)
    hx = np.array([[1.0, 0.0, -1.0]] * 3) / 3.0
    hy = hx.T
    m_a = np.sqrt(_conv_same_symmetric(a, hx) ** 2 + _conv_same_symmetric(a, hy) ** 2)
    m_b = np.sqrt(_conv_same_symmetric(b, hx) ** 2 + _conv_same_symmetric(b, hy) ** 2)
    sim = (2.0 * m_a * m_b + _GMSD_C) / (m_a * m_a + m_b * m_b + _GMSD_C)
    return float(np.std(sim))


def gmsd(a, b) -> float:
    """Standard deviation of the Prewitt gradient-magnitude similarity map.

    Both images are 2x average-pooled first; the similarity constant is the
    conventional 170 rescaled from the 255 range to [0,1] inputs.
    """
    av, bv = _paired(a, b, "gmsd")
    if min(av.shape[1], av.shape[2]) < 4:
        raise ValueError(
            f"gmsd: image {av.shape[1]}x{av.shape[2]} is smaller than 4x4"
        )
    return float(np.mean([_gmsd_channel(av[c], bv[c]) for c in range(av.shape[0])]))
