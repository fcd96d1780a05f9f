"""汎用数値関数。"""

from __future__ import annotations

from collections.abc import Iterable
from typing import NamedTuple

import numpy as np
import numpy.typing as npt

ComplexArray = npt.NDArray[np.complex128]
FloatArray = npt.NDArray[np.float64]


class LinearFit(NamedTuple):
    """1次の最小二乗フィット結果。"""

    slope: float
    intercept: float
    r_squared: float  # 決定係数 [0.0, 1.0]


def wrap_momentum(k: npt.ArrayLike) -> npt.NDArray[np.generic]:
    """運動量の実部を (-π, π] に折り返す。虚部はそのまま残す。"""
    k = np.asarray(k)
    re = np.pi - np.mod(np.pi - np.real(k), 2 * np.pi)
    if np.iscomplexobj(k):
        return re + 1j * np.imag(k)
    return re


def kahan_sum(values: Iterable[complex]) -> complex:
    """複素数列を補償付き加算（Neumaier 変種）で与えられた順に総和する。

    実部と虚部をそれぞれ独立に補償する。加算順序は入力順で固定なので、
    同じ入力からはプラットフォームに依らず同じ結果が得られる。

    Args:
        values: 加算する複素数列。

    Returns:
        総和。空なら 0。
    """
    re_sum = re_comp = 0.0
    im_sum = im_comp = 0.0
    for value in values:
        re, im = value.real, value.imag
        t = re_sum + re
        if abs(re_sum) >= abs(re):
            re_comp += (re_sum - t) + re
        else:
            re_comp += (re - t) + re_sum
        re_sum = t
        t = im_sum + im
        if abs(im_sum) >= abs(im):
            im_comp += (im_sum - t) + im
        else:
            im_comp += (im - t) + im_sum
        im_sum = t
    return complex(re_sum + re_comp, im_sum + im_comp)


def profile_correlation(a: npt.ArrayLike, b: npt.ArrayLike) -> float:
    """2つの複素ベクトルの相関 |a^H b| / (|a| |b|) を計算する。

    Returns:
        相関 [0.0, 1.0]。いずれかがゼロベクトルの場合は 0.0。
    """
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        return 0.0
    return float(abs(np.vdot(a, b)) / (norm_a * norm_b))


def align(reference: npt.ArrayLike, target: npt.ArrayLike) -> tuple[complex, float]:
    """reference の複素スカラー倍で target を最小二乗近似する。

    alpha = argmin |alpha * reference - target| は閉じた形で求まる。

    Args:
        reference: 基準ベクトル（例: 厳密対角化の固有ベクトル）。
        target: 比較対象ベクトル。reference と同じ形状。

    Returns:
        (alpha, 相対 L2 誤差 |alpha * reference - target| / |target|)。

    Raises:
        ValueError: 形状が一致しない場合、または reference がゼロの場合。
    """
    reference = np.asarray(reference, dtype=np.complex128)
    target = np.asarray(target, dtype=np.complex128)
    if reference.shape != target.shape:
        raise ValueError(f"形状が一致しません: {reference.shape} != {target.shape}")
    weight = np.vdot(reference, reference)
    if weight == 0:
        raise ValueError("基準ベクトルがゼロです")
    alpha = complex(np.vdot(reference, target) / weight)
    target_norm = np.linalg.norm(target)
    if target_norm == 0:
        return alpha, 0.0
    error = float(np.linalg.norm(alpha * reference - target) / target_norm)
    return alpha, error


def linear_fit(x: npt.ArrayLike, y: npt.ArrayLike) -> LinearFit:
    """y = slope * x + intercept を最小二乗でフィットする。"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        raise ValueError("フィットには 2 点以上が必要です")
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if total == 0 else 1.0 - float(np.sum(residual**2)) / total
    return LinearFit(slope=float(slope), intercept=float(intercept), r_squared=r_squared)


def loglog_fit(x: npt.ArrayLike, y: npt.ArrayLike) -> LinearFit:
    """log(y) = slope * log(x) + intercept をフィットする（収束次数の推定）。"""
    log_x = np.log(np.asarray(x, dtype=np.float64))
    log_y = np.log(np.asarray(y, dtype=np.float64))
    return linear_fit(log_x, log_y)
